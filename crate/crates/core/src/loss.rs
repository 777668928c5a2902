//! Inverse-frequency class weights and class-weighted cross-entropy.

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassHistogram, EmotionLabel, NUM_CLASSES};
use crate::error::{Error, Result};

/// Floor applied to probabilities before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w: [f64; NUM_CLASSES],
    pub source_histogram: ClassHistogram,
}

impl ClassWeights {
    pub fn uniform(source_histogram: ClassHistogram) -> Self {
        Self {
            w: [1.0; NUM_CLASSES],
            source_histogram,
        }
    }

    pub fn get(&self, label: usize) -> f64 {
        self.w[label]
    }

    /// `sum_c (n_c / N) * w_c`; equals 1 for inverse-frequency weights.
    pub fn frequency_weighted_mean(&self) -> f64 {
        let n = self.source_histogram.total as f64;
        self.source_histogram
            .counts
            .iter()
            .zip(&self.w)
            .map(|(&c, &w)| c as f64 / n * w)
            .sum()
    }
}

/// `w_c = N / (K * n_c)` over any number of classes.
pub fn inverse_frequency_weights(counts: &[usize]) -> Result<Vec<f64>> {
    let k = counts.len() as f64;
    let n: usize = counts.iter().sum();
    counts
        .iter()
        .enumerate()
        .map(|(c, &nc)| {
            if nc == 0 {
                let name = EmotionLabel::from_index(c)
                    .map(|l| l.name().to_string())
                    .unwrap_or_else(|_| format!("#{c}"));
                Err(Error::ZeroCountClass(name))
            } else {
                Ok(n as f64 / (k * nc as f64))
            }
        })
        .collect()
}

pub fn compute_class_weights(hist: &ClassHistogram) -> Result<ClassWeights> {
    let v = inverse_frequency_weights(&hist.counts)?;
    let mut w = [0.0; NUM_CLASSES];
    w.copy_from_slice(&v);
    Ok(ClassWeights {
        w,
        source_histogram: *hist,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// `sum_i l_i / sum_i w[y_i]`.
    #[default]
    WeightedMean,
    Sum,
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CLASSES];
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

fn log_softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    let mut out = [0.0; NUM_CLASSES];
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = z - lse;
    }
    out
}

fn check_targets(rows: usize, targets: &[usize]) -> Result<()> {
    if rows != targets.len() {
        return Err(Error::LengthMismatch {
            left: rows,
            right: targets.len(),
        });
    }
    if rows == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= NUM_CLASSES) {
        return Err(Error::InvalidLabel(bad));
    }
    Ok(())
}

fn reduce(total: f64, weight_sum: f64, reduction: Reduction) -> f64 {
    match reduction {
        Reduction::WeightedMean => total / weight_sum,
        Reduction::Sum => total,
    }
}

/// Class-weighted cross-entropy over row-stochastic predictions.
pub fn weighted_cross_entropy(
    probs: &[[f64; NUM_CLASSES]],
    targets: &[usize],
    weights: &ClassWeights,
    reduction: Reduction,
) -> Result<f64> {
    check_targets(probs.len(), targets)?;
    let mut total = 0.0;
    let mut weight_sum = 0.0;
    for (i, (row, &y)) in probs.iter().zip(targets).enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput(format!(
                "row {i} is not a probability distribution (sum {s})"
            )));
        }
        let w = weights.w[y];
        total += -w * row[y].max(LOG_CLAMP).ln();
        weight_sum += w;
    }
    Ok(reduce(total, weight_sum, reduction))
}

/// Loss and its gradient with respect to the logits:
/// `dL/dz_i = w[y_i] * (softmax(z_i) - onehot(y_i)) / scale`, where `scale` is
/// the applied weight sum under `WeightedMean` and 1 under `Sum`.
pub fn weighted_cross_entropy_with_logits(
    logits: &[[f64; NUM_CLASSES]],
    targets: &[usize],
    weights: &ClassWeights,
    reduction: Reduction,
) -> Result<(f64, Vec<[f64; NUM_CLASSES]>)> {
    check_targets(logits.len(), targets)?;
    let weight_sum: f64 = targets.iter().map(|&y| weights.w[y]).sum();
    let scale = match reduction {
        Reduction::WeightedMean => weight_sum,
        Reduction::Sum => 1.0,
    };
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (z, &y) in logits.iter().zip(targets) {
        let w = weights.w[y];
        let logp = log_softmax(z);
        total += -w * logp[y];
        let mut g = [0.0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            let onehot = if c == y { 1.0 } else { 0.0 };
            g[c] = w * (logp[c].exp() - onehot) / scale;
        }
        grads.push(g);
    }
    Ok((reduce(total, weight_sum, reduction), grads))
}
