//! Confusion matrix and the per-class / aggregate classification report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{EmotionLabel, NUM_CLASSES};
use crate::error::{Error, Result};

/// `m[i][j]` counts samples of true class `i` predicted as class `j`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub m: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.m.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.m[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.m[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.m.iter().map(|r| r[c]).sum()
    }

    /// Relabels classes: class `c` becomes `perm[c]`.
    pub fn permuted(&self, perm: &[usize; NUM_CLASSES]) -> Self {
        let mut out = Self::default();
        for i in 0..NUM_CLASSES {
            for j in 0..NUM_CLASSES {
                out.m[perm[i]][perm[j]] = self.m[i][j];
            }
        }
        out
    }

    /// Header row of class names, then one row per true class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for l in EmotionLabel::ALL {
            out.push(',');
            out.push_str(l.name());
        }
        out.push('\n');
        for (i, row) in self.m.iter().enumerate() {
            out.push_str(EmotionLabel::ALL[i].name());
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_from_predictions(
    true_labels: &[usize],
    predicted_labels: &[usize],
) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted_labels.len() {
        return Err(Error::LengthMismatch {
            left: true_labels.len(),
            right: predicted_labels.len(),
        });
    }
    if true_labels.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in true_labels.iter().zip(predicted_labels) {
        if t >= NUM_CLASSES {
            return Err(Error::InvalidLabel(t));
        }
        if p >= NUM_CLASSES {
            return Err(Error::InvalidLabel(p));
        }
        cm.m[t][p] += 1;
    }
    Ok(cm)
}

pub fn accuracy_from_confusion(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn macro_average(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: EmotionLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// Partition the report was computed on, when known.
    pub partition: Option<String>,
    /// Native index order.
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: AverageMetrics,
    pub weighted_avg: AverageMetrics,
    pub total: u64,
    /// Zero-denominator metrics that were reported as 0.
    pub warnings: Vec<String>,
    pub confusion: ConfusionMatrix,
}

pub fn report_from_confusion(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut warnings = Vec::new();
    let per_class: Vec<ClassMetrics> = EmotionLabel::ALL
        .iter()
        .map(|&label| {
            let c = label.index();
            let tp = cm.m[c][c] as f64;
            let predicted = cm.col_sum(c);
            let support = cm.row_sum(c);
            let precision = if predicted == 0 {
                warnings.push(format!("precision of {label} is undefined (no predictions); set to 0"));
                0.0
            } else {
                tp / predicted as f64
            };
            let recall = if support == 0 {
                warnings.push(format!("recall of {label} is undefined (no true samples); set to 0"));
                0.0
            } else {
                tp / support as f64
            };
            ClassMetrics {
                label,
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
            }
        })
        .collect();

    let n = total as f64;
    let collect = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).collect::<Vec<_>>();
    let macro_avg = AverageMetrics {
        precision: macro_average(&collect(|m| m.precision)),
        recall: macro_average(&collect(|m| m.recall)),
        f1: macro_average(&collect(|m| m.f1)),
    };
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        per_class
            .iter()
            .map(|m| m.support as f64 * f(m))
            .sum::<f64>()
            / n
    };
    let weighted_avg = AverageMetrics {
        precision: weighted(|m| m.precision),
        // support_c * recall_c == tp_c, so the weighted recall is the trace
        // over the total, summed exactly in integers.
        recall: cm.trace() as f64 / n,
        f1: weighted(|m| m.f1),
    };

    Ok(ClassificationReport {
        partition: None,
        per_class,
        accuracy: accuracy_from_confusion(cm)?,
        macro_avg,
        weighted_avg,
        total,
        warnings,
        confusion: *cm,
    })
}

impl ClassificationReport {
    pub fn with_partition(mut self, partition: impl Into<String>) -> Self {
        self.partition = Some(partition.into());
        self
    }

    pub fn class(&self, label: EmotionLabel) -> &ClassMetrics {
        &self.per_class[label.index()]
    }

    /// Plain-text table with three decimals, classes in alphabetical order.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let partition = self.partition.as_deref().unwrap_or("unspecified");
        let _ = writeln!(
            out,
            "Classification report ({} samples, partition: {partition})",
            self.total
        );
        let rule = format!("{:-<58}", "");
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(
            out,
            "{:<14}{:>11}{:>11}{:>11}{:>11}",
            "Class", "Precision", "Recall", "F1", "Support"
        );
        let _ = writeln!(out, "{rule}");
        for label in EmotionLabel::DISPLAY_ORDER {
            let m = self.class(label);
            let _ = writeln!(
                out,
                "{:<14}{:>11.3}{:>11.3}{:>11.3}{:>11}",
                label.name(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(
            out,
            "{:<14}{:>33.3}{:>11}",
            "Accuracy", self.accuracy, self.total
        );
        for (name, avg) in [("Macro avg", self.macro_avg), ("Weighted avg", self.weighted_avg)] {
            let _ = writeln!(
                out,
                "{:<14}{:>11.3}{:>11.3}{:>11.3}{:>11}",
                name, avg.precision, avg.recall, avg.f1, self.total
            );
        }
        let _ = writeln!(out, "{rule}");
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}
