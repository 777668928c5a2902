//! Classification head: global average pooling, dropout, and a fully
//! connected layer with one output per emotion class.

use rand::Rng;

use super::backbone::FeatureMap;
use super::Param;
use crate::dataset::NUM_CLASSES;
use crate::rng::{keyed_rng, stream};

#[derive(Debug, Clone)]
pub struct ClassifierHead {
    pub dropout_rate: f64,
    /// `feature_dim x 7`, row-major.
    pub weight: Param,
    pub bias: Param,
}

/// Intermediate values of one head forward pass.
pub struct HeadTrace {
    pooled: Vec<f64>,
    /// Inverted-dropout multipliers (0 or 1/(1-p)); `None` in eval mode.
    mask: Option<Vec<f64>>,
    spatial: (usize, usize),
}

impl ClassifierHead {
    /// Zero bias and weights uniform in `±1/sqrt(feature_dim)`.
    pub fn new(feature_dim: usize, dropout_rate: f64, seed: u64) -> Self {
        let bound = 1.0 / (feature_dim as f64).sqrt();
        let mut rng = keyed_rng(seed, &[stream::INIT, u64::MAX]);
        let w = (0..feature_dim * NUM_CLASSES)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            dropout_rate,
            weight: Param::new("head.weight".into(), vec![feature_dim, NUM_CLASSES], w),
            bias: Param::new("head.bias".into(), vec![NUM_CLASSES], vec![0.0; NUM_CLASSES]),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.shape[0]
    }

    /// `dropout_key` selects the mask stream; `None` runs in eval mode.
    pub fn forward(
        &self,
        features: &FeatureMap,
        dropout_key: Option<(u64, &[u64])>,
    ) -> ([f64; NUM_CLASSES], HeadTrace) {
        let area = features.side * features.side;
        let pooled: Vec<f64> = features
            .data
            .chunks(area)
            .map(|c| c.iter().sum::<f64>() / area as f64)
            .collect();

        let mask = match dropout_key {
            Some((seed, keys)) if self.dropout_rate > 0.0 => {
                let mut stream_keys = vec![stream::DROPOUT];
                stream_keys.extend_from_slice(keys);
                let mut rng = keyed_rng(seed, &stream_keys);
                let keep = 1.0 / (1.0 - self.dropout_rate);
                Some(
                    (0..pooled.len())
                        .map(|_| {
                            if rng.gen::<f64>() < self.dropout_rate {
                                0.0
                            } else {
                                keep
                            }
                        })
                        .collect::<Vec<_>>(),
                )
            }
            _ => None,
        };

        let mut logits = [0.0; NUM_CLASSES];
        logits.copy_from_slice(&self.bias.data);
        for (k, &f) in pooled.iter().enumerate() {
            let f = mask.as_ref().map_or(f, |m| f * m[k]);
            if f == 0.0 {
                continue;
            }
            let row = &self.weight.data[k * NUM_CLASSES..(k + 1) * NUM_CLASSES];
            for (l, &w) in logits.iter_mut().zip(row) {
                *l += w * f;
            }
        }
        (
            logits,
            HeadTrace {
                pooled,
                mask,
                spatial: (features.channels, features.side),
            },
        )
    }

    /// Accumulates head gradients and returns the gradient with respect to
    /// the backbone feature map.
    pub fn backward(
        &self,
        trace: &HeadTrace,
        grad_logits: &[f64; NUM_CLASSES],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> FeatureMap {
        for (gb, &g) in grad_b.iter_mut().zip(grad_logits) {
            *gb += g;
        }
        let (channels, side) = trace.spatial;
        let area = (side * side) as f64;
        let mut data = Vec::with_capacity(channels * side * side);
        for k in 0..channels {
            let m = trace.mask.as_ref().map_or(1.0, |m| m[k]);
            let f = trace.pooled[k] * m;
            let row = &self.weight.data[k * NUM_CLASSES..(k + 1) * NUM_CLASSES];
            let gw = &mut grad_w[k * NUM_CLASSES..(k + 1) * NUM_CLASSES];
            let mut g_pooled = 0.0;
            for c in 0..NUM_CLASSES {
                gw[c] += f * grad_logits[c];
                g_pooled += row[c] * grad_logits[c];
            }
            let g_cell = g_pooled * m / area;
            data.extend(std::iter::repeat(g_cell).take(side * side));
        }
        FeatureMap {
            channels,
            side,
            data,
        }
    }
}
