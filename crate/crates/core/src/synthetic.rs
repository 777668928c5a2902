//! Synthetic FER-format corpora with one learnable texture per class, for
//! smoke runs, benchmarks and sanity experiments without the real dataset.
//! No two textures are mirror images, so horizontal flips keep classes apart.

use rand::Rng;

use crate::dataset::{EmotionLabel, GrayImage, LabeledDataset, Sample, Usage, IMAGE_SIDE, NUM_CLASSES};
use crate::error::Result;
use crate::rng::{keyed_rng, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub counts: [usize; NUM_CLASSES],
    pub seed: u64,
    /// Amplitude of the class texture around mid-gray.
    pub contrast: f64,
    /// Half-width of uniform per-pixel noise.
    pub noise: f64,
}

impl SyntheticSpec {
    pub fn balanced(per_class: usize, seed: u64) -> Self {
        Self {
            counts: [per_class; NUM_CLASSES],
            seed,
            contrast: 90.0,
            noise: 30.0,
        }
    }
}

/// Texture intensity in `[-1, 1]` of class `c` at `(x, y)` with a per-sample
/// phase shift.
fn texture(c: usize, x: f64, y: f64, phase: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    match c {
        0 => (tau * (y / 8.0) + phase).sin(),
        1 => (tau * (x / 8.0) + phase).sin(),
        2 => (tau * ((x + y) / 11.0) + phase).sin(),
        3 => (tau * (x / 4.0) + phase).sin(),
        4 => (tau * (x / 8.0) + phase).sin() * (tau * (y / 8.0)).sin(),
        5 => (tau * (y / 4.0) + phase).sin(),
        _ => {
            // Concentric rings around a jittered center.
            let (cx, cy) = (24.0 + 3.0 * phase.sin(), 24.0 + 3.0 * phase.cos());
            let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            (tau * r / 10.0).sin()
        }
    }
}

/// Samples are emitted class by class; within each class every tenth sample is
/// tagged PublicTest, the next PrivateTest, the rest Training.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    let mut samples = Vec::with_capacity(spec.counts.iter().sum());
    for (c, &count) in spec.counts.iter().enumerate() {
        for k in 0..count {
            let mut rng = keyed_rng(spec.seed, &[stream::SYNTHETIC, c as u64, k as u64]);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let base = 128.0 + rng.gen_range(-20.0..20.0);
            let mut pixels = Vec::with_capacity(IMAGE_SIDE * IMAGE_SIDE);
            for y in 0..IMAGE_SIDE {
                for x in 0..IMAGE_SIDE {
                    let t = texture(c, x as f64, y as f64, phase);
                    let n = if spec.noise > 0.0 {
                        rng.gen_range(-spec.noise..=spec.noise)
                    } else {
                        0.0
                    };
                    let v = (base + spec.contrast * t + n).round().clamp(0.0, 255.0);
                    pixels.push(v as u16);
                }
            }
            let usage = match k % 10 {
                8 => Usage::PublicTest,
                9 => Usage::PrivateTest,
                _ => Usage::Training,
            };
            samples.push(Sample {
                image: GrayImage::new(IMAGE_SIDE, IMAGE_SIDE, pixels)?,
                label: EmotionLabel::from_index(c)?,
                usage,
            });
        }
    }
    LabeledDataset::from_samples(samples)
}
