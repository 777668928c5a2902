//! Fixtures shared by the pipeline benchmarks.

use insideout::dataset::{LabeledDataset, NUM_CLASSES};
use insideout::synthetic::{synthetic_dataset, SyntheticSpec};
use insideout::transforms::{preprocess_eval, ImageTensor};

pub use insideout;

/// Balanced synthetic corpus with `per_class` samples of each emotion.
pub fn corpus(per_class: usize) -> LabeledDataset {
    synthetic_dataset(&SyntheticSpec::balanced(per_class, 17)).expect("synthetic corpus")
}

/// First `n` samples preprocessed for the model, with their labels.
pub fn batch(ds: &LabeledDataset, n: usize) -> (Vec<ImageTensor>, Vec<usize>) {
    ds.samples()[..n]
        .iter()
        .map(|s| (preprocess_eval(&s.image), s.label.index()))
        .unzip()
}

/// Deterministic pseudo-random (truth, prediction) pairs, about 60% correct.
pub fn predictions(n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    (0..n)
        .map(|_| {
            let t = (next() % NUM_CLASSES as u64) as usize;
            let p = if next() % 10 < 6 { t } else { (next() % NUM_CLASSES as u64) as usize };
            (t, p)
        })
        .unzip()
}
