//! Fixed artifact names, relative to the run's output directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

pub const SPLIT: &str = "split.json";
pub const VALIDATION: &str = "validation_report.json";
pub const HISTOGRAM_CSV: &str = "class_histogram.csv";
pub const HISTOGRAM_PNG: &str = "class_histogram.png";
pub const AUGMENTED_PNG: &str = "augmented_samples.png";
pub const SAMPLES_DIR: &str = "samples";

pub const CHECKPOINT: &str = insideout::trainer::BEST_CHECKPOINT_DIR;
pub const CHECKPOINT_LAST: &str = insideout::trainer::LAST_CHECKPOINT_DIR;
pub const MANIFEST: &str = "manifest.json";
pub const CURVES_CSV: &str = "curves.csv";
pub const CURVES_ACC_PNG: &str = "curves_acc.png";
pub const CURVES_LOSS_PNG: &str = "curves_loss.png";

pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const CONFUSION_PNG: &str = "confusion.png";

pub const INFERENCE_JSON: &str = "inference.json";
pub const INFERENCE_PNG: &str = "inference_grid.png";

pub const PREPARE: &[&str] = &[SPLIT, VALIDATION, HISTOGRAM_CSV, HISTOGRAM_PNG, AUGMENTED_PNG];
pub const TRAIN: &[&str] = &[
    CHECKPOINT,
    CHECKPOINT_LAST,
    MANIFEST,
    CURVES_CSV,
    CURVES_ACC_PNG,
    CURVES_LOSS_PNG,
];
pub const EVALUATE: &[&str] = &[REPORT_TXT, REPORT_JSON, CONFUSION_CSV, CONFUSION_PNG];
pub const INFER: &[&str] = &[INFERENCE_JSON, INFERENCE_PNG];

/// Refuses to clobber existing artifacts unless `overwrite` is set.
pub fn guard(dir: &Path, names: &[&str], overwrite: bool) -> anyhow::Result<()> {
    if overwrite {
        return Ok(());
    }
    let existing: Vec<&str> = names.iter().copied().filter(|n| dir.join(n).exists()).collect();
    if !existing.is_empty() {
        bail!(
            "{} already contains {}; pass --overwrite to replace",
            dir.display(),
            existing.join(", ")
        );
    }
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<PathBuf> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
