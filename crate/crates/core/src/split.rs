//! Stratified train/validation/test partitioning.
//!
//! Per-class allocation uses a controlled rounding of the quota table
//! `n_c * |p| / N`: every cell is rounded to its floor or ceiling while row
//! sums (class sizes) and column sums (partition sizes) stay exact, so each
//! class lands within one sample of exact proportionality in every partition.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{EmotionLabel, LabeledDataset, Usage, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, stream};

pub const PARTITIONS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    UsageColumn,
    StratifiedRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// (train, val, test) fractions.
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            mode: SplitMode::StratifiedRandom,
            ratios: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn stratified(ratios: [f64; 3], seed: u64) -> Self {
        Self {
            mode: SplitMode::StratifiedRandom,
            ratios,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == SplitMode::UsageColumn {
            return Ok(());
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        if self.ratios.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "split ratios must be positive, got {:?}",
                self.ratios
            )));
        }
        Ok(())
    }
}

/// Sorted sample indices per partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn partitions(&self) -> [&[usize]; 3] {
        [&self.train, &self.val, &self.test]
    }

    pub fn partition(&self, name: &str) -> Option<&[usize]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when the three lists are disjoint and cover `0..n` exactly once.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("index lists serialize");
        crate::dataset::sha256_hex(&json)
    }
}

/// On-disk form: the index lists plus what produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub spec: SplitSpec,
    pub dataset_digest: String,
    pub split_digest: String,
    pub split: DatasetSplit,
}

impl SplitFile {
    pub fn new(spec: SplitSpec, dataset_digest: &str, split: DatasetSplit) -> Self {
        Self {
            spec,
            dataset_digest: dataset_digest.to_string(),
            split_digest: split.digest(),
            split,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SplitFile = serde_json::from_str(&text)?;
        if file.split.digest() != file.split_digest {
            return Err(Error::InvalidConfig(format!(
                "{}: split digest does not match its index lists",
                path.display()
            )));
        }
        Ok(file)
    }
}

pub fn split_dataset(ds: &LabeledDataset, spec: &SplitSpec) -> Result<DatasetSplit> {
    match spec.mode {
        SplitMode::UsageColumn => split_by_usage(ds),
        SplitMode::StratifiedRandom => split_stratified(ds, spec),
    }
}

/// Official FER2013 partitions: Training, PublicTest and PrivateTest map to
/// train, val and test.
pub fn split_by_usage(ds: &LabeledDataset) -> Result<DatasetSplit> {
    let mut split = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (i, s) in ds.samples().iter().enumerate() {
        match s.usage {
            Usage::Training => split.train.push(i),
            Usage::PublicTest => split.val.push(i),
            Usage::PrivateTest => split.test.push(i),
        }
    }
    for (part, usage) in split.partitions().iter().zip([
        Usage::Training,
        Usage::PublicTest,
        Usage::PrivateTest,
    ]) {
        if part.is_empty() {
            return Err(Error::EmptyPartition(usage.as_str()));
        }
    }
    Ok(split)
}

pub fn split_stratified(ds: &LabeledDataset, spec: &SplitSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let n = ds.len();

    let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, s) in ds.samples().iter().enumerate() {
        by_class[s.label.index()].push(i);
    }
    for label in EmotionLabel::ALL {
        let count = by_class[label.index()].len();
        if count > 0 && count < PARTITIONS.len() {
            return Err(Error::ClassTooSmall {
                class: label.name(),
                count,
                partitions: PARTITIONS.len(),
            });
        }
    }

    let sizes = partition_sizes(n, &spec.ratios);
    for (size, name) in sizes.iter().zip(PARTITIONS) {
        if *size == 0 {
            return Err(Error::EmptyPartition(name));
        }
    }

    let class_sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let table = controlled_rounding(&class_sizes, &sizes);

    let mut split = DatasetSplit {
        train: Vec::with_capacity(sizes[0]),
        val: Vec::with_capacity(sizes[1]),
        test: Vec::with_capacity(sizes[2]),
    };
    for (c, members) in by_class.iter_mut().enumerate() {
        let mut rng = keyed_rng(spec.seed, &[stream::SPLIT, c as u64]);
        members.shuffle(&mut rng);
        let [tr, va, _] = table[c];
        split.train.extend_from_slice(&members[..tr]);
        split.val.extend_from_slice(&members[tr..tr + va]);
        split.test.extend_from_slice(&members[tr + va..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Validation and test sizes are floored; the residue goes to train.
pub fn partition_sizes(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let val = ((n as f64) * ratios[1] + 1e-9).floor() as usize;
    let test = ((n as f64) * ratios[2] + 1e-9).floor() as usize;
    let val = val.min(n);
    let test = test.min(n - val);
    [n - val - test, val, test]
}

/// Rounds the quota table `rows[c] * cols[p] / N` to integers, each cell the
/// floor or ceiling of its quota, preserving all row and column sums. When
/// several roundings exist the train column is preferred.
fn controlled_rounding(rows: &[usize], cols: &[usize; 3]) -> Vec<[usize; 3]> {
    let n: usize = rows.iter().sum();
    let mut table = Vec::with_capacity(rows.len());
    let mut fractional = Vec::with_capacity(rows.len());
    let mut row_deficit = Vec::with_capacity(rows.len());
    let mut col_deficit = *cols;

    for &r in rows {
        let mut cells = [0usize; 3];
        let mut frac = [0usize; 3];
        for p in 0..3 {
            let num = r * cols[p];
            cells[p] = num / n;
            frac[p] = num % n;
            col_deficit[p] -= cells[p];
        }
        row_deficit.push(r - cells.iter().sum::<usize>());
        table.push(cells);
        fractional.push(frac);
    }

    // Each row picks `row_deficit` distinct fractional cells to round up.
    fn assign(
        c: usize,
        row_deficit: &[usize],
        fractional: &[[usize; 3]],
        col_deficit: &mut [usize; 3],
        choice: &mut Vec<[bool; 3]>,
    ) -> bool {
        if c == row_deficit.len() {
            return col_deficit.iter().all(|&d| d == 0);
        }
        let need = row_deficit[c];
        for mask in 0u8..8 {
            let picked = [mask & 1 != 0, mask & 2 != 0, mask & 4 != 0];
            if picked.iter().filter(|&&b| b).count() != need {
                continue;
            }
            let ok = (0..3).all(|p| !picked[p] || (fractional[c][p] > 0 && col_deficit[p] > 0));
            if !ok {
                continue;
            }
            for p in 0..3 {
                if picked[p] {
                    col_deficit[p] -= 1;
                }
            }
            choice.push(picked);
            if assign(c + 1, row_deficit, fractional, col_deficit, choice) {
                return true;
            }
            choice.pop();
            for p in 0..3 {
                if picked[p] {
                    col_deficit[p] += 1;
                }
            }
        }
        false
    }

    let mut choice = Vec::with_capacity(rows.len());
    let found = assign(0, &row_deficit, &fractional, &mut col_deficit, &mut choice);
    assert!(found, "integral rounding of a transportation table always exists");
    for (cells, picked) in table.iter_mut().zip(choice) {
        for p in 0..3 {
            cells[p] += picked[p] as usize;
        }
    }
    table
}
