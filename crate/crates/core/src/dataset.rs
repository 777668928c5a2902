//! FER2013 ingest: the `emotion,pixels,Usage` CSV, labeled samples, class
//! statistics and a non-mutating validation pass.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 7;
pub const IMAGE_SIDE: usize = 48;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const CSV_HEADER: &str = "emotion,pixels,Usage";

/// Emotion category in native FER2013 index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EmotionLabel {
    Anger = 0,
    Disgust = 1,
    Fear = 2,
    Happy = 3,
    Sadness = 4,
    Surprise = 5,
    Neutral = 6,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; NUM_CLASSES] = [
        EmotionLabel::Anger,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Happy,
        EmotionLabel::Sadness,
        EmotionLabel::Surprise,
        EmotionLabel::Neutral,
    ];

    /// Alphabetical order used by the human-readable report table.
    pub const DISPLAY_ORDER: [EmotionLabel; NUM_CLASSES] = [
        EmotionLabel::Anger,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Happy,
        EmotionLabel::Neutral,
        EmotionLabel::Sadness,
        EmotionLabel::Surprise,
    ];

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or(Error::InvalidLabel(index))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Anger => "Anger",
            EmotionLabel::Disgust => "Disgust",
            EmotionLabel::Fear => "Fear",
            EmotionLabel::Happy => "Happy",
            EmotionLabel::Sadness => "Sadness",
            EmotionLabel::Surprise => "Surprise",
            EmotionLabel::Neutral => "Neutral",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown emotion label `{s}`")))
    }
}

/// The official FER2013 partition tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Usage {
    Training,
    PublicTest,
    PrivateTest,
}

impl Usage {
    pub fn as_str(self) -> &'static str {
        match self {
            Usage::Training => "Training",
            Usage::PublicTest => "PublicTest",
            Usage::PrivateTest => "PrivateTest",
        }
    }
}

impl FromStr for Usage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "Training" => Ok(Usage::Training),
            "PublicTest" => Ok(Usage::PublicTest),
            "PrivateTest" => Ok(Usage::PrivateTest),
            other => Err(format!("unknown usage tag `{other}`")),
        }
    }
}

/// Grayscale face crop, row-major.
///
/// Pixels are stored wider than a byte so that out-of-range values built by
/// hand can still be represented and reported by [`validate_dataset`]; the
/// parser never produces them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u16>) -> Result<Self> {
        if pixels.len() != width * height || width == 0 || height == 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("{width}x{height} pixels"),
                actual: format!("{} values", pixels.len()),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_u8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        Self::new(width, height, pixels.iter().map(|&p| p as u16).collect())
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u16] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u16) {
        self.pixels[y * self.width + x] = value;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub image: GrayImage,
    pub label: EmotionLabel,
    pub usage: Usage,
}

/// An immutable, ordered corpus of samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    samples: Vec<Sample>,
    source_digest: String,
}

impl LabeledDataset {
    /// Builds a dataset from in-memory samples; the digest covers the
    /// normalized CSV rendering.
    pub fn from_samples(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut ds = Self {
            samples,
            source_digest: String::new(),
        };
        ds.source_digest = ds.content_digest();
        Ok(ds)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Sample> {
        self.samples.get(index)
    }

    pub fn labels(&self) -> impl Iterator<Item = EmotionLabel> + '_ {
        self.samples.iter().map(|s| s.label)
    }

    /// Lowercase hex SHA-256 of the raw source bytes.
    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    /// SHA-256 of the normalized CSV rendering; stable across round trips.
    pub fn content_digest(&self) -> String {
        sha256_hex(self.to_csv().as_bytes())
    }

    /// Subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples.get(i).cloned().ok_or_else(|| {
                    Error::InvalidConfig(format!("index {i} out of range for {}", self.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_samples(samples)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * IMAGE_PIXELS * 4);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&s.label.index().to_string());
            out.push(',');
            for (i, p) in s.image.pixels().iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(&p.to_string());
            }
            out.push(',');
            out.push_str(s.usage.as_str());
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_fer_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_fer_bytes(&bytes)
}

pub fn parse_fer_bytes(bytes: &[u8]) -> Result<LabeledDataset> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::MalformedRow {
        row: 0,
        defect: format!("file is not valid UTF-8: {e}"),
    })?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let header = header.trim_start_matches('\u{feff}').trim();
    if header != CSV_HEADER {
        return Err(Error::MalformedHeader(header.to_string()));
    }

    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        samples.push(parse_row(row, line)?);
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(LabeledDataset {
        samples,
        source_digest: sha256_hex(bytes),
    })
}

fn parse_row(row: usize, line: &str) -> Result<Sample> {
    let defect = |msg: String| Error::MalformedRow { row, defect: msg };
    let fields: Vec<&str> = line.split(',').map(|f| f.trim().trim_matches('"')).collect();
    if fields.len() != 3 {
        return Err(defect(format!("expected 3 fields, got {}", fields.len())));
    }

    let label_idx: usize = fields[0]
        .parse()
        .map_err(|_| defect(format!("label `{}` is not an integer", fields[0])))?;
    let label = EmotionLabel::from_index(label_idx)
        .map_err(|_| defect(format!("label {label_idx} out of range 0..=6")))?;

    let mut pixels = Vec::with_capacity(IMAGE_PIXELS);
    for tok in fields[1].split_ascii_whitespace() {
        let v: u16 = tok
            .parse()
            .map_err(|_| defect(format!("pixel `{tok}` is not an integer")))?;
        if v > 255 {
            return Err(defect(format!("pixel value {v} out of range 0..=255")));
        }
        pixels.push(v);
    }
    if pixels.len() != IMAGE_PIXELS {
        return Err(defect(format!(
            "expected {IMAGE_PIXELS} pixels, got {}",
            pixels.len()
        )));
    }

    let usage = fields[2].parse::<Usage>().map_err(defect)?;
    Ok(Sample {
        image: GrayImage {
            width: IMAGE_SIDE,
            height: IMAGE_SIDE,
            pixels,
        },
        label,
        usage,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub counts: [usize; NUM_CLASSES],
    pub total: usize,
}

impl ClassHistogram {
    pub fn from_labels(labels: impl IntoIterator<Item = EmotionLabel>) -> Result<Self> {
        let mut counts = [0usize; NUM_CLASSES];
        for l in labels {
            counts[l.index()] += 1;
        }
        let total = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { counts, total })
    }

    pub fn count(&self, label: EmotionLabel) -> usize {
        self.counts[label.index()]
    }
}

pub fn class_histogram(ds: &LabeledDataset) -> Result<ClassHistogram> {
    ClassHistogram::from_labels(ds.labels())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub first: usize,
    pub duplicate: usize,
    pub same_label: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeViolation {
    pub sample: usize,
    pub pixel: usize,
    pub value: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeViolation {
    pub sample: usize,
    pub width: usize,
    pub height: usize,
}

/// Findings of [`validate_dataset`]. Class statistics are informational;
/// only duplicates and pixel violations count as findings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sample_count: usize,
    pub class_counts: [usize; NUM_CLASSES],
    /// Smallest count per class among the classes that occur, with its label.
    pub min_class: Option<(EmotionLabel, usize)>,
    pub missing_classes: Vec<EmotionLabel>,
    pub duplicates: Vec<DuplicatePair>,
    pub range_violations: Vec<RangeViolation>,
    pub shape_violations: Vec<ShapeViolation>,
}

impl ValidationReport {
    pub fn duplicate_count(&self) -> usize {
        self.duplicates.len()
    }

    pub fn has_findings(&self) -> bool {
        !(self.duplicates.is_empty()
            && self.range_violations.is_empty()
            && self.shape_violations.is_empty())
    }
}

/// Reports duplicate images, per-class minima and pixel violations. Each
/// repeated image is paired with its first occurrence.
pub fn validate_dataset(ds: &LabeledDataset) -> ValidationReport {
    let mut class_counts = [0usize; NUM_CLASSES];
    let mut first_seen: HashMap<&[u16], usize> = HashMap::new();
    let mut duplicates = Vec::new();
    let mut range_violations = Vec::new();
    let mut shape_violations = Vec::new();

    for (i, s) in ds.samples().iter().enumerate() {
        class_counts[s.label.index()] += 1;
        if s.image.width() != IMAGE_SIDE || s.image.height() != IMAGE_SIDE {
            shape_violations.push(ShapeViolation {
                sample: i,
                width: s.image.width(),
                height: s.image.height(),
            });
        }
        for (p, &v) in s.image.pixels().iter().enumerate() {
            if v > 255 {
                range_violations.push(RangeViolation {
                    sample: i,
                    pixel: p,
                    value: v,
                });
            }
        }
        match first_seen.get(s.image.pixels()) {
            Some(&first) => duplicates.push(DuplicatePair {
                first,
                duplicate: i,
                same_label: ds.samples()[first].label == s.label,
            }),
            None => {
                first_seen.insert(s.image.pixels(), i);
            }
        }
    }

    let min_class = EmotionLabel::ALL
        .iter()
        .filter(|l| class_counts[l.index()] > 0)
        .map(|&l| (l, class_counts[l.index()]))
        .min_by_key(|&(_, c)| c);
    let missing_classes = EmotionLabel::ALL
        .iter()
        .copied()
        .filter(|l| class_counts[l.index()] == 0)
        .collect();

    ValidationReport {
        sample_count: ds.len(),
        class_counts,
        min_class,
        missing_classes,
        duplicates,
        range_violations,
        shape_violations,
    }
}
