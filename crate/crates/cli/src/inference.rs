//! Per-image prediction with confidence and top-k alternatives.

use std::path::Path;

use insideout::dataset::{EmotionLabel, GrayImage};
use insideout::model::{argmax, Classifier};
use insideout::transforms::preprocess_eval;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::plot::{self, Tile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: EmotionLabel,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub reference: String,
    pub label: EmotionLabel,
    /// Max softmax probability.
    pub confidence: f64,
    /// Highest probabilities first.
    pub top_k: Vec<LabelScore>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub truth: Option<EmotionLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InferenceEntry {
    Ok(InferenceResult),
    Failed { reference: String, error: String },
}

impl InferenceEntry {
    pub fn result(&self) -> Option<&InferenceResult> {
        match self {
            InferenceEntry::Ok(r) => Some(r),
            InferenceEntry::Failed { .. } => None,
        }
    }
}

pub struct InferInput {
    pub reference: String,
    pub image: Result<GrayImage, String>,
    pub truth: Option<EmotionLabel>,
}

/// Loads any PNG as 8-bit grayscale.
pub fn load_image(path: &Path) -> Result<GrayImage, String> {
    let img = image::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let luma = img.to_luma8();
    GrayImage::from_u8(luma.width() as usize, luma.height() as usize, luma.as_raw())
        .map_err(|e| format!("{}: {e}", path.display()))
}

/// One entry per input, in input order. Unreadable inputs become `Failed`
/// entries and do not affect the others.
pub fn infer<C: Classifier + ?Sized>(
    model: &C,
    inputs: &[InferInput],
    top_k: usize,
) -> Vec<InferenceEntry> {
    let k = top_k.clamp(1, insideout::NUM_CLASSES);
    inputs
        .par_iter()
        .map(|input| {
            let failed = |error: String| InferenceEntry::Failed {
                reference: input.reference.clone(),
                error,
            };
            let image = match &input.image {
                Ok(img) => img,
                Err(e) => return failed(e.clone()),
            };
            let tensor = preprocess_eval(image);
            let probs = match insideout::predict_proba(model, std::slice::from_ref(&tensor)) {
                Ok(p) => p[0],
                Err(e) => return failed(e.to_string()),
            };
            let best = argmax(&probs);
            let mut order: Vec<usize> = (0..probs.len()).collect();
            // Stable sort keeps the lower index first among equal probabilities.
            order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
            let label = EmotionLabel::from_index(best).expect("argmax within classes");
            InferenceEntry::Ok(InferenceResult {
                reference: input.reference.clone(),
                label,
                confidence: probs[best],
                top_k: order[..k]
                    .iter()
                    .map(|&c| LabelScore {
                        label: EmotionLabel::from_index(c).expect("class index"),
                        probability: probs[c],
                    })
                    .collect(),
                truth: input.truth,
            })
        })
        .collect()
}

/// Annotated grid of the successful predictions: green captions for correct
/// predictions, red for wrong ones, black when the truth is unknown.
pub fn inference_grid(inputs: &[InferInput], entries: &[InferenceEntry]) -> image::RgbImage {
    let tiles: Vec<Tile> = inputs
        .iter()
        .zip(entries)
        .filter_map(|(input, entry)| {
            let r = entry.result()?;
            let img = input.image.as_ref().ok()?;
            let color = match r.truth {
                Some(t) if t == r.label => plot::GREEN,
                Some(_) => plot::RED,
                None => plot::BLACK,
            };
            Some(Tile {
                image: thumbnail(img, 48),
                caption: format!("{} {:.2}", r.label, r.confidence),
                color,
            })
        })
        .collect();
    plot::tile_grid("Predictions", &tiles, 4, 2)
}

pub fn gray_to_rgb(img: &GrayImage) -> image::RgbImage {
    image::RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let v = img.get(x as usize, y as usize).min(255) as u8;
        image::Rgb([v, v, v])
    })
}

fn thumbnail(img: &GrayImage, side: u32) -> image::RgbImage {
    let rgb = gray_to_rgb(img);
    if rgb.width() == side && rgb.height() == side {
        rgb
    } else {
        image::imageops::resize(&rgb, side, side, image::imageops::FilterType::Triangle)
    }
}
