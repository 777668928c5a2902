//! Image preprocessing: grayscale to RGB replication, bilinear resize to the
//! model resolution, ImageNet normalization, and the training-time
//! augmentation chain (random resized crop, horizontal flip, rotation, color
//! jitter).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::GrayImage;
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, stream};

pub const MODEL_SIDE: usize = 224;
pub const CHANNELS: usize = 3;
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Aspect-ratio range for random resized crops.
const CROP_RATIO: (f64, f64) = (3.0 / 4.0, 4.0 / 3.0);
const CROP_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    TrainAugmented,
    EvalDeterministic,
}

/// Channel-major `C x H x W` float image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    shape: [usize; 3],
    data: Vec<f32>,
    provenance: Provenance,
}

impl ImageTensor {
    pub fn from_raw(shape: [usize; 3], data: Vec<f32>, provenance: Provenance) -> Result<Self> {
        let expected = shape.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected} values for shape {shape:?}"),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            shape,
            data,
            provenance,
        })
    }

    pub fn zeros(shape: [usize; 3]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
            provenance: Provenance::EvalDeterministic,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.shape[1] * self.shape[2];
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Undo normalization back to `[0, 255]` intensities.
    pub fn denormalize(&self) -> Vec<f32> {
        let plane = self.shape[1] * self.shape[2];
        self.data
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = (i / plane).min(2);
                (x * IMAGENET_STD[c] + IMAGENET_MEAN[c]) * 255.0
            })
            .collect()
    }

    /// Interleaved RGB bytes, for writing preview images.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let [c, h, w] = self.shape;
        let plane = h * w;
        let vals = self.denormalize();
        let mut out = Vec::with_capacity(plane * 3);
        for p in 0..plane {
            for ch in 0..3 {
                let v = vals[ch.min(c - 1) * plane + p];
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }
}

/// Three-plane RGB image with integer intensities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Channel-major planes.
    pub data: Vec<u16>,
}

impl RgbImage {
    pub fn channel(&self, c: usize) -> &[u16] {
        let plane = self.width * self.height;
        &self.data[c * plane..(c + 1) * plane]
    }
}

pub fn to_rgb(img: &GrayImage) -> RgbImage {
    let mut data = Vec::with_capacity(img.pixels().len() * 3);
    for _ in 0..3 {
        data.extend_from_slice(img.pixels());
    }
    RgbImage {
        width: img.width(),
        height: img.height(),
        data,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Fraction of the source area kept by the random crop.
    pub crop_scale: (f64, f64),
    pub rotation_degrees: f64,
    pub hflip_prob: f64,
    /// Brightness, contrast and saturation strengths.
    pub jitter: [f64; 3],
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop_scale: (0.8, 1.0),
            rotation_degrees: 10.0,
            hflip_prob: 0.5,
            jitter: [0.2, 0.2, 0.2],
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Configuration under which the training path reduces to evaluation
    /// preprocessing.
    pub fn identity(seed: u64) -> Self {
        Self {
            crop_scale: (1.0, 1.0),
            rotation_degrees: 0.0,
            hflip_prob: 0.0,
            jitter: [0.0; 3],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.crop_scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "crop_scale must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})"
            )));
        }
        if !(self.rotation_degrees >= 0.0) {
            return Err(Error::InvalidConfig("rotation_degrees must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::InvalidConfig("hflip_prob must lie in [0, 1]".into()));
        }
        if self.jitter.iter().any(|&j| !(j >= 0.0)) {
            return Err(Error::InvalidConfig("jitter factors must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CropRect {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
}

/// Float planes in `[0, 1]`, channel-major.
struct Planes {
    side: usize,
    data: Vec<f32>,
}

pub fn preprocess_eval(img: &GrayImage) -> ImageTensor {
    let rgb = to_rgb(img);
    let full = CropRect {
        x: 0,
        y: 0,
        w: rgb.width,
        h: rgb.height,
    };
    let planes = crop_resize(&rgb, full, MODEL_SIDE);
    normalize(planes, Provenance::EvalDeterministic)
}

/// Augmented preprocessing. The random stream is keyed by
/// `(cfg.seed, sample_index, epoch)`.
pub fn preprocess_train(
    img: &GrayImage,
    cfg: &AugmentConfig,
    sample_index: u64,
    epoch: u64,
) -> ImageTensor {
    let mut rng = keyed_rng(cfg.seed, &[stream::AUGMENT, sample_index, epoch]);
    let rgb = to_rgb(img);

    let rect = random_resized_crop_rect(rgb.width, rgb.height, cfg.crop_scale, &mut rng);
    let mut planes = crop_resize(&rgb, rect, MODEL_SIDE);

    if cfg.hflip_prob > 0.0 && rng.gen::<f64>() < cfg.hflip_prob {
        hflip(&mut planes);
    }
    if cfg.rotation_degrees > 0.0 {
        let angle = rng.gen_range(-cfg.rotation_degrees..=cfg.rotation_degrees);
        planes = rotate(&planes, angle);
    }
    color_jitter(&mut planes, cfg.jitter, &mut rng);

    normalize(planes, Provenance::TrainAugmented)
}

fn random_resized_crop_rect<R: Rng>(
    width: usize,
    height: usize,
    scale: (f64, f64),
    rng: &mut R,
) -> CropRect {
    let full = CropRect {
        x: 0,
        y: 0,
        w: width,
        h: height,
    };
    if scale.0 >= 1.0 {
        return full;
    }
    let area = (width * height) as f64;
    let (log_lo, log_hi) = (CROP_RATIO.0.ln(), CROP_RATIO.1.ln());
    for _ in 0..CROP_ATTEMPTS {
        let target = area * rng.gen_range(scale.0..=scale.1);
        let ratio = rng.gen_range(log_lo..=log_hi).exp();
        let w = (target * ratio).sqrt().round() as usize;
        let h = (target / ratio).sqrt().round() as usize;
        if w > 0 && h > 0 && w <= width && h <= height {
            let x = rng.gen_range(0..=width - w);
            let y = rng.gen_range(0..=height - h);
            return CropRect { x, y, w, h };
        }
    }
    // Fallback: largest centered crop with an in-range aspect ratio.
    let in_ratio = width as f64 / height as f64;
    let (w, h) = if in_ratio < CROP_RATIO.0 {
        (width, ((width as f64) / CROP_RATIO.0).round() as usize)
    } else if in_ratio > CROP_RATIO.1 {
        (((height as f64) * CROP_RATIO.1).round() as usize, height)
    } else {
        (width, height)
    };
    CropRect {
        x: (width - w) / 2,
        y: (height - h) / 2,
        w,
        h,
    }
}

/// Sampling taps for one axis of a half-pixel-centered bilinear resize.
fn axis_taps(offset: usize, len: usize, out: usize) -> Vec<(usize, usize, f32)> {
    let scale = len as f64 / out as f64;
    (0..out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(len - 1);
            let hi = (lo + 1).min(len - 1);
            let frac = (src - lo as f64) as f32;
            (offset + lo, offset + hi, frac)
        })
        .collect()
}

fn crop_resize(rgb: &RgbImage, rect: CropRect, side: usize) -> Planes {
    let xs = axis_taps(rect.x, rect.w, side);
    let ys = axis_taps(rect.y, rect.h, side);
    let mut data = Vec::with_capacity(3 * side * side);
    for c in 0..3 {
        let src = rgb.channel(c);
        for &(y0, y1, fy) in &ys {
            let r0 = &src[y0 * rgb.width..(y0 + 1) * rgb.width];
            let r1 = &src[y1 * rgb.width..(y1 + 1) * rgb.width];
            for &(x0, x1, fx) in &xs {
                let top = r0[x0] as f32 * (1.0 - fx) + r0[x1] as f32 * fx;
                let bottom = r1[x0] as f32 * (1.0 - fx) + r1[x1] as f32 * fx;
                data.push((top * (1.0 - fy) + bottom * fy) / 255.0);
            }
        }
    }
    Planes { side, data }
}

fn hflip(planes: &mut Planes) {
    let side = planes.side;
    for row in planes.data.chunks_mut(side) {
        row.reverse();
    }
}

/// Rotation about the image center, bilinear sampling, black fill.
fn rotate(planes: &Planes, degrees: f64) -> Planes {
    if degrees == 0.0 {
        return Planes {
            side: planes.side,
            data: planes.data.clone(),
        };
    }
    let side = planes.side;
    let center = (side as f64 - 1.0) / 2.0;
    let (sin, cos) = degrees.to_radians().sin_cos();
    let mut data = vec![0.0f32; planes.data.len()];
    for y in 0..side {
        for x in 0..side {
            let dx = x as f64 - center;
            let dy = y as f64 - center;
            // Inverse mapping: output pixel to source coordinate.
            let sx = cos * dx + sin * dy + center;
            let sy = -sin * dx + cos * dy + center;
            if sx < -1.0 || sy < -1.0 || sx > side as f64 || sy > side as f64 {
                continue;
            }
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = (sx - x0) as f32;
            let fy = (sy - y0) as f32;
            let tap = |plane: &[f32], xi: f64, yi: f64| -> f32 {
                if xi < 0.0 || yi < 0.0 || xi >= side as f64 || yi >= side as f64 {
                    0.0
                } else {
                    plane[yi as usize * side + xi as usize]
                }
            };
            for c in 0..3 {
                let plane = &planes.data[c * side * side..(c + 1) * side * side];
                let top = tap(plane, x0, y0) * (1.0 - fx) + tap(plane, x0 + 1.0, y0) * fx;
                let bottom =
                    tap(plane, x0, y0 + 1.0) * (1.0 - fx) + tap(plane, x0 + 1.0, y0 + 1.0) * fx;
                data[c * side * side + y * side + x] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Planes { side, data }
}

fn luminance(planes: &Planes) -> Vec<f32> {
    let n = planes.side * planes.side;
    let (r, rest) = planes.data.split_at(n);
    let (g, b) = rest.split_at(n);
    (0..n)
        .map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i])
        .collect()
}

/// Brightness, contrast, then saturation; each factor drawn from
/// `[max(0, 1 - s), 1 + s]` and skipped entirely when its strength is 0.
fn color_jitter<R: Rng>(planes: &mut Planes, strengths: [f64; 3], rng: &mut R) {
    let mut draw = |s: f64| -> Option<f32> {
        (s > 0.0).then(|| rng.gen_range((1.0 - s).max(0.0)..=1.0 + s) as f32)
    };
    let brightness = draw(strengths[0]);
    let contrast = draw(strengths[1]);
    let saturation = draw(strengths[2]);

    if let Some(f) = brightness {
        for v in &mut planes.data {
            *v = (*v * f).clamp(0.0, 1.0);
        }
    }
    if let Some(f) = contrast {
        let gray = luminance(planes);
        let mean = gray.iter().sum::<f32>() / gray.len() as f32;
        for v in &mut planes.data {
            *v = (f * *v + (1.0 - f) * mean).clamp(0.0, 1.0);
        }
    }
    if let Some(f) = saturation {
        let gray = luminance(planes);
        let n = gray.len();
        for (i, v) in planes.data.iter_mut().enumerate() {
            *v = (f * *v + (1.0 - f) * gray[i % n]).clamp(0.0, 1.0);
        }
    }
}

fn normalize(planes: Planes, provenance: Provenance) -> ImageTensor {
    let plane = planes.side * planes.side;
    let mut data = planes.data;
    for (c, chunk) in data.chunks_mut(plane).enumerate() {
        let (mean, std) = (IMAGENET_MEAN[c], IMAGENET_STD[c]);
        for v in chunk {
            *v = (*v - mean) / std;
        }
    }
    ImageTensor {
        shape: [CHANNELS, planes.side, planes.side],
        data,
        provenance,
    }
}

/// Horizontal mirror of every channel.
pub fn hflip_tensor(t: &ImageTensor) -> ImageTensor {
    let [_, _, w] = t.shape;
    let mut out = t.clone();
    for row in out.data.chunks_mut(w) {
        row.reverse();
    }
    out
}
