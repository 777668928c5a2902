//! Convolutional feature extractor consumed through [`BackboneAdapter`].
//!
//! The network is an average-pooling stem followed by 3x3 convolution stages
//! (padding 1, ReLU). Its architecture is data, so pretrained weights exported
//! from any compatible run load through the same path as the tiny stand-in.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Param;
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, stream};
use crate::transforms::{ImageTensor, CHANNELS, MODEL_SIDE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub out_channels: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneArch {
    /// Side of the non-overlapping average pool applied to the input.
    pub stem_pool: usize,
    pub stages: Vec<StageSpec>,
}

impl BackboneArch {
    /// Three conv stages ending in 64 channels on a 7x7 grid.
    pub fn tiny() -> Self {
        Self {
            stem_pool: 4,
            stages: vec![
                StageSpec {
                    out_channels: 8,
                    stride: 2,
                },
                StageSpec {
                    out_channels: 16,
                    stride: 2,
                },
                StageSpec {
                    out_channels: 64,
                    stride: 2,
                },
            ],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.stages.last().map_or(CHANNELS, |s| s.out_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidConfig("backbone needs at least one stage".into()));
        }
        if self.stem_pool == 0 || MODEL_SIDE % self.stem_pool != 0 {
            return Err(Error::InvalidConfig(format!(
                "stem_pool {} must divide {MODEL_SIDE}",
                self.stem_pool
            )));
        }
        if self
            .stages
            .iter()
            .any(|s| s.out_channels == 0 || s.stride == 0)
        {
            return Err(Error::InvalidConfig("stage channels and strides must be > 0".into()));
        }
        Ok(())
    }

    /// `(channels, side)` of every stage output.
    pub fn stage_shapes(&self) -> Vec<(usize, usize)> {
        let mut side = MODEL_SIDE / self.stem_pool;
        self.stages
            .iter()
            .map(|s| {
                side = conv_out_side(side, s.stride);
                (s.out_channels, side)
            })
            .collect()
    }
}

fn conv_out_side(side: usize, stride: usize) -> usize {
    (side - 1) / stride + 1
}

/// Spatial feature map of one sample, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub side: usize,
    pub data: Vec<f64>,
}

/// Per-sample activations kept for the backward pass: the stem output
/// followed by every stage output (post-ReLU).
pub struct Activations {
    maps: Vec<FeatureMap>,
}

impl Activations {
    pub fn output(&self) -> &FeatureMap {
        self.maps.last().expect("at least the stem map")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsSource {
    ImageNetPretrained,
    RandomInit,
}

#[derive(Debug, Clone)]
pub struct BackboneAdapter {
    arch: BackboneArch,
    weights_source: WeightsSource,
    /// Per-stage trainability.
    trainable: Vec<bool>,
    /// `[weight_0, bias_0, weight_1, bias_1, ...]`.
    params: Vec<Param>,
}

impl BackboneAdapter {
    pub fn random(arch: BackboneArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut params = Vec::with_capacity(arch.stages.len() * 2);
        let mut in_ch = CHANNELS;
        for (i, stage) in arch.stages.iter().enumerate() {
            let fan_in = in_ch * 9;
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut rng = keyed_rng(seed, &[stream::INIT, i as u64]);
            let n = stage.out_channels * fan_in;
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
            params.push(Param::new(
                format!("backbone.stage{i}.weight"),
                vec![stage.out_channels, in_ch, 3, 3],
                w,
            ));
            params.push(Param::new(
                format!("backbone.stage{i}.bias"),
                vec![stage.out_channels],
                vec![0.0; stage.out_channels],
            ));
            in_ch = stage.out_channels;
        }
        let trainable = vec![true; arch.stages.len()];
        Ok(Self {
            arch,
            weights_source: WeightsSource::RandomInit,
            trainable,
            params,
        })
    }

    /// Wraps already-trained parameters, checking them against `arch`.
    pub fn from_params(
        arch: BackboneArch,
        weights_source: WeightsSource,
        params: Vec<Param>,
    ) -> Result<Self> {
        let template = Self::random(arch.clone(), 0)?;
        if template.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "backbone expects {} parameter tensors, got {}",
                template.params.len(),
                params.len()
            )));
        }
        for (t, p) in template.params.iter().zip(&params) {
            if t.name != p.name || t.shape != p.shape || p.data.len() != t.data.len() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} {:?}", t.name, t.shape),
                    actual: format!("{} {:?}", p.name, p.shape),
                });
            }
        }
        let trainable = vec![true; arch.stages.len()];
        Ok(Self {
            arch,
            weights_source,
            trainable,
            params,
        })
    }

    pub fn arch(&self) -> &BackboneArch {
        &self.arch
    }

    pub fn feature_dim(&self) -> usize {
        self.arch.feature_dim()
    }

    pub fn num_stages(&self) -> usize {
        self.arch.stages.len()
    }

    pub fn weights_source(&self) -> WeightsSource {
        self.weights_source
    }

    pub fn trainable(&self) -> &[bool] {
        &self.trainable
    }

    pub fn set_trainable(&mut self, flags: Vec<bool>) {
        assert_eq!(flags.len(), self.num_stages());
        for (i, &t) in flags.iter().enumerate() {
            self.params[2 * i].trainable = t;
            self.params[2 * i + 1].trainable = t;
        }
        self.trainable = flags;
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [CHANNELS, MODEL_SIDE, MODEL_SIDE]
    }

    pub fn forward(&self, input: &ImageTensor) -> Result<Activations> {
        if input.shape() != self.input_shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.input_shape()),
                actual: format!("{:?}", input.shape()),
            });
        }
        let mut maps = Vec::with_capacity(self.num_stages() + 1);
        maps.push(avg_pool(input, self.arch.stem_pool));
        for (i, stage) in self.arch.stages.iter().enumerate() {
            let prev = maps.last().expect("stem map");
            let out = conv3x3_relu(
                prev,
                &self.params[2 * i].data,
                &self.params[2 * i + 1].data,
                stage.out_channels,
                stage.stride,
            );
            maps.push(out);
        }
        Ok(Activations { maps })
    }

    /// Accumulates parameter gradients into `grads` (aligned with
    /// [`params`](Self::params)). Propagation stops below the lowest
    /// trainable stage.
    pub fn backward(&self, acts: &Activations, grad_out: FeatureMap, grads: &mut [Vec<f64>]) {
        let Some(lowest) = self.trainable.iter().position(|&t| t) else {
            return;
        };
        let mut grad = grad_out;
        for i in (lowest..self.num_stages()).rev() {
            let input = &acts.maps[i];
            let output = &acts.maps[i + 1];
            let (gw, rest) = grads[2 * i..].split_at_mut(1);
            let need_input_grad = i > lowest;
            grad = conv3x3_relu_backward(
                input,
                output,
                &grad,
                &self.params[2 * i].data,
                self.arch.stages[i].stride,
                &mut gw[0],
                &mut rest[0],
                need_input_grad,
            );
        }
    }
}

fn avg_pool(input: &ImageTensor, k: usize) -> FeatureMap {
    let [c, h, w] = input.shape();
    let side = h / k;
    debug_assert_eq!(h, w);
    let norm = 1.0 / (k * k) as f64;
    let mut data = vec![0.0; c * side * side];
    for ch in 0..c {
        let plane = input.channel(ch);
        let out = &mut data[ch * side * side..(ch + 1) * side * side];
        for y in 0..h {
            let oy = y / k;
            let row = &plane[y * w..(y + 1) * w];
            for (x, &v) in row.iter().enumerate() {
                out[oy * side + x / k] += v as f64;
            }
        }
        for v in out.iter_mut() {
            *v *= norm;
        }
    }
    FeatureMap {
        channels: c,
        side,
        data,
    }
}

/// Output pixels `o` whose tap `k` lands inside `[0, len)`, as a range.
fn valid_range(k: usize, stride: usize, len: usize, out: usize) -> (usize, usize) {
    // input index = o * stride + k - 1
    let lo = if k == 0 { 1usize.div_ceil(stride) } else { 0 };
    let hi = ((len + 1 - k) + stride - 1) / stride; // first o with o*stride + k - 1 >= len
    (lo.min(out), hi.min(out))
}

fn conv3x3_relu(
    input: &FeatureMap,
    weight: &[f64],
    bias: &[f64],
    out_channels: usize,
    stride: usize,
) -> FeatureMap {
    let (c_in, side) = (input.channels, input.side);
    let out_side = conv_out_side(side, stride);
    let plane = out_side * out_side;
    let mut data = vec![0.0; out_channels * plane];
    for o in 0..out_channels {
        let out = &mut data[o * plane..(o + 1) * plane];
        out.fill(bias[o]);
        for i in 0..c_in {
            let src = &input.data[i * side * side..(i + 1) * side * side];
            for ky in 0..3 {
                let (y_lo, y_hi) = valid_range(ky, stride, side, out_side);
                for kx in 0..3 {
                    let wv = weight[((o * c_in + i) * 3 + ky) * 3 + kx];
                    let (x_lo, x_hi) = valid_range(kx, stride, side, out_side);
                    for oy in y_lo..y_hi {
                        let iy = oy * stride + ky - 1;
                        let src_row = &src[iy * side..(iy + 1) * side];
                        let out_row = &mut out[oy * out_side..(oy + 1) * out_side];
                        for ox in x_lo..x_hi {
                            out_row[ox] += wv * src_row[ox * stride + kx - 1];
                        }
                    }
                }
            }
        }
        for v in out.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    FeatureMap {
        channels: out_channels,
        side: out_side,
        data,
    }
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_relu_backward(
    input: &FeatureMap,
    output: &FeatureMap,
    grad_out: &FeatureMap,
    weight: &[f64],
    stride: usize,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    need_input_grad: bool,
) -> FeatureMap {
    let (c_in, side) = (input.channels, input.side);
    let (c_out, out_side) = (output.channels, output.side);
    let plane = out_side * out_side;

    // ReLU mask.
    let g: Vec<f64> = grad_out
        .data
        .iter()
        .zip(&output.data)
        .map(|(&g, &y)| if y > 0.0 { g } else { 0.0 })
        .collect();

    let mut grad_in = vec![0.0; if need_input_grad { c_in * side * side } else { 0 }];
    for o in 0..c_out {
        let go = &g[o * plane..(o + 1) * plane];
        grad_b[o] += go.iter().sum::<f64>();
        for i in 0..c_in {
            let src = &input.data[i * side * side..(i + 1) * side * side];
            for ky in 0..3 {
                let (y_lo, y_hi) = valid_range(ky, stride, side, out_side);
                for kx in 0..3 {
                    let widx = ((o * c_in + i) * 3 + ky) * 3 + kx;
                    let wv = weight[widx];
                    let (x_lo, x_hi) = valid_range(kx, stride, side, out_side);
                    let mut acc = 0.0;
                    for oy in y_lo..y_hi {
                        let iy = oy * stride + ky - 1;
                        let src_row = &src[iy * side..(iy + 1) * side];
                        let g_row = &go[oy * out_side..(oy + 1) * out_side];
                        for ox in x_lo..x_hi {
                            acc += g_row[ox] * src_row[ox * stride + kx - 1];
                        }
                        if need_input_grad {
                            let gi = &mut grad_in[i * side * side + iy * side..][..side];
                            for ox in x_lo..x_hi {
                                gi[ox * stride + kx - 1] += wv * g_row[ox];
                            }
                        }
                    }
                    grad_w[widx] += acc;
                }
            }
        }
    }
    FeatureMap {
        channels: c_in,
        side,
        data: grad_in,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_arch_shapes() {
        let arch = BackboneArch::tiny();
        assert_eq!(arch.feature_dim(), 64);
        assert_eq!(arch.stage_shapes(), vec![(8, 28), (16, 14), (64, 7)]);
    }

    #[test]
    fn valid_range_matches_brute_force() {
        for stride in 1..4 {
            for len in 1..12 {
                let out = conv_out_side(len, stride);
                for k in 0..3 {
                    let brute: Vec<usize> = (0..out)
                        .filter(|&o| {
                            let i = (o * stride + k) as isize - 1;
                            i >= 0 && (i as usize) < len
                        })
                        .collect();
                    let (lo, hi) = valid_range(k, stride, len, out);
                    assert_eq!((lo..hi).collect::<Vec<_>>(), brute, "s{stride} len{len} k{k}");
                }
            }
        }
    }

    #[test]
    fn conv_matches_naive_definition() {
        let mut rng = keyed_rng(5, &[]);
        let input = FeatureMap {
            channels: 2,
            side: 7,
            data: (0..98).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let weight: Vec<f64> = (0..3 * 2 * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bias = vec![0.1, -0.2, 0.05];
        for stride in [1, 2] {
            let out = conv3x3_relu(&input, &weight, &bias, 3, stride);
            let os = out.side;
            for o in 0..3 {
                for oy in 0..os {
                    for ox in 0..os {
                        let mut acc = bias[o];
                        for i in 0..2 {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = (oy * stride + ky) as isize - 1;
                                    let ix = (ox * stride + kx) as isize - 1;
                                    if iy < 0 || ix < 0 || iy >= 7 || ix >= 7 {
                                        continue;
                                    }
                                    acc += weight[((o * 2 + i) * 3 + ky) * 3 + kx]
                                        * input.data[i * 49 + iy as usize * 7 + ix as usize];
                                }
                            }
                        }
                        let got = out.data[o * os * os + oy * os + ox];
                        assert!((got - acc.max(0.0)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn random_init_is_seeded() {
        let a = BackboneAdapter::random(BackboneArch::tiny(), 3).unwrap();
        let b = BackboneAdapter::random(BackboneArch::tiny(), 3).unwrap();
        let c = BackboneAdapter::random(BackboneArch::tiny(), 4).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let bb = BackboneAdapter::random(BackboneArch::tiny(), 0).unwrap();
        let err = bb.forward(&ImageTensor::zeros([3, 48, 48])).err().unwrap();
        assert!(err.to_string().contains("[3, 224, 224]"), "{err}");
        let acts = bb.forward(&ImageTensor::zeros([3, 224, 224])).unwrap();
        assert_eq!(acts.output().channels, 64);
        assert_eq!(acts.output().side, 7);
    }
}
