//! Backbone + classification head composite.

mod backbone;
mod checkpoint;
mod head;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use backbone::{Activations, BackboneAdapter, BackboneArch, FeatureMap, StageSpec, WeightsSource};
pub use checkpoint::{load_backbone, load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_FORMAT};
pub use head::ClassifierHead;

use crate::dataset::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::loss::{softmax, weighted_cross_entropy_with_logits, ClassWeights, Reduction};
use crate::transforms::ImageTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: String, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            name,
            shape,
            data,
            trainable: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezePolicy {
    HeadOnly,
    #[default]
    FullFineTune,
    /// Only the last `k` backbone stages (plus the head) train.
    PartialLastK(usize),
}

impl FreezePolicy {
    pub fn stage_flags(self, stages: usize) -> Vec<bool> {
        match self {
            FreezePolicy::HeadOnly => vec![false; stages],
            FreezePolicy::FullFineTune => vec![true; stages],
            FreezePolicy::PartialLastK(k) => (0..stages).map(|i| i + k >= stages).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub dropout_rate: f64,
    pub weights_source: WeightsSource,
    /// Directory holding exported backbone weights (`model.json` + `params/`).
    pub weights_path: Option<PathBuf>,
    pub freeze_policy: FreezePolicy,
    pub num_classes: usize,
    pub backbone: BackboneArch,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dropout_rate: 0.3,
            weights_source: WeightsSource::RandomInit,
            weights_path: None,
            freeze_policy: FreezePolicy::FullFineTune,
            num_classes: NUM_CLASSES,
            backbone: BackboneArch::tiny(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes != NUM_CLASSES {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be {NUM_CLASSES}, got {}",
                self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        self.backbone.validate()
    }
}

/// Forward-pass mode. Training mode enables dropout with masks keyed by
/// `(seed, epoch, batch, position in batch)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64, epoch: u64, batch: u64 },
}

impl Mode {
    fn dropout_keys(self, position: usize) -> Option<(u64, [u64; 3])> {
        match self {
            Mode::Eval => None,
            Mode::Train { seed, epoch, batch } => Some((seed, [epoch, batch, position as u64])),
        }
    }
}

/// Anything that maps preprocessed images to class logits.
pub trait Classifier: Sync {
    fn logits(&self, batch: &[ImageTensor]) -> Result<Vec<[f64; NUM_CLASSES]>>;
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    backbone: BackboneAdapter,
    head: ClassifierHead,
}

/// Loss, logits and parameter gradients of one batch.
pub struct BatchOutcome {
    pub loss: f64,
    pub logits: Vec<[f64; NUM_CLASSES]>,
    pub grads: Vec<Vec<f64>>,
}

pub fn build_model(cfg: &ModelConfig) -> Result<Model> {
    cfg.validate()?;
    let mut config = cfg.clone();
    let mut backbone = match cfg.weights_source {
        WeightsSource::RandomInit => BackboneAdapter::random(cfg.backbone.clone(), cfg.seed)?,
        WeightsSource::ImageNetPretrained => {
            let path = cfg.weights_path.clone().unwrap_or_else(|| PathBuf::from("pretrained"));
            let bb = load_backbone(&path)?;
            config.backbone = bb.arch().clone();
            bb
        }
    };
    backbone.set_trainable(cfg.freeze_policy.stage_flags(backbone.num_stages()));
    let head = ClassifierHead::new(backbone.feature_dim(), cfg.dropout_rate, cfg.seed);
    Ok(Model {
        config,
        backbone,
        head,
    })
}

impl Model {
    pub(crate) fn from_parts(
        config: ModelConfig,
        backbone: BackboneAdapter,
        head: ClassifierHead,
    ) -> Self {
        Self {
            config,
            backbone,
            head,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn backbone(&self) -> &BackboneAdapter {
        &self.backbone
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    /// Backbone parameters first, then head weight and bias.
    pub fn params(&self) -> Vec<&Param> {
        self.backbone
            .params()
            .iter()
            .chain([&self.head.weight, &self.head.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let Model { backbone, head, .. } = self;
        backbone
            .params_mut()
            .iter_mut()
            .chain([&mut head.weight, &mut head.bias])
            .collect()
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| vec![0.0; p.data.len()]).collect()
    }

    pub fn forward(&self, batch: &[ImageTensor], mode: Mode) -> Result<Vec<[f64; NUM_CLASSES]>> {
        batch
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let acts = self.backbone.forward(x)?;
                let keys = mode.dropout_keys(i);
                let (logits, _) = self
                    .head
                    .forward(acts.output(), keys.as_ref().map(|(s, k)| (*s, &k[..])));
                Ok(logits)
            })
            .collect()
    }

    pub fn predict_proba(&self, batch: &[ImageTensor]) -> Result<Vec<[f64; NUM_CLASSES]>> {
        predict_proba(self, batch)
    }

    /// Forward, weighted cross-entropy and backward over one batch. Gradients
    /// are summed in batch order, so the result does not depend on the
    /// number of worker threads.
    pub fn loss_and_grads(
        &self,
        batch: &[ImageTensor],
        targets: &[usize],
        weights: &ClassWeights,
        reduction: Reduction,
        mode: Mode,
    ) -> Result<BatchOutcome> {
        if batch.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: batch.len(),
                right: targets.len(),
            });
        }
        let traces = batch
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let acts = self.backbone.forward(x)?;
                let keys = mode.dropout_keys(i);
                let (logits, trace) = self
                    .head
                    .forward(acts.output(), keys.as_ref().map(|(s, k)| (*s, &k[..])));
                Ok((acts, trace, logits))
            })
            .collect::<Result<Vec<_>>>()?;

        let logits: Vec<[f64; NUM_CLASSES]> = traces.iter().map(|t| t.2).collect();
        let (loss, grad_logits) =
            weighted_cross_entropy_with_logits(&logits, targets, weights, reduction)?;

        let n_backbone = self.backbone.params().len();
        let per_sample: Vec<Vec<Vec<f64>>> = traces
            .par_iter()
            .zip(grad_logits.par_iter())
            .map(|((acts, trace, _), g)| {
                let mut grads = self.zero_grads();
                let (bb, head) = grads.split_at_mut(n_backbone);
                let (hw, hb) = head.split_at_mut(1);
                let g_features = self.head.backward(trace, g, &mut hw[0], &mut hb[0]);
                self.backbone.backward(acts, g_features, bb);
                grads
            })
            .collect();

        let mut grads = self.zero_grads();
        for sample in &per_sample {
            for (acc, g) in grads.iter_mut().zip(sample) {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        Ok(BatchOutcome {
            loss,
            logits,
            grads,
        })
    }
}

impl Classifier for Model {
    fn logits(&self, batch: &[ImageTensor]) -> Result<Vec<[f64; NUM_CLASSES]>> {
        self.forward(batch, Mode::Eval)
    }
}

pub fn predict_proba<C: Classifier + ?Sized>(
    model: &C,
    batch: &[ImageTensor],
) -> Result<Vec<[f64; NUM_CLASSES]>> {
    Ok(model.logits(batch)?.iter().map(softmax).collect())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
