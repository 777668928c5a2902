//! Fine-tuning loop: per-epoch cosine-annealed Adam over shuffled mini-batches,
//! validation after every epoch, early stopping on validation loss, and
//! checkpoint-on-best with resumable state.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassHistogram, LabeledDataset, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::loss::{softmax, weighted_cross_entropy, ClassWeights, Reduction};
use crate::model::{argmax, load_checkpoint, save_checkpoint, Classifier, Mode, Model};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{keyed_rng, stream};
use crate::split::DatasetSplit;
use crate::transforms::{preprocess_eval, preprocess_train, AugmentConfig, ImageTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub initial_lr: f64,
    pub min_lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub optimizer: AdamConfig,
    pub reduction: Reduction,
    /// Apply inverse-frequency class weights to the training loss.
    pub class_weighted: bool,
    /// Apply the augmentation chain to training samples.
    pub augment: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1e-3,
            min_lr: 1e-5,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            min_delta: 1e-4,
            seed: 0,
            optimizer: AdamConfig::default(),
            reduction: Reduction::WeightedMean,
            class_weighted: true,
            augment: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.min_lr >= 0.0 && self.min_lr < self.initial_lr) {
            return bad(format!(
                "need 0 <= min_lr < initial_lr, got {} and {}",
                self.min_lr, self.initial_lr
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1".into());
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return bad(format!(
                "need 1 <= patience <= max_epochs, got patience {}",
                self.patience
            ));
        }
        if !(self.min_delta >= 0.0) {
            return bad("min_delta must be >= 0".into());
        }
        Ok(())
    }
}

/// Learning rate of `epoch` on a half-cosine from `initial_lr` down to
/// `min_lr` at the final epoch.
pub fn cosine_lr(epoch: usize, cfg: &TrainingConfig) -> Result<f64> {
    if epoch >= cfg.max_epochs {
        return Err(Error::EpochOutOfRange {
            epoch,
            max_epochs: cfg.max_epochs,
        });
    }
    if cfg.max_epochs == 1 {
        return Ok(cfg.initial_lr);
    }
    let progress = epoch as f64 / (cfg.max_epochs - 1) as f64;
    let a = 0.5 * (1.0 + (PI * progress).cos());
    // Convex combination: a == 1 yields initial_lr and a == 0 yields min_lr exactly.
    let lr = cfg.min_lr * (1.0 - a) + cfg.initial_lr * a;
    Ok(lr.clamp(cfg.min_lr, cfg.initial_lr))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub lr: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub best_val_loss: f64,
    pub best_epoch: Option<usize>,
    pub epochs_since_improvement: usize,
    pub epochs_completed: usize,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl Default for TrainingState {
    fn default() -> Self {
        Self {
            best_val_loss: f64::INFINITY,
            best_epoch: None,
            epochs_since_improvement: 0,
            epochs_completed: 0,
            history: Vec::new(),
            stopped_early: false,
        }
    }
}

impl TrainingState {
    /// Records the validation loss of the next epoch; returns whether it
    /// counted as an improvement.
    pub fn update(&mut self, val_loss: f64, cfg: &TrainingConfig) -> bool {
        let epoch = self.epochs_completed;
        self.epochs_completed += 1;
        let improved = val_loss < self.best_val_loss - cfg.min_delta;
        if improved {
            self.best_val_loss = val_loss;
            self.best_epoch = Some(epoch);
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
        }
        if self.epochs_since_improvement >= cfg.patience {
            self.stopped_early = true;
        }
        improved
    }
}

pub fn early_stop_update(
    mut state: TrainingState,
    val_loss: f64,
    cfg: &TrainingConfig,
) -> TrainingState {
    state.update(val_loss, cfg);
    state
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub truth: usize,
    pub label: usize,
    pub confidence: f64,
    pub probabilities: [f64; NUM_CLASSES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    /// Unweighted mean cross-entropy.
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<Prediction>,
}

impl EvalOutcome {
    pub fn truths(&self) -> Vec<usize> {
        self.predictions.iter().map(|p| p.truth).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.predictions.iter().map(|p| p.label).collect()
    }
}

const EVAL_CHUNK: usize = 64;

/// Eval-mode pass with deterministic preprocessing. Takes the model by shared
/// reference, so parameters cannot change.
pub fn evaluate_pass<C: Classifier + ?Sized>(
    model: &C,
    ds: &LabeledDataset,
    indices: &[usize],
) -> Result<EvalOutcome> {
    if indices.is_empty() {
        return Err(Error::EmptyPartition("evaluation"));
    }
    let mut predictions = Vec::with_capacity(indices.len());
    let mut probs_all = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(EVAL_CHUNK) {
        let inputs = chunk
            .par_iter()
            .map(|&i| sample_at(ds, i).map(|s| preprocess_eval(&s.image)))
            .collect::<Result<Vec<_>>>()?;
        let logits = model.logits(&inputs)?;
        for (&i, z) in chunk.iter().zip(&logits) {
            let p = softmax(z);
            let label = argmax(&p);
            predictions.push(Prediction {
                index: i,
                truth: ds.samples()[i].label.index(),
                label,
                confidence: p[label],
                probabilities: p,
            });
            probs_all.push(p);
        }
    }
    let truths: Vec<usize> = predictions.iter().map(|p| p.truth).collect();
    let unit = ClassWeights::uniform(ClassHistogram::from_labels(
        indices.iter().map(|&i| ds.samples()[i].label),
    )?);
    let loss = weighted_cross_entropy(&probs_all, &truths, &unit, Reduction::WeightedMean)?;
    let correct = predictions.iter().filter(|p| p.label == p.truth).count();
    Ok(EvalOutcome {
        loss,
        accuracy: correct as f64 / predictions.len() as f64,
        predictions,
    })
}

fn sample_at(ds: &LabeledDataset, i: usize) -> Result<&crate::dataset::Sample> {
    ds.get(i)
        .ok_or_else(|| Error::InvalidInput(format!("sample index {i} out of range")))
}

/// Resumable trainer state written next to the last-epoch weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResumeState {
    pub next_epoch: usize,
    pub state: TrainingState,
    pub optimizer: Adam,
    pub config: TrainingConfig,
}

pub const BEST_CHECKPOINT_DIR: &str = "checkpoint";
pub const LAST_CHECKPOINT_DIR: &str = "checkpoint_last";
pub const RESUME_FILE: &str = "trainer_state.json";

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Where `checkpoint/` and `checkpoint_last/` are written; in-memory only
    /// when `None`.
    pub output_dir: Option<PathBuf>,
    /// A `checkpoint_last/` directory to continue from.
    pub resume_from: Option<PathBuf>,
    pub on_epoch: Option<Box<dyn FnMut(&EpochRecord) + 'a>>,
}

pub struct TrainingOutcome {
    /// Weights from the best validation epoch.
    pub model: Model,
    pub state: TrainingState,
}

pub fn run_training(
    ds: &LabeledDataset,
    split: &DatasetSplit,
    model: Model,
    augment: &AugmentConfig,
    weights: &ClassWeights,
    cfg: &TrainingConfig,
    mut options: TrainOptions<'_>,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    augment.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }
    if split.val.is_empty() {
        return Err(Error::EmptyPartition("val"));
    }
    let unit;
    let train_weights = if cfg.class_weighted {
        weights
    } else {
        unit = ClassWeights::uniform(weights.source_histogram);
        &unit
    };

    let (mut model, mut state, mut adam, start_epoch) = match &options.resume_from {
        Some(dir) => {
            let resumed = load_resume(dir)?;
            (
                load_checkpoint(dir)?,
                resumed.state,
                resumed.optimizer,
                resumed.next_epoch,
            )
        }
        None => {
            let adam = Adam::new(cfg.optimizer, &model.params());
            (model, TrainingState::default(), adam, 0)
        }
    };
    let mut best_model = match (&options.resume_from, &options.output_dir) {
        (Some(_), Some(out)) if out.join(BEST_CHECKPOINT_DIR).join("model.json").is_file() => {
            load_checkpoint(out.join(BEST_CHECKPOINT_DIR))?
        }
        _ => model.clone(),
    };

    for epoch in start_epoch..cfg.max_epochs {
        if state.stopped_early {
            break;
        }
        let started = Instant::now();
        let lr = cosine_lr(epoch, cfg)?;

        let mut order = split.train.clone();
        order.shuffle(&mut keyed_rng(cfg.seed, &[stream::SHUFFLE, epoch as u64]));

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let inputs: Vec<ImageTensor> = chunk
                .par_iter()
                .map(|&i| {
                    let s = sample_at(ds, i)?;
                    Ok(if cfg.augment {
                        preprocess_train(&s.image, augment, i as u64, epoch as u64)
                    } else {
                        preprocess_eval(&s.image)
                    })
                })
                .collect::<Result<_>>()?;
            let targets: Vec<usize> = chunk.iter().map(|&i| ds.samples()[i].label.index()).collect();
            let out = model.loss_and_grads(
                &inputs,
                &targets,
                train_weights,
                cfg.reduction,
                Mode::Train {
                    seed: cfg.seed,
                    epoch: epoch as u64,
                    batch: b as u64,
                },
            )?;
            if !out.loss.is_finite() || out.grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    lr,
                });
            }
            loss_sum += out.loss * chunk.len() as f64;
            correct += out
                .logits
                .iter()
                .zip(&targets)
                .filter(|(z, &y)| argmax(&z[..]) == y)
                .count();
            adam.step(&mut model.params_mut(), &out.grads, lr);
        }

        let val = evaluate_pass(&model, ds, &split.val)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            val_loss: val.loss,
            train_acc: correct as f64 / order.len() as f64,
            val_acc: val.accuracy,
            lr,
            wall_time: started.elapsed().as_secs_f64(),
        };
        state.history.push(record.clone());
        let improved = state.update(val.loss, cfg);
        if improved {
            best_model = model.clone();
            if let Some(out) = &options.output_dir {
                save_checkpoint(&best_model, out.join(BEST_CHECKPOINT_DIR))?;
            }
        }
        if let Some(out) = &options.output_dir {
            let last = out.join(LAST_CHECKPOINT_DIR);
            save_checkpoint(&model, &last)?;
            save_resume(
                &last,
                &ResumeState {
                    next_epoch: epoch + 1,
                    state: state.clone(),
                    optimizer: adam.clone(),
                    config: cfg.clone(),
                },
            )?;
        }
        if let Some(cb) = options.on_epoch.as_mut() {
            cb(&record);
        }
    }

    Ok(TrainingOutcome {
        model: best_model,
        state,
    })
}

fn save_resume(dir: &Path, resume: &ResumeState) -> Result<()> {
    let path = dir.join(RESUME_FILE);
    fs::write(&path, serde_json::to_string(resume)?).map_err(|e| Error::io(&path, e))
}

pub fn load_resume(dir: impl AsRef<Path>) -> Result<ResumeState> {
    let path = dir.as_ref().join(RESUME_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
