//! Facial emotion recognition on FER2013: dataset ingest, stratified
//! splitting, augmentation, a pretrained-backbone classifier with a
//! lightweight 7-way head, inverse-frequency weighted cross-entropy,
//! cosine-annealed Adam training with early stopping, and per-class
//! evaluation.

pub mod dataset;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod split;
pub mod synthetic;
pub mod trainer;
pub mod transforms;

pub use dataset::{
    class_histogram, parse_fer_csv, validate_dataset, ClassHistogram, EmotionLabel, GrayImage,
    LabeledDataset, Sample, Usage, ValidationReport, NUM_CLASSES,
};
pub use error::{Error, Result};
pub use loss::{compute_class_weights, weighted_cross_entropy, ClassWeights, Reduction};
pub use metrics::{
    accuracy_from_confusion, confusion_from_predictions, report_from_confusion,
    ClassificationReport, ConfusionMatrix,
};
pub use model::{build_model, predict_proba, Classifier, FreezePolicy, Model, ModelConfig, WeightsSource};
pub use split::{split_by_usage, split_dataset, split_stratified, DatasetSplit, SplitMode, SplitSpec};
pub use trainer::{
    cosine_lr, early_stop_update, evaluate_pass, run_training, EpochRecord, TrainingConfig,
    TrainingState,
};
pub use transforms::{preprocess_eval, preprocess_train, to_rgb, AugmentConfig, ImageTensor};
