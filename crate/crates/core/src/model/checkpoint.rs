//! Checkpoint directories: `model.json` (config, label map, normalization
//! constants, parameter index) plus one little-endian f64 blob per
//! parameter under `params/`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackboneAdapter, ClassifierHead, Model, ModelConfig, Param, WeightsSource};
use crate::dataset::EmotionLabel;
use crate::error::{Error, Result};
use crate::transforms::{IMAGENET_MEAN, IMAGENET_STD, MODEL_SIDE};

pub const CHECKPOINT_FORMAT: &str = "insideout-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
    pub input_side: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub config: ModelConfig,
    /// Class names in native index order.
    pub labels: Vec<String>,
    pub normalization: Normalization,
    pub params: Vec<ParamEntry>,
}

fn canonical_labels() -> Vec<String> {
    EmotionLabel::ALL.iter().map(|l| l.name().to_string()).collect()
}

pub fn save_checkpoint(model: &Model, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let params_dir = dir.join("params");
    fs::create_dir_all(&params_dir).map_err(|e| Error::io(&params_dir, e))?;

    let mut entries = Vec::new();
    for p in model.params() {
        let file = format!("params/{}.f64", p.name);
        let bytes: Vec<u8> = p.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(ParamEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            file,
        });
    }

    let meta = CheckpointMeta {
        format: CHECKPOINT_FORMAT.to_string(),
        config: model.config().clone(),
        labels: canonical_labels(),
        normalization: Normalization {
            mean: IMAGENET_MEAN,
            std: IMAGENET_STD,
            input_side: MODEL_SIDE,
        },
        params: entries,
    };
    let path = dir.join("model.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
}

fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let path = dir.join("model.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    if meta.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format `{}`",
            meta.format
        )));
    }
    if meta.labels != canonical_labels() {
        return Err(Error::Checkpoint(format!(
            "label map mismatch: checkpoint has {:?}, expected {:?}",
            meta.labels,
            canonical_labels()
        )));
    }
    if meta.normalization.mean != IMAGENET_MEAN
        || meta.normalization.std != IMAGENET_STD
        || meta.normalization.input_side != MODEL_SIDE
    {
        return Err(Error::Checkpoint("normalization constants differ from this build".into()));
    }
    Ok(meta)
}

fn read_params(dir: &Path, entries: &[ParamEntry]) -> Result<Vec<Param>> {
    entries
        .iter()
        .map(|e| {
            let path = dir.join(&e.file);
            let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
            let expected = e.shape.iter().product::<usize>();
            if bytes.len() != expected * 8 {
                return Err(Error::Checkpoint(format!(
                    "{}: expected {} values, found {} bytes",
                    e.file,
                    expected,
                    bytes.len()
                )));
            }
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            Ok(Param::new(e.name.clone(), e.shape.clone(), data))
        })
        .collect()
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Model> {
    let dir = dir.as_ref();
    let meta = read_meta(dir)?;
    meta.config.validate()?;
    let mut params = read_params(dir, &meta.params)?;
    if params.len() < 2 {
        return Err(Error::Checkpoint("checkpoint has no head parameters".into()));
    }
    let bias = params.pop().expect("len checked");
    let weight = params.pop().expect("len checked");
    if weight.name != "head.weight" || bias.name != "head.bias" {
        return Err(Error::Checkpoint("head parameters missing or out of order".into()));
    }
    let mut backbone = BackboneAdapter::from_params(
        meta.config.backbone.clone(),
        meta.config.weights_source,
        params,
    )?;
    backbone.set_trainable(meta.config.freeze_policy.stage_flags(backbone.num_stages()));
    let mut head = ClassifierHead::new(backbone.feature_dim(), meta.config.dropout_rate, 0);
    if head.weight.shape != weight.shape || head.bias.shape != bias.shape {
        return Err(Error::ShapeMismatch {
            expected: format!("head {:?}", head.weight.shape),
            actual: format!("head {:?}", weight.shape),
        });
    }
    head.weight.data = weight.data;
    head.bias.data = bias.data;
    Ok(Model::from_parts(meta.config, backbone, head))
}

/// Backbone parameters of an exported checkpoint, for use as pretrained
/// initialization.
pub fn load_backbone(dir: impl AsRef<Path>) -> Result<BackboneAdapter> {
    let dir = dir.as_ref();
    if !dir.join("model.json").is_file() {
        return Err(Error::MissingPretrainedWeights {
            path: dir.to_path_buf(),
        });
    }
    let meta = read_meta(dir)?;
    let entries: Vec<ParamEntry> = meta
        .params
        .into_iter()
        .filter(|e| e.name.starts_with("backbone."))
        .collect();
    let params = read_params(dir, &entries)?;
    BackboneAdapter::from_params(
        meta.config.backbone,
        WeightsSource::ImageNetPretrained,
        params,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, Mode};
    use crate::transforms::ImageTensor;

    #[test]
    fn round_trip_preserves_parameters_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let model = build_model(&ModelConfig {
            seed: 12,
            ..Default::default()
        })
        .unwrap();
        save_checkpoint(&model, dir.path()).unwrap();
        let loaded = load_checkpoint(dir.path()).unwrap();
        assert_eq!(loaded.params(), model.params());
        let x = vec![ImageTensor::zeros([3, 224, 224])];
        assert_eq!(
            loaded.forward(&x, Mode::Eval).unwrap(),
            model.forward(&x, Mode::Eval).unwrap()
        );
    }

    #[test]
    fn label_map_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let model = build_model(&ModelConfig::default()).unwrap();
        save_checkpoint(&model, dir.path()).unwrap();
        let path = dir.path().join("model.json");
        let text = fs::read_to_string(&path).unwrap().replace("\"Sadness\"", "\"Sad\"");
        fs::write(&path, text).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(err.to_string().contains("label map mismatch"), "{err}");
    }

    #[test]
    fn exported_backbone_seeds_a_pretrained_build() {
        let dir = tempfile::tempdir().unwrap();
        let donor = build_model(&ModelConfig {
            seed: 99,
            ..Default::default()
        })
        .unwrap();
        save_checkpoint(&donor, dir.path()).unwrap();
        let model = build_model(&ModelConfig {
            weights_source: WeightsSource::ImageNetPretrained,
            weights_path: Some(dir.path().to_path_buf()),
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(model.backbone().params(), donor.backbone().params());
        assert_eq!(
            model.backbone().weights_source(),
            WeightsSource::ImageNetPretrained
        );
        assert_ne!(model.head().weight, donor.head().weight);
    }
}
