//! Run configuration: one TOML document with a section per pipeline stage.
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/fer2013"
//!
//! [data]
//! path = "fer2013.csv"
//!
//! [split]
//! mode = "usage_column"
//!
//! [training]
//! max_epochs = 40
//! ```
//!
//! Relative paths resolve against the directory holding the config file. When
//! `INSIDEOUT_DATA_ROOT` is set, a relative dataset path resolves against it
//! instead. The top-level seed is copied into every section.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use insideout::model::ModelConfig;
use insideout::split::SplitSpec;
use insideout::trainer::TrainingConfig;
use insideout::transforms::AugmentConfig;
use serde::{Deserialize, Serialize};

pub const DATA_ROOT_ENV: &str = "INSIDEOUT_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("fer2013.csv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub split: SplitSpec,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            split: SplitSpec::default(),
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub data_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Reads `path`, applies overrides, resolves paths and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg = Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let data_root = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from);
        cfg.resolve(base, data_root.as_deref(), overrides)
    }

    pub fn resolve(
        mut self,
        base: &Path,
        data_root: Option<&Path>,
        overrides: &Overrides,
    ) -> anyhow::Result<Self> {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(p) = &overrides.data_path {
            self.data.path = p.clone();
        }
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
        if self.data.path.is_relative() {
            self.data.path = data_root.unwrap_or(base).join(&self.data.path);
        }
        if let Some(w) = &self.model.weights_path {
            if w.is_relative() {
                self.model.weights_path = Some(base.join(w));
            }
        }
        self.split.seed = self.seed;
        self.augment.seed = self.seed;
        self.model.seed = self.seed;
        self.training.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.split.validate()?;
        self.augment.validate()?;
        self.model.validate()?;
        self.training.validate()?;
        if self.output_dir.as_os_str().is_empty() {
            bail!("output_dir must not be empty");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use insideout::split::SplitMode;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.split.mode = SplitMode::UsageColumn;
        cfg.model.freeze_policy = insideout::FreezePolicy::PartialLastK(2);
        cfg.training.max_epochs = 3;
        cfg.training.patience = 2;
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn sections_and_overrides() {
        let text = r#"
            seed = 3
            output_dir = "out"
            [data]
            path = "faces.csv"
            [split]
            ratios = [0.7, 0.15, 0.15]
            [training]
            max_epochs = 5
            patience = 2
        "#;
        let cfg = RunConfig::from_toml(text)
            .unwrap()
            .resolve(
                Path::new("/cfg"),
                Some(Path::new("/data")),
                &Overrides {
                    seed: Some(9),
                    ..Overrides::default()
                },
            )
            .unwrap();
        assert_eq!(cfg.output_dir, Path::new("/cfg/out"));
        assert_eq!(cfg.data.path, Path::new("/data/faces.csv"));
        assert_eq!(cfg.split.ratios, [0.7, 0.15, 0.15]);
        assert_eq!(
            [cfg.split.seed, cfg.augment.seed, cfg.model.seed, cfg.training.seed],
            [9; 4]
        );
        assert_eq!(cfg.training.max_epochs, 5);
        assert_eq!(cfg.training.batch_size, 64);
    }

    #[test]
    fn invalid_sections_are_rejected() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        let bad = RunConfig::from_toml("[training]\nmin_lr = 1.0\ninitial_lr = 0.1").unwrap();
        assert!(bad.resolve(Path::new("."), None, &Overrides::default()).is_err());
    }
}
