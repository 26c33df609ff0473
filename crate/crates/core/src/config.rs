//! The single configuration document shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::SAMPLE_RATE;
use crate::features::{FeatureConfig, FeatureMode};
use crate::inference::InferenceModuleSpec;
use crate::neural::{ArchConfig, TrainConfig};
use crate::synth::CorpusConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus_dir: PathBuf,
    pub features_dir: PathBuf,
    pub models_dir: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            corpus_dir: "work/corpus".into(),
            features_dir: "work/features".into(),
            models_dir: "work/models".into(),
            reports_dir: "work/reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub inference: InferenceModuleSpec,
    pub target_fpr: f64,
    /// Modules evaluated by `eval --compare`.
    pub compare_modules: Vec<InferenceModuleSpec>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            inference: InferenceModuleSpec::mean(),
            target_fpr: 0.001,
            compare_modules: InferenceModuleSpec::standard_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    /// Worker threads for extraction and scoring; 0 uses every core.
    pub workers: usize,
    pub feature_mode: FeatureMode,
    pub synth: CorpusConfig,
    pub features: FeatureConfig,
    pub model: ArchConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.synth.validate().map_err(|e| invalid(&e))?;
        self.features.validate(SAMPLE_RATE).map_err(|e| invalid(&e))?;
        self.train.validate().map_err(|e| invalid(&e))?;
        match &self.model {
            ArchConfig::Mlp { hidden } if hidden.contains(&0) => {
                return Err(ConfigError::Invalid(format!("MLP hidden sizes {hidden:?} must be positive")));
            }
            ArchConfig::Lstm { cells, layers } if *cells == 0 || *layers == 0 => {
                return Err(ConfigError::Invalid("LSTM cells and layers must be positive".into()));
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.eval.target_fpr) {
            return Err(ConfigError::Invalid(format!("target_fpr {} outside [0, 1]", self.eval.target_fpr)));
        }
        if self.eval.compare_modules.is_empty() {
            return Err(ConfigError::Invalid("compare_modules must list at least one module".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::ModuleKind;
    use crate::neural::train::Truncation;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = PipelineConfig::from_toml_str("", "t").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.features.lfbe.num_filters, 64);
        assert_eq!(cfg.train.bptt_truncation_len, Truncation::Frames(64));
        assert_eq!(cfg.model, ArchConfig::Lstm { cells: 64, layers: 2 });
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_toml_str(&cfg.to_toml_string(), "t").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_parse() {
        let text = r#"
feature_mode = "lfbe+eng"
workers = 2

[model]
kind = "mlp"
hidden = [32, 16, 8]

[train]
epochs = 3
bptt_truncation_len = "full"

[eval]
inference = "window-100-ignore-last-50"
target_fpr = 0.01

[features.srh]
n_harm = 4
"#;
        let cfg = PipelineConfig::from_toml_str(text, "t").unwrap();
        assert_eq!(cfg.feature_mode, FeatureMode::LfbePlusEngineered);
        assert_eq!(cfg.model, ArchConfig::Mlp { hidden: [32, 16, 8] });
        assert_eq!(cfg.train.bptt_truncation_len, Truncation::Full);
        assert_eq!(cfg.eval.inference.kind, ModuleKind::Window(100));
        assert_eq!(cfg.features.srh.n_harm, 4);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(PipelineConfig::from_toml_str("colour = 1", "t"), Err(ConfigError::Parse { .. })));
        assert!(matches!(
            PipelineConfig::from_toml_str("[train]\nlearnig_rate = 1.0", "t"),
            Err(ConfigError::Parse { .. })
        ));
        assert!(matches!(
            PipelineConfig::from_toml_str("[synth]\nsplit_fractions = [0.5, 0.2, 0.2]", "t"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            PipelineConfig::from_toml_str("[eval]\ninference = \"median\"", "t"),
            Err(ConfigError::Parse { .. })
        ));
        assert!(matches!(
            PipelineConfig::from_toml_str("[train]\nbptt_truncation_len = 0", "t"),
            Err(ConfigError::Invalid(_))
        ));
    }
}
