//! Frame classifiers (MLP and LSTM), their training loop, gradient checking
//! and the model file format.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::Label;
use crate::features::FeatureMatrix;

pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod lstm;
pub mod math;
pub mod mlp;
pub mod model_file;
pub mod train;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use loss::cross_entropy_loss;
pub use lstm::{Lstm, LstmState};
pub use mlp::Mlp;
pub use model_file::{load_model, save_model, ModelFile, Normalization, MODEL_FILE_VERSION};
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("utterance {0} has no frames")]
    EmptySequence(String),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("cross-validation set is empty")]
    EmptyCvSet,
    #[error("utterance {0} has no label")]
    MissingLabel(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whisper-class posterior for every frame of one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTrajectory {
    pub utterance_id: String,
    pub p_whisper: Vec<f64>,
}

impl PosteriorTrajectory {
    pub fn new(utterance_id: impl Into<String>, p_whisper: Vec<f64>) -> Self {
        PosteriorTrajectory {
            utterance_id: utterance_id.into(),
            p_whisper,
        }
    }

    pub fn len(&self) -> usize {
        self.p_whisper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_whisper.is_empty()
    }
}

/// Architecture selection as written in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ArchConfig {
    Mlp {
        #[serde(default = "default_mlp_hidden")]
        hidden: [usize; 3],
    },
    Lstm {
        #[serde(default = "default_lstm_cells")]
        cells: usize,
        #[serde(default = "default_lstm_layers")]
        layers: usize,
    },
}

fn default_mlp_hidden() -> [usize; 3] {
    [128, 128, 64]
}

fn default_lstm_cells() -> usize {
    64
}

fn default_lstm_layers() -> usize {
    2
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig::Lstm {
            cells: default_lstm_cells(),
            layers: default_lstm_layers(),
        }
    }
}

impl ArchConfig {
    pub fn default_mlp() -> Self {
        ArchConfig::Mlp {
            hidden: default_mlp_hidden(),
        }
    }

    pub fn build<R: Rng>(&self, input_dim: usize, rng: &mut R) -> Result<Model, NeuralError> {
        match self {
            ArchConfig::Mlp { hidden } => {
                let dims = [input_dim, hidden[0], hidden[1], hidden[2], 2];
                Ok(Model::Mlp(Mlp::init(&dims, rng)?))
            }
            ArchConfig::Lstm { cells, layers } => Ok(Model::Lstm(Lstm::init(input_dim, *cells, *layers, rng)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Mlp(Mlp),
    Lstm(Lstm),
}

impl Model {
    pub fn arch(&self) -> ArchConfig {
        match self {
            Model::Mlp(m) => ArchConfig::Mlp {
                hidden: [m.dims()[1], m.dims()[2], m.dims()[3]],
            },
            Model::Lstm(m) => ArchConfig::Lstm {
                cells: m.hidden(),
                layers: m.layers(),
            },
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Mlp(m) => m.input_dim(),
            Model::Lstm(m) => m.input_dim(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Model::Mlp(m) => m.params(),
            Model::Lstm(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Model::Mlp(m) => m.params_mut(),
            Model::Lstm(m) => m.params_mut(),
        }
    }

    pub fn param_blocks(&self) -> Vec<(String, Range<usize>)> {
        match self {
            Model::Mlp(m) => m.param_blocks(),
            Model::Lstm(m) => m.param_blocks(),
        }
    }

    pub fn posteriors(&self, x: &FeatureMatrix) -> Result<PosteriorTrajectory, NeuralError> {
        let p = match self {
            Model::Mlp(m) => {
                if x.dim() != m.input_dim() {
                    return Err(NeuralError::DimMismatch {
                        expected: m.input_dim(),
                        found: x.dim(),
                    });
                }
                if x.num_frames() == 0 {
                    return Err(NeuralError::EmptySequence(x.utterance_id.clone()));
                }
                x.rows().map(|r| m.forward(r).map(|p| p[0])).collect::<Result<Vec<_>, _>>()?
            }
            Model::Lstm(m) => m.posteriors(x)?,
        };
        Ok(PosteriorTrajectory::new(x.utterance_id.clone(), p))
    }

    /// Adds the gradient of the summed frame loss over `x` to `grad` and
    /// returns that sum. `truncation` only affects the LSTM.
    pub fn accumulate_gradient(&self, x: &FeatureMatrix, label: Label, truncation: Option<usize>, grad: &mut [f64]) -> Result<f64, NeuralError> {
        match self {
            Model::Mlp(m) => {
                let mut total = 0.0;
                for row in x.rows() {
                    total += m.accumulate_frame_gradient(row, label, grad)?;
                }
                Ok(total)
            }
            Model::Lstm(m) => m.accumulate_gradient(x, label, truncation, grad),
        }
    }
}
