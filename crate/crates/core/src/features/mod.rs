//! Frame-level acoustic features: log mel filterbank energies with channel
//! mean subtraction, and the six engineered whisper cues (SRH, HFE, ACMAX).

mod acmax;
mod cms;
mod extract;
mod featfile;
mod hfe;
mod lfbe;
pub mod lpc;
mod matrix;
mod spectrum;
mod srh;

pub use acmax::{acmax, normalized_autocorrelation, AcmaxConfig, AcmaxOutput};
pub use cms::{channel_mean_subtract, GroupKey};
pub use extract::{extract_features, EngineeredRow, FeatureConfig, FeatureExtractor};
pub use featfile::{decode_features, encode_features, read_features, write_features, FEATURE_FILE_VERSION};
pub use hfe::{hfe, hfe_from_power, HfeConfig, HfeExtractor, HfeOutput};
pub use lfbe::{hz_to_mel, lfbe, mel_to_hz, LfbeConfig, LfbeExtractor, MelFilterbank};
pub use matrix::{FeatureLayout, FeatureMatrix, FeatureMode, ENGINEERED_BLOCKS};
pub use spectrum::{band_bins, bin_hz, parseval_energy, power_spectrum, SpectrumAnalyzer};
pub use srh::{srh, SrhConfig, SrhExtractor, SrhOutput};

use thiserror::Error;

use crate::audio::AudioError;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("invalid feature layout {0:?}")]
    InvalidLayout(String),
    #[error("dimension mismatch ({context}): expected {expected}, found {found}")]
    DimMismatch {
        expected: usize,
        found: usize,
        context: String,
    },
    #[error("non-finite feature in {utterance_id} at frame {frame}, column {column}")]
    NonFinite {
        utterance_id: String,
        frame: usize,
        column: usize,
    },
    #[error("channel group ({speaker_id}, {device_id}) has no frames")]
    EmptyGroup { speaker_id: String, device_id: String },
    #[error("corrupt feature file: {0}")]
    CorruptFeatureFile(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
