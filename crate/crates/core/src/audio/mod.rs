//! Audio ingestion: WAV decoding, labeled dataset manifests and framing.

mod framing;
mod manifest;
mod wav;

pub use framing::{frame_signal, hanning, FrameSequence, FrameSpec, WindowKind};
pub use manifest::{load_manifest, write_manifest, DatasetManifest, ManifestEntry, Split};
pub use wav::{decode_wav, encode_wav, SAMPLE_RATE};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("{0}: not a RIFF/WAVE file")]
    NotWav(String),
    #[error("{path}: unsupported format ({reason})")]
    UnsupportedFormat { path: String, reason: String },
    #[error("{0}: data chunk shorter than its header claims")]
    Truncated(String),
    #[error("utterance {utterance_id}: {num_samples} samples is shorter than one {frame_len}-sample frame")]
    TooShort {
        utterance_id: String,
        num_samples: usize,
        frame_len: usize,
    },
    #[error("invalid frame spec: {0}")]
    InvalidFrameSpec(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate utterance id {utterance_id:?}")]
    DuplicateUtteranceId {
        path: String,
        line: usize,
        utterance_id: String,
    },
    #[error("{path}:{line}: unknown label {label:?} (expected whisper or normal)")]
    UnknownLabel {
        path: String,
        line: usize,
        label: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Utterance-level phonation label. Frame targets are derived from it by
/// propagation and are never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Whisper,
    Normal,
}

impl Label {
    /// Class index in the two-way softmax output.
    pub fn class_index(self) -> usize {
        match self {
            Label::Whisper => 0,
            Label::Normal => 1,
        }
    }

    pub fn is_whisper(self) -> bool {
        self == Label::Whisper
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Whisper => "whisper",
            Label::Normal => "normal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "whisper" => Ok(Label::Whisper),
            "normal" => Ok(Label::Normal),
            _ => Err(s.to_string()),
        }
    }
}

/// Decoded mono utterance with its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioUtterance {
    /// Amplitudes in [-1, 1].
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub utterance_id: String,
    pub speaker_id: String,
    /// May be empty.
    pub device_id: String,
    /// `None` for audio decoded outside a labeled manifest.
    pub label: Option<Label>,
}

impl AudioUtterance {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}
