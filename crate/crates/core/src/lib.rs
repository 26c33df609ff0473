//! Whisper vs. normal phonation detection.
//!
//! The crate covers the whole offline pipeline: WAV ingestion and framing
//! ([`audio`]), LFBE and engineered features ([`features`]), MLP and LSTM
//! frame classifiers trained from scratch ([`neural`]), utterance-level result
//! builders ([`inference`]), FPR-anchored evaluation ([`metrics`]), a
//! synthetic corpus generator ([`synth`]) and the subcommand drivers used by
//! the `whisperdet` binary ([`pipeline`]).

pub mod audio;
pub mod config;
pub mod features;
pub mod inference;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod synth;
