use serde::{Deserialize, Serialize};

use super::acmax::{acmax, AcmaxConfig};
use super::hfe::{HfeConfig, HfeExtractor};
use super::lfbe::{LfbeConfig, LfbeExtractor};
use super::srh::{SrhConfig, SrhExtractor};
use super::{FeatureError, FeatureLayout, FeatureMatrix, FeatureMode};
use crate::audio::{frame_signal, AudioUtterance, FrameSpec, WindowKind};

/// Every knob that changes extracted feature values. A model embeds a
/// snapshot of this so inference can refuse mismatched features.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub frame: FrameSpec,
    pub lfbe: LfbeConfig,
    pub srh: SrhConfig,
    pub hfe: HfeConfig,
    pub acmax: AcmaxConfig,
}

impl FeatureConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<(), FeatureError> {
        self.frame.validate()?;
        let len = self.frame.frame_len_samples(sample_rate)?;
        self.lfbe.validate(sample_rate, len)?;
        self.srh.validate(sample_rate, len)?;
        self.hfe.validate(sample_rate, len)?;
        self.acmax.validate(sample_rate, len)?;
        Ok(())
    }

    /// Canonical JSON used for the snapshot comparison.
    pub fn snapshot(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn layout(&self, mode: FeatureMode) -> FeatureLayout {
        FeatureLayout::for_mode(mode, self.lfbe.num_filters)
    }
}

/// Reusable per-rate extractor (FFT plans and filterbank built once).
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    sample_rate: u32,
    lfbe: LfbeExtractor,
    srh: SrhExtractor,
    hfe: HfeExtractor,
}

/// Per-frame engineered values in layout order.
pub type EngineeredRow = [f64; 6];

impl FeatureExtractor {
    pub fn new(cfg: &FeatureConfig, sample_rate: u32) -> Result<Self, FeatureError> {
        cfg.validate(sample_rate)?;
        Ok(FeatureExtractor {
            cfg: cfg.clone(),
            sample_rate,
            lfbe: LfbeExtractor::new(&cfg.lfbe, sample_rate),
            srh: SrhExtractor::new(&cfg.srh, sample_rate),
            hfe: HfeExtractor::new(&cfg.hfe, sample_rate),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// SRH, HFE ratio, HFE entropy, ACMAX peak value / lag / mean distance
    /// for one raw frame.
    pub fn engineered(&self, raw: &[f64]) -> Result<EngineeredRow, FeatureError> {
        let s = self.srh.frame(raw);
        let h = self.hfe.frame(raw);
        let a = acmax(raw, &self.cfg.acmax, self.sample_rate)?;
        Ok([
            s.value,
            h.ratio,
            h.low_band_entropy,
            a.peak_value,
            a.peak_lag,
            a.mean_peak_distance,
        ])
    }

    pub fn extract(&self, u: &AudioUtterance, mode: FeatureMode) -> Result<FeatureMatrix, FeatureError> {
        if u.sample_rate != self.sample_rate {
            return Err(FeatureError::InvalidConfig(format!(
                "extractor built for {} Hz, utterance {} is {} Hz",
                self.sample_rate, u.utterance_id, u.sample_rate
            )));
        }
        let windowed = frame_signal(u, &self.cfg.frame)?;
        let mut rows: Vec<Vec<f64>> = windowed.iter().map(|f| self.lfbe.frame(f)).collect();
        if mode == FeatureMode::LfbePlusEngineered {
            let raw = frame_signal(u, &self.cfg.frame.with_window(WindowKind::Rectangular))?;
            for (row, frame) in rows.iter_mut().zip(raw.iter()) {
                row.extend_from_slice(&self.engineered(frame)?);
            }
        }
        FeatureMatrix::from_rows(u.utterance_id.clone(), self.cfg.layout(mode), rows)
    }
}

/// One-shot extraction; see [`FeatureExtractor`] for batch use.
pub fn extract_features(u: &AudioUtterance, mode: FeatureMode, cfg: &FeatureConfig) -> Result<FeatureMatrix, FeatureError> {
    FeatureExtractor::new(cfg, u.sample_rate)?.extract(u, mode)
}
