use serde::{Deserialize, Serialize};

use super::spectrum::{bin_hz, SpectrumAnalyzer};
use super::FeatureError;
use crate::audio::FrameSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LfbeConfig {
    pub num_filters: usize,
    pub fft_size: usize,
    pub mel_low_hz: f64,
    /// `None` means the Nyquist frequency.
    pub mel_high_hz: Option<f64>,
    pub log_floor: f64,
}

impl Default for LfbeConfig {
    fn default() -> Self {
        LfbeConfig {
            num_filters: 64,
            fft_size: 512,
            mel_low_hz: 0.0,
            mel_high_hz: None,
            log_floor: 1e-10,
        }
    }
}

impl LfbeConfig {
    pub fn high_hz(&self, sample_rate: u32) -> f64 {
        self.mel_high_hz.unwrap_or(sample_rate as f64 / 2.0)
    }

    pub fn validate(&self, sample_rate: u32, frame_len: usize) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::InvalidConfig(m));
        if self.num_filters == 0 {
            return bad("lfbe.num_filters must be >= 1".into());
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < frame_len {
            return bad(format!(
                "lfbe.fft_size {} must be a power of two >= frame length {frame_len}",
                self.fft_size
            ));
        }
        let high = self.high_hz(sample_rate);
        if !(self.mel_low_hz >= 0.0 && self.mel_low_hz < high && high <= sample_rate as f64 / 2.0) {
            return bad(format!(
                "need 0 <= mel_low_hz ({}) < mel_high_hz ({high}) <= sample_rate/2",
                self.mel_low_hz
            ));
        }
        if !(self.log_floor > 0.0) {
            return bad("lfbe.log_floor must be positive".into());
        }
        Ok(())
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on mel-equispaced corner frequencies, stored sparsely
/// as (first bin, weights).
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    filters: Vec<(usize, Vec<f64>)>,
    num_bins: usize,
}

impl MelFilterbank {
    pub fn new(cfg: &LfbeConfig, sample_rate: u32) -> Self {
        let num_bins = cfg.fft_size / 2 + 1;
        let lo = hz_to_mel(cfg.mel_low_hz);
        let hi = hz_to_mel(cfg.high_hz(sample_rate));
        let corners: Vec<f64> = (0..cfg.num_filters + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.num_filters + 1) as f64))
            .collect();

        let filters = corners
            .windows(3)
            .map(|c| {
                let (left, center, right) = (c[0], c[1], c[2]);
                let mut first = None;
                let mut weights = Vec::new();
                for b in 0..num_bins {
                    let f = bin_hz(b, cfg.fft_size, sample_rate);
                    let w = if f > left && f <= center {
                        (f - left) / (center - left)
                    } else if f > center && f < right {
                        (right - f) / (right - center)
                    } else {
                        0.0
                    };
                    if w > 0.0 {
                        first.get_or_insert(b);
                        weights.push(w);
                    } else if first.is_some() {
                        break;
                    }
                }
                (first.unwrap_or(0), weights)
            })
            .collect();
        MelFilterbank { filters, num_bins }
    }

    pub fn num_filters(&self) -> usize {
        self.filters.len()
    }

    /// Filter energies for one power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        debug_assert_eq!(power.len(), self.num_bins);
        self.filters
            .iter()
            .map(|(first, w)| w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Dense `[num_filters x num_bins]` weight matrix.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        self.filters
            .iter()
            .map(|(first, w)| {
                let mut row = vec![0.0; self.num_bins];
                row[*first..*first + w.len()].copy_from_slice(w);
                row
            })
            .collect()
    }
}

/// Log mel filterbank energies, one row per frame.
pub struct LfbeExtractor {
    bank: MelFilterbank,
    analyzer: SpectrumAnalyzer,
    log_floor: f64,
}

impl LfbeExtractor {
    pub fn new(cfg: &LfbeConfig, sample_rate: u32) -> Self {
        LfbeExtractor {
            bank: MelFilterbank::new(cfg, sample_rate),
            analyzer: SpectrumAnalyzer::new(cfg.fft_size),
            log_floor: cfg.log_floor,
        }
    }

    pub fn bank(&self) -> &MelFilterbank {
        &self.bank
    }

    /// Features for one already-windowed frame.
    pub fn frame(&self, windowed: &[f64]) -> Vec<f64> {
        let power = self.analyzer.power(windowed);
        self.bank
            .apply(&power)
            .into_iter()
            .map(|e| e.max(self.log_floor).ln())
            .collect()
    }
}

/// LFBE matrix (time-major, `num_filters` columns) for a windowed frame sequence.
pub fn lfbe(frames: &FrameSequence, cfg: &LfbeConfig, sample_rate: u32) -> Result<Vec<Vec<f64>>, FeatureError> {
    cfg.validate(sample_rate, frames.frame_len())?;
    let ex = LfbeExtractor::new(cfg, sample_rate);
    Ok(frames.iter().map(|f| ex.frame(f)).collect())
}
