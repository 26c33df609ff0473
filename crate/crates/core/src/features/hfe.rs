use serde::{Deserialize, Serialize};

use super::spectrum::{band_bins, SpectrumAnalyzer};
use super::FeatureError;
use crate::audio::{hanning, WindowKind};

/// High/low band energy ratio and low-band spectral entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HfeConfig {
    pub high_band_hz: [f64; 2],
    pub low_band_hz: [f64; 2],
    pub energy_floor: f64,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for HfeConfig {
    fn default() -> Self {
        HfeConfig {
            high_band_hz: [6875.0, 8000.0],
            low_band_hz: [310.0, 620.0],
            energy_floor: 1e-12,
            fft_size: 512,
            window: WindowKind::Hanning,
        }
    }
}

impl HfeConfig {
    pub fn validate(&self, sample_rate: u32, frame_len: usize) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::InvalidConfig(m));
        if !self.fft_size.is_power_of_two() || self.fft_size < frame_len {
            return bad(format!(
                "hfe.fft_size {} must be a power of two >= frame length {frame_len}",
                self.fft_size
            ));
        }
        let [ll, lh] = self.low_band_hz;
        let [hl, hh] = self.high_band_hz;
        if !(ll < lh && hl < hh && (lh < hl || hh < ll)) {
            return bad("hfe bands must be ordered and non-overlapping".into());
        }
        for (name, [lo, hi]) in [("low", self.low_band_hz), ("high", self.high_band_hz)] {
            if band_bins(lo, hi, self.fft_size, sample_rate).count() < 2 {
                return bad(format!("hfe {name} band holds fewer than 2 FFT bins"));
            }
        }
        if !(self.energy_floor > 0.0) {
            return bad("hfe.energy_floor must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HfeOutput {
    pub ratio: f64,
    /// Shannon entropy in bits.
    pub low_band_entropy: f64,
}

/// Computes both HFE dimensions from a one-sided power spectrum.
pub fn hfe_from_power(power: &[f64], cfg: &HfeConfig, fft_size: usize, sample_rate: u32) -> HfeOutput {
    let high: f64 = power[band_bins(cfg.high_band_hz[0], cfg.high_band_hz[1], fft_size, sample_rate)]
        .iter()
        .sum();
    let low_bins = &power[band_bins(cfg.low_band_hz[0], cfg.low_band_hz[1], fft_size, sample_rate)];
    let low: f64 = low_bins.iter().sum();
    let ratio = high / low.max(cfg.energy_floor);
    let low_band_entropy = if low > 0.0 {
        -low_bins
            .iter()
            .map(|&p| p / low)
            .filter(|&p| p > 0.0)
            .map(|p| p * p.log2())
            .sum::<f64>()
    } else {
        0.0
    };
    HfeOutput {
        ratio,
        low_band_entropy,
    }
}

pub struct HfeExtractor {
    cfg: HfeConfig,
    sample_rate: u32,
    analyzer: SpectrumAnalyzer,
}

impl HfeExtractor {
    pub fn new(cfg: &HfeConfig, sample_rate: u32) -> Self {
        HfeExtractor {
            cfg: cfg.clone(),
            sample_rate,
            analyzer: SpectrumAnalyzer::new(cfg.fft_size),
        }
    }

    pub fn frame(&self, raw: &[f64]) -> HfeOutput {
        let power = match self.cfg.window {
            WindowKind::Hanning => {
                let w = hanning(raw.len());
                let x: Vec<f64> = raw.iter().zip(&w).map(|(a, b)| a * b).collect();
                self.analyzer.power(&x)
            }
            WindowKind::Rectangular => self.analyzer.power(raw),
        };
        hfe_from_power(&power, &self.cfg, self.cfg.fft_size, self.sample_rate)
    }
}

/// HFE for a single raw frame.
pub fn hfe(raw: &[f64], cfg: &HfeConfig, sample_rate: u32) -> Result<HfeOutput, FeatureError> {
    cfg.validate(sample_rate, raw.len())?;
    Ok(HfeExtractor::new(cfg, sample_rate).frame(raw))
}
