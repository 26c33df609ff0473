//! Sum of residual harmonics voicing measure.
//!
//! `SRH(f) = E(f) + sum_{k=2}^{N} [E(k f) - E((k - 1/2) f)]`, where `E` is the
//! unit-max amplitude spectrum of the Hann-windowed LPC residual. The feature
//! is the maximum of `SRH` over candidate fundamentals on the FFT-bin grid.

use serde::{Deserialize, Serialize};

use super::lpc::{autocorrelation, levinson_durbin, residual};
use super::spectrum::SpectrumAnalyzer;
use super::FeatureError;
use crate::audio::hanning;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrhConfig {
    pub n_harm: usize,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub fft_size: usize,
    pub lpc_order: usize,
    pub use_residual: bool,
}

impl Default for SrhConfig {
    fn default() -> Self {
        SrhConfig {
            n_harm: 5,
            f0_min_hz: 80.0,
            f0_max_hz: 450.0,
            fft_size: 16384,
            lpc_order: 12,
            use_residual: true,
        }
    }
}

impl SrhConfig {
    pub fn validate(&self, sample_rate: u32, frame_len: usize) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::InvalidConfig(m));
        if self.n_harm < 2 {
            return bad("srh.n_harm must be >= 2".into());
        }
        if !(self.f0_min_hz > 0.0 && self.f0_min_hz < self.f0_max_hz) {
            return bad("srh needs 0 < f0_min_hz < f0_max_hz".into());
        }
        if self.f0_max_hz * self.n_harm as f64 >= sample_rate as f64 / 2.0 {
            return bad(format!(
                "srh.f0_max_hz x n_harm = {} must stay below Nyquist",
                self.f0_max_hz * self.n_harm as f64
            ));
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < frame_len {
            return bad(format!(
                "srh.fft_size {} must be a power of two >= frame length {frame_len}",
                self.fft_size
            ));
        }
        if self.use_residual && frame_len < 2 * self.lpc_order {
            return bad(format!(
                "srh needs frames of at least 2 x lpc_order = {} samples",
                2 * self.lpc_order
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrhOutput {
    /// `max_f SRH(f)`.
    pub value: f64,
    /// The maximizing candidate fundamental.
    pub f0_hz: f64,
    /// False when LPC was disabled or the frame's autocorrelation was
    /// degenerate and the plain spectrum was used instead.
    pub used_residual: bool,
    pub degenerate_lpc: bool,
}

pub struct SrhExtractor {
    cfg: SrhConfig,
    sample_rate: u32,
    analyzer: SpectrumAnalyzer,
}

impl SrhExtractor {
    pub fn new(cfg: &SrhConfig, sample_rate: u32) -> Self {
        SrhExtractor {
            cfg: cfg.clone(),
            sample_rate,
            analyzer: SpectrumAnalyzer::new(cfg.fft_size),
        }
    }

    /// Unit-max amplitude spectrum of the (residual of the) raw frame.
    fn spectrum(&self, frame: &[f64]) -> (Vec<f64>, bool, bool) {
        let window = hanning(frame.len());
        let mut degenerate = false;
        let source = if self.cfg.use_residual {
            let windowed: Vec<f64> = frame.iter().zip(&window).map(|(x, w)| x * w).collect();
            let r = autocorrelation(&windowed, self.cfg.lpc_order);
            match levinson_durbin(&r, self.cfg.lpc_order) {
                Some(a) => Some(residual(frame, &a)),
                None => {
                    degenerate = true;
                    None
                }
            }
        } else {
            None
        };
        let used_residual = source.is_some();
        let source = source.unwrap_or_else(|| frame.to_vec());
        let windowed: Vec<f64> = source.iter().zip(&window).map(|(x, w)| x * w).collect();
        let mut amp = self.analyzer.amplitude(&windowed);
        let peak = amp.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            amp.iter_mut().for_each(|a| *a /= peak);
        }
        (amp, used_residual, degenerate)
    }

    /// `SRH(f)` for every grid bin from `ceil(f0_min/df)` to `floor(f0_max/df)`.
    pub fn curve(&self, amp: &[f64]) -> Vec<(f64, f64)> {
        let df = self.sample_rate as f64 / self.cfg.fft_size as f64;
        let first = (self.cfg.f0_min_hz / df).ceil() as usize;
        let last = (self.cfg.f0_max_hz / df).floor() as usize;
        (first..=last)
            .map(|b| {
                let mut s = amp[b];
                for k in 2..=self.cfg.n_harm {
                    let harmonic = k * b;
                    let between = ((k as f64 - 0.5) * b as f64).round() as usize;
                    s += amp[harmonic] - amp[between];
                }
                (b as f64 * df, s)
            })
            .collect()
    }

    pub fn frame(&self, frame: &[f64]) -> SrhOutput {
        let (amp, used_residual, degenerate_lpc) = self.spectrum(frame);
        let (f0_hz, value) = self
            .curve(&amp)
            .into_iter()
            .fold((0.0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
        SrhOutput {
            value,
            f0_hz,
            used_residual,
            degenerate_lpc,
        }
    }
}

/// SRH feature for a single raw (unwindowed) frame.
pub fn srh(frame: &[f64], cfg: &SrhConfig, sample_rate: u32) -> Result<SrhOutput, FeatureError> {
    cfg.validate(sample_rate, frame.len())?;
    Ok(SrhExtractor::new(cfg, sample_rate).frame(frame))
}
