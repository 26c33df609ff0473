use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Reusable zero-padded FFT of a fixed size returning one-sided power or
/// amplitude spectra (bins `0..=fft_size/2`).
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    fft_size: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectrumAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumAnalyzer")
            .field("fft_size", &self.fft_size)
            .finish()
    }
}

impl SpectrumAnalyzer {
    pub fn new(fft_size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        SpectrumAnalyzer { fft_size, fft }
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    fn transform(&self, frame: &[f64]) -> Vec<Complex<f64>> {
        assert!(
            frame.len() <= self.fft_size,
            "frame of {} samples exceeds fft size {}",
            frame.len(),
            self.fft_size
        );
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        for (b, &x) in buf.iter_mut().zip(frame) {
            b.re = x;
        }
        self.fft.process(&mut buf);
        buf.truncate(self.num_bins());
        buf
    }

    /// `|DFT_b|^2` for each one-sided bin.
    pub fn power(&self, frame: &[f64]) -> Vec<f64> {
        self.transform(frame).iter().map(|c| c.norm_sqr()).collect()
    }

    /// `|DFT_b|` for each one-sided bin.
    pub fn amplitude(&self, frame: &[f64]) -> Vec<f64> {
        self.transform(frame).iter().map(|c| c.norm()).collect()
    }
}

/// One-shot power spectrum of `frame` zero-padded to `fft_size`.
pub fn power_spectrum(frame: &[f64], fft_size: usize) -> Vec<f64> {
    SpectrumAnalyzer::new(fft_size).power(frame)
}

/// Time-domain energy implied by a one-sided power spectrum (Parseval).
/// Interior bins count twice; DC and Nyquist once.
pub fn parseval_energy(power: &[f64], fft_size: usize) -> f64 {
    let nyquist = fft_size / 2;
    let total: f64 = power
        .iter()
        .enumerate()
        .map(|(b, &p)| if b == 0 || b == nyquist { p } else { 2.0 * p })
        .sum();
    total / fft_size as f64
}

/// Center frequency of bin `b`.
pub fn bin_hz(b: usize, fft_size: usize, sample_rate: u32) -> f64 {
    b as f64 * sample_rate as f64 / fft_size as f64
}

/// Bins whose center frequency lies in `[low_hz, high_hz]` inclusive.
pub fn band_bins(low_hz: f64, high_hz: f64, fft_size: usize, sample_rate: u32) -> std::ops::RangeInclusive<usize> {
    let df = sample_rate as f64 / fft_size as f64;
    let first = (low_hz / df).ceil() as usize;
    let last = ((high_hz / df).floor() as usize).min(fft_size / 2);
    first..=last
}
