use serde::{Deserialize, Serialize};

use super::FeatureError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcmaxConfig {
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub neighbor_count: usize,
}

impl Default for AcmaxConfig {
    fn default() -> Self {
        AcmaxConfig {
            f0_min_hz: 80.0,
            f0_max_hz: 450.0,
            neighbor_count: 4,
        }
    }
}

impl AcmaxConfig {
    /// Inclusive lag search range in samples.
    pub fn lag_range(&self, sample_rate: u32) -> (usize, usize) {
        let fs = sample_rate as f64;
        ((fs / self.f0_max_hz).ceil() as usize, (fs / self.f0_min_hz).floor() as usize)
    }

    pub fn validate(&self, sample_rate: u32, frame_len: usize) -> Result<(), FeatureError> {
        if !(self.f0_min_hz > 0.0 && self.f0_min_hz < self.f0_max_hz) || self.neighbor_count == 0 {
            return Err(FeatureError::InvalidConfig(
                "acmax needs 0 < f0_min_hz < f0_max_hz and neighbor_count >= 1".into(),
            ));
        }
        let (lo, hi) = self.lag_range(sample_rate);
        if lo > hi {
            return Err(FeatureError::InvalidConfig("acmax lag range is empty".into()));
        }
        if frame_len <= hi {
            return Err(FeatureError::InvalidConfig(format!(
                "acmax needs frames longer than {hi} samples, got {frame_len}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcmaxOutput {
    pub peak_value: f64,
    /// Lag in samples.
    pub peak_lag: f64,
    /// Mean spacing of consecutive in-range peaks, in samples.
    pub mean_peak_distance: f64,
}

impl AcmaxOutput {
    pub const NONE: AcmaxOutput = AcmaxOutput {
        peak_value: 0.0,
        peak_lag: 0.0,
        mean_peak_distance: 0.0,
    };
}

/// Autocorrelation with each lag normalized by the energy of the two
/// overlapping segments, `sum x[n]x[n+l] / sqrt(sum x[n]^2 sum x[n+l]^2)`.
/// Equals 1 at lag 0, stays within [-1, 1], and reaches 1 at every whole
/// period of a periodic frame instead of decaying with the overlap length.
/// `None` for an all-zero frame.
pub fn normalized_autocorrelation(x: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let n = x.len();
    let max_lag = max_lag.min(n - 1);
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if !(energy > 0.0) {
        return None;
    }
    // Prefix sums of x^2 give both segment energies per lag.
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v * v);
    }
    Some(
        (0..=max_lag)
            .map(|l| {
                let s: f64 = x.iter().zip(&x[l..]).map(|(a, b)| a * b).sum();
                let head = prefix[n - l];
                let tail = prefix[n] - prefix[l];
                let denom = (head * tail).sqrt();
                if denom > 0.0 {
                    (s / denom).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect(),
    )
}

/// Maximum autocorrelation peak in the F0 lag range, its lag, and the mean
/// distance between consecutive peaks. A lag is a peak when it exceeds each of
/// its `neighbor_count` neighbors on both sides; neighbors just outside the
/// search range are still compared when the frame provides them.
pub fn acmax(raw: &[f64], cfg: &AcmaxConfig, sample_rate: u32) -> Result<AcmaxOutput, FeatureError> {
    cfg.validate(sample_rate, raw.len())?;
    let (lo, hi) = cfg.lag_range(sample_rate);
    let k = cfg.neighbor_count;
    let Some(r) = normalized_autocorrelation(raw, hi + k) else {
        return Ok(AcmaxOutput::NONE);
    };
    let peaks: Vec<usize> = (lo..=hi)
        .filter(|&l| {
            let from = l.saturating_sub(k);
            let to = (l + k).min(r.len() - 1);
            (from..=to).all(|j| j == l || r[l] > r[j])
        })
        .collect();
    let Some(&first) = peaks.first() else {
        return Ok(AcmaxOutput::NONE);
    };
    // Earliest lag wins among (numerically) equal maxima.
    let mut best = first;
    for &l in &peaks[1..] {
        if r[l] > r[best] + 1e-12 {
            best = l;
        }
    }
    let mean_peak_distance = if peaks.len() < 2 {
        best as f64
    } else {
        (peaks[peaks.len() - 1] - peaks[0]) as f64 / (peaks.len() - 1) as f64
    };
    Ok(AcmaxOutput {
        peak_value: r[best],
        peak_lag: best as f64,
        mean_peak_distance,
    })
}
