use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{AudioError, AudioUtterance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hanning,
    Rectangular,
}

/// Frame length and shift in milliseconds plus the analysis window.
///
/// The default 25 ms / 10 ms pair gives 400-sample frames every 160 samples at
/// 16 kHz. Setting `frame_shift_ms = 15` gives the literal "10 ms overlap"
/// reading instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSpec {
    pub frame_len_ms: u32,
    pub frame_shift_ms: u32,
    pub window: WindowKind,
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec {
            frame_len_ms: 25,
            frame_shift_ms: 10,
            window: WindowKind::Hanning,
        }
    }
}

impl FrameSpec {
    pub fn validate(&self) -> Result<(), AudioError> {
        if self.frame_shift_ms == 0 || self.frame_shift_ms > self.frame_len_ms {
            return Err(AudioError::InvalidFrameSpec(format!(
                "need 0 < frame_shift_ms ({}) <= frame_len_ms ({})",
                self.frame_shift_ms, self.frame_len_ms
            )));
        }
        Ok(())
    }

    pub fn with_window(self, window: WindowKind) -> Self {
        FrameSpec { window, ..self }
    }

    pub fn frame_len_samples(&self, sample_rate: u32) -> Result<usize, AudioError> {
        ms_to_samples(self.frame_len_ms, sample_rate)
    }

    pub fn shift_samples(&self, sample_rate: u32) -> Result<usize, AudioError> {
        ms_to_samples(self.frame_shift_ms, sample_rate)
    }

    /// Number of whole frames that fit in `num_samples`; trailing partial
    /// frames are dropped.
    pub fn num_frames(&self, num_samples: usize, sample_rate: u32) -> Result<usize, AudioError> {
        let len = self.frame_len_samples(sample_rate)?;
        let shift = self.shift_samples(sample_rate)?;
        Ok(if num_samples >= len {
            (num_samples - len) / shift + 1
        } else {
            0
        })
    }
}

fn ms_to_samples(ms: u32, sample_rate: u32) -> Result<usize, AudioError> {
    let prod = u64::from(ms) * u64::from(sample_rate);
    if prod % 1000 != 0 {
        return Err(AudioError::InvalidFrameSpec(format!(
            "{ms} ms is not a whole number of samples at {sample_rate} Hz"
        )));
    }
    Ok((prod / 1000) as usize)
}

/// Symmetric Hann window, `w[n] = 0.5 (1 - cos(2 pi n / (N - 1)))`.
pub fn hanning(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => {
            let denom = (n - 1) as f64;
            (0..n)
                .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / denom).cos()))
                .collect()
        }
    }
}

/// Windowed, time-major frames of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<f64>,
    frame_len: usize,
    pub spec: FrameSpec,
    pub utterance_id: String,
}

impl FrameSequence {
    pub fn num_frames(&self) -> usize {
        if self.frame_len == 0 {
            0
        } else {
            self.frames.len() / self.frame_len
        }
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.frames[i * self.frame_len..(i + 1) * self.frame_len]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.frames.chunks_exact(self.frame_len.max(1))
    }
}

/// Slices an utterance into overlapping frames and applies the configured window.
pub fn frame_signal(u: &AudioUtterance, spec: &FrameSpec) -> Result<FrameSequence, AudioError> {
    spec.validate()?;
    let len = spec.frame_len_samples(u.sample_rate)?;
    let shift = spec.shift_samples(u.sample_rate)?;
    if len == 0 || u.samples.len() < len {
        return Err(AudioError::TooShort {
            utterance_id: u.utterance_id.clone(),
            num_samples: u.samples.len(),
            frame_len: len,
        });
    }
    let count = (u.samples.len() - len) / shift + 1;
    let window = match spec.window {
        WindowKind::Hanning => hanning(len),
        WindowKind::Rectangular => vec![1.0; len],
    };
    let mut frames = Vec::with_capacity(count * len);
    for k in 0..count {
        let chunk = &u.samples[k * shift..k * shift + len];
        frames.extend(chunk.iter().zip(&window).map(|(s, w)| s * w));
    }
    Ok(FrameSequence {
        frames,
        frame_len: len,
        spec: *spec,
        utterance_id: u.utterance_id.clone(),
    })
}
