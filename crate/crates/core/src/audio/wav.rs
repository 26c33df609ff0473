use std::io::ErrorKind;
use std::path::Path;

use super::{AudioError, AudioUtterance};

/// The only rate the pipeline accepts; resampling is out of scope.
pub const SAMPLE_RATE: u32 = 16_000;

const INT16_SCALE: f64 = 32768.0;

/// Decodes a 16-bit mono 16 kHz PCM WAV file.
///
/// Samples are scaled by 1/32768. The utterance id is the file stem; speaker,
/// device and label are left empty and are filled in by manifest loading.
pub fn decode_wav(path: &Path) -> Result<AudioUtterance, AudioError> {
    let display = path.display().to_string();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(e, &display))?;
    let spec = reader.spec();
    let unsupported = |reason: String| AudioError::UnsupportedFormat {
        path: display.clone(),
        reason,
    };
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(unsupported("floating-point samples".into()));
    }
    if spec.bits_per_sample != 16 {
        return Err(unsupported(format!("{} bits per sample", spec.bits_per_sample)));
    }
    if spec.channels != 1 {
        return Err(unsupported(format!("{} channels", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(unsupported(format!("sample rate {} Hz", spec.sample_rate)));
    }

    let mut samples = Vec::with_capacity(reader.len() as usize);
    for s in reader.into_samples::<i16>() {
        // The header parsed, so a failing read means the data chunk ends early.
        let s = s.map_err(|e| match e {
            hound::Error::IoError(_) => AudioError::Truncated(display.clone()),
            other => map_hound(other, &display),
        })?;
        samples.push(f64::from(s) / INT16_SCALE);
    }

    Ok(AudioUtterance {
        samples,
        sample_rate: spec.sample_rate,
        utterance_id: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        speaker_id: String::new(),
        device_id: String::new(),
        label: None,
    })
}

/// Writes samples as 16-bit mono PCM. Values are clamped to the int16 range
/// after scaling by 32768 and rounding to nearest.
pub fn encode_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let display = path.display().to_string();
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(e, &display))?;
    for &s in samples {
        let v = (s * INT16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| map_hound(e, &display))?;
    }
    writer.finalize().map_err(|e| map_hound(e, &display))
}

fn map_hound(e: hound::Error, path: &str) -> AudioError {
    match e {
        hound::Error::IoError(io) if io.kind() == ErrorKind::UnexpectedEof => {
            AudioError::Truncated(path.to_string())
        }
        hound::Error::IoError(io) => AudioError::Io(io),
        hound::Error::FormatError(msg) if msg.contains("RIFF") || msg.contains("WAVE") => {
            AudioError::NotWav(path.to_string())
        }
        hound::Error::FormatError(msg) => AudioError::UnsupportedFormat {
            path: path.to_string(),
            reason: msg.to_string(),
        },
        hound::Error::Unsupported => AudioError::UnsupportedFormat {
            path: path.to_string(),
            reason: "unsupported WAVE encoding".into(),
        },
        other => AudioError::UnsupportedFormat {
            path: path.to_string(),
            reason: other.to_string(),
        },
    }
}
