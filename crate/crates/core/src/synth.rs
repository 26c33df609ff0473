//! Deterministic synthetic corpus of voiced-like and whisper-like utterances.
//!
//! Voiced utterances are a glottal pulse train at `f0` through a mild
//! spectral tilt; whisper utterances are high-pass shaped white noise. Both
//! then pass through the same parallel formant bank, so a speaker's vocal
//! tract is shared by its two phonation modes.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{encode_wav, write_manifest, AudioError, AudioUtterance, Label, ManifestEntry, Split, SAMPLE_RATE};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    VoicedLike,
    WhisperLike,
}

impl SynthMode {
    pub fn label(self) -> Label {
        match self {
            SynthMode::VoicedLike => Label::Normal,
            SynthMode::WhisperLike => Label::Whisper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Formant {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
}

/// Everything needed to render one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub mode: SynthMode,
    /// Length of the phonated part, excluding silence padding.
    pub duration_s: f64,
    /// Pulse rate of the voiced excitation; ignored for whisper.
    pub f0_hz: f64,
    pub formants: Vec<Formant>,
    /// Additive white noise level relative to the phonated signal's RMS.
    pub snr_db: f64,
    /// Coefficient `d` of the device coloration `1 + d z^-1`.
    pub channel_coef: f64,
    pub leading_silence_s: f64,
    pub trailing_silence_s: f64,
    pub seed: u64,
}

/// Peak amplitude of every generated utterance.
pub const PEAK: f64 = 0.5;
/// Standard deviation of the near-silent padding noise.
pub const SILENCE_NOISE_STD: f64 = 3e-4;
const VOICED_TILT: f64 = 0.9;
const WHISPER_HP_POLE: f64 = 0.6;
const WHISPER_FLOOR: f64 = 0.06;

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(0.5..=3.0).contains(&self.duration_s) {
            return bad(format!("duration {} s outside [0.5, 3.0]", self.duration_s));
        }
        if self.mode == SynthMode::VoicedLike && !(80.0..=300.0).contains(&self.f0_hz) {
            return bad(format!("f0 {} Hz outside [80, 300]", self.f0_hz));
        }
        if !(2..=3).contains(&self.formants.len()) {
            return bad(format!("{} formants given, expected 2 or 3", self.formants.len()));
        }
        for f in &self.formants {
            if !(300.0..=3000.0).contains(&f.center_hz) || !(f.bandwidth_hz > 0.0 && f.bandwidth_hz < 1000.0) {
                return bad(format!("formant {f:?} out of range"));
            }
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db must be finite".into());
        }
        if !(self.channel_coef.abs() < 1.0) {
            return bad(format!("channel_coef {} must lie in (-1, 1)", self.channel_coef));
        }
        for s in [self.leading_silence_s, self.trailing_silence_s] {
            if !(0.0..=0.5).contains(&s) {
                return bad(format!("silence length {s} s outside [0, 0.5]"));
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Two-pole resonator with unity-order gain `1 - r`.
fn resonator(x: &[f64], center_hz: f64, bandwidth_hz: f64) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let r = (-PI * bandwidth_hz / fs).exp();
    let a1 = 2.0 * r * (2.0 * PI * center_hz / fs).cos();
    let a2 = -r * r;
    let (mut y1, mut y2) = (0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = (1.0 - r) * v + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

/// Direct path plus one resonator per formant, in parallel.
fn formant_bank(x: &[f64], formants: &[Formant]) -> Vec<f64> {
    let mut y = x.to_vec();
    for f in formants {
        for (acc, v) in y.iter_mut().zip(resonator(x, f.center_hz, f.bandwidth_hz)) {
            *acc += v;
        }
    }
    y
}

/// `(1 - a) / (1 - a z^-1)`.
fn one_pole_lowpass(x: &mut [f64], a: f64) {
    let mut prev = 0.0;
    for v in x.iter_mut() {
        prev = (1.0 - a) * *v + a * prev;
        *v = prev;
    }
}

/// `(1 - z^-1) / (1 - p z^-1)`.
fn highpass(x: &mut [f64], p: f64) {
    let (mut x1, mut y1) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = *v - x1 + p * y1;
        x1 = *v;
        y1 = y;
        *v = y;
    }
}

/// Unit pulses every `16000 / f0` samples from a random phase.
pub fn pulse_train(n: usize, f0_hz: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let period = SAMPLE_RATE as f64 / f0_hz;
    let mut x = vec![0.0; n];
    let mut t = rng.gen_range(0.0..period);
    while (t as usize) < n {
        x[t as usize] = 1.0;
        t += period;
    }
    x
}

/// White noise with its band below 600 Hz attenuated: two first-difference
/// high-pass stages plus a small white floor.
pub fn whisper_excitation(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let white = gaussian(rng, n);
    let mut shaped = white.clone();
    highpass(&mut shaped, WHISPER_HP_POLE);
    highpass(&mut shaped, WHISPER_HP_POLE);
    shaped.iter_mut().zip(&white).for_each(|(s, w)| *s += WHISPER_FLOOR * w);
    shaped
}

fn scale_to_peak(x: &mut [f64], peak: f64) {
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / max);
    }
}

/// Renders `spec` into a 16 kHz utterance with peak amplitude [`PEAK`].
pub fn generate_utterance(spec: &SynthSpec, utterance_id: &str) -> Result<AudioUtterance, SynthError> {
    spec.validate()?;
    let fs = SAMPLE_RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = (spec.duration_s * fs).round() as usize;
    let excitation = match spec.mode {
        SynthMode::VoicedLike => {
            let mut x = pulse_train(n, spec.f0_hz, &mut rng);
            one_pole_lowpass(&mut x, VOICED_TILT);
            x
        }
        SynthMode::WhisperLike => whisper_excitation(n, &mut rng),
    };
    let mut speech = formant_bank(&excitation, &spec.formants);
    let mut prev = 0.0;
    for v in speech.iter_mut() {
        let cur = *v;
        *v += spec.channel_coef * prev;
        prev = cur;
    }
    scale_to_peak(&mut speech, 1.0);
    let rms = (speech.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let noise_std = rms * 10f64.powf(-spec.snr_db / 20.0);
    let noise = gaussian(&mut rng, n);
    speech.iter_mut().zip(&noise).for_each(|(s, e)| *s += noise_std * e);
    scale_to_peak(&mut speech, PEAK);

    let lead = (spec.leading_silence_s * fs).round() as usize;
    let trail = (spec.trailing_silence_s * fs).round() as usize;
    let mut samples: Vec<f64> = gaussian(&mut rng, lead).into_iter().map(|v| v * SILENCE_NOISE_STD).collect();
    samples.extend_from_slice(&speech);
    samples.extend(gaussian(&mut rng, trail).into_iter().map(|v| v * SILENCE_NOISE_STD));
    // Padding noise never reaches the speech peak, but keep the contract exact.
    samples.iter_mut().for_each(|v| *v = v.clamp(-PEAK, PEAK));

    Ok(AudioUtterance {
        samples,
        sample_rate: SAMPLE_RATE,
        utterance_id: utterance_id.to_string(),
        speaker_id: String::new(),
        device_id: String::new(),
        label: Some(spec.mode.label()),
    })
}

/// Distribution parameters for corpus generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_per_class: usize,
    /// Train, cv and test fractions of each class.
    pub split_fractions: [f64; 3],
    pub seed: u64,
    /// Utterances of each class recorded per synthetic speaker.
    pub utterances_per_speaker: usize,
    pub num_devices: usize,
    pub duration_s: [f64; 2],
    /// Range of per-speaker mean F0; each utterance varies it by up to 10%.
    pub f0_hz: [f64; 2],
    pub snr_db: [f64; 2],
    pub leading_silence_s: [f64; 2],
    pub trailing_silence_s: [f64; 2],
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_per_class: 100,
            split_fractions: [0.7, 0.1, 0.2],
            seed: 1,
            utterances_per_speaker: 5,
            num_devices: 3,
            duration_s: [0.5, 3.0],
            f0_hz: [90.0, 280.0],
            snr_db: [25.0, 40.0],
            leading_silence_s: [0.0, 0.5],
            trailing_silence_s: [0.0, 0.5],
        }
    }
}

fn check_range(name: &str, r: [f64; 2], lo: f64, hi: f64) -> Result<(), SynthError> {
    if !(r[0].is_finite() && r[1].is_finite() && lo <= r[0] && r[0] <= r[1] && r[1] <= hi) {
        return Err(SynthError::InvalidSpec(format!("{name} range {r:?} must be ordered within [{lo}, {hi}]")));
    }
    Ok(())
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_per_class < 10 {
            return Err(SynthError::InvalidSpec(format!("n_per_class {} is below 10", self.n_per_class)));
        }
        let sum: f64 = self.split_fractions.iter().sum();
        if self.split_fractions.iter().any(|f| !(*f > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(SynthError::InvalidSpec(format!(
                "split fractions {:?} must be positive and sum to 1",
                self.split_fractions
            )));
        }
        if self.utterances_per_speaker == 0 || self.num_devices == 0 {
            return Err(SynthError::InvalidSpec("utterances_per_speaker and num_devices must be positive".into()));
        }
        check_range("duration_s", self.duration_s, 0.5, 3.0)?;
        check_range("f0_hz", self.f0_hz, 80.0, 300.0)?;
        check_range("snr_db", self.snr_db, -20.0, 120.0)?;
        check_range("leading_silence_s", self.leading_silence_s, 0.0, 0.5)?;
        check_range("trailing_silence_s", self.trailing_silence_s, 0.0, 0.5)?;
        Ok(())
    }

    /// Per-class utterance counts for train, cv and test. Rounding leftovers
    /// go to the train split.
    pub fn split_counts(&self) -> [usize; 3] {
        let cv = (self.n_per_class as f64 * self.split_fractions[1]).round() as usize;
        let test = (self.n_per_class as f64 * self.split_fractions[2]).round() as usize;
        [self.n_per_class.saturating_sub(cv + test), cv, test]
    }
}

/// Vocal tract and recording channel of one synthetic speaker.
#[derive(Debug, Clone, PartialEq)]
struct Speaker {
    id: String,
    device_id: String,
    channel_coef: f64,
    f0_center: f64,
    formants: Vec<Formant>,
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..r[1])
    }
}

fn random_formants(rng: &mut ChaCha8Rng) -> Vec<Formant> {
    [(300.0, 900.0, 60.0, 150.0), (900.0, 2500.0, 80.0, 200.0), (2200.0, 3000.0, 100.0, 250.0)]
        .iter()
        .map(|&(lo, hi, blo, bhi)| Formant {
            center_hz: rng.gen_range(lo..hi),
            bandwidth_hz: rng.gen_range(blo..bhi),
        })
        .collect()
}

/// One planned utterance of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedUtterance {
    pub split: Split,
    pub entry: ManifestEntry,
    pub spec: SynthSpec,
}

/// Lays out the whole corpus deterministically without rendering audio.
/// Speakers never straddle splits; each speaker contributes both classes.
pub fn plan_corpus(cfg: &CorpusConfig) -> Result<Vec<PlannedUtterance>, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let device_coefs: Vec<f64> = (0..cfg.num_devices).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let mut plan = Vec::new();
    let mut speaker_index = 0usize;
    for (split, per_class) in [Split::Train, Split::CrossValidation, Split::Test].into_iter().zip(cfg.split_counts()) {
        let num_speakers = per_class.div_ceil(cfg.utterances_per_speaker).max(1);
        let speakers: Vec<Speaker> = (0..num_speakers)
            .map(|_| {
                let dev = speaker_index % cfg.num_devices;
                let s = Speaker {
                    id: format!("spk{speaker_index:04}"),
                    device_id: format!("dev{dev}"),
                    channel_coef: device_coefs[dev],
                    f0_center: uniform(&mut rng, cfg.f0_hz),
                    formants: random_formants(&mut rng),
                };
                speaker_index += 1;
                s
            })
            .collect();
        for mode in [SynthMode::WhisperLike, SynthMode::VoicedLike] {
            for i in 0..per_class {
                let spk = &speakers[i % num_speakers];
                let f0 = (spk.f0_center * rng.gen_range(0.9..1.1)).clamp(80.0, 300.0);
                let spec = SynthSpec {
                    mode,
                    duration_s: uniform(&mut rng, cfg.duration_s),
                    f0_hz: f0,
                    formants: spk.formants.clone(),
                    snr_db: uniform(&mut rng, cfg.snr_db),
                    channel_coef: spk.channel_coef,
                    leading_silence_s: uniform(&mut rng, cfg.leading_silence_s),
                    trailing_silence_s: uniform(&mut rng, cfg.trailing_silence_s),
                    seed: rng.gen(),
                };
                let label = mode.label();
                let utterance_id = format!("{}_{}_{}_{i:04}", split.as_str(), spk.id, label.as_str());
                plan.push(PlannedUtterance {
                    split,
                    entry: ManifestEntry {
                        audio_path: format!("wav/{}/{utterance_id}.wav", split.as_str()),
                        utterance_id,
                        speaker_id: spk.id.clone(),
                        device_id: spk.device_id.clone(),
                        label,
                    },
                    spec,
                });
            }
        }
    }
    Ok(plan)
}

/// Paths of the manifests written by [`generate_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifests {
    pub train: PathBuf,
    pub cv: PathBuf,
    pub test: PathBuf,
}

impl CorpusManifests {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusManifests {
            train: dir.join("train.jsonl"),
            cv: dir.join("cv.jsonl"),
            test: dir.join("test.jsonl"),
        }
    }

    pub fn path(&self, split: Split) -> &Path {
        match split {
            Split::Train => &self.train,
            Split::CrossValidation => &self.cv,
            Split::Test => &self.test,
        }
    }
}

/// Renders every planned utterance to `out_dir/wav/<split>/` and writes
/// `train.jsonl`, `cv.jsonl` and `test.jsonl` with paths relative to
/// `out_dir`.
pub fn generate_corpus(cfg: &CorpusConfig, out_dir: &Path) -> Result<CorpusManifests, SynthError> {
    let plan = plan_corpus(cfg)?;
    for split in [Split::Train, Split::CrossValidation, Split::Test] {
        fs::create_dir_all(out_dir.join("wav").join(split.as_str()))?;
    }
    plan.par_iter().try_for_each(|p| -> Result<(), SynthError> {
        let u = generate_utterance(&p.spec, &p.entry.utterance_id)?;
        encode_wav(&out_dir.join(&p.entry.audio_path), &u.samples, SAMPLE_RATE)?;
        Ok(())
    })?;
    let manifests = CorpusManifests::in_dir(out_dir);
    for split in [Split::Train, Split::CrossValidation, Split::Test] {
        let entries: Vec<ManifestEntry> = plan.iter().filter(|p| p.split == split).map(|p| p.entry.clone()).collect();
        write_manifest(manifests.path(split), &entries)?;
    }
    Ok(manifests)
}
