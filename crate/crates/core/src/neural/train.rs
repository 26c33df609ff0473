//! Minibatch SGD with global-norm clipping, truncated BPTT for the LSTM and
//! cv-driven learning-rate halving.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Model, NeuralError, PosteriorTrajectory};
use crate::audio::Label;
use crate::features::FeatureMatrix;
use crate::metrics::frame_accuracy;

/// Truncation length for backpropagation through time. Serialized as a frame
/// count or the string `"full"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TruncationRepr", into = "TruncationRepr")]
pub enum Truncation {
    Frames(usize),
    Full,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TruncationRepr {
    Frames(u64),
    Named(String),
}

impl TryFrom<TruncationRepr> for Truncation {
    type Error = String;

    fn try_from(r: TruncationRepr) -> Result<Self, String> {
        match r {
            TruncationRepr::Frames(n) => Ok(Truncation::Frames(n as usize)),
            TruncationRepr::Named(s) if s == "full" => Ok(Truncation::Full),
            TruncationRepr::Named(s) => Err(format!("truncation must be a frame count or \"full\", got {s:?}")),
        }
    }
}

impl From<Truncation> for TruncationRepr {
    fn from(t: Truncation) -> Self {
        match t {
            Truncation::Frames(n) => TruncationRepr::Frames(n as u64),
            Truncation::Full => TruncationRepr::Named("full".into()),
        }
    }
}

impl Truncation {
    pub fn frames(self) -> Option<usize> {
        match self {
            Truncation::Frames(n) => Some(n),
            Truncation::Full => None,
        }
    }
}

impl fmt::Display for Truncation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Truncation::Frames(n) => write!(f, "{n}"),
            Truncation::Full => f.write_str("full"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub bptt_truncation_len: Truncation,
    /// Utterances per LSTM update.
    pub batch_size: usize,
    /// Frames per MLP update; frames are shuffled across utterances.
    pub mlp_frame_batch: usize,
    pub seed: u64,
    pub gradient_clip_norm: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Halve the learning rate after any epoch whose cv frame accuracy does
    /// not beat the best so far.
    pub halve_on_plateau: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 10,
            bptt_truncation_len: Truncation::Frames(64),
            batch_size: 4,
            mlp_frame_batch: 64,
            seed: 0,
            gradient_clip_norm: 5.0,
            momentum: 0.0,
            weight_decay: 0.0,
            halve_on_plateau: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: String| Err(NeuralError::InvalidTrainConfig(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if self.bptt_truncation_len == Truncation::Frames(0) {
            return bad("bptt_truncation_len must be at least 1".into());
        }
        if self.batch_size == 0 || self.mlp_frame_batch == 0 {
            return bad("batch sizes must be at least 1".into());
        }
        if !(self.gradient_clip_norm > 0.0) {
            return bad(format!("gradient_clip_norm must be positive, got {}", self.gradient_clip_norm));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean per-frame training loss over the epoch.
    pub train_loss: f64,
    pub cv_loss: f64,
    pub cv_frame_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub curve: Vec<EpochRecord>,
}

/// One labelled utterance.
pub type Example = (FeatureMatrix, Label);

/// MLP frames are summed in chunks of this size before the ordered reduction,
/// so results do not depend on the worker count.
const MLP_CHUNK: usize = 16;

/// Trains `model` in place of a copy and returns it with its loss curve.
pub fn train(mut model: Model, train_set: &[Example], cv_set: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome, NeuralError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(NeuralError::EmptyTrainingSet);
    }
    if cv_set.is_empty() {
        return Err(NeuralError::EmptyCvSet);
    }
    for (x, _) in train_set.iter().chain(cv_set) {
        if x.dim() != model.input_dim() {
            return Err(NeuralError::DimMismatch {
                expected: model.input_dim(),
                found: x.dim(),
            });
        }
        if x.num_frames() == 0 {
            return Err(NeuralError::EmptySequence(x.utterance_id.clone()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = vec![0.0; model.params().len()];
    let mut lr = cfg.learning_rate;
    let mut best_acc = f64::NEG_INFINITY;
    let mut curve = Vec::with_capacity(cfg.epochs);

    let frames: Vec<(usize, usize)> = match model {
        Model::Mlp(_) => train_set
            .iter()
            .enumerate()
            .flat_map(|(u, (x, _))| (0..x.num_frames()).map(move |t| (u, t)))
            .collect(),
        Model::Lstm(_) => Vec::new(),
    };

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut frame_count = 0usize;
        match &model {
            Model::Mlp(_) => {
                let mut order = frames.clone();
                order.shuffle(&mut rng);
                for (batch, chunk) in order.chunks(cfg.mlp_frame_batch).enumerate() {
                    let (grad, loss) = mlp_batch_gradient(&model, train_set, chunk)?;
                    check_finite(loss, epoch, batch)?;
                    loss_sum += loss;
                    frame_count += chunk.len();
                    apply_update(&mut model, grad, chunk.len(), lr, cfg, &mut velocity);
                }
            }
            Model::Lstm(_) => {
                let mut order: Vec<usize> = (0..train_set.len()).collect();
                order.shuffle(&mut rng);
                for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
                    let (grad, loss, n) = seq_batch_gradient(&model, train_set, chunk, cfg.bptt_truncation_len.frames())?;
                    check_finite(loss, epoch, batch)?;
                    loss_sum += loss;
                    frame_count += n;
                    apply_update(&mut model, grad, n, lr, cfg, &mut velocity);
                }
            }
        }

        let (cv_loss, cv_acc) = evaluate_cv(&model, cv_set)?;
        curve.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / frame_count as f64,
            cv_loss,
            cv_frame_accuracy: cv_acc,
        });
        log::info!(
            "epoch {epoch}: lr {lr:.5} train loss {:.5} cv loss {cv_loss:.5} cv frame acc {cv_acc:.4}",
            loss_sum / frame_count as f64
        );
        if cv_acc > best_acc {
            best_acc = cv_acc;
        } else if cfg.halve_on_plateau {
            lr *= 0.5;
        }
    }
    Ok(TrainOutcome { model, curve })
}

fn check_finite(loss: f64, epoch: usize, batch: usize) -> Result<(), NeuralError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(NeuralError::NonFiniteLoss { epoch, batch })
    }
}

fn add_in_order(parts: Vec<(Vec<f64>, f64)>, n_params: usize) -> (Vec<f64>, f64) {
    let mut grad = vec![0.0; n_params];
    let mut loss = 0.0;
    for (g, l) in parts {
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        loss += l;
    }
    (grad, loss)
}

fn mlp_batch_gradient(model: &Model, set: &[Example], frames: &[(usize, usize)]) -> Result<(Vec<f64>, f64), NeuralError> {
    let Model::Mlp(mlp) = model else { unreachable!() };
    let n = mlp.params().len();
    let parts = frames
        .par_chunks(MLP_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n];
            let mut loss = 0.0;
            for &(u, t) in chunk {
                let (x, label) = &set[u];
                loss += mlp.accumulate_frame_gradient(x.row(t), *label, &mut g)?;
            }
            Ok((g, loss))
        })
        .collect::<Result<Vec<_>, NeuralError>>()?;
    Ok(add_in_order(parts, n))
}

fn seq_batch_gradient(model: &Model, set: &[Example], utts: &[usize], truncation: Option<usize>) -> Result<(Vec<f64>, f64, usize), NeuralError> {
    let n = model.params().len();
    let parts = utts
        .par_iter()
        .map(|&u| {
            let (x, label) = &set[u];
            let mut g = vec![0.0; n];
            let loss = model.accumulate_gradient(x, *label, truncation, &mut g)?;
            Ok((g, loss))
        })
        .collect::<Result<Vec<_>, NeuralError>>()?;
    let frames = utts.iter().map(|&u| set[u].0.num_frames()).sum();
    let (g, l) = add_in_order(parts, n);
    Ok((g, l, frames))
}

/// Averages the summed gradient over `frames`, clips it to the configured
/// global norm and takes one SGD (optionally momentum) step.
fn apply_update(model: &mut Model, mut grad: Vec<f64>, frames: usize, lr: f64, cfg: &TrainConfig, velocity: &mut [f64]) {
    let scale = 1.0 / frames as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > cfg.gradient_clip_norm {
        let s = cfg.gradient_clip_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    if lr == 0.0 {
        return;
    }
    let params = model.params_mut();
    if cfg.momentum == 0.0 && cfg.weight_decay == 0.0 {
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
        return;
    }
    for ((p, g), v) in params.iter_mut().zip(&grad).zip(velocity.iter_mut()) {
        *v = cfg.momentum * *v - lr * (g + cfg.weight_decay * *p);
        *p += *v;
    }
}

fn evaluate_cv(model: &Model, cv_set: &[Example]) -> Result<(f64, f64), NeuralError> {
    let scored = cv_set
        .par_iter()
        .map(|(x, label)| Ok((model.posteriors(x)?, *label)))
        .collect::<Result<Vec<(PosteriorTrajectory, Label)>, NeuralError>>()?;
    let frames: usize = scored.iter().map(|(t, _)| t.len()).sum();
    let loss: f64 = scored
        .iter()
        .map(|(t, l)| super::cross_entropy_loss(t, *l) * t.len() as f64)
        .sum::<f64>()
        / frames as f64;
    Ok((loss, frame_accuracy(&scored).expect("cv set has frames")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureLayout, FeatureMode};
    use crate::neural::{ArchConfig, Mlp};

    fn matrix(id: &str, rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let d = rows[0].len();
        FeatureMatrix::from_rows(id, FeatureLayout::for_mode(FeatureMode::LfbeOnly, d), rows).unwrap()
    }

    fn toy_set(dim: usize, n: usize, seed: u64) -> Vec<Example> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Whisper } else { Label::Normal };
                let shift = if label.is_whisper() { 0.8 } else { -0.8 };
                let frames = rng.gen_range(5..15);
                let rows = (0..frames)
                    .map(|_| (0..dim).map(|_| shift + rng.gen_range(-1.0..1.0)).collect())
                    .collect();
                (matrix(&format!("u{i}"), rows), label)
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_is_a_null_update() {
        let set = toy_set(3, 6, 1);
        for arch in [ArchConfig::default_mlp(), ArchConfig::Lstm { cells: 4, layers: 2 }] {
            let model = arch.build(3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            let cfg = TrainConfig {
                learning_rate: 0.0,
                epochs: 3,
                ..TrainConfig::default()
            };
            let out = train(model.clone(), &set, &set, &cfg).unwrap();
            assert_eq!(out.model.params(), model.params());
            assert_eq!(out.curve.len(), 3);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let set = toy_set(3, 8, 2);
        for arch in [ArchConfig::Mlp { hidden: [6, 5, 4] }, ArchConfig::Lstm { cells: 4, layers: 2 }] {
            let run = || {
                let model = arch.build(3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
                train(model, &set, &set, &TrainConfig { epochs: 3, ..TrainConfig::default() }).unwrap()
            };
            let (a, b) = (run(), run());
            assert_eq!(a.curve, b.curve);
            assert_eq!(a.model.params(), b.model.params());
        }
    }

    #[test]
    fn learns_separable_toy_data() {
        let set = toy_set(3, 20, 3);
        for arch in [ArchConfig::Mlp { hidden: [8, 8, 4] }, ArchConfig::Lstm { cells: 6, layers: 1 }] {
            let model = arch.build(3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let cfg = TrainConfig {
                epochs: 8,
                learning_rate: 0.5,
                ..TrainConfig::default()
            };
            let out = train(model, &set, &set, &cfg).unwrap();
            let first = out.curve.first().unwrap().train_loss;
            let last = out.curve.last().unwrap().train_loss;
            assert!(last < first, "{arch:?}: {first} -> {last}");
            assert!(out.curve.last().unwrap().cv_frame_accuracy > 0.8);
        }
    }

    #[test]
    fn one_step_matches_hand_gradient() {
        // dims 2-2-2-2-2; each layer: W row-major [w00 w01 w10 w11], b [b0 b1].
        let layers: [([f64; 4], [f64; 2]); 4] = [
            ([0.3, -0.2, 0.5, 0.1], [0.0, 0.1]),
            ([-0.4, 0.6, 0.2, 0.3], [0.05, 0.0]),
            ([0.7, -0.1, -0.3, 0.4], [0.0, -0.2]),
            ([0.5, -0.6, 0.2, 0.8], [0.1, 0.0]),
        ];
        let mut params = Vec::new();
        for (w, b) in &layers {
            params.extend_from_slice(w);
            params.extend_from_slice(b);
        }
        let x = [1.0, -0.5];
        let lr = 0.1;

        // Forward pass by hand.
        let mut acts = vec![x.to_vec()];
        for (i, (w, b)) in layers.iter().enumerate() {
            let h = acts.last().unwrap();
            let z = [w[0] * h[0] + w[1] * h[1] + b[0], w[2] * h[0] + w[3] * h[1] + b[1]];
            acts.push(if i < 3 { vec![z[0].tanh(), z[1].tanh()] } else { z.to_vec() });
        }
        let z = &acts[4];
        let p0 = 1.0 / (1.0 + (z[1] - z[0]).exp());
        // Whisper target (class 0): dL/dz = p - onehot.
        let mut delta = [p0 - 1.0, 1.0 - p0];
        let mut expect = params.clone();
        for l in (0..4).rev() {
            let h = &acts[l];
            let (w, _) = &layers[l];
            let off = l * 6;
            let grads = [delta[0] * h[0], delta[0] * h[1], delta[1] * h[0], delta[1] * h[1], delta[0], delta[1]];
            for (k, g) in grads.iter().enumerate() {
                expect[off + k] -= lr * g;
            }
            if l > 0 {
                let dh = [w[0] * delta[0] + w[2] * delta[1], w[1] * delta[0] + w[3] * delta[1]];
                delta = [dh[0] * (1.0 - h[0] * h[0]), dh[1] * (1.0 - h[1] * h[1])];
            }
        }

        let model = Model::Mlp(Mlp::from_params(&[2, 2, 2, 2, 2], params).unwrap());
        let set = vec![(matrix("one", vec![x.to_vec()]), Label::Whisper)];
        let cfg = TrainConfig {
            learning_rate: lr,
            epochs: 1,
            gradient_clip_norm: 1e6,
            ..TrainConfig::default()
        };
        let out = train(model, &set, &set, &cfg).unwrap();
        for (a, b) in out.model.params().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn clipping_bounds_the_step() {
        let set = toy_set(2, 2, 4);
        let model = ArchConfig::Mlp { hidden: [3, 3, 3] }.build(2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1.0,
            epochs: 1,
            mlp_frame_batch: 10_000,
            gradient_clip_norm: 1e-3,
            ..TrainConfig::default()
        };
        let out = train(model.clone(), &set, &set, &cfg).unwrap();
        let step: f64 = out.model.params().iter().zip(model.params()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(step <= 1e-3 + 1e-12, "step {step}");
    }

    #[test]
    fn rejects_bad_configs() {
        let set = toy_set(2, 2, 4);
        let model = ArchConfig::default_mlp().build(2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let cfg = TrainConfig {
            bptt_truncation_len: Truncation::Frames(0),
            ..TrainConfig::default()
        };
        assert!(matches!(train(model.clone(), &set, &set, &cfg), Err(NeuralError::InvalidTrainConfig(_))));
        assert!(matches!(train(model.clone(), &set, &[], &TrainConfig::default()), Err(NeuralError::EmptyCvSet)));
        assert!(matches!(train(model, &[], &set, &TrainConfig::default()), Err(NeuralError::EmptyTrainingSet)));
    }

    #[test]
    fn non_finite_input_aborts_with_location() {
        let mut set = toy_set(2, 2, 4);
        // Matrices reject non-finite values, so drive the loss non-finite
        // through overflowing parameters instead.
        let mut model = ArchConfig::Mlp { hidden: [2, 2, 2] }.build(2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        model.params_mut().iter_mut().for_each(|p| *p = f64::NAN);
        set.truncate(1);
        let err = train(model, &set, &set, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, NeuralError::NonFiniteLoss { epoch: 0, batch: 0 }), "{err}");
    }

    #[test]
    fn truncation_serde() {
        #[derive(Deserialize)]
        struct W {
            t: Truncation,
        }
        let w: W = toml::from_str("t = 64").unwrap();
        assert_eq!(w.t, Truncation::Frames(64));
        let w: W = toml::from_str("t = \"full\"").unwrap();
        assert_eq!(w.t, Truncation::Full);
        assert!(toml::from_str::<W>("t = \"half\"").is_err());
    }
}
