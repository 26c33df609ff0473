use crate::audio::Label;

use super::PosteriorTrajectory;

/// Probabilities are clamped to this band before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Per-frame cross-entropy on the two-way softmax output and its gradient
/// with respect to the logits. Inside the clamp band the gradient is zero,
/// matching the clamped loss exactly.
pub fn frame_loss_and_logit_grad(probs: [f64; 2], label: Label) -> (f64, [f64; 2]) {
    let c = label.class_index();
    let pc = probs[c];
    let clamped = pc.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let loss = -clamped.ln();
    if pc <= PROB_CLAMP || pc >= 1.0 - PROB_CLAMP {
        return (loss, [0.0, 0.0]);
    }
    let mut g = probs;
    g[c] -= 1.0;
    (loss, g)
}

/// Mean over frames of `-ln p_correct`, with every frame carrying the
/// utterance label.
pub fn cross_entropy_loss(traj: &PosteriorTrajectory, label: Label) -> f64 {
    if traj.is_empty() {
        return 0.0;
    }
    let total: f64 = traj
        .p_whisper
        .iter()
        .map(|&p| {
            let pc = if label.is_whisper() { p } else { 1.0 - p };
            -pc.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()
        })
        .sum();
    total / traj.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(p: &[f64]) -> PosteriorTrajectory {
        PosteriorTrajectory::new("u", p.to_vec())
    }

    #[test]
    fn perfect_posteriors_give_zero_loss() {
        let l = cross_entropy_loss(&traj(&[1.0, 1.0]), Label::Whisper);
        assert!(l.abs() < 1e-11);
        let l = cross_entropy_loss(&traj(&[0.0]), Label::Normal);
        assert!(l.abs() < 1e-11);
    }

    #[test]
    fn half_gives_ln2() {
        let l = cross_entropy_loss(&traj(&[0.5; 4]), Label::Normal);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn direct_evaluation() {
        let l = cross_entropy_loss(&traj(&[0.9, 0.8]), Label::Whisper);
        let expect = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((l - expect).abs() < 1e-15);
        assert!((l - 0.1643).abs() < 1e-4);
    }

    #[test]
    fn saturated_gradient_is_zero() {
        let (l, g) = frame_loss_and_logit_grad([1.0, 0.0], Label::Whisper);
        assert!(l < 1e-11);
        assert_eq!(g, [0.0, 0.0]);
        let (_, g) = frame_loss_and_logit_grad([0.25, 0.75], Label::Whisper);
        assert_eq!(g, [-0.75, 0.75]);
    }
}
