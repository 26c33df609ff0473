//! Central-difference verification of analytic gradients.

use super::{cross_entropy_loss, Model, NeuralError};
use crate::audio::Label;
use crate::features::FeatureMatrix;

/// Denominator floor for the relative error.
const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub max_rel_error: f64,
    /// Parameter index (within the whole model) of the worst entry.
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
}

fn summed_loss(model: &Model, x: &FeatureMatrix, label: Label) -> Result<f64, NeuralError> {
    let traj = model.posteriors(x)?;
    Ok(cross_entropy_loss(&traj, label) * traj.len() as f64)
}

/// Compares the full-sequence analytic gradient of the summed frame loss
/// with central differences of step `epsilon`, for every parameter.
pub fn gradient_check(model: &Model, x: &FeatureMatrix, label: Label, epsilon: f64) -> Result<GradCheckReport, NeuralError> {
    let mut analytic = vec![0.0; model.params().len()];
    model.accumulate_gradient(x, label, None, &mut analytic)?;

    let mut probe = model.clone();
    let mut blocks = Vec::new();
    let (mut max_a, mut max_n) = (0.0f64, 0.0f64);
    for (name, range) in model.param_blocks() {
        let mut worst = (0.0f64, range.start);
        for i in range {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + epsilon;
            let plus = summed_loss(&probe, x, label)?;
            probe.params_mut()[i] = orig - epsilon;
            let minus = summed_loss(&probe, x, label)?;
            probe.params_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            max_a = max_a.max(a.abs());
            max_n = max_n.max(numeric.abs());
            if rel > worst.0 {
                worst = (rel, i);
            }
        }
        blocks.push(BlockError {
            name,
            max_rel_error: worst.0,
            worst_index: worst.1,
        });
    }
    let max_rel_error = blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        blocks,
        max_rel_error,
        max_abs_analytic: max_a,
        max_abs_numeric: max_n,
    })
}
