use std::ops::Range;

use rand::Rng;

use super::init::glorot_uniform;
use super::loss::frame_loss_and_logit_grad;
use super::math::{affine, affine_backward, softmax2};
use super::NeuralError;
use crate::audio::Label;

/// Frame-wise feed-forward classifier: tanh hidden layers, two-way softmax.
///
/// Parameters live in one flat vector; layer `l` stores its row-major weight
/// matrix `[dims[l+1] x dims[l]]` followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

impl Mlp {
    /// All-zero parameters; `dims` runs from input to the 2-way output.
    pub fn zeros(dims: &[usize]) -> Result<Self, NeuralError> {
        if dims.len() != 5 || dims.iter().any(|&d| d == 0) || dims[4] != 2 {
            return Err(NeuralError::InvalidArchitecture(format!(
                "MLP dims {dims:?} must be non-zero: input, three hidden layers, 2-way output"
            )));
        }
        let n = dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        Ok(Mlp {
            dims: dims.to_vec(),
            params: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(dims: &[usize], rng: &mut R) -> Result<Self, NeuralError> {
        let mut m = Self::zeros(dims)?;
        for l in 0..m.num_layers() {
            let (w, _) = m.layer_ranges(l);
            let (fan_in, fan_out) = (m.dims[l], m.dims[l + 1]);
            glorot_uniform(&mut m.params[w], fan_in, fan_out, rng);
        }
        Ok(m)
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self, NeuralError> {
        let mut m = Self::zeros(dims)?;
        if params.len() != m.params.len() {
            return Err(NeuralError::DimMismatch {
                expected: m.params.len(),
                found: params.len(),
            });
        }
        m.params = params;
        Ok(m)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_ranges(&self, l: usize) -> (Range<usize>, Range<usize>) {
        let mut off = 0;
        for k in 0..l {
            off += self.dims[k + 1] * self.dims[k] + self.dims[k + 1];
        }
        let w = off..off + self.dims[l + 1] * self.dims[l];
        let b = w.end..w.end + self.dims[l + 1];
        (w, b)
    }

    pub fn param_blocks(&self) -> Vec<(String, Range<usize>)> {
        (0..self.num_layers())
            .flat_map(|l| {
                let (w, b) = self.layer_ranges(l);
                [(format!("layer{l}.weight"), w), (format!("layer{l}.bias"), b)]
            })
            .collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), NeuralError> {
        if x.len() != self.input_dim() {
            return Err(NeuralError::DimMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Activations of every layer (input first, logits last).
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for l in 0..self.num_layers() {
            let (w, b) = self.layer_ranges(l);
            let mut z = vec![0.0; self.dims[l + 1]];
            affine(&self.params[w], &self.params[b], &acts[l], &mut z);
            if l + 1 < self.num_layers() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    /// Class probabilities `[p_whisper, p_normal]` for one frame.
    pub fn forward(&self, x: &[f64]) -> Result<[f64; 2], NeuralError> {
        self.check_dim(x)?;
        let acts = self.activations(x);
        let z = acts.last().unwrap();
        Ok(softmax2([z[0], z[1]]))
    }

    /// Adds the gradient of this frame's loss to `grad`; returns the loss.
    pub fn accumulate_frame_gradient(&self, x: &[f64], label: Label, grad: &mut [f64]) -> Result<f64, NeuralError> {
        self.check_dim(x)?;
        let acts = self.activations(x);
        let z = acts.last().unwrap();
        let (loss, g) = frame_loss_and_logit_grad(softmax2([z[0], z[1]]), label);
        if g == [0.0, 0.0] {
            return Ok(loss);
        }
        let mut delta = g.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (w, b) = self.layer_ranges(l);
            let input = &acts[l];
            let mut d_input = if l > 0 { Some(vec![0.0; input.len()]) } else { None };
            {
                let (gw, rest) = grad[w.start..b.end].split_at_mut(w.len());
                affine_backward(&self.params[w.clone()], input, &delta, gw, rest, d_input.as_deref_mut());
            }
            if let Some(mut d) = d_input {
                for (dv, a) in d.iter_mut().zip(input) {
                    *dv *= 1.0 - a * a;
                }
                delta = d;
            }
        }
        Ok(loss)
    }
}
