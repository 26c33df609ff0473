//! Stacked LSTM with a two-way softmax read-out on the top layer.
//!
//! Gates use the standard formulation: for layer input `x` and previous
//! hidden state `h`, `[i, f, g, o] = [σ, σ, tanh, σ](W [x; h] + b)`,
//! `c = f ⊙ c_prev + i ⊙ g`, `h = o ⊙ tanh(c)`.

use std::ops::Range;

use rand::Rng;

use super::init::glorot_uniform;
use super::loss::frame_loss_and_logit_grad;
use super::math::{affine, affine_backward, sigmoid, softmax2};
use super::NeuralError;
use crate::audio::Label;
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    input_dim: usize,
    hidden: usize,
    layers: usize,
    params: Vec<f64>,
}

/// Recurrent state carried between frames (and across truncation
/// boundaries within an utterance).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

struct StepCache {
    xh: Vec<f64>,
    /// Gate activations `[i, f, g, o]`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl Lstm {
    pub fn zeros(input_dim: usize, hidden: usize, layers: usize) -> Result<Self, NeuralError> {
        if input_dim == 0 || hidden == 0 || layers == 0 {
            return Err(NeuralError::InvalidArchitecture(format!(
                "LSTM needs non-zero input ({input_dim}), cells ({hidden}) and layers ({layers})"
            )));
        }
        let mut n = 0;
        for l in 0..layers {
            let in_l = if l == 0 { input_dim } else { hidden };
            n += 4 * hidden * (in_l + hidden) + 4 * hidden;
        }
        n += 2 * hidden + 2;
        Ok(Lstm {
            input_dim,
            hidden,
            layers,
            params: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights per gate block, zero biases except the forget
    /// gate bias, which starts at +1.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, layers: usize, rng: &mut R) -> Result<Self, NeuralError> {
        let mut m = Self::zeros(input_dim, hidden, layers)?;
        let h = hidden;
        for l in 0..layers {
            let (w, b) = m.layer_ranges(l);
            let cols = m.layer_input(l) + h;
            for gate in 0..4 {
                let rows = w.start + gate * h * cols..w.start + (gate + 1) * h * cols;
                glorot_uniform(&mut m.params[rows], cols, h, rng);
            }
            m.params[b.start + h..b.start + 2 * h].fill(1.0);
        }
        let (w, _) = m.output_ranges();
        glorot_uniform(&mut m.params[w], h, 2, rng);
        Ok(m)
    }

    pub fn from_params(input_dim: usize, hidden: usize, layers: usize, params: Vec<f64>) -> Result<Self, NeuralError> {
        let mut m = Self::zeros(input_dim, hidden, layers)?;
        if params.len() != m.params.len() {
            return Err(NeuralError::DimMismatch {
                expected: m.params.len(),
                found: params.len(),
            });
        }
        m.params = params;
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.hidden
        }
    }

    fn layer_ranges(&self, l: usize) -> (Range<usize>, Range<usize>) {
        let h = self.hidden;
        let mut off = 0;
        for k in 0..l {
            off += 4 * h * (self.layer_input(k) + h) + 4 * h;
        }
        let w = off..off + 4 * h * (self.layer_input(l) + h);
        let b = w.end..w.end + 4 * h;
        (w, b)
    }

    fn output_ranges(&self) -> (Range<usize>, Range<usize>) {
        let (_, last_b) = self.layer_ranges(self.layers - 1);
        let w = last_b.end..last_b.end + 2 * self.hidden;
        (w.clone(), w.end..w.end + 2)
    }

    pub fn param_blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut blocks = Vec::new();
        for l in 0..self.layers {
            let (w, b) = self.layer_ranges(l);
            blocks.push((format!("lstm{l}.weight"), w));
            blocks.push((format!("lstm{l}.bias"), b));
        }
        let (w, b) = self.output_ranges();
        blocks.push(("output.weight".into(), w));
        blocks.push(("output.bias".into(), b));
        blocks
    }

    pub fn zero_state(&self) -> LstmState {
        LstmState {
            h: vec![vec![0.0; self.hidden]; self.layers],
            c: vec![vec![0.0; self.hidden]; self.layers],
        }
    }

    fn check(&self, x: &FeatureMatrix) -> Result<(), NeuralError> {
        if x.dim() != self.input_dim {
            return Err(NeuralError::DimMismatch {
                expected: self.input_dim,
                found: x.dim(),
            });
        }
        if x.num_frames() == 0 {
            return Err(NeuralError::EmptySequence(x.utterance_id.clone()));
        }
        Ok(())
    }

    /// Advances one layer by one frame, updating `state` in place.
    fn cell_step(&self, l: usize, input: &[f64], state: &mut LstmState, z: &mut [f64]) -> StepCache {
        let h = self.hidden;
        let (w, b) = self.layer_ranges(l);
        let mut xh = Vec::with_capacity(input.len() + h);
        xh.extend_from_slice(input);
        xh.extend_from_slice(&state.h[l]);
        affine(&self.params[w], &self.params[b], &xh, z);
        let mut gates = vec![0.0; 4 * h];
        for j in 0..h {
            gates[j] = sigmoid(z[j]);
            gates[h + j] = sigmoid(z[h + j]);
            gates[2 * h + j] = z[2 * h + j].tanh();
            gates[3 * h + j] = sigmoid(z[3 * h + j]);
        }
        let c_prev = std::mem::take(&mut state.c[l]);
        let mut c = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        for j in 0..h {
            c[j] = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
            tanh_c[j] = c[j].tanh();
            state.h[l][j] = gates[3 * h + j] * tanh_c[j];
        }
        state.c[l] = c;
        StepCache {
            xh,
            gates,
            c_prev,
            tanh_c,
        }
    }

    fn readout(&self, h_top: &[f64]) -> [f64; 2] {
        let (w, b) = self.output_ranges();
        let mut z = [0.0; 2];
        affine(&self.params[w], &self.params[b], h_top, &mut z);
        softmax2(z)
    }

    /// Class probabilities for one frame, advancing `state`.
    pub fn step(&self, x: &[f64], state: &mut LstmState) -> [f64; 2] {
        let mut z = vec![0.0; 4 * self.hidden];
        let mut input = x.to_vec();
        for l in 0..self.layers {
            self.cell_step(l, &input, state, &mut z);
            input.clone_from(&state.h[l]);
        }
        self.readout(&input)
    }

    /// Per-frame whisper posteriors from a zero initial state.
    pub fn posteriors(&self, x: &FeatureMatrix) -> Result<Vec<f64>, NeuralError> {
        self.check(x)?;
        let mut state = self.zero_state();
        Ok(x.rows().map(|row| self.step(row, &mut state)[0]).collect())
    }

    /// Truncated BPTT over one utterance. The sequence is split into
    /// segments of `truncation` frames (`None` = whole sequence); state flows
    /// forward across segment boundaries but gradients stop there. Adds the
    /// gradient of the summed frame loss to `grad` and returns that sum.
    pub fn accumulate_gradient(&self, x: &FeatureMatrix, label: Label, truncation: Option<usize>, grad: &mut [f64]) -> Result<f64, NeuralError> {
        self.check(x)?;
        let seg_len = truncation.unwrap_or(usize::MAX).max(1);
        let mut state = self.zero_state();
        let mut total = 0.0;
        let mut start = 0;
        while start < x.num_frames() {
            let end = x.num_frames().min(start.saturating_add(seg_len));
            total += self.segment(x, start..end, label, &mut state, grad);
            start = end;
        }
        Ok(total)
    }

    fn segment(&self, x: &FeatureMatrix, frames: Range<usize>, label: Label, state: &mut LstmState, grad: &mut [f64]) -> f64 {
        let h = self.hidden;
        let top = self.layers - 1;
        let mut z = vec![0.0; 4 * h];
        let mut caches: Vec<Vec<StepCache>> = Vec::with_capacity(frames.len());
        let mut tops: Vec<Vec<f64>> = Vec::with_capacity(frames.len());
        let mut logit_grads: Vec<[f64; 2]> = Vec::with_capacity(frames.len());
        let mut loss = 0.0;

        for t in frames {
            let mut per_layer = Vec::with_capacity(self.layers);
            let mut input = x.row(t).to_vec();
            for l in 0..self.layers {
                per_layer.push(self.cell_step(l, &input, state, &mut z));
                input.clone_from(&state.h[l]);
            }
            let (l, g) = frame_loss_and_logit_grad(self.readout(&input), label);
            loss += l;
            caches.push(per_layer);
            tops.push(input);
            logit_grads.push(g);
        }

        let (ow, ob) = self.output_ranges();
        let mut dh_next = vec![vec![0.0; h]; self.layers];
        let mut dc_next = vec![vec![0.0; h]; self.layers];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..caches.len()).rev() {
            let mut dh = vec![0.0; h];
            {
                let (gw, gb) = grad[ow.start..ob.end].split_at_mut(ow.len());
                affine_backward(&self.params[ow.clone()], &tops[t], &logit_grads[t], gw, gb, Some(&mut dh));
            }
            for l in (0..=top).rev() {
                let cache = &caches[t][l];
                let (i_g, rest) = cache.gates.split_at(h);
                let (f_g, rest) = rest.split_at(h);
                let (g_g, o_g) = rest.split_at(h);
                for j in 0..h {
                    let dh_j = dh[j] + dh_next[l][j];
                    let tc = cache.tanh_c[j];
                    let dc = dh_j * o_g[j] * (1.0 - tc * tc) + dc_next[l][j];
                    dz[j] = dc * g_g[j] * i_g[j] * (1.0 - i_g[j]);
                    dz[h + j] = dc * cache.c_prev[j] * f_g[j] * (1.0 - f_g[j]);
                    dz[2 * h + j] = dc * i_g[j] * (1.0 - g_g[j] * g_g[j]);
                    dz[3 * h + j] = dh_j * tc * o_g[j] * (1.0 - o_g[j]);
                    dc_next[l][j] = dc * f_g[j];
                }
                let (w, b) = self.layer_ranges(l);
                let mut dxh = vec![0.0; cache.xh.len()];
                {
                    let (gw, gb) = grad[w.start..b.end].split_at_mut(w.len());
                    affine_backward(&self.params[w], &cache.xh, &dz, gw, gb, Some(&mut dxh));
                }
                let in_l = self.layer_input(l);
                dh_next[l].copy_from_slice(&dxh[in_l..]);
                if l > 0 {
                    dh.copy_from_slice(&dxh[..in_l]);
                }
            }
        }
        loss
    }
}
