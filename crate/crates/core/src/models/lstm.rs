use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::DIVERGENCE_LOSS;
use super::optim::{init_uniform, Adam};
use super::{softmax_in_place, ModelError};
use crate::matrix::Matrix;
use crate::{seeded_rng, N_CLASSES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub hidden: usize,
    /// Rows per window; row `i` is classified from rows `i-L+1..=i`.
    pub sequence_length: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Windows sampled per epoch; all when `None`.
    pub windows_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for LstmParams {
    fn default() -> Self {
        LstmParams {
            hidden: 16,
            sequence_length: 16,
            epochs: 6,
            batch_size: 32,
            learning_rate: 0.005,
            windows_per_epoch: Some(60_000),
            seed: 0,
        }
    }
}

/// Single-layer LSTM with a softmax head on the last hidden state.
///
/// `params` layout: gate weights `4H x (I+H)` row-major with gate blocks in
/// the order input, forget, cell, output; gate biases `4H`; head weights
/// `5 x H`; head biases `5`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub n_inputs: usize,
    pub hidden: usize,
    pub sequence_length: usize,
    pub params: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-step values kept for backpropagation.
struct Trace {
    /// `[x_t; h_{t-1}]` per step.
    z: Vec<f64>,
    /// Activated gates per step, `4H` each.
    gates: Vec<f64>,
    /// Cell state after each step, with the zero initial state first.
    c: Vec<f64>,
    /// Hidden state after each step, with the zero initial state first.
    h: Vec<f64>,
    probs: [f64; N_CLASSES],
}

impl LstmModel {
    pub fn zeros(n_inputs: usize, hidden: usize, sequence_length: usize) -> Self {
        let n = 4 * hidden * (n_inputs + hidden) + 4 * hidden + N_CLASSES * hidden + N_CLASSES;
        LstmModel {
            n_inputs,
            hidden,
            sequence_length,
            params: vec![0.0; n],
        }
    }

    pub fn random(n_inputs: usize, hidden: usize, sequence_length: usize, seed: u64) -> Self {
        let mut m = Self::zeros(n_inputs, hidden, sequence_length);
        let mut rng = seeded_rng(seed, 0);
        let (w, _, v, _) = m.offsets();
        let cols = n_inputs + hidden;
        init_uniform(&mut rng, &mut m.params[w..w + 4 * hidden * cols], cols);
        init_uniform(&mut rng, &mut m.params[v..v + N_CLASSES * hidden], hidden);
        m
    }

    /// Offsets of gate weights, gate biases, head weights, head biases.
    fn offsets(&self) -> (usize, usize, usize, usize) {
        let h = self.hidden;
        let b = 4 * h * (self.n_inputs + h);
        let v = b + 4 * h;
        (0, b, v, v + N_CLASSES * h)
    }

    fn forward(&self, seq: &[&[f64]]) -> Trace {
        let (hid, ni) = (self.hidden, self.n_inputs);
        let cols = ni + hid;
        let (_, bo, vo, co) = self.offsets();
        let t_len = seq.len();
        let mut tr = Trace {
            z: vec![0.0; t_len * cols],
            gates: vec![0.0; t_len * 4 * hid],
            c: vec![0.0; (t_len + 1) * hid],
            h: vec![0.0; (t_len + 1) * hid],
            probs: [0.0; N_CLASSES],
        };
        for (t, x) in seq.iter().enumerate() {
            let z = &mut tr.z[t * cols..(t + 1) * cols];
            z[..ni].copy_from_slice(x);
            z[ni..].copy_from_slice(&tr.h[t * hid..(t + 1) * hid]);
            let gates = &mut tr.gates[t * 4 * hid..(t + 1) * 4 * hid];
            for (r, g) in gates.iter_mut().enumerate() {
                let w = &self.params[r * cols..(r + 1) * cols];
                let a = self.params[bo + r] + w.iter().zip(z.iter()).map(|(p, q)| p * q).sum::<f64>();
                *g = if r / hid == 2 { a.tanh() } else { sigmoid(a) };
            }
            for k in 0..hid {
                let (i, f, g, o) = (gates[k], gates[hid + k], gates[2 * hid + k], gates[3 * hid + k]);
                let c = f * tr.c[t * hid + k] + i * g;
                tr.c[(t + 1) * hid + k] = c;
                tr.h[(t + 1) * hid + k] = o * c.tanh();
            }
        }
        let h_last = &tr.h[t_len * hid..(t_len + 1) * hid];
        for k in 0..N_CLASSES {
            let v = &self.params[vo + k * hid..vo + (k + 1) * hid];
            tr.probs[k] = self.params[co + k] + v.iter().zip(h_last).map(|(a, b)| a * b).sum::<f64>();
        }
        softmax_in_place(&mut tr.probs);
        tr
    }

    /// Probabilities for the last element of `seq` (oldest row first).
    pub fn predict_sequence(&self, seq: &[&[f64]], out: &mut [f64]) {
        out.copy_from_slice(&self.forward(seq).probs);
    }

    /// Scores every row of a stream-ordered matrix on its trailing window.
    pub fn predict_stream(&self, x: &Matrix, out: &mut Matrix) {
        for i in 0..x.rows() {
            let seq = window(x, i, self.sequence_length);
            self.predict_sequence(&seq, out.row_mut(i));
        }
    }

    /// Backpropagation through time for one sequence; adds `scale * grad`.
    fn backprop(&self, seq: &[&[f64]], target: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let tr = self.forward(seq);
        let (hid, ni) = (self.hidden, self.n_inputs);
        let cols = ni + hid;
        let (_, bo, vo, co) = self.offsets();
        let t_len = seq.len();
        let loss = -tr.probs[target].max(1e-300).ln();

        let mut dh = vec![0.0; hid];
        let h_last = &tr.h[t_len * hid..];
        for k in 0..N_CLASSES {
            let d = (tr.probs[k] - if k == target { 1.0 } else { 0.0 }) * scale;
            grad[co + k] += d;
            for j in 0..hid {
                grad[vo + k * hid + j] += d * h_last[j];
                dh[j] += d * self.params[vo + k * hid + j];
            }
        }
        let mut dc = vec![0.0; hid];
        let mut da = vec![0.0; 4 * hid];
        for t in (0..t_len).rev() {
            let gates = &tr.gates[t * 4 * hid..(t + 1) * 4 * hid];
            for k in 0..hid {
                let (i, f, g, o) = (gates[k], gates[hid + k], gates[2 * hid + k], gates[3 * hid + k]);
                let c = tr.c[(t + 1) * hid + k];
                let c_prev = tr.c[t * hid + k];
                let tc = c.tanh();
                dc[k] += dh[k] * o * (1.0 - tc * tc);
                da[k] = dc[k] * g * i * (1.0 - i);
                da[hid + k] = dc[k] * c_prev * f * (1.0 - f);
                da[2 * hid + k] = dc[k] * i * (1.0 - g * g);
                da[3 * hid + k] = dh[k] * tc * o * (1.0 - o);
                dc[k] *= f;
            }
            let z = &tr.z[t * cols..(t + 1) * cols];
            dh.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..4 * hid {
                let d = da[r];
                if d == 0.0 {
                    continue;
                }
                grad[bo + r] += d;
                let w = &self.params[r * cols..(r + 1) * cols];
                let g = &mut grad[r * cols..(r + 1) * cols];
                for j in 0..cols {
                    g[j] += d * z[j];
                }
                for j in 0..hid {
                    dh[j] += d * w[ni + j];
                }
            }
        }
        loss
    }

    /// Mean cross-entropy over the given sequences and its gradient.
    pub fn loss_and_grad(&self, seqs: &[Vec<&[f64]>], targets: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let scale = 1.0 / seqs.len() as f64;
        let loss: f64 = seqs
            .iter()
            .zip(targets)
            .map(|(s, &t)| self.backprop(s, t, scale, &mut grad))
            .sum();
        (loss * scale, grad)
    }
}

/// Rows `i-len+1..=i` of `x` (fewer at the start of the stream).
pub(crate) fn window(x: &Matrix, i: usize, len: usize) -> Vec<&[f64]> {
    let start = (i + 1).saturating_sub(len);
    (start..=i).map(|j| x.row(j)).collect()
}

pub(crate) fn train_lstm(x: &Matrix, y: &[usize], p: &LstmParams) -> Result<(LstmModel, usize, f64), ModelError> {
    let mut model = LstmModel::random(x.cols(), p.hidden, p.sequence_length, p.seed);
    let mut opt = Adam::new(model.params.len(), p.learning_rate);
    let mut rng = seeded_rng(p.seed, 1);
    let mut ends: Vec<usize> = (0..x.rows()).collect();
    let per_epoch = p.windows_per_epoch.unwrap_or(usize::MAX).min(ends.len());
    let mut last = f64::NAN;
    for epoch in 0..p.epochs {
        ends.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in ends[..per_epoch].chunks(p.batch_size) {
            let seqs: Vec<Vec<&[f64]>> = batch.iter().map(|&i| window(x, i, p.sequence_length)).collect();
            let targets: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let (loss, g) = model.loss_and_grad(&seqs, &targets);
            total += loss * batch.len() as f64;
            opt.step(&mut model.params, &g);
        }
        let loss = total / per_epoch as f64;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, last_loss: last });
        }
        if loss > DIVERGENCE_LOSS {
            return Err(ModelError::Diverged { epoch, loss });
        }
        log::debug!("lstm epoch {epoch}: loss {loss:.6}");
        last = loss;
    }
    Ok((model, p.epochs, last))
}
