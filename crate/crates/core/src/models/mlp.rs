use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::{init_uniform, Adam};
use super::{softmax_in_place, ModelError};
use crate::matrix::Matrix;
use crate::{seeded_rng, N_CLASSES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn grad_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![32, 16],
            activation: Activation::Relu,
            epochs: 12,
            batch_size: 64,
            learning_rate: 0.003,
            seed: 0,
        }
    }
}

/// Dense feed-forward network with a softmax output layer.
///
/// `params` stores each layer's weight matrix (out x in, row-major) followed
/// by its bias vector, layer after layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

impl MlpModel {
    pub fn zeros(n_features: usize, hidden: &[usize], activation: Activation) -> Self {
        let mut sizes = vec![n_features];
        sizes.extend_from_slice(hidden);
        sizes.push(N_CLASSES);
        let n: usize = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        MlpModel {
            sizes,
            activation,
            params: vec![0.0; n],
        }
    }

    pub fn random(n_features: usize, hidden: &[usize], activation: Activation, seed: u64) -> Self {
        let mut m = Self::zeros(n_features, hidden, activation);
        let mut rng = seeded_rng(seed, 0);
        let mut off = 0;
        for w in m.sizes.clone().windows(2) {
            let (fan_in, out) = (w[0], w[1]);
            init_uniform(&mut rng, &mut m.params[off..off + out * fan_in], fan_in);
            off += out * (fan_in + 1);
        }
        m
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let o = off;
            off += w[1] * (w[0] + 1);
            (o, w[0], w[1])
        })
    }

    /// Activations of every layer; the last is the softmax output.
    fn forward(&self, row: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![row.to_vec()];
        let n_layers = self.sizes.len() - 1;
        for (l, (off, fan_in, out)) in self.layers().enumerate() {
            let input = &acts[l];
            let w = &self.params[off..off + out * fan_in];
            let b = &self.params[off + out * fan_in..off + out * (fan_in + 1)];
            let mut z: Vec<f64> = (0..out)
                .map(|o| b[o] + w[o * fan_in..(o + 1) * fan_in].iter().zip(input).map(|(a, x)| a * x).sum::<f64>())
                .collect();
            if l + 1 == n_layers {
                softmax_in_place(&mut z);
            } else {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict_into(&self, row: &[f64], out: &mut [f64]) {
        let acts = self.forward(row);
        out.copy_from_slice(acts.last().expect("output layer"));
    }

    /// Accumulates `scale * d(CE)/d(params)` for one row into `grad`; returns its loss.
    fn backprop(&self, row: &[f64], target: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let acts = self.forward(row);
        let out = acts.last().expect("output layer");
        let loss = -out[target].max(1e-300).ln();
        let mut delta: Vec<f64> = out.iter().enumerate().map(|(k, p)| p - if k == target { 1.0 } else { 0.0 }).collect();
        let layers: Vec<_> = self.layers().collect();
        for l in (0..layers.len()).rev() {
            let (off, fan_in, out_n) = layers[l];
            let input = &acts[l];
            for o in 0..out_n {
                let d = delta[o] * scale;
                let g = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                for (gj, xj) in g.iter_mut().zip(input) {
                    *gj += d * xj;
                }
                grad[off + out_n * fan_in + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + out_n * fan_in];
                let mut prev = vec![0.0; fan_in];
                for o in 0..out_n {
                    for j in 0..fan_in {
                        prev[j] += w[o * fan_in + j] * delta[o];
                    }
                }
                for j in 0..fan_in {
                    prev[j] *= self.activation.grad_from_output(input[j]);
                }
                delta = prev;
            }
        }
        loss
    }

    pub fn loss_and_grad_rows(&self, x: &Matrix, y: &[usize], rows: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let scale = 1.0 / rows.len() as f64;
        let loss: f64 = rows.iter().map(|&i| self.backprop(x.row(i), y[i], scale, &mut grad)).sum();
        (loss * scale, grad)
    }

    /// Mean cross-entropy over all rows and its gradient.
    pub fn loss_and_grad(&self, x: &Matrix, y: &[usize]) -> (f64, Vec<f64>) {
        let rows: Vec<usize> = (0..x.rows()).collect();
        self.loss_and_grad_rows(x, y, &rows)
    }

    pub fn mean_loss(&self, x: &Matrix, y: &[usize]) -> f64 {
        let total: f64 = (0..x.rows())
            .map(|i| -self.forward(x.row(i)).last().expect("output")[y[i]].max(1e-300).ln())
            .sum();
        total / x.rows() as f64
    }
}

pub(crate) const DIVERGENCE_LOSS: f64 = 1e6;

pub(crate) fn train_feedforward(x: &Matrix, y: &[usize], p: &MlpParams) -> Result<(MlpModel, usize, f64), ModelError> {
    let mut model = MlpModel::random(x.cols(), &p.hidden, p.activation, p.seed);
    let mut opt = Adam::new(model.params.len(), p.learning_rate);
    let mut rng = seeded_rng(p.seed, 1);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut last = f64::NAN;
    for epoch in 0..p.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(p.batch_size) {
            let (loss, g) = model.loss_and_grad_rows(x, y, batch);
            total += loss * batch.len() as f64;
            opt.step(&mut model.params, &g);
        }
        let loss = total / x.rows() as f64;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, last_loss: last });
        }
        if loss > DIVERGENCE_LOSS {
            return Err(ModelError::Diverged { epoch, loss });
        }
        log::debug!("ff epoch {epoch}: loss {loss:.6}");
        last = loss;
    }
    Ok((model, p.epochs, last))
}
