use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::{softmax_in_place, ModelError};
use crate::matrix::Matrix;
use crate::{seeded_rng, N_CLASSES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    /// Inverse L2 strength, scaled like the usual `C * sum(loss) + |W|^2 / 2`.
    pub c: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop once an epoch improves the full objective by less than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            c: 1.0,
            learning_rate: 0.01,
            epochs: 30,
            batch_size: 256,
            tolerance: 1e-7,
            seed: 0,
        }
    }
}

/// Multinomial logistic regression.
///
/// `params` holds the 5 x d weight matrix row-major, then the 5 biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub n_features: usize,
    pub params: Vec<f64>,
}

impl LogRegModel {
    pub fn zeros(n_features: usize) -> Self {
        LogRegModel {
            n_features,
            params: vec![0.0; N_CLASSES * (n_features + 1)],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..N_CLASSES * self.n_features]
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn logits(&self, row: &[f64], out: &mut [f64]) {
        let d = self.n_features;
        let bias = &self.params[N_CLASSES * d..];
        for c in 0..N_CLASSES {
            let w = &self.params[c * d..(c + 1) * d];
            out[c] = bias[c] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn predict_into(&self, row: &[f64], out: &mut [f64]) {
        self.logits(row, out);
        softmax_in_place(out);
    }

    /// Objective on the given rows: mean cross-entropy plus
    /// `|W|^2 / (2 C n_total)`, and its gradient in `params` layout.
    pub fn loss_and_grad_rows(&self, x: &Matrix, y: &[usize], rows: &[usize], c: f64, n_total: usize) -> (f64, Vec<f64>) {
        let d = self.n_features;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut p = [0.0; N_CLASSES];
        let inv = 1.0 / rows.len() as f64;
        for &i in rows {
            let row = x.row(i);
            self.predict_into(row, &mut p);
            loss -= p[y[i]].max(1e-300).ln();
            for k in 0..N_CLASSES {
                let delta = (p[k] - if y[i] == k { 1.0 } else { 0.0 }) * inv;
                let g = &mut grad[k * d..(k + 1) * d];
                for (gj, xj) in g.iter_mut().zip(row) {
                    *gj += delta * xj;
                }
                grad[N_CLASSES * d + k] += delta;
            }
        }
        loss *= inv;
        let lambda = 1.0 / (c * n_total as f64);
        let w = self.weights();
        loss += 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
        for (g, v) in grad.iter_mut().zip(w) {
            *g += lambda * v;
        }
        (loss, grad)
    }

    /// Full-data objective and gradient.
    pub fn loss_and_grad(&self, x: &Matrix, y: &[usize], c: f64) -> (f64, Vec<f64>) {
        let rows: Vec<usize> = (0..x.rows()).collect();
        self.loss_and_grad_rows(x, y, &rows, c, x.rows())
    }

    /// Mean absolute coefficient per column over the five classes.
    pub fn coefficient_importance(&self) -> Vec<f64> {
        let d = self.n_features;
        (0..d)
            .map(|j| (0..N_CLASSES).map(|k| self.params[k * d + j].abs()).sum::<f64>() / N_CLASSES as f64)
            .collect()
    }
}

pub(crate) fn train_logreg(x: &Matrix, y: &[usize], p: &LogRegParams) -> Result<(LogRegModel, usize, f64), ModelError> {
    let n = x.rows();
    let mut model = LogRegModel::zeros(x.cols());
    let mut opt = Adam::new(model.params.len(), p.learning_rate);
    let mut rng = seeded_rng(p.seed, 0);
    let mut order: Vec<usize> = (0..n).collect();
    let mut last = model.loss_and_grad(x, y, p.c).0;
    let mut epochs_run = 0;
    for epoch in 0..p.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(p.batch_size) {
            let (_, g) = model.loss_and_grad_rows(x, y, batch, p.c, n);
            opt.step(&mut model.params, &g);
        }
        epochs_run = epoch + 1;
        let loss = model.loss_and_grad(x, y, p.c).0;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, last_loss: last });
        }
        let improved = last - loss;
        last = loss;
        if improved.abs() < p.tolerance {
            break;
        }
    }
    log::debug!("logreg: {epochs_run} epochs, loss {last:.6}");
    Ok((model, epochs_run, last))
}
