use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::matrix::Matrix;
use crate::{seeded_rng, N_CLASSES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            learning_rate: 0.05,
            epochs: 15,
            seed: 0,
        }
    }
}

/// One binary machine; `w.x + b >= 0` votes for `pos`, otherwise `neg`.
/// `P(pos | f) = 1 / (1 + exp(platt_a * f + platt_b))` with `f` the decision value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub pos: usize,
    pub neg: usize,
    pub w: Vec<f64>,
    pub b: f64,
    pub platt_a: f64,
    pub platt_b: f64,
}

impl BinaryMachine {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.b + self.w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn pos_probability(&self, f: f64) -> f64 {
        sigmoid_neg(self.platt_a * f + self.platt_b)
    }

    /// Mean hinge loss plus `lambda/2 |w|^2` on labels +-1.
    pub fn objective(&self, x: &Matrix, rows: &[(usize, f64)], lambda: f64) -> f64 {
        let hinge: f64 = rows
            .iter()
            .map(|&(i, t)| (1.0 - t * self.decision(x.row(i))).max(0.0))
            .sum();
        hinge / rows.len().max(1) as f64 + 0.5 * lambda * self.w.iter().map(|v| v * v).sum::<f64>()
    }
}

/// One-vs-one linear SVM over the five classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub machines: Vec<BinaryMachine>,
}

/// `1 / (1 + exp(z))` without overflow.
fn sigmoid_neg(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Fits Platt's sigmoid to decision values `f` with labels `pos` by Newton's
/// method with backtracking, using Platt's smoothed targets.
pub fn fit_platt(f: &[f64], pos: &[bool]) -> (f64, f64) {
    let n_pos = pos.iter().filter(|&&p| p).count() as f64;
    let n_neg = pos.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let t: Vec<f64> = pos.iter().map(|&p| if p { hi } else { lo }).collect();
    // Negative log-likelihood of targets t under p = 1/(1+exp(a f + b)):
    // t*softplus(z) + (1-t)*softplus(-z) = softplus(z) - (1-t)*z.
    let nll = |a: f64, b: f64| -> f64 {
        f.iter()
            .zip(&t)
            .map(|(&fi, &ti)| {
                let z = a * fi + b;
                z.max(0.0) + (-z.abs()).exp().ln_1p() - (1.0 - ti) * z
            })
            .sum()
    };
    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let mut fval = nll(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (&fi, &ti) in f.iter().zip(&t) {
            let p = sigmoid_neg(a * fi + b);
            let q = 1.0 - p;
            let d2 = p * q;
            h11 += fi * fi * d2;
            h22 += d2;
            h21 += fi * d2;
            let d1 = ti - p;
            g1 += fi * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = nll(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    (a, b)
}

/// Combines pairwise probabilities `r[i][j] = P(i | i or j)` into class
/// probabilities: `p_i ∝ 1 / (sum_{j != i} 1/r_ij - (K - 2))`.
pub fn couple_pairwise(r: &[[f64; N_CLASSES]; N_CLASSES]) -> [f64; N_CLASSES] {
    let mut p = [0.0; N_CLASSES];
    for i in 0..N_CLASSES {
        let s: f64 = (0..N_CLASSES)
            .filter(|&j| j != i)
            .map(|j| 1.0 / r[i][j].clamp(1e-12, 1.0))
            .sum();
        p[i] = 1.0 / (s - (N_CLASSES as f64 - 2.0));
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

impl SvmModel {
    pub fn votes(&self, row: &[f64]) -> ([usize; N_CLASSES], [f64; N_CLASSES]) {
        let mut votes = [0usize; N_CLASSES];
        let mut margins = [0.0; N_CLASSES];
        for m in &self.machines {
            let f = m.decision(row);
            if f >= 0.0 {
                votes[m.pos] += 1;
            } else {
                votes[m.neg] += 1;
            }
            margins[m.pos] += f;
            margins[m.neg] -= f;
        }
        (votes, margins)
    }

    pub fn predict_into(&self, row: &[f64], out: &mut [f64]) {
        let mut r = [[0.5; N_CLASSES]; N_CLASSES];
        for m in &self.machines {
            let q = m.pos_probability(m.decision(row));
            r[m.pos][m.neg] = q;
            r[m.neg][m.pos] = 1.0 - q;
        }
        out.copy_from_slice(&couple_pairwise(&r));
    }

    pub fn coefficient_importance(&self) -> Vec<f64> {
        let d = self.machines.first().map_or(0, |m| m.w.len());
        let k = self.machines.len().max(1) as f64;
        (0..d)
            .map(|j| self.machines.iter().map(|m| m.w[j].abs()).sum::<f64>() / k)
            .collect()
    }
}

fn train_pair(x: &Matrix, y: &[usize], pos: usize, neg: usize, p: &SvmParams, stream: u64) -> Result<(BinaryMachine, f64), ModelError> {
    let d = x.cols();
    let mut rows: Vec<(usize, f64)> = (0..x.rows())
        .filter_map(|i| match y[i] {
            c if c == pos => Some((i, 1.0)),
            c if c == neg => Some((i, -1.0)),
            _ => None,
        })
        .collect();
    let mut m = BinaryMachine {
        pos,
        neg,
        w: vec![0.0; d],
        b: 0.0,
        platt_a: 0.0,
        platt_b: 0.0,
    };
    let n_pos = rows.iter().filter(|r| r.1 > 0.0).count();
    if n_pos == 0 || n_pos == rows.len() {
        // One side absent: always vote for, and be sure of, the side that was seen.
        m.b = if n_pos == 0 { -1.0 } else { 1.0 };
        m.platt_b = if n_pos == 0 { 30.0 } else { -30.0 };
        return Ok((m, 0.0));
    }
    let n = rows.len();
    let lambda = 1.0 / (p.c * n as f64);
    let mut rng = seeded_rng(p.seed, stream);
    let mut t = 0usize;
    let mut last = f64::NAN;
    for epoch in 0..p.epochs {
        rows.shuffle(&mut rng);
        for &(i, target) in &rows {
            let eta = p.learning_rate / (1.0 + t as f64 / n as f64);
            t += 1;
            let row = x.row(i);
            let margin = target * m.decision(row);
            let shrink = 1.0 - eta * lambda;
            if margin < 1.0 {
                for (w, xj) in m.w.iter_mut().zip(row) {
                    *w = *w * shrink + eta * target * xj;
                }
                m.b += eta * target;
            } else {
                m.w.iter_mut().for_each(|w| *w *= shrink);
            }
        }
        let obj = m.objective(x, &rows, lambda);
        if !obj.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, last_loss: last });
        }
        last = obj;
    }
    let f: Vec<f64> = rows.iter().map(|&(i, _)| m.decision(x.row(i))).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r.1 > 0.0).collect();
    (m.platt_a, m.platt_b) = fit_platt(&f, &labels);
    Ok((m, last))
}

pub(crate) fn train_linear_svm(x: &Matrix, y: &[usize], p: &SvmParams) -> Result<(SvmModel, usize, f64), ModelError> {
    let pairs: Vec<(usize, usize)> = (0..N_CLASSES)
        .flat_map(|a| (a + 1..N_CLASSES).map(move |b| (a, b)))
        .collect();
    let trained: Vec<(BinaryMachine, f64)> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(a, b))| train_pair(x, y, a, b, p, k as u64))
        .collect::<Result<_, _>>()?;
    let loss = trained.iter().map(|t| t.1).sum::<f64>() / trained.len() as f64;
    Ok((
        SvmModel {
            machines: trained.into_iter().map(|t| t.0).collect(),
        },
        p.epochs,
        loss,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_machines() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0], [4.0]]);
        let (m, _, _) = train_linear_svm(&x, &[0, 1, 2, 3, 4], &SvmParams::default()).unwrap();
        assert_eq!(m.machines.len(), 10);
    }

    #[test]
    fn coupling_of_a_clear_winner() {
        let mut r = [[0.5; N_CLASSES]; N_CLASSES];
        for j in 1..N_CLASSES {
            r[0][j] = 0.999;
            r[j][0] = 0.001;
        }
        let p = couple_pairwise(&r);
        assert!(p[0] > 0.99);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(couple_pairwise(&[[0.5; N_CLASSES]; N_CLASSES]), [0.2; N_CLASSES]);
    }

    #[test]
    fn platt_orders_and_saturates() {
        let f: Vec<f64> = (-50..50).map(|i| i as f64 / 10.0).collect();
        let pos: Vec<bool> = f.iter().map(|&v| v > 0.0).collect();
        let (a, b) = fit_platt(&f, &pos);
        assert!(a < 0.0);
        let m = BinaryMachine { pos: 0, neg: 1, w: vec![], b: 0.0, platt_a: a, platt_b: b };
        assert!(m.pos_probability(3.0) > 0.95 && m.pos_probability(-3.0) < 0.05);
    }
}
