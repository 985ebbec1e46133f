//! Brute-force oracles shared by the integration tests and the acceptance
//! runner. Nothing here calls into the code under test except to obtain the
//! value being checked.

#![allow(dead_code)]

use std::panic::{catch_unwind, AssertUnwindSafe};

use canids::canframe::{
    parse_attack_csv_row, parse_normal_log_line, parse_unified_row, write_frame_csv, write_normal_log_line,
};
use canids::clock::LocalClock;
use canids::matrix::Matrix;
use canids::metrics::{class_metrics, confusion, roc_auc_ovr};
use canids::models::{
    train, ForestParams, Hyperparams, LogRegModel, LstmModel, MaxFeatures, MlpModel, ModelParams, TreeParams,
    Activation,
};
use canids::monitor::DetectorState;
use canids::pipeline::{
    apply_scaler, attack_frequency_seconds, fit_scaler, smote_oversample, Dataset, FeatureRow, AT_FREQ_SENTINEL,
};
use canids::{CanFrame, ClassLabel, Timestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const K: usize = 5;

/// `Ok(detail)` on success, `Err(detail)` on the first violation.
pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- metrics

pub struct MetricFixture {
    pub y_true: Vec<usize>,
    pub y_pred: Vec<usize>,
    pub scores: Vec<[f64; K]>,
}

pub fn metric_fixture(rng: &mut ChaCha8Rng, n: usize) -> MetricFixture {
    // Coarse scores on half the fixtures so that ties are common.
    let coarse = rng.gen_bool(0.5);
    let score = |rng: &mut ChaCha8Rng| {
        if coarse {
            f64::from(rng.gen_range(0..5u8)) / 4.0
        } else {
            rng.gen::<f64>()
        }
    };
    MetricFixture {
        y_true: (0..n).map(|_| rng.gen_range(0..K)).collect(),
        y_pred: (0..n).map(|_| rng.gen_range(0..K)).collect(),
        scores: (0..n).map(|_| std::array::from_fn(|_| score(rng))).collect(),
    }
}

fn safe_div(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, by enumerating every pair.
pub fn mann_whitney(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0usize);
    for (i, &pi) in positive.iter().enumerate() {
        if !pi {
            continue;
        }
        for (j, &pj) in positive.iter().enumerate() {
            if pj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

pub fn check_metric_fixture(fx: &MetricFixture) -> Result<(), String> {
    let n = fx.y_true.len();
    let cm = confusion(&fx.y_true, &fx.y_pred).map_err(|e| e.to_string())?;
    let m = class_metrics(&cm).map_err(|e| e.to_string())?;
    let mut macro_p = 0.0;
    let mut macro_r = 0.0;
    let mut macro_f = 0.0;
    for c in 0..K {
        for p in 0..K {
            let count = (0..n).filter(|&i| fx.y_true[i] == c && fx.y_pred[i] == p).count() as u64;
            if cm.counts[c][p] != count {
                return Err(format!("confusion[{c}][{p}] = {} but counted {count}", cm.counts[c][p]));
            }
        }
        let tp = (0..n).filter(|&i| fx.y_true[i] == c && fx.y_pred[i] == c).count();
        let fp = (0..n).filter(|&i| fx.y_true[i] != c && fx.y_pred[i] == c).count();
        let fneg = (0..n).filter(|&i| fx.y_true[i] == c && fx.y_pred[i] != c).count();
        let precision = safe_div(tp, tp + fp);
        let recall = safe_div(tp, tp + fneg);
        let s = &m.per_class[c];
        if s.precision != precision || s.recall != recall || s.f1 != f1(precision, recall) {
            return Err(format!(
                "class {c}: got p/r/f1 {}/{}/{}, oracle {precision}/{recall}/{}",
                s.precision,
                s.recall,
                s.f1,
                f1(precision, recall)
            ));
        }
        if s.support != (tp + fneg) as u64 {
            return Err(format!("class {c}: support {} vs {}", s.support, tp + fneg));
        }
        macro_p += precision;
        macro_r += recall;
        macro_f += f1(precision, recall);
    }
    let correct = (0..n).filter(|&i| fx.y_true[i] == fx.y_pred[i]).count();
    let accuracy = safe_div(correct, n);
    if m.accuracy != accuracy {
        return Err(format!("accuracy {} vs {accuracy}", m.accuracy));
    }
    if (m.macro_precision, m.macro_recall, m.macro_f1) != (macro_p / K as f64, macro_r / K as f64, macro_f / K as f64) {
        return Err("macro averages differ".into());
    }
    // Single-label data: pooled precision and recall are both the accuracy.
    if m.micro_f1 != f1(accuracy, accuracy) {
        return Err(format!("micro f1 {} vs {}", m.micro_f1, f1(accuracy, accuracy)));
    }

    let proba = Matrix::from_rows(&fx.scores);
    let roc = roc_auc_ovr(&fx.y_true, &proba).map_err(|e| e.to_string())?;
    for c in 0..K {
        let positive: Vec<bool> = fx.y_true.iter().map(|&t| t == c).collect();
        let col: Vec<f64> = fx.scores.iter().map(|s| s[c]).collect();
        match (roc.curves[c].auc, mann_whitney(&positive, &col)) {
            (None, None) => {}
            (Some(a), Some(b)) if (a - b).abs() < 1e-12 => {}
            (a, b) => return Err(format!("class {c}: trapezoid auc {a:?}, pair count {b:?}")),
        }
    }
    Ok(())
}

pub fn check_metric_oracles(fixtures: usize, max_n: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for f in 0..fixtures {
        let n = r.gen_range(1..=max_n);
        let fx = metric_fixture(&mut r, n);
        check_metric_fixture(&fx).map_err(|e| format!("fixture {f} (n={n}): {e}"))?;
    }
    Ok(format!("{fixtures} fixtures, n <= {max_n}"))
}

// ---------------------------------------------------------------- gradients

/// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)` over
/// every parameter, with a central difference of step `h`.
pub fn max_rel_error<F>(params: &mut [f64], analytic: &[f64], h: f64, floor: f64, mut loss: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut worst = 0.0f64;
    for j in 0..params.len() {
        let keep = params[j];
        params[j] = keep + h;
        let up = loss(params);
        params[j] = keep - h;
        let down = loss(params);
        params[j] = keep;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[j];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    let data = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Matrix::from_vec(n, d, data)
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..K)).collect()
}

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn logreg_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, d) = (r.gen_range(3..12), r.gen_range(1..6));
    let x = random_matrix(&mut r, n, d);
    let y = random_labels(&mut r, n);
    let c = r.gen_range(0.1..10.0);
    let mut m = LogRegModel::zeros(d);
    m.params.iter_mut().for_each(|p| *p = r.gen_range(-1.0..1.0));
    let (_, g) = m.loss_and_grad(&x, &y, c);
    let mut params = m.params.clone();
    max_rel_error(&mut params, &g, GRAD_STEP, GRAD_FLOOR, |p| {
        let mut probe = m.clone();
        probe.params = p.to_vec();
        probe.loss_and_grad(&x, &y, c).0
    })
}

pub fn mlp_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, d) = (r.gen_range(3..10), r.gen_range(1..6));
    let hidden: Vec<usize> = (0..r.gen_range(1..3)).map(|_| r.gen_range(2..7)).collect();
    let activation = if r.gen_bool(0.5) { Activation::Relu } else { Activation::Tanh };
    let x = random_matrix(&mut r, n, d);
    let y = random_labels(&mut r, n);
    let mut m = MlpModel::random(d, &hidden, activation, seed);
    // The init leaves biases at zero, which can put a ReLU pre-activation
    // exactly on its kink where one-sided differences disagree. Jitter every
    // parameter so the check runs at a generic point.
    m.params.iter_mut().for_each(|p| *p += r.gen_range(-0.5..0.5));
    let (_, g) = m.loss_and_grad(&x, &y);
    let mut params = m.params.clone();
    max_rel_error(&mut params, &g, GRAD_STEP, GRAD_FLOOR, |p| {
        let mut probe = m.clone();
        probe.params = p.to_vec();
        probe.loss_and_grad(&x, &y).0
    })
}

pub fn lstm_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (inputs, hidden, len) = (r.gen_range(1..4), r.gen_range(1..5), r.gen_range(1..5));
    let n_seq = r.gen_range(1..4);
    let rows: Vec<Vec<Vec<f64>>> = (0..n_seq)
        .map(|_| {
            let l = r.gen_range(1..=len);
            (0..l).map(|_| (0..inputs).map(|_| r.gen_range(-2.0..2.0)).collect()).collect()
        })
        .collect();
    let seqs: Vec<Vec<&[f64]>> = rows.iter().map(|s| s.iter().map(Vec::as_slice).collect()).collect();
    let targets = random_labels(&mut r, n_seq);
    let mut m = LstmModel::random(inputs, hidden, len, seed);
    // Larger weights than the default init so gates leave their linear regime.
    m.params.iter_mut().for_each(|p| *p *= 2.0);
    let (_, g) = m.loss_and_grad(&seqs, &targets);
    let mut params = m.params.clone();
    max_rel_error(&mut params, &g, GRAD_STEP, GRAD_FLOOR, |p| {
        let mut probe = m.clone();
        probe.params = p.to_vec();
        probe.loss_and_grad(&seqs, &targets).0
    })
}

pub fn check_gradients(instances: u64) -> Check {
    let mut worst = [0.0f64; 3];
    for s in 0..instances {
        worst[0] = worst[0].max(logreg_grad_error(s));
        worst[1] = worst[1].max(mlp_grad_error(1000 + s));
        worst[2] = worst[2].max(lstm_grad_error(2000 + s));
    }
    let detail = format!(
        "{instances} instances each; max rel err logreg {:.2e}, ff {:.2e}, lstm {:.2e}",
        worst[0], worst[1], worst[2]
    );
    if worst[0] < 1e-5 && worst[1] < 1e-4 && worst[2] < 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- trees

fn gini_weighted(counts: &[usize; K]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    nf * (1.0 - counts.iter().map(|&c| (c as f64 / nf).powi(2)).sum::<f64>())
}

/// Best `(feature, threshold)` by exhaustive search over every midpoint
/// between distinct adjacent values. Ties go to the lowest feature, then the
/// lowest threshold. `None` when the labels are pure or nothing can split.
pub fn exhaustive_stump(x: &Matrix, y: &[usize]) -> Option<(usize, f64)> {
    let n = y.len();
    let mut parent = [0usize; K];
    y.iter().for_each(|&c| parent[c] += 1);
    if parent.iter().filter(|&&c| c > 0).count() <= 1 {
        return None;
    }
    let base = gini_weighted(&parent);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x.cols() {
        let mut values: Vec<f64> = (0..n).map(|i| x.get(i, f)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let t = if mid >= a && mid < b { mid } else { a };
            let (mut l, mut r) = ([0usize; K], [0usize; K]);
            for i in 0..n {
                if x.get(i, f) <= t {
                    l[y[i]] += 1;
                } else {
                    r[y[i]] += 1;
                }
            }
            let gain = base - gini_weighted(&l) - gini_weighted(&r);
            if best.is_none_or(|(_, _, g)| gain > g + 1e-9) {
                best = Some((f, t, gain));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

pub fn tree_fixture(rng: &mut ChaCha8Rng) -> (Matrix, Vec<usize>) {
    let n = rng.gen_range(4..60);
    let d = rng.gen_range(1..6);
    let integer = rng.gen_bool(0.5);
    let data = (0..n * d)
        .map(|_| {
            if integer {
                f64::from(rng.gen_range(0..6u8))
            } else {
                rng.gen_range(-3.0..3.0)
            }
        })
        .collect();
    let classes = rng.gen_range(1..=K);
    let y = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    (Matrix::from_vec(n, d, data), y)
}

fn tree_params(max_depth: usize) -> TreeParams {
    TreeParams {
        max_depth,
        min_samples_split: 2,
        min_samples_leaf: 1,
        seed: 0,
    }
}

pub fn check_stumps(fixtures: u64) -> Check {
    let mut r = rng(31);
    for f in 0..fixtures {
        let (x, y) = tree_fixture(&mut r);
        let model = train(&Hyperparams::DecisionTree(tree_params(1)), &x, &y).map_err(|e| e.to_string())?;
        let ModelParams::DecisionTree(tree) = &model.params else {
            return Err("decision tree kind expected".into());
        };
        let got = tree.root_split();
        let want = exhaustive_stump(&x, &y);
        if got != want {
            return Err(format!("fixture {f}: stump {got:?}, exhaustive {want:?}"));
        }
    }
    Ok(format!("{fixtures} stumps match exhaustive search"))
}

pub fn check_forest_of_one(fixtures: u64) -> Check {
    let mut r = rng(32);
    for f in 0..fixtures {
        let (x, y) = tree_fixture(&mut r);
        let tp = tree_params(r.gen_range(1..8));
        let tree = train(&Hyperparams::DecisionTree(tp.clone()), &x, &y).map_err(|e| e.to_string())?;
        let forest = train(
            &Hyperparams::RandomForest(ForestParams {
                n_trees: 1,
                tree: tp,
                max_features: MaxFeatures::All,
                bootstrap: false,
                sample_fraction: 1.0,
                seed: f,
            }),
            &x,
            &y,
        )
        .map_err(|e| e.to_string())?;
        let (ModelParams::DecisionTree(t), ModelParams::RandomForest(rf)) = (&tree.params, &forest.params) else {
            return Err("unexpected model kinds".into());
        };
        if rf.trees.len() != 1 || &rf.trees[0] != t {
            return Err(format!("fixture {f}: forest member differs from the single tree"));
        }
        if tree.predict(&x).map_err(|e| e.to_string())? != forest.predict(&x).map_err(|e| e.to_string())? {
            return Err(format!("fixture {f}: predictions differ"));
        }
    }
    Ok(format!("{fixtures} one-tree forests equal their tree"))
}

// ---------------------------------------------------------------- pipeline

pub fn random_sorted_frames(rng: &mut ChaCha8Rng, n: usize) -> Vec<CanFrame> {
    let ids: Vec<u16> = (0..rng.gen_range(1..9)).map(|_| rng.gen_range(0..=0x7ff)).collect();
    let mut t = rng.gen_range(0..10_000_000_000u64);
    (0..n)
        .map(|_| {
            // Zero gaps happen; long gaps exceed the sentinel.
            t += match rng.gen_range(0..4) {
                0 => 0,
                1 => rng.gen_range(1..1_000),
                2 => rng.gen_range(1..2_000_000),
                _ => rng.gen_range(1..30_000_000),
            };
            let dlc = rng.gen_range(0..=8);
            let data: Vec<u8> = (0..dlc).map(|_| rng.gen()).collect();
            CanFrame::new(Timestamp::from_micros(t), ids[rng.gen_range(0..ids.len())], &data, ClassLabel::Normal)
                .expect("valid frame")
        })
        .collect()
}

/// Gap to the previous frame with the same ID, found by scanning backwards.
pub fn brute_at_freq(frames: &[CanFrame]) -> Vec<f64> {
    (0..frames.len())
        .map(|i| {
            (0..i)
                .rev()
                .find(|&j| frames[j].can_id() == frames[i].can_id())
                .map_or(AT_FREQ_SENTINEL, |j| {
                    (frames[i].timestamp.as_micros() - frames[j].timestamp.as_micros()) as f64 / 1e6
                })
        })
        .collect()
}

/// A detector around a trivial model; only its feature derivation matters.
pub fn feature_probe(clock: LocalClock) -> DetectorState {
    let rows: Vec<[f64; 12]> = (0..10).map(|i| std::array::from_fn(|j| ((i * 7 + j) % 5) as f64)).collect();
    let x = Matrix::from_rows(&rows);
    let y: Vec<usize> = (0..10).map(|i| i % K).collect();
    let model = train(&Hyperparams::DecisionTree(tree_params(2)), &x, &y).expect("toy tree trains");
    DetectorState::new(model, fit_scaler(&x).expect("scaler"), clock, 0.5).expect("detector")
}

pub fn check_stream_equals_batch(sequences: u64) -> Check {
    let mut r = rng(41);
    let clock = LocalClock::with_offset_hours(-5);
    for s in 0..sequences {
        let n = r.gen_range(1..300);
        let frames = random_sorted_frames(&mut r, n);
        let batch = attack_frequency_seconds(&frames).map_err(|e| e.to_string())?;
        let oracle = brute_at_freq(&frames);
        let ds = Dataset::from_frames(&frames, &clock, true).map_err(|e| e.to_string())?;
        let mut probe = feature_probe(clock);
        for (i, f) in frames.iter().enumerate() {
            let o = probe.observe(f).map_err(|e| e.to_string())?;
            if o.at_freq_sec != batch[i] || batch[i] != oracle[i] {
                return Err(format!(
                    "sequence {s} frame {i}: stream {}, batch {}, oracle {}",
                    o.at_freq_sec, batch[i], oracle[i]
                ));
            }
            if f64::from(o.hour) != ds.rows[i].hour {
                return Err(format!("sequence {s} frame {i}: hour {} vs {}", o.hour, ds.rows[i].hour));
            }
        }
    }
    Ok(format!("{sequences} sequences"))
}

pub fn check_scaler(fixtures: u64) -> Check {
    let mut r = rng(42);
    let mut worst: (f64, f64) = (0.0, 0.0);
    for f in 0..fixtures {
        let (n, d) = (r.gen_range(2..300), r.gen_range(1..13));
        // Offset-to-spread ratios up to 1e6. Beyond that the rounding of
        // the mean alone, divided by the spread, exceeds 1e-9 in f64.
        let spreads: Vec<f64> = (0..d).map(|_| 10f64.powf(r.gen_range(-2.0..4.0))).collect();
        let offsets: Vec<f64> = spreads.iter().map(|s| s * r.gen_range(-1e6..1e6)).collect();
        let constant: Vec<bool> = (0..d).map(|_| r.gen_bool(0.1)).collect();
        let data = (0..n * d)
            .map(|k| {
                let j = k % d;
                if constant[j] {
                    offsets[j]
                } else {
                    offsets[j] + spreads[j] * r.gen_range(-1.0..1.0)
                }
            })
            .collect();
        let x = Matrix::from_vec(n, d, data);
        let params = fit_scaler(&x).map_err(|e| e.to_string())?;
        let z = apply_scaler(&params, &x).map_err(|e| e.to_string())?;
        for j in 0..d {
            let col = z.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            if params.constant[j] {
                if col.iter().any(|&v| v != 0.0) {
                    return Err(format!("fixture {f} column {j}: constant column not mapped to 0"));
                }
                continue;
            }
            worst = (worst.0.max(mean.abs()), worst.1.max((sd - 1.0).abs()));
            if mean.abs() >= 1e-9 || (sd - 1.0).abs() >= 1e-9 {
                return Err(format!("fixture {f} column {j}: mean {mean:e}, sd {sd}"));
            }
        }
    }
    Ok(format!("{fixtures} matrices; max |mean| {:.1e}, max |sd-1| {:.1e}", worst.0, worst.1))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum()
}

/// Euclidean distance from `p` to the segment `[a, b]`.
pub fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 == 0.0 {
        0.0
    } else {
        (p.iter().zip(a).zip(&ab).map(|((pi, ai), d)| (pi - ai) * d).sum::<f64>() / len2).clamp(0.0, 1.0)
    };
    let proj: Vec<f64> = a.iter().zip(&ab).map(|(ai, d)| ai + t * d).collect();
    dist2(p, &proj).sqrt()
}

pub fn check_smote(fixtures: u64) -> Check {
    let mut r = rng(43);
    let mut synthetic = 0usize;
    let mut worst = 0.0f64;
    for f in 0..fixtures {
        let k = r.gen_range(1..6);
        let sizes: [usize; K] = std::array::from_fn(|_| r.gen_range(2..20));
        let mut rows = Vec::new();
        for (c, &size) in sizes.iter().enumerate() {
            for _ in 0..size {
                let v: [f64; 12] = std::array::from_fn(|_| r.gen_range(-10.0..10.0));
                let order = rows.len() as u64;
                rows.push(FeatureRow::from_full_vector(&v, ClassLabel::ALL[c], order));
            }
        }
        let ds = Dataset::from_rows(rows, true);
        let target = *sizes.iter().max().expect("five classes");
        let out = smote_oversample(&ds, k, target, f).map_err(|e| e.to_string())?;
        if out.class_counts != [target; K] {
            return Err(format!("fixture {f}: counts {:?}, target {target}", out.class_counts));
        }
        for row in &out.rows[ds.len()..] {
            let p = row.full_vector();
            let members: Vec<[f64; 12]> = ds.rows.iter().filter(|o| o.label == row.label).map(|o| o.full_vector()).collect();
            // Some original x and one of its k nearest same-class neighbors
            // must span a segment through the synthetic point.
            let mut best = f64::INFINITY;
            for (i, a) in members.iter().enumerate() {
                let mut nn: Vec<(f64, usize)> = members
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(j, b)| (dist2(a, b), j))
                    .collect();
                nn.sort_by(|x, y| x.0.total_cmp(&y.0));
                for &(_, j) in nn.iter().take(k.min(members.len() - 1)) {
                    best = best.min(segment_distance(&p, a, &members[j]));
                }
            }
            worst = worst.max(best);
            if best >= 1e-9 {
                return Err(format!("fixture {f}: synthetic row {best:e} from every neighbor segment"));
            }
            synthetic += 1;
        }
    }
    Ok(format!("{synthetic} synthetic rows; max distance {worst:.1e}"))
}

// ---------------------------------------------------------------- parsers

pub fn random_line(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(0..96);
    let bytes: Vec<u8> = match rng.gen_range(0..3) {
        // Raw bytes.
        0 => (0..len).map(|_| rng.gen()).collect(),
        // Characters the grammars actually use.
        1 => {
            const ALPHABET: &[u8] = b"0123456789abcdefABCDEF,.#()TR -xX\t";
            (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
        }
        // A valid row with a few bytes overwritten.
        _ => {
            let f = random_frame(rng);
            let mut line = if rng.gen_bool(0.5) {
                write_frame_csv(&f).into_bytes()
            } else {
                write_normal_log_line(&f, "can0").into_bytes()
            };
            for _ in 0..rng.gen_range(1..4) {
                if !line.is_empty() {
                    let i = rng.gen_range(0..line.len());
                    line[i] = rng.gen();
                }
            }
            line
        }
    };
    String::from_utf8_lossy(&bytes).into_owned()
}

pub fn random_frame(rng: &mut ChaCha8Rng) -> CanFrame {
    let dlc = rng.gen_range(0..=8);
    let data: Vec<u8> = (0..dlc).map(|_| rng.gen()).collect();
    let ts = Timestamp::from_micros(rng.gen_range(0..4_000_000_000_000_000u64));
    let label = ClassLabel::ALL[rng.gen_range(0..K)];
    CanFrame::new(ts, rng.gen_range(0..=0x7ff), &data, label).expect("valid frame")
}

pub fn check_fuzz(lines: usize) -> Check {
    let mut r = rng(51);
    let mut accepted = 0usize;
    for i in 0..lines {
        let line = random_line(&mut r);
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            let a = parse_unified_row(&line, i).is_ok();
            let b = parse_normal_log_line(&line, i).is_ok();
            let c = parse_attack_csv_row(&line, i, ClassLabel::DoS).is_ok();
            usize::from(a || b || c)
        }));
        match outcome {
            Ok(ok) => accepted += ok,
            Err(_) => return Err(format!("panic on line {line:?}")),
        }
    }
    Ok(format!("{lines} lines, {accepted} parsed, no panics"))
}

pub fn check_roundtrip(frames: usize) -> Check {
    let mut r = rng(52);
    for _ in 0..frames {
        let f = random_frame(&mut r);
        let csv = write_frame_csv(&f);
        let back = parse_unified_row(&csv, 1).map_err(|e| format!("{csv}: {e}"))?;
        if back != f {
            return Err(format!("unified round trip changed {f:?} into {back:?}"));
        }
        let log = write_normal_log_line(&f, "vcan0");
        let back = parse_normal_log_line(&log, 1).map_err(|e| format!("{log}: {e}"))?;
        if back != f.with_label(ClassLabel::Normal) {
            return Err(format!("log round trip changed {f:?} into {back:?}"));
        }
    }
    Ok(format!("{frames} frames round-trip through both formats"))
}
