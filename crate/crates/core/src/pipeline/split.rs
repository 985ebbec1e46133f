use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, PipelineError};
use crate::canframe::ClassLabel;
use crate::seeded_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderMode {
    Ordinal,
    OneHot,
}

/// Class order is always the [`ClassLabel`] ordinal order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub mode: EncoderMode,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EncodedTargets {
    Ordinal(Vec<usize>),
    OneHot(Vec<[f64; ClassLabel::COUNT]>),
}

pub fn encode_labels(labels: &[ClassLabel], spec: EncoderSpec) -> EncodedTargets {
    match spec.mode {
        EncoderMode::Ordinal => EncodedTargets::Ordinal(labels.iter().map(|l| l.ordinal()).collect()),
        EncoderMode::OneHot => EncodedTargets::OneHot(
            labels
                .iter()
                .map(|l| {
                    let mut v = [0.0; ClassLabel::COUNT];
                    v[l.ordinal()] = 1.0;
                    v
                })
                .collect(),
        ),
    }
}

/// Inverse of [`encode_labels`]. One-hot rows decode to their largest entry.
pub fn decode_labels(targets: &EncodedTargets) -> Vec<ClassLabel> {
    match targets {
        EncodedTargets::Ordinal(v) => v
            .iter()
            .map(|&o| ClassLabel::from_ordinal(o).expect("ordinal in range"))
            .collect(),
        EncodedTargets::OneHot(v) => v
            .iter()
            .map(|row| {
                let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                ClassLabel::ALL[best]
            })
            .collect(),
    }
}

/// Splits `total` across classes proportionally with the largest-remainder
/// rule, so each class gets floor or ceil of its exact share.
fn allocate(counts: &[usize; ClassLabel::COUNT], fraction: f64) -> [usize; ClassLabel::COUNT] {
    let total: usize = counts.iter().sum();
    let target = (total as f64 * fraction).round() as usize;
    let mut alloc = [0usize; ClassLabel::COUNT];
    let mut rema: Vec<(f64, usize)> = Vec::new();
    for c in 0..ClassLabel::COUNT {
        let exact = counts[c] as f64 * fraction;
        alloc[c] = exact.floor() as usize;
        rema.push((exact - exact.floor(), c));
    }
    let mut left = target.saturating_sub(alloc.iter().sum());
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in &rema {
        if left == 0 {
            break;
        }
        if alloc[c] < counts[c] {
            alloc[c] += 1;
            left -= 1;
        }
    }
    alloc
}

/// Stratified, seeded train/test split. Both halves keep stream order.
pub fn split_train_test(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), PipelineError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(PipelineError::InvalidParameter(format!(
            "test_fraction {test_fraction} outside (0, 1)"
        )));
    }
    if dataset.is_empty() {
        return Err(PipelineError::Empty);
    }
    for c in ClassLabel::ALL {
        let n = dataset.class_counts[c.ordinal()];
        if n == 1 {
            return Err(PipelineError::ClassTooSmall {
                class: c,
                count: n,
                needed: 2,
            });
        }
    }
    let mut alloc = allocate(&dataset.class_counts, test_fraction);
    for c in 0..ClassLabel::COUNT {
        let n = dataset.class_counts[c];
        if n >= 2 {
            alloc[c] = alloc[c].clamp(1, n - 1);
        }
    }
    let mut in_test = vec![false; dataset.len()];
    for c in ClassLabel::ALL {
        let mut idx: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.rows[i].label == c)
            .collect();
        let mut rng = seeded_rng(seed, c.ordinal() as u64);
        idx.shuffle(&mut rng);
        for &i in &idx[..alloc[c.ordinal()].min(idx.len())] {
            in_test[i] = true;
        }
    }
    let train: Vec<usize> = (0..dataset.len()).filter(|&i| !in_test[i]).collect();
    let test: Vec<usize> = (0..dataset.len()).filter(|&i| in_test[i]).collect();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Assigns every row of `labels` to one of `k` folds, stratified by class.
/// Returns the fold index per row.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>, PipelineError> {
    if k < 2 {
        return Err(PipelineError::InvalidParameter(format!("k = {k} must be >= 2")));
    }
    let mut fold = vec![0usize; labels.len()];
    // Continue the round-robin across classes so fold sizes stay balanced.
    let mut next = 0usize;
    for c in 0..ClassLabel::COUNT {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < k {
            return Err(PipelineError::ClassTooSmall {
                class: ClassLabel::ALL[c],
                count: idx.len(),
                needed: k,
            });
        }
        idx.shuffle(&mut seeded_rng(seed, c as u64));
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::FeatureRow;

    fn dataset(counts: [usize; 5]) -> Dataset {
        let mut rows = Vec::new();
        let mut order = 0;
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                rows.push(FeatureRow::from_full_vector(&[order as f64; 12], ClassLabel::ALL[c], order));
                order += 1;
            }
        }
        Dataset::from_rows(rows, true)
    }

    #[test]
    fn stratified_proportions() {
        let ds = dataset([573, 211, 97, 68, 51]);
        let (train, test) = split_train_test(&ds, 0.2, 1).unwrap();
        assert_eq!((train.len(), test.len()), (800, 200));
        for c in 0..5 {
            let exact = ds.class_counts[c] as f64 * 0.2;
            assert!((test.class_counts[c] as f64 - exact).abs() <= 1.0);
        }
        assert!(train.rows.windows(2).all(|w| w[0].order < w[1].order));
    }

    #[test]
    fn split_is_seeded() {
        let ds = dataset([50, 50, 50, 50, 50]);
        assert_eq!(split_train_test(&ds, 0.3, 9).unwrap(), split_train_test(&ds, 0.3, 9).unwrap());
        assert_ne!(split_train_test(&ds, 0.3, 9).unwrap().1, split_train_test(&ds, 0.3, 10).unwrap().1);
    }

    #[test]
    fn singleton_class_rejected() {
        let ds = dataset([10, 10, 10, 10, 1]);
        assert!(matches!(
            split_train_test(&ds, 0.999, 1),
            Err(PipelineError::ClassTooSmall { count: 1, .. })
        ));
        assert!(split_train_test(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn encoders_roundtrip() {
        let spec = EncoderSpec { mode: EncoderMode::OneHot };
        match encode_labels(&[ClassLabel::DoS], spec) {
            EncodedTargets::OneHot(v) => assert_eq!(v[0], [0.0, 1.0, 0.0, 0.0, 0.0]),
            _ => unreachable!(),
        }
        for mode in [EncoderMode::Ordinal, EncoderMode::OneHot] {
            let enc = encode_labels(&ClassLabel::ALL, EncoderSpec { mode });
            assert_eq!(decode_labels(&enc), ClassLabel::ALL.to_vec());
        }
        let ord = encode_labels(&[ClassLabel::Normal, ClassLabel::GearSpoof], EncoderSpec { mode: EncoderMode::Ordinal });
        assert_eq!(ord, EncodedTargets::Ordinal(vec![0, 4]));
    }

    #[test]
    fn folds_are_balanced() {
        let labels: Vec<usize> = (0..300).map(|i| i % 5).collect();
        let f = stratified_folds(&labels, 3, 4).unwrap();
        for fold in 0..3 {
            for c in 0..5 {
                let n = (0..300).filter(|&i| f[i] == fold && labels[i] == c).count();
                assert_eq!(n, 20);
            }
        }
        assert!(stratified_folds(&[0, 0, 1], 3, 1).is_err());
    }
}
