mod common;

use canids::canframe::{RawRecord, RecordSource};
use canids::clock::LocalClock;
use canids::matrix::Matrix;
use canids::pipeline::{
    apply_scaler, assemble_matrix, attack_frequency_seconds, clean, decode_labels, encode_labels, fit_scaler,
    split_train_test, stratified_folds, Dataset, EncoderMode, EncoderSpec, FeatureRow, AT_FREQ_SENTINEL,
};
use canids::{CanFrame, ClassLabel, Timestamp};
use common::{
    brute_at_freq, check_scaler, check_smote, check_stream_equals_batch, random_sorted_frames, rng, segment_distance,
};
use proptest::prelude::*;

#[test]
fn streamed_at_freq_equals_batch() {
    check_stream_equals_batch(100).unwrap();
}

#[test]
fn scaler_standardises_every_column() {
    check_scaler(100).unwrap();
}

#[test]
fn smote_points_lie_on_neighbor_segments() {
    check_smote(30).unwrap();
}

#[test]
fn segment_distance_helper() {
    assert_eq!(segment_distance(&[1.0, 1.0], &[0.0, 0.0], &[2.0, 2.0]), 0.0);
    assert!((segment_distance(&[0.0, 1.0], &[0.0, 0.0], &[2.0, 0.0]) - 1.0).abs() < 1e-15);
    // Beyond the end the nearest point is the endpoint.
    assert!((segment_distance(&[3.0, 0.0], &[0.0, 0.0], &[2.0, 0.0]) - 1.0).abs() < 1e-15);
}

#[test]
fn unsorted_stream_is_rejected() {
    let f = |t| CanFrame::new(Timestamp::from_micros(t), 1, &[], ClassLabel::Normal).unwrap();
    assert!(attack_frequency_seconds(&[f(5), f(3)]).is_err());
}

#[test]
fn first_sighting_gets_the_sentinel() {
    let f = |t, id| CanFrame::new(Timestamp::from_micros(t), id, &[1], ClassLabel::Normal).unwrap();
    let got = attack_frequency_seconds(&[f(0, 1), f(1_000, 2), f(2_500, 1)]).unwrap();
    assert_eq!(got, vec![AT_FREQ_SENTINEL, AT_FREQ_SENTINEL, 0.0025]);
}

#[test]
fn short_payloads_are_zero_filled_and_flagged() {
    let f = CanFrame::new(Timestamp::from_micros(0), 0x10, &[7, 9], ClassLabel::Fuzzy).unwrap();
    let row = FeatureRow::from_frame(&f, 0.5, 13, 0);
    assert_eq!(row.data, [7.0, 9.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(row.imputed_mask, 0b1111_1100);
    assert_eq!(row.full_vector()[10..], [0.5, 13.0]);
}

#[test]
fn hour_follows_the_configured_offset() {
    // 1970-01-01T03:30Z.
    let f = CanFrame::new(Timestamp::from_micros(12_600_000_000), 1, &[], ClassLabel::Normal).unwrap();
    let utc = Dataset::from_frames(&[f], &LocalClock::UTC, true).unwrap();
    let east = Dataset::from_frames(&[f], &LocalClock::with_offset_hours(9), true).unwrap();
    let west = Dataset::from_frames(&[f], &LocalClock::with_offset_hours(-5), true).unwrap();
    assert_eq!((utc.rows[0].hour, east.rows[0].hour, west.rows[0].hour), (3.0, 12.0, 22.0));
}

#[test]
fn matrix_columns_follow_the_feature_mode() {
    let mut r = rng(3);
    let frames = random_sorted_frames(&mut r, 20);
    let ds = Dataset::from_frames(&frames, &LocalClock::UTC, true).unwrap();
    assert_eq!(assemble_matrix(&ds, true).x.cols(), 12);
    let without = assemble_matrix(&ds, false);
    assert_eq!(without.x.cols(), 10);
    assert!(!without.column_names.iter().any(|c| c == "hour" || c == "at_freq_sec"));
}

#[test]
fn clean_drops_incomplete_records() {
    let ok = RawRecord::tokenize(RecordSource::AttackCsv, 1, "1478198376.389427,0316,8,05,21,68,09,21,21,00,6f,R");
    let missing = RawRecord::tokenize(RecordSource::AttackCsv, 2, "1478198376.389427,,8,05,21,68,09,21,21,00,6f,R");
    let (kept, report) = clean(vec![ok, missing]);
    assert_eq!((kept.len(), report.removed), (1, 1));
}

#[test]
fn constant_column_maps_to_zero() {
    let x = Matrix::from_rows(&[[4.0, 1.0], [4.0, 2.0], [4.0, 3.0]]);
    let p = fit_scaler(&x).unwrap();
    let z = apply_scaler(&p, &x).unwrap();
    assert_eq!(z.column(0), vec![0.0; 3]);
    assert!(apply_scaler(&p, &Matrix::from_rows(&[[1.0]])).is_err());
}

#[test]
fn labels_round_trip_through_both_encoders() {
    let labels: Vec<ClassLabel> = (0..20).map(|i| ClassLabel::ALL[i % 5]).collect();
    for mode in [EncoderMode::Ordinal, EncoderMode::OneHot] {
        assert_eq!(decode_labels(&encode_labels(&labels, EncoderSpec { mode })), labels);
    }
}

fn labelled_dataset(counts: [usize; 5]) -> Dataset {
    let mut rows = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let order = rows.len() as u64;
            rows.push(FeatureRow::from_full_vector(&[order as f64; 12], ClassLabel::ALL[c], order));
        }
    }
    Dataset::from_rows(rows, true)
}

#[test]
fn split_is_stratified_and_keeps_order() {
    let ds = labelled_dataset([500, 40, 30, 20, 10]);
    let (train, test) = split_train_test(&ds, 0.2, 1).unwrap();
    assert_eq!(test.class_counts, [100, 8, 6, 4, 2]);
    assert_eq!(train.len() + test.len(), ds.len());
    assert!(train.rows.windows(2).all(|w| w[0].order < w[1].order));
    assert!(test.rows.windows(2).all(|w| w[0].order < w[1].order));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn batch_at_freq_matches_backward_scan(seed in any::<u64>(), n in 0usize..200) {
        let mut r = rng(seed);
        let frames = random_sorted_frames(&mut r, n);
        prop_assert_eq!(attack_frequency_seconds(&frames).unwrap(), brute_at_freq(&frames));
    }

    #[test]
    fn at_freq_is_non_negative_and_bounded_by_sentinel_or_gap(seed in any::<u64>(), n in 1usize..200) {
        let mut r = rng(seed);
        let frames = random_sorted_frames(&mut r, n);
        let span = (frames[n - 1].timestamp.as_micros() - frames[0].timestamp.as_micros()) as f64 / 1e6;
        for v in attack_frequency_seconds(&frames).unwrap() {
            prop_assert!(v >= 0.0);
            prop_assert!(v == AT_FREQ_SENTINEL || v <= span);
        }
    }

    #[test]
    fn folds_partition_and_stratify(counts in prop::array::uniform5(3usize..40), k in 2usize..4, seed in any::<u64>()) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let fold = stratified_folds(&labels, k, seed).unwrap();
        for c in 0..5 {
            let per: Vec<usize> = (0..k).map(|f| (0..labels.len()).filter(|&i| labels[i] == c && fold[i] == f).count()).collect();
            let (lo, hi) = (per.iter().min().unwrap(), per.iter().max().unwrap());
            prop_assert!(hi - lo <= 1, "class {} fold sizes {:?}", c, per);
        }
    }

    #[test]
    fn split_sizes_track_the_fraction(counts in prop::array::uniform5(2usize..200), frac in 0.05f64..0.95, seed in any::<u64>()) {
        let ds = labelled_dataset(counts);
        let (train, test) = split_train_test(&ds, frac, seed).unwrap();
        for c in 0..5 {
            prop_assert!(test.class_counts[c] >= 1 && train.class_counts[c] >= 1);
            prop_assert_eq!(test.class_counts[c] + train.class_counts[c], counts[c]);
        }
        let expected = frac * ds.len() as f64;
        prop_assert!((test.len() as f64 - expected).abs() <= 5.0);
    }
}
