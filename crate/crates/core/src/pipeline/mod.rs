//! Data preparation: cleaning, hex decoding, calendar expansion, time-series
//! features, oversampling, label encoding, scaling and matrix assembly.
//!
//! `at_freq_sec` is read as the per-CAN-ID inter-arrival time: the gap since
//! the most recent earlier frame carrying the same identifier. The first frame
//! of an identifier gets [`AT_FREQ_SENTINEL`]. This is an interpretation; the
//! feature was only ever described in prose.

mod scaler;
mod smote;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canframe::{CanFrame, ClassLabel, RawRecord, Timestamp};
use crate::clock::{CivilTime, LocalClock};
use crate::matrix::Matrix;

pub use scaler::{apply_scaler, fit_scaler, ScalerParams};
pub use smote::smote_oversample;
pub use split::{
    decode_labels, encode_labels, split_train_test, stratified_folds, EncodedTargets, EncoderMode,
    EncoderSpec,
};

/// `at_freq_sec` of the first frame seen for an identifier, in seconds.
pub const AT_FREQ_SENTINEL: f64 = 10.0;

/// Columns without the time-series features, in matrix order.
pub const BASE_COLUMNS: [&str; 10] = [
    "can_id", "dlc", "data0", "data1", "data2", "data3", "data4", "data5", "data6", "data7",
];
/// The two time-series columns appended when time features are enabled.
pub const TIME_COLUMNS: [&str; 2] = ["at_freq_sec", "hour"];

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("frames not sorted by timestamp at index {0}")]
    Unsorted(usize),
    #[error("dataset is empty")]
    Empty,
    #[error("class {class} has {count} rows; at least {needed} required")]
    ClassTooSmall {
        class: ClassLabel,
        count: usize,
        needed: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("column count mismatch: expected {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },
}

/// Outcome of [`clean`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub kept: usize,
    pub removed: usize,
}

/// Drops records with missing or empty mandatory fields.
pub fn clean(records: Vec<RawRecord>) -> (Vec<RawRecord>, CleanReport) {
    let total = records.len();
    let kept: Vec<RawRecord> = records.into_iter().filter(RawRecord::is_complete).collect();
    let report = CleanReport {
        kept: kept.len(),
        removed: total - kept.len(),
    };
    if total > 0 && kept.is_empty() {
        log::warn!("clean: all {total} records were incomplete");
    } else if report.removed > 0 {
        log::info!("clean: removed {} incomplete records", report.removed);
    }
    (kept, report)
}

/// Calendar decomposition of every frame at the clock's offset.
pub fn derive_time_columns(frames: &[CanFrame], clock: &LocalClock) -> Vec<CivilTime> {
    frames.iter().map(|f| clock.civil(f.timestamp)).collect()
}

/// Incremental per-identifier inter-arrival tracker.
#[derive(Clone, Debug)]
pub struct InterArrival {
    last_seen: Vec<Option<Timestamp>>,
}

impl Default for InterArrival {
    fn default() -> Self {
        InterArrival {
            last_seen: vec![None; usize::from(crate::canframe::MAX_STANDARD_ID) + 1],
        }
    }
}

impl InterArrival {
    pub fn observe(&mut self, frame: &CanFrame) -> f64 {
        let slot = &mut self.last_seen[usize::from(frame.can_id())];
        let gap = match *slot {
            Some(prev) => frame.timestamp.seconds_since(prev),
            None => AT_FREQ_SENTINEL,
        };
        *slot = Some(frame.timestamp);
        gap
    }
}

/// Per-frame `at_freq_sec` for a timestamp-sorted stream.
pub fn attack_frequency_seconds(frames: &[CanFrame]) -> Result<Vec<f64>, PipelineError> {
    if let Some(i) = frames.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        return Err(PipelineError::Unsorted(i + 1));
    }
    let mut tracker = InterArrival::default();
    Ok(frames.iter().map(|f| tracker.observe(f)).collect())
}

/// One numeric row. Payload bytes beyond the DLC are imputed as 0 and flagged
/// in `imputed_mask` (bit `i` for `data[i]`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub can_id: f64,
    pub dlc: f64,
    pub data: [f64; 8],
    pub imputed_mask: u8,
    pub at_freq_sec: f64,
    pub hour: f64,
    pub label: ClassLabel,
    /// Position in the source stream; rows sort back into time order by it.
    pub order: u64,
}

impl FeatureRow {
    pub fn from_frame(frame: &CanFrame, at_freq_sec: f64, hour: u32, order: u64) -> Self {
        let mut data = [0.0; 8];
        for (d, b) in data.iter_mut().zip(frame.data()) {
            *d = f64::from(*b);
        }
        let dlc = frame.dlc();
        FeatureRow {
            can_id: f64::from(frame.can_id()),
            dlc: f64::from(dlc),
            data,
            imputed_mask: (0xffu16 << dlc) as u8,
            at_freq_sec,
            hour: f64::from(hour),
            label: frame.label,
            order,
        }
    }

    /// All twelve numeric columns in matrix order.
    pub fn full_vector(&self) -> [f64; 12] {
        let mut v = [0.0; 12];
        v[0] = self.can_id;
        v[1] = self.dlc;
        v[2..10].copy_from_slice(&self.data);
        v[10] = self.at_freq_sec;
        v[11] = self.hour;
        v
    }

    pub fn from_full_vector(v: &[f64; 12], label: ClassLabel, order: u64) -> Self {
        let mut data = [0.0; 8];
        data.copy_from_slice(&v[2..10]);
        FeatureRow {
            can_id: v[0],
            dlc: v[1],
            data,
            imputed_mask: 0,
            at_freq_sec: v[10],
            hour: v[11],
            label,
            order,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<FeatureRow>,
    pub column_names: Vec<String>,
    pub time_features_enabled: bool,
    pub class_counts: [usize; ClassLabel::COUNT],
}

pub fn column_names(time_features: bool) -> Vec<String> {
    let mut names: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    if time_features {
        names.extend(TIME_COLUMNS.iter().map(|s| s.to_string()));
    }
    names
}

impl Dataset {
    pub fn from_rows(rows: Vec<FeatureRow>, time_features_enabled: bool) -> Self {
        let mut class_counts = [0usize; ClassLabel::COUNT];
        for r in &rows {
            class_counts[r.label.ordinal()] += 1;
        }
        Dataset {
            rows,
            column_names: column_names(time_features_enabled),
            time_features_enabled,
            class_counts,
        }
    }

    /// Decodes a timestamp-sorted stream into feature rows.
    pub fn from_frames(
        frames: &[CanFrame],
        clock: &LocalClock,
        time_features_enabled: bool,
    ) -> Result<Self, PipelineError> {
        let freq = attack_frequency_seconds(frames)?;
        let rows = frames
            .iter()
            .zip(freq)
            .enumerate()
            .map(|(i, (f, gap))| FeatureRow::from_frame(f, gap, clock.hour(f.timestamp), i as u64))
            .collect();
        Ok(Self::from_rows(rows, time_features_enabled))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn with_time_features(mut self, enabled: bool) -> Self {
        self.time_features_enabled = enabled;
        self.column_names = column_names(enabled);
        self
    }

    pub fn labels(&self) -> Vec<ClassLabel> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let rows = idx.iter().map(|&i| self.rows[i]).collect();
        Dataset::from_rows(rows, self.time_features_enabled)
    }

    /// Sorts rows back into stream order.
    pub fn sort_by_order(&mut self) {
        self.rows.sort_by_key(|r| r.order);
    }
}

/// Feature matrix, ordinal targets and column names.
#[derive(Clone, Debug, PartialEq)]
pub struct Assembled {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub column_names: Vec<String>,
}

/// Builds the model input: 12 columns with time features, 10 without.
/// Calendar fields other than the hour are never included.
pub fn assemble_matrix(dataset: &Dataset, time_features: bool) -> Assembled {
    let cols = if time_features { 12 } else { 10 };
    let mut data = Vec::with_capacity(dataset.len() * cols);
    for r in &dataset.rows {
        data.extend_from_slice(&r.full_vector()[..cols]);
    }
    Assembled {
        x: Matrix::from_vec(dataset.len(), cols, data),
        y: dataset.rows.iter().map(|r| r.label.ordinal()).collect(),
        column_names: column_names(time_features),
    }
}

/// Writes an assembled matrix as a headered CSV with a trailing `label` column.
pub fn write_matrix_csv<W: std::io::Write>(mut out: W, assembled: &Assembled) -> std::io::Result<()> {
    writeln!(out, "{},label", assembled.column_names.join(","))?;
    for (row, y) in assembled.x.iter_rows().zip(&assembled.y) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{},{}", cells.join(","), y)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canframe::RecordSource;

    fn frame(t: u64, id: u16) -> CanFrame {
        CanFrame::new(Timestamp::from_micros(t), id, &[1, 2], ClassLabel::Normal).unwrap()
    }

    #[test]
    fn at_freq_examples() {
        let f = [frame(0, 1), frame(300, 1), frame(600, 1)];
        let g = attack_frequency_seconds(&f).unwrap();
        assert_eq!(g[0], AT_FREQ_SENTINEL);
        assert!((g[1] - 0.0003).abs() < 1e-15 && (g[2] - 0.0003).abs() < 1e-15);
        assert_eq!(attack_frequency_seconds(&f[..1]).unwrap(), vec![10.0]);
        let f = [frame(0, 0xA), frame(1_000_000, 0xB), frame(2_000_000, 0xA)];
        assert_eq!(attack_frequency_seconds(&f).unwrap(), vec![10.0, 10.0, 2.0]);
        let f = [frame(5, 1), frame(4, 1)];
        assert_eq!(attack_frequency_seconds(&f), Err(PipelineError::Unsorted(1)));
    }

    #[test]
    fn clean_drops_incomplete() {
        let mut records = Vec::new();
        for i in 0..100 {
            let line = if i % 33 == 5 {
                format!("{i}.0,0123,,01,R")
            } else {
                format!("{i}.0,0123,1,01,R")
            };
            records.push(RawRecord::tokenize(RecordSource::AttackCsv, i + 1, &line));
        }
        let (kept, report) = clean(records.clone());
        assert_eq!(report.removed, 3);
        assert_eq!(kept.len(), 97);
        let good: Vec<_> = records.iter().filter(|r| !r.fields[2].is_empty()).cloned().collect();
        assert_eq!(clean(good.clone()).0, good);
        let bad = vec![RawRecord::tokenize(RecordSource::AttackCsv, 1, ",,,")];
        let (kept, report) = clean(bad);
        assert!(kept.is_empty());
        assert_eq!(report.removed, 1);
    }

    #[test]
    fn calendar_columns() {
        let clock = LocalClock::UTC;
        let c = derive_time_columns(&[frame(0, 1)], &clock)[0];
        assert_eq!((c.hour, c.day, c.month, c.year), (0, 1, 1, 1970));
        let ts = 1_478_198_376_389_427;
        let c = derive_time_columns(&[frame(ts, 1), frame(ts + 3_600_000_000, 1)], &clock);
        assert_eq!(c[0].hour, 18);
        assert_eq!((c[0].minute, c[0].second, c[0].millisecond), (39, 36, 389));
        assert_eq!(c[1].hour, 19);
    }

    #[test]
    fn matrix_arity_and_columns() {
        let frames = [frame(0, 1), frame(10, 2)];
        let ds = Dataset::from_frames(&frames, &LocalClock::UTC, true).unwrap();
        let with = assemble_matrix(&ds, true);
        let without = assemble_matrix(&ds, false);
        assert_eq!(with.x.cols(), 12);
        assert_eq!(without.x.cols(), 10);
        assert_eq!(with.column_names[10..], ["at_freq_sec", "hour"]);
        assert_eq!(with.x.select_cols(&(0..10).collect::<Vec<_>>()), without.x);
        assert_eq!(ds.rows[0].imputed_mask, 0b1111_1100);
    }
}
