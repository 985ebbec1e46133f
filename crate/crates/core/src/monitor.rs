//! Online detector.
//!
//! Frames are processed strictly in arrival order. Each accepted frame gets
//! its `at_freq_sec` from the per-ID last-seen table (the same rule as the
//! batch pipeline), is scaled with the training scaler and classified. A
//! frame earlier than the last accepted one is counted and dropped.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canframe::{
    is_header, parse_attack_csv_row, parse_normal_log_line, parse_unified_row, InputFormat, MAX_STANDARD_ID,
};
use crate::clock::LocalClock;
use crate::models::{argmax, ModelError, ModelParams, TrainedModel};
use crate::pipeline::{FeatureRow, ScalerParams, AT_FREQ_SENTINEL, BASE_COLUMNS, TIME_COLUMNS};
use crate::{CanFrame, ClassLabel, Timestamp, N_CLASSES};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Upper bound on tracked identifiers (the whole 11-bit space).
pub const MAX_TRACKED_IDS: usize = MAX_STANDARD_ID as usize + 1;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("frame at {frame} is earlier than the detector clock {clock}")]
    LateFrame { frame: Timestamp, clock: Timestamp },
    #[error("scaler expects {scaler} columns but the model takes {model}")]
    SchemaMismatch { scaler: usize, model: usize },
    #[error("model takes {0} features; expected {base} or {full}", base = BASE_COLUMNS.len(), full = BASE_COLUMNS.len() + TIME_COLUMNS.len())]
    UnsupportedArity(usize),
    #[error("alert threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("alert serialization: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub sequence: u64,
    pub frame: CanFrame,
    pub predicted: ClassLabel,
    pub probabilities: [f64; N_CLASSES],
    pub at_freq_sec: f64,
    pub hour: u32,
}

/// What the detector derived for one accepted frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub at_freq_sec: f64,
    pub hour: u32,
    pub probabilities: [f64; N_CLASSES],
    pub alert: Option<Alert>,
}

pub struct DetectorState {
    last_seen: HashMap<u16, Timestamp>,
    model: TrainedModel,
    scaler: ScalerParams,
    local_clock: LocalClock,
    threshold: f64,
    time_features: bool,
    /// Timestamp of the last accepted frame.
    clock: Option<Timestamp>,
    /// Scaled rows for sequence models, oldest first.
    window: VecDeque<Vec<f64>>,
    window_len: usize,
    next_sequence: u64,
    accepted: u64,
    dropped_late: u64,
}

impl DetectorState {
    /// Whether time features are used follows from the model arity.
    pub fn new(
        model: TrainedModel,
        scaler: ScalerParams,
        local_clock: LocalClock,
        threshold: f64,
    ) -> Result<Self, MonitorError> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(MonitorError::InvalidThreshold(threshold));
        }
        let n = model.meta.n_features;
        if scaler.arity() != n {
            return Err(MonitorError::SchemaMismatch {
                scaler: scaler.arity(),
                model: n,
            });
        }
        let time_features = match n {
            n if n == BASE_COLUMNS.len() => false,
            n if n == BASE_COLUMNS.len() + TIME_COLUMNS.len() => true,
            n => return Err(MonitorError::UnsupportedArity(n)),
        };
        let window_len = match &model.params {
            ModelParams::Lstm(m) => m.sequence_length.max(1),
            _ => 1,
        };
        Ok(DetectorState {
            last_seen: HashMap::new(),
            model,
            scaler,
            local_clock,
            threshold,
            time_features,
            clock: None,
            window: VecDeque::with_capacity(window_len),
            window_len,
            next_sequence: 0,
            accepted: 0,
            dropped_late: 0,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn clock(&self) -> Option<Timestamp> {
        self.clock
    }

    pub fn tracked_ids(&self) -> usize {
        self.last_seen.len()
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn dropped_late(&self) -> u64 {
        self.dropped_late
    }

    /// Classifies one frame and reports the features it derived.
    pub fn observe(&mut self, frame: &CanFrame) -> Result<Observation, MonitorError> {
        if let Some(clock) = self.clock {
            if frame.timestamp < clock {
                self.dropped_late += 1;
                return Err(MonitorError::LateFrame {
                    frame: frame.timestamp,
                    clock,
                });
            }
        }
        let at_freq_sec = match self.last_seen.get(&frame.can_id()) {
            Some(&prev) => frame.timestamp.seconds_since(prev),
            None => AT_FREQ_SENTINEL,
        };
        let hour = self.local_clock.hour(frame.timestamp);
        let full = FeatureRow::from_frame(frame, at_freq_sec, hour, self.accepted).full_vector();
        let raw = &full[..self.scaler.arity()];
        let mut scaled = if self.window.len() == self.window_len {
            self.window.pop_front().expect("window is non-empty")
        } else {
            vec![0.0; raw.len()]
        };
        self.scaler.transform_row(raw, &mut scaled);
        self.window.push_back(scaled);
        let rows: Vec<&[f64]> = self.window.iter().map(Vec::as_slice).collect();
        let proba = self.model.predict_window(&rows)?;

        self.last_seen.insert(frame.can_id(), frame.timestamp);
        debug_assert!(self.last_seen.len() <= MAX_TRACKED_IDS);
        self.clock = Some(frame.timestamp);
        self.accepted += 1;

        let c = argmax(&proba);
        let predicted = ClassLabel::from_ordinal(c).expect("argmax below N_CLASSES");
        let alert = (predicted.is_attack() && proba[c] >= self.threshold).then(|| {
            let sequence = self.next_sequence;
            self.next_sequence += 1;
            Alert {
                sequence,
                frame: *frame,
                predicted,
                probabilities: proba,
                at_freq_sec,
                hour,
            }
        });
        Ok(Observation {
            at_freq_sec,
            hour,
            probabilities: proba,
            alert,
        })
    }

    pub fn uses_time_features(&self) -> bool {
        self.time_features
    }
}

/// Processes one frame; late frames are counted and returned as an error.
pub fn process_frame(state: &mut DetectorState, frame: &CanFrame) -> Result<Option<Alert>, MonitorError> {
    state.observe(frame).map(|o| o.alert)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    /// Parsed frames, accepted plus dropped.
    pub frames: u64,
    pub accepted: u64,
    pub dropped_late: u64,
    /// Lines that failed to parse.
    pub malformed: u64,
    pub alerts: u64,
    /// Indexed by class ordinal; the Normal slot is always 0.
    pub alerts_per_class: [u64; N_CLASSES],
    pub elapsed_secs: f64,
    pub throughput_fps: f64,
}

impl StreamSummary {
    fn record(&mut self, alert: &Alert) {
        self.alerts += 1;
        self.alerts_per_class[alert.predicted.ordinal()] += 1;
    }

    fn finish(&mut self, started: Instant) {
        self.elapsed_secs = started.elapsed().as_secs_f64();
        self.throughput_fps = if self.elapsed_secs > 0.0 {
            self.frames as f64 / self.elapsed_secs
        } else {
            0.0
        };
    }
}

fn write_alert<W: Write>(sink: &mut W, alert: &Alert) -> Result<(), MonitorError> {
    serde_json::to_writer(&mut *sink, alert)?;
    sink.write_all(b"\n")?;
    Ok(())
}

fn feed<W: Write>(
    state: &mut DetectorState,
    frame: &CanFrame,
    sink: &mut W,
    summary: &mut StreamSummary,
) -> Result<(), MonitorError> {
    summary.frames += 1;
    match process_frame(state, frame) {
        Ok(Some(alert)) => {
            summary.record(&alert);
            write_alert(sink, &alert)?;
        }
        Ok(None) => {}
        Err(MonitorError::LateFrame { frame, clock }) => {
            log::debug!("dropped late frame at {frame} (clock {clock})");
        }
        Err(e) => return Err(e),
    }
    summary.accepted = state.accepted;
    summary.dropped_late = state.dropped_late;
    Ok(())
}

/// Runs already-parsed frames through the detector, writing one JSON line
/// per alert to `sink`.
pub fn run_frames<'a, I, W>(state: &mut DetectorState, frames: I, sink: &mut W) -> Result<StreamSummary, MonitorError>
where
    I: IntoIterator<Item = &'a CanFrame>,
    W: Write,
{
    let started = Instant::now();
    let mut summary = StreamSummary::default();
    for frame in frames {
        feed(state, frame, sink, &mut summary)?;
    }
    sink.flush()?;
    summary.finish(started);
    Ok(summary)
}

/// Reads `format` lines from `input` until exhaustion and runs each frame
/// through the detector. Lines that do not parse are counted and skipped.
pub fn run_stream<R, W>(
    state: &mut DetectorState,
    input: R,
    format: InputFormat,
    sink: &mut W,
) -> Result<StreamSummary, MonitorError>
where
    R: BufRead,
    W: Write,
{
    let started = Instant::now();
    let mut summary = StreamSummary::default();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || (idx == 0 && is_header(&line)) {
            continue;
        }
        let parsed = match format {
            InputFormat::Unified => parse_unified_row(&line, idx + 1),
            InputFormat::NormalLog => parse_normal_log_line(&line, idx + 1),
            InputFormat::AttackCsv(class) => parse_attack_csv_row(&line, idx + 1, class),
        };
        match parsed {
            Ok(frame) => feed(state, &frame, sink, &mut summary)?,
            Err(e) => {
                summary.malformed += 1;
                log::debug!("skipping line: {e}");
            }
        }
    }
    sink.flush()?;
    summary.finish(started);
    Ok(summary)
}
