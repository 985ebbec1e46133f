//! Seedable synthetic CAN traffic and attack injection.
//!
//! Normal traffic is a set of periodic ECU broadcasts with bounded uniform
//! jitter. Attacks are injected on a fixed period inside a local-clock hour
//! window, optionally in on/off bursts so that desk-scale datasets stay small:
//!
//! | class     | id            | payload          | default period |
//! |-----------|---------------|------------------|----------------|
//! | DoS       | `0x000`       | eight zero bytes | 0.3 ms         |
//! | Fuzzy     | uniform 11-bit| random dlc/bytes | 0.5 ms         |
//! | RpmSpoof  | target id     | fixed payload    | 1 ms           |
//! | GearSpoof | target id     | fixed payload    | 1 ms           |
//!
//! The default experiment schedules RPM spoofing 16–17h, gear spoofing 17–18h,
//! fuzzing 17–19h and DoS 18–20h, with normal traffic throughout 16–21h.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canframe::{CanFrame, ClassLabel, Timestamp, MAX_STANDARD_ID};
use crate::clock::LocalClock;
use crate::seeded_rng;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("normal profile has an empty id pool")]
    EmptyIdPool,
    #[error("invalid normal profile: {0}")]
    InvalidProfile(String),
    #[error("invalid {kind} scenario: {reason}")]
    InvalidScenario { kind: ClassLabel, reason: String },
    #[error("{0} scenario window does not overlap the base traffic")]
    WindowOutsideBase(ClassLabel),
}

/// How one payload byte evolves from frame to frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByteRole {
    Const(u8),
    /// Rolling counter, incremented by one per frame.
    Counter,
    /// Bounded random walk in `[lo, hi]` with steps of at most `step`.
    Walk { lo: u8, hi: u8, step: u8 },
    /// Fresh uniform byte each frame.
    Noise,
    /// Sticky state: keeps its value, and with probability `switch_prob` per
    /// frame redraws uniformly from `values`.
    Choice { values: Vec<u8>, switch_prob: f64 },
}

/// One periodic ECU broadcast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdStream {
    pub can_id: u16,
    pub period: f64,
    /// Phase of the first frame relative to the profile start, seconds.
    #[serde(default)]
    pub offset: f64,
    /// One role per payload byte; the length is the DLC.
    pub payload: Vec<ByteRole>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalProfile {
    pub id_pool: Vec<IdStream>,
    /// Uniform jitter of ±`jitter_fraction`×period, in `[0, 0.5)`.
    pub jitter_fraction: f64,
    pub duration: f64,
    pub start_epoch: f64,
    pub seed: u64,
}

impl NormalProfile {
    pub fn validate(&self) -> Result<(), TrafficError> {
        if self.id_pool.is_empty() {
            return Err(TrafficError::EmptyIdPool);
        }
        let bad = |m: String| Err(TrafficError::InvalidProfile(m));
        if !(0.0..0.5).contains(&self.jitter_fraction) {
            return bad(format!("jitter_fraction {} outside [0, 0.5)", self.jitter_fraction));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration {} must be positive", self.duration));
        }
        if Timestamp::from_secs_f64(self.start_epoch).is_none() {
            return bad(format!("start_epoch {} must be finite and >= 0", self.start_epoch));
        }
        for s in &self.id_pool {
            if s.can_id > MAX_STANDARD_ID {
                return bad(format!("id {:#x} exceeds 11 bits", s.can_id));
            }
            if !(s.period.is_finite() && s.period > 0.0) {
                return bad(format!("id {:#x}: period must be positive", s.can_id));
            }
            if s.payload.len() > 8 {
                return bad(format!("id {:#x}: payload longer than 8 bytes", s.can_id));
            }
            if !(s.offset.is_finite() && s.offset >= 0.0) {
                return bad(format!("id {:#x}: offset must be >= 0", s.can_id));
            }
            for role in &s.payload {
                match role {
                    ByteRole::Walk { lo, hi, .. } if lo > hi => {
                        return bad(format!("id {:#x}: walk bounds inverted", s.can_id))
                    }
                    ByteRole::Choice { values, switch_prob }
                        if values.is_empty() || !(0.0..=1.0).contains(switch_prob) =>
                    {
                        return bad(format!("id {:#x}: bad choice byte", s.can_id))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// On/off duty cycle for injection inside a window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub on_secs: f64,
    pub off_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub kind: ClassLabel,
    pub injection_period: f64,
    #[serde(default)]
    pub target_id: Option<u16>,
    #[serde(default)]
    pub fixed_payload: Option<Vec<u8>>,
    /// `[start_hour, end_hour)` on the local clock.
    pub window: (f64, f64),
    /// Continuous injection across the window when absent.
    #[serde(default)]
    pub burst: Option<Burst>,
    pub rng_seed: u64,
}

impl AttackScenario {
    pub fn dos(window: (f64, f64), rng_seed: u64) -> Self {
        AttackScenario {
            kind: ClassLabel::DoS,
            injection_period: 0.0003,
            target_id: Some(0),
            fixed_payload: None,
            window,
            burst: None,
            rng_seed,
        }
    }

    pub fn fuzzy(window: (f64, f64), rng_seed: u64) -> Self {
        AttackScenario {
            kind: ClassLabel::Fuzzy,
            injection_period: 0.0005,
            target_id: None,
            fixed_payload: None,
            window,
            burst: None,
            rng_seed,
        }
    }

    pub fn spoof(
        kind: ClassLabel,
        target_id: u16,
        payload: Vec<u8>,
        window: (f64, f64),
        rng_seed: u64,
    ) -> Self {
        AttackScenario {
            kind,
            injection_period: 0.001,
            target_id: Some(target_id),
            fixed_payload: Some(payload),
            window,
            burst: None,
            rng_seed,
        }
    }

    pub fn with_burst(mut self, on_secs: f64, off_secs: f64) -> Self {
        self.burst = Some(Burst { on_secs, off_secs });
        self
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |reason: &str| {
            Err(TrafficError::InvalidScenario {
                kind: self.kind,
                reason: reason.to_string(),
            })
        };
        if !(self.injection_period.is_finite() && self.injection_period >= 1e-6) {
            return bad("injection_period must be at least one microsecond");
        }
        let (start, end) = self.window;
        if !(start.is_finite() && end.is_finite() && start >= 0.0 && start < end && end <= 24.0) {
            return bad("window must satisfy 0 <= start < end <= 24");
        }
        if let Some(b) = self.burst {
            if !(b.on_secs > 0.0 && b.off_secs >= 0.0 && b.on_secs.is_finite() && b.off_secs.is_finite()) {
                return bad("burst on/off durations must be positive");
            }
        }
        match self.kind {
            ClassLabel::Normal => bad("Normal is not an attack"),
            ClassLabel::DoS if self.target_id != Some(0) => bad("DoS targets id 0x000"),
            ClassLabel::Fuzzy if self.target_id.is_some() => bad("Fuzzy draws random ids"),
            ClassLabel::RpmSpoof | ClassLabel::GearSpoof => match (&self.target_id, &self.fixed_payload) {
                (None, _) => bad("spoofing requires target_id"),
                (_, None) => bad("spoofing requires fixed_payload"),
                (Some(id), _) if *id > MAX_STANDARD_ID => bad("target_id exceeds 11 bits"),
                (_, Some(p)) if p.len() > 8 => bad("fixed_payload longer than 8 bytes"),
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }

    fn period_micros(&self) -> u64 {
        (self.injection_period * 1e6).round().max(1.0) as u64
    }
}

/// Everything needed to synthesize the labeled experiment stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub clock: LocalClock,
    pub normal: NormalProfile,
    pub scenarios: Vec<AttackScenario>,
}

/// Generates periodic normal traffic, sorted by timestamp.
pub fn generate_normal(profile: &NormalProfile) -> Result<Vec<CanFrame>, TrafficError> {
    profile.validate()?;
    let start = Timestamp::from_secs_f64(profile.start_epoch)
        .expect("validated")
        .as_micros();
    let mut tagged: Vec<(u64, usize, CanFrame)> = Vec::new();
    for (idx, stream) in profile.id_pool.iter().enumerate() {
        let mut timing = seeded_rng(profile.seed, idx as u64);
        let mut bytes = PayloadState::new(stream);
        let mut k = 0u64;
        loop {
            let nominal = stream.offset + k as f64 * stream.period;
            if nominal >= profile.duration {
                break;
            }
            let jitter = if profile.jitter_fraction > 0.0 {
                let r = profile.jitter_fraction * stream.period;
                timing.gen_range(-r..=r)
            } else {
                0.0
            };
            let rel = ((nominal + jitter) * 1e6).round().max(0.0) as u64;
            let data = bytes.next();
            let frame = CanFrame::new(
                Timestamp::from_micros(start + rel),
                stream.can_id,
                &data[..stream.payload.len()],
                ClassLabel::Normal,
            )
            .expect("validated");
            tagged.push((start + rel, idx, frame));
            k += 1;
        }
    }
    tagged.sort_by_key(|(t, idx, _)| (*t, *idx));
    Ok(tagged.into_iter().map(|(_, _, f)| f).collect())
}

struct PayloadState<'a> {
    roles: &'a [ByteRole],
    current: [u8; 8],
    rng: ChaCha8Rng,
}

impl<'a> PayloadState<'a> {
    fn new(stream: &'a IdStream) -> Self {
        let mut rng = seeded_rng(stream.seed, 0);
        let mut current = [0u8; 8];
        for (slot, role) in current.iter_mut().zip(&stream.payload) {
            *slot = match role {
                ByteRole::Const(v) => *v,
                ByteRole::Counter => 0,
                ByteRole::Walk { lo, hi, .. } => rng.gen_range(*lo..=*hi),
                ByteRole::Noise => 0,
                ByteRole::Choice { values, .. } => values[rng.gen_range(0..values.len())],
            };
        }
        PayloadState {
            roles: &stream.payload,
            current,
            rng,
        }
    }

    fn next(&mut self) -> [u8; 8] {
        for (slot, role) in self.current.iter_mut().zip(self.roles) {
            match role {
                ByteRole::Const(_) => {}
                ByteRole::Counter => *slot = slot.wrapping_add(1),
                ByteRole::Walk { lo, hi, step } => {
                    let s = i16::from(*step);
                    let delta = self.rng.gen_range(-s..=s);
                    *slot = (i16::from(*slot) + delta).clamp(i16::from(*lo), i16::from(*hi)) as u8;
                }
                ByteRole::Noise => *slot = self.rng.gen(),
                ByteRole::Choice { values, switch_prob } => {
                    if self.rng.gen_bool(*switch_prob) {
                        *slot = values[self.rng.gen_range(0..values.len())];
                    }
                }
            }
        }
        self.current
    }
}

/// Active injection intervals `[start, end)` in epoch microseconds, clipped to
/// `[range_start, range_end)`.
fn active_intervals(
    scenario: &AttackScenario,
    clock: &LocalClock,
    range_start: u64,
    range_end: u64,
) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    if range_end <= range_start {
        return out;
    }
    let first_day = clock.local_day_start(Timestamp::from_micros(range_start));
    let last_day = clock.local_day_start(Timestamp::from_micros(range_end - 1));
    let mut day = first_day;
    while day <= last_day {
        let ws = day * 1_000_000 + (scenario.window.0 * 3.6e9).round() as i64;
        let we = day * 1_000_000 + (scenario.window.1 * 3.6e9).round() as i64;
        let segments: Vec<(i64, i64)> = match scenario.burst {
            None => vec![(ws, we)],
            Some(b) => {
                let on = (b.on_secs * 1e6).round() as i64;
                let cycle = on + (b.off_secs * 1e6).round() as i64;
                let mut segs = Vec::new();
                let mut s = ws;
                while s < we {
                    segs.push((s, (s + on).min(we)));
                    s += cycle.max(1);
                }
                segs
            }
        };
        for (s, e) in segments {
            let lo = s.max(range_start as i64);
            let hi = e.min(range_end as i64);
            if lo < hi {
                out.push((lo as u64, hi as u64));
            }
        }
        day += 86_400;
    }
    out
}

/// Frames a scenario injects over `[range_start, range_end)` (microseconds),
/// in timestamp order.
pub fn injected_frames(
    scenario: &AttackScenario,
    clock: &LocalClock,
    range_start: u64,
    range_end: u64,
) -> Result<Vec<CanFrame>, TrafficError> {
    scenario.validate()?;
    let period = scenario.period_micros();
    let mut rng = seeded_rng(scenario.rng_seed, 1);
    let mut out = Vec::new();
    for (lo, hi) in active_intervals(scenario, clock, range_start, range_end) {
        let mut t = lo;
        while t < hi {
            let ts = Timestamp::from_micros(t);
            let frame = match scenario.kind {
                ClassLabel::DoS => CanFrame::new(ts, 0, &[0u8; 8], ClassLabel::DoS),
                ClassLabel::Fuzzy => {
                    let id = rng.gen_range(0..=MAX_STANDARD_ID);
                    let dlc = rng.gen_range(0..=8usize);
                    let mut data = [0u8; 8];
                    rng.fill(&mut data[..dlc]);
                    CanFrame::new(ts, id, &data[..dlc], ClassLabel::Fuzzy)
                }
                kind => CanFrame::new(
                    ts,
                    scenario.target_id.expect("validated"),
                    scenario.fixed_payload.as_deref().expect("validated"),
                    kind,
                ),
            }
            .expect("validated");
            out.push(frame);
            t += period;
        }
    }
    Ok(out)
}

/// Merges two timestamp-sorted streams; on equal timestamps `injected` frames
/// come first.
fn merge_injected_first(base: &[CanFrame], injected: &[CanFrame]) -> Vec<CanFrame> {
    let mut out = Vec::with_capacity(base.len() + injected.len());
    let (mut i, mut j) = (0, 0);
    while i < base.len() && j < injected.len() {
        if injected[j].timestamp <= base[i].timestamp {
            out.push(injected[j]);
            j += 1;
        } else {
            out.push(base[i]);
            i += 1;
        }
    }
    out.extend_from_slice(&injected[j..]);
    out.extend_from_slice(&base[i..]);
    out
}

fn base_range(base: &[CanFrame]) -> Option<(u64, u64)> {
    let first = base.first()?.timestamp.as_micros();
    let last = base.last()?.timestamp.as_micros();
    Some((first, last.max(first + 1)))
}

/// Injects one attack into a sorted base stream.
///
/// Injection covers the scenario window intersected with the base time range
/// `[first, last)`. An empty intersection leaves the base unchanged.
pub fn inject_attack(
    base: &[CanFrame],
    scenario: &AttackScenario,
    clock: &LocalClock,
) -> Result<Vec<CanFrame>, TrafficError> {
    scenario.validate()?;
    let Some((lo, hi)) = base_range(base) else {
        return Ok(base.to_vec());
    };
    let injected = injected_frames(scenario, clock, lo, hi)?;
    if injected.is_empty() {
        log::warn!("{} scenario window misses the base traffic; nothing injected", scenario.kind);
    }
    Ok(merge_injected_first(base, &injected))
}

/// Builds the full labeled experiment stream.
///
/// Each scenario must inject at least one frame, otherwise
/// [`TrafficError::WindowOutsideBase`] is returned.
pub fn build_experiment_dataset(config: &ExperimentConfig) -> Result<Vec<CanFrame>, TrafficError> {
    let base = generate_normal(&config.normal)?;
    let Some((lo, _)) = base_range(&base) else {
        return Err(TrafficError::EmptyIdPool);
    };
    let start = Timestamp::from_secs_f64(config.normal.start_epoch).expect("validated");
    let hi = start.as_micros() + (config.normal.duration * 1e6).round() as u64;
    let hi = hi.max(lo + 1);
    let mut tagged: Vec<(u64, usize, CanFrame)> = Vec::new();
    for (idx, scenario) in config.scenarios.iter().enumerate() {
        let frames = injected_frames(scenario, &config.clock, lo, hi)?;
        if frames.is_empty() {
            return Err(TrafficError::WindowOutsideBase(scenario.kind));
        }
        tagged.extend(frames.into_iter().map(|f| (f.timestamp.as_micros(), idx, f)));
    }
    tagged.sort_by_key(|(t, idx, _)| (*t, *idx));
    let injected: Vec<CanFrame> = tagged.into_iter().map(|(_, _, f)| f).collect();
    Ok(merge_injected_first(&base, &injected))
}

/// RPM broadcast id of the default profile.
pub const RPM_ID: u16 = 0x316;
/// Gear-position broadcast id of the default profile.
pub const GEAR_ID: u16 = 0x43f;
/// Gear byte values broadcast by the default gear ECU (P, R, N, D).
pub const GEAR_STATES: [u8; 4] = [0x00, 0x07, 0x06, 0x05];

/// Gear-ECU payload for a gear state.
pub fn gear_payload(state: u8) -> Vec<u8> {
    vec![state, 0x45, 0x60, 0xff, 0x6b, 0x00, 0x00, 0x00]
}

/// Spoofed RPM frame: a pinned high-RPM pattern.
pub fn rpm_spoof_payload() -> Vec<u8> {
    vec![0x05, 0x20, 0xea, 0x0a, 0x20, 0x1a, 0x00, 0x7f]
}

impl NormalProfile {
    /// Twenty periodic ECUs, 16:00–21:00 local on 2016-11-03 (UTC).
    ///
    /// Aggregate rate is about 11.5 frames/s, giving roughly 207k frames over
    /// the five hours.
    pub fn default_vehicle(seed: u64) -> Self {
        use ByteRole::*;
        let walk = |lo, hi, step| Walk { lo, hi, step };
        // (id, period seconds, payload roles)
        let table: Vec<(u16, f64, Vec<ByteRole>)> = vec![
            (RPM_ID, 0.5, vec![Const(0x05), walk(0x10, 0x30, 2), walk(0x60, 0xd0, 6), walk(0x08, 0x0c, 1), Const(0x10), walk(0x10, 0x20, 1), Const(0x00), Counter]),
            (
                GEAR_ID,
                1.0,
                // D appears three times: the car spends most of the trip in drive.
                {
                    let mut roles: Vec<ByteRole> = gear_payload(0).into_iter().map(Const).collect();
                    roles[0] = Choice { values: vec![GEAR_STATES[0], GEAR_STATES[1], GEAR_STATES[2], GEAR_STATES[3], GEAR_STATES[3], GEAR_STATES[3]], switch_prob: 0.02 };
                    roles
                },
            ),
            (0x018f, 1.0, vec![Const(0xfe), walk(0x30, 0x50, 2), Const(0x00), Const(0x00), Const(0x00), Counter, Const(0x00), Noise]),
            (0x0260, 1.0, vec![walk(0x10, 0x30, 1), walk(0x10, 0x30, 1), Const(0x28), Counter, Const(0x00), Const(0x3f), Const(0x00), Noise]),
            (0x02a0, 1.0, vec![Const(0x00), Counter, walk(0x80, 0xc0, 3), Const(0x10), walk(0x00, 0x20, 2), Const(0x9c), Const(0x00), Noise]),
            (0x0329, 1.0, vec![walk(0x70, 0x90, 1), walk(0xb0, 0xc0, 1), Const(0x7f), Const(0x14), Const(0x11), Const(0x20), Const(0x00), Counter]),
            (0x0545, 2.0, vec![Const(0xd8), Const(0x00), walk(0x00, 0x08, 1), Const(0x00), Const(0x00), Const(0x00), Const(0x00), Const(0x00)]),
            (0x02c0, 2.0, vec![walk(0x10, 0x14, 1), Const(0x00), Const(0x00), Const(0x00), Counter, Const(0x00), Const(0x00), Const(0x00)]),
            (0x0130, 2.0, vec![walk(0x00, 0x10, 2), Const(0x80), Const(0x00), Const(0xff), walk(0x20, 0x40, 2), Const(0x80), Counter, Noise]),
            (0x0131, 2.0, vec![walk(0x00, 0x10, 2), Const(0x80), Const(0x00), Const(0x00), walk(0x70, 0x90, 2), Const(0x7f), Counter, Noise]),
            (0x0140, 2.0, vec![Const(0x00), Const(0x00), Const(0x00), Const(0x00), Counter, Const(0x1c), Noise, Noise]),
            (0x0350, 4.0, vec![Const(0x05), Const(0x28), walk(0x90, 0xa0, 1), Const(0x49), Const(0x15), Const(0x2e), Const(0x00), Counter]),
            (0x0370, 4.0, vec![Const(0x00), Const(0x20), Const(0x00), Const(0x00), Const(0x00), Const(0x00), Const(0x00), Const(0x00)]),
            (0x0440, 4.0, vec![Const(0xff), Const(0x00), Const(0x00), Const(0x00), Const(0xff), walk(0x40, 0x50, 1), Const(0x09), Const(0x00)]),
            (0x04b0, 4.0, vec![walk(0x00, 0x20, 2), Const(0x00), walk(0x00, 0x20, 2), Const(0x00), walk(0x00, 0x20, 2), Const(0x00), walk(0x00, 0x20, 2), Const(0x00)]),
            (0x04b1, 5.0, vec![Const(0x00), Const(0x00), Const(0x00), Const(0x00), Const(0x00), Const(0x00), Const(0x00), Const(0x00)]),
            (0x0153, 5.0, vec![Const(0x00), Const(0x21), Const(0x10), Const(0xff), Const(0x00), Const(0xff), Const(0x00), Const(0x00)]),
            (0x0164, 5.0, vec![Const(0x00), Const(0x08), Noise, Counter, Const(0x00), Const(0x00), Const(0x00), Noise]),
            (0x0220, 5.0, vec![walk(0x00, 0x10, 1), Const(0x00), Const(0x00), Const(0x00), Counter, Const(0x00), Const(0x00)]),
            (0x05f0, 5.0, vec![Const(0x01), Const(0x00)]),
        ];
        let id_pool = table
            .into_iter()
            .enumerate()
            .map(|(i, (can_id, period, payload))| IdStream {
                can_id,
                period,
                // Spread phases so ECUs do not all fire on the same tick.
                offset: period * (i as f64 * 0.618_033_988_75).fract(),
                payload,
                seed: seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64),
            })
            .collect();
        NormalProfile {
            id_pool,
            jitter_fraction: 0.05,
            duration: 5.0 * 3600.0,
            start_epoch: 1_478_188_800.0, // 2016-11-03 16:00:00 UTC
            seed,
        }
    }
}

impl ExperimentConfig {
    /// The default desk-scale experiment (about 350k frames, 200k Normal).
    ///
    /// Each attack is one contiguous campaign in its own hour, so no
    /// same-id gap in the stream exceeds the first-sighting sentinel.
    pub fn default_with_seed(seed: u64) -> Self {
        let s = |k: u64| seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(k);
        let campaign = |hour: f64, minute: f64, secs: f64| {
            let start = hour + minute / 60.0;
            (start, start + secs / 3600.0)
        };
        let scenarios = vec![
            AttackScenario::spoof(ClassLabel::RpmSpoof, RPM_ID, rpm_spoof_payload(), campaign(16.0, 20.0, 40.0), s(1)),
            AttackScenario::spoof(
                ClassLabel::GearSpoof,
                GEAR_ID,
                gear_payload(GEAR_STATES[3]),
                campaign(17.0, 20.0, 22.0),
                s(2),
            ),
            AttackScenario::fuzzy(campaign(18.0, 20.0, 12.0), s(3)),
            AttackScenario::dos(campaign(19.0, 20.0, 18.0), s(4)),
        ];
        ExperimentConfig {
            clock: LocalClock::UTC,
            normal: NormalProfile::default_vehicle(s(0)),
            scenarios,
        }
    }

    /// Re-derives every seed from `seed`, keeping all other parameters.
    pub fn reseed(&mut self, seed: u64) {
        let s = |k: u64| seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(k);
        self.normal.seed = s(0);
        for (i, stream) in self.normal.id_pool.iter_mut().enumerate() {
            stream.seed = s(0).wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64);
        }
        for (i, scenario) in self.scenarios.iter_mut().enumerate() {
            scenario.rng_seed = s(i as u64 + 1);
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::default_with_seed(7)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_id_profile(period: f64, jitter: f64, duration: f64) -> NormalProfile {
        NormalProfile {
            id_pool: vec![IdStream {
                can_id: 0x100,
                period,
                offset: 0.0,
                payload: vec![ByteRole::Counter, ByteRole::Noise],
                seed: 1,
            }],
            jitter_fraction: jitter,
            duration,
            start_epoch: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn zero_jitter_is_exactly_periodic() {
        let frames = generate_normal(&one_id_profile(0.1, 0.0, 1.0)).unwrap();
        let times: Vec<u64> = frames.iter().map(|f| f.timestamp.as_micros()).collect();
        assert_eq!(times, (0..10).map(|k| k * 100_000).collect::<Vec<_>>());
        assert!(frames.iter().all(|f| f.label == ClassLabel::Normal));
        assert_eq!(frames[3].data()[0], 4);
    }

    #[test]
    fn generation_is_deterministic() {
        let p = one_id_profile(0.01, 0.3, 2.0);
        assert_eq!(generate_normal(&p).unwrap(), generate_normal(&p).unwrap());
    }

    #[test]
    fn empty_pool_rejected() {
        let mut p = one_id_profile(0.1, 0.0, 1.0);
        p.id_pool.clear();
        assert_eq!(generate_normal(&p), Err(TrafficError::EmptyIdPool));
        let mut p = one_id_profile(0.1, 0.5, 1.0);
        assert!(matches!(generate_normal(&p), Err(TrafficError::InvalidProfile(_))));
        p.jitter_fraction = 0.0;
        p.id_pool[0].period = 0.0;
        assert!(generate_normal(&p).is_err());
    }

    #[test]
    fn scenario_invariants() {
        let mut dos = AttackScenario::dos((0.0, 24.0), 1);
        assert!(dos.validate().is_ok());
        dos.target_id = Some(5);
        assert!(dos.validate().is_err());
        let mut fuzzy = AttackScenario::fuzzy((0.0, 24.0), 1);
        fuzzy.target_id = Some(1);
        assert!(fuzzy.validate().is_err());
        let mut spoof = AttackScenario::spoof(ClassLabel::RpmSpoof, RPM_ID, vec![1], (0.0, 1.0), 1);
        assert!(spoof.validate().is_ok());
        spoof.target_id = None;
        assert!(matches!(
            inject_attack(&[], &spoof, &LocalClock::UTC),
            Err(TrafficError::InvalidScenario { .. })
        ));
        let mut zero = AttackScenario::dos((0.0, 24.0), 1);
        zero.injection_period = 0.0;
        assert!(zero.validate().is_err());
    }

    #[test]
    fn window_misses_base() {
        let base = generate_normal(&one_id_profile(0.1, 0.0, 1.0)).unwrap();
        let scenario = AttackScenario::dos((5.0, 6.0), 1);
        assert_eq!(inject_attack(&base, &scenario, &LocalClock::UTC).unwrap(), base);
    }

    #[test]
    fn ties_put_injected_first() {
        let base = generate_normal(&one_id_profile(0.1, 0.0, 1.0)).unwrap();
        let out = inject_attack(&base, &AttackScenario::dos((0.0, 1.0), 1), &LocalClock::UTC).unwrap();
        assert_eq!(out[0].label, ClassLabel::DoS);
        let first_normal = out.iter().position(|f| f.label == ClassLabel::Normal).unwrap();
        assert_eq!(out[first_normal].timestamp, out[0].timestamp);
    }

    #[test]
    fn bursts_limit_injection() {
        let base = generate_normal(&one_id_profile(1.0, 0.0, 100.0)).unwrap();
        let scenario = AttackScenario::dos((0.0, 1.0), 1).with_burst(1.0, 9.0);
        let out = inject_attack(&base, &scenario, &LocalClock::UTC).unwrap();
        let dos = out.iter().filter(|f| f.label == ClassLabel::DoS).count();
        // 10 bursts of 1 s inside [0, 99 s), 3334 frames each.
        assert_eq!(dos, 10 * 3334);
    }
}
