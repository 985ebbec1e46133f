//! Local wall-clock mapping at a fixed UTC offset.

use chrono::{DateTime, Datelike, Timelike};
use serde::{Deserialize, Serialize};

use crate::canframe::Timestamp;

const SECS_PER_DAY: i64 = 86_400;

/// Maps epoch timestamps to local clock fields using a configured offset
/// rather than the host time zone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalClock {
    pub utc_offset_secs: i32,
}

/// Calendar decomposition of one timestamp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CivilTime {
    pub year: i32,
    pub month: u32,
    pub day: u32,
    pub hour: u32,
    pub minute: u32,
    pub second: u32,
    pub millisecond: u32,
}

impl LocalClock {
    pub const UTC: LocalClock = LocalClock { utc_offset_secs: 0 };

    pub fn with_offset_hours(hours: i32) -> Self {
        LocalClock {
            utc_offset_secs: hours * 3600,
        }
    }

    fn local_micros(&self, ts: Timestamp) -> i64 {
        ts.as_micros() as i64 + i64::from(self.utc_offset_secs) * 1_000_000
    }

    /// Local hour of day, 0..=23.
    pub fn hour(&self, ts: Timestamp) -> u32 {
        let secs = self.local_micros(ts).div_euclid(1_000_000);
        (secs.rem_euclid(SECS_PER_DAY) / 3600) as u32
    }

    pub fn civil(&self, ts: Timestamp) -> CivilTime {
        let micros = self.local_micros(ts);
        let secs = micros.div_euclid(1_000_000);
        let sub = micros.rem_euclid(1_000_000);
        let dt = DateTime::from_timestamp(secs, (sub * 1000) as u32)
            .expect("timestamp within chrono range");
        CivilTime {
            year: dt.year(),
            month: dt.month(),
            day: dt.day(),
            hour: dt.hour(),
            minute: dt.minute(),
            second: dt.second(),
            millisecond: (sub / 1000) as u32,
        }
    }

    /// Epoch seconds at which the local day containing `ts` begins.
    pub fn local_day_start(&self, ts: Timestamp) -> i64 {
        let local_secs = self.local_micros(ts).div_euclid(1_000_000);
        local_secs.div_euclid(SECS_PER_DAY) * SECS_PER_DAY - i64::from(self.utc_offset_secs)
    }

    /// Formats as `Y-m-d H:M:S.f` in local time.
    pub fn format(&self, ts: Timestamp) -> String {
        let c = self.civil(ts);
        let micros = self.local_micros(ts).rem_euclid(1_000_000);
        format!(
            "{:04}-{:02}-{:02} {:02}:{:02}:{:02}.{:06}",
            c.year, c.month, c.day, c.hour, c.minute, c.second, micros
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_shift_hour() {
        let ts = Timestamp::from_micros(1_478_198_376_389_427);
        assert_eq!(LocalClock::UTC.hour(ts), 18);
        assert_eq!(LocalClock::with_offset_hours(-4).hour(ts), 14);
        assert_eq!(LocalClock::with_offset_hours(7).hour(ts), 1);
        assert_eq!(LocalClock::UTC.format(ts), "2016-11-03 18:39:36.389427");
    }

    #[test]
    fn day_start() {
        let ts = Timestamp::from_micros(1_478_198_376_389_427);
        assert_eq!(LocalClock::UTC.local_day_start(ts), 1_478_131_200);
        let clock = LocalClock::with_offset_hours(-4);
        assert_eq!(clock.local_day_start(ts), 1_478_131_200 + 4 * 3600);
    }
}
