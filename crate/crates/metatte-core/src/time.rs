//! Civil-time helpers: UNIX seconds plus a fixed UTC offset to local
//! calendar date, day-of-week, and hour-of-day.
//!
//! Day-of-week is encoded with Monday = 0 .. Sunday = 6. Conversions use
//! pure integer arithmetic (no timezone database; each task configures a
//! fixed offset from UTC).

use crate::math;

/// A calendar date, used for split ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct CivilDate {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl CivilDate {
    pub fn new(year: i32, month: u8, day: u8) -> Self {
        CivilDate { year, month, day }
    }

    /// Days since 1970-01-01.
    pub fn to_epoch_days(self) -> i64 {
        days_from_civil(self.year as i64, self.month as i64, self.day as i64)
    }

    pub fn from_epoch_days(days: i64) -> Self {
        let (year, month, day) = civil_from_days(days);
        CivilDate {
            year: year as i32,
            month: month as u8,
            day: day as u8,
        }
    }
}

impl core::fmt::Display for CivilDate {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

// Days-from-civil-date conversion on the proleptic Gregorian calendar,
// era-based so it is exact over the full i64 range we care about.
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i64, i64, i64) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    (if m <= 2 { y + 1 } else { y }, m, d)
}

/// Local-time attributes of one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalTime {
    pub date: CivilDate,
    /// Monday = 0 .. Sunday = 6.
    pub day_of_week: u8,
    /// 0 .. 23.
    pub hour: u8,
}

/// Resolve UNIX seconds to local calendar attributes under a fixed offset.
pub fn local_time(unix_seconds: f64, utc_offset_seconds: i64) -> LocalTime {
    let local = math::floor(unix_seconds) as i64 + utc_offset_seconds;
    let days = local.div_euclid(86_400);
    let secs_of_day = local.rem_euclid(86_400);
    // 1970-01-01 was a Thursday; with Monday = 0 that is index 3.
    let day_of_week = (days + 3).rem_euclid(7) as u8;
    LocalTime {
        date: CivilDate::from_epoch_days(days),
        day_of_week,
        hour: (secs_of_day / 3600) as u8,
    }
}
