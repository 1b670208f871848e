//! Simulated meter time: whole seconds since 1970-01-01 00:00:00 in the
//! meter's local time. No time zones, no DST.

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Timelike};

pub type Timestamp = i64;

pub const MINUTE: i64 = 60;
pub const HOUR: i64 = 3_600;
pub const DAY: i64 = 86_400;

pub fn day_index(ts: Timestamp) -> i64 {
    ts.div_euclid(DAY)
}

pub fn minute_of_day(ts: Timestamp) -> u32 {
    (ts.rem_euclid(DAY) / MINUTE) as u32
}

pub fn minute_tick(ts: Timestamp) -> i64 {
    ts.div_euclid(MINUTE)
}

pub fn to_datetime(ts: Timestamp) -> NaiveDateTime {
    DateTime::from_timestamp(ts, 0)
        .map(|d| d.naive_utc())
        .unwrap_or_default()
}

pub fn date(ts: Timestamp) -> NaiveDate {
    to_datetime(ts).date()
}

pub fn from_datetime(dt: NaiveDateTime) -> Timestamp {
    dt.and_utc().timestamp()
}

/// Calendar fields (year, month, day, hour, minute, second).
pub fn fields(ts: Timestamp) -> (i32, u32, u32, u32, u32, u32) {
    let d = to_datetime(ts);
    (d.year(), d.month(), d.day(), d.hour(), d.minute(), d.second())
}

pub fn from_fields(year: i32, month: u32, day: u32, hour: u32, minute: u32, second: u32) -> Option<Timestamp> {
    NaiveDate::from_ymd_opt(year, month, day)?
        .and_hms_opt(hour, minute, second)
        .map(from_datetime)
}

/// Multiples of `period` (offset by `phase`) in the half-open range
/// `(after, until]`.
pub fn boundaries(after: Timestamp, until: Timestamp, period: i64, phase: i64) -> impl Iterator<Item = Timestamp> {
    let first = (after - phase).div_euclid(period) * period + phase + period;
    (0..).map(move |k| first + k * period).take_while(move |&t| t <= until)
}
