//! Simulation clock.
//!
//! Time is kept as whole hours since the simulation origin (midnight of the
//! scenario start date). Model formulas work in days; conversion happens at
//! the boundary through [`SimTime::days`].

use std::fmt;
use std::ops::{Add, Sub};

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::num::Scalar;

pub const HOURS_PER_DAY: i64 = 24;
pub const MINUTES_PER_DAY: u32 = 1440;

/// A point in simulated time, in hours since the origin. May be negative for
/// events that happened before the simulation window (initial infections).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(pub i64);

/// A span of simulated time in whole hours.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeSpan(pub i64);

impl SimTime {
    pub const ORIGIN: SimTime = SimTime(0);

    pub fn from_days(days: i64) -> Self {
        SimTime(days * HOURS_PER_DAY)
    }

    pub fn from_day_hour(day: i64, hour: i64) -> Self {
        SimTime(day * HOURS_PER_DAY + hour)
    }

    pub fn hours(self) -> i64 {
        self.0
    }

    /// Fractional days since the origin.
    pub fn days<T: Scalar>(self) -> T {
        T::lit(self.0 as f64 / HOURS_PER_DAY as f64)
    }

    /// Day index, rounding towards negative infinity.
    pub fn day(self) -> i64 {
        self.0.div_euclid(HOURS_PER_DAY)
    }

    pub fn hour_of_day(self) -> u32 {
        self.0.rem_euclid(HOURS_PER_DAY) as u32
    }

    pub fn is_midnight(self) -> bool {
        self.hour_of_day() == 0
    }
}

impl TimeSpan {
    pub const HOUR: TimeSpan = TimeSpan(1);
    pub const DAY: TimeSpan = TimeSpan(HOURS_PER_DAY);

    pub fn hours(h: i64) -> Self {
        TimeSpan(h)
    }

    pub fn days(d: i64) -> Self {
        TimeSpan(d * HOURS_PER_DAY)
    }

    pub fn in_days<T: Scalar>(self) -> T {
        T::lit(self.0 as f64 / HOURS_PER_DAY as f64)
    }

    pub fn in_minutes(self) -> i64 {
        self.0 * 60
    }
}

impl Add<TimeSpan> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: TimeSpan) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub<TimeSpan> for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: TimeSpan) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl Sub for SimTime {
    type Output = TimeSpan;
    fn sub(self, rhs: SimTime) -> TimeSpan {
        TimeSpan(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "day {} {:02}:00", self.day(), self.hour_of_day())
    }
}

/// Maps simulation days onto the calendar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    pub start: NaiveDate,
}

impl Calendar {
    pub fn new(start: NaiveDate) -> Self {
        Calendar { start }
    }

    pub fn date(&self, day: i64) -> NaiveDate {
        self.start + Duration::days(day)
    }

    /// Monday = 0 .. Sunday = 6.
    pub fn weekday(&self, day: i64) -> u8 {
        self.date(day).weekday().num_days_from_monday() as u8
    }

    /// Calendar month 1..=12.
    pub fn month(&self, day: i64) -> u32 {
        self.date(day).month()
    }

    /// Simulation day index of a calendar date.
    pub fn day_of(&self, date: NaiveDate) -> i64 {
        (date - self.start).num_days()
    }
}

impl Default for Calendar {
    fn default() -> Self {
        // 2021-03-01 was a Monday
        Calendar::new(NaiveDate::from_ymd_opt(2021, 3, 1).unwrap())
    }
}
