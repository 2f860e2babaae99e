use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::Activity;
use crate::num::Scalar;
use crate::schedule::{Gathering, LocationSelector, RestrictionEntry, Schedule, Window};
use crate::interventions::Restriction;
use crate::time::Calendar;
use crate::world::MaskType;

use super::params::{ParameterSet, Retention};

/// Dates from which the spring lockdown timeline is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineSpec {
    /// First and last lockdown day, inclusive. `None` gives the
    /// counterfactual without lockdown.
    #[serde(default)]
    pub lockdown_start: Option<NaiveDate>,
    #[serde(default)]
    pub lockdown_end: Option<NaiveDate>,
    #[serde(default)]
    pub easter_sunday: Option<NaiveDate>,
    pub horizon_days: i64,
}

impl TimelineSpec {
    /// Lockdown from March 30 to April 29, 2021, Easter on April 4.
    pub fn spring_2021(horizon_days: i64) -> Self {
        TimelineSpec {
            lockdown_start: NaiveDate::from_ymd_opt(2021, 3, 30),
            lockdown_end: NaiveDate::from_ymd_opt(2021, 4, 29),
            easter_sunday: NaiveDate::from_ymd_opt(2021, 4, 4),
            horizon_days,
        }
    }

    pub fn without_lockdown(mut self) -> Self {
        self.lockdown_start = None;
        self.lockdown_end = None;
        self
    }
}

fn retention_window<T: Scalar>(name: &str, start: i64, end: i64, r: &Retention<T>) -> Window<T> {
    let mut w = Window::new(name, start, end);
    w.trip_retention.insert(Activity::School, r.school);
    w.trip_retention.insert(Activity::Work, r.work);
    w.trip_retention.insert(Activity::Shopping, r.shop);
    w.trip_retention.insert(Activity::SocialEvent, r.event);
    w
}

/// Expands the lockdown and Easter dates into schedule windows.
pub fn build_schedule<T: Scalar>(
    spec: &TimelineSpec,
    calendar: &Calendar,
    params: &ParameterSet<T>,
) -> Result<Schedule<T>> {
    let p = &params.policy;
    let horizon = spec.horizon_days;
    let mut windows = Vec::new();

    match (spec.lockdown_start, spec.lockdown_end) {
        (Some(a), Some(b)) => {
            let start = calendar.day_of(a);
            let end = calendar.day_of(b) + 1;
            if start >= end {
                return Err(Error::param("lockdown", "start must precede end"));
            }
            windows.push(retention_window("before lockdown", i64::MIN / 2, start, &p.baseline_retention));
            let mut lock = retention_window("lockdown", start, end, &p.lockdown_retention);
            lock.contact_reduction = Some(T::one() - p.lockdown_reduction);
            lock.testing_scale = Some(params.testing.lockdown_scale);
            windows.push(lock);
            let mut after = retention_window("after lockdown", end, i64::MAX / 2, &p.baseline_retention);
            after.contact_reduction = Some(T::one() - p.post_lockdown_reduction);
            windows.push(after);
        }
        (None, None) => {
            windows.push(retention_window("baseline", i64::MIN / 2, i64::MAX / 2, &p.baseline_retention));
        }
        _ => return Err(Error::param("lockdown", "needs both start and end")),
    }

    if let Some(easter) = spec.easter_sunday {
        let sunday = calendar.day_of(easter);
        let mut week = Window::new("easter week", sunday - 6, sunday + 2);
        week.testing_scale = Some(params.testing.easter_scale);
        week.gathering = Some(Gathering {
            fraction: p.easter_fraction,
            days: vec![sunday, sunday + 1],
            start_hour: 12,
            end_hour: 20,
        });
        windows.push(week);
    }

    if !p.mask_mandate.is_empty() {
        let mut masks = Window::new("mask mandate", i64::MIN / 2, i64::MAX / 2);
        for kind in &p.mask_mandate {
            masks.restrictions.push(RestrictionEntry {
                target: LocationSelector::Kind(*kind),
                restriction: Restriction {
                    mask_required: Some(MaskType::Surgical),
                    ..Default::default()
                },
            });
        }
        windows.push(masks);
    }

    for w in &mut windows {
        w.start_day = w.start_day.max(0);
        w.end_day = w.end_day.min(horizon.max(0));
    }
    windows.retain(|w| w.start_day < w.end_day);
    let schedule = Schedule { windows };
    schedule.validate()?;
    Ok(schedule)
}
