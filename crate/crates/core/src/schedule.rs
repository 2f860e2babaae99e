//! Intervention timeline: day windows carrying trip retention, contact
//! reduction, seasonality overrides, testing scaling, venue restrictions and
//! one-off gatherings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interventions::{apply_restriction, check_probability, Restriction};
use crate::mobility::Activity;
use crate::num::Scalar;
use crate::world::{Location, LocationId, LocationNpi, LocationType};

/// Which locations a restriction targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationSelector {
    Kind(LocationType),
    Id(LocationId),
}

impl LocationSelector {
    pub fn matches<T>(&self, loc: &Location<T>) -> bool {
        match *self {
            LocationSelector::Kind(k) => loc.kind == k,
            LocationSelector::Id(id) => loc.id == id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct RestrictionEntry<T> {
    pub target: LocationSelector,
    #[serde(flatten)]
    pub restriction: Restriction<T>,
}

/// A fraction of agents makes one extra social-event trip on one of `days`
/// (chosen uniformly), from `start_hour` until `end_hour`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gathering<T> {
    pub fraction: T,
    pub days: Vec<i64>,
    pub start_hour: u32,
    pub end_hour: u32,
}

/// Settings in force on days `[start_day, end_day)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct Window<T> {
    pub name: String,
    pub start_day: i64,
    pub end_day: i64,
    /// Fraction of trips retained per activity.
    #[serde(default)]
    pub trip_retention: BTreeMap<Activity, T>,
    #[serde(default)]
    pub contact_reduction: Option<T>,
    #[serde(default)]
    pub seasonality: Option<T>,
    /// Multiplier on voluntary testing; overlapping windows multiply.
    #[serde(default)]
    pub testing_scale: Option<T>,
    #[serde(default)]
    pub restrictions: Vec<RestrictionEntry<T>>,
    #[serde(default)]
    pub gathering: Option<Gathering<T>>,
}

impl<T: Scalar> Window<T> {
    pub fn new(name: impl Into<String>, start_day: i64, end_day: i64) -> Self {
        Window {
            name: name.into(),
            start_day,
            end_day,
            trip_retention: BTreeMap::new(),
            contact_reduction: None,
            seasonality: None,
            testing_scale: None,
            restrictions: Vec::new(),
            gathering: None,
        }
    }

    pub fn contains(&self, day: i64) -> bool {
        day >= self.start_day && day < self.end_day
    }

    fn overlaps(&self, other: &Window<T>) -> bool {
        self.start_day < other.end_day && other.start_day < self.end_day
    }

    fn validate(&self) -> Result<()> {
        if self.start_day > self.end_day {
            return Err(Error::param(&self.name, "window start after end"));
        }
        for f in self.trip_retention.values() {
            check_probability("trip_retention", *f)?;
        }
        if let Some(r) = self.contact_reduction {
            if !(r >= T::zero()) {
                return Err(Error::param("contact_reduction", "must be non-negative"));
            }
        }
        if let Some(s) = self.seasonality {
            if !(s > T::zero()) {
                return Err(Error::param("seasonality", "must be positive"));
            }
        }
        if let Some(s) = self.testing_scale {
            if !(s >= T::zero()) {
                return Err(Error::param("testing_scale", "must be non-negative"));
            }
        }
        for r in &self.restrictions {
            r.restriction.validate()?;
        }
        if let Some(g) = &self.gathering {
            check_probability("gathering fraction", g.fraction)?;
            if g.days.is_empty() || g.start_hour >= g.end_hour || g.end_hour > 24 {
                return Err(Error::param("gathering", "needs days and start_hour < end_hour <= 24"));
            }
        }
        Ok(())
    }
}

/// Everything the engine needs for one simulated day.
#[derive(Clone, Debug, PartialEq)]
pub struct DayPolicy<T> {
    pub retention: [T; Activity::COUNT],
    pub contact_reduction: T,
    pub seasonality: T,
    pub testing_scale: T,
    pub restrictions: Vec<RestrictionEntry<T>>,
}

impl<T: Scalar> DayPolicy<T> {
    pub fn neutral(seasonality: T) -> Self {
        DayPolicy {
            retention: [T::one(); Activity::COUNT],
            contact_reduction: T::one(),
            seasonality,
            testing_scale: T::one(),
            restrictions: Vec::new(),
        }
    }

    pub fn retention(&self, a: Activity) -> T {
        self.retention[a.index()]
    }

    /// Active restriction record for a location.
    pub fn npi_for(&self, loc: &Location<T>) -> LocationNpi<T> {
        let mut npi = LocationNpi::default();
        for r in self.restrictions.iter().filter(|r| r.target.matches(loc)) {
            apply_restriction(&mut npi, &r.restriction);
        }
        npi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct Schedule<T> {
    #[serde(default)]
    pub windows: Vec<Window<T>>,
}

impl<T> Default for Schedule<T> {
    fn default() -> Self {
        Schedule { windows: Vec::new() }
    }
}

fn conflict<T: Scalar>(field: &str, a: &Window<T>, b: &Window<T>, x: Option<T>, y: Option<T>) -> Result<()> {
    match (x, y) {
        (Some(x), Some(y)) if x != y => Err(Error::ScheduleConflict(format!(
            "`{}` and `{}` set {field} to {x} and {y} on overlapping days",
            a.name, b.name
        ))),
        _ => Ok(()),
    }
}

impl<T: Scalar> Schedule<T> {
    pub fn validate(&self) -> Result<()> {
        for w in &self.windows {
            w.validate()?;
        }
        for (i, a) in self.windows.iter().enumerate() {
            for b in &self.windows[i + 1..] {
                if !a.overlaps(b) {
                    continue;
                }
                conflict("contact_reduction", a, b, a.contact_reduction, b.contact_reduction)?;
                conflict("seasonality", a, b, a.seasonality, b.seasonality)?;
                for (act, f) in &a.trip_retention {
                    conflict("trip_retention", a, b, Some(*f), b.trip_retention.get(act).copied())?;
                }
                for ra in &a.restrictions {
                    for rb in b.restrictions.iter().filter(|rb| rb.target == ra.target) {
                        let (x, y) = (&ra.restriction, &rb.restriction);
                        let closed = |r: &Restriction<T>| {
                            if r.closed {
                                Some(T::zero())
                            } else {
                                r.entry_factor
                            }
                        };
                        conflict("entry_factor", a, b, closed(x), closed(y))?;
                        conflict("contact_scale", a, b, x.contact_scale, y.contact_scale)?;
                        if let (Some(p), Some(q)) = (x.capacity, y.capacity) {
                            if p != q {
                                return Err(Error::ScheduleConflict(format!(
                                    "`{}` and `{}` set different capacities",
                                    a.name, b.name
                                )));
                            }
                        }
                        if let (Some(p), Some(q)) = (x.mask_required, y.mask_required) {
                            if p != q {
                                return Err(Error::ScheduleConflict(format!(
                                    "`{}` and `{}` require different masks",
                                    a.name, b.name
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Policy for `day`, with `monthly_seasonality` used unless a window
    /// overrides it.
    pub fn resolve(&self, day: i64, monthly_seasonality: T) -> DayPolicy<T> {
        let mut p = DayPolicy::neutral(monthly_seasonality);
        for w in self.windows.iter().filter(|w| w.contains(day)) {
            for (act, f) in &w.trip_retention {
                p.retention[act.index()] = *f;
            }
            if let Some(r) = w.contact_reduction {
                p.contact_reduction = r;
            }
            if let Some(s) = w.seasonality {
                p.seasonality = s;
            }
            if let Some(s) = w.testing_scale {
                p.testing_scale = p.testing_scale * s;
            }
            p.restrictions.extend(w.restrictions.iter().cloned());
        }
        p
    }

    pub fn gatherings(&self) -> impl Iterator<Item = &Gathering<T>> {
        self.windows.iter().filter_map(|w| w.gathering.as_ref())
    }
}
