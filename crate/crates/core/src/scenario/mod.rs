//! Scenario container: parameters, timeline, population tables, trips,
//! contact matrices and reported data, plus world construction.

mod init;
mod io;
mod params;
mod reported;
mod synth;
mod timeline;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use init::{expected_infections, init_from_reports, seed_infections, settle, stochastic_round, vaccinate};
pub use io::SCHEMA_VERSION;
pub use params::{MaskParams, ParameterSet, PolicyParams, Retention, NAMED_PARAMETERS};
pub use reported::{estimate_death_day, ReportedData};
pub use synth::{synth_population, SynthSpec};
pub use timeline::{build_schedule, TimelineSpec};

use crate::error::{Error, Result};
use crate::mobility::{expand_gatherings, Trip, TripPlan};
use crate::num::Scalar;
use crate::rng::RngKey;
use crate::schedule::Schedule;
use crate::time::Calendar;
use crate::transmission::ContactMatrices;
use crate::world::{AgeGroup, AgentId, LocationId, LocationType, PerAge, VenueAssignment, World};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRow {
    pub id: AgentId,
    pub age_group: u8,
    pub home: LocationId,
    pub school: Option<LocationId>,
    pub work: Option<LocationId>,
    pub shop: Option<LocationId>,
    pub event: Option<LocationId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationRow {
    pub id: LocationId,
    pub kind: LocationType,
    pub capacity: Option<u32>,
}

/// How the epidemic is seeded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitSpec {
    /// Day of the reported data that corresponds to the simulation start.
    pub day0: i64,
    /// Expected initial infections per age group, used when no reported
    /// data is attached.
    pub infected: PerAge<f64>,
    pub vaccination_coverage: PerAge<f64>,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            day0: 0,
            infected: [0.0; 6],
            vaccination_coverage: [0.0; 6],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario<T: Scalar> {
    pub name: String,
    pub start_date: NaiveDate,
    pub days: i64,
    pub params: ParameterSet<T>,
    pub schedule: Schedule<T>,
    pub timeline: Option<TimelineSpec>,
    pub init: InitSpec,
    pub agents: Vec<AgentRow>,
    pub locations: Vec<LocationRow>,
    pub trips: Vec<Trip>,
    pub contacts: ContactMatrices<T>,
    pub reported: Option<ReportedData>,
}

impl<T: Scalar> Default for Scenario<T> {
    fn default() -> Self {
        Scenario {
            name: "scenario".into(),
            start_date: Calendar::default().start,
            days: 30,
            params: ParameterSet::default(),
            schedule: Schedule::default(),
            timeline: None,
            init: InitSpec::default(),
            agents: Vec::new(),
            locations: Vec::new(),
            trips: Vec::new(),
            contacts: ContactMatrices::default(),
            reported: None,
        }
    }
}

impl<T: Scalar> Scenario<T> {
    /// Explicit windows plus any windows built from the timeline.
    pub fn full_schedule(&self) -> Result<Schedule<T>> {
        let mut s = self.schedule.clone();
        if let Some(spec) = &self.timeline {
            let built = build_schedule(spec, &Calendar::new(self.start_date), &self.params)?;
            s.windows.extend(built.windows);
        }
        s.validate()?;
        Ok(s)
    }

    /// Assembles a world, checking referential integrity, and seeds it.
    pub fn build_world(&self, seed: u64) -> Result<World<T>> {
        let w = self.build_unseeded(seed)?;
        self.seed(w)
    }

    /// World with population, trips and schedule but no infections.
    pub fn build_unseeded(&self, seed: u64) -> Result<World<T>> {
        self.params.validate()?;
        let mut world = World::new(self.params.clone(), RngKey(seed));
        world.calendar = Calendar::new(self.start_date);
        world.contacts = self.contacts.clone();
        world.schedule = self.full_schedule()?;

        let expect = [LocationType::Hospital, LocationType::Icu, LocationType::Cemetery];
        for (i, row) in self.locations.iter().enumerate() {
            let bad = |detail: String| Error::Schema {
                file: "locations".into(),
                row: i + 1,
                detail,
            };
            if row.id.index() != i {
                return Err(bad(format!("id {} out of sequence", row.id)));
            }
            if i < 3 {
                if row.kind != expect[i] {
                    return Err(bad(format!("location {i} must be {}", expect[i])));
                }
                world.locations[i].capacity = row.capacity;
            } else {
                if row.kind.is_medical() {
                    return Err(bad("only one hospital, icu and cemetery are allowed".into()));
                }
                world.add_location(row.kind, row.capacity);
            }
        }
        if self.locations.len() < 3 {
            return Err(Error::Schema {
                file: "locations".into(),
                row: self.locations.len() + 1,
                detail: "rows 0, 1, 2 must be hospital, icu, cemetery".into(),
            });
        }
        for (i, a) in self.agents.iter().enumerate() {
            let wrap = |e: Error| Error::Schema {
                file: "agents".into(),
                row: i + 1,
                detail: e.to_string(),
            };
            if a.id.index() != i {
                return Err(wrap(Error::param("id", format!("{} out of sequence", a.id))));
            }
            let age = AgeGroup::new(usize::from(a.age_group)).map_err(wrap)?;
            let venues = VenueAssignment {
                home: Some(a.home),
                school: a.school,
                work: a.work,
                shop: a.shop,
                event: a.event,
            };
            world.add_agent(age, venues).map_err(wrap)?;
        }
        world.trips = TripPlan::new(world.agents.len(), world.locations.len(), self.trips.clone())?;
        expand_gatherings(&mut world);
        Ok(world)
    }

    /// Vaccinates and infects according to the reported data or the explicit
    /// initial counts.
    pub fn seed(&self, mut world: World<T>) -> Result<World<T>> {
        match &self.reported {
            Some(rep) => {
                init_from_reports(&mut world, rep, self.init.day0, &self.init.vaccination_coverage)?;
            }
            None => {
                vaccinate(&mut world, &self.init.vaccination_coverage)?;
                let window = world.params.policy.active_window_days;
                seed_infections(&mut world, &self.init.infected, window)?;
            }
        }
        Ok(world)
    }

    /// Reported rows from the simulation start onward.
    pub fn reported_from_start(&self) -> Option<ReportedData> {
        self.reported.as_ref().map(|r| r.from_day(self.init.day0))
    }
}
