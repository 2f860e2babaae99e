use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::{Activity, Trip};
use crate::num::Scalar;
use crate::rng::{RandomSource, RngKey, SystemPurpose, SystemStream};
use crate::world::{AgentId, LocationId, LocationType, PerAge};

use super::{AgentRow, InitSpec, LocationRow, Scenario};

/// Shape of a synthetic town.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub agents: usize,
    pub age_mix: PerAge<f64>,
    /// Weights of household sizes 1, 2, 3, ...
    pub household_sizes: Vec<f64>,
    pub employment_rate: f64,
    pub pupils_per_school: usize,
    pub workers_per_workplace: usize,
    /// Fixed number of workplaces; derived from `workers_per_workplace` if unset.
    pub workplaces: Option<usize>,
    pub work_capacity: Option<u32>,
    pub agents_per_shop: usize,
    pub agents_per_event: usize,
    /// Chance of a weekly shopping trip and of a weekly social event.
    pub p_shopping: f64,
    pub p_event: f64,
    /// Fraction of each age group infected at the start.
    pub initial_prevalence: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            agents: 10_000,
            age_mix: [0.05, 0.09, 0.26, 0.35, 0.19, 0.06],
            household_sizes: vec![0.41, 0.34, 0.12, 0.09, 0.04],
            employment_rate: 0.75,
            pupils_per_school: 250,
            workers_per_workplace: 20,
            workplaces: None,
            work_capacity: None,
            agents_per_shop: 250,
            agents_per_event: 150,
            p_shopping: 0.8,
            p_event: 0.5,
            initial_prevalence: 0.003,
        }
    }
}

impl SynthSpec {
    pub fn with_agents(agents: usize) -> Self {
        SynthSpec {
            agents,
            ..Default::default()
        }
    }
}

struct Builder {
    locations: Vec<LocationRow>,
}

impl Builder {
    fn add(&mut self, kind: LocationType, capacity: Option<u32>) -> LocationId {
        let id = LocationId(self.locations.len() as u32);
        self.locations.push(LocationRow { id, kind, capacity });
        id
    }

    fn venues(&mut self, kind: LocationType, n: usize, capacity: Option<u32>) -> Vec<LocationId> {
        (0..n).map(|_| self.add(kind, capacity)).collect()
    }
}

/// Deterministic synthetic population: households, venues and weekly trip
/// chains, all drawn from the synthesis stream of `seed`.
pub fn synth_population<T: Scalar>(spec: &SynthSpec, seed: u64) -> Result<Scenario<T>> {
    if spec.agents == 0 {
        return Err(Error::Infeasible("agent count must be positive".into()));
    }
    if spec.age_mix.iter().any(|w| *w < 0.0) || spec.age_mix.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Infeasible("age mix needs non-negative weights".into()));
    }
    if spec.household_sizes.is_empty() || spec.household_sizes.iter().any(|w| *w < 0.0) {
        return Err(Error::Infeasible("household sizes need non-negative weights".into()));
    }
    let mut rng = SystemStream::new(RngKey(seed), SystemPurpose::Synthesis);

    let ages: Vec<usize> = (0..spec.agents).map(|_| rng.categorical(&spec.age_mix)).collect();
    let pupils = ages.iter().filter(|a| **a == 1).count();
    let workers: Vec<bool> = ages
        .iter()
        .map(|a| (*a == 2 || *a == 3) && rng.bernoulli(spec.employment_rate))
        .collect();
    let n_workers = workers.iter().filter(|w| **w).count();

    let n_workplaces = spec
        .workplaces
        .unwrap_or_else(|| n_workers.div_ceil(spec.workers_per_workplace.max(1)).max(1));
    if let Some(cap) = spec.work_capacity {
        if n_workers > cap as usize * n_workplaces {
            return Err(Error::Infeasible(format!(
                "{n_workers} workers exceed {n_workplaces} workplaces of capacity {cap}"
            )));
        }
    }
    if n_workplaces == 0 && n_workers > 0 {
        return Err(Error::Infeasible("workers but no workplaces".into()));
    }

    let mut b = Builder { locations: Vec::new() };
    b.add(LocationType::Hospital, None);
    b.add(LocationType::Icu, None);
    b.add(LocationType::Cemetery, None);
    let schools = b.venues(LocationType::School, pupils.div_ceil(spec.pupils_per_school.max(1)).max(1), None);
    let works = b.venues(LocationType::Work, n_workplaces, spec.work_capacity);
    let shops = b.venues(LocationType::BasicShop, (spec.agents / spec.agents_per_shop.max(1)).max(1), None);
    let events = b.venues(LocationType::SocialEvent, (spec.agents / spec.agents_per_event.max(1)).max(1), None);

    let mut work_load = vec![0u32; works.len()];
    let mut agents = Vec::with_capacity(spec.agents);
    let mut trips = Vec::new();
    let mut i = 0;
    while i < spec.agents {
        let size = (rng.categorical(&spec.household_sizes) + 1).min(spec.agents - i);
        let home = b.add(LocationType::Home, None);
        for _ in 0..size {
            let id = AgentId(i as u32);
            let age = ages[i];
            let school = (age == 1).then(|| schools[rng.below(schools.len() as u64) as usize]);
            let work = if workers[i] {
                let start = rng.below(works.len() as u64) as usize;
                let cap = spec.work_capacity.unwrap_or(u32::MAX);
                let k = (0..works.len())
                    .map(|k| (start + k) % works.len())
                    .find(|k| work_load[*k] < cap)
                    .ok_or_else(|| Error::Infeasible("workplaces full".into()))?;
                work_load[k] += 1;
                Some(works[k])
            } else {
                None
            };
            let shop = shops[rng.below(shops.len() as u64) as usize];
            let event = events[rng.below(events.len() as u64) as usize];
            agents.push(AgentRow {
                id,
                age_group: age as u8,
                home,
                school,
                work,
                shop: Some(shop),
                event: Some(event),
            });

            let mut trip = |weekday: u8, minute: u32, target: LocationId, activity: Activity| {
                trips.push(Trip {
                    agent: id,
                    weekday,
                    minute: minute as u16,
                    target,
                    activity,
                });
            };
            if let Some(s) = school {
                let leave = 7 * 60 + rng.below(90) as u32;
                for d in 0..5 {
                    trip(d, leave, s, Activity::School);
                    trip(d, leave + 7 * 60, home, Activity::Home);
                }
            }
            if let Some(w) = work {
                let leave = 6 * 60 + rng.below(180) as u32;
                let hours = 7 + rng.below(3) as u32;
                for d in 0..5 {
                    trip(d, leave, w, Activity::Work);
                    trip(d, leave + hours * 60, home, Activity::Home);
                }
            }
            let shopping = age >= 2 && rng.bernoulli(spec.p_shopping);
            let day = rng.below(6) as u8;
            let at = 9 * 60 + rng.below(9 * 60) as u32;
            if shopping {
                trip(day, at, shop, Activity::Shopping);
                trip(day, at + 60, home, Activity::Home);
            }
            let going_out = age >= 1 && rng.bernoulli(spec.p_event);
            let day = 4 + rng.below(3) as u8;
            let at = 17 * 60 + rng.below(120) as u32;
            if going_out {
                trip(day, at, event, Activity::SocialEvent);
                trip(day, at + 3 * 60, home, Activity::Home);
            }
            i += 1;
        }
    }

    let mut init = InitSpec::default();
    for (g, n) in count_ages(&agents).iter().enumerate() {
        init.infected[g] = *n as f64 * spec.initial_prevalence;
    }

    Ok(Scenario {
        name: format!("synthetic-{}-{seed}", spec.agents),
        agents,
        locations: b.locations,
        trips,
        init,
        ..Scenario::default()
    })
}

fn count_ages(agents: &[AgentRow]) -> PerAge<usize> {
    let mut n = [0; 6];
    for a in agents {
        n[a.age_group as usize] += 1;
    }
    n
}
