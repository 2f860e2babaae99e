use crate::error::{Error, Result};
use crate::mobility::core_rule;
use crate::num::Scalar;
use crate::rng::{RandomSource, SystemPurpose, SystemStream};
use crate::time::SimTime;
use crate::world::{AgentId, AgeGroup, ImmunityEvent, ImmunityKind, PerAge, World, NUM_AGE_GROUPS};

use super::reported::ReportedData;

/// `floor(x)` plus one with probability `x - floor(x)`.
pub fn stochastic_round<R: RandomSource + ?Sized>(x: f64, rng: &mut R) -> usize {
    let base = x.floor();
    let extra = rng.bernoulli(x - base);
    base as usize + usize::from(extra)
}

/// `n` distinct elements of `pool` by a partial Fisher-Yates shuffle,
/// returned in ascending order.
fn choose<R: RandomSource + ?Sized>(mut pool: Vec<AgentId>, n: usize, rng: &mut R) -> Vec<AgentId> {
    for i in 0..n {
        let j = i + rng.below((pool.len() - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(n);
    pool.sort();
    pool
}

/// Vaccinates a coverage fraction of each age group at the start.
pub fn vaccinate<T: Scalar>(world: &mut World<T>, coverage: &PerAge<f64>) -> Result<PerAge<usize>> {
    let mut rng = SystemStream::new(world.rng_key, SystemPurpose::Vaccination);
    let mut done = [0; NUM_AGE_GROUPS];
    for g in AgeGroup::ALL {
        let c = coverage[g.index()];
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::param("vaccination coverage", format!("{c} is not a fraction")));
        }
        let pool: Vec<AgentId> = world
            .agents
            .iter()
            .filter(|a| a.age == g && !a.is_vaccinated())
            .map(|a| a.id)
            .collect();
        let n = stochastic_round(c * pool.len() as f64, &mut rng).min(pool.len());
        for id in choose(pool, n, &mut rng) {
            world.agents[id.index()].history.push(ImmunityEvent {
                time: world.clock,
                kind: ImmunityKind::Vaccination { vaccine: 0 },
            });
        }
        done[g.index()] = n;
    }
    Ok(done)
}

/// Infects a stochastically rounded number of agents per age group, with
/// transmission times uniform over the `window_days` before the clock.
pub fn seed_infections<T: Scalar>(
    world: &mut World<T>,
    expected: &PerAge<f64>,
    window_days: i64,
) -> Result<PerAge<usize>> {
    let mut rng = SystemStream::new(world.rng_key, SystemPurpose::Initialization);
    let t0: f64 = world.clock.days();
    let mut seeded = [0; NUM_AGE_GROUPS];
    for g in AgeGroup::ALL {
        let x = expected[g.index()];
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::param("initial infections", format!("{x} is not a count")));
        }
        let n = stochastic_round(x, &mut rng);
        let pool: Vec<AgentId> = world
            .agents
            .iter()
            .filter(|a| a.age == g && a.is_susceptible())
            .map(|a| a.id)
            .collect();
        if n > pool.len() {
            return Err(Error::InsufficientSusceptibles {
                group: g,
                required: n,
                available: pool.len(),
            });
        }
        for id in choose(pool, n, &mut rng) {
            let t_t = t0 - window_days as f64 * rng.uniform01();
            world.infect(id, T::lit(t_t))?;
        }
        seeded[g.index()] = n;
    }
    settle(world);
    Ok(seeded)
}

/// Places agents whose state already demands a medical venue or the
/// cemetery.
pub fn settle<T: Scalar>(world: &mut World<T>) {
    let t: SimTime = world.clock;
    for a in &mut world.agents {
        if a.infection.is_some() {
            if let Some(target) = core_rule(a, t) {
                a.location = target;
            }
        }
    }
    world.rebuild_presence();
}

/// Expected initial infections: active reported cases times the dark figure.
pub fn expected_infections(reports: &ReportedData, day0: i64, window_days: i64, dark_figure: f64) -> PerAge<f64> {
    reports.active_cases(day0, window_days).map(|c| c * dark_figure)
}

/// Vaccinates by coverage, then seeds `reported active x d` infections.
pub fn init_from_reports<T: Scalar>(
    world: &mut World<T>,
    reports: &ReportedData,
    day0: i64,
    coverage: &PerAge<f64>,
) -> Result<PerAge<usize>> {
    let d = world.params.policy.dark_figure.as_f64();
    if d < 1.0 {
        return Err(Error::param("d", "dark figure must be >= 1"));
    }
    let window = world.params.policy.active_window_days;
    vaccinate(world, coverage)?;
    let expected = expected_infections(reports, day0, window, d);
    seed_infections(world, &expected, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngKey;
    use crate::scenario::ParameterSet;
    use crate::world::{LocationType, VenueAssignment};

    fn world(n: usize, seed: u64) -> World<f64> {
        let mut w = World::new(ParameterSet::default(), RngKey(seed));
        let home = w.add_location(LocationType::Home, None);
        for i in 0..n {
            w.add_agent(AgeGroup::new(i % 6).unwrap(), VenueAssignment::home(home)).unwrap();
        }
        w
    }

    #[test]
    fn zero_reported_leaves_everyone_susceptible() {
        let mut w = world(60, 1);
        let seeded = seed_infections(&mut w, &[0.0; 6], 14).unwrap();
        assert_eq!(seeded, [0; 6]);
        assert!(w.agents.iter().all(|a| a.is_susceptible()));
    }

    #[test]
    fn integer_expectations_are_exact() {
        let mut w = world(600, 2);
        let seeded = seed_infections(&mut w, &[3.0, 0.0, 5.0, 1.0, 0.0, 2.0], 14).unwrap();
        assert_eq!(seeded, [3, 0, 5, 1, 0, 2]);
        let infected = w.agents.iter().filter(|a| a.infection.is_some()).count();
        assert_eq!(infected, 11);
        for a in w.agents.iter().filter(|a| a.infection.is_some()) {
            let t = a.infection.as_ref().unwrap().transmission_time();
            assert!((-14.0..=0.0).contains(&t));
        }
        w.check_consistency().unwrap();
    }

    #[test]
    fn too_many_infections_rejected() {
        let mut w = world(12, 3);
        assert!(matches!(
            seed_infections(&mut w, &[5.0, 0.0, 0.0, 0.0, 0.0, 0.0], 14),
            Err(Error::InsufficientSusceptibles { .. })
        ));
    }

    #[test]
    fn full_coverage_vaccinates_group() {
        let mut w = world(60, 4);
        let done = vaccinate(&mut w, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(done[4], 10);
        assert!(w.agents.iter().filter(|a| a.age.index() == 4).all(|a| a.is_vaccinated()));
        assert!(w.agents.iter().filter(|a| a.age.index() != 4).all(|a| !a.is_vaccinated()));
    }
}
