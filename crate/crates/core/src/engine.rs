//! Main loop: per-step interaction then movement, loggers, and the ensemble
//! runner.

use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infection::{Infection, InfectionState};
use crate::mobility::{expand_gatherings, movement_phase};
use crate::num::Scalar;
use crate::scenario::Scenario;
use crate::schedule::DayPolicy;
use crate::time::{SimTime, TimeSpan};
use crate::transmission::{interact, InteractionContext};
use crate::world::{AgentId, Census, PerAge, World, NUM_AGE_GROUPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: TimeSpan,
    pub t0: SimTime,
    pub t_max: SimTime,
}

impl StepConfig {
    /// Hourly steps over `days` days from the origin.
    pub fn days(days: i64) -> Self {
        StepConfig {
            dt: TimeSpan::HOUR,
            t0: SimTime::ORIGIN,
            t_max: SimTime::from_days(days),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt.0 <= 0 {
            return Err(Error::param("dt", "must be positive"));
        }
        if self.dt > TimeSpan::DAY {
            return Err(Error::param("dt", "must not exceed one day"));
        }
        if self.t0 > self.t_max {
            return Err(Error::param("t_max", "must not precede t0"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        let span = (self.t_max - self.t0).0;
        (span + self.dt.0 - 1).div_euclid(self.dt.0).max(0) as usize
    }
}

/// What happened during one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepDelta {
    pub new_infections: PerAge<u64>,
    pub new_detected: u64,
    pub tests: u64,
    pub positive_tests: u64,
}

/// State handed to loggers after every step and once before the first.
pub struct Sample<'a, T: Scalar> {
    pub world: &'a World<T>,
    pub census: &'a Census,
    pub time: SimTime,
    pub delta: StepDelta,
}

/// One logged time series; `by_age` holds the per-group split when kept.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub time: Vec<f64>,
    pub total: Vec<f64>,
    pub by_age: Option<Vec<PerAge<f64>>>,
}

impl Series {
    pub fn new(name: impl Into<String>, by_age: bool) -> Self {
        Series {
            name: name.into(),
            time: Vec::new(),
            total: Vec::new(),
            by_age: by_age.then(Vec::new),
        }
    }

    pub fn push(&mut self, time: SimTime, values: PerAge<f64>) {
        self.time.push(time.days());
        self.total.push(values.iter().sum());
        if let Some(v) = self.by_age.as_mut() {
            v.push(values);
        }
    }

    pub fn push_total(&mut self, time: SimTime, value: f64) {
        self.time.push(time.days());
        self.total.push(value);
        if let Some(v) = self.by_age.as_mut() {
            v.push([f64::NAN; NUM_AGE_GROUPS]);
        }
    }

    /// CSV text with columns `time,value[,age_group]`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        match &self.by_age {
            None => {
                s.push_str("time,value\n");
                for (t, v) in self.time.iter().zip(&self.total) {
                    let _ = writeln!(s, "{t:.6},{v}");
                }
            }
            Some(rows) => {
                s.push_str("time,value,age_group\n");
                for (t, r) in self.time.iter().zip(rows) {
                    for (g, v) in r.iter().enumerate() {
                        let _ = writeln!(s, "{t:.6},{v},{g}");
                    }
                }
            }
        }
        s
    }

    /// Parses the output of [`Series::to_csv`].
    pub fn from_csv(name: &str, text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let by_age = rdr
            .headers()
            .map_err(|e| Error::param(name, e.to_string()))?
            .iter()
            .any(|h| h == "age_group");
        let mut s = Series::new(name, by_age);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Schema {
                file: name.into(),
                row: i + 1,
                detail: e.to_string(),
            })?;
            let num = |k: usize| -> Result<f64> {
                rec.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Schema {
                    file: name.into(),
                    row: i + 1,
                    detail: format!("column {k} is not a number"),
                })
            };
            let (t, v) = (num(0)?, num(1)?);
            if by_age {
                let g = num(2)? as usize;
                if g == 0 {
                    s.time.push(t);
                    s.total.push(0.0);
                    s.by_age.as_mut().unwrap().push([0.0; NUM_AGE_GROUPS]);
                }
                let last = s.total.len() - 1;
                s.total[last] += v;
                s.by_age.as_mut().unwrap()[last][g.min(NUM_AGE_GROUPS - 1)] = v;
            } else {
                s.time.push(t);
                s.total.push(v);
            }
        }
        Ok(s)
    }
}

/// Pull-based sampler over the world state.
pub trait Logger<T: Scalar>: Send {
    fn record(&mut self, sample: &Sample<'_, T>) -> Result<()>;
    fn finish(self: Box<Self>) -> Option<Series>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinKind {
    State(InfectionState),
    NewDetected,
    CumulativeDetected,
    IcuOccupancy,
    Hospitalized,
    CumulativeDeaths,
    NewInfections,
}

impl BuiltinKind {
    pub fn name(self) -> String {
        match self {
            BuiltinKind::State(s) => format!("state_{}", s.name()),
            BuiltinKind::NewDetected => "new_detected".into(),
            BuiltinKind::CumulativeDetected => "cumulative_detected".into(),
            BuiltinKind::IcuOccupancy => "icu_occupancy".into(),
            BuiltinKind::Hospitalized => "hospitalized".into(),
            BuiltinKind::CumulativeDeaths => "cumulative_deaths".into(),
            BuiltinKind::NewInfections => "new_infections".into(),
        }
    }
}

pub struct Builtin {
    kind: BuiltinKind,
    series: Series,
}

impl Builtin {
    pub fn new(kind: BuiltinKind, by_age: bool) -> Self {
        let by_age = by_age && !matches!(kind, BuiltinKind::NewDetected | BuiltinKind::CumulativeDetected);
        Builtin {
            kind,
            series: Series::new(kind.name(), by_age),
        }
    }
}

impl<T: Scalar> Logger<T> for Builtin {
    fn record(&mut self, s: &Sample<'_, T>) -> Result<()> {
        let state = |st: InfectionState| s.census.counts[st.index()].map(f64::from);
        match self.kind {
            BuiltinKind::State(st) => self.series.push(s.time, state(st)),
            BuiltinKind::IcuOccupancy => self.series.push(s.time, state(InfectionState::Critical)),
            BuiltinKind::CumulativeDeaths => self.series.push(s.time, state(InfectionState::Dead)),
            BuiltinKind::Hospitalized => {
                let a = state(InfectionState::Severe);
                let b = state(InfectionState::Critical);
                let mut v = [0.0; NUM_AGE_GROUPS];
                for g in 0..NUM_AGE_GROUPS {
                    v[g] = a[g] + b[g];
                }
                self.series.push(s.time, v);
            }
            BuiltinKind::NewInfections => self.series.push(s.time, s.delta.new_infections.map(|x| x as f64)),
            BuiltinKind::NewDetected => self.series.push_total(s.time, s.delta.new_detected as f64),
            BuiltinKind::CumulativeDetected => self.series.push_total(s.time, s.world.stats.detected as f64),
        }
        Ok(())
    }

    fn finish(self: Box<Self>) -> Option<Series> {
        Some(self.series)
    }
}

/// The built-in loggers: every state count, detections, ICU occupancy,
/// hospitalized, cumulative deaths and new infections per step.
pub fn default_loggers<T: Scalar>(by_age: bool) -> Vec<Box<dyn Logger<T>>> {
    let mut v: Vec<Box<dyn Logger<T>>> = InfectionState::ALL
        .into_iter()
        .map(|s| Box::new(Builtin::new(BuiltinKind::State(s), by_age)) as Box<dyn Logger<T>>)
        .collect();
    for k in [
        BuiltinKind::NewDetected,
        BuiltinKind::CumulativeDetected,
        BuiltinKind::IcuOccupancy,
        BuiltinKind::Hospitalized,
        BuiltinKind::CumulativeDeaths,
        BuiltinKind::NewInfections,
    ] {
        v.push(Box::new(Builtin::new(k, by_age)));
    }
    v
}

/// Result of one run.
#[derive(Clone, Debug)]
pub struct RunOutput<T: Scalar> {
    pub seed: u64,
    pub steps: usize,
    pub series: Vec<Series>,
    pub world: World<T>,
}

impl<T: Scalar> RunOutput<T> {
    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Every infection of the run, in agent order.
    pub fn infections(&self) -> Vec<(AgentId, &Infection<T>)> {
        self.world
            .agents
            .iter()
            .filter_map(|a| a.infection.as_ref().map(|i| (a.id, i)))
            .collect()
    }

    /// Writes one CSV per series plus `infections.csv` and `meta.toml`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for s in &self.series {
            let p = dir.join(format!("{}.csv", s.name));
            fs::write(&p, s.to_csv()).map_err(|e| Error::io(&p, e))?;
        }
        let p = dir.join("infections.csv");
        fs::write(&p, crate::analysis::infections_csv(&self.world)).map_err(|e| Error::io(&p, e))?;
        let meta = format!(
            "seed = {}\nsteps = {}\nagents = {}\ntransmissions = {}\ntests = {}\npositive_tests = {}\n",
            self.seed,
            self.steps,
            self.world.agents.len(),
            self.world.stats.transmissions,
            self.world.stats.tests_performed,
            self.world.stats.positive_tests
        );
        let p = dir.join("meta.toml");
        fs::write(&p, meta).map_err(|e| Error::io(&p, e))
    }
}

fn apply_policy<T: Scalar>(world: &mut World<T>, policy: &DayPolicy<T>) {
    for loc in &mut world.locations {
        loc.npi = policy.npi_for(loc);
    }
    world.testing.scale = policy.testing_scale;
}

/// Policy in force on `day`.
pub fn policy_for<T: Scalar>(world: &World<T>, day: i64) -> DayPolicy<T> {
    let month = world.calendar.month(day) as usize;
    let psi = world.params.transmission.seasonality[month - 1];
    world.schedule.resolve(day, psi)
}

/// Interaction phase over all locations, with infections applied afterwards.
pub fn interaction_phase<T: Scalar>(world: &mut World<T>, policy: &DayPolicy<T>, t: SimTime, dt: TimeSpan) -> PerAge<u64> {
    let outcomes = {
        let ctx = InteractionContext {
            agents: &world.agents,
            contacts: &world.contacts,
            infection: &world.params.infection,
            masks: &world.params.masks,
            vaccination: &world.params.vaccination,
            lambda: world.params.transmission.lambda,
            seasonality: policy.seasonality,
            contact_reduction: policy.contact_reduction,
            quarantine_efficiency: world.params.quarantine.efficiency,
            key: world.rng_key,
        };
        let (td, dtd): (T, T) = (t.days(), dt.in_days());
        world
            .locations
            .par_iter()
            .with_min_len(64)
            .flat_map_iter(|loc| interact(&ctx, loc, td, dtd))
            .collect::<Vec<_>>()
    };
    let mut new = [0u64; NUM_AGE_GROUPS];
    for o in outcomes {
        let a = &mut world.agents[o.agent.index()];
        a.rng_counter = o.rng_counter;
        if let Some(inf) = o.infection {
            new[a.age.index()] += 1;
            a.history.push(crate::world::ImmunityEvent {
                time: t,
                kind: crate::world::ImmunityKind::Infection { variant: inf.variant },
            });
            a.infection = Some(inf);
        }
    }
    world.stats.transmissions += new.iter().sum::<u64>();
    new
}

/// Advances the world by one step.
pub fn step<T: Scalar>(world: &mut World<T>, policy: &DayPolicy<T>, dt: TimeSpan) -> StepDelta {
    let t = world.clock;
    let new_infections = interaction_phase(world, policy, t, dt);
    for a in &mut world.agents {
        a.time_at_location = TimeSpan(a.time_at_location.0 + dt.0);
    }
    let tally = movement_phase(world, policy, t, dt);
    world.stats.tests_performed += tally.performed;
    world.stats.positive_tests += tally.positive;
    world.stats.detected += tally.detected;
    world.clock = t + dt;
    StepDelta {
        new_infections,
        new_detected: tally.detected,
        tests: tally.performed,
        positive_tests: tally.positive,
    }
}

/// Runs in the current thread pool.
pub fn run<T: Scalar>(
    mut world: World<T>,
    config: &StepConfig,
    mut loggers: Vec<Box<dyn Logger<T>>>,
) -> Result<RunOutput<T>> {
    config.validate()?;
    expand_gatherings(&mut world);
    world.clock = config.t0;
    let mut day = None;
    let mut policy = policy_for(&world, config.t0.day());
    let census = world.census();
    for l in &mut loggers {
        l.record(&Sample {
            world: &world,
            census: &census,
            time: world.clock,
            delta: StepDelta::default(),
        })?;
    }
    let mut steps = 0;
    while world.clock < config.t_max {
        let today = world.clock.day();
        if day != Some(today) {
            policy = policy_for(&world, today);
            apply_policy(&mut world, &policy);
            day = Some(today);
        }
        let delta = step(&mut world, &policy, config.dt);
        steps += 1;
        let census = world.census();
        for l in &mut loggers {
            l.record(&Sample {
                world: &world,
                census: &census,
                time: world.clock,
                delta,
            })?;
        }
    }
    let series = loggers.into_iter().filter_map(|l| l.finish()).collect();
    Ok(RunOutput {
        seed: world.rng_key.0,
        steps,
        series,
        world,
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::param("workers", e.to_string()))
}

/// Runs one simulation on a dedicated pool of `workers` threads.
pub fn simulate<T: Scalar>(
    world: World<T>,
    config: &StepConfig,
    loggers: Vec<Box<dyn Logger<T>>>,
    workers: usize,
) -> Result<RunOutput<T>> {
    pool(workers)?.install(|| run(world, config, loggers))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub seeds: Vec<u64>,
    pub workers: usize,
}

impl EnsembleConfig {
    /// `runs` consecutive seeds from `base`.
    pub fn consecutive(base: u64, runs: usize, workers: usize) -> Self {
        EnsembleConfig {
            seeds: (0..runs as u64).map(|i| base.wrapping_add(i)).collect(),
            workers,
        }
    }
}

/// Runs one simulation per seed; results come back in seed order and a
/// failing run does not affect its siblings.
pub fn run_ensemble<T, F>(
    scenario: &Scenario<T>,
    config: &StepConfig,
    ensemble: &EnsembleConfig,
    loggers: F,
) -> Result<Vec<Result<RunOutput<T>>>>
where
    T: Scalar,
    F: Fn() -> Vec<Box<dyn Logger<T>>> + Sync,
{
    run_jobs(ensemble, |seed| {
        let world = scenario.build_world(seed)?;
        run(world, config, loggers())
    })
}

/// Applies `job` to every seed of the ensemble in parallel, catching panics.
pub fn run_jobs<R, F>(ensemble: &EnsembleConfig, job: F) -> Result<Vec<Result<R>>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync,
{
    Ok(pool(ensemble.workers)?.install(|| {
        ensemble
            .seeds
            .par_iter()
            .enumerate()
            .map(|(i, &seed)| match catch_unwind(AssertUnwindSafe(|| job(seed))) {
                Ok(Ok(r)) => Ok(r),
                Ok(Err(e)) => Err(Error::RunFailed {
                    run: i,
                    detail: e.to_string(),
                }),
                Err(p) => Err(Error::RunFailed {
                    run: i,
                    detail: p
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "panic".into()),
                }),
            })
            .collect()
    }))
}

pub const PERCENTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Nearest-rank percentile of `values` (sorted in place).
pub fn percentile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    values[rank - 1]
}

/// p5, p25, p50, p75 and p95 per time point of a series across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub time: Vec<f64>,
    pub bands: [Vec<f64>; 5],
}

impl Summary {
    pub fn of(name: &str, runs: &[&Series]) -> Option<Summary> {
        let first = runs.first()?;
        let n = first.time.len();
        if runs.iter().any(|s| s.total.len() != n) {
            return None;
        }
        let mut bands: [Vec<f64>; 5] = Default::default();
        let mut column = vec![0.0; runs.len()];
        for k in 0..n {
            for (c, s) in column.iter_mut().zip(runs) {
                *c = s.total[k];
            }
            for (b, p) in bands.iter_mut().zip(PERCENTILES) {
                b.push(percentile(&mut column, p));
            }
        }
        Some(Summary {
            name: name.into(),
            time: first.time.clone(),
            bands,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,p5,p25,p50,p75,p95\n");
        for k in 0..self.time.len() {
            let _ = write!(s, "{:.6}", self.time[k]);
            for b in &self.bands {
                let _ = write!(s, ",{}", b[k]);
            }
            s.push('\n');
        }
        s
    }
}

/// Percentile summaries of every series shared by the runs.
pub fn summarize(runs: &[Vec<Series>]) -> Vec<Summary> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .iter()
        .filter_map(|s| {
            let group: Vec<&Series> = runs
                .iter()
                .filter_map(|r| r.iter().find(|x| x.name == s.name))
                .collect();
            (group.len() == runs.len()).then(|| Summary::of(&s.name, &group)).flatten()
        })
        .collect()
}
