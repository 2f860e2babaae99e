//! Post-processing: infection tables, effective reproduction number,
//! run endpoints and parameter sweeps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::{default_loggers, run, run_jobs, EnsembleConfig, RunOutput, Series, StepConfig};
use crate::error::{Error, Result};
use crate::infection::{Infection, InfectionCourse, InfectionState, ViralCurve};
use crate::num::Scalar;
use crate::scenario::Scenario;
use crate::world::{AgeGroup, AgentId, PerAge, World, NUM_AGE_GROUPS};

/// One row of `infections.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct InfectionRecord {
    pub agent: AgentId,
    pub age: AgeGroup,
    pub infection: Infection<f64>,
}

const INFECTIONS_HEADER: &str =
    "agent_id,age_group,transmission_time,shed_factor,incline,peak,decline,alpha,beta,detected,course";

/// Every infection in the world with its viral curve and course.
///
/// The course column is `state@day` pairs separated by `;`.
pub fn infections_csv<T: Scalar>(world: &World<T>) -> String {
    let mut s = String::from(INFECTIONS_HEADER);
    s.push('\n');
    for a in &world.agents {
        let Some(inf) = &a.infection else { continue };
        let c = &inf.curve;
        let course: Vec<String> = inf
            .course
            .entries
            .iter()
            .map(|(st, t)| format!("{}@{}", st.name(), t.as_f64()))
            .collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            a.id,
            a.age.index(),
            c.transmission_time.as_f64(),
            c.shed_factor.as_f64(),
            c.incline.as_f64(),
            c.peak.as_f64(),
            c.decline.as_f64(),
            c.alpha.as_f64(),
            c.beta.as_f64(),
            u8::from(inf.detected),
            course.join(";")
        );
    }
    s
}

/// Parses [`infections_csv`] output.
pub fn read_infections(text: &str) -> Result<Vec<InfectionRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let bad = |detail: String| Error::Schema {
            file: "infections.csv".into(),
            row: i + 1,
            detail,
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 11 {
            return Err(bad(format!("expected 11 columns, found {}", rec.len())));
        }
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse()
                .map_err(|_| bad(format!("column {k} is not a number")))
        };
        let agent = AgentId(rec[0].parse().map_err(|_| bad("bad agent id".into()))?);
        let age = AgeGroup::new(num(1)? as usize).map_err(|e| bad(e.to_string()))?;
        let curve = ViralCurve {
            transmission_time: num(2)?,
            shed_factor: num(3)?,
            incline: num(4)?,
            peak: num(5)?,
            decline: num(6)?,
            alpha: num(7)?,
            beta: num(8)?,
        };
        let mut entries = Vec::new();
        for part in rec[10].split(';').filter(|p| !p.is_empty()) {
            let (st, t) = part.split_once('@').ok_or_else(|| bad(format!("bad course entry `{part}`")))?;
            let st: InfectionState = st.parse().map_err(|e: Error| bad(e.to_string()))?;
            let t: f64 = t.parse().map_err(|_| bad(format!("bad course time `{t}`")))?;
            entries.push((st, t));
        }
        out.push(InfectionRecord {
            agent,
            age,
            infection: Infection {
                variant: 0,
                curve,
                course: InfectionCourse { entries },
                detected: &rec[9] == "1",
            },
        });
    }
    Ok(out)
}

/// Effective reproduction number over `(t - window, t]`: infections
/// transmitted in the window divided by the share of lifetime shedding
/// that all infections spent in it. `None` when nobody shed.
pub fn estimate_rt<'a, T: Scalar + 'a>(
    infections: impl IntoIterator<Item = &'a Infection<T>>,
    t: T,
    window: T,
) -> Option<T> {
    let lo = t - window;
    let mut new = T::zero();
    let mut shed = T::zero();
    for inf in infections {
        let tt = inf.transmission_time();
        if tt > lo && tt <= t {
            new = new + T::one();
        }
        let total = inf.total_shed();
        if total > T::zero() {
            shed = shed + inf.shed_integral(lo, t) / total;
        }
    }
    (shed > T::zero()).then(|| new / shed)
}

/// Rt estimates resting on fewer transmissions than this are flagged as
/// unstable (typically the epidemic tail).
pub const RT_MIN_EVENTS: usize = 10;

/// Transmissions with `t_T` in `(t - window, t]`.
pub fn window_events<'a, T: Scalar + 'a>(infections: impl IntoIterator<Item = &'a Infection<T>>, t: T, window: T) -> usize {
    let lo = t - window;
    infections
        .into_iter()
        .filter(|inf| {
            let tt = inf.transmission_time();
            tt > lo && tt <= t
        })
        .count()
}

/// Per grid point of an Rt series: whether the estimate is unstable.
pub fn rt_unstable<T: Scalar>(infections: &[&Infection<T>], rt: &Series, window: T) -> Vec<bool> {
    rt.time
        .iter()
        .zip(&rt.total)
        .map(|(t, v)| v.is_nan() || window_events(infections.iter().copied(), T::lit(*t), window) < RT_MIN_EVENTS)
        .collect()
}

/// Rt on the grid `start + window, start + window + step, ... <= end`.
///
/// Windows start at or after `start` so seeded infections, whose
/// transmission predates the simulation, are not counted as new.
pub fn rt_series<T: Scalar>(infections: &[&Infection<T>], start: T, end: T, window: T, step: T) -> Series {
    let mut s = Series::new("rt", false);
    let mut t = start + window;
    while t <= end {
        let v = estimate_rt(infections.iter().copied(), t, window).map_or(f64::NAN, Scalar::as_f64);
        s.time.push(t.as_f64());
        s.total.push(v);
        t = t + step;
    }
    s
}

/// Scales the simulated critical count to what would have been reported as
/// critical; the rest counts as severe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalCorrection {
    pub reported_share: PerAge<f64>,
}

impl Default for CriticalCorrection {
    fn default() -> Self {
        CriticalCorrection {
            reported_share: [1.0; NUM_AGE_GROUPS],
        }
    }
}

impl CriticalCorrection {
    pub fn apply(&self, critical: &Series) -> Series {
        let mut out = Series::new(critical.name.clone(), critical.by_age.is_some());
        out.time = critical.time.clone();
        match &critical.by_age {
            Some(rows) => {
                let rows: Vec<PerAge<f64>> = rows
                    .iter()
                    .map(|r| {
                        let mut v = *r;
                        for (x, k) in v.iter_mut().zip(self.reported_share) {
                            *x *= k;
                        }
                        v
                    })
                    .collect();
                out.total = rows.iter().map(|r| r.iter().sum()).collect();
                out.by_age = Some(rows);
            }
            None => {
                let mean = self.reported_share.iter().sum::<f64>() / NUM_AGE_GROUPS as f64;
                out.total = critical.total.iter().map(|v| v * mean).collect();
            }
        }
        out
    }
}

/// Endpoints of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub cumulative_infections: f64,
    pub cumulative_deaths: f64,
    pub max_hospitalized: f64,
    pub max_hourly_infections: f64,
}

impl RunOutcome {
    pub const NAMES: [&'static str; 4] = [
        "cumulative_infections",
        "cumulative_deaths",
        "max_hospitalized",
        "max_hourly_infections",
    ];

    pub fn values(&self) -> [f64; 4] {
        [
            self.cumulative_infections,
            self.cumulative_deaths,
            self.max_hospitalized,
            self.max_hourly_infections,
        ]
    }

    /// Member-wise mean; the order of `runs` does not matter beyond
    /// floating-point rounding. NaN for an empty ensemble.
    pub fn mean(runs: &[RunOutcome]) -> RunOutcome {
        let n = runs.len() as f64;
        let mut acc = [0.0; 4];
        for r in runs {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v;
            }
        }
        let [a, b, c, d] = acc.map(|v| v / n);
        RunOutcome {
            cumulative_infections: a,
            cumulative_deaths: b,
            max_hospitalized: c,
            max_hourly_infections: d,
        }
    }

    /// Endpoints from plain series: the cumulative infections are the
    /// initial infected plus every new infection.
    pub fn from_series(initial_infected: f64, new_infections: &[f64], deaths: &[f64], hospitalized: &[f64]) -> Self {
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        RunOutcome {
            cumulative_infections: initial_infected + new_infections.iter().sum::<f64>(),
            cumulative_deaths: deaths.last().copied().unwrap_or(0.0),
            max_hospitalized: max(hospitalized),
            max_hourly_infections: max(new_infections),
        }
    }
}

fn series_total<'a, T: Scalar>(out: &'a RunOutput<T>, name: &str) -> Result<&'a [f64]> {
    out.series(name)
        .map(|s| s.total.as_slice())
        .ok_or_else(|| Error::param("series", format!("run has no `{name}` series")))
}

/// Endpoints of a run logged with the default loggers.
pub fn aggregate<T: Scalar>(out: &RunOutput<T>) -> Result<RunOutcome> {
    let new = series_total(out, "new_infections")?;
    let deaths = series_total(out, "cumulative_deaths")?;
    let hosp = series_total(out, "hospitalized")?;
    let ever = out.world.agents.iter().filter(|a| a.infection.is_some()).count() as f64;
    let transmitted: f64 = new.iter().sum();
    Ok(RunOutcome::from_series(ever - transmitted, new, deaths, hosp))
}

/// One swept parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Endpoint matrices of a two-parameter sweep; `cells[e][iy][ix]` is the
/// ensemble mean of endpoint `e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub x: Axis,
    pub y: Axis,
    pub cells: [Vec<Vec<f64>>; 4],
}

impl SweepResult {
    /// CSV of one endpoint: a header row of x values, then one row per y
    /// value led by that value.
    pub fn matrix_csv(&self, endpoint: usize) -> String {
        let mut s = format!("{}\\{}", self.y.name, self.x.name);
        for x in &self.x.values {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
        for (y, row) in self.y.values.iter().zip(&self.cells[endpoint]) {
            let _ = write!(s, "{y}");
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Runs every grid cell with the same seeds and reports mean endpoints.
pub fn sweep<T: Scalar>(
    scenario: &Scenario<T>,
    config: &StepConfig,
    x: Axis,
    y: Axis,
    ensemble: &EnsembleConfig,
) -> Result<SweepResult> {
    let mut cells: [Vec<Vec<f64>>; 4] = Default::default();
    for c in &mut cells {
        *c = vec![vec![f64::NAN; x.values.len()]; y.values.len()];
    }
    for (iy, &vy) in y.values.iter().enumerate() {
        for (ix, &vx) in x.values.iter().enumerate() {
            let mut s = scenario.clone();
            s.params.set(&x.name, T::lit(vx))?;
            s.params.set(&y.name, T::lit(vy))?;
            let results = run_jobs(ensemble, |seed| {
                let out = run(s.build_world(seed)?, config, default_loggers(false))?;
                aggregate(&out)
            })?;
            let outcomes: Vec<RunOutcome> = results.into_iter().collect::<Result<_>>()?;
            let mean = RunOutcome::mean(&outcomes).values();
            for (cell, v) in cells.iter_mut().zip(mean) {
                cell[iy][ix] = v;
            }
        }
    }
    Ok(SweepResult { x, y, cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn infection(tt: f64) -> Infection<f64> {
        Infection {
            variant: 0,
            curve: ViralCurve {
                transmission_time: tt,
                incline: 2.0,
                peak: 8.1,
                decline: -0.17,
                shed_factor: 0.1,
                alpha: -7.0,
                beta: 1.0,
            },
            course: InfectionCourse {
                entries: vec![
                    (InfectionState::Exposed, tt),
                    (InfectionState::NoSymptoms, tt + 4.0),
                    (InfectionState::Recovered, tt + 14.0),
                ],
            },
            detected: false,
        }
    }

    #[test]
    fn hourly_maximum_and_totals() {
        let o = RunOutcome::from_series(2.0, &[0.0, 3.0, 1.0, 5.0, 2.0], &[0.0, 1.0, 1.0], &[0.0, 4.0, 2.0]);
        assert_eq!(o.max_hourly_infections, 5.0);
        assert_eq!(o.cumulative_infections, 13.0);
        assert_eq!(o.cumulative_deaths, 1.0);
        assert_eq!(o.max_hospitalized, 4.0);
    }

    #[test]
    fn shedding_shares_partition_lifetime() {
        let inf = infection(0.0);
        let total: f64 = (0..40)
            .map(|k| inf.shed_integral(k as f64, k as f64 + 1.0) / inf.total_shed())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_shedding_gives_none() {
        let v: Vec<Infection<f64>> = vec![infection(100.0)];
        assert_eq!(estimate_rt(&v, 10.0, 1.0), None);
    }

    #[test]
    fn infections_round_trip() {
        let mut w = World::<f64>::new(Default::default(), crate::rng::RngKey(3));
        let h = w.add_location(crate::world::LocationType::Home, None);
        let a = w
            .add_agent(AgeGroup::new(4).unwrap(), crate::world::VenueAssignment::home(h))
            .unwrap();
        w.infect(a, -2.5).unwrap();
        let recs = read_infections(&infections_csv(&w)).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].age.index(), 4);
        let orig = w.agents[0].infection.as_ref().unwrap();
        assert_eq!(recs[0].infection.curve, orig.curve);
        assert_eq!(recs[0].infection.course, orig.course);
    }

    #[test]
    fn sweep_matrix_headers() {
        let r = SweepResult {
            x: Axis {
                name: "lambda".into(),
                values: vec![1.0, 2.0],
            },
            y: Axis {
                name: "d".into(),
                values: vec![3.0],
            },
            cells: [vec![vec![5.0, 6.0]], vec![vec![0.0, 0.0]], vec![vec![0.0, 0.0]], vec![vec![0.0, 0.0]]],
        };
        assert_eq!(r.matrix_csv(0), "d\\lambda,1,2\n3,5,6\n");
    }
}
