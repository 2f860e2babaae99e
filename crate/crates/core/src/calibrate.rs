//! Weighted-MSE objective and the two-stage exhaustive grid search.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run, Builtin, BuiltinKind, Logger, RunOutput, StepConfig};
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::rng::RngKey;
use crate::scenario::{ReportedData, Scenario};
use crate::time::TimeSpan;

/// One fitted parameter: a closed interval sampled at `points` evenly
/// spaced values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    6
}

impl Dimension {
    pub fn new(name: &str, lo: f64, hi: f64, points: usize) -> Self {
        Dimension {
            name: name.into(),
            lo,
            hi,
            points,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.points)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSpace {
    pub dims: Vec<Dimension>,
}

impl Default for FitSpace {
    /// The five fitted parameters with six points each.
    fn default() -> Self {
        FitSpace {
            dims: vec![
                Dimension::new("lambda", 1.0, 2.5, 6),
                Dimension::new("d", 2.0, 6.0, 6),
                Dimension::new("r_l", 0.1, 0.5, 6),
                Dimension::new("p_s", 0.01, 0.05, 6),
                Dimension::new("mu_ns", 2.0, 8.0, 6),
            ],
        }
    }
}

impl FitSpace {
    /// Same intervals with `points` values per dimension.
    pub fn with_points(mut self, points: usize) -> Self {
        for d in &mut self.dims {
            d.points = points;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::param("space", "needs at least one dimension"));
        }
        for d in &self.dims {
            if !(d.lo.is_finite() && d.hi.is_finite() && d.lo < d.hi) {
                return Err(Error::param(&d.name, "interval must satisfy lo < hi"));
            }
            if d.points < 2 {
                return Err(Error::param(&d.name, "needs at least two grid points"));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: FitSpace = toml::from_str(&text).map_err(|e| Error::Schema {
            file: path.display().to_string(),
            row: 0,
            detail: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn names(&self) -> Vec<String> {
        self.dims.iter().map(|d| d.name.clone()).collect()
    }

    /// Every grid point, last dimension varying fastest.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        product(&self.dims.iter().map(Dimension::values).collect::<Vec<_>>())
    }
}

fn product(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Relative weights of the three fitted series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub deaths: f64,
    pub icu: f64,
    pub cases: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            deaths: 10000.0,
            icu: 1000.0,
            cases: 3.0,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        if [self.deaths, self.icu, self.cases].iter().any(|w| !(*w > 0.0)) {
            return Err(Error::param("weights", "must be positive"));
        }
        Ok(())
    }
}

/// Daily cumulative deaths, ICU occupancy and cumulative positive tests.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub deaths: Vec<f64>,
    pub icu: Vec<f64>,
    pub cases: Vec<f64>,
}

impl Triple {
    pub fn from_reported(r: &ReportedData) -> Self {
        Triple {
            deaths: r.deaths.clone(),
            icu: r.icu.clone(),
            cases: r.total_cases(),
        }
    }

    pub fn truncate(&mut self, n: usize) {
        self.deaths.truncate(n);
        self.icu.truncate(n);
        self.cases.truncate(n);
    }
}

fn mse(name: &'static str, sim: &[f64], rep: &[f64]) -> Result<f64> {
    if sim.len() != rep.len() {
        return Err(Error::LengthMismatch {
            series: name,
            simulated: sim.len(),
            reported: rep.len(),
        });
    }
    if sim.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = sim.iter().zip(rep).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / sim.len() as f64)
}

/// `Σ w_k · mean((sim_k − rep_k)²)` over deaths, ICU and cases.
pub fn weighted_mse(sim: &Triple, rep: &Triple, w: &Weights) -> Result<f64> {
    Ok(w.deaths * mse("deaths", &sim.deaths, &rep.deaths)?
        + w.icu * mse("icu", &sim.icu, &rep.icu)?
        + w.cases * mse("cases", &sim.cases, &rep.cases)?)
}

/// Loggers needed by [`simulated_triple`].
pub fn fit_loggers<T: Scalar>() -> Vec<Box<dyn Logger<T>>> {
    [
        BuiltinKind::CumulativeDeaths,
        BuiltinKind::IcuOccupancy,
        BuiltinKind::CumulativeDetected,
    ]
    .into_iter()
    .map(|k| Box::new(Builtin::new(k, false)) as Box<dyn Logger<T>>)
    .collect()
}

/// Daily values of a run, with the cumulative series shifted to start at
/// the reported day-0 values.
pub fn simulated_triple<T: Scalar>(out: &RunOutput<T>, dt: TimeSpan, reported: &Triple) -> Result<Triple> {
    if dt.0 <= 0 || TimeSpan::DAY.0 % dt.0 != 0 {
        return Err(Error::param("dt", "must divide one day"));
    }
    let per_day = (TimeSpan::DAY.0 / dt.0) as usize;
    let daily = |name: &str| -> Result<Vec<f64>> {
        let s = out
            .series(name)
            .ok_or_else(|| Error::param("series", format!("run has no `{name}` series")))?;
        Ok(s.total.iter().step_by(per_day).copied().collect())
    };
    let shift = |mut v: Vec<f64>, base: Option<&f64>| {
        let off = base.copied().unwrap_or(0.0) - v.first().copied().unwrap_or(0.0);
        v.iter_mut().for_each(|x| *x += off);
        v
    };
    Ok(Triple {
        deaths: shift(daily("cumulative_deaths")?, reported.deaths.first()),
        icu: daily("icu_occupancy")?,
        cases: shift(daily("cumulative_detected")?, reported.cases.first()),
    })
}

/// Objective of one scenario run against its reported data.
pub struct ScenarioObjective<'a, T: Scalar> {
    pub scenario: &'a Scenario<T>,
    pub config: StepConfig,
    pub names: Vec<String>,
    pub weights: Weights,
    pub reported: Triple,
}

impl<'a, T: Scalar> ScenarioObjective<'a, T> {
    /// Compares against the scenario's reported data from its day 0, cut to
    /// the simulated days.
    pub fn new(scenario: &'a Scenario<T>, config: StepConfig, names: Vec<String>, weights: Weights) -> Result<Self> {
        let rep = scenario
            .reported_from_start()
            .ok_or_else(|| Error::param("reported", "calibration needs reported data"))?;
        let mut reported = Triple::from_reported(&rep);
        let days = ((config.t_max - config.t0).0 / TimeSpan::DAY.0) as usize + 1;
        if reported.cases.len() < days {
            return Err(Error::LengthMismatch {
                series: "cases",
                simulated: days,
                reported: reported.cases.len(),
            });
        }
        reported.truncate(days);
        weights.validate()?;
        Ok(ScenarioObjective {
            scenario,
            config,
            names,
            weights,
            reported,
        })
    }

    pub fn evaluate(&self, point: &[f64], seed: u64) -> Result<f64> {
        let mut s = self.scenario.clone();
        for (name, v) in self.names.iter().zip(point) {
            s.params.set(name, T::lit(*v))?;
        }
        let out = run(s.build_world(seed)?, &self.config, fit_loggers())?;
        let sim = simulated_triple(&out, self.config.dt, &self.reported)?;
        weighted_mse(&sim, &self.reported, &self.weights)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub runs_per_point: usize,
    pub master_seed: u64,
    pub workers: usize,
    /// Number of stage-1 points refined in stage 2; zero skips stage 2.
    pub refine_top: usize,
    pub refine_points: usize,
    /// Relative half-width of a stage-2 sub-grid.
    pub refine_span: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            runs_per_point: 11,
            master_seed: 0,
            workers: 1,
            refine_top: 3,
            refine_points: 6,
            refine_span: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub stage: u8,
    pub point: Vec<f64>,
    /// Mean objective over the runs; infinite if any run failed.
    pub score: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub names: Vec<String>,
    /// All evaluations, best first.
    pub ranked: Vec<Evaluation>,
}

impl SearchResult {
    pub fn best(&self) -> &Evaluation {
        &self.ranked[0]
    }

    pub fn total_runs(&self) -> usize {
        self.ranked.iter().map(|e| e.runs).sum()
    }

    /// `rank,<names...>,mean_mse,stage`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rank");
        for n in &self.names {
            let _ = write!(s, ",{n}");
        }
        s.push_str(",mean_mse,stage\n");
        for (i, e) in self.ranked.iter().enumerate() {
            let _ = write!(s, "{}", i + 1);
            for v in &e.point {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{},{}", e.score, e.stage);
        }
        s
    }
}

/// Seed of run `run` at grid point `index` of `stage`.
pub fn point_seed(master: u64, stage: u8, index: usize, run: usize) -> u64 {
    RngKey(master)
        .derive((u64::from(stage) << 40) | index as u64, run as u64)
        .0
}

fn rank(evals: &mut [Evaluation]) {
    evals.sort_by(|a, b| {
        a.score.total_cmp(&b.score).then_with(|| {
            a.point
                .iter()
                .zip(&b.point)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
}

fn evaluate_stage<F>(points: Vec<Vec<f64>>, stage: u8, config: &SearchConfig, objective: &F) -> Vec<Evaluation>
where
    F: Fn(&[f64], u64) -> Result<f64> + Sync,
{
    let runs = config.runs_per_point;
    let scores: Vec<f64> = (0..points.len() * runs)
        .into_par_iter()
        .map(|job| {
            let (i, r) = (job / runs, job % runs);
            let seed = point_seed(config.master_seed, stage, i, r);
            let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| objective(&points[i], seed)));
            match res {
                Ok(Ok(v)) if !v.is_nan() => v,
                _ => f64::INFINITY,
            }
        })
        .collect();
    points
        .into_iter()
        .enumerate()
        .map(|(i, point)| {
            let s = &scores[i * runs..(i + 1) * runs];
            Evaluation {
                stage,
                point,
                score: s.iter().sum::<f64>() / runs as f64,
                runs,
            }
        })
        .collect()
}

/// Stage 1 scores every grid point; stage 2 scores a sub-grid of ±span
/// around each of the best `refine_top` points. Sub-grids always contain
/// their center. Scores are averaged over `runs_per_point` seeded runs.
pub fn grid_search<F>(space: &FitSpace, config: &SearchConfig, objective: F) -> Result<SearchResult>
where
    F: Fn(&[f64], u64) -> Result<f64> + Sync,
{
    space.validate()?;
    if config.runs_per_point == 0 {
        return Err(Error::param("runs_per_point", "must be positive"));
    }
    if config.refine_top > 0 && config.refine_points < 2 {
        return Err(Error::param("refine_points", "needs at least two points"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::param("workers", e.to_string()))?;
    pool.install(|| {
        let mut evals = evaluate_stage(space.grid(), 1, config, &objective);
        rank(&mut evals);

        let mut refined: Vec<Vec<f64>> = Vec::new();
        for center in evals.iter().take(config.refine_top).filter(|e| e.score.is_finite()) {
            let axes: Vec<Vec<f64>> = center
                .point
                .iter()
                .map(|&c| {
                    let h = (c * config.refine_span).abs();
                    let mut v = linspace(c - h, c + h, config.refine_points);
                    if h > 0.0 && !v.contains(&c) {
                        v.push(c);
                        v.sort_by(f64::total_cmp);
                    }
                    v.dedup();
                    v
                })
                .collect();
            refined.extend(product(&axes));
        }
        refined.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        refined.dedup();
        if !refined.is_empty() {
            evals.extend(evaluate_stage(refined, 2, config, &objective));
            rank(&mut evals);
        }
        Ok(SearchResult {
            names: space.names(),
            ranked: evals,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_death_offset() {
        let rep = Triple {
            deaths: vec![0.0; 90],
            icu: vec![5.0; 90],
            cases: vec![7.0; 90],
        };
        let mut sim = rep.clone();
        sim.deaths.iter_mut().for_each(|d| *d += 1.0);
        assert_eq!(weighted_mse(&sim, &rep, &Weights::default()).unwrap(), 10000.0);
        assert_eq!(weighted_mse(&rep, &rep, &Weights::default()).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        let rep = Triple {
            deaths: vec![0.0; 3],
            icu: vec![0.0; 3],
            cases: vec![0.0; 3],
        };
        let mut sim = rep.clone();
        sim.icu.pop();
        assert!(matches!(
            weighted_mse(&sim, &rep, &Weights::default()),
            Err(Error::LengthMismatch { series: "icu", .. })
        ));
    }

    #[test]
    fn exhaustive_one_dimension() {
        let space = FitSpace {
            dims: vec![Dimension::new("lambda", 0.0, 1.0, 6)],
        };
        let cfg = SearchConfig {
            runs_per_point: 1,
            refine_top: 0,
            ..Default::default()
        };
        let r = grid_search(&space, &cfg, |p, _| Ok((p[0] - 0.33).powi(2))).unwrap();
        assert_eq!(r.best().point, vec![0.4]);
        assert_eq!(r.best().score, (0.4f64 - 0.33).powi(2));
        assert_eq!(r.total_runs(), 6);
    }

    #[test]
    fn failures_score_infinite_and_rank_last() {
        let space = FitSpace {
            dims: vec![Dimension::new("x", 0.0, 1.0, 3)],
        };
        let cfg = SearchConfig {
            runs_per_point: 2,
            refine_top: 0,
            ..Default::default()
        };
        let r = grid_search(&space, &cfg, |p, _| {
            if p[0] == 0.0 {
                Err(Error::Infeasible("boom".into()))
            } else {
                Ok(p[0])
            }
        })
        .unwrap();
        assert_eq!(r.ranked.last().unwrap().score, f64::INFINITY);
        assert_eq!(r.best().point, vec![0.5]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let space = FitSpace {
            dims: vec![Dimension::new("a", 0.0, 1.0, 2), Dimension::new("b", 0.0, 1.0, 2)],
        };
        let cfg = SearchConfig {
            runs_per_point: 1,
            refine_top: 0,
            ..Default::default()
        };
        let r = grid_search(&space, &cfg, |_, _| Ok(1.0)).unwrap();
        assert_eq!(r.best().point, vec![0.0, 0.0]);
        assert_eq!(r.ranked[1].point, vec![0.0, 1.0]);
    }

    #[test]
    fn refinement_includes_center() {
        let space = FitSpace {
            dims: vec![Dimension::new("x", 1.0, 2.0, 2)],
        };
        let cfg = SearchConfig {
            runs_per_point: 1,
            refine_top: 1,
            ..Default::default()
        };
        let r = grid_search(&space, &cfg, |p, _| Ok((p[0] - 0.97).abs())).unwrap();
        let stage2: Vec<f64> = r.ranked.iter().filter(|e| e.stage == 2).map(|e| e.point[0]).collect();
        assert_eq!(stage2.len(), 7);
        assert!(stage2.contains(&1.0));
        assert!((r.best().point[0] - 0.97).abs() < 0.011);
    }
}
