use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tripsim::analysis::{aggregate, read_infections, rt_series, rt_unstable, sweep, Axis, RunOutcome};
use tripsim::calibrate::{grid_search, FitSpace, ScenarioObjective, SearchConfig, Weights};
use tripsim::engine::{default_loggers, run_ensemble, simulate, summarize, EnsembleConfig, Series, StepConfig};
use tripsim::scenario::{synth_population, SynthSpec, TimelineSpec};
use tripsim::{Error, Result, Scenario};

#[derive(Parser)]
#[command(name = "tripsim", version, about = "Trip-based agent epidemic simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its series.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides the scenario's day count.
        #[arg(long)]
        days: Option<i64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Split series by age group.
        #[arg(long)]
        by_age: bool,
    },
    /// Run many seeds and write each run plus percentile summaries.
    Ensemble {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// First seed; runs use consecutive seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        days: Option<i64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid search against the scenario's reported data.
    Calibrate {
        #[arg(long)]
        scenario: PathBuf,
        /// TOML file with `[[dims]]` entries (name, lo, hi, points).
        #[arg(long)]
        space: Option<PathBuf>,
        /// Points per dimension when no space file is given.
        #[arg(long, default_value_t = 3)]
        points: usize,
        #[arg(long, default_value_t = 11)]
        runs_per_point: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 3)]
        refine_top: usize,
        #[arg(long, default_value_t = 6)]
        refine_points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rt and endpoints from written runs.
    Analyze {
        /// A run directory or a directory of run directories.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        rt: bool,
        #[arg(long)]
        endpoints: bool,
        /// Rt window in days.
        #[arg(long, default_value_t = 1.0)]
        window: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-parameter sweep writing one matrix per endpoint.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        param_x: String,
        #[arg(long)]
        param_y: String,
        /// `x1,x2,...:y1,y2,...`
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 8)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        days: Option<i64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic town as a scenario directory.
    Synth {
        #[arg(long, default_value_t = 10_000)]
        agents: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 90)]
        days: i64,
        /// Attach the spring lockdown and Easter timeline.
        #[arg(long)]
        lockdown: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn step_config(scenario: &Scenario, days: Option<i64>) -> StepConfig {
    StepConfig::days(days.unwrap_or(scenario.days))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidParameter {
                    name: "grid".into(),
                    detail: format!("`{v}` is not a number"),
                })
        })
        .collect()
}

fn parse_grid(s: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, y) = s.split_once(':').ok_or_else(|| Error::InvalidParameter {
        name: "grid".into(),
        detail: "expected `x1,x2,...:y1,y2,...`".into(),
    })?;
    Ok((parse_list(x)?, parse_list(y)?))
}

fn endpoints_csv(rows: &[(String, RunOutcome)]) -> String {
    let mut s = format!("run,{}\n", RunOutcome::NAMES.join(","));
    for (name, o) in rows {
        let v: Vec<String> = o.values().iter().map(f64::to_string).collect();
        s.push_str(&format!("{name},{}\n", v.join(",")));
    }
    s
}

fn run_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join("infections.csv").exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let entries = fs::read_dir(root).map_err(|e| Error::Io {
        path: root.to_path_buf(),
        source: e,
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("infections.csv").exists())
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn read_series(dir: &Path, name: &str) -> Result<Series> {
    let p = dir.join(format!("{name}.csv"));
    let text = fs::read_to_string(&p).map_err(|e| Error::Io { path: p, source: e })?;
    Series::from_csv(name, &text)
}

fn analyze(runs: &Path, rt: bool, endpoints: bool, window: f64, out: &Path) -> Result<()> {
    let dirs = run_dirs(runs)?;
    if dirs.is_empty() {
        return Err(Error::InvalidParameter {
            name: "runs".into(),
            detail: format!("no run directories under {}", runs.display()),
        });
    }
    let mut rt_runs = Vec::new();
    let mut rows = Vec::new();
    for dir in &dirs {
        let name = dir.file_name().map_or("run".into(), |n| n.to_string_lossy().into_owned());
        let p = dir.join("infections.csv");
        let text = fs::read_to_string(&p).map_err(|e| Error::Io { path: p, source: e })?;
        let records = read_infections(&text)?;
        let new = read_series(dir, "new_infections")?;
        if rt {
            let infections: Vec<_> = records.iter().map(|r| &r.infection).collect();
            let start = new.time.first().copied().unwrap_or(0.0);
            let end = new.time.last().copied().unwrap_or(0.0);
            let s = rt_series(&infections, start, end, window, 1.0);
            let flags = rt_unstable(&infections, &s, window);
            let mut csv = String::from("time,value,unstable\n");
            for ((t, v), f) in s.time.iter().zip(&s.total).zip(flags) {
                csv.push_str(&format!("{t},{v},{}\n", u8::from(f)));
            }
            write(&out.join(format!("rt/{name}.csv")), &csv)?;
            rt_runs.push(vec![s]);
        }
        if endpoints {
            let deaths = read_series(dir, "cumulative_deaths")?;
            let hosp = read_series(dir, "hospitalized")?;
            let transmitted: f64 = new.total.iter().sum();
            let initial = records.len() as f64 - transmitted;
            rows.push((name, RunOutcome::from_series(initial, &new.total, &deaths.total, &hosp.total)));
        }
    }
    if rt {
        for s in summarize(&rt_runs) {
            write(&out.join("rt_summary.csv"), &s.to_csv())?;
        }
    }
    if endpoints {
        let outcomes: Vec<RunOutcome> = rows.iter().map(|r| r.1).collect();
        rows.push(("mean".into(), RunOutcome::mean(&outcomes)));
        write(&out.join("endpoints.csv"), &endpoints_csv(&rows))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            seed,
            days,
            out,
            workers,
            by_age,
        } => {
            let s = Scenario::load(&scenario)?;
            let config = step_config(&s, days);
            let result = simulate(s.build_world(seed)?, &config, default_loggers(by_age), workers)?;
            result.write(&out)?;
            let o = aggregate(&result)?;
            write(&out.join("endpoints.csv"), &endpoints_csv(&[(format!("seed_{seed}"), o)]))?;
            eprintln!("{} steps, {} transmissions", result.steps, result.world.stats.transmissions);
        }
        Command::Ensemble {
            scenario,
            runs,
            workers,
            seed,
            days,
            out,
        } => {
            let s = Scenario::load(&scenario)?;
            let config = step_config(&s, days);
            let ensemble = EnsembleConfig::consecutive(seed, runs, workers);
            let results = run_ensemble(&s, &config, &ensemble, || default_loggers(false))?;
            let mut series = Vec::new();
            let mut rows = Vec::new();
            for (i, r) in results.into_iter().enumerate() {
                match r {
                    Ok(r) => {
                        r.write(&out.join(format!("run_{i:04}")))?;
                        rows.push((format!("run_{i:04}"), aggregate(&r)?));
                        series.push(r.series);
                    }
                    Err(e) => eprintln!("run {i} failed: {e}"),
                }
            }
            for sum in summarize(&series) {
                write(&out.join(format!("summary/{}.csv", sum.name)), &sum.to_csv())?;
            }
            write(&out.join("endpoints.csv"), &endpoints_csv(&rows))?;
        }
        Command::Calibrate {
            scenario,
            space,
            points,
            runs_per_point,
            seed,
            workers,
            refine_top,
            refine_points,
            out,
        } => {
            let s = Scenario::load(&scenario)?;
            let space = match space {
                Some(p) => FitSpace::load(&p)?,
                None => FitSpace::default().with_points(points),
            };
            let objective = ScenarioObjective::new(&s, step_config(&s, None), space.names(), Weights::default())?;
            let config = SearchConfig {
                runs_per_point,
                master_seed: seed,
                workers,
                refine_top,
                refine_points,
                ..Default::default()
            };
            let result = grid_search(&space, &config, |p, seed| objective.evaluate(p, seed))?;
            write(&out.join("ranked.csv"), &result.to_csv())?;
            let best = result.best();
            eprintln!("best {:?} = {:?} (mean mse {})", result.names, best.point, best.score);
        }
        Command::Analyze {
            runs,
            rt,
            endpoints,
            window,
            out,
        } => analyze(&runs, rt, endpoints, window, &out)?,
        Command::Sweep {
            scenario,
            param_x,
            param_y,
            grid,
            runs,
            workers,
            seed,
            days,
            out,
        } => {
            let s = Scenario::load(&scenario)?;
            let (xs, ys) = parse_grid(&grid)?;
            let result = sweep(
                &s,
                &step_config(&s, days),
                Axis {
                    name: param_x,
                    values: xs,
                },
                Axis {
                    name: param_y,
                    values: ys,
                },
                &EnsembleConfig::consecutive(seed, runs, workers),
            )?;
            for (k, name) in RunOutcome::NAMES.iter().enumerate() {
                write(&out.join(format!("{name}.csv")), &result.matrix_csv(k))?;
            }
        }
        Command::Synth {
            agents,
            seed,
            days,
            lockdown,
            out,
        } => {
            let mut s: Scenario = synth_population(&SynthSpec::with_agents(agents), seed)?;
            s.days = days;
            if lockdown {
                s.timeline = Some(TimelineSpec::spring_2021(days));
            }
            let path = s.save(&out)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
