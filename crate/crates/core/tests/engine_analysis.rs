use tripsim::analysis::{aggregate, infections_csv, read_infections, sweep, Axis, RunOutcome};
use tripsim::calibrate::{grid_search, weighted_mse, Dimension, FitSpace, SearchConfig, Triple, Weights};
use tripsim::engine::{default_loggers, percentile, run_ensemble, simulate, summarize, EnsembleConfig, Series, StepConfig, Summary};
use tripsim::scenario::{synth_population, SynthSpec};
use tripsim::{Scenario, SimTime};

fn town(n: usize) -> Scenario {
    let mut spec = SynthSpec::with_agents(n);
    spec.initial_prevalence = 0.02;
    synth_population(&spec, 1).unwrap()
}

#[test]
fn ninety_days_is_2160_steps() {
    assert_eq!(StepConfig::days(90).steps(), 2160);
}

#[test]
fn eleven_runs_median_is_sixth_ranked() {
    let mut v: Vec<f64> = vec![9.0, 3.0, 7.0, 1.0, 11.0, 5.0, 2.0, 10.0, 4.0, 8.0, 6.0];
    assert_eq!(percentile(&mut v, 0.5), 6.0);
}

#[test]
fn single_run_bands_collapse() {
    let mut s = Series::new("x", false);
    for k in 0..4 {
        s.push_total(SimTime(k), k as f64 * 1.5);
    }
    let sum = Summary::of("x", &[&s]).unwrap();
    for b in &sum.bands {
        assert_eq!(b, &s.total);
    }
}

#[test]
fn ensemble_is_seed_ordered_and_repeatable() {
    let s = town(600);
    let cfg = StepConfig::days(6);
    let a = run_ensemble(&s, &cfg, &EnsembleConfig::consecutive(10, 4, 2), || default_loggers(false)).unwrap();
    let b = run_ensemble(&s, &cfg, &EnsembleConfig::consecutive(10, 4, 1), || default_loggers(false)).unwrap();
    for (i, (x, y)) in a.iter().zip(&b).enumerate() {
        let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
        assert_eq!(x.series, y.series);
        let single = simulate(s.build_world(10 + i as u64).unwrap(), &cfg, default_loggers(false), 1).unwrap();
        assert_eq!(single.series, x.series);
    }
    let runs: Vec<Vec<Series>> = a.into_iter().map(|r| r.unwrap().series).collect();
    let sums = summarize(&runs);
    assert!(!sums.is_empty());
    assert!(sums.iter().all(|s| s.bands.iter().all(|b| b.len() == s.time.len())));
}

#[test]
fn infection_table_round_trips() {
    let s = town(500);
    let out = simulate(s.build_world(3).unwrap(), &StepConfig::days(8), default_loggers(false), 1).unwrap();
    let text = infections_csv(&out.world);
    let back = read_infections(&text).unwrap();
    let ours = out.infections();
    assert_eq!(back.len(), ours.len());
    for (r, (id, inf)) in back.iter().zip(ours) {
        assert_eq!(r.agent, id);
        assert_eq!(&r.infection, inf);
    }
    let o = aggregate(&out).unwrap();
    assert_eq!(o.cumulative_infections, ours_len(&out) as f64);
}

fn ours_len(out: &tripsim::RunOutput) -> usize {
    out.world.agents.iter().filter(|a| a.infection.is_some()).count()
}

#[test]
fn endpoints_from_plain_series() {
    let o = RunOutcome::from_series(5.0, &[0.0, 2.0, 3.0, 1.0], &[0.0, 0.0, 1.0, 1.0], &[0.0, 4.0, 2.0, 0.0]);
    assert_eq!(o.values(), [11.0, 1.0, 4.0, 3.0]);
    let m = RunOutcome::mean(&[o, RunOutcome::default()]);
    assert_eq!(m.values(), [5.5, 0.5, 2.0, 1.5]);
}

#[test]
fn sweep_grid_shape() {
    let s = town(300);
    let r = sweep(
        &s,
        &StepConfig::days(2),
        Axis { name: "q_d".into(), values: vec![2.0, 10.0] },
        Axis { name: "q_e".into(), values: vec![0.1, 0.5, 0.9] },
        &EnsembleConfig::consecutive(0, 2, 1),
    )
    .unwrap();
    let csv = r.matrix_csv(0);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0].split(',').count(), 3);
    assert!(lines[1].starts_with("0.1,"));
}

#[test]
fn weighted_error_example() {
    let rep = Triple { deaths: vec![0.0, 1.0], icu: vec![2.0, 2.0], cases: vec![10.0, 20.0] };
    let sim = Triple { deaths: vec![1.0, 1.0], icu: vec![2.0, 4.0], cases: vec![10.0, 10.0] };
    // deaths mse 0.5, icu mse 2, cases mse 50
    let got = weighted_mse(&sim, &rep, &Weights::default()).unwrap();
    assert!((got - (10_000.0 * 0.5 + 1_000.0 * 2.0 + 3.0 * 50.0)).abs() < 1e-9);
}

#[test]
fn grid_search_finds_quadratic_minimum() {
    let space = FitSpace { dims: vec![Dimension::new("a", 0.0, 2.0, 5), Dimension::new("b", -1.0, 1.0, 5)] };
    let config = SearchConfig { runs_per_point: 2, ..Default::default() };
    let r = grid_search(&space, &config, |p, _| Ok((p[0] - 1.02).powi(2) + (p[1] - 0.01).powi(2))).unwrap();
    let best = r.best();
    assert!((best.point[0] - 1.02).abs() <= 0.05 + 1e-9, "{:?}", best.point);
    assert!((best.point[1] - 0.01).abs() <= 0.05 + 1e-9, "{:?}", best.point);
    let scores: Vec<f64> = r.ranked.iter().map(|e| e.score).collect();
    assert!(scores.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn sparse_rt_windows_are_flagged() {
    let s = town(400);
    let out = simulate(s.build_world(2).unwrap(), &StepConfig::days(10), default_loggers(false), 1).unwrap();
    let infs: Vec<_> = out.infections().into_iter().map(|(_, i)| i).collect();
    let rt = tripsim::analysis::rt_series(&infs, 0.0, 10.0, 1.0, 1.0);
    let flags = tripsim::analysis::rt_unstable(&infs, &rt, 1.0);
    assert_eq!(flags.len(), rt.time.len());
    for (k, f) in flags.iter().enumerate() {
        let n = tripsim::analysis::window_events(infs.iter().copied(), rt.time[k], 1.0);
        assert_eq!(*f, rt.total[k].is_nan() || n < tripsim::analysis::RT_MIN_EVENTS);
    }
}
