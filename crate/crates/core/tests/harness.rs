use flownav::harness::{
    compute_udt, monte_carlo, read_aggregate_csv, render_svg, run_scenario, write_aggregate_csv, Aggregate, Scenario,
    ScenarioConfig, Series, AGGREGATE_HEADER,
};
use flownav::vehicle_sim::{cumulative_distance, lawnmower_trajectory, LawnmowerSpec};
use flownav::Vec2;
use std::process::Command;

fn short(duration: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::double_gyre();
    cfg.trajectory.duration = duration;
    cfg.estimator.n_particles = 20;
    cfg
}

fn noiseless() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::double_gyre();
    cfg.imu = cfg.imu.noiseless();
    cfg.adcp = cfg.adcp.noiseless();
    cfg.turbulence.large_scale_variance = 0.0;
    cfg.estimator.n_particles = 5;
    cfg.estimator.sample_positions = false;
    cfg.estimator.r_var = Some(1e-4);
    cfg.crlb.r_var = Some(1e-4);
    cfg.init.position_var = 0.0;
    cfg.init.velocity_var = 0.0;
    cfg.init.heading_var = 0.0;
    cfg
}

#[test]
fn noiseless_six_hours_stays_within_a_metre() {
    let r = run_scenario(&noiseless(), 0).unwrap();
    assert!(r.distance > 30_000.0);
    assert!(r.terminal_mpf < 1.0, "mpf {}", r.terminal_mpf);
    assert!(r.terminal_dr < 1.0, "dr {}", r.terminal_dr);
    assert!(r.terminal_ekf < 1.0, "ekf {}", r.terminal_ekf);
    assert!(!r.diverged);
}

#[test]
fn noiseless_rmse_is_negligible() {
    let mut cfg = noiseless();
    cfg.trajectory.duration = 1800.0;
    let (agg, _) = monte_carlo(&cfg, 2, 1).unwrap();
    let worst = agg.rmse_pos.iter().cloned().fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst} {:?}", &agg.rmse_pos[..5]);
}

#[test]
fn same_seed_same_run() {
    let cfg = short(600.0);
    assert_eq!(run_scenario(&cfg, 3).unwrap(), run_scenario(&cfg, 3).unwrap());
    assert_ne!(run_scenario(&cfg, 3).unwrap().ticks, run_scenario(&cfg, 4).unwrap().ticks);
}

#[test]
fn single_run_rmse_is_absolute_error() {
    let (agg, runs) = monte_carlo(&short(600.0), 1, 1).unwrap();
    assert_eq!(agg.len(), runs[0].ticks.len());
    for (j, tick) in runs[0].ticks.iter().enumerate() {
        let e = tick.mpf.p - tick.truth_p;
        assert!((agg.rmse_pos[j] - e.norm()).abs() <= 1e-12 * e.norm().max(1.0));
        assert_eq!(agg.rmse_px[j], e.x.abs());
        assert_eq!(agg.rmse_py[j], e.y.abs());
    }
}

#[test]
fn rmse_bounds_the_mean_error() {
    let (agg, runs) = monte_carlo(&short(600.0), 4, 1).unwrap();
    for j in 0..agg.len() {
        let mean = runs.iter().fold(Vec2::zeros(), |acc, r| acc + (r.ticks[j].mpf.p - r.ticks[j].truth_p)) / runs.len() as f64;
        assert!(agg.rmse_pos[j] >= 0.0);
        assert!(agg.rmse_pos[j] >= mean.norm() * (1.0 - 1e-12));
    }
}

#[test]
fn runs_do_not_depend_on_earlier_runs() {
    let cfg = short(300.0);
    let (_, runs) = monte_carlo(&cfg, 3, 2).unwrap();
    let alone = Scenario::prepare(&cfg).unwrap().run(2).unwrap();
    assert_eq!(runs[2], alone);
}

#[test]
fn bound_curve_is_independent_of_the_runs() {
    let cfg = short(600.0);
    let scenario = Scenario::prepare(&cfg).unwrap();
    let before = scenario.crlb().unwrap();
    let (agg, _) = monte_carlo(&cfg, 2, 1).unwrap();
    let after = scenario.crlb().unwrap();
    assert_eq!(before, after);
    for j in 0..agg.len() {
        assert_eq!(agg.crlb_pos[j], before.position_sd(j * cfg.adcp_stride()));
    }
}

#[test]
fn doubling_runs_is_stable() {
    let cfg = short(600.0);
    let (a8, runs) = monte_carlo(&cfg, 16, 1).unwrap();
    let (a4, _) = monte_carlo(&cfg, 8, 1).unwrap();
    for j in 0..a8.len() {
        let errs: Vec<f64> = runs.iter().map(|r| r.ticks[j].mpf_error()).collect();
        let m = errs.iter().sum::<f64>() / errs.len() as f64;
        let sd = (errs.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (errs.len() - 1) as f64).sqrt();
        assert!((a8.rmse_pos[j] - a4.rmse_pos[j]).abs() < 3.0 * sd / 8f64.sqrt() + 1e-9, "tick {j}");
    }
}

#[test]
fn udt_examples() {
    assert!((compute_udt(300.0, 10_000.0) - 0.03).abs() < 1e-15);
    assert_eq!(compute_udt(0.0, 10_000.0), 0.0);
    assert_eq!(compute_udt(0.0, 0.0), 0.0);
}

#[test]
fn running_udt_on_a_straight_leg() {
    let spec = LawnmowerSpec { perturb_amp: 0.0, duration: 3600.0, ..LawnmowerSpec::default() };
    let truth = lawnmower_trajectory(&spec).unwrap();
    let dist = cumulative_distance(&truth);
    for k in [10, 1000, 20_000, 36_000] {
        let hand = spec.speed * truth[k].t;
        assert!((dist[k] - hand).abs() < 1e-6 * hand);
        assert!((compute_udt(50.0, dist[k]) - 50.0 / hand).abs() < 1e-6 * 50.0 / hand);
    }
}

#[test]
fn aggregate_csv_round_trip() {
    let (agg, _) = monte_carlo(&short(300.0), 2, 1).unwrap();
    let mut buf = Vec::new();
    write_aggregate_csv(&agg, &mut buf).unwrap();
    let cols = read_aggregate_csv(buf.as_slice()).unwrap();
    let names: Vec<&str> = cols.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, AGGREGATE_HEADER);
    let expected = [&agg.t, &agg.rmse_px, &agg.rmse_py, &agg.rmse_pos, &agg.rmse_vel, &agg.two_sigma_pos, &agg.crlb_pos, &agg.crlb_vel];
    for ((_, got), want) in cols.iter().zip(expected) {
        assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(want.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn empty_aggregate_writes_only_the_header() {
    let agg = Aggregate::from_runs("empty", &[], None, 10);
    assert!(agg.is_empty());
    let mut buf = Vec::new();
    write_aggregate_csv(&agg, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", AGGREGATE_HEADER.join(",")));
}

#[test]
fn one_polyline_per_channel() {
    let x = [0.0, 1.0, 2.0];
    let ys = [[1.0, 2.0, 3.0], [3.0, 2.0, 1.0], [0.5, f64::NAN, 0.7]];
    for n in 1..=3 {
        let series: Vec<Series> = ys[..n].iter().enumerate().map(|(i, y)| Series { name: ["a", "b", "c"][i], x: &x, y }).collect();
        let svg = render_svg(&series, "t", "x", "y", false);
        assert_eq!(svg.matches("<polyline").count(), n);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}

#[test]
fn preset_json_round_trip() {
    for name in ["double_gyre", "meander_jet", "grid_surrogate"] {
        let cfg = ScenarioConfig::preset(name).unwrap();
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json(), "").unwrap(), cfg);
    }
    assert!(ScenarioConfig::preset("nope").is_none());
}

#[test]
fn inconsistent_configs_are_rejected() {
    let mut cfg = ScenarioConfig::double_gyre();
    cfg.trajectory.dt = 0.05;
    assert!(cfg.validate().unwrap_err().is_config());
    let mut cfg = ScenarioConfig::double_gyre();
    cfg.estimator.n_particles = 0;
    assert!(cfg.validate().unwrap_err().is_config());
    let mut cfg = noiseless();
    cfg.crlb.r_var = None;
    assert!(cfg.validate().unwrap_err().is_config());
    let mut cfg = ScenarioConfig::double_gyre();
    cfg.nav_map = Some(flownav::harness::FlowSpec::Fgm { path: "missing.fgm".into() });
    assert!(cfg.validate().unwrap_err().is_config());
}

fn flownav() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_flownav"));
    c.env_remove("FLOWNAV_SEED");
    c
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": 1}").unwrap();
    let status = flownav().args(["montecarlo", bad.to_str().unwrap()]).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let status = flownav().args(["preset", "nope"]).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let good = dir.path().join("short.json");
    std::fs::write(&good, short(60.0).to_json()).unwrap();
    let status = flownav().args(["montecarlo", good.to_str().unwrap()]).env("FLOWNAV_SEED", "x").status().unwrap();
    assert_eq!(status.code(), Some(2));

    let out = dir.path().join("out");
    let status = flownav()
        .args(["montecarlo", good.to_str().unwrap(), "--runs", "2", "--strict", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("aggregate.csv").exists() && out.join("summary.json").exists());
}

#[test]
fn seed_override_changes_the_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.json");
    std::fs::write(&cfg, short(120.0).to_json()).unwrap();
    let run = |seed: Option<&str>, tag: &str| {
        let out = dir.path().join(tag);
        let mut c = flownav();
        c.args(["simulate", cfg.to_str().unwrap(), "-o"]).arg(&out);
        if let Some(s) = seed {
            c.env("FLOWNAV_SEED", s);
        }
        assert!(c.status().unwrap().success());
        std::fs::read(out.join("estimate.csv")).unwrap()
    };
    let base = run(None, "a");
    assert_eq!(base, run(Some("1"), "b"));
    assert_ne!(base, run(Some("2"), "c"));
}
