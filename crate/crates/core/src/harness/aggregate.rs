use super::run::{RunResult, Scenario};
use super::{HarnessError, ScenarioConfig};
use crate::crlb::CrlbSequence;
use rayon::prelude::*;
use serde::Serialize;

/// Position error as a fraction of the distance travelled.
pub fn compute_udt(error: f64, distance: f64) -> f64 {
    if error == 0.0 {
        return 0.0;
    }
    error / distance
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_index: usize,
    pub distance_m: f64,
    pub terminal_mpf_m: f64,
    pub terminal_dr_m: f64,
    pub terminal_dr_aided_m: Option<f64>,
    pub terminal_ekf_m: f64,
    pub udt_mpf: f64,
    pub udt_dr: f64,
    pub udt_dr_aided: Option<f64>,
    pub udt_ekf: f64,
    pub diverged: bool,
    pub all_weights_zero: usize,
    pub resamples: usize,
    pub mutations: usize,
    pub mean_nees: f64,
}

impl From<&RunResult> for RunSummary {
    fn from(r: &RunResult) -> Self {
        Self {
            run_index: r.run_index,
            distance_m: r.distance,
            terminal_mpf_m: r.terminal_mpf,
            terminal_dr_m: r.terminal_dr,
            terminal_dr_aided_m: r.terminal_dr_aided,
            terminal_ekf_m: r.terminal_ekf,
            udt_mpf: r.udt_mpf(),
            udt_dr: r.udt_dr(),
            udt_dr_aided: r.udt_dr_aided(),
            udt_ekf: r.udt_ekf(),
            diverged: r.diverged,
            all_weights_zero: r.all_weights_zero,
            resamples: r.resamples,
            mutations: r.mutations,
            mean_nees: r.mean_nees,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub runs: usize,
    pub mean_udt_mpf: f64,
    pub sd_udt_mpf: f64,
    pub mean_udt_dr: f64,
    pub mean_udt_dr_aided: Option<f64>,
    pub mean_udt_ekf: f64,
    pub mean_terminal_mpf_m: f64,
    pub mean_terminal_dr_m: f64,
    pub mean_terminal_ekf_m: f64,
    pub divergence_rate: f64,
    pub per_run: Vec<RunSummary>,
}

/// Time series and scalars over all runs. Series are indexed by ADCP tick.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub t: Vec<f64>,
    pub rmse_px: Vec<f64>,
    pub rmse_py: Vec<f64>,
    pub rmse_pos: Vec<f64>,
    pub rmse_vel: Vec<f64>,
    pub two_sigma_pos: Vec<f64>,
    pub crlb_pos: Vec<f64>,
    pub crlb_vel: Vec<f64>,
    pub summary: Summary,
}

impl Aggregate {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Reduces runs in the order given; the result depends only on the runs.
    pub fn from_runs(name: &str, runs: &[RunResult], crlb: Option<&CrlbSequence>, stride: usize) -> Self {
        let n_runs = runs.len() as f64;
        let n_ticks = runs.iter().map(|r| r.ticks.len()).min().unwrap_or(0);
        let mut agg = Aggregate {
            t: Vec::with_capacity(n_ticks),
            rmse_px: Vec::with_capacity(n_ticks),
            rmse_py: Vec::with_capacity(n_ticks),
            rmse_pos: Vec::with_capacity(n_ticks),
            rmse_vel: Vec::with_capacity(n_ticks),
            two_sigma_pos: Vec::with_capacity(n_ticks),
            crlb_pos: Vec::with_capacity(n_ticks),
            crlb_vel: Vec::with_capacity(n_ticks),
            summary: summarize(name, runs),
        };
        for j in 0..n_ticks {
            let (mut sx, mut sy, mut sv, mut var) = (0.0, 0.0, 0.0, 0.0);
            for run in runs {
                let tick = &run.ticks[j];
                let e = tick.mpf.p - tick.truth_p;
                sx += e.x * e.x;
                sy += e.y * e.y;
                sv += (tick.mpf_velocity() - tick.truth_v).norm_squared();
                var += tick.mpf_pos_cov.trace();
            }
            agg.t.push(runs[0].ticks[j].t);
            agg.rmse_px.push((sx / n_runs).sqrt());
            agg.rmse_py.push((sy / n_runs).sqrt());
            agg.rmse_pos.push(((sx + sy) / n_runs).sqrt());
            agg.rmse_vel.push((sv / n_runs).sqrt());
            agg.two_sigma_pos.push(2.0 * (var / n_runs).max(0.0).sqrt());
            let (cp, cv) = match crlb {
                Some(c) if j * stride < c.times.len() => (c.position_sd(j * stride), c.velocity_sd(j * stride)),
                _ => (f64::NAN, f64::NAN),
            };
            agg.crlb_pos.push(cp);
            agg.crlb_vel.push(cv);
        }
        agg
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn summarize(name: &str, runs: &[RunResult]) -> Summary {
    let per_run: Vec<RunSummary> = runs.iter().map(RunSummary::from).collect();
    let m = mean(per_run.iter().map(|r| r.udt_mpf));
    let sd = if per_run.len() > 1 {
        (per_run.iter().map(|r| (r.udt_mpf - m).powi(2)).sum::<f64>() / (per_run.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let aided = per_run.iter().all(|r| r.udt_dr_aided.is_some()) && !per_run.is_empty();
    Summary {
        scenario: name.to_string(),
        runs: per_run.len(),
        mean_udt_mpf: m,
        sd_udt_mpf: sd,
        mean_udt_dr: mean(per_run.iter().map(|r| r.udt_dr)),
        mean_udt_dr_aided: aided.then(|| mean(per_run.iter().filter_map(|r| r.udt_dr_aided))),
        mean_udt_ekf: mean(per_run.iter().map(|r| r.udt_ekf)),
        mean_terminal_mpf_m: mean(per_run.iter().map(|r| r.terminal_mpf_m)),
        mean_terminal_dr_m: mean(per_run.iter().map(|r| r.terminal_dr_m)),
        mean_terminal_ekf_m: mean(per_run.iter().map(|r| r.terminal_ekf_m)),
        divergence_rate: mean(per_run.iter().map(|r| if r.diverged { 1.0 } else { 0.0 })),
        per_run,
    }
}

/// Runs `n_runs` independent realisations on `jobs` worker threads and
/// reduces them in run order, so the result does not depend on `jobs`.
pub fn monte_carlo(cfg: &ScenarioConfig, n_runs: usize, jobs: usize) -> Result<(Aggregate, Vec<RunResult>), HarnessError> {
    if n_runs == 0 {
        return Err(HarnessError::Config("n_runs must be at least 1".into()));
    }
    let scenario = Scenario::prepare(cfg)?;
    let crlb = scenario.crlb()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let runs: Vec<RunResult> = pool.install(|| (0..n_runs).into_par_iter().map(|i| scenario.run(i)).collect::<Result<_, _>>())?;
    let agg = Aggregate::from_runs(&cfg.name, &runs, Some(&crlb), cfg.adcp_stride());
    Ok((agg, runs))
}
