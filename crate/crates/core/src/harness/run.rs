use super::config::{PointEstimate, ScenarioConfig};
use super::{stream, HarnessError};
use crate::crlb::{crlb_sequence, CrlbSequence, Mat5};
use crate::estimator::{
    dead_reckon, dead_reckon_heading_aided, CurrentAidedEkf, EstimatorError, Estimate, KfMat, KfVec, MpfConfig, MpfState,
    NavState, NoiseConfig, Prior,
};
use crate::flowfields::FlowMap;
use crate::math::{derive_seed, seeded_rng, Vec2};
use crate::turbulence::{build_ks, KsField, KsParams};
use crate::vehicle_sim::{
    cumulative_distance, generate_adcp_samples, generate_imu_samples, lawnmower_trajectory, AdcpLog, ImuLog, TruthRecord,
};
use nalgebra::{DMatrix, Matrix2, Matrix3, SVector, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

/// Consecutive ADCP ticks the error must exceed the envelope before a run is
/// flagged as diverged.
const DIVERGENCE_TICKS: usize = 10;
const DIVERGENCE_FACTOR: f64 = 10.0;

/// State of every estimator at one ADCP tick.
#[derive(Clone, Debug, PartialEq)]
pub struct Tick {
    pub t: f64,
    /// Path length travelled so far.
    pub distance: f64,
    pub truth_p: Vec2,
    pub truth_v: Vec2,
    pub mpf: Estimate,
    /// Weighted covariance of the particle positions.
    pub mpf_pos_cov: Matrix2<f64>,
    pub neff: f64,
    pub diverged: bool,
    pub dr_p: Vec2,
    pub dr_v: Vec2,
    /// Dead reckoning with heading measurements, when heading aiding is on.
    pub dr_aided_p: Option<Vec2>,
    pub ekf_p: Vec2,
    pub ekf_v: Vec2,
}

impl Tick {
    pub fn mpf_error(&self) -> f64 {
        (self.mpf.p - self.truth_p).norm()
    }

    pub fn mpf_velocity(&self) -> Vec2 {
        Vec2::new(self.mpf.kf_mean[0], self.mpf.kf_mean[1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub run_index: usize,
    pub ticks: Vec<Tick>,
    pub distance: f64,
    pub terminal_mpf: f64,
    pub terminal_dr: f64,
    pub terminal_dr_aided: Option<f64>,
    pub terminal_ekf: f64,
    pub diverged: bool,
    pub all_weights_zero: usize,
    pub resamples: usize,
    pub mutations: usize,
    /// Time average of the position NEES against the swarm covariance.
    pub mean_nees: f64,
}

impl RunResult {
    pub fn udt_mpf(&self) -> f64 {
        super::compute_udt(self.terminal_mpf, self.distance)
    }

    pub fn udt_dr(&self) -> f64 {
        super::compute_udt(self.terminal_dr, self.distance)
    }

    pub fn udt_dr_aided(&self) -> Option<f64> {
        self.terminal_dr_aided.map(|e| super::compute_udt(e, self.distance))
    }

    pub fn udt_ekf(&self) -> f64 {
        super::compute_udt(self.terminal_ekf, self.distance)
    }
}

pub struct Realization {
    pub ks: KsField,
    pub imu: ImuLog,
    pub adcp: AdcpLog,
    /// `(t, psi)` heading measurements; empty without heading aiding.
    pub headings: Vec<(f64, f64)>,
    pub filter_seed: u64,
}

/// Everything shared by the runs of one configuration: the truth trajectory,
/// the flow fields and the filter noise model.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub truth: Vec<TruthRecord>,
    pub distance: Vec<f64>,
    pub truth_flow: FlowMap,
    pub nav_map: FlowMap,
    pub noise: NoiseConfig,
}

impl Scenario {
    pub fn prepare(config: &ScenarioConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let truth = lawnmower_trajectory(&config.trajectory)?;
        let distance = cumulative_distance(&truth);
        let truth_flow = config.truth_flow.build(&config.base_dir)?;
        let nav_map = match &config.nav_map {
            Some(spec) => spec.build(&config.base_dir)?,
            None => truth_flow.clone(),
        };
        Ok(Self { config: config.clone(), truth, distance, truth_flow, nav_map, noise: config.noise() })
    }

    /// Bound of the reduced system along the shared truth on the navigation map.
    pub fn crlb(&self) -> Result<CrlbSequence, HarnessError> {
        let q = &self.noise.q_diag;
        let qm = Matrix3::from_diagonal(&Vector3::new(q[0], q[1], q[2]));
        let r = Matrix2::identity() * self.config.crlb_r_var();
        let i = &self.config.init;
        let p0 = Mat5::from_diagonal(&SVector::<f64, 5>::new(
            i.position_var,
            i.position_var,
            i.velocity_var,
            i.velocity_var,
            i.heading_var,
        ));
        Ok(crlb_sequence(&self.truth, &self.nav_map, &qm, &r, &p0, 1.0 / self.config.adcp.rate_hz)?)
    }

    /// Initial filter distribution around the true start state; `u_c0` is
    /// the turbulence at the start point.
    pub fn prior(&self, u_c0: Vec2) -> Prior {
        let cfg = &self.config;
        let i = &cfg.init;
        let t0 = &self.truth[0];
        let mut mean = KfVec::zeros();
        mean[0] = t0.v.x;
        mean[1] = t0.v.y;
        mean[2] = t0.psi;
        if i.turbulence_from_truth {
            mean[8] = u_c0.x;
            mean[9] = u_c0.y;
        }
        let ba = i.accel_bias_var.unwrap_or(cfg.imu.accel_bias_sd.powi(2));
        let br = i.gyro_bias_var.unwrap_or(cfg.imu.gyro_bias_sd.powi(2));
        let bz = i.adcp_bias_var.unwrap_or(cfg.adcp.bias_sd.powi(2));
        let uc = i.turbulence_var.unwrap_or(cfg.turbulence.large_scale_variance / 2.0);
        let diag = [i.velocity_var, i.velocity_var, i.heading_var, ba, ba, br, bz, bz, uc, uc];
        Prior {
            p_mean: t0.p,
            p_cov: Matrix2::identity() * i.position_var,
            kf_mean: mean,
            kf_cov: KfMat::from_diagonal(&KfVec::from_row_slice(&diag)),
        }
    }

    /// Turbulence and sensor streams of run `run_index`. Every random stream
    /// is derived from the master seed and the run index alone.
    pub fn realize(&self, run_index: usize) -> Result<Realization, HarnessError> {
        let cfg = &self.config;
        let seed = |s: u64| derive_seed(cfg.master_seed, s, run_index as u64);
        let ks = build_ks(&KsParams { seed: seed(stream::TURBULENCE), ..cfg.turbulence.clone() })?;
        let imu = generate_imu_samples(&self.truth, &cfg.imu, seed(stream::IMU))?;
        let adcp = generate_adcp_samples(&self.truth, &self.truth_flow, &ks, &cfg.adcp, seed(stream::ADCP), cfg.domain_policy)?;
        let headings = match cfg.estimator.heading_sd {
            Some(sd) => {
                let mut rng = seeded_rng(seed(stream::HEADING));
                self.truth
                    .iter()
                    .step_by(cfg.adcp_stride())
                    .map(|rec| (rec.t, rec.psi + sd * rng.sample::<f64, _>(StandardNormal)))
                    .collect()
            }
            None => Vec::new(),
        };
        Ok(Realization { ks, imu, adcp, headings, filter_seed: seed(stream::FILTER) })
    }

    /// One Monte Carlo run: dead reckoning, the single EKF and the particle
    /// filter over identical sensor logs.
    pub fn run(&self, run_index: usize) -> Result<RunResult, HarnessError> {
        let cfg = &self.config;
        let Realization { ks, imu, adcp, headings, filter_seed } = self.realize(run_index)?;
        let stride = cfg.adcp_stride();
        let dt = imu.dt;

        let t0 = &self.truth[0];
        let prior = self.prior(ks.velocity(t0.p, t0.t));
        let start = NavState { p: t0.p, v: t0.v, psi: t0.psi };
        let dr = dead_reckon(start, &imu);
        let dr_aided = cfg.estimator.heading_sd.map(|_| dead_reckon_heading_aided(start, &imu, &headings));

        let est = &cfg.estimator;
        let mpf_cfg = MpfConfig {
            noise: self.noise.clone(),
            resample_fraction: est.resample_fraction,
            mutation: est.mutation.clone(),
            sample_positions: est.sample_positions,
            position_jitter_sd: est.position_jitter_sd,
        };
        let mut mpf = MpfState::new(mpf_cfg, &prior, est.n_particles, filter_seed)?;
        let kf_cov = DMatrix::from_column_slice(10, 10, prior.kf_cov.as_slice());
        let mut ekf = CurrentAidedEkf::new(t0.p, prior.kf_mean.as_slice(), &kf_cov, self.noise.clone());

        let n = self.truth.len();
        let mut ticks = Vec::with_capacity(n / stride + 1);
        let (mut awz, mut resamples, mut mutations) = (0, 0, 0);
        let (mut diverged, mut streak) = (false, 0);
        let (mut nees_sum, mut nees_n) = (0.0, 0usize);

        for k in 0..n {
            if k % stride == 0 {
                let j = k / stride;
                let sample = &adcp.samples[j];
                let rec = &self.truth[k];
                if let Some(sd) = est.heading_sd {
                    mpf.heading_update(headings[j].1, sd);
                    ekf.heading_update(headings[j].1, sd);
                }
                match mpf.update(sample.z, &self.nav_map, sample.t) {
                    Ok(()) => {}
                    Err(EstimatorError::AllWeightsZero) => {
                        awz += 1;
                        diverged = true;
                    }
                    Err(e) => return Err(e.into()),
                }
                ekf.update(sample.z, &self.nav_map, sample.t);

                let estimate = match est.point_estimate {
                    PointEstimate::Mean => mpf.estimate_mean(),
                    PointEstimate::Map => mpf.estimate_map(),
                };
                let (_, cov) = mpf.position_spread();
                let err = estimate.p - rec.p;
                let two_sigma = 2.0 * cov.trace().max(0.0).sqrt();
                streak = if err.norm() > DIVERGENCE_FACTOR * two_sigma { streak + 1 } else { 0 };
                if streak >= DIVERGENCE_TICKS {
                    diverged = true;
                }
                if let Some(inv) = cov.try_inverse() {
                    let nees = (err.transpose() * inv * err)[(0, 0)];
                    if nees.is_finite() {
                        nees_sum += nees;
                        nees_n += 1;
                    }
                }
                ticks.push(Tick {
                    t: rec.t,
                    distance: self.distance[k],
                    truth_p: rec.p,
                    truth_v: rec.v,
                    mpf: estimate,
                    mpf_pos_cov: cov,
                    neff: mpf.effective_sample_size(),
                    diverged,
                    dr_p: dr[k].p,
                    dr_v: dr[k].v,
                    dr_aided_p: dr_aided.as_ref().map(|d| d[k].p),
                    ekf_p: ekf.position(),
                    ekf_v: Vec2::new(ekf.x[2], ekf.x[3]),
                });

                if mpf.needs_resampling() {
                    mpf.systematic_resample();
                    resamples += 1;
                }
                if mpf.mutate() {
                    mutations += 1;
                }
            }
            if k + 1 < n {
                mpf.predict(&imu.samples[k], dt)?;
                ekf.predict(&imu.samples[k], dt);
            }
        }

        let last = ticks.last().expect("at least one tick");
        Ok(RunResult {
            run_index,
            distance: last.distance,
            terminal_mpf: last.mpf_error(),
            terminal_dr: (last.dr_p - last.truth_p).norm(),
            terminal_dr_aided: last.dr_aided_p.map(|p| (p - last.truth_p).norm()),
            terminal_ekf: (last.ekf_p - last.truth_p).norm(),
            ticks,
            diverged,
            all_weights_zero: awz,
            resamples,
            mutations,
            mean_nees: if nees_n > 0 { nees_sum / nees_n as f64 } else { f64::NAN },
        })
    }
}

/// Prepares the scenario and executes run `run_index`.
pub fn run_scenario(config: &ScenarioConfig, run_index: usize) -> Result<RunResult, HarnessError> {
    Scenario::prepare(config)?.run(run_index)
}
