//! Marginalized particle filter: sampled positions, one EKF per particle.

use super::model::{idx, measurement, measurement_jacobian, propagate_mean, KfMat, KfVec, NoiseConfig, Transition, NX};
use super::EstimatorError;
use crate::flowfields::FlowMap;
use crate::math::{seeded_rng, wrap_angle, Vec2};
use crate::vehicle_sim::ImuSample;
use nalgebra::{Matrix2, SMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Below this log-likelihood a particle's likelihood underflows to zero.
const LOG_UNDERFLOW: f64 = -745.0;

#[derive(Clone, Debug, PartialEq)]
pub struct KfState {
    pub mean: KfVec,
    pub cov: KfMat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub pos: Vec2,
    pub weight: f64,
    pub kf: KfState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutationConfig {
    /// Mutation fires when the per-axis weighted position SD drops below this.
    #[serde(rename = "trigger_sd_m")]
    pub trigger_sd: f64,
    #[serde(rename = "jitter_var_m2")]
    pub jitter_var: f64,
    /// Added to the diagonal of every particle covariance when triggered.
    #[serde(default)]
    pub cov_inflation: [f64; NX],
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpfConfig {
    pub noise: NoiseConfig,
    /// Resample when `N_eff < resample_fraction * N_p`.
    pub resample_fraction: f64,
    pub mutation: Option<MutationConfig>,
    /// Draw position increments from `N(v dt, V_vv dt^2 + jitter^2 I)`; when
    /// false positions move deterministically by `v dt`.
    pub sample_positions: bool,
    pub position_jitter_sd: f64,
}

impl MpfConfig {
    pub fn new(noise: NoiseConfig) -> Self {
        Self { noise, resample_fraction: 0.5, mutation: None, sample_positions: true, position_jitter_sd: 0.1 }
    }
}

/// Initial distribution of the swarm.
#[derive(Clone, Debug, PartialEq)]
pub struct Prior {
    pub p_mean: Vec2,
    pub p_cov: Matrix2<f64>,
    pub kf_mean: KfVec,
    pub kf_cov: KfMat,
}

#[derive(Clone, Debug)]
pub struct MpfState {
    pub particles: Vec<Particle>,
    pub t: f64,
    pub config: MpfConfig,
    rng: ChaCha8Rng,
}

/// Point estimate of the swarm.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub p: Vec2,
    pub kf_mean: KfVec,
}

fn normal2<R: Rng>(rng: &mut R) -> Vec2 {
    Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Lower Cholesky factor of a 2x2 PSD matrix, tolerant of singular input.
fn chol2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let l11 = m[(0, 0)].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { m[(1, 0)] / l11 } else { 0.0 };
    let l22 = (m[(1, 1)] - l21 * l21).max(0.0).sqrt();
    Matrix2::new(l11, 0.0, l21, l22)
}

pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Systematic selection: one uniform offset, evenly spaced comb.
pub fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut j = 0;
    for i in 0..n {
        let pos = (i as f64 + u) / n as f64;
        while pos >= cum && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

impl MpfState {
    pub fn new(config: MpfConfig, prior: &Prior, n_particles: usize, seed: u64) -> Result<Self, EstimatorError> {
        if n_particles == 0 {
            return Err(EstimatorError::InvalidConfig("need at least one particle".into()));
        }
        let mut rng = seeded_rng(seed);
        let l = chol2(&prior.p_cov);
        let w = 1.0 / n_particles as f64;
        let particles = (0..n_particles)
            .map(|_| Particle {
                pos: prior.p_mean + l * normal2(&mut rng),
                weight: w,
                kf: KfState { mean: prior.kf_mean, cov: prior.kf_cov },
            })
            .collect();
        Ok(Self { particles, t: 0.0, config, rng })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(&self.weights())
    }

    /// Propagates every particle through one IMU interval.
    pub fn predict(&mut self, imu: &ImuSample, dt: f64) -> Result<(), EstimatorError> {
        let noise = &self.config.noise;
        let jitter = self.config.position_jitter_sd.powi(2);
        for part in &mut self.particles {
            let x = &part.kf.mean;
            let v = Vec2::new(x[0], x[1]);
            part.pos += v * dt;
            if self.config.sample_positions {
                let vv = part.kf.cov.fixed_view::<2, 2>(0, 0) * (dt * dt) + Matrix2::identity() * jitter;
                part.pos += chol2(&vv) * normal2(&mut self.rng);
            }
            let tr = Transition::new(x, imu.a, dt, noise);
            let cov = tr.congruence(&part.kf.cov) + noise.gqg(x[idx::PSI], dt);
            part.kf.mean = propagate_mean(x, imu.a, imu.r, dt, noise);
            if !(0..NX).all(|i| cov[(i, i)].is_finite() && cov[(i, i)] >= 0.0) {
                return Err(EstimatorError::NumericalBreakdown(format!("covariance lost PSD at t = {}", self.t)));
            }
            part.kf.cov = cov;
        }
        self.t += dt;
        Ok(())
    }

    /// Weight update and per-particle EKF correction with an ADCP sample.
    /// On likelihood underflow for every particle the weights are reset to
    /// uniform and `AllWeightsZero` is returned; the state stays usable.
    pub fn update(&mut self, z: Vec2, map: &FlowMap, t: f64) -> Result<(), EstimatorError> {
        let r = self.config.noise.r;
        let mut log_w = Vec::with_capacity(self.particles.len());
        let mut max_ll = f64::NEG_INFINITY;
        for part in &mut self.particles {
            let phi = map.velocity(part.pos, t);
            let x = part.kf.mean;
            let p = part.kf.cov;
            let h = measurement_jacobian(&x, phi);
            let e = z - measurement(&x, phi);
            let ph: SMatrix<f64, NX, 2> = p * h.transpose();
            let s = h * ph + r;
            let det = s.determinant();
            let s_inv = s.try_inverse().ok_or_else(|| EstimatorError::NumericalBreakdown("singular innovation covariance".into()))?;
            let ll = -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * (e.transpose() * s_inv * e)[(0, 0)];
            max_ll = max_ll.max(ll);
            log_w.push(part.weight.ln() + ll);
            let k = ph * s_inv;
            let mut mean = x + k * e;
            mean[idx::PSI] = wrap_angle(mean[idx::PSI]);
            let cov = (KfMat::identity() - k * h) * p;
            part.kf = KfState { mean, cov: (cov + cov.transpose()) * 0.5 };
        }
        self.t = t;
        if max_ll < LOG_UNDERFLOW {
            let w = 1.0 / self.particles.len() as f64;
            self.particles.iter_mut().for_each(|p| p.weight = w);
            return Err(EstimatorError::AllWeightsZero);
        }
        let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = log_w.iter().map(|l| (l - top).exp()).sum();
        for (part, l) in self.particles.iter_mut().zip(&log_w) {
            part.weight = (l - top).exp() / total;
        }
        Ok(())
    }

    /// Scalar heading correction applied to every particle.
    pub fn heading_update(&mut self, psi_meas: f64, sigma_psi: f64) {
        let var = sigma_psi * sigma_psi;
        for part in &mut self.particles {
            let p = &part.kf.cov;
            let s = p[(idx::PSI, idx::PSI)] + var;
            let k = p.column(idx::PSI) / s;
            let e = wrap_angle(psi_meas - part.kf.mean[idx::PSI]);
            part.kf.mean += k * e;
            part.kf.mean[idx::PSI] = wrap_angle(part.kf.mean[idx::PSI]);
            let cov = p - k * k.transpose() * s;
            part.kf.cov = (cov + cov.transpose()) * 0.5;
        }
    }

    pub fn needs_resampling(&self) -> bool {
        self.effective_sample_size() < self.config.resample_fraction * self.particles.len() as f64
    }

    pub fn systematic_resample(&mut self) {
        let u: f64 = self.rng.random();
        let idx = systematic_indices(&self.weights(), u);
        let w = 1.0 / self.particles.len() as f64;
        let mut next: Vec<Particle> = idx.iter().map(|&i| self.particles[i].clone()).collect();
        next.iter_mut().for_each(|p| p.weight = w);
        self.particles = next;
    }

    /// Weighted mean and covariance of particle positions.
    pub fn position_spread(&self) -> (Vec2, Matrix2<f64>) {
        let mean = self.particles.iter().fold(Vec2::zeros(), |acc, p| acc + p.pos * p.weight);
        let cov = self.particles.iter().fold(Matrix2::zeros(), |acc, p| {
            let d = p.pos - mean;
            acc + d * d.transpose() * p.weight
        });
        (mean, cov)
    }

    /// Per-axis weighted position SD, `sqrt(trace / 2)`.
    pub fn position_sd(&self) -> f64 {
        (self.position_spread().1.trace() / 2.0).sqrt()
    }

    /// Returns true when the mutation fired.
    pub fn mutate(&mut self) -> bool {
        let Some(cfg) = self.config.mutation.clone() else {
            return false;
        };
        if self.position_sd() >= cfg.trigger_sd {
            return false;
        }
        let sd = cfg.jitter_var.max(0.0).sqrt();
        let inflation = KfMat::from_diagonal(&KfVec::from_row_slice(&cfg.cov_inflation));
        for part in &mut self.particles {
            if sd > 0.0 {
                part.pos += normal2(&mut self.rng) * sd;
            }
            part.kf.cov += inflation;
        }
        true
    }

    /// Weighted average with the heading averaged on the circle.
    pub fn estimate_mean(&self) -> Estimate {
        let mut p = Vec2::zeros();
        let mut kf = KfVec::zeros();
        let (mut s, mut c) = (0.0, 0.0);
        for part in &self.particles {
            p += part.pos * part.weight;
            kf += part.kf.mean * part.weight;
            s += part.weight * part.kf.mean[idx::PSI].sin();
            c += part.weight * part.kf.mean[idx::PSI].cos();
        }
        kf[idx::PSI] = wrap_angle(s.atan2(c));
        Estimate { p, kf_mean: kf }
    }

    /// The highest-weight particle; ties go to the lowest index.
    pub fn estimate_map(&self) -> Estimate {
        let mut best = 0;
        for (i, part) in self.particles.iter().enumerate() {
            if part.weight > self.particles[best].weight {
                best = i;
            }
        }
        let part = &self.particles[best];
        Estimate { p: part.pos, kf_mean: part.kf.mean }
    }
}
