//! Ground truth along a perturbed lawn-mower path, plus noisy IMU and ADCP
//! sample streams.

use crate::flowfields::{flow_velocity, DomainPolicy, FlowError, FlowMap};
use crate::math::{rot, seeded_rng, wrap_angle, Vec2};
use crate::turbulence::KsField;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{Read, Write};
use thiserror::Error;

/// Standard gravity, used to convert milli-g.
pub const MILLI_G: f64 = 9.806_65e-3;
pub const DEG_PER_HOUR: f64 = PI / 180.0 / 3600.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("infeasible trajectory: {0}")]
    SpecInfeasible(String),
    #[error("invalid sensor parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub t: f64,
    pub p: Vec2,
    pub v: Vec2,
    pub psi: f64,
    /// Specific acceleration in the body frame.
    pub a_body: Vec2,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuParams {
    pub rate_hz: f64,
    #[serde(rename = "accel_white_sd_mps2_per_sqrthz")]
    pub accel_white_sd: f64,
    #[serde(rename = "accel_bias_sd_mps2")]
    pub accel_bias_sd: f64,
    #[serde(rename = "accel_tau_s")]
    pub accel_tau: f64,
    #[serde(rename = "gyro_white_sd_radps_per_sqrthz")]
    pub gyro_white_sd: f64,
    #[serde(rename = "gyro_bias_sd_radps")]
    pub gyro_bias_sd: f64,
    #[serde(rename = "gyro_tau_s")]
    pub gyro_tau: f64,
}

impl ImuParams {
    /// VectorNav VN-100 characteristics at 10 Hz.
    pub fn vn100() -> Self {
        Self {
            rate_hz: 10.0,
            accel_white_sd: 0.14 * MILLI_G,
            accel_bias_sd: 0.04 * MILLI_G,
            accel_tau: 300.0,
            gyro_white_sd: 0.0035_f64.to_radians(),
            gyro_bias_sd: 10.0 * DEG_PER_HOUR,
            gyro_tau: 300.0,
        }
    }

    /// Same rate and time constants, every noise amplitude zero.
    pub fn noiseless(&self) -> Self {
        Self { accel_white_sd: 0.0, accel_bias_sd: 0.0, gyro_white_sd: 0.0, gyro_bias_sd: 0.0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [self.rate_hz, self.accel_tau, self.gyro_tau];
        let non_negative = [self.accel_white_sd, self.accel_bias_sd, self.gyro_white_sd, self.gyro_bias_sd];
        if positive.iter().any(|x| !(*x > 0.0)) || non_negative.iter().any(|x| !(*x >= 0.0)) {
            return Err(SimError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

impl Default for ImuParams {
    fn default() -> Self {
        Self::vn100()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdcpParams {
    pub rate_hz: f64,
    #[serde(rename = "white_sd_mps")]
    pub white_sd: f64,
    #[serde(rename = "bias_sd_mps")]
    pub bias_sd: f64,
    #[serde(rename = "tau_s")]
    pub tau: f64,
}

impl AdcpParams {
    /// RDI 1200 kHz at 1 Hz.
    pub fn rdi1200() -> Self {
        Self { rate_hz: 1.0, white_sd: 0.01, bias_sd: 0.01, tau: 100.0 }
    }

    pub fn noiseless(&self) -> Self {
        Self { white_sd: 0.0, bias_sd: 0.0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.rate_hz > 0.0 && self.tau > 0.0 && self.white_sd >= 0.0 && self.bias_sd >= 0.0) {
            return Err(SimError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

impl Default for AdcpParams {
    fn default() -> Self {
        Self::rdi1200()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawnmowerSpec {
    #[serde(rename = "origin_m")]
    pub origin: [f64; 2],
    #[serde(rename = "leg_length_m")]
    pub leg_length: f64,
    #[serde(rename = "leg_spacing_m")]
    pub leg_spacing: f64,
    pub n_legs: usize,
    #[serde(rename = "speed_mps")]
    pub speed: f64,
    #[serde(rename = "turn_radius_m")]
    pub turn_radius: f64,
    #[serde(rename = "perturb_amp_m")]
    pub perturb_amp: f64,
    #[serde(rename = "perturb_wavelength_m")]
    pub perturb_wavelength: f64,
    #[serde(rename = "dt_s")]
    pub dt: f64,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    /// Heading of the first leg; later legs alternate direction.
    #[serde(rename = "leg_heading_rad", default)]
    pub leg_heading: f64,
}

impl Default for LawnmowerSpec {
    fn default() -> Self {
        Self {
            origin: [1000.0, -4000.0],
            leg_length: 18_000.0,
            leg_spacing: 2000.0,
            n_legs: 4,
            speed: 1.5,
            turn_radius: 100.0,
            perturb_amp: 20.0,
            perturb_wavelength: 1000.0,
            dt: 0.1,
            duration: 6.0 * 3600.0,
            leg_heading: 0.0,
        }
    }
}

impl LawnmowerSpec {
    fn turn_length(&self) -> f64 {
        PI * self.turn_radius + (self.leg_spacing - 2.0 * self.turn_radius)
    }

    /// Total arc length of all legs and turns.
    pub fn path_length(&self) -> f64 {
        self.n_legs as f64 * self.leg_length + self.n_legs.saturating_sub(1) as f64 * self.turn_length()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::SpecInfeasible(m.to_string()));
        if !(self.speed > 0.0) || !(self.turn_radius > 0.0) || !(self.dt > 0.0) {
            return bad("speed, turn radius and dt must be positive");
        }
        if !(self.duration >= 0.0) || !(self.leg_length > 0.0) || self.n_legs == 0 {
            return bad("need a positive leg length, at least one leg and a non-negative duration");
        }
        if self.turn_radius > self.leg_spacing / 2.0 {
            return bad("turn radius exceeds half the leg spacing");
        }
        if self.perturb_amp != 0.0 && !(self.perturb_wavelength > 0.0) {
            return bad("perturbation wavelength must be positive");
        }
        if self.speed * (self.duration + self.dt) > self.path_length() {
            return bad("path is shorter than the requested duration");
        }
        Ok(())
    }

    /// Unwrapped commanded heading at arc length `s`.
    fn heading_at(&self, s: f64) -> f64 {
        let cycle = self.leg_length + self.turn_length();
        let leg = ((s / cycle).floor() as usize).min(self.n_legs - 1);
        let base = self.leg_heading + if leg % 2 == 1 { PI } else { 0.0 };
        let sign = if leg % 2 == 0 { 1.0 } else { -1.0 };
        let local = s - leg as f64 * cycle;
        if local <= self.leg_length {
            return base + self.leg_perturbation(local);
        }
        let arc = FRAC_PI_2 * self.turn_radius;
        let u = local - self.leg_length;
        let turned = if u < arc {
            u / self.turn_radius
        } else if u < arc + self.leg_spacing - 2.0 * self.turn_radius {
            FRAC_PI_2
        } else {
            FRAC_PI_2 + (u - arc - (self.leg_spacing - 2.0 * self.turn_radius)) / self.turn_radius
        };
        base + sign * turned.min(PI)
    }

    /// Heading deviation `d0 sin(2 pi s / lambda)`; the wavelength is
    /// stretched so each leg holds a whole number of periods, giving a
    /// lateral excursion of amplitude `perturb_amp` about a fixed offset.
    fn leg_perturbation(&self, s: f64) -> f64 {
        if self.perturb_amp == 0.0 {
            return 0.0;
        }
        let periods = (self.leg_length / self.perturb_wavelength).round().max(1.0);
        let lambda = self.leg_length / periods;
        let d0 = 2.0 * PI * self.perturb_amp / lambda;
        d0 * (2.0 * PI * s / lambda).sin()
    }
}

/// Samples the commanded path at `dt`. Velocity, acceleration and yaw rate are
/// differenced from consecutive headings so the records integrate exactly
/// under forward Euler.
pub fn lawnmower_trajectory(spec: &LawnmowerSpec) -> Result<Vec<TruthRecord>, SimError> {
    spec.validate()?;
    let n = (spec.duration / spec.dt).round() as usize;
    let heading = |k: usize| spec.heading_at(spec.speed * k as f64 * spec.dt);
    let velocity = |psi: f64| Vec2::new(psi.cos(), psi.sin()) * spec.speed;
    let mut out = Vec::with_capacity(n + 1);
    let mut p = Vec2::from(spec.origin);
    let mut psi = heading(0);
    for k in 0..=n {
        let psi_next = heading(k + 1);
        let v = velocity(psi);
        let a_world = (velocity(psi_next) - v) / spec.dt;
        out.push(TruthRecord {
            t: k as f64 * spec.dt,
            p,
            v,
            psi: wrap_angle(psi),
            a_body: rot(psi).transpose() * a_world,
            r: (psi_next - psi) / spec.dt,
        });
        p += v * spec.dt;
        psi = psi_next;
    }
    Ok(out)
}

/// Cumulative path length at each record.
pub fn cumulative_distance(truth: &[TruthRecord]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(truth.len());
    for (i, rec) in truth.iter().enumerate() {
        if i > 0 {
            acc += (rec.p - truth[i - 1].p).norm();
        }
        out.push(acc);
    }
    out
}

/// First-order Gauss-Markov step with stationary SD `sigma_b`.
#[inline]
pub fn gauss_markov_step(b: f64, tau: f64, sigma_b: f64, dt: f64, noise: f64) -> f64 {
    (1.0 - dt / tau) * b + (2.0 * sigma_b * sigma_b / (tau * dt)).sqrt() * noise * dt
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    pub a: Vec2,
    pub r: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdcpSample {
    pub t: f64,
    pub z: Vec2,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImuLog {
    pub dt: f64,
    pub samples: Vec<ImuSample>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdcpLog {
    pub samples: Vec<AdcpSample>,
}

fn stride(truth: &[TruthRecord], rate_hz: f64) -> Result<usize, SimError> {
    let dt_truth = if truth.len() > 1 { truth[1].t - truth[0].t } else { 1.0 / rate_hz };
    let ratio = 1.0 / (rate_hz * dt_truth);
    if ratio < 1.0 - 1e-9 {
        return Err(SimError::InvalidParams(format!("truth sampled below {rate_hz} Hz")));
    }
    Ok((ratio.round() as usize).max(1))
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn generate_imu_samples(truth: &[TruthRecord], params: &ImuParams, seed: u64) -> Result<ImuLog, SimError> {
    params.validate()?;
    let step = stride(truth, params.rate_hz)?;
    let dt = 1.0 / params.rate_hz;
    let sd_a = params.accel_white_sd * params.rate_hz.sqrt();
    let sd_r = params.gyro_white_sd * params.rate_hz.sqrt();
    let mut rng = seeded_rng(seed);
    let mut ba = Vec2::new(normal(&mut rng), normal(&mut rng)) * params.accel_bias_sd;
    let mut br = normal(&mut rng) * params.gyro_bias_sd;
    let mut samples = Vec::with_capacity(truth.len() / step + 1);
    for rec in truth.iter().step_by(step) {
        let nu_a = Vec2::new(normal(&mut rng), normal(&mut rng)) * sd_a;
        let nu_r = normal(&mut rng) * sd_r;
        samples.push(ImuSample { t: rec.t, a: rec.a_body + ba + nu_a, r: rec.r + br + nu_r });
        let (wx, wy, wr) = (normal(&mut rng), normal(&mut rng), normal(&mut rng));
        ba.x = gauss_markov_step(ba.x, params.accel_tau, params.accel_bias_sd, dt, wx);
        ba.y = gauss_markov_step(ba.y, params.accel_tau, params.accel_bias_sd, dt, wy);
        br = gauss_markov_step(br, params.gyro_tau, params.gyro_bias_sd, dt, wr);
    }
    Ok(ImuLog { dt, samples })
}

/// Noise-free relative flow `R(psi)^T (Phi + u_ks - v)` seen at a truth record.
pub fn relative_flow(
    rec: &TruthRecord,
    mean_flow: &FlowMap,
    turb: &KsField,
    policy: DomainPolicy,
) -> Result<Vec2, SimError> {
    let phi = flow_velocity(mean_flow, rec.p, rec.t, policy)?;
    Ok(rot(rec.psi).transpose() * (phi + turb.velocity(rec.p, rec.t) - rec.v))
}

pub fn generate_adcp_samples(
    truth: &[TruthRecord],
    mean_flow: &FlowMap,
    turb: &KsField,
    params: &AdcpParams,
    seed: u64,
    policy: DomainPolicy,
) -> Result<AdcpLog, SimError> {
    params.validate()?;
    let step = stride(truth, params.rate_hz)?;
    let dt = 1.0 / params.rate_hz;
    let mut rng = seeded_rng(seed);
    let mut bz = Vec2::new(normal(&mut rng), normal(&mut rng)) * params.bias_sd;
    let mut samples = Vec::with_capacity(truth.len() / step + 1);
    for rec in truth.iter().step_by(step) {
        let nu = Vec2::new(normal(&mut rng), normal(&mut rng)) * params.white_sd;
        samples.push(AdcpSample { t: rec.t, z: relative_flow(rec, mean_flow, turb, policy)? + bz + nu });
        let (wx, wy) = (normal(&mut rng), normal(&mut rng));
        bz.x = gauss_markov_step(bz.x, params.tau, params.bias_sd, dt, wx);
        bz.y = gauss_markov_step(bz.y, params.tau, params.bias_sd, dt, wy);
    }
    Ok(AdcpLog { samples })
}

/// Overlapping Allan deviation of a uniformly sampled series at cluster size `m`.
pub fn allan_deviation(x: &[f64], m: usize) -> f64 {
    assert!(m >= 1 && x.len() > 2 * m, "series too short for cluster size {m}");
    let mut cum = Vec::with_capacity(x.len() + 1);
    cum.push(0.0);
    for &xi in x {
        cum.push(cum.last().unwrap() + xi);
    }
    let n = x.len() - 2 * m + 1;
    let mut acc = 0.0;
    for k in 0..n {
        let a = (cum[k + m] - cum[k]) / m as f64;
        let b = (cum[k + 2 * m] - cum[k + m]) / m as f64;
        acc += (b - a).powi(2);
    }
    (acc / (2.0 * n as f64)).sqrt()
}

pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_imu_csv<W: Write>(log: &ImuLog, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "ax", "ay", "r"])?;
    for s in &log.samples {
        w.write_record([fmt17(s.t), fmt17(s.a.x), fmt17(s.a.y), fmt17(s.r)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_adcp_csv<W: Write>(log: &AdcpLog, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "zx", "zy"])?;
    for s in &log.samples {
        w.write_record([fmt17(s.t), fmt17(s.z.x), fmt17(s.z.y)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct ImuRow {
    t: f64,
    ax: f64,
    ay: f64,
    r: f64,
}

#[derive(Deserialize)]
struct AdcpRow {
    t: f64,
    zx: f64,
    zy: f64,
}

pub fn read_imu_csv<R: Read>(input: R) -> Result<ImuLog, SimError> {
    let mut samples = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize::<ImuRow>() {
        let row = row?;
        samples.push(ImuSample { t: row.t, a: Vec2::new(row.ax, row.ay), r: row.r });
    }
    let dt = if samples.len() > 1 { samples[1].t - samples[0].t } else { 0.0 };
    Ok(ImuLog { dt, samples })
}

pub fn read_adcp_csv<R: Read>(input: R) -> Result<AdcpLog, SimError> {
    let mut samples = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize::<AdcpRow>() {
        let row = row?;
        samples.push(AdcpSample { t: row.t, z: Vec2::new(row.zx, row.zy) });
    }
    Ok(AdcpLog { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowfields::DoubleGyreParams;

    fn short_spec() -> LawnmowerSpec {
        LawnmowerSpec { duration: 3600.0, ..LawnmowerSpec::default() }
    }

    #[test]
    fn straight_leg_without_perturbation() {
        let spec = LawnmowerSpec { perturb_amp: 0.0, n_legs: 1, duration: 1000.0, leg_heading: 0.7, ..LawnmowerSpec::default() };
        let truth = lawnmower_trajectory(&spec).unwrap();
        for rec in &truth[1..] {
            assert_eq!(rec.r, 0.0);
            assert_eq!(rec.a_body, Vec2::zeros());
            assert_eq!(rec.psi, 0.7);
        }
    }

    #[test]
    fn turn_kinematics() {
        let spec = LawnmowerSpec { perturb_amp: 0.0, ..LawnmowerSpec::default() };
        let truth = lawnmower_trajectory(&spec).unwrap();
        // Inside the first quarter arc, just past the end of leg one.
        let t_turn = (spec.leg_length + 50.0) / spec.speed;
        let rec = truth[(t_turn / spec.dt) as usize];
        let r_expected = spec.speed / spec.turn_radius;
        assert!((rec.r - r_expected).abs() < 1e-9 * r_expected);
        let a_expected = spec.speed.powi(2) / spec.turn_radius;
        assert!((rec.a_body.norm() - a_expected).abs() < 1e-6 * a_expected);
        assert!(rec.a_body.x.abs() < 2e-3 * a_expected && rec.a_body.y > 0.0);
    }

    #[test]
    fn legs_alternate_and_step_over() {
        let spec = LawnmowerSpec { perturb_amp: 0.0, ..LawnmowerSpec::default() };
        let truth = lawnmower_trajectory(&spec).unwrap();
        let t_leg2 = (spec.leg_length + spec.turn_length() + 100.0) / spec.speed;
        let rec = truth[(t_leg2 / spec.dt) as usize];
        assert!((rec.psi.abs() - PI).abs() < 1e-9);
        assert!((rec.p.y - (spec.origin[1] + spec.leg_spacing)).abs() < 0.5);
    }

    #[test]
    fn euler_reintegration_matches_truth() {
        let truth = lawnmower_trajectory(&LawnmowerSpec::default()).unwrap();
        let dt = 0.1;
        let (mut p, mut v, mut psi) = (truth[0].p, truth[0].v, truth[0].psi);
        let mut worst: f64 = 0.0;
        for rec in &truth {
            worst = worst.max((p - rec.p).norm()).max(wrap_angle(psi - rec.psi).abs());
            let v_next = v + rot(psi) * rec.a_body * dt;
            psi += rec.r * dt;
            p += v * dt;
            v = v_next;
        }
        assert!(worst < 0.5, "worst {worst}");
    }

    #[test]
    fn perturbation_is_bounded() {
        let spec = LawnmowerSpec { n_legs: 1, duration: 10_000.0, ..LawnmowerSpec::default() };
        let truth = lawnmower_trajectory(&spec).unwrap();
        let (lo, hi) = truth.iter().fold((f64::MAX, f64::MIN), |(lo, hi), r| (lo.min(r.p.y), hi.max(r.p.y)));
        let span = hi - lo;
        assert!(span > 1.8 * spec.perturb_amp && span < 2.2 * spec.perturb_amp, "span {span}");
    }

    #[test]
    fn infeasible_specs() {
        let tight = LawnmowerSpec { turn_radius: 1500.0, ..LawnmowerSpec::default() };
        assert!(matches!(lawnmower_trajectory(&tight), Err(SimError::SpecInfeasible(_))));
        let short = LawnmowerSpec { n_legs: 1, ..LawnmowerSpec::default() };
        assert!(matches!(lawnmower_trajectory(&short), Err(SimError::SpecInfeasible(_))));
    }

    #[test]
    fn gauss_markov_limits() {
        assert_eq!(gauss_markov_step(2.0, 100.0, 0.0, 1.0, 0.7), 0.99 * 2.0);
        assert_eq!(gauss_markov_step(2.0, f64::INFINITY, 1.0, 1.0, 0.7), 2.0);
    }

    #[test]
    fn noiseless_imu_is_truth() {
        let truth = lawnmower_trajectory(&short_spec()).unwrap();
        let log = generate_imu_samples(&truth, &ImuParams::vn100().noiseless(), 1).unwrap();
        assert_eq!(log.samples.len(), truth.len());
        for (s, rec) in log.samples.iter().zip(&truth) {
            assert_eq!(s.a, rec.a_body);
            assert_eq!(s.r, rec.r);
        }
    }

    fn static_truth(n: usize, dt: f64) -> Vec<TruthRecord> {
        (0..n)
            .map(|k| TruthRecord { t: k as f64 * dt, p: Vec2::zeros(), v: Vec2::zeros(), psi: 0.0, a_body: Vec2::zeros(), r: 0.0 })
            .collect()
    }

    #[test]
    fn white_noise_mean_is_small() {
        let params = ImuParams { accel_bias_sd: 0.0, gyro_bias_sd: 0.0, ..ImuParams::vn100() };
        let log = generate_imu_samples(&static_truth(1_000_000, 0.1), &params, 4).unwrap();
        let n = log.samples.len() as f64;
        let mean_ax = log.samples.iter().map(|s| s.a.x).sum::<f64>() / n;
        let mean_r = log.samples.iter().map(|s| s.r).sum::<f64>() / n;
        let sd_a = params.accel_white_sd * params.rate_hz.sqrt();
        let sd_r = params.gyro_white_sd * params.rate_hz.sqrt();
        assert!(mean_ax.abs() < 4.0 * sd_a / n.sqrt());
        assert!(mean_r.abs() < 4.0 * sd_r / n.sqrt());
    }

    #[test]
    fn white_variance_scales_with_rate() {
        let var = |rate: f64| {
            let params = ImuParams { rate_hz: rate, accel_bias_sd: 0.0, gyro_bias_sd: 0.0, ..ImuParams::vn100() };
            let log = generate_imu_samples(&static_truth(200_000, 1.0 / rate), &params, 8).unwrap();
            log.samples.iter().map(|s| s.a.x * s.a.x).sum::<f64>() / log.samples.len() as f64
        };
        let ratio = var(20.0) / var(10.0);
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn allan_bias_instability_of_static_log() {
        let params = ImuParams::vn100();
        let n = (4.0 * 3600.0 * params.rate_hz) as usize;
        let log = generate_imu_samples(&static_truth(n, 0.1), &params, 2).unwrap();
        let ax: Vec<f64> = log.samples.iter().map(|s| s.a.x).collect();
        // The flat region sits near twice the correlation time.
        let clusters = [1000, 2000, 4000, 6000, 8000];
        let peak = clusters.iter().map(|&m| allan_deviation(&ax, m)).fold(0.0, f64::max);
        let ratio = peak / 0.664 / params.accel_bias_sd;
        assert!(ratio > 1.0 / 1.5 && ratio < 1.5, "ratio {ratio}");
    }

    #[test]
    fn adcp_still_water_and_pure_motion() {
        let still = FlowMap::Grid(
            crate::flowfields::GridFlowMap::uniform(
                crate::flowfields::GridGeometry {
                    origin: [-1e5, -1e5],
                    dx: 1e5,
                    dy: 1e5,
                    nx: 3,
                    ny: 3,
                    t0: 0.0,
                    dt: 1e5,
                    nt: 2,
                },
                Vec2::zeros(),
            )
            .unwrap(),
        );
        let rest = static_truth(50, 0.1);
        let log = generate_adcp_samples(&rest, &still, &KsField::still(), &AdcpParams::rdi1200().noiseless(), 2, DomainPolicy::Clamp).unwrap();
        assert_eq!(log.samples.len(), 5);
        assert!(log.samples.iter().all(|s| s.z == Vec2::zeros()));

        let truth = lawnmower_trajectory(&short_spec()).unwrap();
        let log = generate_adcp_samples(&truth, &still, &KsField::still(), &AdcpParams::rdi1200().noiseless(), 2, DomainPolicy::Clamp).unwrap();
        for (s, rec) in log.samples.iter().zip(truth.iter().step_by(10)) {
            assert_eq!(s.t, rec.t);
            assert!((s.z + rot(rec.psi).transpose() * rec.v).norm() < 1e-15);
        }
    }

    #[test]
    fn adcp_inversion_recovers_flow() {
        let map = FlowMap::DoubleGyre(DoubleGyreParams::default());
        let turb = crate::turbulence::build_ks(&crate::turbulence::KsParams { seed: 2, ..Default::default() }).unwrap();
        let truth = lawnmower_trajectory(&short_spec()).unwrap();
        let log = generate_adcp_samples(&truth, &map, &turb, &AdcpParams::rdi1200().noiseless(), 3, DomainPolicy::Clamp).unwrap();
        for (s, rec) in log.samples.iter().zip(truth.iter().step_by(10)).step_by(97) {
            let recovered = rot(rec.psi) * s.z + rec.v;
            let expected = map.velocity(rec.p, rec.t) + turb.velocity(rec.p, rec.t);
            assert!((recovered - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn logs_are_deterministic_and_round_trip() {
        let truth = lawnmower_trajectory(&short_spec()).unwrap();
        let a = generate_imu_samples(&truth, &ImuParams::vn100(), 5).unwrap();
        let b = generate_imu_samples(&truth, &ImuParams::vn100(), 5).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_imu_csv(&a, &mut buf).unwrap();
        assert!(buf.starts_with(b"t,ax,ay,r\n"));
        let back = read_imu_csv(buf.as_slice()).unwrap();
        assert_eq!(back.samples, a.samples);

        let map = FlowMap::DoubleGyre(DoubleGyreParams::default());
        let adcp = generate_adcp_samples(&truth, &map, &KsField::still(), &AdcpParams::rdi1200(), 6, DomainPolicy::Clamp).unwrap();
        let mut buf = Vec::new();
        write_adcp_csv(&adcp, &mut buf).unwrap();
        assert_eq!(read_adcp_csv(buf.as_slice()).unwrap(), adcp);
    }
}
