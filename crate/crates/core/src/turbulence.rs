//! Kinematic Simulation of the unresolved, small-scale flow component.
//!
//! The field is a finite sum of divergence-free Fourier modes whose
//! amplitudes follow a Kolmogorov `k^{-5/3}` spectrum between the cut-off
//! wavenumber `k_c = 2 pi / L` and the smallest simulated scale
//! `k_eta = 2 pi / eta`. Mode frequencies follow the KSIM rule
//! `omega_n = sqrt(k_n^3 E(k_n) / alpha)`.

use crate::math::{derive_seed, unit_from_bits, Vec2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

const ANGLE_STREAM: u64 = 0x4b53_414e_474c_4553;

#[derive(Debug, Error, PartialEq)]
pub enum KsError {
    #[error("invalid KS parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsParams {
    #[serde(rename = "correlation_length_m")]
    pub correlation_length: f64,
    #[serde(rename = "eta_m")]
    pub eta: f64,
    pub n_modes: usize,
    #[serde(rename = "large_scale_variance_m2ps2")]
    pub large_scale_variance: f64,
    #[serde(default = "default_alpha")]
    pub kolmogorov_const: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    1.5
}

impl Default for KsParams {
    fn default() -> Self {
        Self {
            correlation_length: 200.0,
            eta: 0.001,
            n_modes: 100,
            large_scale_variance: 0.01,
            kolmogorov_const: 1.5,
            seed: 0,
        }
    }
}

impl KsParams {
    pub fn validate(&self) -> Result<(), KsError> {
        if !(self.eta > 0.0 && self.eta < self.correlation_length) {
            return Err(KsError::InvalidParams("need 0 < eta < correlation length".into()));
        }
        if self.n_modes < 2 {
            return Err(KsError::InvalidParams("need at least two modes".into()));
        }
        if !(self.large_scale_variance >= 0.0) {
            return Err(KsError::InvalidParams("variance must be non-negative".into()));
        }
        if !(self.kolmogorov_const > 0.0) {
            return Err(KsError::InvalidParams("Kolmogorov constant must be positive".into()));
        }
        Ok(())
    }

    /// Cut-off wavenumber `2 pi / L`.
    pub fn k_c(&self) -> f64 {
        2.0 * PI / self.correlation_length
    }

    /// Largest simulated wavenumber `2 pi / eta`.
    pub fn k_eta(&self) -> f64 {
        2.0 * PI / self.eta
    }
}

/// One Fourier mode; `a` and `b` are perpendicular to `k` by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsMode {
    pub wavenumber: f64,
    pub delta_k: f64,
    pub omega: f64,
    pub amplitude_a: f64,
    pub amplitude_b: f64,
    pub angle: f64,
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub k: [f64; 2],
}

/// A frozen KS realisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsField {
    pub params: KsParams,
    /// Dissipation rate in m^2/s^3.
    pub epsilon: f64,
    pub modes: Vec<KsMode>,
}

/// Kolmogorov spectrum `alpha eps^{2/3} k^{-5/3}` on `[k_c, k_eta]`, zero elsewhere.
pub fn kolmogorov_spectrum(k: f64, eps: f64, k_c: f64, k_eta: f64, alpha: f64) -> f64 {
    if k < k_c || k > k_eta {
        return 0.0;
    }
    alpha * eps.powf(2.0 / 3.0) * k.powf(-5.0 / 3.0)
}

/// Dissipation rate giving the large-scale variance
/// `eps = [var / alpha * (k_c^{-2/3} - k_eta^{-2/3})^{-1}]^{3/2}`.
pub fn dissipation_rate(variance: f64, k_c: f64, k_eta: f64, alpha: f64) -> f64 {
    let band = k_c.powf(-2.0 / 3.0) - k_eta.powf(-2.0 / 3.0);
    (variance / alpha / band).powf(1.5)
}

/// Geometric wavenumber ladder with exact end points.
fn wavenumbers(params: &KsParams) -> Vec<f64> {
    let n = params.n_modes;
    let (k_c, k_eta) = (params.k_c(), params.k_eta());
    let ratio = params.correlation_length / params.eta;
    (0..n)
        .map(|i| match i {
            0 => k_c,
            _ if i == n - 1 => k_eta,
            _ => k_c * ratio.powf(i as f64 / (n - 1) as f64),
        })
        .collect()
}

/// Midpoint-rule bandwidths; the end modes take one-sided halves.
fn bandwidths(k: &[f64]) -> Vec<f64> {
    let n = k.len();
    (0..n)
        .map(|i| {
            let lo = if i == 0 { k[0] } else { k[i - 1] };
            let hi = if i == n - 1 { k[n - 1] } else { k[i + 1] };
            (hi - lo) / 2.0
        })
        .collect()
}

/// Uniform angle on `[0, 2 pi)` keyed by `(seed, mode index)`.
fn mode_angle(seed: u64, index: usize) -> f64 {
    2.0 * PI * unit_from_bits(derive_seed(seed, ANGLE_STREAM, index as u64))
}

pub fn build_ks(params: &KsParams) -> Result<KsField, KsError> {
    params.validate()?;
    let (k_c, k_eta, alpha) = (params.k_c(), params.k_eta(), params.kolmogorov_const);
    let eps = dissipation_rate(params.large_scale_variance, k_c, k_eta, alpha);
    let ks = wavenumbers(params);
    let dks = bandwidths(&ks);
    let modes = ks
        .iter()
        .zip(&dks)
        .enumerate()
        .map(|(i, (&k, &dk))| {
            let energy = kolmogorov_spectrum(k, eps, k_c, k_eta, alpha);
            let amp = (energy * dk).sqrt();
            let phi = mode_angle(params.seed, i);
            let (s, c) = phi.sin_cos();
            let a = [amp * c, -amp * s];
            let b = [-amp * c, amp * s];
            let kv = [k * s, k * c];
            let scale = amp * k;
            for v in [a, b] {
                let dot = v[0] * kv[0] + v[1] * kv[1];
                assert!(dot.abs() <= 4.0 * f64::EPSILON * scale, "mode {i} is not transverse");
            }
            KsMode {
                wavenumber: k,
                delta_k: dk,
                omega: (k.powi(3) / alpha * energy).sqrt(),
                amplitude_a: amp,
                amplitude_b: amp,
                angle: phi,
                a,
                b,
                k: kv,
            }
        })
        .collect();
    Ok(KsField { params: params.clone(), epsilon: eps, modes })
}

impl KsField {
    /// Velocity `sum a_n cos(k_n . x + w_n t) + b_n sin(k_n . x + w_n t)`.
    pub fn velocity(&self, p: Vec2, t: f64) -> Vec2 {
        let mut u = Vec2::zeros();
        for m in &self.modes {
            let phase = m.k[0] * p.x + m.k[1] * p.y + m.omega * t;
            let (s, c) = phase.sin_cos();
            u.x += m.a[0] * c + m.b[0] * s;
            u.y += m.a[1] * c + m.b[1] * s;
        }
        u
    }

    /// Discrete spectral energy `sum (a_n^2 + b_n^2) / 2`.
    pub fn modal_energy(&self) -> f64 {
        self.modes.iter().map(|m| 0.5 * (m.amplitude_a.powi(2) + m.amplitude_b.powi(2))).sum()
    }

    /// A field with no modes; evaluates to zero everywhere.
    pub fn still() -> Self {
        Self { params: KsParams { large_scale_variance: 0.0, ..KsParams::default() }, epsilon: 0.0, modes: Vec::new() }
    }
}

pub fn ks_velocity(field: &KsField, p: Vec2, t: f64) -> Vec2 {
    field.velocity(p, t)
}
