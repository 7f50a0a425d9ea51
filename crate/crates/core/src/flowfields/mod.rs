//! Background current references `Phi(p, t)`.
//!
//! Two analytic stream-function fields (the time-dependent double gyre and the
//! meandering jet) and a time-tagged gridded map with tri-linear
//! interpolation. All three are wrapped by [`FlowMap`], which is what the
//! simulator, the filter and the bound calculation query.

mod fgm;
mod grid;

pub use fgm::{load_fgm, read_fgm, save_fgm, write_fgm, FgmEncoding};
pub use grid::{grid_sample, GridFlowMap, GridGeometry};

use crate::math::Vec2;
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("query ({x:.3} m, {y:.3} m, {t:.3} s) is outside the map domain")]
    OutOfDomain { x: f64, y: f64, t: f64 },
    #[error("parse error at {location}: {msg}")]
    Parse { location: String, msg: String },
    #[error("dimension mismatch: expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What a grid query does when it falls outside the map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainPolicy {
    /// Flat extrapolation: the query is clamped to the nearest edge / knot.
    #[default]
    Clamp,
    Error,
}

/// Double-gyre stream function `A sin(pi f(x,t)) sin(pi y)` on the
/// nondimensional domain `[0,2] x [0,1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleGyreParams {
    pub amplitude: f64,
    pub epsilon: f64,
    #[serde(rename = "omega_rad_per_nd_time")]
    pub omega: f64,
    #[serde(rename = "length_scale_m")]
    pub length_scale: f64,
    #[serde(rename = "velocity_scale_mps")]
    pub velocity_scale: f64,
    /// Dimensional position of the nondimensional origin.
    #[serde(rename = "origin_m")]
    pub origin: [f64; 2],
}

impl Default for DoubleGyreParams {
    fn default() -> Self {
        Self {
            amplitude: 1.5 / PI,
            epsilon: 0.3,
            omega: 2.0 * PI,
            length_scale: 10_000.0,
            velocity_scale: 1.0,
            origin: [0.0, -5_000.0],
        }
    }
}

impl DoubleGyreParams {
    /// Advective time scale `L / V`.
    pub fn time_scale(&self) -> f64 {
        self.length_scale / self.velocity_scale
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.length_scale > 0.0 && self.velocity_scale > 0.0) {
            return Err(FlowError::InvalidGrid("double-gyre scales must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(FlowError::InvalidGrid("double-gyre epsilon must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Meandering-jet stream function
/// `1 - tanh[(y - B sin(k(x - ct))) / sqrt(1 + k^2 B^2 cos^2(k(x - ct)))]`
/// with `B(t) = A + eps cos(omega t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanderJetParams {
    pub mean_amplitude: f64,
    pub phase_speed: f64,
    pub wavenumber: f64,
    pub meander_magnitude: f64,
    pub meander_freq: f64,
    #[serde(rename = "length_scale_m")]
    pub length_scale: f64,
    #[serde(rename = "time_scale_s")]
    pub time_scale: f64,
    #[serde(rename = "velocity_scale_mps")]
    pub velocity_scale: f64,
    #[serde(rename = "origin_m")]
    pub origin: [f64; 2],
}

impl Default for MeanderJetParams {
    fn default() -> Self {
        Self {
            mean_amplitude: 1.2,
            phase_speed: 0.12,
            wavenumber: 2.0 * PI / 7.5,
            meander_magnitude: 0.3,
            meander_freq: 0.4,
            length_scale: 1_000.0,
            time_scale: 0.03 * 86_400.0,
            velocity_scale: 1.5,
            origin: [0.0, 0.0],
        }
    }
}

impl MeanderJetParams {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.length_scale > 0.0 && self.time_scale > 0.0 && self.velocity_scale > 0.0) {
            return Err(FlowError::InvalidGrid("meandering-jet scales must be positive".into()));
        }
        Ok(())
    }

    fn meander_amplitude(&self, t_nd: f64) -> f64 {
        self.mean_amplitude + self.meander_magnitude * (self.meander_freq * t_nd).cos()
    }
}

/// Nondimensional double-gyre velocity `(-d phi/dy, d phi/dx)`.
pub fn double_gyre_velocity_nd(p_nd: Vec2, t_nd: f64, params: &DoubleGyreParams) -> Vec2 {
    let s = (params.omega * t_nd).sin();
    let a = params.epsilon * s;
    let b = 1.0 - 2.0 * params.epsilon * s;
    let (x, y) = (p_nd.x, p_nd.y);
    let f = a * x * x + b * x;
    let pa = PI * params.amplitude;
    Vec2::new(
        -pa * (PI * f).sin() * (PI * y).cos(),
        pa * (PI * f).cos() * (2.0 * a * x + b) * (PI * y).sin(),
    )
}

/// Nondimensional meandering-jet stream function value.
pub fn meander_jet_stream_nd(p_nd: Vec2, t_nd: f64, params: &MeanderJetParams) -> f64 {
    let b = params.meander_amplitude(t_nd);
    let k = params.wavenumber;
    let theta = k * (p_nd.x - params.phase_speed * t_nd);
    let denom = (1.0 + k * k * b * b * theta.cos().powi(2)).sqrt();
    1.0 - ((p_nd.y - b * theta.sin()) / denom).tanh()
}

/// Nondimensional meandering-jet velocity `(-d phi/dy, d phi/dx)`.
pub fn meander_jet_velocity_nd(p_nd: Vec2, t_nd: f64, params: &MeanderJetParams) -> Vec2 {
    let b = params.meander_amplitude(t_nd);
    let k = params.wavenumber;
    let theta = k * (p_nd.x - params.phase_speed * t_nd);
    let (sin_t, cos_t) = theta.sin_cos();
    let d2 = 1.0 + k * k * b * b * cos_t * cos_t;
    let d = d2.sqrt();
    let num = p_nd.y - b * sin_t;
    let eta = num / d;
    let sech2 = 1.0 / eta.cosh().powi(2);
    // d(eta)/dx = N_x / D - N D_x / D^2, with D_x = -k^3 B^2 cos sin / D
    let num_x = -b * k * cos_t;
    let d_x = -k * k * k * b * b * cos_t * sin_t / d;
    let eta_x = num_x / d - num * d_x / d2;
    Vec2::new(sech2 / d, -sech2 * eta_x)
}

/// The navigation reference: one of the analytic fields or a grid map.
#[derive(Clone, Debug, PartialEq)]
pub enum FlowMap {
    DoubleGyre(DoubleGyreParams),
    MeanderJet(MeanderJetParams),
    Grid(GridFlowMap),
}

impl FlowMap {
    /// Velocity in m/s; grid queries are clamped to the map.
    pub fn velocity(&self, p: Vec2, t: f64) -> Vec2 {
        match self {
            FlowMap::DoubleGyre(params) => {
                let p_nd = (p - Vec2::from(params.origin)) / params.length_scale;
                double_gyre_velocity_nd(p_nd, t / params.time_scale(), params) * params.velocity_scale
            }
            FlowMap::MeanderJet(params) => {
                let p_nd = (p - Vec2::from(params.origin)) / params.length_scale;
                meander_jet_velocity_nd(p_nd, t / params.time_scale, params) * params.velocity_scale
            }
            FlowMap::Grid(grid) => grid.sample_clamped(p, t),
        }
    }

    /// Default finite-difference step for [`flow_gradient`].
    pub fn default_gradient_step(&self) -> f64 {
        match self {
            FlowMap::DoubleGyre(p) => 1e-4 * p.length_scale,
            FlowMap::MeanderJet(p) => 1e-4 * p.length_scale,
            FlowMap::Grid(g) => 0.01 * g.geometry.dx.min(g.geometry.dy),
        }
    }

    /// Spatial Jacobian used by the bound calculation: exact cell gradient for
    /// grids, central differences with the default step otherwise.
    pub fn gradient(&self, p: Vec2, t: f64) -> Matrix2<f64> {
        match self {
            FlowMap::Grid(g) => g.cell_gradient(p, t),
            _ => flow_gradient_unchecked(self, p, t, self.default_gradient_step()),
        }
    }
}

/// `Phi(p, t)` with an explicit out-of-domain policy for grid maps.
pub fn flow_velocity(map: &FlowMap, p: Vec2, t: f64, policy: DomainPolicy) -> Result<Vec2, FlowError> {
    match map {
        FlowMap::Grid(g) => grid_sample(g, p, t, policy),
        _ => Ok(map.velocity(p, t)),
    }
}

/// Central-difference Jacobian `[du/dx du/dy; dv/dx dv/dy]`.
pub fn flow_gradient(
    map: &FlowMap,
    p: Vec2,
    t: f64,
    h: f64,
    policy: DomainPolicy,
) -> Result<Matrix2<f64>, FlowError> {
    let ex = Vec2::new(h, 0.0);
    let ey = Vec2::new(0.0, h);
    let dx = (flow_velocity(map, p + ex, t, policy)? - flow_velocity(map, p - ex, t, policy)?) / (2.0 * h);
    let dy = (flow_velocity(map, p + ey, t, policy)? - flow_velocity(map, p - ey, t, policy)?) / (2.0 * h);
    Ok(Matrix2::new(dx.x, dy.x, dx.y, dy.y))
}

fn flow_gradient_unchecked(map: &FlowMap, p: Vec2, t: f64, h: f64) -> Matrix2<f64> {
    flow_gradient(map, p, t, h, DomainPolicy::Clamp).expect("clamped queries cannot fail")
}

/// Samples `map` at every node and knot of `geometry`.
pub fn rasterize(map: &FlowMap, geometry: &GridGeometry) -> Result<GridFlowMap, FlowError> {
    geometry.validate()?;
    let layer = geometry.nx * geometry.ny;
    let mut u = Vec::with_capacity(layer * geometry.nt);
    let mut v = Vec::with_capacity(layer * geometry.nt);
    for it in 0..geometry.nt {
        let t = geometry.t0 + it as f64 * geometry.dt;
        for iy in 0..geometry.ny {
            for ix in 0..geometry.nx {
                let w = map.velocity(geometry.node(ix, iy), t);
                u.push(w.x);
                v.push(w.y);
            }
        }
    }
    GridFlowMap::new(geometry.clone(), u, v)
}
