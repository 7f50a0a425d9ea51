use super::{DomainPolicy, FlowError};
use crate::math::Vec2;
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

// Fractional indices this close to an integer are treated as sitting on the node.
const SNAP: f64 = 1e-10;

/// Node layout and time knots of a grid map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    #[serde(rename = "origin_m")]
    pub origin: [f64; 2],
    #[serde(rename = "dx_m")]
    pub dx: f64,
    #[serde(rename = "dy_m")]
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(rename = "t0_s")]
    pub t0: f64,
    #[serde(rename = "dt_s")]
    pub dt: f64,
    pub nt: usize,
}

impl GridGeometry {
    pub fn validate(&self) -> Result<(), FlowError> {
        let finite = self.origin.iter().chain([self.dx, self.dy, self.t0, self.dt].iter()).all(|v| v.is_finite());
        if !finite {
            return Err(FlowError::InvalidGrid("non-finite geometry".into()));
        }
        if !(self.dx > 0.0 && self.dy > 0.0 && self.dt > 0.0) {
            return Err(FlowError::InvalidGrid("dx, dy and dt must be positive".into()));
        }
        if self.nx < 2 || self.ny < 2 || self.nt < 1 {
            return Err(FlowError::InvalidGrid("need nx, ny >= 2 and nt >= 1".into()));
        }
        Ok(())
    }

    pub fn node(&self, ix: usize, iy: usize) -> Vec2 {
        Vec2::new(self.origin[0] + ix as f64 * self.dx, self.origin[1] + iy as f64 * self.dy)
    }

    pub fn layer_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn len(&self) -> usize {
        self.layer_len() * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of a value in the row-major (time, y, x) layout.
    pub fn index(&self, it: usize, iy: usize, ix: usize) -> usize {
        (it * self.ny + iy) * self.nx + ix
    }
}

/// Time-tagged current velocity map series.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFlowMap {
    pub geometry: GridGeometry,
    u: Vec<f64>,
    v: Vec<f64>,
}

struct Stencil {
    ix: usize,
    iy: usize,
    wx: f64,
    wy: f64,
    it: usize,
    wt: f64,
}

fn snap(f: f64) -> f64 {
    let r = f.round();
    if (f - r).abs() < SNAP {
        r
    } else {
        f
    }
}

impl GridFlowMap {
    pub fn new(geometry: GridGeometry, u: Vec<f64>, v: Vec<f64>) -> Result<Self, FlowError> {
        geometry.validate()?;
        let expected = geometry.len();
        for layer in [&u, &v] {
            if layer.len() != expected {
                return Err(FlowError::DimensionMismatch { expected, found: layer.len() });
            }
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(FlowError::InvalidGrid("non-finite velocity value".into()));
        }
        Ok(Self { geometry, u, v })
    }

    /// Grid whose every layer holds the same uniform velocity.
    pub fn uniform(geometry: GridGeometry, velocity: Vec2) -> Result<Self, FlowError> {
        let n = geometry.len();
        Self::new(geometry, vec![velocity.x; n], vec![velocity.y; n])
    }

    pub fn u_values(&self) -> &[f64] {
        &self.u
    }

    pub fn v_values(&self) -> &[f64] {
        &self.v
    }

    pub fn node_value(&self, it: usize, iy: usize, ix: usize) -> Vec2 {
        let i = self.geometry.index(it, iy, ix);
        Vec2::new(self.u[i], self.v[i])
    }

    /// Spatial extent `[x_min, x_max] x [y_min, y_max]`.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let g = &self.geometry;
        (
            [g.origin[0], g.origin[0] + (g.nx - 1) as f64 * g.dx],
            [g.origin[1], g.origin[1] + (g.ny - 1) as f64 * g.dy],
        )
    }

    fn stencil(&self, p: Vec2, t: f64, policy: DomainPolicy) -> Result<Stencil, FlowError> {
        let g = &self.geometry;
        let fx = snap((p.x - g.origin[0]) / g.dx);
        let fy = snap((p.y - g.origin[1]) / g.dy);
        let ft = if g.nt > 1 { snap((t - g.t0) / g.dt) } else { 0.0 };
        let (mx, my, mt) = ((g.nx - 1) as f64, (g.ny - 1) as f64, (g.nt - 1) as f64);
        let inside = (0.0..=mx).contains(&fx) && (0.0..=my).contains(&fy) && (0.0..=mt).contains(&ft);
        if !inside && policy == DomainPolicy::Error {
            return Err(FlowError::OutOfDomain { x: p.x, y: p.y, t });
        }
        if !(fx.is_finite() && fy.is_finite() && ft.is_finite()) {
            return Err(FlowError::OutOfDomain { x: p.x, y: p.y, t });
        }
        let fx = fx.clamp(0.0, mx);
        let fy = fy.clamp(0.0, my);
        let ft = ft.clamp(0.0, mt);
        let ix = (fx.floor() as usize).min(g.nx - 2);
        let iy = (fy.floor() as usize).min(g.ny - 2);
        let it = if g.nt > 1 { (ft.floor() as usize).min(g.nt - 2) } else { 0 };
        Ok(Stencil { ix, iy, wx: fx - ix as f64, wy: fy - iy as f64, it, wt: ft - it as f64 })
    }

    fn bilinear(&self, layer: usize, s: &Stencil) -> Vec2 {
        let a = self.node_value(layer, s.iy, s.ix);
        let b = self.node_value(layer, s.iy, s.ix + 1);
        let c = self.node_value(layer, s.iy + 1, s.ix);
        let d = self.node_value(layer, s.iy + 1, s.ix + 1);
        let lower = a * (1.0 - s.wx) + b * s.wx;
        let upper = c * (1.0 - s.wx) + d * s.wx;
        lower * (1.0 - s.wy) + upper * s.wy
    }

    fn cell_gradient_layer(&self, layer: usize, s: &Stencil) -> Matrix2<f64> {
        let g = &self.geometry;
        let a = self.node_value(layer, s.iy, s.ix);
        let b = self.node_value(layer, s.iy, s.ix + 1);
        let c = self.node_value(layer, s.iy + 1, s.ix);
        let d = self.node_value(layer, s.iy + 1, s.ix + 1);
        let ddx = ((b - a) * (1.0 - s.wy) + (d - c) * s.wy) / g.dx;
        let ddy = ((c - a) * (1.0 - s.wx) + (d - b) * s.wx) / g.dy;
        Matrix2::new(ddx.x, ddy.x, ddx.y, ddy.y)
    }

    fn sample(&self, s: &Stencil) -> Vec2 {
        if self.geometry.nt == 1 {
            return self.bilinear(0, s);
        }
        self.bilinear(s.it, s) * (1.0 - s.wt) + self.bilinear(s.it + 1, s) * s.wt
    }

    pub(crate) fn sample_clamped(&self, p: Vec2, t: f64) -> Vec2 {
        match self.stencil(p, t, DomainPolicy::Clamp) {
            Ok(s) => self.sample(&s),
            // Non-finite queries: there is no meaningful edge to clamp to.
            Err(_) => Vec2::new(f64::NAN, f64::NAN),
        }
    }

    /// Analytic gradient of the interpolant inside the cell containing `p`.
    pub fn cell_gradient(&self, p: Vec2, t: f64) -> Matrix2<f64> {
        let s = match self.stencil(p, t, DomainPolicy::Clamp) {
            Ok(s) => s,
            Err(_) => return Matrix2::from_element(f64::NAN),
        };
        if self.geometry.nt == 1 {
            return self.cell_gradient_layer(0, &s);
        }
        self.cell_gradient_layer(s.it, &s) * (1.0 - s.wt) + self.cell_gradient_layer(s.it + 1, &s) * s.wt
    }
}

/// Bilinear-in-space, linear-in-time interpolation of a grid map.
pub fn grid_sample(grid: &GridFlowMap, p: Vec2, t: f64, policy: DomainPolicy) -> Result<Vec2, FlowError> {
    let s = grid.stencil(p, t, policy)?;
    Ok(grid.sample(&s))
}
