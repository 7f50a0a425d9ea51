//! Parametric Cramér-Rao bound of the reduced `[p, v, psi]` system, evaluated
//! along the true trajectory.

use crate::flowfields::FlowMap;
use crate::math::{rot, rot_dpsi};
use crate::vehicle_sim::TruthRecord;
use nalgebra::{Matrix2, Matrix3, SMatrix};
use thiserror::Error;

pub type Mat5 = SMatrix<f64, 5, 5>;
pub type G5 = SMatrix<f64, 5, 3>;
pub type H5 = SMatrix<f64, 2, 5>;

#[derive(Debug, Error, PartialEq)]
pub enum CrlbError {
    #[error("innovation covariance is singular at t = {0}")]
    SingularInnovation(f64),
    #[error("empty trajectory")]
    Empty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedJacobians {
    pub f: Mat5,
    pub g: G5,
    pub h: H5,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrlbSequence {
    pub times: Vec<f64>,
    pub p_pred: Vec<Mat5>,
    pub p_filt: Vec<Mat5>,
}

impl CrlbSequence {
    /// Square roots of the filtering-bound diagonal at step `k`.
    pub fn sd(&self, k: usize) -> [f64; 5] {
        let p = &self.p_filt[k];
        [0, 1, 2, 3, 4].map(|i| p[(i, i)].max(0.0).sqrt())
    }

    pub fn position_sd(&self, k: usize) -> f64 {
        let p = &self.p_filt[k];
        (p[(0, 0)] + p[(1, 1)]).max(0.0).sqrt()
    }

    pub fn velocity_sd(&self, k: usize) -> f64 {
        let p = &self.p_filt[k];
        (p[(2, 2)] + p[(3, 3)]).max(0.0).sqrt()
    }
}

pub fn reduced_jacobians(rec: &TruthRecord, map: &FlowMap, dt: f64) -> ReducedJacobians {
    let r = rot(rec.psi);
    let rt = r.transpose();
    let mut f = Mat5::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    let coupling = rot_dpsi(rec.psi) * rec.a_body * dt;
    f[(2, 4)] = coupling.x;
    f[(3, 4)] = coupling.y;

    let mut g = G5::zeros();
    g.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-r * dt));
    g[(4, 2)] = -dt;

    let phi = map.velocity(rec.p, rec.t);
    let grad = map.gradient(rec.p, rec.t);
    let mut h = H5::zeros();
    h.fixed_view_mut::<2, 2>(0, 0).copy_from(&(rt * grad));
    h.fixed_view_mut::<2, 2>(0, 2).copy_from(&(-rt));
    let dpsi = rot_dpsi(rec.psi).transpose() * (phi - rec.v);
    h[(0, 4)] = dpsi.x;
    h[(1, 4)] = dpsi.y;
    ReducedJacobians { f, g, h }
}

/// Closed-form inverse of a 2x2 matrix.
pub fn inverse2(s: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some(Matrix2::new(s[(1, 1)] / det, -s[(0, 1)] / det, -s[(1, 0)] / det, s[(0, 0)] / det))
}

fn symmetrize(p: &Mat5) -> Mat5 {
    (p + p.transpose()) * 0.5
}

/// One filtering step `P - P H^T (H P H^T + R)^-1 H P`.
pub fn information_update(p: &Mat5, h: &H5, r: &Matrix2<f64>) -> Option<Mat5> {
    let pht = p * h.transpose();
    let s = h * pht + r;
    let s_inv = inverse2(&s)?;
    Some(symmetrize(&(p - pht * s_inv * pht.transpose())))
}

/// Bound recursion over every truth record; measurement updates only at
/// ADCP ticks (every `adcp_period` seconds, starting at the first record).
pub fn crlb_sequence(
    truth: &[TruthRecord],
    map: &FlowMap,
    q: &Matrix3<f64>,
    r: &Matrix2<f64>,
    p0: &Mat5,
    adcp_period: f64,
) -> Result<CrlbSequence, CrlbError> {
    if truth.is_empty() {
        return Err(CrlbError::Empty);
    }
    let dt = if truth.len() > 1 { truth[1].t - truth[0].t } else { adcp_period };
    let stride = ((adcp_period / dt).round() as usize).max(1);
    let n = truth.len();
    let mut out = CrlbSequence { times: Vec::with_capacity(n), p_pred: Vec::with_capacity(n), p_filt: Vec::with_capacity(n) };
    let mut pred = *p0;
    for (k, rec) in truth.iter().enumerate() {
        let jac = reduced_jacobians(rec, map, dt);
        let filt = if k % stride == 0 {
            information_update(&pred, &jac.h, r).ok_or(CrlbError::SingularInnovation(rec.t))?
        } else {
            pred
        };
        out.times.push(rec.t);
        out.p_pred.push(pred);
        out.p_filt.push(filt);
        pred = symmetrize(&(jac.f * filt * jac.f.transpose() + jac.g * q * jac.g.transpose()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowfields::{DoubleGyreParams, GridFlowMap, GridGeometry};
    use crate::math::{wrap_angle, Vec2};
    use crate::vehicle_sim::{lawnmower_trajectory, LawnmowerSpec};
    use rand::Rng;

    fn linear_map(g: f64) -> FlowMap {
        // u = g y, v = g x sampled on a coarse grid; bilinear is exact for it.
        let geom = GridGeometry { origin: [-50_000.0, -50_000.0], dx: 5000.0, dy: 5000.0, nx: 21, ny: 21, t0: 0.0, dt: 1e6, nt: 1 };
        let mut u = Vec::new();
        let mut v = Vec::new();
        for iy in 0..geom.ny {
            for ix in 0..geom.nx {
                let p = geom.node(ix, iy);
                u.push(g * p.y);
                v.push(g * p.x);
            }
        }
        FlowMap::Grid(GridFlowMap::new(geom, u, v).unwrap())
    }

    fn uniform_map(vel: Vec2) -> FlowMap {
        let geom = GridGeometry { origin: [-1e6, -1e6], dx: 1e6, dy: 1e6, nx: 3, ny: 3, t0: 0.0, dt: 1e6, nt: 1 };
        FlowMap::Grid(GridFlowMap::uniform(geom, vel).unwrap())
    }

    fn short_truth() -> Vec<TruthRecord> {
        lawnmower_trajectory(&LawnmowerSpec { duration: 1800.0, ..LawnmowerSpec::default() }).unwrap()
    }

    fn p0() -> Mat5 {
        Mat5::from_diagonal(&SMatrix::<f64, 5, 1>::new(1e6, 1e6, 1e-6, 1e-6, 1e-8))
    }

    fn q() -> Matrix3<f64> {
        Matrix3::from_diagonal(&nalgebra::Vector3::new(1.9e-5, 1.9e-5, 3.7e-8))
    }

    #[test]
    fn zero_acceleration_decouples_heading() {
        let rec = TruthRecord { t: 0.0, p: Vec2::zeros(), v: Vec2::new(1.0, 0.0), psi: 0.4, a_body: Vec2::zeros(), r: 0.0 };
        let j = reduced_jacobians(&rec, &linear_map(1e-4), 0.1);
        assert_eq!(j.f[(2, 4)], 0.0);
        assert_eq!(j.f[(3, 4)], 0.0);
    }

    #[test]
    fn uniform_matching_flow_leaves_only_velocity() {
        let v = Vec2::new(0.8, -0.3);
        let rec = TruthRecord { t: 0.0, p: Vec2::new(10.0, 20.0), v, psi: 1.1, a_body: Vec2::new(0.1, 0.0), r: 0.0 };
        let j = reduced_jacobians(&rec, &uniform_map(v), 0.1);
        for c in [0, 1, 4] {
            assert!(j.h.column(c).amax() < 1e-15);
        }
        assert!((j.h.fixed_view::<2, 2>(0, 2) + rot(1.1).transpose()).amax() < 1e-15);
    }

    fn predicted_measurement(p: Vec2, v: Vec2, psi: f64, map: &FlowMap, t: f64) -> Vec2 {
        rot(psi).transpose() * (map.velocity(p, t) - v)
    }

    #[test]
    fn reduced_jacobians_match_differences() {
        let map = FlowMap::DoubleGyre(DoubleGyreParams::default());
        let mut rng = crate::math::seeded_rng(6);
        let dt = 0.1;
        for _ in 0..50 {
            let rec = TruthRecord {
                t: rng.random_range(0.0..20_000.0),
                p: Vec2::new(rng.random_range(1000.0..19_000.0), rng.random_range(-4500.0..4500.0)),
                v: Vec2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)),
                psi: rng.random_range(-3.0..3.0),
                a_body: Vec2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)),
                r: 0.0,
            };
            let j = reduced_jacobians(&rec, &map, dt);
            let state = [rec.p.x, rec.p.y, rec.v.x, rec.v.y, rec.psi];
            let step = |s: [f64; 5]| {
                let v = Vec2::new(s[2], s[3]);
                let dv = rot(s[4]) * rec.a_body * dt;
                [s[0] + s[2] * dt, s[1] + s[3] * dt, v.x + dv.x, v.y + dv.y, s[4]]
            };
            let meas = |s: [f64; 5]| predicted_measurement(Vec2::new(s[0], s[1]), Vec2::new(s[2], s[3]), s[4], &map, rec.t);
            for c in 0..5 {
                let h = if c < 2 { 1.0 } else { 1e-6 };
                let mut sp = state;
                let mut sm = state;
                sp[c] += h;
                sm[c] -= h;
                let (fp, fm) = (step(sp), step(sm));
                let fscale = j.f.column(c).amax();
                for r in 0..5 {
                    let d = (fp[r] - fm[r]) / (2.0 * h);
                    assert!((d - j.f[(r, c)]).abs() <= 1e-4 * fscale, "F[{r},{c}]");
                }
                let d = (meas(sp) - meas(sm)) / (2.0 * h);
                let hscale = j.h.column(c).amax().max(1e-12);
                for r in 0..2 {
                    assert!((d[r] - j.h[(r, c)]).abs() <= 1e-4 * hscale, "H[{r},{c}] {} vs {}", d[r], j.h[(r, c)]);
                }
            }
            // Noise enters through the corrupted acceleration and yaw rate.
            let noisy = |w: [f64; 3]| {
                let dv = rot(rec.psi) * (rec.a_body - Vec2::new(w[0], w[1])) * dt;
                [rec.p.x, rec.p.y, rec.v.x + dv.x, rec.v.y + dv.y, wrap_angle(rec.psi - w[2] * dt)]
            };
            for c in 0..3 {
                let h = 1e-6;
                let mut wp = [0.0; 3];
                let mut wm = [0.0; 3];
                wp[c] = h;
                wm[c] = -h;
                let (a, b) = (noisy(wp), noisy(wm));
                for r in 0..5 {
                    let d = (a[r] - b[r]) / (2.0 * h);
                    assert!((d - j.g[(r, c)]).abs() <= 1e-4 * dt, "G[{r},{c}]");
                }
            }
        }
    }

    #[test]
    fn uninformative_measurements() {
        let truth = short_truth();
        let map = FlowMap::DoubleGyre(DoubleGyreParams::default());
        let seq = crlb_sequence(&truth, &map, &q(), &(Matrix2::identity() * 5.2e-3 * 1e9), &p0(), 1.0).unwrap();
        for (a, b) in seq.p_pred.iter().zip(&seq.p_filt) {
            for i in 0..5 {
                assert!((a[(i, i)] - b[(i, i)]).abs() <= 1e-6 * a[(i, i)]);
            }
        }
    }

    #[test]
    fn uniform_flow_position_unobservable() {
        let truth = short_truth();
        let map = uniform_map(Vec2::new(0.2, 0.1));
        let seq = crlb_sequence(&truth, &map, &q(), &(Matrix2::identity() * 1e-4), &p0(), 1.0).unwrap();
        let n = truth.len() - 1;
        let pos = |k: usize| seq.p_filt[k][(0, 0)] + seq.p_filt[k][(1, 1)];
        assert!(pos(n) >= pos(n / 2) && pos(n / 2) >= 2e6);
        assert!(seq.velocity_sd(n) < 0.02);
    }

    /// Plain-array re-implementation of the same recursion.
    fn oracle(truth: &[TruthRecord], map: &FlowMap, q: &Matrix3<f64>, r: &Matrix2<f64>, p0: &Mat5) -> Vec<[[f64; 5]; 5]> {
        type M = [[f64; 5]; 5];
        let mul = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
            let (n, m, l) = (a.len(), b[0].len(), b.len());
            let mut c = vec![vec![0.0; m]; n];
            for j in 0..m {
                for k in 0..l {
                    for i in 0..n {
                        c[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            c
        };
        let tr = |a: &[Vec<f64>]| -> Vec<Vec<f64>> { (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect() };
        let from = |m: &dyn Fn(usize, usize) -> f64, n: usize, k: usize| -> Vec<Vec<f64>> { (0..n).map(|i| (0..k).map(|j| m(i, j)).collect()).collect() };
        let sym = |a: &[Vec<f64>]| -> Vec<Vec<f64>> { (0..5).map(|i| (0..5).map(|j| (a[i][j] + a[j][i]) * 0.5).collect()).collect() };
        let dt = truth[1].t - truth[0].t;
        let stride = (1.0 / dt).round() as usize;
        let qv = from(&|i, j| q[(i, j)], 3, 3);
        let rv = from(&|i, j| r[(i, j)], 2, 2);
        let mut pred = from(&|i, j| p0[(i, j)], 5, 5);
        let mut out: Vec<M> = Vec::new();
        for (k, rec) in truth.iter().enumerate() {
            let jac = reduced_jacobians(rec, map, dt);
            let f = from(&|i, j| jac.f[(i, j)], 5, 5);
            let g = from(&|i, j| jac.g[(i, j)], 5, 3);
            let h = from(&|i, j| jac.h[(i, j)], 2, 5);
            let filt = if k % stride == 0 {
                let pht = mul(&pred, &tr(&h));
                let hpht = mul(&h, &pht);
                let s: Vec<Vec<f64>> = (0..2).map(|i| (0..2).map(|j| hpht[i][j] + rv[i][j]).collect()).collect();
                let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
                let s_inv = vec![vec![s[1][1] / det, -s[0][1] / det], vec![-s[1][0] / det, s[0][0] / det]];
                let corr = mul(&mul(&pht, &s_inv), &tr(&pht));
                let diff: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| pred[i][j] - corr[i][j]).collect()).collect();
                sym(&diff)
            } else {
                pred.clone()
            };
            let mut m = [[0.0; 5]; 5];
            for i in 0..5 {
                for j in 0..5 {
                    m[i][j] = filt[i][j];
                }
            }
            out.push(m);
            let a = mul(&mul(&f, &filt), &tr(&f));
            let b = mul(&mul(&g, &qv), &tr(&g));
            let sum: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| a[i][j] + b[i][j]).collect()).collect();
            pred = sym(&sum);
        }
        out
    }

    #[test]
    fn independent_recursion_is_bit_equal() {
        let truth = short_truth();
        let map = FlowMap::DoubleGyre(DoubleGyreParams::default());
        let r = Matrix2::identity() * 1e-4;
        let seq = crlb_sequence(&truth, &map, &q(), &r, &p0(), 1.0).unwrap();
        let reference = oracle(&truth, &map, &q(), &r, &p0());
        for (k, m) in reference.iter().enumerate() {
            for i in 0..5 {
                for j in 0..5 {
                    assert_eq!(seq.p_filt[k][(i, j)].to_bits(), m[i][j].to_bits(), "step {k} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn filtering_never_exceeds_prediction() {
        let truth = short_truth();
        let map = FlowMap::DoubleGyre(DoubleGyreParams::default());
        let seq = crlb_sequence(&truth, &map, &q(), &(Matrix2::identity() * 1e-4), &p0(), 1.0).unwrap();
        for (a, b) in seq.p_pred.iter().zip(&seq.p_filt).step_by(7) {
            let scale = a.amax();
            assert!(b.symmetric_eigenvalues().min() >= -1e-9 * scale);
            assert!((a - b).symmetric_eigenvalues().min() >= -1e-9 * scale);
        }
    }

    #[test]
    fn steeper_gradient_tightens_bound() {
        let truth = short_truth();
        let r = Matrix2::identity() * 1e-4;
        let terminal = |g: f64| {
            let seq = crlb_sequence(&truth, &linear_map(g), &q(), &r, &p0(), 1.0).unwrap();
            let p = seq.p_filt.last().unwrap();
            p[(0, 0)] + p[(1, 1)]
        };
        assert!(terminal(2e-4) < terminal(1e-4));
    }
}
