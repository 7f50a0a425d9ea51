//! System model of the conditionally linear substate: nonlinear propagation,
//! measurement prediction and their Jacobians.

use crate::math::{rot, rot_dpsi, wrap_angle, Vec2};
use crate::vehicle_sim::{AdcpParams, ImuParams};
use nalgebra::{Matrix2, SMatrix, SVector};
use serde::{Deserialize, Serialize};

pub const NX: usize = 10;
pub type KfVec = SVector<f64, NX>;
pub type KfMat = SMatrix<f64, NX, NX>;
pub type HMat = SMatrix<f64, 2, NX>;

/// Offsets of each block inside the substate vector.
pub mod idx {
    pub const V: usize = 0;
    pub const PSI: usize = 2;
    pub const BA: usize = 3;
    pub const BR: usize = 5;
    pub const BZ: usize = 6;
    pub const UC: usize = 8;
}

/// Process and observation noise plus the time constants of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Diagonal of the driving-noise covariance, in substate order.
    pub q_diag: [f64; NX],
    /// ADCP observation covariance.
    pub r: Matrix2<f64>,
    pub tau_a: f64,
    pub tau_r: f64,
    pub tau_z: f64,
    /// Turbulence correlation length.
    pub l_c: f64,
    /// Smallest turbulence wavenumber.
    pub k_min: f64,
    pub sigma_u: f64,
}

impl NoiseConfig {
    /// Driving variances chosen so that each step of `G Q G^T` adds
    /// `sigma_white^2 f dt^2` to the IMU channels, `2 sigma_b^2 dt / tau` to
    /// the biases and `2 k_min sigma_u^2 dt / L_c` to the turbulence.
    pub fn from_sensors(imu: &ImuParams, adcp: &AdcpParams, l_c: f64, k_min: f64, sigma_u: f64) -> Self {
        let dt = 1.0 / imu.rate_hz;
        let f = imu.rate_hz;
        let gm = |sd: f64, tau: f64| 2.0 * sd * sd / (tau * dt);
        let qa = imu.accel_white_sd.powi(2) * f;
        let qr = imu.gyro_white_sd.powi(2) * f;
        let qba = gm(imu.accel_bias_sd, imu.accel_tau);
        let qbr = gm(imu.gyro_bias_sd, imu.gyro_tau);
        let qbz = gm(adcp.bias_sd, adcp.tau);
        let qu = 2.0 * k_min * sigma_u * sigma_u / (l_c * dt);
        Self {
            q_diag: [qa, qa, qr, qba, qba, qbr, qbz, qbz, qu, qu],
            r: Matrix2::identity() * adcp.white_sd.powi(2),
            tau_a: imu.accel_tau,
            tau_r: imu.gyro_tau,
            tau_z: adcp.tau,
            l_c,
            k_min,
            sigma_u,
        }
    }

    /// Per-step `G Q G^T`; only the velocity block depends on heading.
    pub fn gqg(&self, psi: f64, dt: f64) -> KfMat {
        let q = &self.q_diag;
        let rm = rot(psi);
        let vv = rm * Matrix2::new(q[0], 0.0, 0.0, q[1]) * rm.transpose() * (dt * dt);
        let mut out = KfMat::zeros();
        out.fixed_view_mut::<2, 2>(0, 0).copy_from(&vv);
        for i in 2..NX {
            out[(i, i)] = q[i] * dt * dt;
        }
        out
    }
}

/// `u_c v^T / |v|`, the derivative of `|v| u_c` with respect to `v`; zero at rest.
pub fn turbulence_speed_jacobian(x: &KfVec) -> Matrix2<f64> {
    let v = Vec2::new(x[0], x[1]);
    let s = v.norm();
    if s == 0.0 {
        return Matrix2::zeros();
    }
    Vec2::new(x[8], x[9]) * v.transpose() / s
}

/// Nonlinear propagation of the substate with one IMU sample.
pub fn propagate_mean(x: &KfVec, accel: Vec2, rate: f64, dt: f64, noise: &NoiseConfig) -> KfVec {
    let v = Vec2::new(x[0], x[1]);
    let psi = x[idx::PSI];
    let ba = Vec2::new(x[3], x[4]);
    let dv = rot(psi) * (accel - ba) * dt;
    let mut out = *x;
    out[0] += dv.x;
    out[1] += dv.y;
    out[idx::PSI] = wrap_angle(psi + (rate - x[idx::BR]) * dt);
    let (ka, kr, kz) = (1.0 - dt / noise.tau_a, 1.0 - dt / noise.tau_r, 1.0 - dt / noise.tau_z);
    out[3] *= ka;
    out[4] *= ka;
    out[5] *= kr;
    out[6] *= kz;
    out[7] *= kz;
    let decay = 1.0 - v.norm() * dt / noise.l_c;
    out[8] *= decay;
    out[9] *= decay;
    out
}

/// The nonzero part `E = F - I` of the transition Jacobian.
#[derive(Clone, Copy, Debug)]
pub struct Transition {
    f12: Vec2,
    rdt: Matrix2<f64>,
    dt: f64,
    da: f64,
    dr: f64,
    dz: f64,
    f61: Matrix2<f64>,
    e66: f64,
}

impl Transition {
    pub fn new(x: &KfVec, accel: Vec2, dt: f64, noise: &NoiseConfig) -> Self {
        let psi = x[idx::PSI];
        let ba = Vec2::new(x[3], x[4]);
        Self {
            f12: rot_dpsi(psi) * (accel - ba) * dt,
            rdt: rot(psi) * dt,
            dt,
            da: -dt / noise.tau_a,
            dr: -dt / noise.tau_r,
            dz: -dt / noise.tau_z,
            f61: turbulence_speed_jacobian(x) * (-dt / noise.l_c),
            e66: -Vec2::new(x[0], x[1]).norm() * dt / noise.l_c,
        }
    }

    /// Dense `F`.
    pub fn matrix(&self) -> KfMat {
        self.apply_left(&KfMat::identity())
    }

    /// `F M` using only the nonzero blocks.
    pub fn apply_left(&self, m: &KfMat) -> KfMat {
        let mut out = *m;
        for c in 0..NX {
            let col = m.column(c);
            let (p, ba0, ba1) = (col[idx::PSI], col[3], col[4]);
            out[(0, c)] += self.f12.x * p - self.rdt[(0, 0)] * ba0 - self.rdt[(0, 1)] * ba1;
            out[(1, c)] += self.f12.y * p - self.rdt[(1, 0)] * ba0 - self.rdt[(1, 1)] * ba1;
            out[(2, c)] -= self.dt * col[idx::BR];
            out[(3, c)] += self.da * ba0;
            out[(4, c)] += self.da * ba1;
            out[(5, c)] += self.dr * col[5];
            out[(6, c)] += self.dz * col[6];
            out[(7, c)] += self.dz * col[7];
            out[(8, c)] += self.f61[(0, 0)] * col[0] + self.f61[(0, 1)] * col[1] + self.e66 * col[8];
            out[(9, c)] += self.f61[(1, 0)] * col[0] + self.f61[(1, 1)] * col[1] + self.e66 * col[9];
        }
        out
    }

    /// `F P F^T`, symmetrised.
    pub fn congruence(&self, p: &KfMat) -> KfMat {
        let fp = self.apply_left(p);
        let out = self.apply_left(&fp.transpose());
        (out + out.transpose()) * 0.5
    }
}

/// Dense noise-input matrix `G = diag(-R dt, -dt, dt I_7)`.
pub fn noise_input(psi: f64, dt: f64) -> KfMat {
    let mut g = KfMat::identity() * dt;
    g.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-rot(psi) * dt));
    g[(2, 2)] = -dt;
    g
}

/// Predicted relative flow `R^T (Phi + u_c - v) + b_z`.
pub fn measurement(x: &KfVec, phi: Vec2) -> Vec2 {
    let rel = phi + Vec2::new(x[8], x[9]) - Vec2::new(x[0], x[1]);
    rot(x[idx::PSI]).transpose() * rel + Vec2::new(x[6], x[7])
}

/// Measurement Jacobian with respect to the substate.
pub fn measurement_jacobian(x: &KfVec, phi: Vec2) -> HMat {
    let psi = x[idx::PSI];
    let rt = rot(psi).transpose();
    let rel = phi + Vec2::new(x[8], x[9]) - Vec2::new(x[0], x[1]);
    let dpsi = rot_dpsi(psi).transpose() * rel;
    let mut h = HMat::zeros();
    h.fixed_view_mut::<2, 2>(0, idx::V).copy_from(&(-rt));
    h[(0, idx::PSI)] = dpsi.x;
    h[(1, idx::PSI)] = dpsi.y;
    h.fixed_view_mut::<2, 2>(0, idx::BZ).copy_from(&Matrix2::identity());
    h.fixed_view_mut::<2, 2>(0, idx::UC).copy_from(&rt);
    h
}
