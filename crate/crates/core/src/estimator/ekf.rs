//! Current-aided EKF baseline with a deterministically propagated position.
//!
//! Written independently of the particle filter: a dense 12-state covariance
//! `[p, v, psi, b_a, b_r, b_z, u_c]`, explicitly assembled Jacobians, and a
//! Joseph-form update in which the position rows of the gain are held at zero,
//! so the position follows the velocity estimate and is never corrected
//! directly.

use super::model::NoiseConfig;
use crate::flowfields::FlowMap;
use crate::math::{wrap_angle, Vec2};
use crate::vehicle_sim::ImuSample;
use nalgebra::{DMatrix, DVector, Matrix2};

const N: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct CurrentAidedEkf {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub noise: NoiseConfig,
    pub t: f64,
}

fn rotation(psi: f64) -> [[f64; 2]; 2] {
    [[psi.cos(), -psi.sin()], [psi.sin(), psi.cos()]]
}

fn rotation_derivative(psi: f64) -> [[f64; 2]; 2] {
    [[-psi.sin(), -psi.cos()], [psi.cos(), -psi.sin()]]
}

impl CurrentAidedEkf {
    /// `kf_mean` and `kf_cov` use the 10-element substate order of the
    /// particle filter; the position starts exactly known.
    pub fn new(position: Vec2, kf_mean: &[f64], kf_cov: &DMatrix<f64>, noise: NoiseConfig) -> Self {
        let mut x = DVector::zeros(N);
        x[0] = position.x;
        x[1] = position.y;
        for i in 0..10 {
            x[2 + i] = kf_mean[i];
        }
        let mut p = DMatrix::zeros(N, N);
        p.view_mut((2, 2), (10, 10)).copy_from(kf_cov);
        Self { x, p, noise, t: 0.0 }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x[0], self.x[1])
    }

    /// The 10-element substate `[v, psi, b_a, b_r, b_z, u_c]`.
    pub fn substate(&self) -> Vec<f64> {
        self.x.as_slice()[2..].to_vec()
    }

    pub fn substate_cov(&self) -> DMatrix<f64> {
        self.p.view((2, 2), (10, 10)).into_owned()
    }

    pub fn position_cov(&self) -> Matrix2<f64> {
        Matrix2::new(self.p[(0, 0)], self.p[(0, 1)], self.p[(1, 0)], self.p[(1, 1)])
    }

    fn jacobian(&self, accel: Vec2, dt: f64) -> DMatrix<f64> {
        let n = &self.noise;
        let x = &self.x;
        let (vx, vy, psi) = (x[2], x[3], x[4]);
        let d = rotation_derivative(psi);
        let r = rotation(psi);
        let ax = accel.x - x[5];
        let ay = accel.y - x[6];
        let mut f = DMatrix::identity(N, N);
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        f[(2, 4)] = (d[0][0] * ax + d[0][1] * ay) * dt;
        f[(3, 4)] = (d[1][0] * ax + d[1][1] * ay) * dt;
        f[(2, 5)] = -r[0][0] * dt;
        f[(2, 6)] = -r[0][1] * dt;
        f[(3, 5)] = -r[1][0] * dt;
        f[(3, 6)] = -r[1][1] * dt;
        f[(4, 7)] = -dt;
        f[(5, 5)] = 1.0 - dt / n.tau_a;
        f[(6, 6)] = 1.0 - dt / n.tau_a;
        f[(7, 7)] = 1.0 - dt / n.tau_r;
        f[(8, 8)] = 1.0 - dt / n.tau_z;
        f[(9, 9)] = 1.0 - dt / n.tau_z;
        let speed = vx.hypot(vy);
        if speed > 0.0 {
            for (i, ui) in [(10, x[10]), (11, x[11])] {
                f[(i, 2)] = -ui * vx / speed * dt / n.l_c;
                f[(i, 3)] = -ui * vy / speed * dt / n.l_c;
            }
        }
        f[(10, 10)] = 1.0 - speed * dt / n.l_c;
        f[(11, 11)] = 1.0 - speed * dt / n.l_c;
        f
    }

    fn process_noise(&self, dt: f64) -> DMatrix<f64> {
        let r = rotation(self.x[4]);
        let mut g = DMatrix::zeros(N, 10);
        for i in 0..2 {
            for j in 0..2 {
                g[(2 + i, j)] = -r[i][j] * dt;
            }
        }
        g[(4, 2)] = -dt;
        for k in 3..10 {
            g[(2 + k, k)] = dt;
        }
        let q = DMatrix::from_diagonal(&DVector::from_column_slice(&self.noise.q_diag));
        &g * q * g.transpose()
    }

    pub fn predict(&mut self, imu: &ImuSample, dt: f64) {
        let f = self.jacobian(imu.a, dt);
        let gqg = self.process_noise(dt);
        let n = &self.noise;
        let old = self.x.clone();
        let r = rotation(old[4]);
        let ax = imu.a.x - old[5];
        let ay = imu.a.y - old[6];
        self.x[0] = old[0] + old[2] * dt;
        self.x[1] = old[1] + old[3] * dt;
        self.x[2] = old[2] + (r[0][0] * ax + r[0][1] * ay) * dt;
        self.x[3] = old[3] + (r[1][0] * ax + r[1][1] * ay) * dt;
        self.x[4] = wrap_angle(old[4] + (imu.r - old[7]) * dt);
        self.x[5] = (1.0 - dt / n.tau_a) * old[5];
        self.x[6] = (1.0 - dt / n.tau_a) * old[6];
        self.x[7] = (1.0 - dt / n.tau_r) * old[7];
        self.x[8] = (1.0 - dt / n.tau_z) * old[8];
        self.x[9] = (1.0 - dt / n.tau_z) * old[9];
        let decay = 1.0 - old[2].hypot(old[3]) * dt / n.l_c;
        self.x[10] = decay * old[10];
        self.x[11] = decay * old[11];
        let p = &f * &self.p * f.transpose() + gqg;
        self.p = (&p + p.transpose()) * 0.5;
        self.t += dt;
    }

    fn predicted_measurement(&self, phi: Vec2) -> (DVector<f64>, DMatrix<f64>) {
        let x = &self.x;
        let psi = x[4];
        let r = rotation(psi);
        let d = rotation_derivative(psi);
        let rel = [phi.x + x[10] - x[2], phi.y + x[11] - x[3]];
        let mut z = DVector::zeros(2);
        let mut h = DMatrix::zeros(2, N);
        for i in 0..2 {
            // Transposed rotation: element (i, j) is r[j][i].
            z[i] = r[0][i] * rel[0] + r[1][i] * rel[1] + x[8 + i];
            h[(i, 4)] = d[0][i] * rel[0] + d[1][i] * rel[1];
            for j in 0..2 {
                h[(i, 2 + j)] = -r[j][i];
                h[(i, 10 + j)] = r[j][i];
            }
            h[(i, 8 + i)] = 1.0;
        }
        (z, h)
    }

    fn correct(&mut self, e: &DVector<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) {
        let s = h * &self.p * h.transpose() + r;
        let s_inv = s.try_inverse().expect("innovation covariance is positive definite");
        let mut k = &self.p * h.transpose() * s_inv;
        k.row_mut(0).fill(0.0);
        k.row_mut(1).fill(0.0);
        self.x += &k * e;
        self.x[4] = wrap_angle(self.x[4]);
        let ikh = DMatrix::identity(N, N) - &k * h;
        let p = &ikh * &self.p * ikh.transpose() + &k * r * k.transpose();
        self.p = (&p + p.transpose()) * 0.5;
    }

    pub fn update(&mut self, z: Vec2, map: &FlowMap, t: f64) {
        let phi = map.velocity(self.position(), t);
        let (zh, h) = self.predicted_measurement(phi);
        let e = DVector::from_column_slice(&[z.x - zh[0], z.y - zh[1]]);
        let r = DMatrix::from_column_slice(2, 2, self.noise.r.as_slice());
        self.correct(&e, &h, &r);
        self.t = t;
    }

    pub fn heading_update(&mut self, psi_meas: f64, sigma_psi: f64) {
        let mut h = DMatrix::zeros(1, N);
        h[(0, 4)] = 1.0;
        let e = DVector::from_element(1, wrap_angle(psi_meas - self.x[4]));
        let r = DMatrix::from_element(1, 1, sigma_psi * sigma_psi);
        self.correct(&e, &h, &r);
    }
}
