use crate::math::{rot, wrap_angle, Vec2};
use crate::vehicle_sim::ImuLog;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavState {
    pub p: Vec2,
    pub v: Vec2,
    pub psi: f64,
}

/// Forward-Euler integration of raw IMU samples. Element `k` of the output is
/// the state at the time of sample `k`, before that sample is applied.
pub fn dead_reckon(init: NavState, imu: &ImuLog) -> Vec<NavState> {
    dead_reckon_heading_aided(init, imu, &[])
}

/// As [`dead_reckon`], but the heading is replaced by a direct measurement
/// whenever one is time-aligned with an IMU sample.
pub fn dead_reckon_heading_aided(init: NavState, imu: &ImuLog, headings: &[(f64, f64)]) -> Vec<NavState> {
    let mut out = Vec::with_capacity(imu.samples.len());
    let mut s = init;
    let mut next = 0;
    let half = 0.5 * imu.dt;
    for sample in &imu.samples {
        while next < headings.len() && headings[next].0 < sample.t - half {
            next += 1;
        }
        if next < headings.len() && (headings[next].0 - sample.t).abs() <= half {
            s.psi = wrap_angle(headings[next].1);
            next += 1;
        }
        out.push(s);
        let v_next = s.v + rot(s.psi) * sample.a * imu.dt;
        s.p += s.v * imu.dt;
        s.psi = wrap_angle(s.psi + sample.r * imu.dt);
        s.v = v_next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle_sim::{generate_imu_samples, lawnmower_trajectory, ImuParams, ImuSample, LawnmowerSpec};

    #[test]
    fn noiseless_log_reproduces_truth() {
        let truth = lawnmower_trajectory(&LawnmowerSpec::default()).unwrap();
        let imu = generate_imu_samples(&truth, &ImuParams::vn100().noiseless(), 0).unwrap();
        let init = NavState { p: truth[0].p, v: truth[0].v, psi: truth[0].psi };
        let dr = dead_reckon(init, &imu);
        let worst = dr.iter().zip(&truth).map(|(s, t)| (s.p - t.p).norm()).fold(0.0, f64::max);
        assert!(worst < 0.5, "worst {worst}");
    }

    #[test]
    fn zero_input_stays_put() {
        let imu = ImuLog { dt: 0.1, samples: (0..100).map(|k| ImuSample { t: k as f64 * 0.1, a: Vec2::zeros(), r: 0.0 }).collect() };
        let init = NavState { p: Vec2::zeros(), v: Vec2::zeros(), psi: 0.0 };
        assert!(dead_reckon(init, &imu).iter().all(|s| s.p == Vec2::zeros()));
    }

    #[test]
    fn constant_bias_gives_quadratic_error() {
        let beta = 4e-4;
        let n = 36_000;
        let imu = ImuLog { dt: 0.1, samples: (0..=n).map(|k| ImuSample { t: k as f64 * 0.1, a: Vec2::new(beta, 0.0), r: 0.0 }).collect() };
        let init = NavState { p: Vec2::zeros(), v: Vec2::zeros(), psi: 0.3 };
        let last = dead_reckon(init, &imu)[n];
        let t = n as f64 * 0.1;
        let expected = 0.5 * beta * t * t;
        assert!((last.p.norm() / expected - 1.0).abs() < 0.01);
    }

    #[test]
    fn heading_measurements_override_gyro() {
        let imu = ImuLog { dt: 0.1, samples: (0..30).map(|k| ImuSample { t: k as f64 * 0.1, a: Vec2::zeros(), r: 0.05 }).collect() };
        let init = NavState { p: Vec2::zeros(), v: Vec2::new(1.0, 0.0), psi: 0.0 };
        let out = dead_reckon_heading_aided(init, &imu, &[(1.0, 0.7), (2.0, -0.2)]);
        assert_eq!(out[10].psi, 0.7);
        assert_eq!(out[20].psi, -0.2);
        assert!((out[15].psi - (0.7 + 5.0 * 0.005)).abs() < 1e-12);
    }
}
