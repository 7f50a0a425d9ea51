//! Current-aided inertial navigation for underwater vehicles.
//!
//! The crate is organised the way a navigation study is run:
//!
//! - [`flowfields`]: background current references (analytic double-gyre and
//!   meandering-jet fields, time-tagged grid maps and the FGM file format).
//! - [`turbulence`]: Kinematic Simulation of the unresolved small-scale flow.
//! - [`vehicle_sim`]: lawn-mower ground truth and noisy IMU / ADCP streams.
//! - [`estimator`]: the marginalized particle filter with per-particle EKFs,
//!   plus dead-reckoning and single-EKF baselines.
//! - [`crlb`]: parametric Cramér-Rao bound of the reduced system.
//! - [`harness`]: scenario configuration, Monte Carlo runs, metrics and output.

pub mod crlb;
pub mod estimator;
pub mod flowfields;
pub mod harness;
pub mod math;
pub mod turbulence;
pub mod vehicle_sim;

pub use math::Vec2;
