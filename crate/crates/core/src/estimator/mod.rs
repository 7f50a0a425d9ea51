//! Current-aided navigation filters.
//!
//! The state is split into the vehicle position, which the particle filter
//! samples, and the conditionally linear substate
//! `[v(2), psi, b_a(2), b_r, b_z(2), u_c(2)]` carried by one EKF per particle.

mod dead_reckoning;
mod ekf;
pub mod model;
mod mpf;

pub use dead_reckoning::{dead_reckon, dead_reckon_heading_aided, NavState};
pub use ekf::CurrentAidedEkf;
pub use model::{KfMat, KfVec, NoiseConfig};
pub use mpf::{
    effective_sample_size, systematic_indices, Estimate, KfState, MpfConfig, MpfState, MutationConfig, Particle, Prior,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("every particle likelihood underflowed; weights reset to uniform")]
    AllWeightsZero,
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
