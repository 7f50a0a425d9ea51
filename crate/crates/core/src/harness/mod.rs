//! Scenario configuration, Monte Carlo execution, metrics and file output.

mod aggregate;
mod config;
mod output;
mod run;

pub use aggregate::{compute_udt, monte_carlo, Aggregate, RunSummary, Summary};
pub use config::{CrlbSpec, EstimatorSpec, FlowSpec, InitSpec, PointEstimate, ScenarioConfig};
pub use output::{
    read_aggregate_csv, render_svg, write_aggregate_csv, write_crlb_csv, write_estimate_csv, Series, AGGREGATE_HEADER,
    CRLB_HEADER, ESTIMATE_HEADER,
};
pub use run::{run_scenario, Realization, RunResult, Scenario, Tick};

use crate::crlb::CrlbError;
use crate::estimator::EstimatorError;
use crate::flowfields::FlowError;
use crate::turbulence::KsError;
use crate::vehicle_sim::SimError;
use thiserror::Error;

/// Independent random streams of one run.
pub mod stream {
    pub const TURBULENCE: u64 = 1;
    pub const IMU: u64 = 2;
    pub const ADCP: u64 = 3;
    pub const FILTER: u64 = 4;
    pub const HEADING: u64 = 5;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Turbulence(#[from] KsError),
    #[error(transparent)]
    Crlb(#[from] CrlbError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Errors caused by the configuration rather than by running it.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_)
                | HarnessError::Turbulence(_)
                | HarnessError::Sim(SimError::InvalidParams(_) | SimError::SpecInfeasible(_))
                | HarnessError::Flow(FlowError::InvalidGrid(_) | FlowError::Parse { .. } | FlowError::DimensionMismatch { .. })
                | HarnessError::Estimator(EstimatorError::InvalidConfig(_))
        )
    }
}
