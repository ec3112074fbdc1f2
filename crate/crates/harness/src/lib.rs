//! Monte Carlo harness for the spectral screener: experiment configuration,
//! parallel trial execution, constant calibration, CSV/JSON reports, a
//! consistency audit and scree plots.

pub mod audit;
pub mod calibrate;
pub mod config;
pub mod error;
pub mod experiments;
pub mod plot;
pub mod runner;
pub mod stats;
pub mod table;

pub use config::{Experiment, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use runner::{run, RunOutcome, Summary};
