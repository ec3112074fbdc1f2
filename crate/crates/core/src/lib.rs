//! Sample covariance spectra of reduced effective rank matrices: noise levels,
//! scree-plot thresholds and their functional-data counterparts.

pub mod error;
pub mod estimate;
pub mod fpca;
pub mod linalg;
pub mod models;
pub mod screen;

pub use error::{Error, Result};
