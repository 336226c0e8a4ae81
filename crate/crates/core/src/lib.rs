//! Multi-horizon intraday return forecasting with echo state networks.
//!
//! The pipeline turns intraday bars into return panels, builds mean-reversion
//! signals from PCA factor residuals, drives a fixed random reservoir with
//! them, and fits rolling ridge readouts evaluated with MSFE, Diebold-Mariano
//! and model confidence set tests.

pub mod error;
pub mod evaluation;
pub mod io;
pub mod linalg;
pub mod market_data;
pub mod pipeline;
pub mod reservoir;
pub mod signals;
pub mod synthetic;
pub mod training;
pub mod tuning;

pub use error::{Error, Result};
