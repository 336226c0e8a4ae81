//! Forecast evaluation: MSFE and R², Diebold-Mariano tests, the model
//! confidence set and seed-robustness bands.

pub mod dm;
pub mod mcs;
pub mod metrics;
pub mod report;
pub mod robustness;

pub use dm::{bartlett_lrv, diebold_mariano, DmOutcome};
pub use mcs::{block_length, model_confidence_set, stationary_bootstrap_indices, McsOptions, McsResult};
pub use metrics::{msfe_series, pooled_r2, r2_from_events, AlignedForecasts, MsfeSeries, Realized, R2};
pub use report::{evaluate, format_relative_reduction, overlap_steps, DmPair, EvaluationOptions, EvaluationReport, HorizonReport, ModelMetrics};
pub use robustness::{quantile_sorted, relative_curves, robustness_study, QuantileBands, RobustnessResult, BAND_PROBS};
