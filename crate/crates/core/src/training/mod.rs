//! Rolling-window readout estimation for the baseline, benchmark and ESN models.

pub mod config;
pub mod features;
pub mod forecast;
pub mod ridge;
pub mod runner;

pub use config::{HorizonConfig, LambdaGrid, Penalty, Span, TrainingOptions};
pub use features::FeaturePanel;
pub use forecast::{AuditRecord, ForecastRecord, ForecastSet, SkipRecord, FORECAST_COLUMNS};
pub use ridge::{predict, ridge_fit, GramStats, ReadoutCoefficients, TrainingBatch};
pub use runner::{
    assemble_batch, cross_validate_penalty, run_baseline, run_benchmark, run_esn, run_esn_with_weights, run_readout,
    sample_start_row, target_end_row, CvOutcome, BASELINE, BENCHMARK, ESN,
};
