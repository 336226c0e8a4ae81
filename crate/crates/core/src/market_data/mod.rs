//! Bar ingestion, the session grid and return panels.

pub mod bars;
pub mod calendar;
pub mod panel;

pub use bars::{ingest_bars, read_bars, resample_bars, BarSchema, BarSeries, OhlcBar, BAR_FIELDS};
pub use calendar::{GridTime, Horizon, TradingCalendar, CLOSE_SLOT, PREDICTION_SLOTS, SLOTS_PER_DAY};
pub use panel::{
    compute_returns, forward_fill_returns, horizon_targets, realized_horizon_return, ReturnOptions,
    ReturnPanel,
};
