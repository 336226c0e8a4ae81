#![allow(dead_code)]

use esncast_core::market_data::ReturnPanel;
use esncast_core::signals::{build_signal_panel, SignalConfig, SignalPanel};
use esncast_core::synthetic::{simulate_panel, Param, SyntheticConfig};

pub fn synthetic_config(n_stocks: usize, n_factors: usize, n_days: usize, kappa: f64, seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        n_stocks,
        n_factors,
        n_days: Some(n_days),
        n_times: None,
        drift: Param::Scalar(0.0),
        loadings: None,
        loading_mean: 1.0,
        loading_scale: 0.5,
        factor_vol: Param::Scalar(0.001),
        kappa: Param::Scalar(kappa),
        mean: Param::Scalar(0.0),
        sigma: Param::Scalar(0.002),
        missing_rate: 0.0,
        seed: Some(seed),
        start_date: chrono::NaiveDate::from_ymd_opt(2013, 1, 2).unwrap(),
    }
}

pub fn panel(n_stocks: usize, n_factors: usize, n_days: usize, kappa: f64, seed: u64) -> ReturnPanel {
    simulate_panel(&synthetic_config(n_stocks, n_factors, n_days, kappa, seed).to_spec(0).unwrap()).unwrap()
}

/// Return panel plus its signals, with the factor count matched to the generator.
pub fn market(n_stocks: usize, n_factors: usize, n_days: usize, kappa: f64, seed: u64) -> (ReturnPanel, SignalPanel) {
    let returns = panel(n_stocks, n_factors, n_days, kappa, seed);
    let cfg = SignalConfig {
        n_factors,
        ..SignalConfig::default()
    };
    let (signals, _) = build_signal_panel(&returns, &cfg).unwrap();
    (returns, signals)
}
