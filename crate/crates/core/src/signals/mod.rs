//! Modified z-score signals from PCA factor residuals and windowed OU fits.

pub mod factors;
pub mod ou;

use chrono::NaiveDate;
use log::debug;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{forward_fill_returns, GridTime, ReturnPanel, SLOTS_PER_DAY};

pub use factors::{extract_factors, factor_regression, standardize_returns, EigenportfolioSet, FactorFit, Standardized};
pub use ou::{discretize_residuals, modified_z_score, ou_estimate, OuEstimate};

/// Discretization windows `P`, in grid steps.
pub const SIGNAL_WINDOWS: [usize; 6] = [10, 20, 30, 60, 100, 150];
pub const SIGNAL_DIM: usize = SIGNAL_WINDOWS.len();

pub type Signal = [f64; SIGNAL_DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub n_factors: usize,
    /// Trading days in the rolling PCA / factor regression window.
    pub factor_window_days: usize,
    /// Residual observations feeding each OU fit.
    pub residual_window: usize,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            n_factors: 15,
            factor_window_days: 5,
            residual_window: 200,
        }
    }
}

impl SignalConfig {
    pub fn validate(&self) -> Result<()> {
        let largest = SIGNAL_WINDOWS[SIGNAL_DIM - 1];
        if self.n_factors == 0 {
            return Err(Error::Config("signals.n_factors must be positive".into()));
        }
        if self.factor_window_days == 0 {
            return Err(Error::Config("signals.factor_window_days must be positive".into()));
        }
        if self.residual_window < largest + 4 {
            return Err(Error::Config(format!(
                "signals.residual_window must be at least {}",
                largest + 4
            )));
        }
        let available = self.factor_window_days * SLOTS_PER_DAY + 1;
        if self.residual_window > available {
            return Err(Error::Config(format!(
                "signals.residual_window {} exceeds the {available} rows covered by the factor window",
                self.residual_window
            )));
        }
        Ok(())
    }
}

/// Time x stock panel of six-dimensional signal vectors.
#[derive(Debug, Clone)]
pub struct SignalPanel {
    pub times: Vec<GridTime>,
    pub tickers: Vec<String>,
    /// Row-major `T x N`; `NaN` where missing.
    pub values: Vec<Signal>,
    pub missing: Vec<bool>,
}

impl SignalPanel {
    pub fn new(times: Vec<GridTime>, tickers: Vec<String>, values: Vec<Signal>, missing: Vec<bool>) -> Result<Self> {
        let cells = times.len() * tickers.len();
        if values.len() != cells || missing.len() != cells {
            return Err(Error::Invariant(format!(
                "signal panel of {} x {} needs {cells} cells, got {} values and {} flags",
                times.len(),
                tickers.len(),
                values.len(),
                missing.len()
            )));
        }
        let mut values = values;
        for (z, &m) in values.iter_mut().zip(&missing) {
            if m {
                *z = [f64::NAN; SIGNAL_DIM];
            } else if z.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invariant("non-missing signal is not finite".into()));
            }
        }
        Ok(SignalPanel {
            times,
            tickers,
            values,
            missing,
        })
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn get(&self, t: usize, i: usize) -> Option<Signal> {
        let k = t * self.tickers.len() + i;
        (!self.missing[k]).then(|| self.values[k])
    }

    pub fn observed(&self) -> usize {
        self.missing.iter().filter(|m| !**m).count()
    }
}

impl PartialEq for SignalPanel {
    fn eq(&self, other: &Self) -> bool {
        self.times == other.times
            && self.tickers == other.tickers
            && self.missing == other.missing
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.missing)
                .all(|((a, b), &m)| m || a == b)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkippedDay {
    pub date: NaiveDate,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalDiagnostics {
    pub skipped_days: Vec<SkippedDay>,
    /// Stock-days excluded from factor estimation for zero variance.
    pub zero_variance_exclusions: usize,
    /// Stock-days excluded for incomplete history in the factor window.
    pub incomplete_exclusions: usize,
    /// Stock-times whose signal is missing because an OU fit was invalid.
    pub invalid_fits: usize,
    /// Days whose factor regression fell back to the pseudo-inverse.
    pub pseudo_inverse_days: usize,
    /// Variance share of the retained factors, per processed day.
    pub explained_variance: Vec<f64>,
}

/// Builds the modified z-score panel.
///
/// For each trading day with `factor_window_days` of prior history, factors are
/// estimated on the forward-filled prior window and held fixed for the day. At
/// every grid row of that day, each stock with an observed return gets six OU
/// fits on its trailing `residual_window` factor residuals.
pub fn build_signal_panel(panel: &ReturnPanel, config: &SignalConfig) -> Result<(SignalPanel, SignalDiagnostics)> {
    config.validate()?;
    let n = panel.n_stocks();
    let tn = panel.n_times();
    let filled = forward_fill_returns(panel);
    let mut values = vec![[f64::NAN; SIGNAL_DIM]; tn * n];
    let mut missing = vec![true; tn * n];
    let mut diag = SignalDiagnostics::default();
    let dates = panel.dates();
    let wrows = config.factor_window_days * SLOTS_PER_DAY;

    for (d, &date) in dates.iter().enumerate().skip(config.factor_window_days) {
        let start = (d - config.factor_window_days) * SLOTS_PER_DAY;
        let day_start = d * SLOTS_PER_DAY;
        let day_end = (day_start + SLOTS_PER_DAY).min(tn);

        let eligible: Vec<usize> = (0..n)
            .filter(|&i| (start..day_start).all(|t| !filled.is_missing(t, i)))
            .collect();
        diag.incomplete_exclusions += n - eligible.len();
        let window = DMatrix::from_fn(wrows, eligible.len(), |r, c| filled.row_values(start + r)[eligible[c]]);
        let standardized = standardize_returns(&window)?;
        diag.zero_variance_exclusions += standardized.dropped.len();
        if standardized.kept.len() <= config.n_factors {
            diag.skipped_days.push(SkippedDay {
                date,
                reason: format!(
                    "{} usable stocks for {} factors",
                    standardized.kept.len(),
                    config.n_factors
                ),
            });
            continue;
        }
        let eig = match extract_factors(&standardized, config.n_factors) {
            Ok(e) => e,
            Err(e) => {
                diag.skipped_days.push(SkippedDay {
                    date,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        diag.explained_variance.push(eig.explained_by_factors());
        let stocks: Vec<usize> = standardized.kept.iter().map(|&c| eligible[c]).collect();
        let kept_returns = window.select_columns(standardized.kept.iter());
        let f_window = &kept_returns * &eig.weights;
        let fit = factor_regression(&kept_returns, &f_window)?;
        if fit.pseudo_inverse {
            diag.pseudo_inverse_days += 1;
        }

        // residuals for the window plus today, one column per kept stock
        let today = day_end - day_start;
        let mut resid = DMatrix::zeros(wrows + today, stocks.len());
        resid.rows_mut(0, wrows).copy_from(&fit.residuals);
        for r in 0..today {
            let row: Vec<f64> = stocks
                .iter()
                .map(|&i| filled.get(day_start + r, i).unwrap_or(0.0))
                .collect();
            let f = eig.factor_returns_row(&row);
            for (k, &x) in row.iter().enumerate() {
                resid[(wrows + r, k)] = fit.residual(k, x, &f);
            }
        }

        let per_stock: Vec<(usize, Vec<Option<Signal>>)> = stocks
            .par_iter()
            .enumerate()
            .map(|(k, &i)| {
                let col: Vec<f64> = resid.column(k).iter().copied().collect();
                let out = (0..today)
                    .map(|r| {
                        if panel.is_missing(day_start + r, i) {
                            return None;
                        }
                        let end = wrows + r + 1;
                        stock_signal(&col[end - config.residual_window..end], fit.intercept[k])
                    })
                    .collect();
                (i, out)
            })
            .collect();
        for (i, out) in per_stock {
            for (r, z) in out.into_iter().enumerate() {
                let cell = (day_start + r) * n + i;
                match z {
                    Some(z) => {
                        values[cell] = z;
                        missing[cell] = false;
                    }
                    None if !panel.is_missing(day_start + r, i) => diag.invalid_fits += 1,
                    None => {}
                }
            }
        }
        debug!("signals for {date}: {} stocks, {} factors", stocks.len(), config.n_factors);
    }
    let out = SignalPanel::new(panel.times().to_vec(), panel.tickers().to_vec(), values, missing)?;
    Ok((out, diag))
}

fn stock_signal(residuals: &[f64], drift: f64) -> Option<Signal> {
    let mut z = [0.0; SIGNAL_DIM];
    for (slot, &p) in z.iter_mut().zip(SIGNAL_WINDOWS.iter()) {
        let est = ou_estimate(residuals, p, drift).ok()?;
        *slot = modified_z_score(&est, est.current)?;
    }
    Some(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{simulate_panel, SyntheticMarketSpec};

    fn spec(n: usize, days: usize, kappa: f64, seed: u64) -> SyntheticMarketSpec {
        SyntheticMarketSpec {
            n_stocks: n,
            n_factors: 2,
            n_times: days * SLOTS_PER_DAY,
            drift: vec![0.0; n],
            loadings: (0..n).map(|i| vec![1.0 + 0.1 * i as f64, 0.5 - 0.05 * i as f64]).collect(),
            factor_vol: vec![0.001, 0.0008],
            kappa: vec![kappa; n],
            mean: vec![0.0; n],
            sigma: vec![0.002; n],
            missing_rate: 0.0,
            seed,
            start_date: NaiveDate::from_ymd_opt(2013, 1, 2).unwrap(),
        }
    }

    fn small_config() -> SignalConfig {
        SignalConfig {
            n_factors: 2,
            ..SignalConfig::default()
        }
    }

    #[test]
    fn signal_windows_are_fixed() {
        assert_eq!(SIGNAL_DIM, 6);
        assert_eq!(SIGNAL_WINDOWS, [10, 20, 30, 60, 100, 150]);
        assert_eq!(SignalConfig::default().n_factors, 15);
    }

    #[test]
    fn leading_days_are_missing_and_later_days_filled() {
        let panel = simulate_panel(&spec(8, 7, 0.5, 3)).unwrap();
        let (sig, diag) = build_signal_panel(&panel, &small_config()).unwrap();
        for t in 0..5 * SLOTS_PER_DAY {
            for i in 0..8 {
                assert!(sig.get(t, i).is_none());
            }
        }
        let later = (5 * SLOTS_PER_DAY..7 * SLOTS_PER_DAY).filter(|&t| sig.get(t, 0).is_some()).count();
        assert!(later > 60, "only {later} signals");
        assert!(diag.skipped_days.is_empty());
    }

    #[test]
    fn missing_raw_return_means_missing_signal() {
        let mut panel = simulate_panel(&spec(8, 7, 0.5, 4)).unwrap();
        let t = 6 * SLOTS_PER_DAY + 10;
        panel.set(t, 3, None);
        let (sig, _) = build_signal_panel(&panel, &small_config()).unwrap();
        assert!(sig.get(t, 3).is_none());
    }

    #[test]
    fn deterministic() {
        let panel = simulate_panel(&spec(8, 7, 0.5, 5)).unwrap();
        let (a, _) = build_signal_panel(&panel, &small_config()).unwrap();
        let (b, _) = build_signal_panel(&panel, &small_config()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scale_equivariant_per_stock() {
        let panel = simulate_panel(&spec(8, 7, 0.5, 6)).unwrap();
        let mut scaled = panel.clone();
        scaled.scale_stock(2, 7.5);
        let (a, _) = build_signal_panel(&panel, &small_config()).unwrap();
        let (b, _) = build_signal_panel(&scaled, &small_config()).unwrap();
        let mut compared = 0;
        for t in 0..a.n_times() {
            match (a.get(t, 2), b.get(t, 2)) {
                (Some(x), Some(y)) => {
                    for d in 0..SIGNAL_DIM {
                        assert!((x[d] - y[d]).abs() < 1e-6 * (1.0 + x[d].abs()), "t={t} d={d}");
                    }
                    compared += 1;
                }
                (None, None) => {}
                _ => panic!("validity changed under scaling at t={t}"),
            }
        }
        assert!(compared > 0);
    }

    #[test]
    fn too_few_stocks_skips_days() {
        let panel = simulate_panel(&spec(3, 6, 0.5, 7)).unwrap();
        let (sig, diag) = build_signal_panel(&panel, &SignalConfig::default()).unwrap();
        assert_eq!(sig.observed(), 0);
        assert_eq!(diag.skipped_days.len(), 1);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = SignalConfig {
            residual_window: 100,
            ..SignalConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn signal_panel_rejects_non_finite_observed_values() {
        let times = ReturnPanel::grid_for_days(&[NaiveDate::from_ymd_opt(2013, 1, 2).unwrap()]);
        let n = times.len();
        let mut values = vec![[0.0; SIGNAL_DIM]; n];
        values[3][2] = f64::NAN;
        assert!(SignalPanel::new(times.clone(), vec!["A".into()], values.clone(), vec![false; n]).is_err());
        let mut mask = vec![false; n];
        mask[3] = true;
        let p = SignalPanel::new(times, vec!["A".into()], values, mask).unwrap();
        assert!(p.get(3, 0).is_none());
    }
}
