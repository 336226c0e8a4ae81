use std::collections::{BTreeMap, HashMap};

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{HorizonConfig, Penalty, Span, TrainingOptions};
use super::features::FeaturePanel;
use super::forecast::{AuditRecord, ForecastRecord, ForecastSet, SkipRecord};
use super::ridge::{predict, GramStats, ReadoutCoefficients, TrainingBatch};
use crate::error::{Error, Result};
use crate::market_data::{horizon_targets, realized_horizon_return, Horizon, ReturnPanel, PREDICTION_SLOTS, SLOTS_PER_DAY};
use crate::reservoir::{run_state_panel, sample_weights, ReservoirSpec, ReservoirWeights};
use crate::signals::SignalPanel;
use nalgebra::{DMatrix, DVector};

pub const BASELINE: &str = "baseline";
pub const BENCHMARK: &str = "benchmark";
pub const ESN: &str = "esn";

/// First row eligible for training: the start of the day `washout_days`
/// after the first observed signal.
pub fn sample_start_row(signals: &SignalPanel, washout_days: usize) -> Option<usize> {
    let n = signals.n_stocks();
    let first = signals.missing.iter().position(|m| !m)? / n;
    Some((first / SLOTS_PER_DAY + washout_days) * SLOTS_PER_DAY)
}

/// Row at which the realized return of a forecast made at row `s` ends.
pub fn target_end_row(s: usize, h: Horizon) -> Option<usize> {
    let slot = (s % SLOTS_PER_DAY) as u8;
    h.end_slot(slot).map(|e| s + (e - slot) as usize)
}

/// Pools every `(s, i)` in the training window of a forecast at row `t` whose
/// features and realized target are both present.
pub fn assemble_batch(
    features: &dyn FeaturePanel,
    returns: &ReturnPanel,
    t: usize,
    cfg: &HorizonConfig,
    sample_start: usize,
) -> Result<TrainingBatch> {
    let (start, end) = cfg
        .window_rows(t, sample_start)
        .ok_or_else(|| Error::InsufficientHistory(format!("no full training window before row {t}")))?;
    let dim = features.dim();
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut keys = Vec::new();
    for s in start..=end.min(returns.n_times().saturating_sub(1)) {
        for i in 0..features.n_stocks() {
            if let (Some(x), Some(r)) = (features.features(s, i), realized_horizon_return(returns, s, i, cfg.horizon)) {
                data.extend_from_slice(x);
                y.push(r);
                keys.push((s, i));
            }
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(TrainingBatch {
        x: DMatrix::from_row_slice(y.len(), dim, &data),
        y: DVector::from_vec(y),
        keys,
    })
}

/// Penalty chosen by chronological cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub lambda: f64,
    /// Diagonal of the selected penalty matrix.
    pub penalty: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub validation_mse: Vec<f64>,
    pub train_times: usize,
    pub validation_times: usize,
    pub max_target_end: usize,
}

/// Splits chronologically ordered per-time statistics into train/validation,
/// scores every grid point and keeps the first minimizer.
fn select_penalty(rows: &[(&GramStats, usize)], split: f64, grid: &[f64]) -> Option<CvOutcome> {
    let n = rows.len();
    let n_train = (n as f64 * split).round() as usize;
    if n_train == 0 || n_train >= n {
        return None;
    }
    let dim = rows[0].0.dim();
    let mut train = GramStats::zeros(dim);
    let mut val = GramStats::zeros(dim);
    for (k, (g, _)) in rows.iter().enumerate() {
        if k < n_train {
            train.add(g);
        } else {
            val.add(g);
        }
    }
    let mut scale = train.second_moments();
    let top = scale.iter().cloned().fold(0.0, f64::max);
    for v in &mut scale {
        *v = v.max(top * 1e-12);
    }
    let mut mse = Vec::with_capacity(grid.len());
    for &lam in grid {
        let pen: Vec<f64> = scale.iter().map(|v| v * lam).collect();
        mse.push(val.mse(&train.ridge(&pen).ok()?));
    }
    let best = (0..grid.len()).fold(0, |b, k| if mse[k] < mse[b] { k } else { b });
    Some(CvOutcome {
        lambda: grid[best],
        penalty: scale.iter().map(|v| v * grid[best]).collect(),
        lambdas: grid.to_vec(),
        validation_mse: mse,
        train_times: n_train,
        validation_times: n - n_train,
        max_target_end: rows.iter().map(|r| r.1).max().unwrap_or(0),
    })
}

/// Cross-validates the penalty used on `day`, from the preceding
/// `cv_window_days` days of pooled rows.
pub fn cross_validate_penalty(
    features: &dyn FeaturePanel,
    returns: &ReturnPanel,
    day: usize,
    cfg: &HorizonConfig,
    opts: &TrainingOptions,
    sample_start: usize,
) -> Result<CvOutcome> {
    let first = day
        .checked_sub(cfg.cv_window_days)
        .filter(|f| f * SLOTS_PER_DAY >= sample_start)
        .ok_or_else(|| Error::InsufficientHistory(format!("day {day} lacks a full cross-validation window")))?;
    let targets = horizon_targets(returns, cfg.horizon);
    let stats: Vec<RowStat> = (first * SLOTS_PER_DAY..day * SLOTS_PER_DAY)
        .map(|s| row_stat(features, &targets, s, cfg.horizon))
        .collect();
    let rows: Vec<(&GramStats, usize)> = stats.iter().filter_map(|r| r.gram.as_ref().map(|g| (g, r.end))).collect();
    select_penalty(&rows, cfg.cv_split, &opts.lambda_grid.values()).ok_or(Error::EmptyBatch)
}

struct RowStat {
    gram: Option<GramStats>,
    end: usize,
}

fn row_stat(features: &dyn FeaturePanel, targets: &ReturnPanel, s: usize, h: Horizon) -> RowStat {
    let Some(end) = target_end_row(s, h) else {
        return RowStat { gram: None, end: 0 };
    };
    let dim = features.dim();
    let mut data = Vec::new();
    let mut y = Vec::new();
    for i in 0..features.n_stocks() {
        if let (Some(x), Some(r)) = (features.features(s, i), targets.get(s, i)) {
            data.extend_from_slice(x);
            y.push(r);
        }
    }
    if y.is_empty() {
        return RowStat { gram: None, end };
    }
    let x = DMatrix::from_row_slice(y.len(), dim, &data);
    RowStat {
        gram: Some(GramStats::from_rows(&x, &DVector::from_vec(y))),
        end,
    }
}

struct RowCache<'a> {
    features: &'a dyn FeaturePanel,
    targets: ReturnPanel,
    horizon: Horizon,
    rows: BTreeMap<usize, RowStat>,
}

impl RowCache<'_> {
    fn ensure(&mut self, rows: impl Iterator<Item = usize>) {
        let mut missing: Vec<usize> = rows.filter(|s| !self.rows.contains_key(s)).collect();
        missing.sort_unstable();
        missing.dedup();
        let (features, targets, h) = (self.features, &self.targets, self.horizon);
        let fresh: Vec<(usize, RowStat)> = missing
            .into_par_iter()
            .map(|s| (s, row_stat(features, targets, s, h)))
            .collect();
        self.rows.extend(fresh);
    }

    fn observed(&self, lo: usize, hi: usize) -> Vec<(&GramStats, usize)> {
        self.rows
            .range(lo..=hi)
            .filter_map(|(_, r)| r.gram.as_ref().map(|g| (g, r.end)))
            .collect()
    }
}

type WindowFit = std::result::Result<(ReadoutCoefficients, usize, usize), String>;

/// Rolling readout over any feature panel: per forecast time, a ridge fit on
/// the training window followed by predictions for every stock with features.
pub fn run_readout(
    model: &str,
    features: &dyn FeaturePanel,
    returns: &ReturnPanel,
    sample_start: usize,
    cfg: &HorizonConfig,
    opts: &TrainingOptions,
) -> Result<ForecastSet> {
    cfg.validate()?;
    opts.validate()?;
    if features.n_times() != returns.n_times() || features.n_stocks() != returns.n_stocks() {
        return Err(Error::Invariant(format!(
            "features are {} x {}, returns are {} x {}",
            features.n_times(),
            features.n_stocks(),
            returns.n_times(),
            returns.n_stocks()
        )));
    }
    if !sample_start.is_multiple_of(SLOTS_PER_DAY) {
        return Err(Error::Invariant("sample start must be a day boundary".into()));
    }
    let h = cfg.horizon;
    let dim = features.dim();
    let times = returns.times();
    let tickers = returns.tickers();
    let tn = returns.n_times();
    let grid = opts.lambda_grid.values();
    let fixed = match opts.penalty {
        Penalty::Zero => Some(0.0),
        Penalty::Fixed(l) => Some(l),
        Penalty::CrossValidated => None,
    };
    let min_rows = if fixed == Some(0.0) { dim + 1 } else { 1 };
    let sample_day = sample_start / SLOTS_PER_DAY;
    let per_day = h.predictions_per_day();
    let window_days = (cfg.window.steps(per_day) + cfg.buffer.steps(per_day)) / per_day + 2;
    let lookback = window_days.max(cfg.cv_window_days + 1) * SLOTS_PER_DAY;

    let mut cache = RowCache {
        features,
        targets: horizon_targets(returns, h),
        horizon: h,
        rows: BTreeMap::new(),
    };
    let mut out = ForecastSet::new(model, h);
    let mut current: Option<CvOutcome> = None;

    for d in 0..returns.n_days() {
        let day_rows: Vec<usize> = (0..PREDICTION_SLOTS)
            .map(|s| d * SLOTS_PER_DAY + s)
            .filter(|&t| t < tn && target_end_row(t, h).is_some())
            .collect();
        if day_rows.is_empty() {
            continue;
        }

        let penalty: std::result::Result<(f64, Vec<f64>, usize), &str> = match fixed {
            Some(l) => Ok((l, vec![l; dim], 0)),
            None => {
                let first_cv_day = sample_day + cfg.cv_window_days;
                if d < first_cv_day {
                    Err("insufficient cross-validation history")
                } else {
                    let refresh = (d - first_cv_day).is_multiple_of(cfg.cv_frequency_days) || current.is_none();
                    if refresh {
                        let (lo, hi) = ((d - cfg.cv_window_days) * SLOTS_PER_DAY, d * SLOTS_PER_DAY - 1);
                        cache.ensure(lo..=hi);
                        match select_penalty(&cache.observed(lo, hi), cfg.cv_split, &grid) {
                            Some(o) => current = Some(o),
                            None if current.is_some() => out.reused_penalties += 1,
                            None => {}
                        }
                    }
                    current
                        .as_ref()
                        .map(|c| (c.lambda, c.penalty.clone(), c.max_target_end))
                        .ok_or("empty validation split and no earlier penalty")
                }
            }
        };
        let (lambda, pen, cv_end) = match penalty {
            Ok(p) => p,
            Err(reason) => {
                out.skipped.extend(day_rows.iter().map(|&t| SkipRecord {
                    time: times[t],
                    reason: reason.to_string(),
                }));
                continue;
            }
        };

        let windows: Vec<(usize, Option<(usize, usize)>)> =
            day_rows.iter().map(|&t| (t, cfg.window_rows(t, sample_start))).collect();
        let mut distinct: Vec<(usize, usize)> = windows.iter().filter_map(|w| w.1).collect();
        distinct.sort_unstable();
        distinct.dedup();
        cache.ensure(distinct.iter().flat_map(|&(a, b)| a..=b));
        let fits: HashMap<(usize, usize), WindowFit> = distinct
            .par_iter()
            .map(|&(a, b)| {
                let mut g = GramStats::zeros(dim);
                let mut end = 0;
                for (stat, e) in cache.observed(a, b) {
                    g.add(stat);
                    end = end.max(e);
                }
                let n = g.count() as usize;
                let fit = if n < min_rows {
                    Err(format!("{n} training rows, need {min_rows}"))
                } else {
                    g.ridge(&pen).map(|c| (c, end, n)).map_err(|e| e.to_string())
                };
                ((a, b), fit)
            })
            .collect();

        for (t, w) in windows {
            let fit = match w {
                None => Err("insufficient history for the training window".to_string()),
                Some(w) => fits[&w].clone(),
            };
            match fit {
                Err(reason) => out.skipped.push(SkipRecord { time: times[t], reason }),
                Ok((coeffs, end, n)) => {
                    if coeffs.pseudo_inverse {
                        out.pseudo_inverse_fits += 1;
                    }
                    for (i, ticker) in tickers.iter().enumerate() {
                        if let Some(p) = predict(&coeffs, features.features(t, i)).filter(|p| p.is_finite()) {
                            out.records.push(ForecastRecord {
                                time: times[t],
                                ticker: ticker.clone(),
                                prediction: p,
                                lambda_selected: lambda,
                            });
                        }
                    }
                    out.audit.push(AuditRecord {
                        time: times[t],
                        row: t,
                        max_target_end: end.max(cv_end),
                        rows_used: n,
                    });
                }
            }
        }
        let keep_from = ((d + 1) * SLOTS_PER_DAY).saturating_sub(lookback);
        cache.rows = cache.rows.split_off(&keep_from);
    }
    debug!(
        "{model} {h}: {} forecasts, {} skipped times",
        out.records.len(),
        out.skipped.len()
    );
    Ok(out)
}

fn start_of(signals: &SignalPanel, opts: &TrainingOptions) -> Result<usize> {
    sample_start_row(signals, opts.washout_days).ok_or_else(|| Error::Data("signal panel has no observed signals".into()))
}

/// Unpenalized least squares on the single time slice `t - tau - 1`.
pub fn run_baseline(
    signals: &SignalPanel,
    returns: &ReturnPanel,
    cfg: &HorizonConfig,
    opts: &TrainingOptions,
) -> Result<ForecastSet> {
    let cfg = HorizonConfig {
        window: Span::Minutes(10),
        ..cfg.clone()
    };
    let opts = TrainingOptions {
        penalty: Penalty::Zero,
        ..opts.clone()
    };
    run_readout(BASELINE, signals, returns, start_of(signals, &opts)?, &cfg, &opts)
}

/// Windowed ridge readout on the raw signals.
pub fn run_benchmark(
    signals: &SignalPanel,
    returns: &ReturnPanel,
    cfg: &HorizonConfig,
    opts: &TrainingOptions,
) -> Result<ForecastSet> {
    run_readout(BENCHMARK, signals, returns, start_of(signals, opts)?, cfg, opts)
}

/// Windowed ridge readout on reservoir states driven by the signals.
pub fn run_esn(
    signals: &SignalPanel,
    returns: &ReturnPanel,
    cfg: &HorizonConfig,
    opts: &TrainingOptions,
    spec: &ReservoirSpec,
) -> Result<ForecastSet> {
    let weights = sample_weights(spec)?;
    run_esn_with_weights(signals, returns, cfg, opts, spec, &weights)
}

pub fn run_esn_with_weights(
    signals: &SignalPanel,
    returns: &ReturnPanel,
    cfg: &HorizonConfig,
    opts: &TrainingOptions,
    spec: &ReservoirSpec,
    weights: &ReservoirWeights,
) -> Result<ForecastSet> {
    spec.validate()?;
    let states = run_state_panel(weights, spec, signals)?;
    run_readout(ESN, &states, returns, start_of(signals, opts)?, cfg, opts)
}
