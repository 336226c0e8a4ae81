use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{realized_horizon_return, GridTime, Horizon, ReturnPanel};
use crate::training::ForecastSet;

/// Looks up realized horizon returns by `(time, ticker)`.
pub struct Realized<'a> {
    panel: &'a ReturnPanel,
    rows: HashMap<GridTime, usize>,
    cols: HashMap<&'a str, usize>,
}

impl<'a> Realized<'a> {
    pub fn new(panel: &'a ReturnPanel) -> Self {
        Realized {
            panel,
            rows: panel.times().iter().enumerate().map(|(k, t)| (*t, k)).collect(),
            cols: panel.tickers().iter().enumerate().map(|(k, t)| (t.as_str(), k)).collect(),
        }
    }

    pub fn get(&self, time: GridTime, ticker: &str, h: Horizon) -> Option<f64> {
        realized_horizon_return(self.panel, *self.rows.get(&time)?, *self.cols.get(ticker)?, h)
    }
}

/// Per-event cross-sectional MSFE and its running mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsfeSeries {
    pub times: Vec<GridTime>,
    pub msfe: Vec<f64>,
    pub cumsfe: Vec<f64>,
    /// Stocks per event.
    pub counts: Vec<usize>,
}

impl MsfeSeries {
    /// Builds the series from `(time, squared errors)` events in time order.
    pub fn from_events(events: &[(GridTime, Vec<f64>)]) -> Result<Self> {
        let mut out = MsfeSeries {
            times: Vec::new(),
            msfe: Vec::new(),
            cumsfe: Vec::new(),
            counts: Vec::new(),
        };
        let mut total = 0.0;
        for (time, sq) in events.iter().filter(|e| !e.1.is_empty()) {
            let m = sq.iter().sum::<f64>() / sq.len() as f64;
            total += m;
            out.times.push(*time);
            out.msfe.push(m);
            out.counts.push(sq.len());
            out.cumsfe.push(total / out.msfe.len() as f64);
        }
        if out.times.is_empty() {
            return Err(Error::Data("no forecast overlaps a realized return".into()));
        }
        Ok(out)
    }

    /// Total cumulated MSFE (the terminal cuMSFE).
    pub fn total(&self) -> f64 {
        *self.cumsfe.last().expect("non-empty series")
    }
}

/// MSFE series of one forecast set against realized returns.
pub fn msfe_series(forecasts: &ForecastSet, returns: &ReturnPanel) -> Result<MsfeSeries> {
    let h = forecasts.horizon.ok_or_else(|| Error::Data("forecast set has no horizon".into()))?;
    let realized = Realized::new(returns);
    let mut events: BTreeMap<GridTime, Vec<f64>> = BTreeMap::new();
    for r in &forecasts.records {
        if let Some(y) = realized.get(r.time, &r.ticker, h) {
            events.entry(r.time).or_default().push((y - r.prediction).powi(2));
        }
    }
    MsfeSeries::from_events(&events.into_iter().collect::<Vec<_>>())
}

/// Pooled out-of-sample R² under two benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R2 {
    /// `1 - SSE / sum r^2` (zero forecast benchmark).
    pub zero_benchmark: Option<f64>,
    /// `1 - SSE / sum (r - cross-sectional mean)^2`.
    pub mean_benchmark: Option<f64>,
}

/// Pooled R² from `(realized, predicted)` pairs grouped by event.
pub fn r2_from_events(events: &[Vec<(f64, f64)>]) -> R2 {
    let (mut sse, mut ss0, mut ssm) = (0.0, 0.0, 0.0);
    for ev in events.iter().filter(|e| !e.is_empty()) {
        let mean = ev.iter().map(|p| p.0).sum::<f64>() / ev.len() as f64;
        for &(y, f) in ev {
            sse += (y - f).powi(2);
            ss0 += y * y;
            ssm += (y - mean).powi(2);
        }
    }
    let ratio = |den: f64| (den > 0.0).then(|| 1.0 - sse / den);
    R2 {
        zero_benchmark: ratio(ss0),
        mean_benchmark: ratio(ssm),
    }
}

pub fn pooled_r2(forecasts: &ForecastSet, returns: &ReturnPanel) -> Result<R2> {
    let h = forecasts.horizon.ok_or_else(|| Error::Data("forecast set has no horizon".into()))?;
    let realized = Realized::new(returns);
    let mut events: BTreeMap<GridTime, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &forecasts.records {
        if let Some(y) = realized.get(r.time, &r.ticker, h) {
            events.entry(r.time).or_default().push((y, r.prediction));
        }
    }
    if events.is_empty() {
        return Err(Error::Data("no forecast overlaps a realized return".into()));
    }
    Ok(r2_from_events(&events.into_values().collect::<Vec<_>>()))
}

/// Several models' forecasts restricted to the keys all of them share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedForecasts {
    pub horizon: Horizon,
    pub models: Vec<String>,
    pub times: Vec<GridTime>,
    /// Per event: realized return and one prediction per model.
    pub events: Vec<Vec<(f64, Vec<f64>)>>,
}

impl AlignedForecasts {
    pub fn align(sets: &[&ForecastSet], returns: &ReturnPanel) -> Result<Self> {
        let first = sets.first().ok_or_else(|| Error::Data("no forecast sets to align".into()))?;
        let h = first.horizon.ok_or_else(|| Error::Data("forecast set has no horizon".into()))?;
        if sets.iter().any(|s| s.horizon != Some(h)) {
            return Err(Error::Data("forecast sets mix horizons".into()));
        }
        let mut models: Vec<String> = sets.iter().map(|s| s.model.clone()).collect();
        models.dedup();
        if models.len() != sets.len() || {
            let mut m = models.clone();
            m.sort();
            m.dedup();
            m.len() != models.len()
        } {
            return Err(Error::Data("duplicate model in forecast sets".into()));
        }
        let realized = Realized::new(returns);
        let mut table: BTreeMap<(GridTime, &str), Vec<Option<f64>>> = BTreeMap::new();
        for (m, set) in sets.iter().enumerate() {
            for r in &set.records {
                table.entry((r.time, r.ticker.as_str())).or_insert_with(|| vec![None; sets.len()])[m] = Some(r.prediction);
            }
        }
        let mut times = Vec::new();
        let mut events: Vec<Vec<(f64, Vec<f64>)>> = Vec::new();
        for ((time, ticker), preds) in table {
            if preds.iter().any(Option::is_none) {
                continue;
            }
            let Some(y) = realized.get(time, ticker, h) else {
                continue;
            };
            if times.last() != Some(&time) {
                times.push(time);
                events.push(Vec::new());
            }
            events.last_mut().expect("pushed").push((y, preds.into_iter().map(|p| p.expect("checked")).collect()));
        }
        if times.is_empty() {
            return Err(Error::Data(format!("models share no realized {h} forecast keys")));
        }
        Ok(AlignedForecasts {
            horizon: h,
            models,
            times,
            events,
        })
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    /// Per-event cross-sectional mean squared error of model `m`.
    pub fn losses(&self, m: usize) -> Vec<f64> {
        self.events
            .iter()
            .map(|ev| ev.iter().map(|(y, p)| (y - p[m]).powi(2)).sum::<f64>() / ev.len() as f64)
            .collect()
    }

    /// Per-event cross-sectional mean squared realized return.
    pub fn zero_forecast_losses(&self) -> Vec<f64> {
        self.events
            .iter()
            .map(|ev| ev.iter().map(|(y, _)| y * y).sum::<f64>() / ev.len() as f64)
            .collect()
    }

    pub fn msfe(&self, m: usize) -> MsfeSeries {
        let events: Vec<(GridTime, Vec<f64>)> = self
            .times
            .iter()
            .zip(&self.events)
            .map(|(t, ev)| (*t, ev.iter().map(|(y, p)| (y - p[m]).powi(2)).collect()))
            .collect();
        MsfeSeries::from_events(&events).expect("aligned events are non-empty")
    }

    pub fn r2(&self, m: usize) -> R2 {
        let events: Vec<Vec<(f64, f64)>> =
            self.events.iter().map(|ev| ev.iter().map(|(y, p)| (*y, p[m])).collect()).collect();
        r2_from_events(&events)
    }

    pub fn n_forecasts(&self) -> usize {
        self.events.iter().map(Vec::len).sum()
    }
}
