use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::bars::{grid_minutes, BarSeries};
use super::calendar::{GridTime, Horizon, TradingCalendar, BAR_MINUTES, CLOSE_SLOT, SLOTS_PER_DAY};
use crate::error::{Error, Result};

/// Time x stock matrix of simple returns with an explicit missing mask.
///
/// Rows follow the session grid: the first row is slot 0 of a trading day and
/// rows advance one grid mark at a time (40 per day, the last being the close
/// mark). The final day may be partial. Missing entries hold `NaN`.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    times: Vec<GridTime>,
    tickers: Vec<String>,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl ReturnPanel {
    pub fn new(
        times: Vec<GridTime>,
        tickers: Vec<String>,
        values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let cells = times.len() * tickers.len();
        if values.len() != cells || missing.len() != cells {
            return Err(Error::Invariant(format!(
                "panel of {} x {} needs {cells} cells, got {} values and {} flags",
                times.len(),
                tickers.len(),
                values.len(),
                missing.len()
            )));
        }
        validate_grid(&times)?;
        let mut values = values;
        for (v, &m) in values.iter_mut().zip(&missing) {
            if m {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::Invariant("non-missing panel entry is not finite".into()));
            }
        }
        Ok(ReturnPanel {
            times,
            tickers,
            values,
            missing,
        })
    }

    /// Builds a panel whose entries are all missing.
    pub fn empty(times: Vec<GridTime>, tickers: Vec<String>) -> Result<Self> {
        let cells = times.len() * tickers.len();
        Self::new(times, tickers, vec![f64::NAN; cells], vec![true; cells])
    }

    /// Consecutive full days covering `days`.
    pub fn grid_for_days(days: &[NaiveDate]) -> Vec<GridTime> {
        days.iter()
            .flat_map(|&d| (0..SLOTS_PER_DAY as u8).map(move |s| GridTime::new(d, s)))
            .collect()
    }

    pub fn times(&self) -> &[GridTime] {
        &self.times
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_days(&self) -> usize {
        self.times.len().div_ceil(SLOTS_PER_DAY)
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.times.iter().step_by(SLOTS_PER_DAY).map(|t| t.date).collect()
    }

    /// Row index of `slot` on the `day`-th day of the panel.
    pub fn row(&self, day: usize, slot: u8) -> usize {
        day * SLOTS_PER_DAY + slot as usize
    }

    pub fn day_of_row(&self, t: usize) -> usize {
        t / SLOTS_PER_DAY
    }

    pub fn get(&self, t: usize, i: usize) -> Option<f64> {
        let k = t * self.tickers.len() + i;
        (!self.missing[k]).then(|| self.values[k])
    }

    pub fn is_missing(&self, t: usize, i: usize) -> bool {
        self.missing[t * self.tickers.len() + i]
    }

    /// Raw row (NaN where missing).
    pub fn row_values(&self, t: usize) -> &[f64] {
        let n = self.tickers.len();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn set(&mut self, t: usize, i: usize, v: Option<f64>) {
        let k = t * self.tickers.len() + i;
        match v {
            Some(x) => {
                assert!(x.is_finite(), "panel values must be finite");
                self.values[k] = x;
                self.missing[k] = false;
            }
            None => {
                self.values[k] = f64::NAN;
                self.missing[k] = true;
            }
        }
    }

    /// Count of non-missing entries in row `t`.
    pub fn observed_in_row(&self, t: usize) -> usize {
        let n = self.tickers.len();
        self.missing[t * n..(t + 1) * n].iter().filter(|m| !**m).count()
    }

    /// Sub-panel holding days `[first, last)`.
    pub fn slice_days(&self, first: usize, last: usize) -> ReturnPanel {
        let n = self.tickers.len();
        let r0 = (first * SLOTS_PER_DAY).min(self.times.len());
        let r1 = (last * SLOTS_PER_DAY).min(self.times.len());
        ReturnPanel {
            times: self.times[r0..r1].to_vec(),
            tickers: self.tickers.clone(),
            values: self.values[r0 * n..r1 * n].to_vec(),
            missing: self.missing[r0 * n..r1 * n].to_vec(),
        }
    }

    /// Multiplies every return of stock `i` by `c` (test and audit helper).
    pub fn scale_stock(&mut self, i: usize, c: f64) {
        let n = self.tickers.len();
        for t in 0..self.times.len() {
            if !self.missing[t * n + i] {
                self.values[t * n + i] *= c;
            }
        }
    }
}

impl PartialEq for ReturnPanel {
    /// Missing entries compare equal regardless of their placeholder; present
    /// values compare bitwise.
    fn eq(&self, other: &Self) -> bool {
        self.times == other.times
            && self.tickers == other.tickers
            && self.missing == other.missing
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.missing)
                .all(|((a, b), m)| *m || a.to_bits() == b.to_bits())
    }
}

fn validate_grid(times: &[GridTime]) -> Result<()> {
    if let Some(first) = times.first() {
        if first.slot != 0 {
            return Err(Error::Invariant(format!("panel must start at the session open, starts at {first}")));
        }
    }
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ok = if a.slot == CLOSE_SLOT {
            b.slot == 0 && b.date > a.date
        } else {
            b.date == a.date && b.slot == a.slot + 1
        };
        if !ok {
            return Err(Error::Invariant(format!("panel rows {a} -> {b} are not consecutive grid marks")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnOptions {
    /// When set, the 09:30 return is measured from the prior day's close.
    /// Otherwise the overnight gap is excluded and the 09:30 return is zero.
    #[serde(default)]
    pub overnight: bool,
}

/// Simple returns on the 10-minute grid from resampled bars.
///
/// The price at slot `k` is the last trade of the bar starting at that mark;
/// the 16:00 close mark uses the first trade at or after 16:00 (the closing
/// auction print), falling back to the 15:50 bar's last trade.
pub fn compute_returns(
    bars: &BarSeries,
    calendar: &TradingCalendar,
    opts: &ReturnOptions,
) -> Result<ReturnPanel> {
    if bars.resolution_ms != BAR_MINUTES * 60_000 {
        return Err(Error::Data(format!(
            "bars must be resampled to {BAR_MINUTES}-minute resolution first (got {} ms)",
            bars.resolution_ms
        )));
    }
    let days = if calendar.trading_days.is_empty() {
        bars.dates()
    } else {
        calendar.trading_days.clone()
    };
    let tickers = bars.tickers();
    let n = tickers.len();
    let ticker_ix: HashMap<&str, usize> = tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let day_ix: HashMap<NaiveDate, usize> = days.iter().enumerate().map(|(d, &x)| (x, d)).collect();

    let mut prices = vec![f64::NAN; days.len() * SLOTS_PER_DAY * n];
    let at = |d: usize, s: usize, i: usize| (d * SLOTS_PER_DAY + s) * n + i;
    let mut auction = vec![f64::NAN; days.len() * n];
    for b in &bars.bars {
        let (Some(&d), Some(&i)) = (day_ix.get(&b.date), ticker_ix.get(b.ticker.as_str())) else {
            continue;
        };
        let Some(minutes) = grid_minutes(b.bar_start) else { continue };
        let slot = (minutes / BAR_MINUTES) as usize;
        if slot < CLOSE_SLOT as usize {
            prices[at(d, slot, i)] = b.last_trade_price;
        } else if slot == CLOSE_SLOT as usize {
            auction[d * n + i] = b.first_trade_price;
        }
    }
    for d in 0..days.len() {
        for i in 0..n {
            let close = if auction[d * n + i].is_nan() {
                prices[at(d, CLOSE_SLOT as usize - 1, i)]
            } else {
                auction[d * n + i]
            };
            prices[at(d, CLOSE_SLOT as usize, i)] = close;
        }
    }

    let times = ReturnPanel::grid_for_days(&days);
    let mut values = vec![f64::NAN; times.len() * n];
    let mut missing = vec![true; times.len() * n];
    for d in 0..days.len() {
        for s in 0..SLOTS_PER_DAY {
            for i in 0..n {
                let p = prices[at(d, s, i)];
                let r = if s == 0 {
                    if opts.overnight {
                        if d == 0 {
                            f64::NAN
                        } else {
                            p / prices[at(d - 1, CLOSE_SLOT as usize, i)] - 1.0
                        }
                    } else if p.is_nan() {
                        f64::NAN
                    } else {
                        0.0
                    }
                } else {
                    p / prices[at(d, s - 1, i)] - 1.0
                };
                if r.is_finite() {
                    let k = (d * SLOTS_PER_DAY + s) * n + i;
                    values[k] = r;
                    missing[k] = false;
                }
            }
        }
    }
    ReturnPanel::new(times, tickers, values, missing)
}

/// Replaces missing returns inside each ticker's observed lifetime by zero
/// (price held at the last observation). Leading and trailing gaps stay missing.
pub fn forward_fill_returns(panel: &ReturnPanel) -> ReturnPanel {
    let mut out = panel.clone();
    let (tn, n) = (panel.n_times(), panel.n_stocks());
    for i in 0..n {
        let first = (0..tn).find(|&t| !panel.is_missing(t, i));
        let last = (0..tn).rev().find(|&t| !panel.is_missing(t, i));
        if let (Some(a), Some(b)) = (first, last) {
            for t in a..=b {
                if out.is_missing(t, i) {
                    out.set(t, i, Some(0.0));
                }
            }
        }
    }
    out
}

/// Compounded return over `(t, t+h]` for a forecast made at row `t`.
///
/// Missing when `t` is not a prediction slot, the horizon runs past the
/// close, or any constituent return is missing.
pub fn realized_horizon_return(panel: &ReturnPanel, t: usize, i: usize, h: Horizon) -> Option<f64> {
    let slot = panel.times.get(t)?.slot;
    let end_slot = h.end_slot(slot)?;
    let end = t + (end_slot - slot) as usize;
    if end >= panel.n_times() {
        return None;
    }
    let mut growth = 1.0;
    for s in t + 1..=end {
        growth *= 1.0 + panel.get(s, i)?;
    }
    Some(growth - 1.0)
}

/// Realized `h`-horizon returns for every row, aligned with the forecast time.
pub fn horizon_targets(panel: &ReturnPanel, h: Horizon) -> ReturnPanel {
    let (tn, n) = (panel.n_times(), panel.n_stocks());
    let mut values = vec![f64::NAN; tn * n];
    let mut missing = vec![true; tn * n];
    for t in 0..tn {
        for i in 0..n {
            if let Some(r) = realized_horizon_return(panel, t, i, h) {
                values[t * n + i] = r;
                missing[t * n + i] = false;
            }
        }
    }
    ReturnPanel {
        times: panel.times.clone(),
        tickers: panel.tickers.clone(),
        values,
        missing,
    }
}
