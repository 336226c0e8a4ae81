use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{GridTime, Horizon};

pub const FORECAST_COLUMNS: [&str; 6] = ["timestamp", "horizon", "ticker", "prediction", "model", "lambda_selected"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub time: GridTime,
    pub ticker: String,
    pub prediction: f64,
    pub lambda_selected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub time: GridTime,
    pub reason: String,
}

/// Look-ahead audit for one forecast time: the latest row any training target
/// (window or cross-validation) reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub time: GridTime,
    pub row: usize,
    pub max_target_end: usize,
    pub rows_used: usize,
}

/// Forecasts of one model at one horizon.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ForecastSet {
    pub model: String,
    pub horizon: Option<Horizon>,
    pub records: Vec<ForecastRecord>,
    pub skipped: Vec<SkipRecord>,
    pub audit: Vec<AuditRecord>,
    pub pseudo_inverse_fits: usize,
    pub reused_penalties: usize,
}

impl ForecastSet {
    pub fn new(model: &str, horizon: Horizon) -> Self {
        ForecastSet {
            model: model.to_string(),
            horizon: Some(horizon),
            ..ForecastSet::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct forecast times per date.
    pub fn times_per_day(&self) -> BTreeMap<NaiveDate, usize> {
        let mut out = BTreeMap::new();
        let mut last = None;
        for r in &self.records {
            if last != Some(r.time) {
                *out.entry(r.time.date).or_insert(0) += 1;
                last = Some(r.time);
            }
        }
        out
    }

    /// Rejects duplicate `(time, ticker)` keys and non-finite predictions.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.records {
            if !r.prediction.is_finite() {
                return Err(Error::Invariant(format!("non-finite prediction at {} {}", r.time, r.ticker)));
            }
            if !seen.insert((r.time, r.ticker.as_str())) {
                return Err(Error::Invariant(format!("duplicate forecast key {} {}", r.time, r.ticker)));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(FORECAST_COLUMNS)?;
        let horizon = self.horizon.map(|h| h.label()).unwrap_or_default();
        for r in &self.records {
            wtr.write_record([
                r.time.to_string(),
                horizon.to_string(),
                r.ticker.clone(),
                r.prediction.to_string(),
                self.model.clone(),
                r.lambda_selected.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<forecast csv>", e))
    }

    /// Reads a forecast table holding a single model and horizon.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != FORECAST_COLUMNS {
            return Err(Error::Schema(format!("forecast header {:?}", header.iter().collect::<Vec<_>>())));
        }
        let mut set = ForecastSet::default();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Data(format!("forecast row {}: bad {what}", line + 2));
            let time: GridTime = rec[0].parse()?;
            let horizon: Horizon = rec[1].parse()?;
            let prediction: f64 = rec[3].parse().map_err(|_| bad("prediction"))?;
            let lambda_selected: f64 = rec[5].parse().map_err(|_| bad("lambda"))?;
            if set.horizon.is_none() {
                set.horizon = Some(horizon);
                set.model = rec[4].to_string();
            } else if set.horizon != Some(horizon) || set.model != rec[4] {
                return Err(Error::Data("forecast file mixes models or horizons".into()));
            }
            set.records.push(ForecastRecord {
                time,
                ticker: rec[2].to_string(),
                prediction,
                lambda_selected,
            });
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ForecastSet {
        let d = NaiveDate::from_ymd_opt(2013, 1, 2).unwrap();
        let mut s = ForecastSet::new("esn", Horizon::Min30);
        for slot in 0..3u8 {
            for t in ["AAA", "BBB"] {
                s.records.push(ForecastRecord {
                    time: GridTime::new(d, slot),
                    ticker: t.into(),
                    prediction: 1e-4 * slot as f64 - 3.3e-5,
                    lambda_selected: 0.1,
                });
            }
        }
        s
    }

    #[test]
    fn csv_round_trip() {
        let s = sample();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp,horizon,ticker,prediction,model,lambda_selected\n"));
        assert!(text.contains("2013-01-02T09:40,30min,AAA,"));
        let back = ForecastSet::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.records, s.records);
        assert_eq!(back.model, "esn");
    }

    #[test]
    fn counts_distinct_times() {
        let s = sample();
        assert_eq!(s.times_per_day().values().copied().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn duplicates_rejected() {
        let mut s = sample();
        s.records.push(s.records[0].clone());
        assert!(s.validate().is_err());
    }
}
