//! OHLC bar records and delimited-text ingestion.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use super::calendar::{session_open, BAR_MINUTES};
use crate::error::{Error, Result, RowError};

/// Header names of the bar file, in file order.
pub const BAR_FIELDS: [&str; 10] = [
    "Date",
    "Ticker",
    "TimeBarStart",
    "FirstTradePrice",
    "HighTradePrice",
    "LowTradePrice",
    "LastTradePrice",
    "VolumeWeightPrice",
    "Volume",
    "TotalTrades",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OhlcBar {
    pub date: NaiveDate,
    pub ticker: String,
    /// Bar start, EST.
    pub bar_start: NaiveTime,
    pub first_trade_price: f64,
    pub high_trade_price: f64,
    pub low_trade_price: f64,
    pub last_trade_price: f64,
    pub volume_weight_price: f64,
    pub volume: f64,
    pub total_trades: u64,
}

impl OhlcBar {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let prices = [
            ("FirstTradePrice", self.first_trade_price),
            ("HighTradePrice", self.high_trade_price),
            ("LowTradePrice", self.low_trade_price),
            ("LastTradePrice", self.last_trade_price),
            ("VolumeWeightPrice", self.volume_weight_price),
        ];
        for (name, p) in prices {
            if !(p.is_finite() && p > 0.0) {
                return Err(format!("{name} must be a positive price, got {p}"));
            }
        }
        if self.low_trade_price > self.first_trade_price.min(self.last_trade_price) {
            return Err(format!(
                "low {} above min(first, last)",
                self.low_trade_price
            ));
        }
        if self.high_trade_price < self.first_trade_price.max(self.last_trade_price) {
            return Err(format!(
                "high {} below max(first, last)",
                self.high_trade_price
            ));
        }
        if !(self.volume.is_finite() && self.volume >= 0.0) {
            return Err(format!("volume must be non-negative, got {}", self.volume));
        }
        let earliest = NaiveTime::from_hms_opt(4, 0, 0).expect("valid");
        let latest = NaiveTime::from_hms_opt(20, 0, 0).expect("valid");
        if self.bar_start < earliest || self.bar_start >= latest {
            return Err(format!("bar start {} outside 04:00-20:00", self.bar_start));
        }
        Ok(())
    }
}

/// Parsed bars sorted by `(ticker, date, bar_start)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BarSeries {
    pub bars: Vec<OhlcBar>,
    /// Input resolution in milliseconds, inferred from the TimeBarStart format.
    pub resolution_ms: i64,
    pub rejected: Vec<RowError>,
}

impl BarSeries {
    pub fn new(mut bars: Vec<OhlcBar>, resolution_ms: i64) -> Self {
        sort_bars(&mut bars);
        BarSeries {
            bars,
            resolution_ms,
            rejected: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn tickers(&self) -> Vec<String> {
        let mut t: Vec<String> = self.bars.iter().map(|b| b.ticker.clone()).collect();
        t.sort();
        t.dedup();
        t
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut d: Vec<NaiveDate> = self.bars.iter().map(|b| b.date).collect();
        d.sort();
        d.dedup();
        d
    }

    /// Concatenates several series (e.g. one file per day).
    pub fn concat(parts: Vec<BarSeries>) -> Self {
        let resolution_ms = parts.iter().map(|p| p.resolution_ms).filter(|&r| r > 0).min().unwrap_or(60_000);
        let mut bars = Vec::new();
        let mut rejected = Vec::new();
        for p in parts {
            bars.extend(p.bars);
            rejected.extend(p.rejected);
        }
        let mut s = BarSeries::new(bars, resolution_ms);
        s.rejected = rejected;
        s
    }
}

fn sort_bars(bars: &mut [OhlcBar]) {
    bars.sort_by(|a, b| {
        (&a.ticker, a.date, a.bar_start).cmp(&(&b.ticker, b.date, b.bar_start))
    });
}

/// How bar files are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarSchema {
    pub delimiter: u8,
    /// Rejected rows tolerated before ingestion fails.
    pub max_row_errors: usize,
}

impl Default for BarSchema {
    fn default() -> Self {
        BarSchema {
            delimiter: b',',
            max_row_errors: 1000,
        }
    }
}

/// Parses `TimeBarStart` as HHMM, HHMMSS or HHMMSSMMM. Returns the time and
/// the resolution implied by the format, in milliseconds.
pub fn parse_bar_start(raw: &str) -> std::result::Result<(NaiveTime, i64), String> {
    let s = raw.trim();
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("TimeBarStart {raw:?} is not numeric"));
    }
    let (padded, res) = match s.len() {
        1..=4 => (format!("{s:0>4}00000"), 60_000),
        5..=6 => (format!("{s:0>6}000"), 1_000),
        7..=9 => (format!("{s:0>9}"), 1),
        _ => return Err(format!("TimeBarStart {raw:?} has an unknown format")),
    };
    let num = |r: std::ops::Range<usize>| padded[r].parse::<u32>().expect("digits");
    let t = NaiveTime::from_hms_milli_opt(num(0..2), num(2..4), num(4..6), num(6..9))
        .ok_or_else(|| format!("TimeBarStart {raw:?} is not a valid time"))?;
    Ok((t, res))
}

fn parse_row(record: &csv::StringRecord, cols: &[usize; 10]) -> std::result::Result<(OhlcBar, i64), String> {
    let field = |k: usize| record.get(cols[k]).map(str::trim).unwrap_or("");
    let date = NaiveDate::parse_from_str(field(0), "%Y%m%d")
        .map_err(|e| format!("Date {:?}: {e}", field(0)))?;
    let ticker = field(1).to_string();
    if ticker.is_empty() {
        return Err("empty Ticker".into());
    }
    let (bar_start, res) = parse_bar_start(field(2))?;
    let num = |k: usize| -> std::result::Result<f64, String> {
        field(k)
            .parse::<f64>()
            .map_err(|e| format!("{} {:?}: {e}", BAR_FIELDS[k], field(k)))
    };
    let trades = field(9);
    let total_trades = trades
        .parse::<u64>()
        .or_else(|_| {
            trades
                .parse::<f64>()
                .ok()
                .filter(|v| *v >= 0.0 && v.fract() == 0.0)
                .map(|v| v as u64)
                .ok_or(())
        })
        .map_err(|_| format!("TotalTrades {trades:?} is not a non-negative count"))?;
    let bar = OhlcBar {
        date,
        ticker,
        bar_start,
        first_trade_price: num(3)?,
        high_trade_price: num(4)?,
        low_trade_price: num(5)?,
        last_trade_price: num(6)?,
        volume_weight_price: num(7)?,
        volume: num(8)?,
        total_trades,
    };
    bar.validate()?;
    Ok((bar, res))
}

/// Reads bars from any delimited-text source.
pub fn read_bars<R: Read>(reader: R, schema: &BarSchema) -> Result<BarSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let mut cols = [0usize; 10];
    for (k, want) in BAR_FIELDS.iter().enumerate() {
        cols[k] = names
            .iter()
            .position(|n| n.trim_start_matches('\u{feff}') == *want)
            .ok_or_else(|| Error::Schema(format!("header is missing column {want:?}; got {names:?}")))?;
    }
    if names.len() != BAR_FIELDS.len() {
        return Err(Error::Schema(format!(
            "expected {} columns, header has {}",
            BAR_FIELDS.len(),
            names.len()
        )));
    }

    let mut bars = Vec::new();
    let mut rejected = Vec::new();
    let mut resolution_ms = i64::MAX;
    for (k, rec) in rdr.records().enumerate() {
        // header is line 1
        let line = k + 2;
        match rec {
            Ok(rec) => match parse_row(&rec, &cols) {
                Ok((bar, res)) => {
                    resolution_ms = resolution_ms.min(res);
                    bars.push(bar);
                }
                Err(message) => rejected.push(RowError { line, message }),
            },
            Err(e) => rejected.push(RowError {
                line,
                message: e.to_string(),
            }),
        }
        if rejected.len() > schema.max_row_errors {
            return Err(Error::TooManyRowErrors {
                errors: rejected,
                threshold: schema.max_row_errors,
            });
        }
    }
    if resolution_ms == i64::MAX {
        resolution_ms = 60_000;
    }
    for r in &rejected {
        log::warn!("rejected bar row: {r}");
    }
    let mut series = BarSeries::new(bars, resolution_ms);
    series.rejected = rejected;
    Ok(series)
}

pub fn ingest_bars(path: &Path, schema: &BarSchema) -> Result<BarSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_bars(file, schema)
}

/// Aggregates bars into `step_minutes` windows anchored on the 09:30 grid.
pub fn resample_bars(bars: &BarSeries, step_minutes: i64) -> Result<BarSeries> {
    if step_minutes <= 0 {
        return Err(Error::Config(format!("resample step must be positive, got {step_minutes}")));
    }
    let step_ms = step_minutes * 60_000;
    if bars.resolution_ms <= 0 || step_ms % bars.resolution_ms != 0 {
        return Err(Error::Config(format!(
            "resample step of {step_minutes} min is not a multiple of the input resolution ({} ms)",
            bars.resolution_ms
        )));
    }
    let open = session_open();
    let window_start = |t: NaiveTime| -> NaiveTime {
        let offset_ms = (t - open).num_milliseconds();
        let k = offset_ms.div_euclid(step_ms);
        open + Duration::milliseconds(k * step_ms)
    };

    let mut windows: BTreeMap<(String, NaiveDate, NaiveTime), Vec<&OhlcBar>> = BTreeMap::new();
    for b in &bars.bars {
        windows
            .entry((b.ticker.clone(), b.date, window_start(b.bar_start)))
            .or_default()
            .push(b);
    }
    let out = windows
        .into_iter()
        .map(|((ticker, date, start), members)| aggregate(ticker, date, start, &members))
        .collect();
    Ok(BarSeries::new(out, step_ms))
}

fn aggregate(ticker: String, date: NaiveDate, bar_start: NaiveTime, members: &[&OhlcBar]) -> OhlcBar {
    // members arrive in time order because the input series is sorted
    let first = members.first().expect("non-empty window");
    let last = members.last().expect("non-empty window");
    let volume: f64 = members.iter().map(|b| b.volume).sum();
    let vwap = if volume > 0.0 {
        members.iter().map(|b| b.volume_weight_price * b.volume).sum::<f64>() / volume
    } else {
        members.iter().map(|b| b.volume_weight_price).sum::<f64>() / members.len() as f64
    };
    OhlcBar {
        date,
        ticker,
        bar_start,
        first_trade_price: first.first_trade_price,
        high_trade_price: members.iter().map(|b| b.high_trade_price).fold(f64::MIN, f64::max),
        low_trade_price: members.iter().map(|b| b.low_trade_price).fold(f64::MAX, f64::min),
        last_trade_price: last.last_trade_price,
        volume_weight_price: vwap,
        volume,
        total_trades: members.iter().map(|b| b.total_trades).sum(),
    }
}

/// Grid mark minutes since midnight of a bar, if it sits on the 10-minute grid.
pub(crate) fn grid_minutes(t: NaiveTime) -> Option<i64> {
    let open = session_open();
    let off = t - open;
    let minutes = off.num_minutes();
    (t.second() == 0 && t.nanosecond() == 0 && minutes >= 0 && minutes % BAR_MINUTES == 0)
        .then_some(minutes)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Date,Ticker,TimeBarStart,FirstTradePrice,HighTradePrice,LowTradePrice,LastTradePrice,VolumeWeightPrice,Volume,TotalTrades";

    fn minute_file(ticker: &str, n: usize) -> String {
        let mut s = String::from(HEADER);
        s.push('\n');
        for k in 0..n {
            let t = session_open() + Duration::minutes(k as i64);
            let p = 100.0 + k as f64 * 0.01;
            s.push_str(&format!(
                "20130102,{ticker},{},{p},{},{},{p},{p},100,3\n",
                t.format("%H%M"),
                p + 0.02,
                p - 0.02
            ));
        }
        s
    }

    #[test]
    fn accepts_the_documented_header() {
        let s = read_bars(minute_file("AAA", 1).as_bytes(), &BarSchema::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.resolution_ms, 60_000);
    }

    #[test]
    fn rejects_unknown_header() {
        let text = "Date,Symbol,TimeBarStart\n20130102,AAA,0930\n";
        let err = read_bars(text.as_bytes(), &BarSchema::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn high_below_low_is_rejected_with_line_number() {
        let text = format!("{HEADER}\n20130102,AAA,0930,10,9,11,10,10,5,1\n20130102,AAA,0931,10,11,9,10,10,5,1\n");
        let s = read_bars(text.as_bytes(), &BarSchema::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.rejected.len(), 1);
        assert_eq!(s.rejected[0].line, 2);
    }

    #[test]
    fn row_error_threshold_is_fatal() {
        let text = format!("{HEADER}\nx,AAA,0930,10,11,9,10,10,5,1\ny,AAA,0931,10,11,9,10,10,5,1\n");
        let schema = BarSchema {
            max_row_errors: 1,
            ..BarSchema::default()
        };
        assert!(matches!(
            read_bars(text.as_bytes(), &schema),
            Err(Error::TooManyRowErrors { .. })
        ));
    }

    #[test]
    fn full_session_minute_bars_preserved_and_sorted() {
        let mut text = minute_file("BBB", 390);
        text.push_str(&minute_file("AAA", 390).replacen(&format!("{HEADER}\n"), "", 1));
        let s = read_bars(text.as_bytes(), &BarSchema::default()).unwrap();
        assert_eq!(s.len(), 780);
        assert_eq!(s.bars[0].ticker, "AAA");
        assert!(s.bars.windows(2).all(|w| (&w[0].ticker, w[0].bar_start) <= (&w[1].ticker, w[1].bar_start)));
    }

    #[test]
    fn bar_start_formats() {
        assert_eq!(parse_bar_start("1104").unwrap(), (NaiveTime::from_hms_opt(11, 4, 0).unwrap(), 60_000));
        assert_eq!(parse_bar_start("930").unwrap().0, NaiveTime::from_hms_opt(9, 30, 0).unwrap());
        assert_eq!(parse_bar_start("130302").unwrap(), (NaiveTime::from_hms_opt(13, 3, 2).unwrap(), 1_000));
        assert_eq!(
            parse_bar_start("130302500").unwrap().0,
            NaiveTime::from_hms_milli_opt(13, 3, 2, 500).unwrap()
        );
        assert!(parse_bar_start("2561").is_err());
        assert!(parse_bar_start("ab").is_err());
    }

    #[test]
    fn session_resamples_to_39_bars() {
        let s = read_bars(minute_file("AAA", 390).as_bytes(), &BarSchema::default()).unwrap();
        let r = resample_bars(&s, 10).unwrap();
        assert_eq!(r.len(), 39);
        assert!(r.bars.iter().all(|b| grid_minutes(b.bar_start).is_some()));
    }

    #[test]
    fn ten_bar_window_aggregation() {
        let bars: Vec<OhlcBar> = (0..10)
            .map(|k| {
                let p = (k + 1) as f64;
                OhlcBar {
                    date: NaiveDate::from_ymd_opt(2013, 1, 2).unwrap(),
                    ticker: "AAA".into(),
                    bar_start: session_open() + Duration::minutes(k),
                    first_trade_price: p,
                    high_trade_price: p,
                    low_trade_price: p,
                    last_trade_price: p,
                    volume_weight_price: p,
                    volume: 10.0,
                    total_trades: 2,
                }
            })
            .collect();
        let out = resample_bars(&BarSeries::new(bars, 60_000), 10).unwrap();
        assert_eq!(out.len(), 1);
        let b = &out.bars[0];
        assert_eq!(b.last_trade_price, 10.0);
        assert_eq!(b.first_trade_price, 1.0);
        assert!(b.high_trade_price >= 10.0);
        assert_eq!(b.low_trade_price, 1.0);
        assert_eq!(b.volume, 100.0);
        assert_eq!(b.total_trades, 20);
        assert!((b.volume_weight_price - 5.5).abs() < 1e-12);
    }

    #[test]
    fn step_must_be_multiple_of_resolution() {
        let s = BarSeries::new(vec![], 60_000);
        assert!(resample_bars(&s, 0).is_err());
        let coarse = BarSeries::new(vec![], 7 * 60_000);
        assert!(resample_bars(&coarse, 10).is_err());
    }
}
