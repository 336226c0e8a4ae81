//! Trading calendar, the 10-minute prediction grid and forecast horizons.
//!
//! Each trading day is laid out as 40 grid marks: 39 prediction slots at
//! 09:30, 09:40, ..., 15:50 followed by the 16:00 close mark. A panel row is
//! addressed by `(date, slot)`; slot 39 is the close mark and never a
//! prediction time.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, NaiveTime, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of prediction slots per day (09:30 through 15:50).
pub const PREDICTION_SLOTS: usize = 39;
/// Grid marks per day: the prediction slots plus the 16:00 close mark.
pub const SLOTS_PER_DAY: usize = PREDICTION_SLOTS + 1;
/// Slot index of the 16:00 close mark.
pub const CLOSE_SLOT: u8 = PREDICTION_SLOTS as u8;
/// Grid spacing in minutes.
pub const BAR_MINUTES: i64 = 10;

pub fn session_open() -> NaiveTime {
    NaiveTime::from_hms_opt(9, 30, 0).expect("valid time")
}

pub fn session_close() -> NaiveTime {
    NaiveTime::from_hms_opt(16, 0, 0).expect("valid time")
}

/// A mark on the intraday grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridTime {
    pub date: NaiveDate,
    pub slot: u8,
}

impl GridTime {
    pub fn new(date: NaiveDate, slot: u8) -> Self {
        debug_assert!((slot as usize) < SLOTS_PER_DAY);
        GridTime { date, slot }
    }

    pub fn time(&self) -> NaiveTime {
        session_open() + Duration::minutes(BAR_MINUTES * self.slot as i64)
    }

    pub fn is_prediction_slot(&self) -> bool {
        self.slot < CLOSE_SLOT
    }

    /// Maps an intraday clock time onto the grid, if it is a grid mark.
    pub fn from_time(date: NaiveDate, time: NaiveTime) -> Option<Self> {
        let minutes = (time - session_open()).num_minutes();
        if time - session_open() != Duration::minutes(minutes) {
            return None;
        }
        if minutes < 0 || minutes % BAR_MINUTES != 0 {
            return None;
        }
        let slot = minutes / BAR_MINUTES;
        (slot < SLOTS_PER_DAY as i64).then(|| GridTime::new(date, slot as u8))
    }
}

impl fmt::Display for GridTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}T{}", self.date.format("%Y-%m-%d"), self.time().format("%H:%M"))
    }
}

impl FromStr for GridTime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (d, t) = s
            .split_once('T')
            .ok_or_else(|| Error::Data(format!("bad grid timestamp {s:?}")))?;
        let date = NaiveDate::parse_from_str(d, "%Y-%m-%d")
            .map_err(|e| Error::Data(format!("bad date in {s:?}: {e}")))?;
        let time = NaiveTime::parse_from_str(t, "%H:%M")
            .map_err(|e| Error::Data(format!("bad time in {s:?}: {e}")))?;
        GridTime::from_time(date, time)
            .ok_or_else(|| Error::Data(format!("{s:?} is not on the 10-minute session grid")))
    }
}

/// Forecast horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Horizon {
    Min10,
    Min30,
    Min60,
    Hr2,
    Eod,
}

impl Horizon {
    pub const ALL: [Horizon; 5] = [
        Horizon::Min10,
        Horizon::Min30,
        Horizon::Min60,
        Horizon::Hr2,
        Horizon::Eod,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Horizon::Min10 => "10min",
            Horizon::Min30 => "30min",
            Horizon::Min60 => "60min",
            Horizon::Hr2 => "2hr",
            Horizon::Eod => "EOD",
        }
    }

    /// Length in grid steps for intraday horizons; `None` for end-of-day.
    pub fn steps(&self) -> Option<usize> {
        match self {
            Horizon::Min10 => Some(1),
            Horizon::Min30 => Some(3),
            Horizon::Min60 => Some(6),
            Horizon::Hr2 => Some(12),
            Horizon::Eod => None,
        }
    }

    /// Slot at which the realized return for a forecast made at `slot` ends.
    pub fn end_slot(&self, slot: u8) -> Option<u8> {
        if slot >= CLOSE_SLOT {
            return None;
        }
        match self.steps() {
            Some(h) => {
                let end = slot as usize + h;
                (end <= CLOSE_SLOT as usize).then_some(end as u8)
            }
            None => Some(CLOSE_SLOT),
        }
    }

    /// Number of prediction slots per day with a defined realized return.
    pub fn predictions_per_day(&self) -> usize {
        (0..CLOSE_SLOT).filter(|&s| self.end_slot(s).is_some()).count()
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "10min" | "10m" => Ok(Horizon::Min10),
            "30min" | "30m" => Ok(Horizon::Min30),
            "60min" | "60m" | "1hr" | "1h" => Ok(Horizon::Min60),
            "2hr" | "2h" | "120min" => Ok(Horizon::Hr2),
            "eod" => Ok(Horizon::Eod),
            other => Err(Error::Config(format!("unknown horizon {other:?}"))),
        }
    }
}

impl Serialize for Horizon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Session layout plus the ordered list of trading days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingCalendar {
    pub session_open: NaiveTime,
    pub session_close: NaiveTime,
    pub bar_step_minutes: i64,
    pub last_prediction_time: NaiveTime,
    pub trading_days: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(trading_days: Vec<NaiveDate>) -> Self {
        let mut trading_days = trading_days;
        trading_days.sort();
        trading_days.dedup();
        TradingCalendar {
            session_open: session_open(),
            session_close: session_close(),
            bar_step_minutes: BAR_MINUTES,
            last_prediction_time: NaiveTime::from_hms_opt(15, 50, 0).expect("valid time"),
            trading_days,
        }
    }

    /// Consecutive weekdays starting at `first` (holidays are not modelled).
    pub fn weekdays_from(first: NaiveDate, count: usize) -> Self {
        let mut days = Vec::with_capacity(count);
        let mut d = first;
        while days.len() < count {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                days.push(d);
            }
            d = d.succ_opt().expect("date in range");
        }
        TradingCalendar::new(days)
    }

    /// Grid marks of one day: 39 prediction slots then the close mark.
    pub fn day_grid(&self, date: NaiveDate) -> Vec<GridTime> {
        (0..SLOTS_PER_DAY as u8).map(|s| GridTime::new(date, s)).collect()
    }

    pub fn grid(&self) -> Vec<GridTime> {
        self.trading_days
            .iter()
            .flat_map(|&d| self.day_grid(d))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_day_prediction_counts() {
        let counts: Vec<usize> = Horizon::ALL.iter().map(|h| h.predictions_per_day()).collect();
        assert_eq!(counts, vec![39, 37, 34, 28, 39]);
    }

    #[test]
    fn grid_marks_cover_the_session() {
        let cal = TradingCalendar::weekdays_from(NaiveDate::from_ymd_opt(2013, 1, 4).unwrap(), 2);
        let g = cal.day_grid(cal.trading_days[0]);
        assert_eq!(g.len(), 40);
        assert_eq!(g[0].time(), NaiveTime::from_hms_opt(9, 30, 0).unwrap());
        assert_eq!(g[38].time(), NaiveTime::from_hms_opt(15, 50, 0).unwrap());
        assert_eq!(g[39].time(), NaiveTime::from_hms_opt(16, 0, 0).unwrap());
        // 2013-01-04 is a Friday; the next trading day skips the weekend.
        assert_eq!(cal.trading_days[1], NaiveDate::from_ymd_opt(2013, 1, 7).unwrap());
    }

    #[test]
    fn last_slot_ten_minute_horizon_hits_the_close() {
        assert_eq!(Horizon::Min10.end_slot(38), Some(CLOSE_SLOT));
        assert_eq!(Horizon::Eod.end_slot(0), Some(CLOSE_SLOT));
        assert_eq!(Horizon::Hr2.end_slot(28), None);
        assert_eq!(Horizon::Min10.end_slot(CLOSE_SLOT), None);
    }

    #[test]
    fn grid_time_text_round_trip() {
        let t = GridTime::new(NaiveDate::from_ymd_opt(2013, 3, 1).unwrap(), 7);
        assert_eq!(t.to_string(), "2013-03-01T10:40");
        assert_eq!(t.to_string().parse::<GridTime>().unwrap(), t);
        assert!("2013-03-01T10:45".parse::<GridTime>().is_err());
    }

    #[test]
    fn horizon_parsing() {
        for h in Horizon::ALL {
            assert_eq!(h.label().parse::<Horizon>().unwrap(), h);
        }
        assert!("3hr".parse::<Horizon>().is_err());
    }
}
