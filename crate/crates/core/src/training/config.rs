use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{Horizon, SLOTS_PER_DAY};

/// A duration on the session grid: whole 10-minute steps or whole trading days.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Span {
    Minutes(u32),
    Days(u32),
}

impl Span {
    /// Length in training steps when a day holds `per_day` of them.
    pub fn steps(&self, per_day: usize) -> usize {
        match *self {
            Span::Minutes(m) => m as usize / 10,
            Span::Days(d) => d as usize * per_day,
        }
    }

    fn is_positive(&self) -> bool {
        match *self {
            Span::Minutes(m) => m > 0,
            Span::Days(d) => d > 0,
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Span::Minutes(m) => write!(f, "{m}min"),
            Span::Days(d) => write!(f, "{d}day"),
        }
    }
}

impl FromStr for Span {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
        let (num, unit) = s.split_at(split);
        let n: u32 = num
            .parse()
            .map_err(|_| Error::Config(format!("span {s:?} has no leading count")))?;
        let span = match unit.trim() {
            "min" | "m" | "mins" | "minute" | "minutes" => Span::Minutes(n),
            "h" | "hr" | "hrs" | "hour" | "hours" => Span::Minutes(n * 60),
            "d" | "day" | "days" => Span::Days(n),
            other => return Err(Error::Config(format!("unknown span unit {other:?} in {s:?}"))),
        };
        if let Span::Minutes(m) = span {
            if m % 10 != 0 {
                return Err(Error::Config(format!("span {s:?} is not a multiple of 10 minutes")));
            }
        }
        Ok(span)
    }
}

impl Serialize for Span {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-horizon windowing and cross-validation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    pub horizon: Horizon,
    /// Training window `M`.
    pub window: Span,
    /// Buffer `tau` between the window and the forecast time.
    pub buffer: Span,
    #[serde(default = "one")]
    pub cv_frequency_days: usize,
    #[serde(default = "five")]
    pub cv_window_days: usize,
    #[serde(default = "seventy")]
    pub cv_split: f64,
}

fn one() -> usize {
    1
}

fn five() -> usize {
    5
}

fn seventy() -> f64 {
    0.7
}

impl HorizonConfig {
    pub fn for_horizon(horizon: Horizon) -> Self {
        let (window, buffer) = match horizon {
            Horizon::Min10 => (Span::Minutes(30), Span::Minutes(10)),
            Horizon::Min30 => (Span::Minutes(30), Span::Minutes(30)),
            Horizon::Min60 => (Span::Minutes(60), Span::Minutes(60)),
            Horizon::Hr2 => (Span::Minutes(60), Span::Minutes(120)),
            Horizon::Eod => (Span::Days(1), Span::Days(1)),
        };
        HorizonConfig {
            horizon,
            window,
            buffer,
            cv_frequency_days: 1,
            cv_window_days: 5,
            cv_split: 0.7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.horizon;
        if !self.window.is_positive() {
            return Err(Error::Config(format!("{h}: training window must be positive")));
        }
        let buffer_ok = match (h.steps(), self.buffer) {
            (Some(steps), Span::Minutes(m)) => m as usize / 10 >= steps,
            (_, Span::Days(d)) => d >= 1,
            (None, Span::Minutes(_)) => false,
        };
        if !buffer_ok {
            return Err(Error::Config(format!(
                "{h}: buffer {} is shorter than the horizon",
                self.buffer
            )));
        }
        if self.cv_frequency_days == 0 || self.cv_window_days == 0 {
            return Err(Error::Config(format!("{h}: CV frequency and window must be positive")));
        }
        if !(self.cv_split > 0.0 && self.cv_split < 1.0) {
            return Err(Error::Config(format!("{h}: cv_split must lie in (0, 1)")));
        }
        Ok(())
    }

    /// Inclusive training rows for a forecast at row `t`, or `None` when the
    /// window would start before `sample_start` or `t` has no defined target.
    ///
    /// Steps run along the horizon's own timeline: the slots of each day whose
    /// realized return is defined (39, 37, 34, 28 and 39 per day). Two
    /// day-valued spans select whole trading days ending `buffer` days back;
    /// otherwise the window is `[t - buffer - window, t - buffer - 1]` in steps.
    pub fn window_rows(&self, t: usize, sample_start: usize) -> Option<(usize, usize)> {
        let per_day = self.horizon.predictions_per_day();
        let (day, slot) = (t / SLOTS_PER_DAY, t % SLOTS_PER_DAY);
        if slot >= per_day {
            return None;
        }
        let step_row = |p: usize| (p / per_day) * SLOTS_PER_DAY + p % per_day;
        let (start, end) = match (self.window, self.buffer) {
            (Span::Days(m), Span::Days(b)) => {
                let first = day.checked_sub(b as usize + m as usize - 1)?;
                let last = day - b as usize;
                (first * SLOTS_PER_DAY, last * SLOTS_PER_DAY + per_day - 1)
            }
            (w, b) => {
                let p = day * per_day + slot;
                let first = p.checked_sub(b.steps(per_day) + w.steps(per_day))?;
                (step_row(first), step_row(p - b.steps(per_day) - 1))
            }
        };
        (start >= sample_start && end >= start).then_some((start, end))
    }
}

/// Log-spaced penalty scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid {
            min: 1e-8,
            max: 1e2,
            points: 21,
        }
    }
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let (a, b) = (self.min.log10(), self.max.log10());
        (0..self.points)
            .map(|k| 10f64.powf(a + (b - a) * k as f64 / (self.points - 1) as f64))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite()) || self.points == 0 {
            return Err(Error::Config("lambda grid needs 0 < min <= max and at least one point".into()));
        }
        Ok(())
    }
}

/// How the readout penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// Daily chronological cross-validation over the lambda grid.
    #[default]
    CrossValidated,
    /// Unpenalized least squares.
    Zero,
    /// Fixed isotropic penalty `lambda I`.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingOptions {
    /// Days after the first signal before any row enters training.
    pub washout_days: usize,
    pub penalty: Penalty,
    pub lambda_grid: LambdaGrid,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        TrainingOptions {
            washout_days: 1,
            penalty: Penalty::CrossValidated,
            lambda_grid: LambdaGrid::default(),
        }
    }
}

impl TrainingOptions {
    pub fn validate(&self) -> Result<()> {
        if let Penalty::Fixed(l) = self.penalty {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config("fixed penalty must be finite and non-negative".into()));
            }
        }
        self.lambda_grid.validate()
    }
}
