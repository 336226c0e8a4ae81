//! Synthetic return panels from a factor model with Ornstein-Uhlenbeck
//! idiosyncratic residuals.
//!
//! Per grid step, `r[t,i] = a[i] + sum_j B[i,j] F[j,t] + (U[t,i] - U[t-1,i])`
//! with i.i.d. Gaussian factors and an exactly discretized OU level `U`.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{ReturnPanel, TradingCalendar, SLOTS_PER_DAY};

/// Fully specified generator. Rates and vols are per grid step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMarketSpec {
    pub n_stocks: usize,
    pub n_factors: usize,
    /// Grid length (rows), laid out 40 per trading day.
    pub n_times: usize,
    pub drift: Vec<f64>,
    /// `n_stocks` rows of `n_factors` loadings.
    pub loadings: Vec<Vec<f64>>,
    pub factor_vol: Vec<f64>,
    pub kappa: Vec<f64>,
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
    pub missing_rate: f64,
    pub seed: u64,
    pub start_date: NaiveDate,
}

impl SyntheticMarketSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_stocks;
        let per_stock = [
            ("drift", self.drift.len()),
            ("loadings", self.loadings.len()),
            ("kappa", self.kappa.len()),
            ("mean", self.mean.len()),
            ("sigma", self.sigma.len()),
        ];
        for (name, len) in per_stock {
            if len != n {
                return Err(Error::Config(format!("{name} has {len} entries, expected {n}")));
            }
        }
        if self.factor_vol.len() != self.n_factors {
            return Err(Error::Config(format!(
                "factor_vol has {} entries, expected {}",
                self.factor_vol.len(),
                self.n_factors
            )));
        }
        if let Some(row) = self.loadings.iter().find(|r| r.len() != self.n_factors) {
            return Err(Error::Config(format!(
                "loading row has {} entries, expected {}",
                row.len(),
                self.n_factors
            )));
        }
        if self.kappa.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(Error::Config("kappa must be positive".into()));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if self.factor_vol.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("factor_vol must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config(format!("missing_rate {} outside [0, 1)", self.missing_rate)));
        }
        Ok(())
    }

    pub fn burn_in(&self) -> usize {
        let slowest = self.kappa.iter().cloned().fold(f64::INFINITY, f64::min);
        (10.0 / slowest).ceil() as usize
    }
}

/// One exact OU transition over a unit step.
#[derive(Debug, Clone, Copy)]
pub struct OuStep {
    pub phi: f64,
    pub mean: f64,
    pub innovation_sd: f64,
}

impl OuStep {
    pub fn new(kappa: f64, mean: f64, sigma: f64) -> Self {
        OuStep {
            phi: (-kappa).exp(),
            mean,
            innovation_sd: sigma * ((1.0 - (-2.0 * kappa).exp()) / (2.0 * kappa)).sqrt(),
        }
    }

    pub fn next(&self, u: f64, shock: f64) -> f64 {
        self.mean + self.phi * (u - self.mean) + self.innovation_sd * shock
    }
}

/// Simulates `len` OU levels starting at the mean after `burn_in` discarded steps.
pub fn simulate_ou_path(kappa: f64, mean: f64, sigma: f64, len: usize, burn_in: usize, seed: u64) -> Vec<f64> {
    let step = OuStep::new(kappa, mean, sigma);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = mean;
    for _ in 0..burn_in {
        u = step.next(u, rng.sample(StandardNormal));
    }
    (0..len)
        .map(|_| {
            u = step.next(u, rng.sample(StandardNormal));
            u
        })
        .collect()
}

pub fn simulate_panel(spec: &SyntheticMarketSpec) -> Result<ReturnPanel> {
    spec.validate()?;
    let (n, j, tn) = (spec.n_stocks, spec.n_factors, spec.n_times);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let steps: Vec<OuStep> = (0..n)
        .map(|i| OuStep::new(spec.kappa[i], spec.mean[i], spec.sigma[i]))
        .collect();
    let burn = spec.burn_in();
    let mut level: Vec<f64> = spec.mean.clone();
    for _ in 0..burn {
        for i in 0..n {
            level[i] = steps[i].next(level[i], rng.sample(StandardNormal));
        }
    }

    let days = tn.div_ceil(SLOTS_PER_DAY);
    let calendar = TradingCalendar::weekdays_from(spec.start_date, days);
    let mut times = ReturnPanel::grid_for_days(&calendar.trading_days);
    times.truncate(tn);
    let tickers: Vec<String> = (0..n).map(|i| format!("S{i:03}")).collect();

    let mut values = vec![0.0; tn * n];
    let mut missing = vec![false; tn * n];
    let mut factors = vec![0.0; j];
    for t in 0..tn {
        for (k, f) in factors.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *f = spec.factor_vol[k] * z;
        }
        for i in 0..n {
            let prev = level[i];
            level[i] = steps[i].next(prev, rng.sample(StandardNormal));
            let systematic: f64 = spec.loadings[i].iter().zip(&factors).map(|(b, f)| b * f).sum();
            values[t * n + i] = spec.drift[i] + systematic + (level[i] - prev);
            if spec.missing_rate > 0.0 {
                missing[t * n + i] = rng.random::<f64>() < spec.missing_rate;
            }
        }
    }
    ReturnPanel::new(times, tickers, values, missing)
}

/// A scalar, an explicit per-entry list, or a uniform range drawn from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Scalar(f64),
    Values(Vec<f64>),
    Range { min: f64, max: f64 },
}

impl Param {
    fn expand(&self, len: usize, rng: &mut ChaCha8Rng, name: &str) -> Result<Vec<f64>> {
        match self {
            Param::Scalar(x) => Ok(vec![*x; len]),
            Param::Values(v) if v.len() == len => Ok(v.clone()),
            Param::Values(v) => Err(Error::Config(format!("{name} lists {} values, expected {len}", v.len()))),
            Param::Range { min, max } if min <= max => {
                Ok((0..len).map(|_| min + (max - min) * rng.random::<f64>()).collect())
            }
            Param::Range { min, max } => Err(Error::Config(format!("{name} range [{min}, {max}] is empty"))),
        }
    }
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2013, 1, 2).expect("valid date")
}

/// Compact configuration that expands into a [`SyntheticMarketSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_stocks: usize,
    pub n_factors: usize,
    /// Number of trading days; ignored when `n_times` is set.
    #[serde(default)]
    pub n_days: Option<usize>,
    #[serde(default)]
    pub n_times: Option<usize>,
    #[serde(default = "zero_param")]
    pub drift: Param,
    /// Explicit loadings; otherwise drawn as `loading_mean + loading_scale * N(0,1)`.
    #[serde(default)]
    pub loadings: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    pub loading_mean: f64,
    #[serde(default = "half")]
    pub loading_scale: f64,
    pub factor_vol: Param,
    pub kappa: Param,
    #[serde(default = "zero_param")]
    pub mean: Param,
    pub sigma: Param,
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
}

fn zero_param() -> Param {
    Param::Scalar(0.0)
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl SyntheticConfig {
    /// Expands parameters deterministically; `fallback_seed` applies when no
    /// seed is set here.
    pub fn to_spec(&self, fallback_seed: u64) -> Result<SyntheticMarketSpec> {
        let seed = self.seed.unwrap_or(fallback_seed);
        // parameter draws use a stream separate from the simulation itself
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let n = self.n_stocks;
        let n_times = match (self.n_times, self.n_days) {
            (Some(t), _) => t,
            (None, Some(d)) => d * SLOTS_PER_DAY,
            (None, None) => return Err(Error::Config("synthetic data needs n_days or n_times".into())),
        };
        let loadings = match &self.loadings {
            Some(l) => l.clone(),
            None => (0..n)
                .map(|_| {
                    (0..self.n_factors)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            self.loading_mean + self.loading_scale * z
                        })
                        .collect()
                })
                .collect(),
        };
        let spec = SyntheticMarketSpec {
            n_stocks: n,
            n_factors: self.n_factors,
            n_times,
            drift: self.drift.expand(n, &mut rng, "drift")?,
            loadings,
            factor_vol: self.factor_vol.expand(self.n_factors, &mut rng, "factor_vol")?,
            kappa: self.kappa.expand(n, &mut rng, "kappa")?,
            mean: self.mean.expand(n, &mut rng, "mean")?,
            sigma: self.sigma.expand(n, &mut rng, "sigma")?,
            missing_rate: self.missing_rate,
            seed,
            start_date: self.start_date,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, j: usize, tn: usize) -> SyntheticMarketSpec {
        SyntheticMarketSpec {
            n_stocks: n,
            n_factors: j,
            n_times: tn,
            drift: vec![0.0; n],
            loadings: vec![vec![1.0; j]; n],
            factor_vol: vec![0.001; j],
            kappa: vec![0.5; n],
            mean: vec![0.0; n],
            sigma: vec![0.002; n],
            missing_rate: 0.0,
            seed: 11,
            start_date: default_start(),
        }
    }

    #[test]
    fn deterministic_limit_returns_drift() {
        let mut s = spec(3, 2, 120);
        s.drift = vec![1e-4, -2e-4, 3e-4];
        s.sigma = vec![1e-300; 3];
        s.factor_vol = vec![1e-300; 2];
        let p = simulate_panel(&s).unwrap();
        for t in 0..p.n_times() {
            for i in 0..3 {
                assert!((p.get(t, i).unwrap() - s.drift[i]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn no_missing_when_rate_is_zero() {
        let p = simulate_panel(&spec(4, 1, 200)).unwrap();
        assert!(p.missing_mask().iter().all(|m| !m));
    }

    #[test]
    fn missing_rate_is_honoured_roughly() {
        let mut s = spec(20, 1, 2000);
        s.missing_rate = 0.1;
        let p = simulate_panel(&s).unwrap();
        let frac = p.missing_mask().iter().filter(|m| **m).count() as f64 / 40_000.0;
        // binomial sd is 0.0015
        assert!((frac - 0.1).abs() < 0.006, "{frac}");
    }

    #[test]
    fn same_seed_same_panel() {
        let s = spec(5, 2, 400);
        let a = simulate_panel(&s).unwrap();
        let b = simulate_panel(&s).unwrap();
        assert_eq!(a, b);
        let mut s2 = s.clone();
        s2.seed += 1;
        assert_ne!(simulate_panel(&s2).unwrap(), a);
    }

    #[test]
    fn partial_final_day_layout() {
        let p = simulate_panel(&spec(2, 1, 100)).unwrap();
        assert_eq!(p.n_times(), 100);
        assert_eq!(p.n_days(), 3);
        assert_eq!(p.times()[80].slot, 0);
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut s = spec(2, 1, 10);
        s.kappa[0] = 0.0;
        assert!(simulate_panel(&s).is_err());
        let mut s = spec(2, 1, 10);
        s.missing_rate = 1.0;
        assert!(simulate_panel(&s).is_err());
        let mut s = spec(2, 1, 10);
        s.loadings.pop();
        assert!(simulate_panel(&s).is_err());
    }

    #[test]
    fn increment_lag_one_autocovariance_matches_closed_form() {
        // Oracle: for an exact OU with phi = exp(-kappa) and stationary
        // variance V = sigma^2 / (2 kappa), Cov(dU_t, dU_{t-1}) = -V (1 - phi)^2.
        let kappa = 0.3;
        let sigma = 0.01;
        let mut s = spec(1, 0, 100_000);
        s.loadings = vec![vec![]];
        s.factor_vol = vec![];
        s.kappa = vec![kappa];
        s.sigma = vec![sigma];
        let p = simulate_panel(&s).unwrap();
        let r: Vec<f64> = (0..p.n_times()).map(|t| p.get(t, 0).unwrap()).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let acov = r.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (r.len() - 1) as f64;
        let v = sigma * sigma / (2.0 * kappa);
        let phi = (-kappa).exp();
        let expected = -v * (1.0 - phi).powi(2);
        assert!(acov < 0.0);
        assert!((acov / expected - 1.0).abs() < 0.1, "{acov} vs {expected}");
    }

    #[test]
    fn driftless_factorless_means_shrink() {
        let mut s = spec(10, 0, 20_000);
        s.loadings = vec![vec![]; 10];
        s.factor_vol = vec![];
        let p = simulate_panel(&s).unwrap();
        for i in 0..10 {
            let mean = (0..p.n_times()).map(|t| p.get(t, i).unwrap()).sum::<f64>() / p.n_times() as f64;
            assert!(mean.abs() < 3.0 * s.sigma[i] / (p.n_times() as f64).sqrt(), "{mean}");
        }
    }

    #[test]
    fn stationary_variance_of_level() {
        let (kappa, sigma) = (0.5, 0.2);
        let u = simulate_ou_path(kappa, 1.0, sigma, 100_000, 100, 5);
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        let var = u.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (u.len() - 1) as f64;
        let target = sigma * sigma / (2.0 * kappa);
        assert!((var / target - 1.0).abs() < 0.05, "{var} vs {target}");
    }

    #[test]
    fn config_expansion() {
        let cfg: SyntheticConfig = serde_json::from_str(
            r#"{"n_stocks": 4, "n_factors": 2, "n_days": 2, "factor_vol": 0.001,
                "kappa": {"min": 0.2, "max": 0.4}, "sigma": [0.1, 0.2, 0.3, 0.4]}"#,
        )
        .unwrap();
        let s = cfg.to_spec(9).unwrap();
        assert_eq!(s.n_times, 80);
        assert_eq!(s.seed, 9);
        assert!(s.kappa.iter().all(|k| (0.2..=0.4).contains(k)));
        assert_eq!(s.sigma[3], 0.4);
        assert_eq!(cfg.to_spec(9).unwrap(), s);
        let bad: SyntheticConfig = serde_json::from_str(
            r#"{"n_stocks": 4, "n_factors": 1, "n_days": 1, "factor_vol": 0.1, "kappa": 1.0, "sigma": [1.0]}"#,
        )
        .unwrap();
        assert!(bad.to_spec(0).is_err());
    }
}
