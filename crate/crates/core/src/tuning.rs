//! Random search over reservoir hyperparameters on a pre-sample.

use std::io::Write;
use std::time::Instant;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::msfe_series;
use crate::market_data::{Horizon, ReturnPanel};
use crate::reservoir::ReservoirSpec;
use crate::signals::SignalPanel;
use crate::training::{run_esn, HorizonConfig, TrainingOptions};

fn steps(scale: f64, ks: std::ops::RangeInclusive<u32>) -> Vec<f64> {
    ks.map(|k| (k as f64 * scale * 1e6).round() / 1e6).collect()
}

/// Grid points for each searched field. Every other field comes from the base
/// spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub alpha: Vec<f64>,
    pub rho: Vec<f64>,
    pub gamma: Vec<f64>,
    pub a_sparsity: Vec<f64>,
    pub c_sparsity: Vec<f64>,
    pub budget: usize,
    pub seed: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            alpha: steps(0.1, 0..=10),
            rho: steps(0.1, 0..=10),
            gamma: steps(0.005, 1..=10),
            a_sparsity: steps(0.05, 1..=19),
            c_sparsity: steps(0.05, 1..=19),
            budget: 20,
            seed: 0,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("tuning budget must be at least 1".into()));
        }
        for (name, g) in [
            ("alpha", &self.alpha),
            ("rho", &self.rho),
            ("gamma", &self.gamma),
            ("a_sparsity", &self.a_sparsity),
            ("c_sparsity", &self.c_sparsity),
        ] {
            if g.is_empty() {
                return Err(Error::Config(format!("search range for {name} is empty")));
            }
        }
        Ok(())
    }

    /// Trial `k` draws uniformly from each grid on its own stream.
    pub fn sample(&self, base: &ReservoirSpec, k: usize) -> ReservoirSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k as u64);
        let mut pick = |g: &[f64]| g[rng.random_range(0..g.len())];
        ReservoirSpec {
            alpha: pick(&self.alpha),
            rho: pick(&self.rho),
            gamma: pick(&self.gamma),
            a_sparsity: pick(&self.a_sparsity),
            c_sparsity: pick(&self.c_sparsity),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub spec: ReservoirSpec,
    /// Terminal cuMSFE on the pre-sample.
    pub objective: Option<f64>,
    pub seconds: f64,
    pub error: Option<String>,
    pub first_forecast: Option<NaiveDate>,
    pub last_forecast: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub horizon: Horizon,
    pub best: ReservoirSpec,
    pub best_trial: usize,
    pub best_objective: f64,
    pub sample_first: NaiveDate,
    pub sample_last: NaiveDate,
    pub evaluation_start: Option<NaiveDate>,
    pub trials: Vec<Trial>,
}

/// Runs the ESN for every candidate and keeps the lowest cuMSFE; ties go to
/// the lower index.
pub fn evaluate_candidates(
    candidates: Vec<ReservoirSpec>,
    horizon: Horizon,
    signals: &SignalPanel,
    returns: &ReturnPanel,
    cfg: &HorizonConfig,
    opts: &TrainingOptions,
    evaluation_start: Option<NaiveDate>,
) -> Result<TuneResult> {
    let dates = returns.dates();
    let (Some(&first), Some(&last)) = (dates.first(), dates.last()) else {
        return Err(Error::Data("empty tuning sample".into()));
    };
    if let Some(start) = evaluation_start {
        if last >= start {
            return Err(Error::Config(format!(
                "tuning sample ends {last}, not before the evaluation start {start}"
            )));
        }
    }
    let trials: Vec<Trial> = candidates
        .into_par_iter()
        .enumerate()
        .map(|(index, spec)| {
            let clock = Instant::now();
            let run = run_esn(signals, returns, cfg, opts, &spec)
                .and_then(|f| msfe_series(&f, returns).map(|m| (m.total(), f)));
            let seconds = clock.elapsed().as_secs_f64();
            match run {
                Ok((objective, f)) => Trial {
                    index,
                    spec,
                    objective: Some(objective),
                    seconds,
                    error: None,
                    first_forecast: f.records.first().map(|r| r.time.date),
                    last_forecast: f.records.last().map(|r| r.time.date),
                },
                Err(e) => Trial {
                    index,
                    spec,
                    objective: None,
                    seconds,
                    error: Some(e.to_string()),
                    first_forecast: None,
                    last_forecast: None,
                },
            }
        })
        .collect();
    let best = trials
        .iter()
        .filter_map(|t| t.objective.filter(|o| o.is_finite()).map(|o| (t.index, o)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let Some((best_trial, best_objective)) = best else {
        let why: Vec<String> = trials
            .iter()
            .map(|t| format!("trial {}: {}", t.index, t.error.as_deref().unwrap_or("non-finite objective")))
            .collect();
        return Err(Error::Data(format!("all tuning trials failed: {}", why.join("; "))));
    };
    Ok(TuneResult {
        horizon,
        best: trials[best_trial].spec.clone(),
        best_trial,
        best_objective,
        sample_first: first,
        sample_last: last,
        evaluation_start,
        trials,
    })
}

/// Random search with `space.budget` trials around `base`.
#[allow(clippy::too_many_arguments)]
pub fn tune(
    space: &SearchSpace,
    base: &ReservoirSpec,
    horizon: Horizon,
    signals: &SignalPanel,
    returns: &ReturnPanel,
    cfg: &HorizonConfig,
    opts: &TrainingOptions,
    evaluation_start: Option<NaiveDate>,
) -> Result<TuneResult> {
    space.validate()?;
    let candidates = (0..space.budget).map(|k| space.sample(base, k)).collect();
    evaluate_candidates(candidates, horizon, signals, returns, cfg, opts, evaluation_start)
}

impl TuneResult {
    /// `{"reservoir": {"<horizon>": spec}}`, mergeable into a run configuration.
    pub fn fragment(&self) -> serde_json::Value {
        serde_json::json!({ "reservoir": { self.horizon.label(): self.best } })
    }

    pub fn write_trial_log<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record([
            "trial",
            "alpha",
            "rho",
            "gamma",
            "a_sparsity",
            "c_sparsity",
            "cumsfe",
            "seconds",
            "first_forecast",
            "last_forecast",
            "error",
        ])?;
        for t in &self.trials {
            let s = &t.spec;
            w.write_record([
                t.index.to_string(),
                s.alpha.to_string(),
                s.rho.to_string(),
                s.gamma.to_string(),
                s.a_sparsity.to_string(),
                s.c_sparsity.to_string(),
                t.objective.map(|o| o.to_string()).unwrap_or_default(),
                format!("{:.3}", t.seconds),
                t.first_forecast.map(|d| d.to_string()).unwrap_or_default(),
                t.last_forecast.map(|d| d.to_string()).unwrap_or_default(),
                t.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trial log>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids_contain_the_published_values() {
        let s = SearchSpace::default();
        for h in Horizon::ALL {
            let p = ReservoirSpec::for_horizon(h);
            assert!(s.alpha.contains(&p.alpha), "{h} alpha");
            assert!(s.rho.contains(&p.rho), "{h} rho");
            assert!(s.gamma.contains(&p.gamma), "{h} gamma");
            assert!(s.a_sparsity.contains(&p.a_sparsity), "{h} a");
            assert!(s.c_sparsity.contains(&p.c_sparsity), "{h} c");
        }
        assert_eq!(s.alpha.len(), 11);
        assert_eq!(s.gamma.len(), 10);
        assert_eq!(s.a_sparsity.len(), 19);
    }

    #[test]
    fn sampling_is_deterministic_and_on_grid() {
        let s = SearchSpace::default();
        let base = ReservoirSpec::default();
        for k in 0..50 {
            let a = s.sample(&base, k);
            assert_eq!(a, s.sample(&base, k));
            assert!(s.rho.contains(&a.rho) && s.c_sparsity.contains(&a.c_sparsity));
            assert_eq!(a.seed, base.seed);
            assert_eq!(a.state_dim, base.state_dim);
        }
        assert_ne!(s.sample(&base, 0), s.sample(&base, 1));
    }

    #[test]
    fn empty_space_or_zero_budget_rejected() {
        assert!(SearchSpace { budget: 0, ..Default::default() }.validate().is_err());
        assert!(SearchSpace { rho: vec![], ..Default::default() }.validate().is_err());
    }
}
