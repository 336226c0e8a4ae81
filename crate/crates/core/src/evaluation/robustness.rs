use serde::{Deserialize, Serialize};

use super::metrics::AlignedForecasts;
use crate::error::{Error, Result};
use crate::market_data::{GridTime, ReturnPanel};
use crate::reservoir::ReservoirSpec;
use crate::signals::SignalPanel;
use crate::training::{run_baseline, run_esn, ForecastSet, HorizonConfig, TrainingOptions};

pub const BAND_PROBS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise 5/25/50/75/95 percent bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBands {
    pub q05: Vec<f64>,
    pub q25: Vec<f64>,
    pub median: Vec<f64>,
    pub q75: Vec<f64>,
    pub q95: Vec<f64>,
}

impl QuantileBands {
    pub fn from_curves(curves: &[Vec<f64>]) -> Result<Self> {
        let len = curves.first().map(Vec::len).ok_or_else(|| Error::Data("no curves".into()))?;
        if curves.iter().any(|c| c.len() != len) {
            return Err(Error::Data("curves differ in length".into()));
        }
        let mut out: [Vec<f64>; 5] = Default::default();
        let mut col = Vec::with_capacity(curves.len());
        for k in 0..len {
            col.clear();
            col.extend(curves.iter().map(|c| c[k]));
            col.sort_by(f64::total_cmp);
            for (q, p) in out.iter_mut().zip(BAND_PROBS) {
                q.push(quantile_sorted(&col, p));
            }
        }
        let [q05, q25, median, q75, q95] = out;
        Ok(QuantileBands { q05, q25, median, q75, q95 })
    }

    /// Whether every band is pointwise ordered.
    pub fn is_nested(&self) -> bool {
        (0..self.median.len()).all(|k| {
            self.q05[k] <= self.q25[k]
                && self.q25[k] <= self.median[k]
                && self.median[k] <= self.q75[k]
                && self.q75[k] <= self.q95[k]
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessResult {
    pub seeds: Vec<u64>,
    pub times: Vec<GridTime>,
    /// Relative cuMSFE (`esn / baseline - 1`) per seed.
    pub curves: Vec<Vec<f64>>,
    pub bands: QuantileBands,
}

/// Relative cuMSFE curves of several ESN runs against one baseline, aligned
/// on the keys all runs share.
pub fn relative_curves(baseline: &ForecastSet, runs: &[ForecastSet], returns: &ReturnPanel) -> Result<(Vec<GridTime>, Vec<Vec<f64>>)> {
    let mut sets = vec![baseline];
    sets.extend(runs.iter());
    let aligned = AlignedForecasts::align(&sets, returns)?;
    let base = aligned.msfe(0).cumsfe;
    let curves = (1..sets.len())
        .map(|m| aligned.msfe(m).cumsfe.iter().zip(&base).map(|(e, b)| e / b - 1.0).collect())
        .collect();
    Ok((aligned.times, curves))
}

/// Re-runs the ESN with seeds `base.seed + 1 ..= base.seed + n_models`,
/// everything else held fixed.
pub fn robustness_study(
    base_spec: &ReservoirSpec,
    n_models: usize,
    signals: &SignalPanel,
    returns: &ReturnPanel,
    cfg: &HorizonConfig,
    opts: &TrainingOptions,
) -> Result<RobustnessResult> {
    if n_models == 0 {
        return Err(Error::Config("robustness study needs at least one model".into()));
    }
    let baseline = run_baseline(signals, returns, cfg, opts)?;
    let seeds: Vec<u64> = (1..=n_models as u64).map(|k| base_spec.seed + k).collect();
    let mut runs = Vec::with_capacity(n_models);
    for &seed in &seeds {
        let spec = ReservoirSpec { seed, ..base_spec.clone() };
        let mut set = run_esn(signals, returns, cfg, opts, &spec)?;
        set.model = format!("esn_seed{seed}");
        runs.push(set);
    }
    let (times, curves) = relative_curves(&baseline, &runs, returns)?;
    let bands = QuantileBands::from_curves(&curves)?;
    Ok(RobustnessResult { seeds, times, curves, bands })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&x, 0.0), 1.0);
        assert_eq!(quantile_sorted(&x, 1.0), 4.0);
        assert!((quantile_sorted(&x, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&x, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn single_curve_collapses() {
        let b = QuantileBands::from_curves(&[vec![0.1, -0.2]]).unwrap();
        assert_eq!(b.q05, b.q95);
        assert_eq!(b.median, vec![0.1, -0.2]);
    }

    #[test]
    fn equal_curves_give_zero_width() {
        let c = vec![0.3, 0.4, -0.1];
        let b = QuantileBands::from_curves(&[c.clone(), c.clone(), c.clone()]).unwrap();
        assert_eq!(b.q05, c);
        assert_eq!(b.q95, c);
    }

    #[test]
    fn bands_nest() {
        let curves: Vec<Vec<f64>> = (0..20).map(|s| (0..50).map(|k| ((s * 31 + k * 17) % 23) as f64).collect()).collect();
        assert!(QuantileBands::from_curves(&curves).unwrap().is_nested());
    }
}
