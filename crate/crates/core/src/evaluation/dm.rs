use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Diebold-Mariano outcome for `d = loss_a - loss_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DmOutcome {
    /// HLN-corrected statistic with a two-sided Student-t p-value.
    Statistic { statistic: f64, p_value: f64 },
    /// Zero long-run variance with a nonzero mean: `sign` is +1 when `a` has
    /// the larger loss.
    Dominance { sign: i8, p_value: f64 },
    /// The differential is identically zero.
    Equal,
}

impl DmOutcome {
    pub fn statistic(&self) -> Option<f64> {
        match self {
            DmOutcome::Statistic { statistic, .. } => Some(*statistic),
            DmOutcome::Dominance { sign, .. } => Some(*sign as f64 * f64::INFINITY),
            DmOutcome::Equal => None,
        }
    }

    pub fn p_value(&self) -> Option<f64> {
        match self {
            DmOutcome::Statistic { p_value, .. } | DmOutcome::Dominance { p_value, .. } => Some(*p_value),
            DmOutcome::Equal => None,
        }
    }
}

/// Bartlett-kernel long-run variance with `lags` autocovariances.
pub fn bartlett_lrv(d: &[f64], lags: usize) -> f64 {
    let t = d.len();
    let mean = d.iter().sum::<f64>() / t as f64;
    let gamma = |k: usize| (k..t).map(|s| (d[s] - mean) * (d[s - k] - mean)).sum::<f64>() / t as f64;
    let bandwidth = (lags + 1) as f64;
    (1..=lags.min(t.saturating_sub(1))).fold(gamma(0), |acc, k| acc + 2.0 * (1.0 - k as f64 / bandwidth) * gamma(k))
}

/// Diebold-Mariano test with `h_overlap - 1` Bartlett lags and the
/// Harvey-Leybourne-Newbold small-sample correction.
pub fn diebold_mariano(loss_a: &[f64], loss_b: &[f64], h_overlap: usize) -> Result<DmOutcome> {
    if loss_a.len() != loss_b.len() || loss_a.len() < 2 {
        return Err(Error::Data(format!(
            "DM needs two equal series of length >= 2, got {} and {}",
            loss_a.len(),
            loss_b.len()
        )));
    }
    if h_overlap == 0 {
        return Err(Error::Config("DM overlap must be at least 1".into()));
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("non-finite loss differential".into()));
    }
    if d.iter().all(|&x| x == 0.0) {
        return Ok(DmOutcome::Equal);
    }
    let t = d.len() as f64;
    let mean = d.iter().sum::<f64>() / t;
    let lrv = bartlett_lrv(&d, h_overlap - 1);
    let scale = d.iter().map(|x| x * x).sum::<f64>() / t;
    if lrv <= 1e-20 * scale {
        if mean == 0.0 {
            return Ok(DmOutcome::Equal);
        }
        return Ok(DmOutcome::Dominance {
            sign: if mean > 0.0 { 1 } else { -1 },
            p_value: 0.0,
        });
    }
    let h = h_overlap as f64;
    let dm = mean / (lrv / t).sqrt();
    let hln = ((t + 1.0 - 2.0 * h + h * (h - 1.0) / t) / t).max(0.0).sqrt();
    let statistic = dm * hln;
    let dist = StudentsT::new(0.0, 1.0, t - 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
    let p_value = 2.0 * (1.0 - dist.cdf(statistic.abs()));
    Ok(DmOutcome::Statistic { statistic, p_value })
}
