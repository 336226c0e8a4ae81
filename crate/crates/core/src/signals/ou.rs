//! Windowed Ornstein-Uhlenbeck estimation via AR(1) on discretized residuals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// AR(1)-based OU estimate for one discretization window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuEstimate {
    /// Discretization window `P` in grid steps.
    pub window: usize,
    pub c0: f64,
    pub cu: f64,
    /// `-ln(cu)`.
    pub kappa: f64,
    /// `c0 / (1 - cu)`.
    pub mean: f64,
    /// Z-score scale `sqrt(Var(eta) / (2 kappa))`.
    pub sigma: f64,
    /// Diffusion volatility implied by the exact discretization,
    /// `sqrt(2 kappa Var(eta) / (1 - cu^2))`.
    pub diffusion_sigma: f64,
    pub eta_variance: f64,
    /// Per-step drift from the factor regression intercept.
    pub drift: f64,
    /// Latest discretized residual level.
    pub current: f64,
    /// False unless `0 < cu < 1` and the residual variance is positive.
    pub valid: bool,
}

impl OuEstimate {
    /// Fits `x[t+1] = c0 + cu x[t] + eta` by OLS on a level series.
    pub fn from_levels(levels: &[f64], window: usize, drift: f64) -> Result<Self> {
        let n = levels.len().saturating_sub(1);
        if n < 3 {
            return Err(Error::InsufficientHistory(format!(
                "AR(1) fit needs at least 4 levels, got {}",
                levels.len()
            )));
        }
        let x = &levels[..n];
        let y = &levels[1..];
        let mx = x.iter().sum::<f64>() / n as f64;
        let my = y.iter().sum::<f64>() / n as f64;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
        }
        let current = *levels.last().expect("non-empty");
        if sxx <= 0.0 {
            return Ok(OuEstimate::invalid(window, drift, current));
        }
        let cu = sxy / sxx;
        let c0 = my - cu * mx;
        let eta_variance = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - c0 - cu * a).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        let valid = cu > 0.0 && cu < 1.0 && eta_variance > 0.0;
        if !valid {
            return Ok(OuEstimate {
                c0,
                cu,
                eta_variance,
                ..OuEstimate::invalid(window, drift, current)
            });
        }
        let kappa = -cu.ln();
        Ok(OuEstimate {
            window,
            c0,
            cu,
            kappa,
            mean: c0 / (1.0 - cu),
            sigma: (eta_variance / (2.0 * kappa)).sqrt(),
            diffusion_sigma: (2.0 * kappa * eta_variance / (1.0 - cu * cu)).sqrt(),
            eta_variance,
            drift,
            current,
            valid: kappa > 0.0 && kappa.is_finite(),
        })
    }

    fn invalid(window: usize, drift: f64, current: f64) -> Self {
        OuEstimate {
            window,
            c0: f64::NAN,
            cu: f64::NAN,
            kappa: f64::NAN,
            mean: f64::NAN,
            sigma: f64::NAN,
            diffusion_sigma: f64::NAN,
            eta_variance: f64::NAN,
            drift,
            current,
            valid: false,
        }
    }
}

/// Trailing inclusive sums `sum_{s=t-P..t} resid[s]` for every `t >= P`.
pub fn discretize_residuals(residuals: &[f64], window: usize) -> Vec<f64> {
    if residuals.len() <= window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(residuals.len() - window);
    let mut acc: f64 = residuals[..=window].iter().sum();
    out.push(acc);
    for t in window + 1..residuals.len() {
        acc += residuals[t] - residuals[t - window - 1];
        out.push(acc);
    }
    out
}

/// OU estimate for window `P` from a residual series ending at the current time.
pub fn ou_estimate(residuals: &[f64], window: usize, drift: f64) -> Result<OuEstimate> {
    if residuals.len() < window + 4 {
        return Err(Error::InsufficientHistory(format!(
            "window {window} needs at least {} residuals, got {}",
            window + 4,
            residuals.len()
        )));
    }
    OuEstimate::from_levels(&discretize_residuals(residuals, window), window, drift)
}

/// `(U - m) / sigma - a / (kappa sigma)`; `None` for invalid estimates.
pub fn modified_z_score(est: &OuEstimate, current: f64) -> Option<f64> {
    if !est.valid {
        return None;
    }
    let z = (current - est.mean) / est.sigma;
    let shifted = z - est.drift / (est.kappa * est.sigma);
    shifted.is_finite().then_some(shifted)
}
