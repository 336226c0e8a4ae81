use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_psd;
use crate::market_data::{GridTime, Horizon};

/// Fitted readout `mu + theta' x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutCoefficients {
    pub mu: f64,
    pub theta: Vec<f64>,
    pub fitted_at: Option<GridTime>,
    pub horizon: Option<Horizon>,
    pub lambda_selected: f64,
    /// The normal equations were singular and the minimum-norm solution was used.
    pub pseudo_inverse: bool,
}

pub fn predict(coeffs: &ReadoutCoefficients, x: Option<&[f64]>) -> Option<f64> {
    let x = x?;
    if x.len() != coeffs.theta.len() {
        return None;
    }
    Some(coeffs.mu + coeffs.theta.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
}

/// Pooled training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    /// `rows x dim` design.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// `(time row, stock)` per design row.
    pub keys: Vec<(usize, usize)>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// Minimizes `(1/n) sum (y - mu - theta'x)^2 + theta' diag(penalty) theta`
/// with `mu` unpenalized, on explicitly centered data.
pub fn ridge_fit(batch: &TrainingBatch, penalty: &[f64]) -> Result<ReadoutCoefficients> {
    let (n, d) = (batch.len(), batch.dim());
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    check_penalty(penalty, d)?;
    let nf = n as f64;
    let xbar: DVector<f64> = batch.x.row_sum().transpose() / nf;
    let ybar = batch.y.sum() / nf;
    let mut xc = batch.x.clone();
    for mut row in xc.row_iter_mut() {
        row -= xbar.transpose();
    }
    let yc = batch.y.add_scalar(-ybar);
    let mut a = xc.tr_mul(&xc) / nf;
    for (j, p) in penalty.iter().enumerate() {
        a[(j, j)] += p;
    }
    let b = xc.tr_mul(&yc) / nf;
    let sol = solve_psd(&a, &b);
    Ok(ReadoutCoefficients {
        mu: ybar - sol.x.dot(&xbar),
        theta: sol.x.iter().copied().collect(),
        fitted_at: None,
        horizon: None,
        lambda_selected: f64::NAN,
        pseudo_inverse: sol.pseudo_inverse,
    })
}

fn check_penalty(penalty: &[f64], d: usize) -> Result<()> {
    if penalty.len() != d {
        return Err(Error::Invariant(format!("penalty has {} entries, design has {d}", penalty.len())));
    }
    if penalty.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
        return Err(Error::Invariant("penalty entries must be finite and non-negative".into()));
    }
    Ok(())
}

/// Augmented Gram matrix `sum a a'` with `a = [1, x, y]`, additive over rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GramStats {
    pub g: DMatrix<f64>,
}

impl GramStats {
    pub fn zeros(dim: usize) -> Self {
        GramStats {
            g: DMatrix::zeros(dim + 2, dim + 2),
        }
    }

    /// Statistics of the rows of `x` (`n x dim`) with targets `y`.
    pub fn from_rows(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let (n, d) = x.shape();
        let mut a = DMatrix::zeros(n, d + 2);
        a.column_mut(0).fill(1.0);
        a.view_mut((0, 1), (n, d)).copy_from(x);
        a.column_mut(d + 1).copy_from(y);
        GramStats { g: a.tr_mul(&a) }
    }

    pub fn from_batch(batch: &TrainingBatch) -> Self {
        Self::from_rows(&batch.x, &batch.y)
    }

    pub fn dim(&self) -> usize {
        self.g.nrows() - 2
    }

    pub fn count(&self) -> f64 {
        self.g[(0, 0)]
    }

    pub fn add(&mut self, other: &GramStats) {
        self.g += &other.g;
    }

    /// Raw second moment of each design coordinate.
    pub fn second_moments(&self) -> Vec<f64> {
        let n = self.count();
        (1..=self.dim()).map(|j| self.g[(j, j)] / n).collect()
    }

    /// Ridge solution from sufficient statistics; same objective as [`ridge_fit`].
    pub fn ridge(&self, penalty: &[f64]) -> Result<ReadoutCoefficients> {
        let d = self.dim();
        let n = self.count();
        if n < 1.0 {
            return Err(Error::EmptyBatch);
        }
        check_penalty(penalty, d)?;
        let xbar: DVector<f64> = self.g.view((1, 0), (d, 1)).column(0) / n;
        let ybar = self.g[(0, d + 1)] / n;
        let mut a: DMatrix<f64> = self.g.view((1, 1), (d, d)) / n - &xbar * xbar.transpose();
        for (j, p) in penalty.iter().enumerate() {
            a[(j, j)] += p;
        }
        let b: DVector<f64> = self.g.view((1, d + 1), (d, 1)).column(0) / n - &xbar * ybar;
        let sol = solve_psd(&a, &b);
        Ok(ReadoutCoefficients {
            mu: ybar - sol.x.dot(&xbar),
            theta: sol.x.iter().copied().collect(),
            fitted_at: None,
            horizon: None,
            lambda_selected: f64::NAN,
            pseudo_inverse: sol.pseudo_inverse,
        })
    }

    /// Mean squared error of a readout over the rows summarized here.
    pub fn mse(&self, coeffs: &ReadoutCoefficients) -> f64 {
        let d = self.dim();
        let n = self.count();
        let mut beta = DVector::zeros(d + 1);
        beta[0] = coeffs.mu;
        for (j, t) in coeffs.theta.iter().enumerate() {
            beta[j + 1] = *t;
        }
        let gaa = self.g.view((0, 0), (d + 1, d + 1));
        let gay = self.g.view((0, d + 1), (d + 1, 1));
        let yy = self.g[(d + 1, d + 1)];
        let sse = yy - 2.0 * beta.dot(&gay.column(0)) + (gaa * &beta).dot(&beta);
        sse.max(0.0) / n
    }
}
