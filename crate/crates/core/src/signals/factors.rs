//! PCA eigenportfolios and factor regressions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Column-wise z-scores of a `T x N` return window (sample convention).
#[derive(Debug, Clone)]
pub struct Standardized {
    /// `T x kept` standardized returns.
    pub scores: DMatrix<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Column indices (into the input) retained.
    pub kept: Vec<usize>,
    /// Columns dropped for zero variance.
    pub dropped: Vec<usize>,
}

pub fn standardize_returns(returns: &DMatrix<f64>) -> Result<Standardized> {
    let t = returns.nrows();
    if t < 2 {
        return Err(Error::InsufficientHistory(format!("standardization needs >= 2 observations, got {t}")));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut mean = Vec::new();
    let mut std = Vec::new();
    for (i, col) in returns.column_iter().enumerate() {
        let m = col.mean();
        let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (t - 1) as f64;
        let sd = var.sqrt();
        if sd > 0.0 && sd.is_finite() && sd > 1e-14 * m.abs() {
            kept.push(i);
            mean.push(m);
            std.push(sd);
        } else {
            dropped.push(i);
        }
    }
    let mut scores = DMatrix::zeros(t, kept.len());
    for (c, &i) in kept.iter().enumerate() {
        for r in 0..t {
            scores[(r, c)] = (returns[(r, i)] - mean[c]) / std[c];
        }
    }
    Ok(Standardized {
        scores,
        mean,
        std,
        kept,
        dropped,
    })
}

/// Leading eigenportfolios of the return correlation matrix.
#[derive(Debug, Clone)]
pub struct EigenportfolioSet {
    pub n_factors: usize,
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue shares for all components (sums to one).
    pub explained_variance_ratio: Vec<f64>,
    /// `kept x J` eigenvectors.
    pub eigenvectors: DMatrix<f64>,
    /// `kept x J` portfolio weights `v[i,j] / sigma[i]`.
    pub weights: DMatrix<f64>,
    /// Input columns the weights refer to.
    pub stocks: Vec<usize>,
}

impl EigenportfolioSet {
    /// Variance share of the retained `J` factors.
    pub fn explained_by_factors(&self) -> f64 {
        self.explained_variance_ratio[..self.n_factors].iter().sum()
    }

    /// Factor returns `F[t, j] = sum_i Q[i,j] r[t, stocks[i]]` for a `T x N` return matrix.
    pub fn factor_returns(&self, returns: &DMatrix<f64>) -> DMatrix<f64> {
        let sub = returns.select_columns(self.stocks.iter());
        sub * &self.weights
    }

    /// Factor returns for one cross-section indexed like the input columns.
    pub fn factor_returns_row(&self, row: &[f64]) -> DVector<f64> {
        let mut f = DVector::zeros(self.n_factors);
        for (k, &i) in self.stocks.iter().enumerate() {
            let r = row[i];
            for j in 0..self.n_factors {
                f[j] += self.weights[(k, j)] * r;
            }
        }
        f
    }
}

/// PCA on the correlation matrix of standardized returns.
pub fn extract_factors(std: &Standardized, n_factors: usize) -> Result<EigenportfolioSet> {
    let t = std.scores.nrows();
    let n = std.scores.ncols();
    if n == 0 {
        return Err(Error::Data("no stocks with positive variance in the factor window".into()));
    }
    let rho = std.scores.tr_mul(&std.scores) / (t - 1) as f64;
    for i in 0..n {
        for j in 0..=i {
            if !rho[(i, j)].is_finite() {
                return Err(Error::Numerical(format!(
                    "correlation entry ({}, {}) is not finite",
                    std.kept[i], std.kept[j]
                )));
            }
        }
    }
    let eig = SymmetricEigen::new(rho);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let top = eigenvalues[0].max(0.0);
    let rank = eigenvalues.iter().filter(|&&l| l > top * 1e-10 * n as f64).count();
    if n_factors > rank {
        return Err(Error::Data(format!(
            "{n_factors} factors requested but the correlation matrix has rank {rank}"
        )));
    }
    let total: f64 = eigenvalues.iter().sum();
    let explained_variance_ratio = eigenvalues.iter().map(|l| l / total).collect();

    let mut vectors = DMatrix::zeros(n, n_factors);
    for (j, &k) in order.iter().take(n_factors).enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        let sum: f64 = v.sum();
        let flip = if sum.abs() > 1e-12 {
            sum < 0.0
        } else {
            v.iter().find(|x| x.abs() > 1e-12).is_some_and(|x| *x < 0.0)
        };
        if flip {
            v.neg_mut();
        }
        vectors.set_column(j, &v);
    }
    let mut weights = vectors.clone();
    for (i, sd) in std.std.iter().enumerate() {
        for j in 0..n_factors {
            weights[(i, j)] /= sd;
        }
    }
    Ok(EigenportfolioSet {
        n_factors,
        eigenvalues,
        explained_variance_ratio,
        eigenvectors: vectors,
        weights,
        stocks: std.kept.clone(),
    })
}

/// OLS of each stock's returns on `[1, F]`.
#[derive(Debug, Clone)]
pub struct FactorFit {
    pub intercept: Vec<f64>,
    /// `N x J` loadings.
    pub loadings: DMatrix<f64>,
    /// `T x N` in-sample residuals.
    pub residuals: DMatrix<f64>,
    /// The regressor matrix was rank deficient; the pseudo-inverse solution was used.
    pub pseudo_inverse: bool,
}

impl FactorFit {
    pub fn residual(&self, stock: usize, returns: f64, factors: &DVector<f64>) -> f64 {
        returns - self.intercept[stock] - self.loadings.row(stock).dot(&factors.transpose())
    }
}

/// Regresses each column of `returns` (`T x N`) on an intercept and `factors` (`T x J`).
pub fn factor_regression(returns: &DMatrix<f64>, factors: &DMatrix<f64>) -> Result<FactorFit> {
    let (t, j) = (factors.nrows(), factors.ncols());
    if returns.nrows() != t {
        return Err(Error::Invariant(format!(
            "returns have {} rows but factors have {t}",
            returns.nrows()
        )));
    }
    if t <= j + 1 {
        return Err(Error::InsufficientHistory(format!(
            "factor regression needs more than {} observations, got {t}",
            j + 1
        )));
    }
    let mut x = DMatrix::from_element(t, j + 1, 1.0);
    x.view_mut((0, 1), (t, j)).copy_from(factors);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * t as f64;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let coef = svd
        .solve(returns, tol)
        .map_err(|e| Error::Numerical(format!("factor regression failed: {e}")))?;
    let residuals = returns - &x * &coef;
    let intercept = coef.row(0).iter().cloned().collect();
    let loadings = coef.rows(1, j).transpose();
    Ok(FactorFit {
        intercept,
        loadings,
        residuals,
        pseudo_inverse: rank < j + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn two_point_standardization_uses_sample_convention() {
        // mean 0, sample sd sqrt(2): scores are +-1/sqrt(2)
        let r = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let s = standardize_returns(&r).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((s.scores[(0, 0)] - h).abs() < 1e-15);
        assert!((s.scores[(1, 0)] + h).abs() < 1e-15);
        let sample_var = s.scores.column(0).iter().map(|x| x * x).sum::<f64>() / 1.0;
        assert!((sample_var - 1.0).abs() < 1e-15);
    }

    #[test]
    fn standardized_columns_have_unit_sample_sd() {
        let mut r = gaussian(500, 3, 1) * 0.01;
        r.add_scalar_mut(5.0);
        let s = standardize_returns(&r).unwrap();
        for c in s.scores.column_iter() {
            assert!(c.mean().abs() < 1e-10);
            let v = c.iter().map(|x| x * x).sum::<f64>() / 499.0;
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_stock_is_dropped() {
        let mut r = gaussian(50, 3, 2);
        r.column_mut(1).fill(0.3);
        let s = standardize_returns(&r).unwrap();
        assert_eq!(s.kept, vec![0, 2]);
        assert_eq!(s.dropped, vec![1]);
    }

    #[test]
    fn perfectly_correlated_pair() {
        // closed form: rho = [[1,1],[1,1]] has eigenvalues 2 and 0 with
        // eigenvector (1,1)/sqrt(2) for the first
        let x = gaussian(100, 1, 3);
        let mut r = DMatrix::zeros(100, 2);
        r.set_column(0, &x.column(0));
        r.set_column(1, &(x.column(0) * 3.0));
        let f = extract_factors(&standardize_returns(&r).unwrap(), 1).unwrap();
        assert!((f.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!(f.eigenvalues[1].abs() < 1e-12);
        assert!((f.explained_by_factors() - 1.0).abs() < 1e-12);
        let h = 1.0 / 2f64.sqrt();
        assert!((f.eigenvectors[(0, 0)] - h).abs() < 1e-12);
        assert!((f.eigenvectors[(1, 0)] - h).abs() < 1e-12);
        assert!(extract_factors(&standardize_returns(&r).unwrap(), 2).is_err());
    }

    #[test]
    fn independent_stocks_have_flat_spectrum() {
        let r = gaussian(20_000, 5, 4);
        let f = extract_factors(&standardize_returns(&r).unwrap(), 5).unwrap();
        for l in &f.eigenvalues {
            assert!((l - 1.0).abs() < 0.05, "{l}");
        }
        let total: f64 = f.explained_variance_ratio.iter().sum();
        assert!((total - 1.0).abs() < 1e-8);
        assert!(f.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigenvector_signs_sum_positive() {
        let r = gaussian(300, 6, 5);
        let f = extract_factors(&standardize_returns(&r).unwrap(), 4).unwrap();
        for c in f.eigenvectors.column_iter() {
            assert!(c.sum() >= 0.0);
        }
    }

    #[test]
    fn exact_factor_model_has_zero_residuals() {
        let fac = gaussian(120, 3, 6);
        let b = gaussian(8, 3, 7);
        let mut r = &fac * b.transpose();
        for i in 0..8 {
            r.column_mut(i).add_scalar_mut(0.001 * i as f64);
        }
        let fit = factor_regression(&r, &fac).unwrap();
        assert!(fit.residuals.amax() < 1e-10);
        assert!(!fit.pseudo_inverse);
        for i in 0..8 {
            assert!((fit.intercept[i] - 0.001 * i as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn orthogonal_factors_leave_demeaned_returns() {
        // factors orthogonal to the returns and to the constant by construction
        let t = 64;
        let r = DMatrix::from_fn(t, 1, |k, _| if k % 2 == 0 { 1.0 } else { 3.0 });
        let fac = DMatrix::from_fn(t, 1, |k, _| if (k / 2) % 2 == 0 { 1.0 } else { -1.0 });
        let fit = factor_regression(&r, &fac).unwrap();
        assert!(fit.loadings[(0, 0)].abs() < 1e-12);
        for k in 0..t {
            assert!((fit.residuals[(k, 0)] - (r[(k, 0)] - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_regressors_are_flagged() {
        let f1 = gaussian(40, 1, 8);
        let mut fac = DMatrix::zeros(40, 2);
        fac.set_column(0, &f1.column(0));
        fac.set_column(1, &(f1.column(0) * 2.0));
        let r = gaussian(40, 2, 9);
        let fit = factor_regression(&r, &fac).unwrap();
        assert!(fit.pseudo_inverse);
        assert!(fit.residuals.iter().all(|x| x.is_finite()));
        assert!(factor_regression(&r.rows(0, 3).into_owned(), &fac.rows(0, 3).into_owned()).is_err());
    }

    #[test]
    fn full_rank_pca_reconstructs_returns() {
        let r = gaussian(200, 10, 10) * 0.01;
        let s = standardize_returns(&r).unwrap();
        let f = extract_factors(&s, 10).unwrap();
        let fr = f.factor_returns(&r);
        let fit = factor_regression(&r, &fr).unwrap();
        assert!(fit.residuals.amax() <= 1e-8);
    }
}
