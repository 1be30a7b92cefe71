//! Covariance machinery for the regression proxy: the unbiased per-scenario
//! estimator of the inner-MC covariance, the pooled variance, and the
//! projected covariance of the fitted prices with its trace-ratio
//! diagnostics.
//!
//! The full-covariance estimator is kept in factored form (`Sigma = F F^T`
//! with `F` the centered payoff matrix over `sqrt(p(p-1))`), so traces of
//! projected covariances cost `O(n m p)` and the `n x n` matrix is never
//! stored unless a test explicitly asks for it.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::regression::DesignMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    /// Independent inner draws per scenario: only the diagonal is meaningful.
    Diagonal,
    /// Common-random-number inner draws: cross-scenario terms are estimable.
    Full,
}

/// Estimated covariance of the vector of inner-MC price estimates.
#[derive(Debug, Clone)]
pub enum McCovariance {
    Diagonal { variances: Vec<f64>, p: usize },
    Full { factor: DMatrix<f64>, p: usize },
}

impl McCovariance {
    pub fn n_scenarios(&self) -> usize {
        match self {
            McCovariance::Diagonal { variances, .. } => variances.len(),
            McCovariance::Full { factor, .. } => factor.nrows(),
        }
    }

    pub fn inner_paths(&self) -> usize {
        match self {
            McCovariance::Diagonal { p, .. } | McCovariance::Full { p, .. } => *p,
        }
    }

    /// Per-scenario variances of the mean estimator (the diagonal).
    pub fn diagonal(&self) -> Vec<f64> {
        match self {
            McCovariance::Diagonal { variances, .. } => variances.clone(),
            McCovariance::Full { factor, .. } => {
                (0..factor.nrows()).map(|i| factor.row(i).norm_squared()).collect()
            }
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            McCovariance::Diagonal { variances, .. } => variances.iter().sum(),
            McCovariance::Full { factor, .. } => factor.iter().map(|v| v * v).sum(),
        }
    }

    /// Materialize the dense matrix; intended for tests and small `n`.
    pub fn dense(&self) -> DMatrix<f64> {
        match self {
            McCovariance::Diagonal { variances, .. } => {
                DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(variances))
            }
            McCovariance::Full { factor, .. } => factor * factor.transpose(),
        }
    }
}

/// Unbiased estimator of the covariance of the `p`-path mean estimators from
/// the retained discounted payoffs (scenario-major: `payoffs[i][k]` is the
/// payoff of path `k` on scenario `i`).
pub fn mc_covariance(payoffs: &[Vec<f64>], mode: CovarianceMode) -> Result<McCovariance> {
    let n = payoffs.len();
    if n == 0 {
        return Err(Error::invalid("mc_covariance: no scenarios"));
    }
    let p = payoffs[0].len();
    if p < 2 {
        return Err(Error::invalid(
            "mc_covariance: the estimator needs at least 2 inner paths",
        ));
    }
    if payoffs.iter().any(|row| row.len() != p) {
        return Err(Error::invalid("mc_covariance: ragged payoff matrix"));
    }
    let norm = (p * (p - 1)) as f64;
    match mode {
        CovarianceMode::Diagonal => {
            let variances = payoffs
                .iter()
                .map(|row| {
                    let mean = row.iter().sum::<f64>() / p as f64;
                    row.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / norm
                })
                .collect();
            Ok(McCovariance::Diagonal { variances, p })
        }
        CovarianceMode::Full => {
            let scale = norm.sqrt();
            let factor = DMatrix::from_fn(n, p, |i, k| {
                let mean = payoffs[i].iter().sum::<f64>() / p as f64;
                (payoffs[i][k] - mean) / scale
            });
            Ok(McCovariance::Full { factor, p })
        }
    }
}

/// Pooled homoscedastic variance: the mean of the diagonal entries.
pub fn pooled_sigma2(cov: &McCovariance) -> f64 {
    cov.trace() / cov.n_scenarios() as f64
}

/// Total-variance comparison of the raw inner-MC prices and their projection
/// onto the basis column space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceReport {
    pub total_mc_variance: f64,
    pub total_lsmc_variance: f64,
    pub ratio: f64,
    pub theoretical_ratio: f64,
}

/// `tr(H Sigma H)` against `tr(Sigma)` for the projection defined by the
/// design matrix, computed through the factorization: leverage-weighted sums
/// for a diagonal estimate, `||U^T F||_F^2` for a factored full estimate.
pub fn lsmc_covariance(design: &DesignMatrix, cov: &McCovariance) -> Result<VarianceReport> {
    let n = design.nrows();
    if cov.n_scenarios() != n {
        return Err(Error::invalid(format!(
            "lsmc_covariance: covariance over {} scenarios, design over {n}",
            cov.n_scenarios()
        )));
    }
    let fact = design.factorize()?;
    let total_mc = cov.trace();
    let total_lsmc = match cov {
        McCovariance::Diagonal { variances, .. } => fact
            .leverages()
            .iter()
            .zip(variances)
            .map(|(h, v)| h * v)
            .sum(),
        McCovariance::Full { factor, .. } => fact.u().tr_mul(factor).iter().map(|v| v * v).sum(),
    };
    let ratio = if total_mc > 0.0 { total_lsmc / total_mc } else { 0.0 };
    Ok(VarianceReport {
        total_mc_variance: total_mc,
        total_lsmc_variance: total_lsmc,
        ratio,
        theoretical_ratio: fact.rank() as f64 / n as f64,
    })
}

/// Diagonal of the projected covariance `H Sigma H`, for per-scenario
/// variance-density reporting. Costs `O(n m^2)` for a diagonal estimate and
/// `O(n m p)` for a factored full one.
pub fn projected_diagonal(design: &DesignMatrix, cov: &McCovariance) -> Result<Vec<f64>> {
    let n = design.nrows();
    if cov.n_scenarios() != n {
        return Err(Error::invalid("projected_diagonal: dimension mismatch"));
    }
    let fact = design.factorize()?;
    let u = fact.u();
    match cov {
        McCovariance::Diagonal { variances, .. } => {
            // (H S H)_ii = u_i^T (U^T S U) u_i with S diagonal.
            let m = u.ncols();
            let mut mid = DMatrix::<f64>::zeros(m, m);
            for l in 0..n {
                let row = u.row(l);
                for a in 0..m {
                    for b in 0..m {
                        mid[(a, b)] += variances[l] * row[a] * row[b];
                    }
                }
            }
            Ok((0..n)
                .map(|i| {
                    let row = u.row(i);
                    (row * &mid).dot(&row)
                })
                .collect())
        }
        McCovariance::Full { factor, .. } => {
            // H S H = (U (U^T F)) (U (U^T F))^T.
            let proj = u * u.tr_mul(factor);
            Ok((0..n).map(|i| proj.row(i).norm_squared()).collect())
        }
    }
}
