//! Cross-sectional least squares: explanatory-variable scaling, basis
//! construction (monomial, dummy-augmented monomial, discrete-orthogonal
//! Forsythe), the fit itself, and hat-matrix diagnostics.
//!
//! Fitting goes through an orthogonal factorization of the design matrix
//! rather than the normal equations; the normal-equations solve survives only
//! as a test oracle. Leverages and the hat trace are read off the
//! factorization without ever materializing the projection matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest one count as zero when
/// detecting rank.
pub const RANK_TOL: f64 = 1e-10;

/// Columns whose out-of-span component falls below this fraction of their
/// norm are redundant in a composite design and get pruned.
const PRUNE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFamily {
    Monomial,
    MonomialDummy,
    Forsythe,
}

/// Basis family, polynomial degree and the dummy threshold for
/// [`BasisFamily::MonomialDummy`].
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub degree: usize,
    pub dummy_threshold: Option<f64>,
    pub max_degree: usize,
}

impl BasisSpec {
    pub fn new(family: BasisFamily, degree: usize) -> Self {
        Self { family, degree, dummy_threshold: None, max_degree: 10 }
    }

    pub fn forsythe(degree: usize) -> Self {
        Self::new(BasisFamily::Forsythe, degree)
    }

    pub fn monomial(degree: usize) -> Self {
        Self::new(BasisFamily::Monomial, degree)
    }

    pub fn monomial_dummy(degree: usize, threshold: f64) -> Self {
        Self { dummy_threshold: Some(threshold), ..Self::new(BasisFamily::MonomialDummy, degree) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree > self.max_degree {
            return Err(Error::invalid(format!(
                "basis degree {} exceeds maximum {}",
                self.degree, self.max_degree
            )));
        }
        if self.family == BasisFamily::MonomialDummy && self.dummy_threshold.is_none() {
            return Err(Error::invalid("monomial_dummy basis requires a dummy threshold"));
        }
        Ok(())
    }
}

/// Affine map taking the observed `[min, max]` range onto `[-1, 1]`. Bounds
/// are frozen at fit time; out-of-range points extrapolate through the same
/// map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub min: f64,
    pub max: f64,
}

impl Scaling {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("scaling needs at least two observations"));
        }
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values {
            min = min.min(v);
            max = max.max(v);
        }
        if !(max > min) {
            return Err(Error::degenerate(format!(
                "constant explanatory variable (all values = {min})"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (2.0 * v - self.max - self.min) / (self.max - self.min)
    }
}

/// Map observations onto `[-1, 1]`, returning the scaled values and the
/// frozen bounds.
pub fn scale_to_unit(values: &[f64]) -> Result<(Vec<f64>, Scaling)> {
    let scaling = Scaling::fit(values)?;
    Ok((values.iter().map(|&v| scaling.apply(v)).collect(), scaling))
}

/// Three-term recurrence coefficients of the polynomials orthogonal under the
/// discrete inner product over the sample points:
/// `p_0 = 1`, `p_{j+1}(x) = (x - alpha_{j+1}) p_j(x) - beta_j p_{j-1}(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForsytheRecurrence {
    alphas: Vec<f64>,
    betas: Vec<f64>,
    column_norms: Vec<f64>,
}

impl ForsytheRecurrence {
    pub fn from_points(scaled: &[f64], degree: usize) -> Result<Self> {
        let n = scaled.len();
        if n <= degree {
            return Err(Error::RankDeficient { rank: n, cols: degree + 1 });
        }
        let mut alphas = Vec::with_capacity(degree);
        let mut betas = Vec::with_capacity(degree);
        let mut norms = Vec::with_capacity(degree + 1);
        let mut prev: Vec<f64> = vec![0.0; n];
        let mut cur: Vec<f64> = vec![1.0; n];
        let mut cur_sq = n as f64;
        norms.push(cur_sq.sqrt());
        for j in 0..degree {
            let alpha =
                scaled.iter().zip(&cur).map(|(&x, &p)| x * p * p).sum::<f64>() / cur_sq;
            let beta = if j == 0 {
                0.0
            } else {
                let prev_sq: f64 = prev.iter().map(|p| p * p).sum();
                cur_sq / prev_sq
            };
            let next: Vec<f64> = (0..n)
                .map(|i| (scaled[i] - alpha) * cur[i] - beta * prev[i])
                .collect();
            let next_sq: f64 = next.iter().map(|p| p * p).sum();
            if next_sq <= f64::EPSILON * n as f64 {
                // Fewer distinct abscissae than requested degrees.
                return Err(Error::RankDeficient { rank: j + 1, cols: degree + 1 });
            }
            alphas.push(alpha);
            betas.push(beta);
            prev = std::mem::replace(&mut cur, next);
            cur_sq = next_sq;
            norms.push(cur_sq.sqrt());
        }
        Ok(Self { alphas, betas, column_norms: norms })
    }

    pub fn degree(&self) -> usize {
        self.alphas.len()
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    /// Evaluate `p_0(x) .. p_degree(x)`.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.degree() + 1);
        let mut prev = 0.0;
        let mut cur = 1.0;
        out.push(cur);
        for j in 0..self.degree() {
            let next = (x - self.alphas[j]) * cur - self.betas[j] * prev;
            prev = cur;
            cur = next;
            out.push(cur);
        }
        out
    }
}

/// A design matrix together with per-column norms and a flag recording
/// whether collinear dummy columns were dropped during construction.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    column_norms: Vec<f64>,
    dummy_dropped: bool,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>) -> Self {
        let column_norms = (0..x.ncols()).map(|j| x.column(j).norm()).collect();
        Self { x, column_norms, dummy_dropped: false }
    }

    fn with_dummy_dropped(mut self, dropped: bool) -> Self {
        self.dummy_dropped = dropped;
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    pub fn dummy_dropped(&self) -> bool {
        self.dummy_dropped
    }

    /// Thin orthogonal factorization; errors when numerically rank-deficient.
    pub fn factorize(&self) -> Result<Factorization> {
        Factorization::new(&self.x)
    }
}

/// Thin SVD of a full-rank design matrix. `u` has orthonormal columns
/// spanning the column space, so the hat matrix is `U U^T` and never needs
/// to be formed.
#[derive(Debug, Clone)]
pub struct Factorization {
    u: DMatrix<f64>,
    v_t: DMatrix<f64>,
    singular_values: DVector<f64>,
    cols: usize,
}

impl Factorization {
    fn new(x: &DMatrix<f64>) -> Result<Self> {
        let cols = x.ncols();
        let svd = x.clone().svd(true, true);
        let sigma_max = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * sigma_max).count();
        if rank < cols || x.nrows() < cols {
            return Err(Error::RankDeficient { rank: rank.min(x.nrows()), cols });
        }
        Ok(Self {
            u: svd.u.expect("svd requested u"),
            v_t: svd.v_t.expect("svd requested v_t"),
            singular_values: svd.singular_values,
            cols,
        })
    }

    pub fn rank(&self) -> usize {
        self.cols
    }

    /// Least-squares coefficients for the response `y`.
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut z = self.u.tr_mul(y);
        for (i, v) in z.iter_mut().enumerate() {
            *v /= self.singular_values[i];
        }
        self.v_t.tr_mul(&z)
    }

    /// Hat-matrix diagonal `h_ii`, read off the row norms of `U`.
    pub fn leverages(&self) -> Vec<f64> {
        (0..self.u.nrows()).map(|i| self.u.row(i).norm_squared()).collect()
    }

    /// `tr(H)` without forming `H`; equals the rank up to roundoff.
    pub fn hat_trace(&self) -> f64 {
        self.u.iter().map(|v| v * v).sum()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }
}

/// Least-squares output: coefficients, fitted values `X beta`, residuals and
/// their squared norm.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    pub sse: f64,
    pub rank: usize,
}

/// Solve `min ||y - X beta||^2` for a full-rank design.
pub fn fit(design: &DesignMatrix, y: &[f64]) -> Result<FitResult> {
    if y.len() != design.nrows() {
        return Err(Error::invalid(format!(
            "fit: {} responses for {} rows",
            y.len(),
            design.nrows()
        )));
    }
    let fact = design.factorize()?;
    let y = DVector::from_column_slice(y);
    let beta = fact.solve(&y);
    let fitted = design.matrix() * &beta;
    let residuals = &y - &fitted;
    let sse = residuals.norm_squared();
    Ok(FitResult { beta, fitted, residuals, sse, rank: fact.rank() })
}

/// `tr(H)` of the design's hat matrix, via the factorization.
pub fn hat_trace(design: &DesignMatrix) -> Result<f64> {
    Ok(design.factorize()?.hat_trace())
}

/// Forsythe orthogonal basis on already-scaled points: the columns make
/// `X^T X` diagonal.
pub fn forsythe_basis(scaled: &[f64], degree: usize) -> Result<DesignMatrix> {
    let rec = ForsytheRecurrence::from_points(scaled, degree)?;
    Ok(DesignMatrix::new(eval_matrix(scaled, |x, out| out.extend(rec.eval(x)))))
}

/// Plain monomial basis `1, x, .., x^degree` on already-scaled points.
pub fn monomial_basis(scaled: &[f64], degree: usize) -> Result<DesignMatrix> {
    if scaled.len() <= degree {
        return Err(Error::RankDeficient { rank: scaled.len(), cols: degree + 1 });
    }
    Ok(DesignMatrix::new(eval_matrix(scaled, |x, out| out.extend(monomial_row(x, degree)))))
}

/// Monomial basis augmented with an in-the-money dummy and its interactions:
/// `1, x, .., x^d, 1{S >= K}, 1{S >= K} x, ..`. Raw spots are scaled first;
/// if the dummy is constant across the sample the dummy columns collapse onto
/// the plain monomials and are dropped, with a flag on the result.
pub fn monomial_dummy_basis(spots: &[f64], strike: f64, degree: usize) -> Result<DesignMatrix> {
    let n = spots.len();
    if n <= 2 * (degree + 1) {
        return Err(Error::invalid(format!(
            "monomial_dummy basis needs more than {} observations, got {n}",
            2 * (degree + 1)
        )));
    }
    let (scaled, _) = scale_to_unit(spots)?;
    let dummies: Vec<f64> =
        spots.iter().map(|&s| if s >= strike { 1.0 } else { 0.0 }).collect();
    let constant_dummy = dummies.iter().all(|&d| d == dummies[0]);
    if constant_dummy {
        return Ok(monomial_basis(&scaled, degree)?.with_dummy_dropped(true));
    }
    let x = DMatrix::from_fn(n, 2 * (degree + 1), |i, j| {
        let power = j % (degree + 1);
        let base = scaled[i].powi(power as i32);
        if j <= degree {
            base
        } else {
            dummies[i] * base
        }
    });
    Ok(DesignMatrix::new(x))
}

fn monomial_row(x: f64, degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree + 1);
    let mut p = 1.0;
    out.push(p);
    for _ in 0..degree {
        p *= x;
        out.push(p);
    }
    out
}

fn eval_matrix<F: Fn(f64, &mut Vec<f64>)>(points: &[f64], row: F) -> DMatrix<f64> {
    let n = points.len();
    let mut first = Vec::new();
    row(points[0], &mut first);
    let m = first.len();
    DMatrix::from_fn(n, m, |i, j| {
        let mut buf = Vec::with_capacity(m);
        row(points[i], &mut buf);
        buf[j]
    })
}

/// Basis over a multi-component explanatory state: a polynomial block per
/// continuous variable (sharing one intercept) plus, when a stop indicator or
/// dummy threshold is present, the indicator and its interactions with the
/// first variable's polynomials. Redundant columns (constant indicators,
/// collinear variables) are pruned at fit time and the same pruning mask is
/// applied when evaluating.
#[derive(Debug, Clone)]
pub struct StateBasis {
    family: BasisFamily,
    degree: usize,
    scalings: Vec<Scaling>,
    recurrences: Vec<Option<ForsytheRecurrence>>,
    usable: Vec<bool>,
    threshold: Option<f64>,
    has_indicator: bool,
    kept: Vec<usize>,
    dropped_any: bool,
}

impl StateBasis {
    /// Build the basis from the training sample of state rows.
    /// `continuous` leading components are treated as real-valued variables;
    /// `has_indicator` marks a trailing 0/1 stop indicator.
    pub fn fit(
        spec: &BasisSpec,
        states: &[Vec<f64>],
        continuous: usize,
        has_indicator: bool,
    ) -> Result<StateBasis> {
        spec.validate()?;
        let n = states.len();
        if continuous == 0 {
            return Err(Error::invalid("state basis needs at least one continuous variable"));
        }
        if n < 2 {
            return Err(Error::invalid("state basis needs at least two observations"));
        }
        let width = continuous + usize::from(has_indicator);
        if states.iter().any(|s| s.len() != width) {
            return Err(Error::invalid("state rows do not match the declared layout"));
        }
        if spec.family == BasisFamily::MonomialDummy && spec.dummy_threshold.is_none() {
            return Err(Error::invalid("monomial_dummy basis requires a dummy threshold"));
        }

        // The first variable is the primary one; a constant primary variable
        // is unusable, constant secondary variables just lose their block.
        let mut scalings = Vec::with_capacity(continuous);
        let mut usable = Vec::with_capacity(continuous);
        for v in 0..continuous {
            let column: Vec<f64> = states.iter().map(|s| s[v]).collect();
            match Scaling::fit(&column) {
                Ok(sc) => {
                    scalings.push(sc);
                    usable.push(true);
                }
                Err(Error::DegenerateInput(msg)) if v > 0 => {
                    scalings.push(Scaling { min: 0.0, max: 1.0 });
                    usable.push(false);
                    let _ = msg;
                }
                Err(e) => return Err(e),
            }
        }

        let mut recurrences = vec![None; continuous];
        if spec.family == BasisFamily::Forsythe {
            for v in 0..continuous {
                if usable[v] {
                    let scaled: Vec<f64> =
                        states.iter().map(|s| scalings[v].apply(s[v])).collect();
                    recurrences[v] = Some(ForsytheRecurrence::from_points(&scaled, spec.degree)?);
                }
            }
        }

        let dropped_any = usable.iter().any(|&u| !u);
        let mut basis = StateBasis {
            family: spec.family,
            degree: spec.degree,
            scalings,
            recurrences,
            usable,
            threshold: spec.dummy_threshold,
            has_indicator,
            kept: Vec::new(),
            dropped_any,
        };
        basis.kept = basis.select_columns(states)?;
        Ok(basis)
    }

    /// All candidate columns for one state row, before pruning.
    fn candidate_row(&self, state: &[f64]) -> Vec<f64> {
        let continuous = self.scalings.len();
        let degree = self.degree;
        let mut row = Vec::new();
        let var_polys = |v: usize| -> Vec<f64> {
            let x = self.scalings[v].apply(state[v]);
            match &self.recurrences[v] {
                Some(rec) => rec.eval(x),
                None => monomial_row(x, degree),
            }
        };
        // Intercept plus the primary variable's polynomials.
        let primary = var_polys(0);
        row.extend(&primary);
        // Secondary variables contribute their non-constant polynomials.
        for v in 1..continuous {
            if self.usable[v] {
                row.extend(&var_polys(v)[1..]);
            }
        }
        // Threshold dummy block (hockey-stick augmentation of the primary
        // variable).
        if self.family == BasisFamily::MonomialDummy {
            let d = if state[0] >= self.threshold.expect("validated") { 1.0 } else { 0.0 };
            row.push(d);
            row.extend(primary[1..].iter().map(|p| d * p));
        }
        // Stop-indicator block.
        if self.has_indicator {
            let d = state[continuous];
            row.push(d);
            row.extend(primary[1..].iter().map(|p| d * p));
        }
        row
    }

    /// Greedy Gram-Schmidt selection: keep a column when its component
    /// outside the span of the already-kept columns is non-negligible.
    fn select_columns(&mut self, states: &[Vec<f64>]) -> Result<Vec<usize>> {
        let n = states.len();
        let rows: Vec<Vec<f64>> = states.iter().map(|s| self.candidate_row(s)).collect();
        let m = rows[0].len();
        let mut kept: Vec<usize> = Vec::new();
        let mut ortho: Vec<Vec<f64>> = Vec::new();
        for j in 0..m {
            let mut col: Vec<f64> = (0..n).map(|i| rows[i][j]).collect();
            let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm0 <= 0.0 {
                self.dropped_any = true;
                continue;
            }
            for q in &ortho {
                let dot: f64 = q.iter().zip(&col).map(|(a, b)| a * b).sum();
                for (c, qv) in col.iter_mut().zip(q) {
                    *c -= dot * qv;
                }
            }
            let norm1 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm1 > PRUNE_TOL * norm0 {
                for c in col.iter_mut() {
                    *c /= norm1;
                }
                ortho.push(col);
                kept.push(j);
            } else {
                self.dropped_any = true;
            }
        }
        if kept.is_empty() {
            return Err(Error::degenerate("no usable basis columns"));
        }
        Ok(kept)
    }

    /// Evaluate the (pruned) basis at one state row.
    pub fn row(&self, state: &[f64]) -> Vec<f64> {
        let full = self.candidate_row(state);
        self.kept.iter().map(|&j| full[j]).collect()
    }

    /// Assemble the design matrix over a set of state rows.
    pub fn design(&self, states: &[Vec<f64>]) -> Result<DesignMatrix> {
        if states.is_empty() {
            return Err(Error::invalid("state basis: empty sample"));
        }
        let n = states.len();
        let rows: Vec<Vec<f64>> = states.iter().map(|s| self.row(s)).collect();
        let m = rows[0].len();
        let x = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
        Ok(DesignMatrix::new(x).with_dummy_dropped(self.dropped_any))
    }

    pub fn ncols(&self) -> usize {
        self.kept.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::{open_stream, StreamKey};

    fn uniform_points(n: usize, seed: u64) -> Vec<f64> {
        // Deterministic spread over (-1, 1) from a keyed stream.
        let mut s = open_stream(StreamKey::outer(seed, 0));
        (0..n).map(|_| (crate::rng::normal_cdf(s.next_normal()) - 0.5) * 2.0).collect()
    }

    #[test]
    fn scale_to_unit_endpoints_and_midpoint() {
        let (scaled, bounds) = scale_to_unit(&[0.0, 5.0, 10.0]).unwrap();
        assert_eq!(scaled, vec![-1.0, 0.0, 1.0]);
        assert_eq!((bounds.min, bounds.max), (0.0, 10.0));
    }

    #[test]
    fn scale_to_unit_rejects_constant_input() {
        assert!(matches!(scale_to_unit(&[3.0, 3.0, 3.0]), Err(Error::DegenerateInput(_))));
    }

    proptest! {
        #[test]
        fn scaling_is_affine_invariant(
            a in 0.1f64..10.0,
            b in -100.0f64..100.0,
            values in proptest::collection::vec(-50.0f64..50.0, 3..40),
        ) {
            prop_assume!(Scaling::fit(&values).is_ok());
            let (s1, _) = scale_to_unit(&values).unwrap();
            let mapped: Vec<f64> = values.iter().map(|v| a * v + b).collect();
            let (s2, _) = scale_to_unit(&mapped).unwrap();
            for (x, y) in s1.iter().zip(&s2) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn forsythe_degree_zero_is_ones() {
        let d = forsythe_basis(&[-0.5, 0.1, 0.9], 0).unwrap();
        assert_eq!(d.ncols(), 1);
        assert!(d.matrix().column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn forsythe_degree_one_on_symmetric_points() {
        let d = forsythe_basis(&[-1.0, 0.0, 1.0], 1).unwrap();
        let col: Vec<f64> = d.matrix().column(1).iter().copied().collect();
        assert_eq!(col, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn forsythe_columns_are_orthogonal() {
        let pts = uniform_points(5000, 21);
        let d = forsythe_basis(&pts, 5).unwrap();
        let xtx = d.matrix().tr_mul(d.matrix());
        let mut max_diag: f64 = 0.0;
        let mut max_off: f64 = 0.0;
        for i in 0..xtx.nrows() {
            for j in 0..xtx.ncols() {
                if i == j {
                    max_diag = max_diag.max(xtx[(i, j)].abs());
                } else {
                    max_off = max_off.max(xtx[(i, j)].abs());
                }
            }
        }
        assert!(max_off / max_diag < 1e-10, "off/diag = {}", max_off / max_diag);
    }

    #[test]
    fn forsythe_needs_more_points_than_degree() {
        assert!(matches!(
            forsythe_basis(&[-1.0, 0.0, 1.0], 3),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn monomial_dummy_column_count_and_values() {
        let spots: Vec<f64> = (0..20).map(|i| 80.0 + 2.5 * i as f64).collect();
        let d = monomial_dummy_basis(&spots, 100.0, 3).unwrap();
        assert_eq!(d.ncols(), 8);
        assert!(!d.dummy_dropped());
        // Independent evaluation of each term.
        let (lo, hi) = (80.0, 127.5);
        for (i, &s) in spots.iter().enumerate() {
            let x = (2.0 * s - hi - lo) / (hi - lo);
            let dummy = if s >= 100.0 { 1.0 } else { 0.0 };
            let expect = [
                1.0,
                x,
                x * x,
                x * x * x,
                dummy,
                dummy * x,
                dummy * x * x,
                dummy * x * x * x,
            ];
            for (j, e) in expect.iter().enumerate() {
                assert!((d.matrix()[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn monomial_dummy_falls_back_when_dummy_is_constant() {
        let spots: Vec<f64> = (0..20).map(|i| 80.0 + 0.5 * i as f64).collect();
        let d = monomial_dummy_basis(&spots, 200.0, 3).unwrap();
        assert_eq!(d.ncols(), 4);
        assert!(d.dummy_dropped());
    }

    #[test]
    fn fit_recovers_exact_polynomial() {
        let pts = uniform_points(200, 4);
        let d = forsythe_basis(&pts, 3).unwrap();
        let coef = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let y = d.matrix() * &coef;
        let fit = fit(&d, y.as_slice()).unwrap();
        for (a, b) in fit.beta.iter().zip(coef.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(fit.sse <= 1e-18 * y.norm_squared());
    }

    #[test]
    fn fit_intercept_only_gives_mean() {
        let y = [1.0, 2.0, 6.0, 7.0];
        let d = DesignMatrix::new(DMatrix::from_element(4, 1, 1.0));
        let r = fit(&d, &y).unwrap();
        assert!((r.beta[0] - 4.0).abs() < 1e-14);
        assert_eq!(r.rank, 1);
    }

    #[test]
    fn fit_matches_normal_equations_oracle() {
        let pts = uniform_points(400, 9);
        let d = forsythe_basis(&pts, 4).unwrap();
        let mut s = open_stream(StreamKey::outer(101, 0));
        let y: Vec<f64> =
            pts.iter().map(|&x| 3.0 + x.sin() * 2.0 + 0.1 * s.next_normal()).collect();
        let r = fit(&d, &y).unwrap();
        // Oracle: solve the normal equations directly.
        let x = d.matrix();
        let xtx = x.tr_mul(x);
        let xty = x.tr_mul(&DVector::from_column_slice(&y));
        let beta = xtx.lu().solve(&xty).unwrap();
        for (a, b) in r.beta.iter().zip(beta.iter()) {
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn fit_residuals_are_orthogonal_to_columns() {
        let pts = uniform_points(500, 14);
        let d = monomial_basis(&pts, 6).unwrap();
        let mut s = open_stream(StreamKey::outer(33, 0));
        let y: Vec<f64> = pts.iter().map(|&x| x.abs() + 0.3 * s.next_normal()).collect();
        let r = fit(&d, &y).unwrap();
        let xtr = d.matrix().tr_mul(&r.residuals);
        let ynorm = DVector::from_column_slice(&y).norm();
        assert!(xtr.amax() <= 1e-8 * ynorm);
        assert!((r.sse - r.residuals.norm_squared()).abs() <= 1e-12 * r.sse.max(1.0));
    }

    #[test]
    fn fit_detects_rank_deficiency() {
        // Duplicate column.
        let pts = uniform_points(50, 2);
        let x = DMatrix::from_fn(50, 3, |i, j| match j {
            0 => 1.0,
            1 => pts[i],
            _ => 2.0 * pts[i],
        });
        let err = fit(&DesignMatrix::new(x), &vec![1.0; 50]).unwrap_err();
        match err {
            Error::RankDeficient { rank, cols } => {
                assert_eq!(rank, 2);
                assert_eq!(cols, 3);
            }
            other => panic!("expected rank deficiency, got {other}"),
        }
    }

    #[test]
    fn hat_trace_equals_rank() {
        let pts = uniform_points(5000, 77);
        let d = forsythe_basis(&pts, 5).unwrap();
        let tr = hat_trace(&d).unwrap();
        assert!((tr - 6.0).abs() < 1e-8);
        assert!((tr / 5000.0 - 0.0012).abs() < 1e-10);

        let ones = DesignMatrix::new(DMatrix::from_element(40, 1, 1.0));
        assert!((hat_trace(&ones).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_symmetric() {
        let pts = uniform_points(300, 5);
        let d = forsythe_basis(&pts, 4).unwrap();
        let mut s = open_stream(StreamKey::outer(55, 0));
        let y: Vec<f64> = (0..300).map(|_| s.next_normal()).collect();
        let z: Vec<f64> = (0..300).map(|_| s.next_normal()).collect();
        let hy = fit(&d, &y).unwrap().fitted;
        let hhy = fit(&d, hy.as_slice()).unwrap().fitted;
        for (a, b) in hy.iter().zip(hhy.iter()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-9));
        }
        let hz = fit(&d, &z).unwrap().fitted;
        let yv = DVector::from_column_slice(&y);
        let zv = DVector::from_column_slice(&z);
        let lhs = hy.dot(&zv);
        let rhs = yv.dot(&hz);
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn fitted_batches_never_gain_total_variance() {
        // Theorem-style check on sample covariances: project a batch of
        // random responses and compare total variances.
        let mut s = open_stream(StreamKey::outer(202, 0));
        for trial in 0..100 {
            let n = 20 + (trial % 7) * 5;
            let cols = 2 + trial % 4;
            let pts = uniform_points(n, 300 + trial as u64);
            let d = monomial_basis(&pts, cols).unwrap();
            let batch = 24;
            let mut raw = vec![vec![0.0; batch]; n];
            let mut fitted = vec![vec![0.0; batch]; n];
            for b in 0..batch {
                let y: Vec<f64> = (0..n).map(|_| s.next_normal()).collect();
                let f = fit(&d, &y).unwrap().fitted;
                for i in 0..n {
                    raw[i][b] = y[i];
                    fitted[i][b] = f[i];
                }
            }
            let total = |rows: &Vec<Vec<f64>>| -> f64 {
                rows.iter()
                    .map(|r| {
                        let m = r.iter().sum::<f64>() / batch as f64;
                        r.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (batch - 1) as f64
                    })
                    .sum()
            };
            assert!(total(&fitted) <= total(&raw) * (1.0 + 1e-12), "trial {trial}");
        }
    }

    #[test]
    fn forsythe_and_monomial_fit_the_same_subspace() {
        let pts = uniform_points(800, 8);
        let mut s = open_stream(StreamKey::outer(71, 0));
        let y: Vec<f64> = pts.iter().map(|&x| (2.0 * x).exp() + 0.05 * s.next_normal()).collect();
        for degree in [2usize, 5] {
            let f1 = fit(&forsythe_basis(&pts, degree).unwrap(), &y).unwrap();
            let f2 = fit(&monomial_basis(&pts, degree).unwrap(), &y).unwrap();
            for (a, b) in f1.fitted.iter().zip(f2.fitted.iter()) {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-6), "degree {degree}");
            }
        }
    }

    #[test]
    fn state_basis_prunes_collinear_and_constant_variables() {
        // Second variable duplicates the first; third component is a
        // constant indicator.
        let states: Vec<Vec<f64>> =
            (0..40).map(|i| {
                let x = i as f64 / 39.0;
                vec![x, x, 0.0]
            })
            .collect();
        let spec = BasisSpec::forsythe(3);
        let basis = StateBasis::fit(&spec, &states, 2, true).unwrap();
        // 1 + p1..p3 survive; the duplicate block and dead indicator go.
        assert_eq!(basis.ncols(), 4);
        let d = basis.design(&states).unwrap();
        assert!(d.dummy_dropped());
        let y: Vec<f64> = states.iter().map(|s| s[0] * 2.0 + 1.0).collect();
        assert!(fit(&d, &y).is_ok());
    }

    #[test]
    fn state_basis_keeps_informative_indicator() {
        let states: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let x = i as f64 / 59.0 * 200.0;
                vec![x, if x >= 120.0 { 1.0 } else { 0.0 }]
            })
            .collect();
        let spec = BasisSpec::forsythe(2);
        let basis = StateBasis::fit(&spec, &states, 1, true).unwrap();
        // intercept + p1 + p2 + d + d*p1 + d*p2
        assert_eq!(basis.ncols(), 6);
        // Piecewise polynomial is reproduced exactly.
        let y: Vec<f64> = states
            .iter()
            .map(|s| if s[1] > 0.5 { 3.0 + 0.2 * s[0] } else { -1.0 + 0.05 * s[0] })
            .collect();
        let d = basis.design(&states).unwrap();
        let r = fit(&d, &y).unwrap();
        assert!(r.sse < 1e-16 * y.iter().map(|v| v * v).sum::<f64>());
    }

    #[test]
    fn state_basis_rejects_constant_primary_variable() {
        let states: Vec<Vec<f64>> = (0..10).map(|_| vec![5.0]).collect();
        let spec = BasisSpec::forsythe(2);
        assert!(matches!(
            StateBasis::fit(&spec, &states, 1, false),
            Err(Error::DegenerateInput(_))
        ));
    }
}
