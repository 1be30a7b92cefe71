//! Desk-scale reproductions of the three analysis artifacts: the GBM call
//! regression fit, the variance density and trace-ratio study across inner
//! path counts, and the SSE-versus-degree overfitting study.
//!
//! The high-accuracy "actual" reference uses seeded antithetic pseudorandom
//! pricing in place of a low-discrepancy sequence; tolerances asserted
//! downstream budget for its Monte-Carlo error.

use rayon::prelude::*;

use crate::engine::{price_scenario, price_scenario_baseline, RunPlan};
use crate::error::Result;
use crate::instruments::Instrument;
use crate::models::{black_scholes, generate_outer, FixingSchedule, OptionKind, ScenarioSet};
use crate::regression::{fit, BasisSpec, StateBasis};
use crate::variance::{
    lsmc_covariance, mc_covariance, projected_diagonal, CovarianceMode, VarianceReport,
};

/// Market and simulation inputs shared by all three studies.
#[derive(Debug, Clone)]
pub struct StudyPlan {
    pub s0: f64,
    pub mu_outer: f64,
    pub r_inner: f64,
    pub sigma: f64,
    pub strike: f64,
    pub schedule: FixingSchedule,
    pub n_outer: usize,
    pub seed: u64,
    pub workers: usize,
}

impl StudyPlan {
    fn run_plan(&self, instrument: Instrument, basis: BasisSpec, p_inner: usize) -> RunPlan {
        RunPlan {
            s0: self.s0,
            mu_outer: self.mu_outer,
            r_inner: self.r_inner,
            sigma: self.sigma,
            schedule: self.schedule.clone(),
            instrument,
            basis,
            n_outer: self.n_outer,
            p_inner,
            p_baseline: 32 * p_inner,
            steps: None,
            crn: false,
            pfe_quantile: 0.95,
            seed: self.seed,
            workers: self.workers,
        }
    }

    fn asian_put(&self) -> Instrument {
        let k = self.schedule.len();
        Instrument::Asian {
            kind: OptionKind::Put,
            strike: self.strike,
            weights: vec![1.0 / k as f64; k],
        }
    }
}

fn price_all(plan: &RunPlan, scenarios: &ScenarioSet, t_index: usize) -> Result<Vec<Vec<f64>>> {
    (0..scenarios.n_scenarios())
        .into_par_iter()
        .map(|i| price_scenario(plan, scenarios, i, t_index).map(|p| p.payoffs))
        .collect()
}

fn price_all_reference(
    plan: &RunPlan,
    scenarios: &ScenarioSet,
    t_index: usize,
) -> Result<Vec<f64>> {
    (0..scenarios.n_scenarios())
        .into_par_iter()
        .map(|i| price_scenario_baseline(plan, scenarios, i, t_index).map(|p| p.y_mc))
        .collect()
}

fn means(payoffs: &[Vec<f64>]) -> Vec<f64> {
    payoffs.iter().map(|row| row.iter().sum::<f64>() / row.len() as f64).collect()
}

// ---------------------------------------------------------------------------
// GBM call fit study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GbmCallParams {
    pub p_inner: usize,
    pub degree: usize,
    /// Fixing indices to fit at.
    pub steps: Vec<usize>,
}

impl Default for GbmCallParams {
    fn default() -> Self {
        // Fit near the start and near maturity of the two-year-of-fortnights
        // grid (fixings 1 and 23 of 24 on a one-year schedule).
        Self { p_inner: 30, degree: 3, steps: vec![0, 22] }
    }
}

#[derive(Debug, Clone)]
pub struct GbmCallRow {
    pub step: usize,
    pub scenario: usize,
    pub spot: f64,
    pub y_mc: f64,
    pub y_lsmc: f64,
    pub bs: f64,
}

/// Comparison table for the vanilla-call regression fit, once with the plain
/// cubic-style polynomial basis and once with the in-the-money dummy
/// augmentation.
#[derive(Debug, Clone)]
pub struct GbmCallStudy {
    pub cubic: Vec<GbmCallRow>,
    pub dummy: Vec<GbmCallRow>,
}

impl GbmCallStudy {
    /// Root-mean-square distance of a selected column from the analytic
    /// price, per step.
    pub fn rmse(rows: &[GbmCallRow], step: usize, value: impl Fn(&GbmCallRow) -> f64) -> f64 {
        let sel: Vec<&GbmCallRow> = rows.iter().filter(|r| r.step == step).collect();
        let sum: f64 = sel.iter().map(|r| (value(r) - r.bs).powi(2)).sum();
        (sum / sel.len() as f64).sqrt()
    }
}

pub fn gbm_call_study(plan: &StudyPlan, params: &GbmCallParams) -> Result<GbmCallStudy> {
    let instrument = Instrument::Vanilla { kind: OptionKind::Call, strike: plan.strike };
    let run_plan =
        plan.run_plan(instrument, BasisSpec::monomial(params.degree), params.p_inner);
    run_plan.validate(false)?;
    let scenarios =
        generate_outer(&run_plan.outer_params(), &plan.schedule, plan.n_outer, plan.seed)?;
    let maturity = plan.schedule.maturity();

    let mut cubic = Vec::new();
    let mut dummy = Vec::new();
    for &t_index in &params.steps {
        let payoffs = price_all(&run_plan, &scenarios, t_index)?;
        let y_mc = means(&payoffs);
        let spots: Vec<Vec<f64>> =
            (0..plan.n_outer).map(|i| vec![scenarios.spot(i, t_index)]).collect();
        let tau = maturity - plan.schedule.times()[t_index];
        let bs: Vec<f64> = spots
            .iter()
            .map(|s| {
                black_scholes(s[0], plan.strike, plan.r_inner, plan.sigma, tau, OptionKind::Call)
            })
            .collect::<Result<_>>()?;

        for (spec, out) in [
            (BasisSpec::monomial(params.degree), &mut cubic),
            (BasisSpec::monomial_dummy(params.degree, plan.strike), &mut dummy),
        ] {
            let basis = StateBasis::fit(&spec, &spots, 1, false)?;
            let design = basis.design(&spots)?;
            let fitted = fit(&design, &y_mc)?.fitted;
            for i in 0..plan.n_outer {
                out.push(GbmCallRow {
                    step: t_index,
                    scenario: i,
                    spot: spots[i][0],
                    y_mc: y_mc[i],
                    y_lsmc: fitted[i],
                    bs: bs[i],
                });
            }
        }
    }
    Ok(GbmCallStudy { cubic, dummy })
}

// ---------------------------------------------------------------------------
// Variance density / trace-ratio study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct VarianceParams {
    pub degree: usize,
    pub inner_paths: Vec<usize>,
    pub t_index: usize,
    pub crn: bool,
}

impl Default for VarianceParams {
    fn default() -> Self {
        Self { degree: 5, inner_paths: vec![1, 10, 30, 50, 100, 10_000], t_index: 0, crn: false }
    }
}

#[derive(Debug, Clone)]
pub struct VarianceStudyRow {
    pub p: usize,
    pub scenario: usize,
    /// `None` when `p = 1` leaves the estimator undefined.
    pub mc_var: Option<f64>,
    pub lsmc_var: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct VarianceStudy {
    pub rows: Vec<VarianceStudyRow>,
    /// Per inner-path count: the trace report, where defined.
    pub reports: Vec<(usize, Option<VarianceReport>)>,
    /// Per inner-path count: pooled homoscedastic variance, where defined.
    pub pooled: Vec<(usize, Option<f64>)>,
}

pub fn variance_study(plan: &StudyPlan, params: &VarianceParams) -> Result<VarianceStudy> {
    let basis_spec = BasisSpec::forsythe(params.degree);
    let base_plan = plan.run_plan(plan.asian_put(), basis_spec.clone(), 1);
    base_plan.validate(false)?;
    let scenarios =
        generate_outer(&base_plan.outer_params(), &plan.schedule, plan.n_outer, plan.seed)?;
    let states: Vec<Vec<f64>> = (0..plan.n_outer)
        .map(|i| {
            base_plan.instrument.state_variables(&plan.schedule, scenarios.path(i), params.t_index)
        })
        .collect();
    let basis = StateBasis::fit(&basis_spec, &states, 1, false)?;
    let design = basis.design(&states)?;

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut pooled = Vec::new();
    for &p in &params.inner_paths {
        let mut cell_plan = base_plan.clone();
        cell_plan.p_inner = p;
        cell_plan.crn = params.crn;
        let payoffs = price_all(&cell_plan, &scenarios, params.t_index)?;
        if p < 2 {
            for scenario in 0..plan.n_outer {
                rows.push(VarianceStudyRow { p, scenario, mc_var: None, lsmc_var: None });
            }
            reports.push((p, None));
            pooled.push((p, None));
            continue;
        }
        let mode = if params.crn { CovarianceMode::Full } else { CovarianceMode::Diagonal };
        let cov = mc_covariance(&payoffs, mode)?;
        let mc_diag = cov.diagonal();
        let lsmc_diag = projected_diagonal(&design, &cov)?;
        for scenario in 0..plan.n_outer {
            rows.push(VarianceStudyRow {
                p,
                scenario,
                mc_var: Some(mc_diag[scenario]),
                lsmc_var: Some(lsmc_diag[scenario]),
            });
        }
        reports.push((p, Some(lsmc_covariance(&design, &cov)?)));
        pooled.push((p, Some(crate::variance::pooled_sigma2(&cov))));
    }
    Ok(VarianceStudy { rows, reports, pooled })
}

// ---------------------------------------------------------------------------
// SSE-versus-degree overfitting study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SseParams {
    pub max_degree: usize,
    pub inner_paths: Vec<usize>,
    /// Path budget of the high-accuracy "actual" reference prices.
    pub actual_paths: usize,
    pub t_index: usize,
}

impl Default for SseParams {
    fn default() -> Self {
        Self {
            max_degree: 10,
            inner_paths: vec![1, 10, 30, 50, 100],
            actual_paths: 131_072,
            t_index: 0,
        }
    }
}

/// One cell of the overfitting table. `sse_actual` is the in-sample residual
/// of fitting the reference prices at this degree; `sse_noisy` is the
/// distance of the noisy fit from those reference prices.
#[derive(Debug, Clone)]
pub struct SseRow {
    pub degree: usize,
    pub inner_paths: usize,
    pub sse_noisy: f64,
    pub sse_actual: f64,
}

#[derive(Debug, Clone)]
pub struct SseTable {
    pub rows: Vec<SseRow>,
}

impl SseTable {
    pub fn sse_actual_by_degree(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for row in &self.rows {
            if out.last().map(|&(d, _)| d) != Some(row.degree) {
                out.push((row.degree, row.sse_actual));
            }
        }
        out
    }

    pub fn sse_noisy_by_degree(&self, p: usize) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.inner_paths == p)
            .map(|r| (r.degree, r.sse_noisy))
            .collect()
    }
}

pub fn sse_study(plan: &StudyPlan, params: &SseParams) -> Result<SseTable> {
    let base_plan = plan.run_plan(plan.asian_put(), BasisSpec::forsythe(1), 1);
    base_plan.validate(false)?;
    let scenarios =
        generate_outer(&base_plan.outer_params(), &plan.schedule, plan.n_outer, plan.seed)?;
    let states: Vec<Vec<f64>> = (0..plan.n_outer)
        .map(|i| {
            base_plan.instrument.state_variables(&plan.schedule, scenarios.path(i), params.t_index)
        })
        .collect();

    let mut reference_plan = base_plan.clone();
    reference_plan.p_baseline = params.actual_paths;
    let y_actual = price_all_reference(&reference_plan, &scenarios, params.t_index)?;

    let mut noisy: Vec<(usize, Vec<f64>)> = Vec::new();
    for &p in &params.inner_paths {
        let mut cell_plan = base_plan.clone();
        cell_plan.p_inner = p;
        noisy.push((p, means(&price_all(&cell_plan, &scenarios, params.t_index)?)));
    }

    let mut rows = Vec::new();
    for degree in 1..=params.max_degree {
        let mut spec = BasisSpec::forsythe(degree);
        spec.max_degree = spec.max_degree.max(params.max_degree);
        let basis = StateBasis::fit(&spec, &states, 1, false)?;
        let design = basis.design(&states)?;
        let sse_actual = fit(&design, &y_actual)?.sse;
        for (p, y_noisy) in &noisy {
            let fitted = fit(&design, y_noisy)?.fitted;
            let sse_noisy: f64 = fitted
                .iter()
                .zip(&y_actual)
                .map(|(f, a)| (f - a) * (f - a))
                .sum();
            rows.push(SseRow { degree, inner_paths: *p, sse_noisy, sse_actual });
        }
    }
    Ok(SseTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan() -> StudyPlan {
        StudyPlan {
            s0: 100.0,
            mu_outer: 0.1,
            r_inner: 0.05,
            sigma: 0.2,
            strike: 100.0,
            schedule: FixingSchedule::regular(1.0, 15, 360.0).unwrap(),
            n_outer: 600,
            seed: 20_24,
            workers: 0,
        }
    }

    #[test]
    fn gbm_call_dummy_basis_beats_raw_mc_near_maturity() {
        let plan = small_plan();
        let params = GbmCallParams { p_inner: 30, degree: 3, steps: vec![22] };
        let study = gbm_call_study(&plan, &params).unwrap();
        let rmse_mc = GbmCallStudy::rmse(&study.dummy, 22, |r| r.y_mc);
        let rmse_dummy = GbmCallStudy::rmse(&study.dummy, 22, |r| r.y_lsmc);
        let rmse_cubic = GbmCallStudy::rmse(&study.cubic, 22, |r| r.y_lsmc);
        assert!(rmse_dummy < rmse_mc, "dummy {rmse_dummy} vs raw {rmse_mc}");
        assert!(rmse_cubic > rmse_dummy, "cubic {rmse_cubic} vs dummy {rmse_dummy}");
    }

    #[test]
    fn gbm_call_dummy_basis_is_exact_at_maturity() {
        let plan = small_plan();
        let last = plan.schedule.len() - 1;
        let params = GbmCallParams { p_inner: 2, degree: 3, steps: vec![last] };
        let study = gbm_call_study(&plan, &params).unwrap();
        let rmse_mc = GbmCallStudy::rmse(&study.dummy, last, |r| r.y_mc);
        let rmse_dummy = GbmCallStudy::rmse(&study.dummy, last, |r| r.y_lsmc);
        // Deterministic intrinsic values lie in the dummy-augmented span.
        assert!(rmse_dummy <= rmse_mc + 1e-8, "dummy {rmse_dummy} vs raw {rmse_mc}");
        assert!(rmse_dummy < 1e-6);
    }

    #[test]
    fn variance_study_marks_p1_unavailable_and_scales_pooled_variance() {
        let plan = small_plan();
        let params = VarianceParams {
            degree: 3,
            inner_paths: vec![1, 100, 10_000],
            t_index: 0,
            crn: false,
        };
        let study = variance_study(&plan, &params).unwrap();
        assert!(study
            .rows
            .iter()
            .filter(|r| r.p == 1)
            .all(|r| r.mc_var.is_none() && r.lsmc_var.is_none()));
        assert!(study.reports[0].1.is_none());

        let ratio = study.reports[1].1.unwrap().ratio;
        let theoretical = 4.0 / 600.0;
        assert!((ratio - theoretical).abs() / theoretical < 0.2, "ratio {ratio}");

        let pooled100 = study.pooled[1].1.unwrap();
        let pooled10k = study.pooled[2].1.unwrap();
        let scale = pooled10k / pooled100;
        assert!((scale - 0.01).abs() / 0.01 < 0.3, "pooled scaling {scale}");
    }

    #[test]
    fn sse_actual_fit_is_monotone_in_degree() {
        let plan = StudyPlan { n_outer: 400, ..small_plan() };
        let params = SseParams {
            max_degree: 8,
            inner_paths: vec![1, 50],
            actual_paths: 4096,
            t_index: 0,
        };
        let table = sse_study(&plan, &params).unwrap();
        let actual = table.sse_actual_by_degree();
        assert_eq!(actual.len(), 8);
        for w in actual.windows(2) {
            assert!(
                w[1].1 <= w[0].1 * (1.0 + 1e-9),
                "degree {} -> {}: SSE rose {} -> {}",
                w[0].0,
                w[1].0,
                w[0].1,
                w[1].1
            );
        }
        // Noisy single-path fits drift away from the truth at high degree.
        let noisy = table.sse_noisy_by_degree(1);
        let (argmin, min) = noisy
            .iter()
            .copied()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        let last = noisy.last().unwrap();
        if argmin < last.0 {
            assert!(last.1 > min, "no overfitting penalty past degree {argmin}");
        }
    }
}
