//! Nested-simulation orchestration: outer scenario generation, per-scenario
//! inner pricing, the per-step regression proxy, exposure metrics, and the
//! full-nested baseline used as the accuracy oracle.
//!
//! Scenarios at a time step are priced concurrently; every unit of work draws
//! from its own keyed substream and all reductions run sequentially over the
//! collected per-scenario values, so outputs are identical for any worker
//! count.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instruments::Instrument;
use crate::models::{
    generate_outer, walk_inner_tails, Discount, FixingSchedule, GbmParams, ScenarioSet,
};
use crate::regression::{fit, BasisSpec, FitResult, StateBasis};
use crate::rng::{open_stream, StreamKey};
use crate::variance::{lsmc_covariance, mc_covariance, CovarianceMode, McCovariance, VarianceReport};

/// Everything one exposure run needs: model, instrument, basis and the
/// simulation budget.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub s0: f64,
    pub mu_outer: f64,
    pub r_inner: f64,
    pub sigma: f64,
    pub schedule: FixingSchedule,
    pub instrument: Instrument,
    pub basis: BasisSpec,
    pub n_outer: usize,
    pub p_inner: usize,
    pub p_baseline: usize,
    /// Fixing indices to value at; `None` means every fixing.
    pub steps: Option<Vec<usize>>,
    pub crn: bool,
    pub pfe_quantile: f64,
    pub seed: u64,
    /// Worker threads; 0 uses the process-wide default.
    pub workers: usize,
}

impl RunPlan {
    pub fn outer_params(&self) -> GbmParams {
        GbmParams { s0: self.s0, drift: self.mu_outer, volatility: self.sigma, rate: self.r_inner }
    }

    pub fn inner_params(&self) -> GbmParams {
        GbmParams { s0: self.s0, drift: self.r_inner, volatility: self.sigma, rate: self.r_inner }
    }

    pub fn step_indices(&self) -> Vec<usize> {
        match &self.steps {
            Some(steps) => steps.clone(),
            None => (0..self.schedule.len()).collect(),
        }
    }

    pub fn validate(&self, baseline_requested: bool) -> Result<()> {
        GbmParams::new(self.s0, self.mu_outer, self.sigma, self.r_inner)?;
        if self.n_outer < 2 {
            return Err(Error::invalid("n_outer must be at least 2"));
        }
        if self.p_inner == 0 {
            return Err(Error::invalid("p_inner must be >= 1"));
        }
        if !(self.pfe_quantile > 0.0 && self.pfe_quantile < 1.0) {
            return Err(Error::invalid("pfe_quantile must lie in (0, 1)"));
        }
        self.basis.validate()?;
        self.instrument.validate(&self.schedule)?;
        if let Instrument::BarrierUpOut { barrier, .. } = &self.instrument {
            if *barrier <= self.s0 {
                return Err(Error::invalid(format!(
                    "barrier {barrier} must exceed the trade-time spot {}",
                    self.s0
                )));
            }
        }
        if let Some(steps) = &self.steps {
            if steps.is_empty() {
                return Err(Error::invalid("steps must not be empty when given"));
            }
            if steps.iter().any(|&s| s >= self.schedule.len()) {
                return Err(Error::invalid("step index out of range for the fixing schedule"));
            }
            if steps.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid("steps must be strictly increasing"));
            }
        }
        if baseline_requested && self.p_baseline < 32 * self.p_inner {
            return Err(Error::invalid(format!(
                "baseline needs p_baseline >= 32 * p_inner ({} < {})",
                self.p_baseline,
                32 * self.p_inner
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RawMc,
    Lsmc,
    Baseline,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::RawMc => "raw_mc",
            Method::Lsmc => "lsmc",
            Method::Baseline => "baseline",
        }
    }
}

/// Per-scenario values across the requested steps, plus the per-step fit and
/// variance diagnostics where the method produces them.
#[derive(Debug, Clone)]
pub struct ValueSurface {
    pub method: Method,
    pub step_indices: Vec<usize>,
    pub times: Vec<f64>,
    /// `values[step][scenario]`.
    pub values: Vec<Vec<f64>>,
    pub fits: Vec<Option<FitResult>>,
    pub variance: Vec<Option<VarianceReport>>,
}

/// Per-step expected exposure and potential future exposure.
#[derive(Debug, Clone)]
pub struct ExposureProfile {
    pub method: Method,
    pub times: Vec<f64>,
    pub ee: Vec<f64>,
    pub pfe: Vec<f64>,
    pub quantile: f64,
}

/// One scenario's inner-MC price and the retained discounted payoffs.
#[derive(Debug, Clone)]
pub struct InnerPricing {
    pub y_mc: f64,
    pub payoffs: Vec<f64>,
}

fn inner_price(
    plan: &RunPlan,
    scenarios: &ScenarioSet,
    scenario: usize,
    t_index: usize,
    p: usize,
    key: StreamKey,
    antithetic: bool,
) -> Result<InnerPricing> {
    let params = plan.inner_params();
    let disc = Discount::new(plan.r_inner, plan.schedule.times()[t_index]);
    // Antithetic pairing happens at whole-path granularity inside the walker;
    // the stream itself must stay plain.
    let mut stream = open_stream(key);
    let mut payoffs = Vec::with_capacity(p);
    let mut payoff_err = None;
    walk_inner_tails(
        scenarios.path(scenario),
        &params,
        &plan.schedule,
        t_index,
        p,
        &mut stream,
        antithetic,
        |_, full| match plan.instrument.discounted_payoff(&plan.schedule, full, &disc) {
            Ok(v) => payoffs.push(v),
            Err(e) => payoff_err = Some(e),
        },
    )?;
    if let Some(e) = payoff_err {
        return Err(e);
    }
    let y_mc = payoffs.iter().sum::<f64>() / payoffs.len() as f64;
    Ok(InnerPricing { y_mc, payoffs })
}

/// Inner-MC price of one scenario at one step with the plan's `p_inner`
/// budget. Under common random numbers every scenario at a step shares one
/// stream key, which is what makes cross-scenario covariance estimable.
pub fn price_scenario(
    plan: &RunPlan,
    scenarios: &ScenarioSet,
    scenario: usize,
    t_index: usize,
) -> Result<InnerPricing> {
    let key = if plan.crn {
        StreamKey::inner(plan.seed, t_index as u32, 0)
    } else {
        StreamKey::inner(plan.seed, t_index as u32, scenario as u64)
    };
    inner_price(plan, scenarios, scenario, t_index, plan.p_inner, key, false)
}

/// Full-nested baseline price of one scenario at one step: `p_baseline`
/// antithetic paths on a dedicated substream.
pub fn price_scenario_baseline(
    plan: &RunPlan,
    scenarios: &ScenarioSet,
    scenario: usize,
    t_index: usize,
) -> Result<InnerPricing> {
    let key = StreamKey::baseline(plan.seed, t_index as u32, scenario as u64);
    inner_price(plan, scenarios, scenario, t_index, plan.p_baseline, key, true)
}

/// Output of one LSMC regression step.
#[derive(Debug)]
pub struct StepResult {
    pub t_index: usize,
    /// Raw per-scenario inner-MC prices.
    pub y_mc: Vec<f64>,
    pub fit: FitResult,
    /// `None` when `p_inner < 2` leaves the estimator undefined.
    pub variance: Option<VarianceReport>,
    pub inner_paths_simulated: u64,
}

/// Price every scenario at `t_index`, regress the prices on the instrument
/// state and return the fitted values with variance diagnostics.
pub fn lsmc_step(plan: &RunPlan, scenarios: &ScenarioSet, t_index: usize) -> Result<StepResult> {
    let n = scenarios.n_scenarios();
    let priced: Vec<InnerPricing> = (0..n)
        .into_par_iter()
        .map(|i| price_scenario(plan, scenarios, i, t_index))
        .collect::<Result<_>>()?;
    let y_mc: Vec<f64> = priced.iter().map(|p| p.y_mc).collect();
    let inner_paths_simulated: u64 = priced.iter().map(|p| p.payoffs.len() as u64).sum();

    let (fit_result, design) = regress_values(plan, scenarios, t_index, &y_mc)?;
    let variance = if plan.p_inner >= 2 {
        let payoffs: Vec<Vec<f64>> = priced.into_iter().map(|p| p.payoffs).collect();
        let mode = if plan.crn { CovarianceMode::Full } else { CovarianceMode::Diagonal };
        let cov: McCovariance = mc_covariance(&payoffs, mode)?;
        Some(lsmc_covariance(&design, &cov)?)
    } else {
        None
    };
    Ok(StepResult { t_index, y_mc, fit: fit_result, variance, inner_paths_simulated })
}

fn regress_values(
    plan: &RunPlan,
    scenarios: &ScenarioSet,
    t_index: usize,
    y: &[f64],
) -> Result<(FitResult, crate::regression::DesignMatrix)> {
    let layout = plan.instrument.state_layout();
    let states: Vec<Vec<f64>> = (0..scenarios.n_scenarios())
        .map(|i| plan.instrument.state_variables(&plan.schedule, scenarios.path(i), t_index))
        .collect();
    let mut spec = plan.basis.clone();
    if spec.dummy_threshold.is_none() {
        spec.dummy_threshold = plan.instrument.regression_threshold();
    }
    let step_context = |e: Error| match e {
        Error::DegenerateInput(msg) => {
            Error::degenerate(format!("step {t_index}: {msg}"))
        }
        other => other,
    };
    let basis = StateBasis::fit(&spec, &states, layout.continuous, layout.has_indicator)
        .map_err(step_context)?;
    let design = basis.design(&states)?;
    if scenarios.n_scenarios() <= design.ncols() {
        return Err(Error::invalid(format!(
            "step {t_index}: {} scenarios cannot support {} basis columns",
            scenarios.n_scenarios(),
            design.ncols()
        )));
    }
    let fit_result = fit(&design, y).map_err(step_context)?;
    Ok((fit_result, design))
}

/// Positive-part exposure metrics over a value surface: per step,
/// `EE = mean(max(V, 0))` and `PFE(q)` is the lower empirical order statistic
/// at `ceil(q n)` of `max(V, 0)`.
pub fn exposure(surface: &ValueSurface, quantile: f64) -> Result<ExposureProfile> {
    if surface.values.is_empty() {
        return Err(Error::invalid("exposure: empty value surface"));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::invalid("exposure: quantile must lie in (0, 1)"));
    }
    let mut ee = Vec::with_capacity(surface.values.len());
    let mut pfe = Vec::with_capacity(surface.values.len());
    for step_values in &surface.values {
        let n = step_values.len();
        let mut positive: Vec<f64> = step_values.iter().map(|v| v.max(0.0)).collect();
        ee.push(positive.iter().sum::<f64>() / n as f64);
        let idx = ((quantile * n as f64).ceil() as usize).clamp(1, n) - 1;
        let (_, q, _) =
            positive.select_nth_unstable_by(idx, |a, b| a.partial_cmp(b).expect("finite"));
        pfe.push(*q);
    }
    Ok(ExposureProfile {
        method: surface.method,
        times: surface.times.clone(),
        ee,
        pfe,
        quantile,
    })
}

/// Wall-clock and work accounting for one (method, step) cell.
#[derive(Debug, Clone, Serialize)]
pub struct StepTiming {
    pub method: Method,
    pub step: usize,
    pub wall_ms: f64,
    pub inner_paths: u64,
}

/// Which value surfaces a run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    LsmcOnly,
    BaselineOnly,
    Both,
}

impl RunMode {
    fn wants_lsmc(self) -> bool {
        self != RunMode::BaselineOnly
    }

    fn wants_baseline(self) -> bool {
        self != RunMode::LsmcOnly
    }
}

/// Full output of [`run`].
#[derive(Debug)]
pub struct RunOutput {
    pub scenarios: ScenarioSet,
    pub lsmc: Option<ValueSurface>,
    pub baseline: Option<ValueSurface>,
    pub lsmc_profile: Option<ExposureProfile>,
    pub baseline_profile: Option<ExposureProfile>,
    pub timings: Vec<StepTiming>,
}

impl RunOutput {
    /// Total simulated inner paths per method, for speedup accounting.
    pub fn work(&self, method: Method) -> u64 {
        self.timings.iter().filter(|t| t.method == method).map(|t| t.inner_paths).sum()
    }
}

fn thread_pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers == 0 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| Error::invalid(format!("failed to build worker pool: {e}")))
}

/// Run the requested pipeline: outer scenarios, an LSMC pass over the
/// requested steps and/or the nested baseline, with exposure profiles for
/// each surface produced.
pub fn run(plan: &RunPlan, mode: RunMode) -> Result<RunOutput> {
    plan.validate(mode.wants_baseline())?;
    match thread_pool(plan.workers)? {
        Some(pool) => pool.install(|| run_inner(plan, mode)),
        None => run_inner(plan, mode),
    }
}

fn run_inner(plan: &RunPlan, mode: RunMode) -> Result<RunOutput> {
    let scenarios = generate_outer(&plan.outer_params(), &plan.schedule, plan.n_outer, plan.seed)?;
    let steps = plan.step_indices();
    let times: Vec<f64> = steps.iter().map(|&s| plan.schedule.times()[s]).collect();

    let mut timings = Vec::new();
    let (lsmc, lsmc_profile) = if mode.wants_lsmc() {
        let mut lsmc_values = Vec::with_capacity(steps.len());
        let mut fits = Vec::with_capacity(steps.len());
        let mut variance = Vec::with_capacity(steps.len());
        for &t_index in &steps {
            let started = Instant::now();
            let step = lsmc_step(plan, &scenarios, t_index)?;
            timings.push(StepTiming {
                method: Method::Lsmc,
                step: t_index,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
                inner_paths: step.inner_paths_simulated,
            });
            lsmc_values.push(step.fit.fitted.iter().copied().collect::<Vec<f64>>());
            fits.push(Some(step.fit));
            variance.push(step.variance);
        }
        let surface = ValueSurface {
            method: Method::Lsmc,
            step_indices: steps.clone(),
            times: times.clone(),
            values: lsmc_values,
            fits,
            variance,
        };
        let profile = exposure(&surface, plan.pfe_quantile)?;
        (Some(surface), Some(profile))
    } else {
        (None, None)
    };

    let (baseline, baseline_profile) = if mode.wants_baseline() {
        let mut values = Vec::with_capacity(steps.len());
        for &t_index in &steps {
            let started = Instant::now();
            let priced: Vec<InnerPricing> = (0..plan.n_outer)
                .into_par_iter()
                .map(|i| price_scenario_baseline(plan, &scenarios, i, t_index))
                .collect::<Result<_>>()?;
            timings.push(StepTiming {
                method: Method::Baseline,
                step: t_index,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
                inner_paths: priced.iter().map(|p| p.payoffs.len() as u64).sum(),
            });
            values.push(priced.into_iter().map(|p| p.y_mc).collect::<Vec<f64>>());
        }
        let surface = ValueSurface {
            method: Method::Baseline,
            step_indices: steps.clone(),
            times: times.clone(),
            values,
            fits: steps.iter().map(|_| None).collect(),
            variance: steps.iter().map(|_| None).collect(),
        };
        let profile = exposure(&surface, plan.pfe_quantile)?;
        (Some(surface), Some(profile))
    } else {
        (None, None)
    };

    Ok(RunOutput { scenarios, lsmc, baseline, lsmc_profile, baseline_profile, timings })
}

/// Per-step relative differences between an LSMC profile and the baseline,
/// guarding denominators with `eps`.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileDiffRow {
    pub time: f64,
    pub ee_lsmc: f64,
    pub ee_baseline: f64,
    pub ee_rel_err: f64,
    pub pfe_lsmc: f64,
    pub pfe_baseline: f64,
    pub pfe_rel_err: f64,
}

pub fn profile_diff(
    lsmc: &ExposureProfile,
    baseline: &ExposureProfile,
    eps: f64,
) -> Result<Vec<ProfileDiffRow>> {
    if lsmc.times != baseline.times {
        return Err(Error::invalid("profile_diff: mismatched step grids"));
    }
    Ok((0..lsmc.times.len())
        .map(|i| ProfileDiffRow {
            time: lsmc.times[i],
            ee_lsmc: lsmc.ee[i],
            ee_baseline: baseline.ee[i],
            ee_rel_err: (lsmc.ee[i] - baseline.ee[i]).abs() / baseline.ee[i].max(eps),
            pfe_lsmc: lsmc.pfe[i],
            pfe_baseline: baseline.pfe[i],
            pfe_rel_err: (lsmc.pfe[i] - baseline.pfe[i]).abs() / baseline.pfe[i].max(eps),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::Instrument;
    use crate::models::OptionKind;
    use crate::regression::BasisFamily;

    fn asian_plan(n: usize, p_inner: usize) -> RunPlan {
        let schedule = FixingSchedule::regular(1.0, 30, 360.0).unwrap();
        let k = schedule.len();
        RunPlan {
            s0: 100.0,
            mu_outer: 0.1,
            r_inner: 0.05,
            sigma: 0.2,
            schedule,
            instrument: Instrument::Asian {
                kind: OptionKind::Put,
                strike: 100.0,
                weights: vec![1.0 / k as f64; k],
            },
            basis: BasisSpec::forsythe(3),
            n_outer: n,
            p_inner,
            p_baseline: 32 * p_inner.max(1),
            steps: None,
            crn: false,
            pfe_quantile: 0.95,
            seed: 4242,
            workers: 0,
        }
    }

    fn vanilla_plan(n: usize, p_inner: usize) -> RunPlan {
        RunPlan {
            instrument: Instrument::Vanilla { kind: OptionKind::Call, strike: 100.0 },
            ..asian_plan(n, p_inner)
        }
    }

    #[test]
    fn price_at_maturity_is_deterministic_payoff() {
        let plan = vanilla_plan(4, 7);
        let scenarios =
            generate_outer(&plan.outer_params(), &plan.schedule, plan.n_outer, plan.seed).unwrap();
        let last = plan.schedule.len() - 1;
        for i in 0..4 {
            let priced = price_scenario(&plan, &scenarios, i, last).unwrap();
            let intrinsic = (scenarios.spot(i, last) - 100.0).max(0.0);
            assert!((priced.y_mc - intrinsic).abs() <= 1e-14 * intrinsic.max(1.0));
            assert!(priced.payoffs.iter().all(|&f| f == intrinsic));
        }
    }

    #[test]
    fn price_degenerates_to_discounted_forward_payoff() {
        let mut plan = vanilla_plan(4, 3);
        plan.sigma = 1e-12;
        let scenarios =
            generate_outer(&plan.outer_params(), &plan.schedule, plan.n_outer, plan.seed).unwrap();
        let t_index = 2;
        let t = plan.schedule.times()[t_index];
        let maturity = plan.schedule.maturity();
        for i in 0..4 {
            let priced = price_scenario(&plan, &scenarios, i, t_index).unwrap();
            let s_t = scenarios.spot(i, t_index);
            let forward = s_t * (plan.r_inner * (maturity - t)).exp();
            let expected = (-plan.r_inner * (maturity - t)).exp() * (forward - 100.0).max(0.0);
            assert!((priced.y_mc - expected).abs() / expected.max(1e-9) < 1e-9);
        }
    }

    #[test]
    fn inner_price_tracks_black_scholes() {
        let mut plan = vanilla_plan(4, 10_000);
        plan.mu_outer = 0.05;
        let scenarios =
            generate_outer(&plan.outer_params(), &plan.schedule, plan.n_outer, plan.seed).unwrap();
        let t_index = 5;
        let t = plan.schedule.times()[t_index];
        let tau = plan.schedule.maturity() - t;
        let priced = price_scenario(&plan, &scenarios, 2, t_index).unwrap();
        let s_t = scenarios.spot(2, t_index);
        let bs = crate::models::black_scholes(s_t, 100.0, 0.05, 0.2, tau, OptionKind::Call)
            .unwrap();
        let p = priced.payoffs.len() as f64;
        let var = priced
            .payoffs
            .iter()
            .map(|f| (f - priced.y_mc) * (f - priced.y_mc))
            .sum::<f64>()
            / (p - 1.0);
        let se = (var / p).sqrt();
        assert!((priced.y_mc - bs).abs() < 3.0 * se, "{} vs {bs} (se {se})", priced.y_mc);
    }

    #[test]
    fn baseline_antithetic_pricing_tracks_black_scholes() {
        let mut plan = vanilla_plan(4, 16);
        plan.p_baseline = 16 * 512;
        let scenarios =
            generate_outer(&plan.outer_params(), &plan.schedule, plan.n_outer, plan.seed).unwrap();
        let t_index = 11;
        let t = plan.schedule.times()[t_index];
        let tau = plan.schedule.maturity() - t;
        let priced = price_scenario_baseline(&plan, &scenarios, 1, t_index).unwrap();
        let s_t = scenarios.spot(1, t_index);
        let bs =
            crate::models::black_scholes(s_t, 100.0, 0.05, 0.2, tau, OptionKind::Call).unwrap();
        // Antithetic payoffs are dependent within a pair; build the standard
        // error from the i.i.d. pair means.
        let pair_means: Vec<f64> =
            priced.payoffs.chunks(2).map(|c| (c[0] + c[1]) / 2.0).collect();
        let m = pair_means.len() as f64;
        let var = pair_means
            .iter()
            .map(|x| (x - priced.y_mc) * (x - priced.y_mc))
            .sum::<f64>()
            / (m - 1.0);
        let se = (var / m).sqrt();
        // Deep in the money the pairs cancel almost exactly; keep a roundoff
        // floor under the band.
        let tol = 3.0 * se + 1e-12 * bs;
        assert!((priced.y_mc - bs).abs() < tol, "{} vs {bs} (se {se})", priced.y_mc);
    }

    #[test]
    fn lsmc_step_reproduces_polynomial_prices_exactly() {
        // At maturity the asian put price is exactly (K - B)^+, which lies in
        // the span of the dummy-augmented degree-1 basis in B.
        let mut plan = asian_plan(300, 4);
        plan.basis = BasisSpec { family: BasisFamily::MonomialDummy, ..BasisSpec::monomial(1) };
        plan.basis.dummy_threshold = Some(100.0);
        let scenarios =
            generate_outer(&plan.outer_params(), &plan.schedule, plan.n_outer, plan.seed).unwrap();
        let step = lsmc_step(&plan, &scenarios, plan.schedule.len() - 1).unwrap();
        for (f, y) in step.fit.fitted.iter().zip(&step.y_mc) {
            assert!((f - y).abs() < 1e-8 * y.abs().max(1.0));
        }
    }

    #[test]
    fn lsmc_step_with_single_inner_path_has_no_variance_report() {
        let plan = asian_plan(200, 1);
        let scenarios =
            generate_outer(&plan.outer_params(), &plan.schedule, plan.n_outer, plan.seed).unwrap();
        let step = lsmc_step(&plan, &scenarios, 3).unwrap();
        assert!(step.variance.is_none());
        assert_eq!(step.inner_paths_simulated, 200);
    }

    #[test]
    fn lsmc_step_reports_variance_with_crn() {
        let mut plan = asian_plan(64, 8);
        plan.crn = true;
        let scenarios =
            generate_outer(&plan.outer_params(), &plan.schedule, plan.n_outer, plan.seed).unwrap();
        let step = lsmc_step(&plan, &scenarios, 3).unwrap();
        let rep = step.variance.unwrap();
        assert!(rep.total_lsmc_variance <= rep.total_mc_variance * (1.0 + 1e-9));
    }

    #[test]
    fn exposure_positive_part_and_quantile_rule() {
        let surface = ValueSurface {
            method: Method::Lsmc,
            step_indices: vec![0, 1],
            times: vec![0.5, 1.0],
            values: vec![vec![-3.0, -1.0, -7.5], vec![0.0, 10.0, -2.0]],
            fits: vec![None, None],
            variance: vec![None, None],
        };
        let prof = exposure(&surface, 0.5).unwrap();
        assert_eq!(prof.ee[0], 0.0);
        assert_eq!(prof.pfe[0], 0.0);
        assert!((prof.ee[1] - 10.0 / 3.0).abs() < 1e-15);

        // Order-statistic rule against a sort-based oracle.
        let mut stream = crate::rng::open_stream(StreamKey::outer(7, 0));
        let values: Vec<f64> =
            (0..5000).map(|_| (stream.next_normal() * 0.3 + 0.1).exp()).collect();
        let surface = ValueSurface {
            method: Method::Baseline,
            step_indices: vec![0],
            times: vec![1.0],
            values: vec![values.clone()],
            fits: vec![None],
            variance: vec![None],
        };
        let prof = exposure(&surface, 0.95).unwrap();
        let mut sorted: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = sorted[(0.95f64 * 5000.0).ceil() as usize - 1];
        assert_eq!(prof.pfe[0], expected);
    }

    #[test]
    fn maturity_only_run_matches_baseline_through_exact_basis() {
        let mut plan = asian_plan(400, 4);
        plan.basis = BasisSpec::monomial_dummy(2, 100.0);
        plan.steps = Some(vec![plan.schedule.len() - 1]);
        plan.p_baseline = 128;
        let out = run(&plan, RunMode::Both).unwrap();
        let base = out.baseline_profile.unwrap();
        let lsmc = out.lsmc_profile.unwrap();
        assert!((lsmc.ee[0] - base.ee[0]).abs() < 1e-8 * base.ee[0].max(1e-9));
    }

    #[test]
    fn runs_are_deterministic_and_worker_independent() {
        let mut plan = asian_plan(64, 4);
        plan.steps = Some(vec![1, 5, 11]);
        let a = run(&plan, RunMode::LsmcOnly).unwrap();
        let b = run(&plan, RunMode::LsmcOnly).unwrap();
        assert_eq!(a.lsmc.unwrap().values, b.lsmc.unwrap().values);

        plan.workers = 1;
        let single = run(&plan, RunMode::LsmcOnly).unwrap();
        plan.workers = 4;
        let multi = run(&plan, RunMode::LsmcOnly).unwrap();
        assert_eq!(single.lsmc.unwrap().values, multi.lsmc.unwrap().values);
        let (sp, mp) = (single.lsmc_profile.unwrap(), multi.lsmc_profile.unwrap());
        assert_eq!(sp.ee, mp.ee);
        assert_eq!(sp.pfe, mp.pfe);
    }

    #[test]
    fn work_accounting_matches_path_budgets() {
        let mut plan = asian_plan(32, 4);
        plan.steps = Some(vec![2, 7]);
        plan.p_baseline = 128;
        let out = run(&plan, RunMode::Both).unwrap();
        assert_eq!(out.work(Method::Lsmc), 2 * 32 * 4);
        assert_eq!(out.work(Method::Baseline), 2 * 32 * 128);

        let only_base = run(&plan, RunMode::BaselineOnly).unwrap();
        assert!(only_base.lsmc.is_none());
        assert_eq!(only_base.work(Method::Baseline), 2 * 32 * 128);
    }

    #[test]
    fn fitted_curves_approach_the_baseline_fit_as_paths_grow() {
        // With a common basis, the LSMC curve fitted on p-path prices should
        // approach the curve fitted on high-accuracy baseline prices.
        let t_index = 5;
        let mut sse_by_p = Vec::new();
        let baseline_plan = asian_plan(300, 2048);
        let scenarios = generate_outer(
            &baseline_plan.outer_params(),
            &baseline_plan.schedule,
            baseline_plan.n_outer,
            baseline_plan.seed,
        )
        .unwrap();
        let reference = lsmc_step(&baseline_plan, &scenarios, t_index).unwrap();
        for p in [10, 100, 1000] {
            let plan = asian_plan(300, p);
            let step = lsmc_step(&plan, &scenarios, t_index).unwrap();
            let sse: f64 = step
                .fit
                .fitted
                .iter()
                .zip(reference.fit.fitted.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            sse_by_p.push(sse);
        }
        assert!(
            sse_by_p[0] > sse_by_p[1] && sse_by_p[1] > sse_by_p[2],
            "{sse_by_p:?} not decreasing"
        );
    }

    #[test]
    fn plan_validation_names_offences() {
        let mut plan = asian_plan(4, 2);
        plan.p_baseline = 8;
        assert!(plan.validate(true).is_err());
        assert!(plan.validate(false).is_ok());

        let mut plan = asian_plan(4, 0);
        plan.p_inner = 0;
        assert!(plan.validate(false).is_err());

        let mut plan = asian_plan(4, 2);
        plan.instrument = Instrument::BarrierUpOut {
            kind: OptionKind::Call,
            strike: 100.0,
            barrier: 90.0,
            rebate: 0.0,
        };
        assert!(plan.validate(false).is_err());
    }
}
