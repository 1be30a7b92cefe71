//! Run configuration: a strict TOML surface covering the model, the
//! instrument, the simulation plan, the regression basis and the study
//! parameters. Unknown keys are rejected and every validation error names
//! the offending field.

use serde::{Deserialize, Serialize};

use crate::engine::RunPlan;
use crate::error::{Error, Result};
use crate::instruments::{Instrument, Side, TarnSide};
use crate::models::{FixingSchedule, OptionKind};
use crate::regression::{BasisFamily, BasisSpec};
use crate::studies::StudyPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentKind {
    Vanilla,
    Asian,
    BarrierUo,
    AccumForward,
    Tarn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Call,
    Put,
    Long,
    Short,
    Receiver,
    Payer,
}

impl Direction {
    fn option_kind(self, kind: InstrumentKind) -> Result<OptionKind> {
        match self {
            Direction::Call => Ok(OptionKind::Call),
            Direction::Put => Ok(OptionKind::Put),
            other => Err(Error::config(format!(
                "instrument.direction: {other:?} is not valid for kind {kind:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "defaults::s0")]
    pub s0: f64,
    #[serde(default = "defaults::mu_outer")]
    pub mu_outer: f64,
    #[serde(default = "defaults::r_inner")]
    pub r_inner: f64,
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    #[serde(default = "defaults::maturity")]
    pub maturity: f64,
    #[serde(default = "defaults::fixing_interval_days")]
    pub fixing_interval_days: u32,
    #[serde(default = "defaults::days_per_year")]
    pub days_per_year: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty model config uses defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentConfig {
    pub kind: InstrumentKind,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strike: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rebate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payments: Option<usize>,
}

impl Default for InstrumentConfig {
    fn default() -> Self {
        Self {
            kind: InstrumentKind::Asian,
            direction: Direction::Put,
            strike: None,
            weights: Vec::new(),
            barrier: None,
            rebate: None,
            alpha: None,
            beta: None,
            k1: None,
            k2: None,
            payments: None,
        }
    }
}

impl InstrumentConfig {
    fn strike_or(&self, fallback: f64) -> f64 {
        self.strike.unwrap_or(fallback)
    }

    pub fn resolve(&self, schedule: &FixingSchedule, s0: f64) -> Result<Instrument> {
        let k = schedule.len();
        let strike = self.strike_or(s0);
        let inst = match self.kind {
            InstrumentKind::Vanilla => Instrument::Vanilla {
                kind: self.direction.option_kind(self.kind)?,
                strike,
            },
            InstrumentKind::Asian => {
                let weights = if self.weights.is_empty() {
                    vec![1.0 / k as f64; k]
                } else {
                    self.weights.clone()
                };
                Instrument::Asian {
                    kind: self.direction.option_kind(self.kind)?,
                    strike,
                    weights,
                }
            }
            InstrumentKind::BarrierUo => Instrument::BarrierUpOut {
                kind: self.direction.option_kind(self.kind)?,
                strike,
                barrier: self.barrier.ok_or_else(|| {
                    Error::config("instrument.barrier is required for kind barrier_uo")
                })?,
                rebate: self.rebate.unwrap_or(0.0),
            },
            InstrumentKind::AccumForward => Instrument::AccumForward {
                side: match self.direction {
                    Direction::Long => Side::Long,
                    Direction::Short => Side::Short,
                    other => {
                        return Err(Error::config(format!(
                            "instrument.direction: {other:?} is not valid for kind accum_forward"
                        )))
                    }
                },
                strike,
                alpha: self.alpha.unwrap_or(1.0),
                beta: self.beta.unwrap_or(1.0),
                payments: self.payments.unwrap_or(4),
                barrier: self.barrier,
            },
            InstrumentKind::Tarn => Instrument::Tarn {
                side: match self.direction {
                    Direction::Receiver => TarnSide::Receiver,
                    Direction::Payer => TarnSide::Payer,
                    other => {
                        return Err(Error::config(format!(
                            "instrument.direction: {other:?} is not valid for kind tarn"
                        )))
                    }
                },
                fixed_rate: self
                    .k1
                    .ok_or_else(|| Error::config("instrument.k1 is required for kind tarn"))?,
                capped_rate: self
                    .k2
                    .ok_or_else(|| Error::config("instrument.k2 is required for kind tarn"))?,
                accrual_cap: self.barrier.ok_or_else(|| {
                    Error::config("instrument.barrier (accrual cap) is required for kind tarn")
                })?,
            },
        };
        inst.validate(schedule)
            .map_err(|e| Error::config(format!("instrument: {e}")))?;
        Ok(inst)
    }

    /// Documented per-instrument inner-path defaults.
    fn default_p_inner(&self) -> usize {
        match self.kind {
            InstrumentKind::Asian | InstrumentKind::AccumForward => 10,
            InstrumentKind::Tarn => 30,
            InstrumentKind::BarrierUo => 64,
            InstrumentKind::Vanilla => 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default = "defaults::n_outer")]
    pub n_outer: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_inner: Option<usize>,
    #[serde(default = "defaults::p_baseline")]
    pub p_baseline: usize,
    #[serde(default = "defaults::pfe_quantile")]
    pub pfe_quantile: f64,
    #[serde(default)]
    pub crn: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<usize>>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty plan config uses defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default = "defaults::family")]
    pub family: BasisFamily,
    #[serde(default = "defaults::degree")]
    pub degree: usize,
    #[serde(default = "defaults::max_degree")]
    pub max_degree: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dummy_threshold: Option<f64>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty basis config uses defaults")
    }
}

impl BasisConfig {
    pub fn to_spec(&self) -> BasisSpec {
        BasisSpec {
            family: self.family,
            degree: self.degree,
            dummy_threshold: self.dummy_threshold,
            max_degree: self.max_degree,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Outer scenarios for the studies (the fit plots use a denser cross
    /// section than desk-scale exposure runs).
    #[serde(default = "defaults::study_n_outer")]
    pub n_outer: usize,
    #[serde(default = "defaults::study_degree")]
    pub degree: usize,
    /// Inner paths for the fit study.
    #[serde(default = "defaults::study_p_ref")]
    pub p_ref: usize,
    #[serde(default = "defaults::study_inner_paths")]
    pub inner_paths: Vec<usize>,
    #[serde(default = "defaults::study_actual_paths")]
    pub actual_paths: usize,
    #[serde(default = "defaults::max_degree")]
    pub max_degree: usize,
    /// Fixing indices the fit study reports on.
    #[serde(default = "defaults::study_fit_steps")]
    pub fit_steps: Vec<usize>,
    /// Fixing index the variance and overfitting studies regress at.
    #[serde(default)]
    pub t_index: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty study config uses defaults")
    }
}

mod defaults {
    pub fn s0() -> f64 {
        100.0
    }
    pub fn mu_outer() -> f64 {
        0.1
    }
    pub fn r_inner() -> f64 {
        0.05
    }
    pub fn sigma() -> f64 {
        0.2
    }
    pub fn maturity() -> f64 {
        1.0
    }
    pub fn fixing_interval_days() -> u32 {
        15
    }
    pub fn days_per_year() -> f64 {
        360.0
    }
    pub fn n_outer() -> usize {
        1000
    }
    pub fn p_baseline() -> usize {
        4096
    }
    pub fn pfe_quantile() -> f64 {
        0.95
    }
    pub fn family() -> super::BasisFamily {
        super::BasisFamily::Forsythe
    }
    pub fn degree() -> usize {
        3
    }
    pub fn max_degree() -> usize {
        10
    }
    pub fn study_n_outer() -> usize {
        5000
    }
    pub fn study_degree() -> usize {
        5
    }
    pub fn study_p_ref() -> usize {
        30
    }
    pub fn study_inner_paths() -> Vec<usize> {
        vec![1, 10, 30, 50, 100, 10_000]
    }
    pub fn study_actual_paths() -> usize {
        131_072
    }
    pub fn study_fit_steps() -> Vec<usize> {
        vec![0, 22]
    }
    pub fn seed() -> u64 {
        42
    }
    pub fn out_dir() -> String {
        "out".to_string()
    }
}

/// The full validated configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "defaults::out_dir")]
    pub out_dir: String,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub instrument: InstrumentConfig,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub study: StudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig =
        toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.model.s0 > 0.0) {
            return Err(Error::config("model.s0 must be positive"));
        }
        if !(self.model.sigma > 0.0) {
            return Err(Error::config("model.sigma must be positive"));
        }
        if !(self.model.maturity > 0.0) {
            return Err(Error::config("model.maturity must be positive"));
        }
        if self.model.fixing_interval_days == 0 {
            return Err(Error::config("model.fixing_interval_days must be >= 1"));
        }
        if !(self.model.days_per_year > 0.0) {
            return Err(Error::config("model.days_per_year must be positive"));
        }
        if self.plan.n_outer < 2 {
            return Err(Error::config("plan.n_outer must be >= 2"));
        }
        if self.plan.p_inner == Some(0) {
            return Err(Error::config("plan.p_inner must be >= 1"));
        }
        if self.plan.p_baseline == 0 {
            return Err(Error::config("plan.p_baseline must be >= 1"));
        }
        if !(self.plan.pfe_quantile > 0.0 && self.plan.pfe_quantile < 1.0) {
            return Err(Error::config("plan.pfe_quantile must lie in (0, 1)"));
        }
        if self.basis.degree > self.basis.max_degree {
            return Err(Error::config(format!(
                "basis.degree {} exceeds basis.max_degree {}",
                self.basis.degree, self.basis.max_degree
            )));
        }
        if self.study.n_outer < 2 {
            return Err(Error::config("study.n_outer must be >= 2"));
        }
        if self.study.p_ref == 0 {
            return Err(Error::config("study.p_ref must be >= 1"));
        }
        if self.study.inner_paths.is_empty() {
            return Err(Error::config("study.inner_paths must not be empty"));
        }
        if self.study.actual_paths == 0 {
            return Err(Error::config("study.actual_paths must be >= 1"));
        }
        // Instrument resolution performs its own checks against the schedule.
        let schedule = self.schedule()?;
        self.instrument.resolve(&schedule, self.model.s0)?;
        if let Some(steps) = &self.plan.steps {
            if steps.iter().any(|&s| s >= schedule.len()) {
                return Err(Error::config(format!(
                    "plan.steps: index out of range for {} fixings",
                    schedule.len()
                )));
            }
        }
        if self.study.fit_steps.iter().any(|&s| s >= schedule.len()) {
            return Err(Error::config("study.fit_steps: index out of range"));
        }
        if self.study.t_index >= schedule.len() {
            return Err(Error::config("study.t_index: index out of range"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<FixingSchedule> {
        FixingSchedule::regular(
            self.model.maturity,
            self.model.fixing_interval_days,
            self.model.days_per_year,
        )
        .map_err(|e| Error::config(format!("model: {e}")))
    }

    pub fn effective_p_inner(&self) -> usize {
        self.plan.p_inner.unwrap_or_else(|| self.instrument.default_p_inner())
    }

    pub fn to_run_plan(&self) -> Result<RunPlan> {
        let schedule = self.schedule()?;
        let instrument = self.instrument.resolve(&schedule, self.model.s0)?;
        Ok(RunPlan {
            s0: self.model.s0,
            mu_outer: self.model.mu_outer,
            r_inner: self.model.r_inner,
            sigma: self.model.sigma,
            schedule,
            instrument,
            basis: self.basis.to_spec(),
            n_outer: self.plan.n_outer,
            p_inner: self.effective_p_inner(),
            p_baseline: self.plan.p_baseline,
            steps: self.plan.steps.clone(),
            crn: self.plan.crn,
            pfe_quantile: self.plan.pfe_quantile,
            seed: self.seed,
            workers: self.workers,
        })
    }

    pub fn to_study_plan(&self) -> Result<StudyPlan> {
        Ok(StudyPlan {
            s0: self.model.s0,
            mu_outer: self.model.mu_outer,
            r_inner: self.model.r_inner,
            sigma: self.model.sigma,
            strike: self.instrument.strike_or(self.model.s0),
            schedule: self.schedule()?,
            n_outer: self.study.n_outer,
            seed: self.seed,
            workers: self.workers,
        })
    }

    /// Serialize the effective configuration (defaults resolved into explicit
    /// values where they are not structural options).
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }
}
