//! Discounted payoff evaluation over a complete path of fixings for the five
//! supported instruments, plus the per-instrument explanatory state used by
//! the regression step.
//!
//! Conventions:
//! - Stopping events are monitored discretely at the fixing dates; ties
//!   trigger (`S >= B`).
//! - A payoff is the value of the *remaining* cash flows: flows paying
//!   strictly before the valuation time are dropped, flows at or after it are
//!   discounted to it.
//! - The accumulating forward counts fixings strictly inside each payment
//!   period, after truncating fixing times at the knock-out time; a truncated
//!   term is still paid at its period end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Discount, FixingSchedule, OptionKind};

/// Long/short side of the accumulating forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Long,
    Short,
}

/// Which leg of the target accrual note is held.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TarnSide {
    Receiver,
    Payer,
}

/// Instrument definition. Field names follow the configuration surface.
#[derive(Debug, Clone, PartialEq)]
pub enum Instrument {
    Vanilla {
        kind: OptionKind,
        strike: f64,
    },
    Asian {
        kind: OptionKind,
        strike: f64,
        /// One non-negative weight per fixing; must sum to a positive value.
        weights: Vec<f64>,
    },
    /// Up-and-out option: vanilla payoff unless the barrier is touched, in
    /// which case the rebate is paid at the knock-out fixing.
    BarrierUpOut {
        kind: OptionKind,
        strike: f64,
        barrier: f64,
        rebate: f64,
    },
    /// Accumulating forward with `payments` settlement periods; an optional
    /// knock-out barrier stops accumulation.
    AccumForward {
        side: Side,
        strike: f64,
        alpha: f64,
        beta: f64,
        payments: usize,
        barrier: Option<f64>,
    },
    /// Target accrual redemption note: coupons at every fixing, switching
    /// from `fixed_rate - S` to `fixed_rate - capped_rate` once the running
    /// sum of fixings reaches `accrual_cap`.
    Tarn {
        side: TarnSide,
        fixed_rate: f64,
        capped_rate: f64,
        accrual_cap: f64,
    },
}

/// Evaluated stopping state of one path: the first fixing index at which the
/// instrument's stopping rule fired (if any) and the running accumulator at
/// the observation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub stop_index: Option<usize>,
    pub accrued: f64,
}

fn intrinsic(kind: OptionKind, s: f64, strike: f64) -> f64 {
    match kind {
        OptionKind::Call => (s - strike).max(0.0),
        OptionKind::Put => (strike - s).max(0.0),
    }
}

impl Instrument {
    /// Static validation against the fixing schedule. Trade-time checks that
    /// need market data (barrier above spot) live at the configuration layer.
    pub fn validate(&self, schedule: &FixingSchedule) -> Result<()> {
        let k = schedule.len();
        match self {
            Instrument::Vanilla { strike, .. } => {
                if !(*strike > 0.0) {
                    return Err(Error::invalid("vanilla: strike must be positive"));
                }
            }
            Instrument::Asian { strike, weights, .. } => {
                if !(*strike > 0.0) {
                    return Err(Error::invalid("asian: strike must be positive"));
                }
                if weights.len() != k {
                    return Err(Error::invalid(format!(
                        "asian: {} weights for {} fixings",
                        weights.len(),
                        k
                    )));
                }
                if weights.iter().any(|w| *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::invalid(
                        "asian: weights must be non-negative with positive sum",
                    ));
                }
            }
            Instrument::BarrierUpOut { strike, barrier, rebate, .. } => {
                if !(*strike > 0.0) || !(*barrier > 0.0) {
                    return Err(Error::invalid("barrier: strike and barrier must be positive"));
                }
                if *rebate < 0.0 {
                    return Err(Error::invalid("barrier: rebate must be non-negative"));
                }
            }
            Instrument::AccumForward { alpha, beta, payments, barrier, .. } => {
                if !alpha.is_finite() || !beta.is_finite() {
                    return Err(Error::invalid("accum_forward: alpha and beta must be finite"));
                }
                if *payments == 0 || *payments > k {
                    return Err(Error::invalid(format!(
                        "accum_forward: payments must be in 1..={k}"
                    )));
                }
                if let Some(b) = barrier {
                    if !(*b > 0.0) {
                        return Err(Error::invalid("accum_forward: barrier must be positive"));
                    }
                }
            }
            Instrument::Tarn { fixed_rate, capped_rate, accrual_cap, .. } => {
                if !fixed_rate.is_finite() || !capped_rate.is_finite() {
                    return Err(Error::invalid("tarn: rates must be finite"));
                }
                if !(*accrual_cap > 0.0) {
                    return Err(Error::invalid("tarn: accrual cap must be positive"));
                }
            }
        }
        Ok(())
    }

    /// First fixing index at which the stopping rule fires, scanning fixings
    /// up to and including `t_index`.
    fn stop_index_upto(&self, fixings: &[f64], t_index: usize) -> Option<usize> {
        match self {
            Instrument::BarrierUpOut { barrier, .. } => {
                fixings[..=t_index].iter().position(|&s| s >= *barrier)
            }
            Instrument::AccumForward { barrier: Some(b), .. } => {
                fixings[..=t_index].iter().position(|&s| s >= *b)
            }
            Instrument::AccumForward { barrier: None, .. } => None,
            Instrument::Tarn { accrual_cap, .. } => {
                let mut acc = 0.0;
                for (j, &s) in fixings[..=t_index].iter().enumerate() {
                    acc += s;
                    if acc >= *accrual_cap {
                        return Some(j);
                    }
                }
                None
            }
            _ => None,
        }
    }

    /// Stopping state and running accumulator observed at fixing `t_index`.
    pub fn path_state(
        &self,
        schedule: &FixingSchedule,
        fixings: &[f64],
        t_index: usize,
    ) -> PathState {
        let stop_index = self.stop_index_upto(fixings, t_index);
        let accrued = match self {
            Instrument::Asian { weights, .. } => fixings[..=t_index]
                .iter()
                .zip(weights)
                .map(|(s, w)| s * w)
                .sum(),
            Instrument::Tarn { .. } => {
                let upto = stop_index.unwrap_or(t_index).min(t_index);
                fixings[..=upto].iter().sum()
            }
            Instrument::AccumForward { alpha, beta, strike, payments, .. } => {
                let bounds = period_bounds(schedule, *payments);
                let upto = stop_index.unwrap_or(t_index).min(t_index);
                let mut acc = 0.0;
                for (j, &s) in fixings[..=upto].iter().enumerate() {
                    if is_interior(schedule.times()[j], &bounds) {
                        acc += if s > *strike { *alpha } else { *beta };
                    }
                }
                acc
            }
            _ => 0.0,
        };
        PathState { stop_index, accrued }
    }

    /// Value at the valuation time of all remaining cash flows along a fully
    /// realized path of fixings.
    pub fn discounted_payoff(
        &self,
        schedule: &FixingSchedule,
        fixings: &[f64],
        disc: &Discount,
    ) -> Result<f64> {
        if fixings.len() != schedule.len() {
            return Err(Error::invalid(format!(
                "payoff: {} fixings for a schedule of {}",
                fixings.len(),
                schedule.len()
            )));
        }
        match self {
            Instrument::Vanilla { kind, strike } => {
                Ok(vanilla_payoff(*kind, *strike, schedule, fixings, disc))
            }
            Instrument::Asian { kind, strike, weights } => {
                asian_payoff(*kind, *strike, weights, schedule, fixings, disc)
            }
            Instrument::BarrierUpOut { kind, strike, barrier, rebate } => {
                Ok(barrier_payoff(*kind, *strike, *barrier, *rebate, schedule, fixings, disc))
            }
            Instrument::AccumForward { side, strike, alpha, beta, payments, barrier } => {
                Ok(accum_forward_payoff(
                    *side, *strike, *alpha, *beta, *payments, *barrier, schedule, fixings, disc,
                ))
            }
            Instrument::Tarn { side, fixed_rate, capped_rate, accrual_cap } => Ok(tarn_payoff(
                *side,
                *fixed_rate,
                *capped_rate,
                *accrual_cap,
                schedule,
                fixings,
                disc,
            )),
        }
    }

    /// Regression explanatory vector at fixing `t_index`: the continuous
    /// state variables first, then (for stoppable instruments) a 0/1 stop
    /// indicator that is 1 once the stopping event has occurred.
    pub fn state_variables(
        &self,
        schedule: &FixingSchedule,
        fixings: &[f64],
        t_index: usize,
    ) -> Vec<f64> {
        let state = self.path_state(schedule, fixings, t_index);
        let spot = fixings[t_index];
        let stopped = if state.stop_index.is_some() { 1.0 } else { 0.0 };
        match self {
            Instrument::Vanilla { .. } => vec![spot],
            Instrument::Asian { .. } => vec![state.accrued],
            Instrument::BarrierUpOut { .. } => vec![spot, stopped],
            Instrument::AccumForward { .. } => vec![spot, state.accrued, stopped],
            Instrument::Tarn { .. } => vec![spot, state.accrued, stopped],
        }
    }

    /// Shape of [`Instrument::state_variables`]: number of leading continuous
    /// components and whether a trailing stop indicator is present.
    pub fn state_layout(&self) -> StateLayout {
        match self {
            Instrument::Vanilla { .. } | Instrument::Asian { .. } => {
                StateLayout { continuous: 1, has_indicator: false }
            }
            Instrument::BarrierUpOut { .. } => StateLayout { continuous: 1, has_indicator: true },
            Instrument::AccumForward { .. } | Instrument::Tarn { .. } => {
                StateLayout { continuous: 2, has_indicator: true }
            }
        }
    }

    /// Strike-like level separating payoff regimes, used as the dummy
    /// threshold for indicator-augmented bases.
    pub fn regression_threshold(&self) -> Option<f64> {
        match self {
            Instrument::Vanilla { strike, .. }
            | Instrument::Asian { strike, .. }
            | Instrument::BarrierUpOut { strike, .. }
            | Instrument::AccumForward { strike, .. } => Some(*strike),
            Instrument::Tarn { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub continuous: usize,
    pub has_indicator: bool,
}

/// `exp(-r (T - t)) * (S_T - K)^+` (call) or the put counterpart.
pub fn vanilla_payoff(
    kind: OptionKind,
    strike: f64,
    schedule: &FixingSchedule,
    fixings: &[f64],
    disc: &Discount,
) -> f64 {
    let maturity = schedule.maturity();
    if !disc.includes(maturity) {
        return 0.0;
    }
    disc.factor(maturity) * intrinsic(kind, fixings[fixings.len() - 1], strike)
}

/// Weighted arithmetic-average option paid at maturity.
pub fn asian_payoff(
    kind: OptionKind,
    strike: f64,
    weights: &[f64],
    schedule: &FixingSchedule,
    fixings: &[f64],
    disc: &Discount,
) -> Result<f64> {
    if weights.len() != fixings.len() {
        return Err(Error::invalid(format!(
            "asian payoff: {} weights for {} fixings",
            weights.len(),
            fixings.len()
        )));
    }
    let maturity = schedule.maturity();
    if !disc.includes(maturity) {
        return Ok(0.0);
    }
    let average: f64 = weights.iter().zip(fixings).map(|(w, s)| w * s).sum();
    Ok(disc.factor(maturity) * intrinsic(kind, average, strike))
}

/// Up-and-out option: the rebate is paid at the knock-out fixing, the vanilla
/// payoff at maturity otherwise.
pub fn barrier_payoff(
    kind: OptionKind,
    strike: f64,
    barrier: f64,
    rebate: f64,
    schedule: &FixingSchedule,
    fixings: &[f64],
    disc: &Discount,
) -> f64 {
    match fixings.iter().position(|&s| s >= barrier) {
        Some(tau) => {
            let pay_time = schedule.times()[tau];
            if disc.includes(pay_time) {
                disc.factor(pay_time) * rebate
            } else {
                0.0
            }
        }
        None => vanilla_payoff(kind, strike, schedule, fixings, disc),
    }
}

/// Period end indices for an `payments`-payment structure over `k` fixings:
/// the last fixing of each period, with the final one at maturity.
pub fn payment_indices(k: usize, payments: usize) -> Vec<usize> {
    (1..=payments).map(|i| i * k / payments - 1).collect()
}

/// Period boundary times `(T_0, T_1, .., T_n)` with `T_0 = 0`.
fn period_bounds(schedule: &FixingSchedule, payments: usize) -> Vec<f64> {
    let mut bounds = vec![0.0];
    bounds.extend(payment_indices(schedule.len(), payments).iter().map(|&i| schedule.times()[i]));
    bounds
}

fn is_interior(t: f64, bounds: &[f64]) -> bool {
    bounds.windows(2).any(|w| t > w[0] && t < w[1])
}

/// Accumulating forward: per period, each interior fixing (after truncation
/// at the knock-out time) adds `alpha` if above the strike and `beta`
/// otherwise; the count multiplies the settlement intrinsic at the period
/// end, with the settlement fixing frozen at knock-out.
pub fn accum_forward_payoff(
    side: Side,
    strike: f64,
    alpha: f64,
    beta: f64,
    payments: usize,
    barrier: Option<f64>,
    schedule: &FixingSchedule,
    fixings: &[f64],
    disc: &Discount,
) -> f64 {
    let times = schedule.times();
    let k = fixings.len();
    let tau = barrier.and_then(|b| fixings.iter().position(|&s| s >= b));
    let bounds = period_bounds(schedule, payments);
    let pay_idx = payment_indices(k, payments);
    let last_counted = tau.unwrap_or(k - 1);
    let mut total = 0.0;
    for (period, &end_idx) in pay_idx.iter().enumerate() {
        let pay_time = times[end_idx];
        if !disc.includes(pay_time) {
            continue;
        }
        let (lo, hi) = (bounds[period], bounds[period + 1]);
        let mut up = 0usize;
        let mut down = 0usize;
        for j in 0..=last_counted {
            let t = times[j];
            if t > lo && t < hi {
                if fixings[j] > strike {
                    up += 1;
                } else {
                    down += 1;
                }
            }
        }
        let settle_idx = match tau {
            Some(t) if t < end_idx => t,
            _ => end_idx,
        };
        let forward = strike - fixings[settle_idx];
        let signed = match side {
            Side::Short => forward,
            Side::Long => -forward,
        };
        total += (alpha * up as f64 + beta * down as f64) * signed * disc.factor(pay_time);
    }
    total
}

/// Target accrual note: one coupon per fixing, switching to the capped rate
/// from the fixing at which the running sum reaches the cap.
pub fn tarn_payoff(
    side: TarnSide,
    fixed_rate: f64,
    capped_rate: f64,
    accrual_cap: f64,
    schedule: &FixingSchedule,
    fixings: &[f64],
    disc: &Discount,
) -> f64 {
    let times = schedule.times();
    let mut running = 0.0;
    let mut capped = false;
    let mut total = 0.0;
    for (j, &s) in fixings.iter().enumerate() {
        if !capped {
            running += s;
            if running >= accrual_cap {
                capped = true;
            }
        }
        let coupon = if capped { fixed_rate - capped_rate } else { fixed_rate - s };
        let pay_time = times[j];
        if disc.includes(pay_time) {
            let signed = match side {
                TarnSide::Receiver => coupon,
                TarnSide::Payer => -coupon,
            };
            total += signed * disc.factor(pay_time);
        }
    }
    total
}
