//! GBM path generation for the outer (real-world) and inner (risk-neutral)
//! loops, plus the Black-Scholes analytic reference for validation.
//!
//! The log-Euler step is exact for GBM, so path values are distributionally
//! correct at the fixing dates regardless of grid spacing.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{normal_cdf, open_stream, NormalStream, StreamKey};

/// Constant-coefficient GBM parameters. `drift` is the measure-dependent
/// growth rate (real-world mu for the outer loop, risk-neutral r for the
/// inner loop); `rate` is the discounting rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmParams {
    pub s0: f64,
    pub drift: f64,
    pub volatility: f64,
    pub rate: f64,
}

impl GbmParams {
    pub fn new(s0: f64, drift: f64, volatility: f64, rate: f64) -> Result<Self> {
        if !(s0 > 0.0) {
            return Err(Error::invalid(format!("spot must be positive, got {s0}")));
        }
        if !(volatility > 0.0) {
            return Err(Error::invalid(format!("volatility must be positive, got {volatility}")));
        }
        Ok(Self { s0, drift, volatility, rate })
    }

    /// Same parameters under a different drift (switching measures).
    pub fn with_drift(&self, drift: f64) -> Self {
        Self { drift, ..*self }
    }
}

/// Strictly increasing fixing times (year fractions); the last entry is the
/// instrument maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct FixingSchedule {
    times: Vec<f64>,
}

impl FixingSchedule {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("fixing schedule must contain at least one time"));
        }
        if !(times[0] > 0.0) {
            return Err(Error::invalid("fixing times must be strictly positive"));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid(format!(
                    "fixing times must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { times })
    }

    /// Evenly spaced fixings every `interval_days` (365-day year fractions by
    /// the configured convention), ending at `maturity`.
    pub fn regular(maturity: f64, interval_days: u32, days_per_year: f64) -> Result<Self> {
        if !(maturity > 0.0) {
            return Err(Error::invalid("maturity must be positive"));
        }
        if interval_days == 0 {
            return Err(Error::invalid("fixing interval must be at least one day"));
        }
        let dt = interval_days as f64 / days_per_year;
        let count = (maturity / dt).round().max(1.0) as usize;
        let times = (1..=count).map(|j| j as f64 * maturity / count as f64).collect();
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn maturity(&self) -> f64 {
        *self.times.last().expect("schedule is non-empty")
    }
}

/// Discounting context: all cash flows are valued at `valuation_time` with
/// constant continuously compounded `rate`.
#[derive(Debug, Clone, Copy)]
pub struct Discount {
    pub rate: f64,
    pub valuation_time: f64,
}

impl Discount {
    pub fn new(rate: f64, valuation_time: f64) -> Self {
        Self { rate, valuation_time }
    }

    pub fn factor(&self, pay_time: f64) -> f64 {
        (-self.rate * (pay_time - self.valuation_time)).exp()
    }

    /// Flows strictly before the valuation time have already settled and are
    /// not part of the remaining value.
    pub fn includes(&self, pay_time: f64) -> bool {
        pay_time >= self.valuation_time
    }
}

/// Outer real-world path matrix over a fixing schedule. Row `i` holds
/// `S_{t_1}..S_{t_k}` for scenario `i` and depends on that scenario's
/// substream only.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    schedule: FixingSchedule,
    params: GbmParams,
    provenance: StreamKey,
    n: usize,
    data: Vec<f64>,
}

impl ScenarioSet {
    pub fn schedule(&self) -> &FixingSchedule {
        &self.schedule
    }

    pub fn params(&self) -> &GbmParams {
        &self.params
    }

    pub fn provenance(&self) -> StreamKey {
        self.provenance
    }

    pub fn n_scenarios(&self) -> usize {
        self.n
    }

    pub fn path(&self, scenario: usize) -> &[f64] {
        let k = self.schedule.len();
        &self.data[scenario * k..(scenario + 1) * k]
    }

    pub fn spot(&self, scenario: usize, t_index: usize) -> f64 {
        self.data[scenario * self.schedule.len() + t_index]
    }
}

/// One exact GBM step: `s * exp((drift - sigma^2/2) dt + sigma sqrt(dt) z)`.
pub fn gbm_step(s: f64, drift: f64, sigma: f64, dt: f64, z: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::invalid(format!("gbm_step: spot must be positive, got {s}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("gbm_step: sigma must be positive, got {sigma}")));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("gbm_step: dt must be positive, got {dt}")));
    }
    Ok(s * ((drift - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * z).exp())
}

fn step_unchecked(s: f64, drift: f64, sigma: f64, dt: f64, z: f64) -> f64 {
    s * ((drift - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * z).exp()
}

/// Generate `n` real-world scenarios over the schedule. Each scenario draws
/// from its own substream, so the result is independent of thread count.
pub fn generate_outer(
    params: &GbmParams,
    schedule: &FixingSchedule,
    n: usize,
    seed: u64,
) -> Result<ScenarioSet> {
    if n < 2 {
        return Err(Error::invalid("generate_outer: need at least 2 scenarios for regression"));
    }
    let k = schedule.len();
    let mut data = vec![0.0; n * k];
    data.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
        let mut stream = open_stream(StreamKey::outer(seed, i as u64));
        let mut s = params.s0;
        let mut prev_t = 0.0;
        for (j, &t) in schedule.times().iter().enumerate() {
            s = step_unchecked(s, params.drift, params.volatility, t - prev_t, stream.next_normal());
            row[j] = s;
            prev_t = t;
        }
    });
    Ok(ScenarioSet {
        schedule: schedule.clone(),
        params: *params,
        provenance: StreamKey::outer(seed, 0),
        n,
        data,
    })
}

/// Continuation paths for the fixings after `t_index`, as a dense
/// `paths x remaining` matrix.
#[derive(Debug, Clone)]
pub struct InnerTail {
    data: Vec<f64>,
    paths: usize,
    remaining: usize,
}

impl InnerTail {
    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn path(&self, k: usize) -> &[f64] {
        &self.data[k * self.remaining..(k + 1) * self.remaining]
    }
}

/// Simulate `p` inner continuations of a scenario observed at fixing
/// `t_index` and hand each complete path (realized prefix plus simulated
/// tail) to `visit`. Realized fixings are frozen; only fixings after
/// `t_index` are simulated, under the drift carried by `params`.
///
/// With `antithetic` set, odd-numbered paths reuse the negated draws of the
/// preceding path, pairing whole paths rather than single variates.
pub fn walk_inner_tails<F>(
    realized: &[f64],
    params: &GbmParams,
    schedule: &FixingSchedule,
    t_index: usize,
    p: usize,
    stream: &mut NormalStream,
    antithetic: bool,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, &[f64]),
{
    let k = schedule.len();
    if t_index >= k {
        return Err(Error::invalid(format!(
            "inner simulation: t_index {t_index} out of range for {k} fixings"
        )));
    }
    if realized.len() < t_index + 1 {
        return Err(Error::invalid(format!(
            "inner simulation: need {} realized fixings, got {}",
            t_index + 1,
            realized.len()
        )));
    }
    if p == 0 {
        return Err(Error::invalid("inner simulation: need at least one path"));
    }
    let remaining = k - t_index - 1;
    let times = schedule.times();
    let mut full = vec![0.0; k];
    full[..t_index + 1].copy_from_slice(&realized[..t_index + 1]);
    let mut draws = vec![0.0; remaining];
    for path in 0..p {
        if remaining > 0 {
            if antithetic && path % 2 == 1 {
                for z in draws.iter_mut() {
                    *z = -*z;
                }
            } else {
                for z in draws.iter_mut() {
                    *z = stream.next_normal();
                }
            }
            let mut s = full[t_index];
            let mut prev_t = times[t_index];
            for (step, &z) in draws.iter().enumerate() {
                let t = times[t_index + 1 + step];
                s = step_unchecked(s, params.drift, params.volatility, t - prev_t, z);
                full[t_index + 1 + step] = s;
                prev_t = t;
            }
        }
        visit(path, &full);
    }
    Ok(())
}

/// Materialized form of [`walk_inner_tails`]: the `p x remaining` matrix of
/// simulated continuation fixings.
pub fn simulate_inner_tail(
    realized: &[f64],
    params: &GbmParams,
    schedule: &FixingSchedule,
    t_index: usize,
    p: usize,
    stream: &mut NormalStream,
    antithetic: bool,
) -> Result<InnerTail> {
    let k = schedule.len();
    let remaining = k.saturating_sub(t_index + 1);
    let mut data = vec![0.0; p * remaining];
    walk_inner_tails(realized, params, schedule, t_index, p, stream, antithetic, |path, full| {
        data[path * remaining..(path + 1) * remaining].copy_from_slice(&full[t_index + 1..]);
    })?;
    Ok(InnerTail { data, paths: p, remaining })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
    Put,
}

/// Black-Scholes price of a European option; returns intrinsic value at
/// `tau = 0`.
pub fn black_scholes(
    s: f64,
    strike: f64,
    rate: f64,
    sigma: f64,
    tau: f64,
    kind: OptionKind,
) -> Result<f64> {
    if !(s > 0.0) || !(strike > 0.0) {
        return Err(Error::invalid("black_scholes: spot and strike must be positive"));
    }
    if tau < 0.0 {
        return Err(Error::invalid("black_scholes: negative time to maturity"));
    }
    if tau == 0.0 {
        return Ok(match kind {
            OptionKind::Call => (s - strike).max(0.0),
            OptionKind::Put => (strike - s).max(0.0),
        });
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("black_scholes: sigma must be positive for tau > 0"));
    }
    let sqrt_tau = tau.sqrt();
    let d1 = ((s / strike).ln() + (rate + 0.5 * sigma * sigma) * tau) / (sigma * sqrt_tau);
    let d2 = d1 - sigma * sqrt_tau;
    let df = (-rate * tau).exp();
    Ok(match kind {
        OptionKind::Call => s * normal_cdf(d1) - strike * df * normal_cdf(d2),
        OptionKind::Put => strike * df * normal_cdf(-d2) - s * normal_cdf(-d1),
    })
}
