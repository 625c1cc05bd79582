//! Inventory model: truncated sale and loss distributions, the one-period
//! transition kernel, feasibility bounds and the joint log-likelihood.
//!
//! Every period `t` the store sells `S_t = min(X_t, I_{t-1})` units with
//! `X_t ~ Poisson(sigma)`, then silently loses `L_t = min(Y_t, I_{t-1} - S_t)`
//! units with `Y_t ~ Bernoulli(lambda)`, then receives `R_t` units. The
//! inventory ledger is `I_t = I_{t-1} - S_t - L_t + R_t`; only `I_0`, `S` and `R`
//! are observed.
//!
//! All probabilities are carried as natural logarithms. `f64::NEG_INFINITY`
//! stands for an impossible event and is a legal value everywhere.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inventory units (levels, sales, replenishments).
pub type Units = u64;

/// Natural log-probability; `NEG_INFINITY` marks an impossible event.
pub type LogLik = f64;

/// Largest inventory level a trace may reach.
pub const MAX_LEVEL: Units = 1 << 31;

/// Sale-rate and loss-probability parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    sigma: f64,
    lambda: f64,
}

impl Params {
    pub fn new(sigma: f64, lambda: f64) -> Result<Self> {
        check_sigma(sigma)?;
        check_lambda(lambda)?;
        Ok(Self { sigma, lambda })
    }

    /// Expected (untruncated) sales per period.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Per-period loss probability.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("sigma must be positive and finite, got {sigma}")))
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Domain(format!("lambda must lie in [0, 1], got {lambda}")))
    }
}

/// Initial inventory plus the observed sales and replenishment histories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedTrace {
    initial_inventory: Units,
    sales: Vec<Units>,
    replenishments: Vec<Units>,
}

impl ObservedTrace {
    /// Checks shape only (equal, nonzero lengths and level cap). Use
    /// [`validate_trace`] for feasibility.
    pub fn new(initial_inventory: Units, sales: Vec<Units>, replenishments: Vec<Units>) -> Result<Self> {
        if sales.len() != replenishments.len() {
            return Err(Error::LengthMismatch {
                expected: sales.len(),
                got: replenishments.len(),
            });
        }
        if sales.is_empty() {
            return Err(Error::InvalidConfig("trace must contain at least one period".into()));
        }
        if initial_inventory > MAX_LEVEL {
            return Err(Error::InvalidConfig(format!(
                "initial inventory {initial_inventory} exceeds cap {MAX_LEVEL}"
            )));
        }
        Ok(Self {
            initial_inventory,
            sales,
            replenishments,
        })
    }

    pub fn initial_inventory(&self) -> Units {
        self.initial_inventory
    }

    pub fn sales(&self) -> &[Units] {
        &self.sales
    }

    pub fn replenishments(&self) -> &[Units] {
        &self.replenishments
    }

    /// Number of periods `T`.
    pub fn horizon(&self) -> usize {
        self.sales.len()
    }

    /// `(S_t, R_t)` for the 1-based period `t`.
    pub fn period(&self, t: usize) -> Result<(Units, Units)> {
        if t == 0 || t > self.horizon() {
            return Err(Error::PeriodOutOfRange {
                period: t,
                horizon: self.horizon(),
            });
        }
        Ok((self.sales[t - 1], self.replenishments[t - 1]))
    }

    /// The first `len` periods as a trace of their own.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        Self::new(
            self.initial_inventory,
            self.sales[..len.min(self.horizon())].to_vec(),
            self.replenishments[..len.min(self.horizon())].to_vec(),
        )
    }
}

/// A candidate hidden inventory history `(I_1, ..., I_T)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory {
    levels: Vec<Units>,
}

impl Trajectory {
    pub fn new(levels: Vec<Units>) -> Self {
        Self { levels }
    }

    pub fn levels(&self) -> &[Units] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// `I_{t-1}` for each period, starting from the trace's initial level.
    pub fn previous_levels<'a>(&'a self, trace: &ObservedTrace) -> impl Iterator<Item = Units> + 'a {
        std::iter::once(trace.initial_inventory()).chain(self.levels.iter().copied().take(self.levels.len().saturating_sub(1)))
    }

    /// Implied per-period losses `L_t = I_{t-1} - S_t + R_t - I_t`.
    pub fn implied_losses(&self, trace: &ObservedTrace) -> Result<Vec<i64>> {
        self.check_length(trace)?;
        Ok(self
            .previous_levels(trace)
            .zip(&self.levels)
            .zip(trace.sales().iter().zip(trace.replenishments()))
            .map(|((prev, &next), (&s, &r))| prev as i64 - s as i64 + r as i64 - next as i64)
            .collect())
    }

    /// Checks that every consecutive pair is reachable with a loss of 0 or 1.
    pub fn check_feasible(&self, trace: &ObservedTrace) -> Result<()> {
        self.check_length(trace)?;
        for (t, (prev, &next)) in self.previous_levels(trace).zip(&self.levels).enumerate() {
            let (s, r) = (trace.sales()[t], trace.replenishments()[t]);
            let (lo, hi) = feasible_range(prev, s, r).map_err(|_| Error::InfeasibleTrace {
                period: t + 1,
                reason: format!("sales {s} exceed level {prev}"),
            })?;
            if next < lo || next > hi {
                return Err(Error::InfeasibleTrace {
                    period: t + 1,
                    reason: format!("level {next} outside [{lo}, {hi}]"),
                });
            }
        }
        Ok(())
    }

    fn check_length(&self, trace: &ObservedTrace) -> Result<()> {
        if self.levels.len() != trace.horizon() {
            return Err(Error::LengthMismatch {
                expected: trace.horizon(),
                got: self.levels.len(),
            });
        }
        Ok(())
    }
}

const LN_FACT_TABLE: usize = 1024;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0_f64;
        table.push(0.0);
        for k in 1..LN_FACT_TABLE {
            acc += (k as f64).ln();
            table.push(acc);
        }
        table
    })
}

/// `ln(n!)`: accumulated sums of `ln k` below 1024, Stirling series above.
pub fn ln_factorial(n: Units) -> f64 {
    if (n as usize) < LN_FACT_TABLE {
        return ln_fact_table()[n as usize];
    }
    let x = n as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// Untruncated Poisson log-pmf `ln P(X = k)`.
pub fn poisson_logpmf(k: Units, sigma: f64) -> f64 {
    let kf = k as f64;
    let log_term = if k == 0 { 0.0 } else { kf * sigma.ln() };
    -sigma + log_term - ln_factorial(k)
}

/// `ln P(X >= i)` for `X ~ Poisson(sigma)`.
///
/// When the lower partial sum `P(X < i)` is below one half the tail is taken
/// as `log1p(-partial)`; otherwise the tail is summed directly, scaled by its
/// first term, so neither side suffers cancellation.
pub fn poisson_log_upper_tail(i: Units, sigma: f64) -> f64 {
    if i == 0 {
        return 0.0;
    }
    let partial: f64 = (0..i).map(|k| poisson_logpmf(k, sigma).exp()).sum();
    if partial < 0.5 {
        return (-partial).ln_1p();
    }
    let mut term = 1.0_f64;
    let mut acc = 1.0_f64;
    let mut k = i as f64;
    loop {
        k += 1.0;
        term *= sigma / k;
        acc += term;
        if k > sigma && term <= acc * f64::EPSILON * 0.25 {
            break;
        }
    }
    poisson_logpmf(i, sigma) + acc.ln()
}

pub(crate) fn trunc_poisson_ln(s: Units, i_prev: Units, sigma: f64) -> LogLik {
    use std::cmp::Ordering::*;
    match s.cmp(&i_prev) {
        Less => poisson_logpmf(s, sigma),
        Equal => poisson_log_upper_tail(i_prev, sigma),
        Greater => f64::NEG_INFINITY,
    }
}

/// `ln Pr(S_t = s | I_{t-1} = i_prev)` for sales truncated at the available
/// stock: the Poisson pmf below the cap, the upper tail at the cap, and
/// `-inf` above it.
pub fn trunc_poisson_logpmf(s: Units, i_prev: Units, sigma: f64) -> Result<LogLik> {
    check_sigma(sigma)?;
    Ok(trunc_poisson_ln(s, i_prev, sigma))
}

pub(crate) fn trunc_bernoulli_ln(loss: Units, headroom: Units, lambda: f64) -> LogLik {
    match (loss, headroom) {
        (0, 0) => 0.0,
        (_, 0) => f64::NEG_INFINITY,
        (0, _) => (1.0 - lambda).ln(),
        _ => lambda.ln(),
    }
}

/// `ln Pr(L_t = loss)` for a Bernoulli loss capped by the post-sales headroom.
pub fn trunc_bernoulli_logpmf(loss: Units, headroom: Units, lambda: f64) -> Result<LogLik> {
    if loss > 1 {
        return Err(Error::Domain(format!("loss must be 0 or 1, got {loss}")));
    }
    check_lambda(lambda)?;
    Ok(trunc_bernoulli_ln(loss, headroom, lambda))
}

/// Range `[lo, hi]` of end-of-period levels reachable from `i_prev` after
/// selling `s` and receiving `r`: `hi` is the no-loss level, `lo` allows a
/// single lost unit when there is stock left after sales.
pub fn feasible_range(i_prev: Units, s: Units, r: Units) -> Result<(Units, Units)> {
    if s > i_prev {
        return Err(Error::InfeasibleStep { stock: i_prev, sales: s });
    }
    let hi = i_prev - s + r;
    let lo = if i_prev > s { hi - 1 } else { hi };
    Ok((lo, hi))
}

pub(crate) fn transition_ln(i_prev: Units, s: Units, r: Units, i_next: Units, lambda: f64) -> LogLik {
    let headroom = i_prev - s;
    let hi = headroom + r;
    if i_next > hi {
        return f64::NEG_INFINITY;
    }
    let loss = hi - i_next;
    if loss > 1 {
        return f64::NEG_INFINITY;
    }
    trunc_bernoulli_ln(loss, headroom, lambda)
}

/// `ln Pr(I_t = i_next | I_{t-1} = i_prev, S_t = s, R_t = r)`, the loss
/// probability of the implied loss `i_prev - s + r - i_next`.
pub fn transition_logprob(i_prev: Units, s: Units, r: Units, i_next: Units, lambda: f64) -> Result<LogLik> {
    check_lambda(lambda)?;
    if s > i_prev {
        return Err(Error::InfeasibleStep { stock: i_prev, sales: s });
    }
    Ok(transition_ln(i_prev, s, r, i_next, lambda))
}

pub(crate) fn step_ln(i_prev: Units, i_next: Units, s: Units, r: Units, params: &Params) -> LogLik {
    if s > i_prev {
        return f64::NEG_INFINITY;
    }
    let trans = transition_ln(i_prev, s, r, i_next, params.lambda);
    if trans == f64::NEG_INFINITY {
        return trans;
    }
    trunc_poisson_ln(s, i_prev, params.sigma) + trans
}

/// Per-period score: sales log-likelihood given `i_prev` plus the transition
/// log-probability to `i_next`, for the 1-based period `t`.
pub fn step_score(i_prev: Units, i_next: Units, t: usize, trace: &ObservedTrace, params: &Params) -> Result<LogLik> {
    let (s, r) = trace.period(t)?;
    Ok(step_ln(i_prev, i_next, s, r, params))
}

/// Joint log-likelihood of a trajectory: the sum of the per-period scores.
/// `-inf` exactly when some step is infeasible.
pub fn trajectory_loglik(trajectory: &Trajectory, trace: &ObservedTrace, params: &Params) -> Result<LogLik> {
    trajectory.check_length(trace)?;
    let mut total = 0.0;
    for (t, (prev, &next)) in trajectory.previous_levels(trace).zip(trajectory.levels()).enumerate() {
        let score = step_ln(prev, next, trace.sales()[t], trace.replenishments()[t], params);
        if score == f64::NEG_INFINITY {
            return Ok(score);
        }
        total += score;
    }
    Ok(total)
}

/// Upper bounds `I_t^max` for `t = 0..=T`, failing at the first period whose
/// sales exceed any reachable stock.
pub(crate) fn checked_upper_bounds(trace: &ObservedTrace) -> Result<Vec<Units>> {
    let mut bounds = Vec::with_capacity(trace.horizon() + 1);
    let mut level = trace.initial_inventory();
    bounds.push(level);
    for (t, (&s, &r)) in trace.sales().iter().zip(trace.replenishments()).enumerate() {
        if s > level {
            return Err(Error::InfeasibleTrace {
                period: t + 1,
                reason: format!("sales {s} exceed the largest possible stock {level}"),
            });
        }
        level = level - s + r;
        if level > MAX_LEVEL {
            return Err(Error::InfeasibleTrace {
                period: t + 1,
                reason: format!("inventory bound {level} exceeds cap {MAX_LEVEL}"),
            });
        }
        bounds.push(level);
    }
    Ok(bounds)
}

/// Accepts a trace iff no period sells more than the loss-free upper bound
/// on stock allows.
pub fn validate_trace(trace: &ObservedTrace) -> Result<()> {
    checked_upper_bounds(trace).map(|_| ())
}
