//! E-step: the backward/forward dynamic program that finds a maximum
//! log-likelihood inventory trajectory for fixed parameters.
//!
//! The trellis has one column per period `t = 0..=T` holding every level in
//! `0..=I_t^max`. Each cell has at most two successors (loss of 0 or 1), so
//! the backward pass does at most two score evaluations per cell.

use crate::error::{Error, Result};
use crate::model::{self, LogLik, ObservedTrace, Params, Trajectory, Units};

/// Relative slack under which two candidate scores count as tied. Scores that
/// are mathematically equal may differ by rounding depending on summation
/// order; ties go to the larger inventory level (no loss).
pub const TIE_TOLERANCE: f64 = 1e-12;

/// True if `candidate` beats `incumbent` by more than the tie slack.
pub fn strictly_better(candidate: LogLik, incumbent: LogLik) -> bool {
    if incumbent == f64::NEG_INFINITY {
        return candidate > incumbent;
    }
    candidate > incumbent + TIE_TOLERANCE * (1.0 + incumbent.abs())
}

/// Marks cells with no feasible continuation.
pub const NO_SUCCESSOR: Units = Units::MAX;

/// Value and policy tables of the backward pass.
#[derive(Debug, Clone)]
pub struct DpTables {
    /// `I_t^max` for `t = 0..=T`.
    pub upper_bounds: Vec<Units>,
    /// `value[t][i]`: best score of periods `t+1..=T` starting from level `i`.
    pub value: Vec<Vec<LogLik>>,
    /// `policy[t][i]`: maximizing `I_{t+1}`, or [`NO_SUCCESSOR`]. Has `T` columns.
    pub policy: Vec<Vec<Units>>,
    /// Number of successor score evaluations performed.
    pub successor_evaluations: usize,
}

impl DpTables {
    pub fn horizon(&self) -> usize {
        self.policy.len()
    }

    pub fn cell_count(&self) -> usize {
        self.upper_bounds.iter().map(|&b| b as usize + 1).sum()
    }
}

/// `(I_0^max, ..., I_T^max)` from the loss-free recursion.
pub fn compute_upper_bounds(trace: &ObservedTrace) -> Result<Vec<Units>> {
    model::checked_upper_bounds(trace)
}

pub fn backward_pass(trace: &ObservedTrace, params: &Params) -> Result<DpTables> {
    let upper_bounds = compute_upper_bounds(trace)?;
    let horizon = trace.horizon();
    let mut value: Vec<Vec<LogLik>> = Vec::with_capacity(horizon + 1);
    let mut policy: Vec<Vec<Units>> = Vec::with_capacity(horizon);
    let mut evaluations = 0usize;

    // Built back to front, reversed at the end.
    value.push(vec![0.0; upper_bounds[horizon] as usize + 1]);
    for t in (0..horizon).rev() {
        let (s, r) = (trace.sales()[t], trace.replenishments()[t]);
        let next_value = value.last().expect("column t+1 present");
        let width = upper_bounds[t] as usize + 1;
        let mut column = vec![f64::NEG_INFINITY; width];
        let mut choice = vec![NO_SUCCESSOR; width];
        for level in s..=upper_bounds[t] {
            let (lo, hi) = model::feasible_range(level, s, r)?;
            let mut best = f64::NEG_INFINITY;
            let mut arg = NO_SUCCESSOR;
            // Larger successor first so ties keep it.
            for next in (lo..=hi).rev() {
                evaluations += 1;
                let score = model::step_ln(level, next, s, r, params);
                let total = if score == f64::NEG_INFINITY {
                    score
                } else {
                    score + next_value[next as usize]
                };
                if strictly_better(total, best) {
                    best = total;
                    arg = next;
                }
            }
            column[level as usize] = best;
            choice[level as usize] = arg;
        }
        value.push(column);
        policy.push(choice);
    }
    value.reverse();
    policy.reverse();
    Ok(DpTables {
        upper_bounds,
        value,
        policy,
        successor_evaluations: evaluations,
    })
}

pub fn forward_pass(tables: &DpTables, trace: &ObservedTrace) -> Result<Trajectory> {
    if tables.horizon() != trace.horizon() {
        return Err(Error::LengthMismatch {
            expected: trace.horizon(),
            got: tables.horizon(),
        });
    }
    let mut level = trace.initial_inventory();
    if tables.value[0][level as usize] == f64::NEG_INFINITY {
        return Err(Error::ModelInfeasible);
    }
    let mut levels = Vec::with_capacity(trace.horizon());
    for column in &tables.policy {
        let next = column[level as usize];
        if next == NO_SUCCESSOR {
            return Err(Error::ModelInfeasible);
        }
        levels.push(next);
        level = next;
    }
    Ok(Trajectory::new(levels))
}

/// Maximum log-likelihood trajectory for fixed parameters, with its score.
pub fn estimate_trajectory(trace: &ObservedTrace, params: &Params) -> Result<(Trajectory, LogLik)> {
    let tables = backward_pass(trace, params)?;
    let trajectory = forward_pass(&tables, trace)?;
    let loglik = model::trajectory_loglik(&trajectory, trace, params)?;
    let dp_value = tables.value[0][trace.initial_inventory() as usize];
    debug_assert!(
        (loglik - dp_value).abs() <= 1e-9 * (1.0 + dp_value.abs()),
        "trajectory score {loglik} disagrees with DP value {dp_value}"
    );
    Ok((trajectory, loglik))
}
