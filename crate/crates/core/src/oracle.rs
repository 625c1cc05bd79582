//! Brute-force reference computations for small instances: exhaustive
//! trajectory enumeration, exhaustive MLE and marginals, a grid maximizer and
//! a central finite difference. They share no code path with the dynamic
//! program, the M-step maximizers or the belief filter, and are used both by
//! the test suite and by the CLI's `--verify` flag.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::estep::strictly_better;
use crate::model::{self, LogLik, ObservedTrace, Params, Trajectory, Units};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationLimit {
    pub max_horizon: usize,
    /// Upper bound on visited trellis nodes across the whole search.
    pub max_states: usize,
}

impl Default for EnumerationLimit {
    fn default() -> Self {
        Self {
            max_horizon: 24,
            max_states: 1_000_000,
        }
    }
}

/// Every trajectory whose steps all satisfy the one-unit loss bounds, in
/// depth-first order (no-loss branch first).
pub fn enumerate_feasible(trace: &ObservedTrace, limit: EnumerationLimit) -> Result<Vec<Trajectory>> {
    if trace.horizon() > limit.max_horizon {
        return Err(Error::EnumerationLimit(limit.max_horizon));
    }
    let mut out = Vec::new();
    let mut path = Vec::with_capacity(trace.horizon());
    let mut visited = 0usize;
    descend(trace, trace.initial_inventory(), &mut path, &mut out, &mut visited, limit.max_states)?;
    Ok(out)
}

fn descend(
    trace: &ObservedTrace,
    level: Units,
    path: &mut Vec<Units>,
    out: &mut Vec<Trajectory>,
    visited: &mut usize,
    max_states: usize,
) -> Result<()> {
    *visited += 1;
    if *visited > max_states {
        return Err(Error::EnumerationLimit(max_states));
    }
    let t = path.len();
    if t == trace.horizon() {
        out.push(Trajectory::new(path.clone()));
        return Ok(());
    }
    let (s, r) = (trace.sales()[t], trace.replenishments()[t]);
    if s > level {
        return Ok(());
    }
    let no_loss = level - s + r;
    let mut branches = vec![no_loss];
    if level > s {
        branches.push(no_loss - 1);
    }
    for next in branches {
        path.push(next);
        descend(trace, next, path, out, visited, max_states)?;
        path.pop();
    }
    Ok(())
}

/// Number of feasible trajectories, counted by a forward pass over levels
/// rather than by enumeration.
pub fn count_feasible(trace: &ObservedTrace) -> u128 {
    let mut counts: BTreeMap<Units, u128> = BTreeMap::from([(trace.initial_inventory(), 1)]);
    for (&s, &r) in trace.sales().iter().zip(trace.replenishments()) {
        let mut next: BTreeMap<Units, u128> = BTreeMap::new();
        for (&level, &n) in counts.iter().filter(|(&level, _)| level >= s) {
            *next.entry(level - s + r).or_default() += n;
            if level > s {
                *next.entry(level - s + r - 1).or_default() += n;
            }
        }
        counts = next;
    }
    counts.values().sum()
}

/// Exhaustive maximizer of the joint log-likelihood. Among trajectories tied
/// with the best score the lexicographically largest wins, matching the
/// dynamic program's preference for keeping stock.
pub fn brute_force_mle(trace: &ObservedTrace, params: &Params, limit: EnumerationLimit) -> Result<(Trajectory, LogLik)> {
    let scored = enumerate_feasible(trace, limit)?
        .into_iter()
        .map(|traj| {
            let score = model::trajectory_loglik(&traj, trace, params)?;
            Ok((traj, score))
        })
        .collect::<Result<Vec<_>>>()?;
    select_best(scored)
}

pub(crate) fn select_best(scored: Vec<(Trajectory, LogLik)>) -> Result<(Trajectory, LogLik)> {
    let best = scored.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Err(Error::ModelInfeasible);
    }
    scored
        .into_iter()
        .filter(|(_, s)| !strictly_better(best, *s))
        .max_by(|a, b| a.0.cmp(&b.0))
        .ok_or(Error::ModelInfeasible)
}

/// Filtered marginals `Pr(I_t | I_0, S_1..S_t, R_1..R_t)` for every period,
/// by enumerating all feasible prefixes and weighting each by its joint
/// likelihood.
pub fn brute_force_marginals(
    trace: &ObservedTrace,
    params: &Params,
    limit: EnumerationLimit,
) -> Result<Vec<BTreeMap<Units, f64>>> {
    (1..=trace.horizon())
        .map(|t| {
            let prefix = trace.prefix(t)?;
            let mut weights: BTreeMap<Units, f64> = BTreeMap::new();
            let scored = enumerate_feasible(&prefix, limit)?
                .into_iter()
                .map(|traj| Ok((traj.levels()[t - 1], model::trajectory_loglik(&traj, &prefix, params)?)))
                .collect::<Result<Vec<_>>>()?;
            let best = scored.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
            if best == f64::NEG_INFINITY {
                return Err(Error::BeliefCollapsed { period: t });
            }
            for (level, score) in scored {
                let w = (score - best).exp();
                if w > 0.0 {
                    *weights.entry(level).or_default() += w;
                }
            }
            let total: f64 = weights.values().sum();
            weights.values_mut().for_each(|w| *w /= total);
            Ok(weights)
        })
        .collect()
}

/// Argmax of `f` over `points` evenly spaced abscissae in `[lo, hi]`; the
/// first maximum wins.
pub fn grid_maximize(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    assert!(lo < hi && points >= 2, "grid needs lo < hi and at least two points");
    let step = (hi - lo) / (points - 1) as f64;
    let mut best_x = lo;
    let mut best_v = f64::NEG_INFINITY;
    for k in 0..points {
        let x = if k == points - 1 { hi } else { lo + step * k as f64 };
        let v = f(x);
        if v > best_v {
            best_v = v;
            best_x = x;
        }
    }
    best_x
}

pub fn finite_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn trace(i0: Units, s: &[Units], r: &[Units]) -> ObservedTrace {
        ObservedTrace::new(i0, s.to_vec(), r.to_vec()).unwrap()
    }

    #[test]
    fn enumerates_toy_instance() {
        let all = enumerate_feasible(&trace(3, &[1, 1], &[0, 0]), EnumerationLimit::default()).unwrap();
        let mut levels: Vec<_> = all.iter().map(|t| t.levels().to_vec()).collect();
        levels.sort();
        assert_eq!(levels, vec![vec![1, 0], vec![2, 0], vec![2, 1]]);
    }

    #[test]
    fn zero_headroom_chain_has_one_path() {
        let all = enumerate_feasible(&trace(5, &[5, 3, 0], &[3, 0, 4]), EnumerationLimit::default()).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].levels(), &[3, 0, 4]);
    }

    #[test]
    fn full_headroom_doubles_each_period() {
        let tr = trace(100, &[1; 10], &[0; 10]);
        let all = enumerate_feasible(&tr, EnumerationLimit::default()).unwrap();
        assert_eq!(all.len(), 1024);
        assert_eq!(count_feasible(&tr), 1024);
    }

    #[test]
    fn limits_are_enforced() {
        let tr = trace(100, &[1; 10], &[0; 10]);
        let tight = EnumerationLimit { max_horizon: 24, max_states: 100 };
        assert_eq!(enumerate_feasible(&tr, tight), Err(Error::EnumerationLimit(100)));
        let short = EnumerationLimit { max_horizon: 5, max_states: 1_000_000 };
        assert!(enumerate_feasible(&tr, short).is_err());
    }

    #[test]
    fn brute_force_toy_and_forced() {
        let tr = trace(3, &[1, 1], &[0, 0]);
        let p = Params::new(1.0, 0.25).unwrap();
        let (traj, score) = brute_force_mle(&tr, &p, EnumerationLimit::default()).unwrap();
        assert_eq!(traj.levels(), &[2, 1]);
        assert_abs_diff_eq!(score, 2.0 * (-1.0 + 0.75f64.ln()), epsilon = 1e-12);

        let p0 = Params::new(2.0, 0.0).unwrap();
        let tr = trace(10, &[2, 3, 1], &[0, 5, 0]);
        let (traj, _) = brute_force_mle(&tr, &p0, EnumerationLimit::default()).unwrap();
        assert_eq!(traj.levels(), &[8, 10, 9]);
    }

    #[test]
    fn selection_is_order_independent() {
        let tr = trace(30, &[1, 1, 1], &[0, 0, 0]);
        let p = Params::new(1.0, 0.5).unwrap();
        let mut scored: Vec<_> = enumerate_feasible(&tr, EnumerationLimit::default())
            .unwrap()
            .into_iter()
            .map(|t| {
                let s = model::trajectory_loglik(&t, &tr, &p).unwrap();
                (t, s)
            })
            .collect();
        let forward = select_best(scored.clone()).unwrap();
        scored.reverse();
        assert_eq!(select_best(scored.clone()).unwrap().0, forward.0);
        scored.rotate_left(3);
        assert_eq!(select_best(scored).unwrap().0, forward.0);
        assert_eq!(forward.0.levels(), &[29, 28, 27]);
    }

    #[test]
    fn marginals_of_first_period() {
        let tr = trace(10, &[4], &[0]);
        let p = Params::new(5.0, 0.25).unwrap();
        let m = brute_force_marginals(&tr, &p, EnumerationLimit::default()).unwrap();
        assert_abs_diff_eq!(m[0][&6], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(m[0][&5], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn grid_and_difference_helpers() {
        let x = grid_maximize(|x| -(x - 3.0) * (x - 3.0), 0.0, 10.0, 1_000_000);
        assert_abs_diff_eq!(x, 3.0, epsilon = 1e-5);
        assert_eq!(grid_maximize(|x| x, 0.0, 10.0, 11), 10.0);
        let loss = |l: f64| 3.0 * l.ln() + 9.0 * (1.0 - l).ln();
        assert_abs_diff_eq!(grid_maximize(loss, 1e-9, 1.0 - 1e-9, 1_000_001), 0.25, epsilon = 1e-6);

        assert_abs_diff_eq!(finite_difference(|x| x * x, 3.0, 1e-5), 6.0, epsilon = 1e-8);
        assert_eq!(finite_difference(|_| 4.2, 1.0, 1e-3), 0.0);
    }
}
