//! Forward filtering of the hidden inventory level.
//!
//! A [`Belief`] is the distribution of `I_t` given `I_0`, `S_1..S_t` and
//! `R_1..R_t`. Two update rules are registered:
//!
//! * `bayes` (default): weights each previous level by the probability of the
//!   observed sales before applying the loss kernel. This is the exact filter.
//! * `paper`: applies only the loss kernel, dropping previous levels that
//!   could not have produced the observed sales and renormalizing. It skips
//!   the sales reweighting and so differs from the exact filter whenever the
//!   sales likelihood varies across the support.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{self, ObservedTrace, Params, Units};
use crate::registry::{Named, Registry};

/// Distribution over inventory levels at the end of one period, stored densely
/// over its support `[offset, offset + mass.len())`.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    period: usize,
    offset: Units,
    mass: Vec<f64>,
}

impl Belief {
    pub fn point(period: usize, level: Units) -> Self {
        Self {
            period,
            offset: level,
            mass: vec![1.0],
        }
    }

    /// Builds a belief from `(level, mass)` pairs; masses are normalized.
    pub fn from_pairs(period: usize, pairs: &[(Units, f64)]) -> Result<Self> {
        let lo = pairs.iter().map(|p| p.0).min().ok_or(Error::BeliefCollapsed { period })?;
        let hi = pairs.iter().map(|p| p.0).max().unwrap_or(lo);
        let mut mass = vec![0.0; (hi - lo + 1) as usize];
        for &(level, p) in pairs {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::Domain(format!("mass {p} at level {level} is not a probability")));
            }
            mass[(level - lo) as usize] += p;
        }
        Self::normalized(period, lo, mass)
    }

    fn normalized(period: usize, offset: Units, mut mass: Vec<f64>) -> Result<Self> {
        let total: f64 = mass.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::BeliefCollapsed { period });
        }
        mass.iter_mut().for_each(|m| *m /= total);
        let first = mass.iter().position(|&m| m > 0.0).expect("positive total");
        let last = mass.iter().rposition(|&m| m > 0.0).expect("positive total");
        Ok(Self {
            period,
            offset: offset + first as Units,
            mass: mass[first..=last].to_vec(),
        })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn mass(&self, level: Units) -> f64 {
        level
            .checked_sub(self.offset)
            .and_then(|k| self.mass.get(k as usize))
            .copied()
            .unwrap_or(0.0)
    }

    /// Lowest and highest level carrying positive mass.
    pub fn support(&self) -> (Units, Units) {
        (self.offset, self.offset + self.mass.len() as Units - 1)
    }

    /// `(level, probability)` for every level with positive mass.
    pub fn iter(&self) -> impl Iterator<Item = (Units, f64)> + '_ {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(move |(k, &m)| (self.offset + k as Units, m))
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Most probable level; ties go to the larger level.
    pub fn mode(&self) -> Units {
        let mut best = (self.offset, f64::NEG_INFINITY);
        for (level, m) in self.iter() {
            if m >= best.1 {
                best = (level, m);
            }
        }
        best.0
    }
}

/// Pushes `prev` through period `t`'s loss kernel, weighting each previous
/// level by `weight(level)`. Levels that cannot cover the sales are dropped.
fn propagate_weighted(
    prev: &Belief,
    t: usize,
    trace: &ObservedTrace,
    params: &Params,
    weight: impl Fn(Units) -> f64,
) -> Result<Belief> {
    let (s, r) = trace.period(t)?;
    let feasible: Vec<(Units, f64)> = prev
        .iter()
        .filter(|&(level, _)| level >= s)
        .map(|(level, m)| (level, m * weight(level)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    let (Some(first), Some(last)) = (feasible.first(), feasible.last()) else {
        return Err(Error::BeliefCollapsed { period: t });
    };
    let lo = model::feasible_range(first.0, s, r)?.0;
    let hi = model::feasible_range(last.0, s, r)?.1;
    let mut mass = vec![0.0; (hi - lo + 1) as usize];
    for &(level, w) in &feasible {
        let (a, b) = model::feasible_range(level, s, r)?;
        for next in a..=b {
            mass[(next - lo) as usize] += w * model::transition_ln(level, s, r, next, params.lambda()).exp();
        }
    }
    Belief::normalized(t, lo, mass)
}

/// One filtering step from period `t - 1` to period `t`.
pub trait BeliefUpdate: Named + Sync + fmt::Debug {
    fn propagate(&self, prev: &Belief, t: usize, trace: &ObservedTrace, params: &Params) -> Result<Belief>;
}

#[derive(Debug)]
pub struct BayesUpdate;

#[derive(Debug)]
pub struct KernelOnlyUpdate;

impl Named for BayesUpdate {
    fn name(&self) -> &'static str {
        "bayes"
    }
}

impl Named for KernelOnlyUpdate {
    fn name(&self) -> &'static str {
        "paper"
    }
}

impl BeliefUpdate for BayesUpdate {
    fn propagate(&self, prev: &Belief, t: usize, trace: &ObservedTrace, params: &Params) -> Result<Belief> {
        propagate_bayes(prev, t, trace, params)
    }
}

impl BeliefUpdate for KernelOnlyUpdate {
    fn propagate(&self, prev: &Belief, t: usize, trace: &ObservedTrace, params: &Params) -> Result<Belief> {
        propagate_paper(prev, t, trace, params)
    }
}

pub static BELIEF_UPDATES: Registry<dyn BeliefUpdate> = Registry::new("filter", &[&BayesUpdate, &KernelOnlyUpdate]);

pub fn belief_update(name: &str) -> Result<&'static dyn BeliefUpdate> {
    BELIEF_UPDATES.get(name)
}

/// Distribution of `I_1`: the loss kernel applied to the known `I_0`.
pub fn initial_belief(trace: &ObservedTrace, params: &Params) -> Result<Belief> {
    let (s, _) = trace.period(1)?;
    if s > trace.initial_inventory() {
        return Err(Error::InfeasibleTrace {
            period: 1,
            reason: format!("sales {s} exceed initial inventory {}", trace.initial_inventory()),
        });
    }
    propagate_weighted(&Belief::point(0, trace.initial_inventory()), 1, trace, params, |_| 1.0)
}

/// Kernel-only recursion: mass on levels below the observed sales is dropped
/// and the rest renormalized; no sales-likelihood weighting.
pub fn propagate_paper(prev: &Belief, t: usize, trace: &ObservedTrace, params: &Params) -> Result<Belief> {
    propagate_weighted(prev, t, trace, params, |_| 1.0)
}

/// Exact filter step: previous levels weighted by `Pr(S_t | I_{t-1})`.
pub fn propagate_bayes(prev: &Belief, t: usize, trace: &ObservedTrace, params: &Params) -> Result<Belief> {
    let s = trace.period(t)?.0;
    propagate_weighted(prev, t, trace, params, |level| {
        model::trunc_poisson_ln(s, level, params.sigma()).exp()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSeries {
    pub beliefs: Vec<Belief>,
    pub mmle_path: Vec<Units>,
}

/// Per-period most probable level.
pub fn mmle_path(beliefs: &[Belief]) -> Vec<Units> {
    beliefs.iter().map(Belief::mode).collect()
}

/// Filters the whole trace with the given update rule.
pub fn run_filter(trace: &ObservedTrace, params: &Params, update: &dyn BeliefUpdate) -> Result<BeliefSeries> {
    let mut beliefs = Vec::with_capacity(trace.horizon());
    beliefs.push(initial_belief(trace, params)?);
    for t in 2..=trace.horizon() {
        let next = update.propagate(beliefs.last().expect("nonempty"), t, trace, params)?;
        beliefs.push(next);
    }
    let mmle_path = mmle_path(&beliefs);
    Ok(BeliefSeries { beliefs, mmle_path })
}
