//! M-step: for a fixed trajectory the joint log-likelihood splits into a
//! sales part depending only on `sigma` and a loss part depending only on
//! `lambda`, so each parameter is fitted by its own 1-D maximization.
//!
//! Two strategies are registered:
//!
//! * `robust` (default): log-spaced grid scan plus golden-section refinement
//!   for `sigma`, closed form for `lambda`.
//! * `gradient20`: twenty backtracking gradient-ascent steps for each
//!   parameter, started from the incoming estimate.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{self, LogLik, ObservedTrace, Trajectory, Units};
use crate::registry::{Named, Registry};

/// Sales part of the log-likelihood as a function of `sigma`, reduced to the
/// `(S_t, I_{t-1})` pairs of a fixed trajectory.
#[derive(Debug, Clone)]
pub struct SalesObjective {
    terms: Vec<(Units, Units)>,
}

impl SalesObjective {
    pub fn new(trajectory: &Trajectory, trace: &ObservedTrace) -> Result<Self> {
        if trajectory.len() != trace.horizon() {
            return Err(Error::LengthMismatch {
                expected: trace.horizon(),
                got: trajectory.len(),
            });
        }
        let terms: Vec<_> = trace.sales().iter().copied().zip(trajectory.previous_levels(trace)).collect();
        if let Some(t) = terms.iter().position(|&(s, prev)| s > prev) {
            return Err(Error::InfeasibleTrace {
                period: t + 1,
                reason: format!("trajectory level {} cannot cover sales {}", terms[t].1, terms[t].0),
            });
        }
        Ok(Self { terms })
    }

    pub fn value(&self, sigma: f64) -> LogLik {
        self.terms
            .iter()
            .map(|&(s, prev)| model::trunc_poisson_ln(s, prev, sigma))
            .sum()
    }

    /// Analytic derivative: `-1 + S/sigma` for uncensored periods and the
    /// pmf-to-tail ratio `p(I-1)/P(X >= I)` for periods that sold out.
    pub fn gradient(&self, sigma: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(s, prev)| {
                if prev == 0 {
                    0.0
                } else if s < prev {
                    -1.0 + s as f64 / sigma
                } else {
                    (model::poisson_logpmf(prev - 1, sigma) - model::poisson_log_upper_tail(prev, sigma)).exp()
                }
            })
            .sum()
    }

    /// True when every period starts from empty stock, so the objective does
    /// not depend on `sigma` at all.
    pub fn is_degenerate(&self) -> bool {
        self.terms.iter().all(|&(_, prev)| prev == 0)
    }

    pub fn max_sales(&self) -> Units {
        self.terms.iter().map(|&(s, _)| s).max().unwrap_or(0)
    }
}

/// Loss and no-loss counts over the periods that had stock left after sales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LossCounts {
    pub losses: u64,
    pub no_losses: u64,
}

impl LossCounts {
    pub fn new(trajectory: &Trajectory, trace: &ObservedTrace) -> Result<Self> {
        let implied = trajectory.implied_losses(trace)?;
        let mut counts = LossCounts::default();
        for (t, (prev, loss)) in trajectory.previous_levels(trace).zip(implied).enumerate() {
            let s = trace.sales()[t];
            if s > prev || !(0..=1).contains(&loss) || (loss == 1 && prev == s) {
                return Err(Error::InfeasibleTrace {
                    period: t + 1,
                    reason: format!("implied loss {loss} is not possible"),
                });
            }
            if prev > s {
                if loss == 1 {
                    counts.losses += 1;
                } else {
                    counts.no_losses += 1;
                }
            }
        }
        Ok(counts)
    }

    pub fn total(&self) -> u64 {
        self.losses + self.no_losses
    }

    /// `n1 ln(lambda) + n0 ln(1 - lambda)`, with `0 ln 0 = 0`.
    pub fn value(&self, lambda: f64) -> LogLik {
        let part = |n: u64, p: f64| if n == 0 { 0.0 } else { n as f64 * p.ln() };
        part(self.losses, lambda) + part(self.no_losses, 1.0 - lambda)
    }

    pub fn gradient(&self, lambda: f64) -> f64 {
        self.losses as f64 / lambda - self.no_losses as f64 / (1.0 - lambda)
    }

    /// Unclamped maximizer `n1 / (n0 + n1)`; `None` when no period had headroom.
    pub fn mle(&self) -> Option<f64> {
        (self.total() > 0).then(|| self.losses as f64 / self.total() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateStatus {
    Interior,
    /// The maximizer sits on an end of the search interval.
    Boundary,
    /// The objective is flat; the incoming value was returned unchanged.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub status: EstimateStatus,
}

impl Estimate {
    pub fn at_boundary(&self) -> bool {
        self.status == EstimateStatus::Boundary
    }
}

/// A 1-D maximization scheme for the two separable M-step problems.
pub trait MStepStrategy: Named + Sync + fmt::Debug {
    fn maximize_sigma(&self, objective: &SalesObjective, sigma_in: f64, options: &MStepOptions) -> Estimate;
    fn maximize_lambda(&self, counts: LossCounts, lambda_in: f64, options: &MStepOptions) -> Estimate;
}

pub static MSTEP_STRATEGIES: Registry<dyn MStepStrategy> =
    Registry::new("m-step", &[&RobustMStep, &GradientAscentMStep]);

pub fn mstep_strategy(name: &str) -> Result<&'static dyn MStepStrategy> {
    MSTEP_STRATEGIES.get(name)
}

#[derive(Debug, Clone, Copy)]
pub struct MStepOptions {
    pub strategy: &'static dyn MStepStrategy,
    /// Search interval for `sigma`; `None` picks `[1e-6, 2 (max S + 1)]`.
    pub sigma_bracket: Option<(f64, f64)>,
    /// Width below which golden-section refinement stops.
    pub tolerance: f64,
    /// `lambda` is kept inside `[clamp, 1 - clamp]`.
    pub lambda_clamp: f64,
}

impl Default for MStepOptions {
    fn default() -> Self {
        Self {
            strategy: MSTEP_STRATEGIES.default_entry(),
            sigma_bracket: None,
            tolerance: 1e-3,
            lambda_clamp: 1e-6,
        }
    }
}

pub const SIGMA_BRACKET_FLOOR: f64 = 1e-6;

impl MStepOptions {
    pub fn with_strategy(name: &str) -> Result<Self> {
        Ok(Self {
            strategy: mstep_strategy(name)?,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((lo, hi)) = self.sigma_bracket {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::InvalidConfig(format!("bad sigma bracket ({lo}, {hi})")));
            }
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidConfig("m-step tolerance must be positive".into()));
        }
        if !(self.lambda_clamp > 0.0 && self.lambda_clamp < 0.5) {
            return Err(Error::InvalidConfig("lambda clamp must lie in (0, 0.5)".into()));
        }
        Ok(())
    }

    pub fn bracket_for(&self, objective: &SalesObjective) -> (f64, f64) {
        self.sigma_bracket
            .unwrap_or_else(|| (SIGMA_BRACKET_FLOOR, 2.0 * (objective.max_sales() as f64 + 1.0)))
    }
}

const GRID_POINTS: usize = 64;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tolerance: f64) -> f64 {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a >= tolerance {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn status_in(value: f64, lo: f64, hi: f64) -> EstimateStatus {
    if value <= lo || value >= hi {
        EstimateStatus::Boundary
    } else {
        EstimateStatus::Interior
    }
}

/// Grid scan plus golden section for `sigma`, closed form for `lambda`.
#[derive(Debug)]
pub struct RobustMStep;

impl Named for RobustMStep {
    fn name(&self) -> &'static str {
        "robust"
    }
}

impl MStepStrategy for RobustMStep {
    fn maximize_sigma(&self, objective: &SalesObjective, sigma_in: f64, options: &MStepOptions) -> Estimate {
        if objective.is_degenerate() {
            return Estimate {
                value: sigma_in,
                status: EstimateStatus::Degenerate,
            };
        }
        let (lo, hi) = options.bracket_for(objective);
        let ratio = (hi / lo).ln() / (GRID_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..GRID_POINTS)
            .map(|k| match k {
                0 => lo,
                k if k == GRID_POINTS - 1 => hi,
                k => lo * (ratio * k as f64).exp(),
            })
            .collect();
        let mut best_k = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (k, &x) in grid.iter().enumerate() {
            let v = objective.value(x);
            if v > best_v {
                best_k = k;
                best_v = v;
            }
        }
        let a = grid[best_k.saturating_sub(1)];
        let b = grid[(best_k + 1).min(GRID_POINTS - 1)];
        let refined = golden_section_max(|x| objective.value(x), a, b, options.tolerance);

        let mut best = (grid[best_k], best_v);
        let refined_v = objective.value(refined);
        if refined_v > best.1 {
            best = (refined, refined_v);
        }
        if (lo..=hi).contains(&sigma_in) && objective.value(sigma_in) > best.1 {
            best = (sigma_in, objective.value(sigma_in));
        }
        Estimate {
            value: best.0,
            status: status_in(best.0, lo, hi),
        }
    }

    fn maximize_lambda(&self, counts: LossCounts, lambda_in: f64, options: &MStepOptions) -> Estimate {
        let Some(mle) = counts.mle() else {
            return Estimate {
                value: lambda_in,
                status: EstimateStatus::Degenerate,
            };
        };
        let (lo, hi) = (options.lambda_clamp, 1.0 - options.lambda_clamp);
        let value = mle.clamp(lo, hi);
        Estimate {
            value,
            status: status_in(value, lo, hi),
        }
    }
}

/// Fixed-count backtracking gradient ascent on each parameter.
#[derive(Debug)]
pub struct GradientAscentMStep;

pub const GRADIENT_ITERATIONS: usize = 20;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

fn gradient_ascent(f: impl Fn(f64) -> f64, grad: impl Fn(f64) -> f64, start: f64, lo: f64, hi: f64) -> f64 {
    let mut x = start.clamp(lo, hi);
    let mut fx = f(x);
    for _ in 0..GRADIENT_ITERATIONS {
        let g = grad(x);
        if g == 0.0 || !g.is_finite() {
            break;
        }
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..MAX_HALVINGS {
            let candidate = (x + step * g).clamp(lo, hi);
            if candidate == x {
                break;
            }
            let fc = f(candidate);
            if fc >= fx + ARMIJO * g * (candidate - x) {
                x = candidate;
                fx = fc;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    x
}

impl Named for GradientAscentMStep {
    fn name(&self) -> &'static str {
        "gradient20"
    }
}

impl MStepStrategy for GradientAscentMStep {
    fn maximize_sigma(&self, objective: &SalesObjective, sigma_in: f64, options: &MStepOptions) -> Estimate {
        if objective.is_degenerate() {
            return Estimate {
                value: sigma_in,
                status: EstimateStatus::Degenerate,
            };
        }
        let (lo, hi) = options.bracket_for(objective);
        let value = gradient_ascent(|x| objective.value(x), |x| objective.gradient(x), sigma_in, lo, hi);
        Estimate {
            value,
            status: status_in(value, lo, hi),
        }
    }

    fn maximize_lambda(&self, counts: LossCounts, lambda_in: f64, options: &MStepOptions) -> Estimate {
        if counts.total() == 0 {
            return Estimate {
                value: lambda_in,
                status: EstimateStatus::Degenerate,
            };
        }
        let (lo, hi) = (options.lambda_clamp, 1.0 - options.lambda_clamp);
        let value = gradient_ascent(|x| counts.value(x), |x| counts.gradient(x), lambda_in, lo, hi);
        Estimate {
            value,
            status: status_in(value, lo, hi),
        }
    }
}

/// Sales part of the joint log-likelihood at `sigma`.
pub fn sales_loglik(sigma: f64, trajectory: &Trajectory, trace: &ObservedTrace) -> Result<LogLik> {
    model::check_sigma(sigma)?;
    Ok(SalesObjective::new(trajectory, trace)?.value(sigma))
}

/// Loss part of the joint log-likelihood at `lambda`.
pub fn loss_loglik(lambda: f64, trajectory: &Trajectory, trace: &ObservedTrace) -> Result<LogLik> {
    model::check_lambda(lambda)?;
    Ok(LossCounts::new(trajectory, trace)?.value(lambda))
}

pub fn sigma_gradient(sigma: f64, trajectory: &Trajectory, trace: &ObservedTrace) -> Result<f64> {
    model::check_sigma(sigma)?;
    Ok(SalesObjective::new(trajectory, trace)?.gradient(sigma))
}

pub fn maximize_sigma(
    trajectory: &Trajectory,
    trace: &ObservedTrace,
    sigma_in: f64,
    options: &MStepOptions,
) -> Result<Estimate> {
    options.validate()?;
    let objective = SalesObjective::new(trajectory, trace)?;
    Ok(options.strategy.maximize_sigma(&objective, sigma_in, options))
}

pub fn maximize_lambda(
    trajectory: &Trajectory,
    trace: &ObservedTrace,
    lambda_in: f64,
    options: &MStepOptions,
) -> Result<Estimate> {
    options.validate()?;
    let counts = LossCounts::new(trajectory, trace)?;
    Ok(options.strategy.maximize_lambda(counts, lambda_in, options))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::poisson_logpmf;
    use approx::assert_abs_diff_eq;

    fn trace(i0: Units, s: &[Units], r: &[Units]) -> ObservedTrace {
        ObservedTrace::new(i0, s.to_vec(), r.to_vec()).unwrap()
    }

    fn uncensored() -> (ObservedTrace, Trajectory) {
        let tr = trace(100, &[4, 6, 5], &[0, 0, 0]);
        (tr, Trajectory::new(vec![96, 90, 85]))
    }

    fn gradient_options() -> MStepOptions {
        MStepOptions::with_strategy("gradient20").unwrap()
    }

    #[test]
    fn sales_loglik_uncensored_is_plain_poisson() {
        let (tr, traj) = uncensored();
        let expected: f64 = [4u64, 6, 5].iter().map(|&s| poisson_logpmf(s, 5.0)).sum();
        let by_hand: f64 = [4.0f64, 6.0, 5.0]
            .iter()
            .map(|&s: &f64| -5.0 + s * 5f64.ln() - (1..=s as u64).map(|k| (k as f64).ln()).sum::<f64>())
            .sum();
        assert_abs_diff_eq!(sales_loglik(5.0, &traj, &tr).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, by_hand, epsilon = 1e-12);
        assert!(sales_loglik(0.0, &traj, &tr).is_err());
    }

    #[test]
    fn sales_loglik_censored_tail_increases() {
        let tr = trace(2, &[2], &[0]);
        let traj = Trajectory::new(vec![0]);
        let mut last = f64::NEG_INFINITY;
        for k in 1..100 {
            let v = sales_loglik(k as f64 * 0.2, &traj, &tr).unwrap();
            assert!(v > last);
            last = v;
        }
        let empty = trace(0, &[0, 0], &[0, 0]);
        let flat = Trajectory::new(vec![0, 0]);
        assert_eq!(sales_loglik(3.0, &flat, &empty).unwrap(), 0.0);
        assert_eq!(sales_loglik(30.0, &flat, &empty).unwrap(), 0.0);
    }

    #[test]
    fn loss_loglik_counting() {
        // 12 periods with headroom: 3 losses, 9 without.
        let sales = vec![1; 12];
        let tr = trace(40, &sales, &[0; 12]);
        let mut levels = Vec::new();
        let mut level = 40;
        for t in 0..12 {
            level -= 1;
            if t % 4 == 0 {
                level -= 1;
            }
            levels.push(level);
        }
        let traj = Trajectory::new(levels);
        let counts = LossCounts::new(&traj, &tr).unwrap();
        assert_eq!(counts, LossCounts { losses: 3, no_losses: 9 });
        let v = loss_loglik(0.25, &traj, &tr).unwrap();
        assert_abs_diff_eq!(v, 3.0 * 0.25f64.ln() + 9.0 * 0.75f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, -6.748_021_735_425_7, epsilon = 1e-12);
        assert_eq!(loss_loglik(0.0, &traj, &tr).unwrap(), f64::NEG_INFINITY);
        assert!(loss_loglik(1.2, &traj, &tr).is_err());

        let forced = trace(3, &[1, 2], &[0, 4]);
        let traj = Trajectory::new(vec![2, 4]);
        assert_eq!(LossCounts::new(&traj, &forced).unwrap().total(), 1);
        let all_forced = trace(3, &[3, 4], &[4, 0]);
        let traj = Trajectory::new(vec![4, 0]);
        for lambda in [0.0, 0.3, 1.0] {
            assert_eq!(loss_loglik(lambda, &traj, &all_forced).unwrap(), 0.0);
        }
    }

    #[test]
    fn sigma_gradient_examples() {
        let (tr, traj) = uncensored();
        assert_abs_diff_eq!(sigma_gradient(5.0, &traj, &tr).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sigma_gradient(3.0, &traj, &tr).unwrap(), 2.0, epsilon = 1e-12);
        assert!(sigma_gradient(-1.0, &traj, &tr).is_err());
    }

    #[test]
    fn robust_sigma_uncensored_at_sample_mean() {
        let (tr, traj) = uncensored();
        let est = maximize_sigma(&traj, &tr, 1.0, &MStepOptions::default()).unwrap();
        assert_abs_diff_eq!(est.value, 5.0, epsilon = 1e-3);
        assert_eq!(est.status, EstimateStatus::Interior);
    }

    #[test]
    fn robust_sigma_fully_censored_hits_upper_bracket() {
        let tr = trace(2, &[2], &[0]);
        let traj = Trajectory::new(vec![0]);
        let opts = MStepOptions::default();
        let est = maximize_sigma(&traj, &tr, 1.0, &opts).unwrap();
        assert_eq!(est.value, 6.0);
        assert!(est.at_boundary());
    }

    #[test]
    fn degenerate_objective_returns_incoming() {
        let tr = trace(0, &[0, 0], &[0, 0]);
        let traj = Trajectory::new(vec![0, 0]);
        for opts in [MStepOptions::default(), gradient_options()] {
            let est = maximize_sigma(&traj, &tr, 2.5, &opts).unwrap();
            assert_eq!(est, Estimate { value: 2.5, status: EstimateStatus::Degenerate });
            let est = maximize_lambda(&traj, &tr, 0.4, &opts).unwrap();
            assert_eq!(est, Estimate { value: 0.4, status: EstimateStatus::Degenerate });
        }
    }

    #[test]
    fn lambda_closed_form_and_clamp() {
        let opts = MStepOptions::default();
        let robust = opts.strategy;
        let est = robust.maximize_lambda(LossCounts { losses: 3, no_losses: 9 }, 0.5, &opts);
        assert_eq!(est.value, 0.25);
        let est = robust.maximize_lambda(LossCounts { losses: 0, no_losses: 12 }, 0.5, &opts);
        assert_eq!(est.value, 1e-6);
        assert!(est.at_boundary());
        let est = robust.maximize_lambda(LossCounts { losses: 5, no_losses: 0 }, 0.5, &opts);
        assert_eq!(est.value, 1.0 - 1e-6);
        assert!(est.at_boundary());
    }

    #[test]
    fn gradient_mode_reaches_closed_form() {
        let opts = gradient_options();
        for (n1, n0) in [(3, 9), (1, 59), (15, 45), (40, 20)] {
            let counts = LossCounts { losses: n1, no_losses: n0 };
            let est = opts.strategy.maximize_lambda(counts, 0.5, &opts);
            assert_abs_diff_eq!(est.value, counts.mle().unwrap(), epsilon = 1e-3);
        }
        let (tr, traj) = uncensored();
        let est = maximize_sigma(&traj, &tr, 3.72, &opts).unwrap();
        assert_abs_diff_eq!(est.value, 5.0, epsilon = 1e-3);
    }

    #[test]
    fn strategies_never_descend() {
        // mixes uncensored, sold-out and empty-stock periods
        let traj = Trajectory::new(vec![6, 2, 0, 0, 0, 0]);
        let tr = trace(9, &[3, 3, 2, 0, 0, 0], &[0, 0, 0, 0, 0, 0]);
        traj.check_feasible(&tr).unwrap();
        let objective = SalesObjective::new(&traj, &tr).unwrap();
        let counts = LossCounts::new(&traj, &tr).unwrap();
        for strategy in MSTEP_STRATEGIES.iter() {
            let opts = MStepOptions { strategy, ..MStepOptions::default() };
            for start in [0.05, 0.5, 1.0, 2.0, 4.0, 7.5] {
                let est = strategy.maximize_sigma(&objective, start, &opts);
                assert!(objective.value(est.value) >= objective.value(start) - 1e-12, "{}", strategy.name());
            }
            for start in [0.01, 0.2, 0.5, 0.9] {
                let est = strategy.maximize_lambda(counts, start, &opts);
                assert!(counts.value(est.value) >= counts.value(start) - 1e-12, "{}", strategy.name());
            }
        }
    }

    #[test]
    fn options_validation() {
        let mut opts = MStepOptions {
            sigma_bracket: Some((2.0, 1.0)),
            ..MStepOptions::default()
        };
        assert!(opts.validate().is_err());
        opts.sigma_bracket = None;
        opts.lambda_clamp = 0.7;
        assert!(opts.validate().is_err());
        assert!(MStepOptions::with_strategy("newton").is_err());
    }
}
