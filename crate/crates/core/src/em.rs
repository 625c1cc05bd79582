//! Hard-EM driver.
//!
//! Each iteration replaces the hidden inventory by its single most likely
//! history under the current parameters (E-step) and then refits both
//! parameters to that history (M-step). This is Viterbi-style EM: it climbs
//! the joint likelihood of parameters and trajectory, and stops at a local
//! maximum; it does not average over trajectories the way classical EM does.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estep;
use crate::model::{self, LogLik, ObservedTrace, Params, Trajectory};
use crate::mstep::{LossCounts, MStepOptions, SalesObjective};

/// Smallest automatic starting sale rate, used when no sales were observed.
pub const SIGMA0_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub struct EMOptions {
    /// Starting sale rate; `None` uses the mean observed sales.
    pub sigma0: Option<f64>,
    pub lambda0: f64,
    pub tol_sigma: f64,
    pub tol_lambda: f64,
    pub max_iters: usize,
    pub mstep: MStepOptions,
}

impl Default for EMOptions {
    fn default() -> Self {
        Self {
            sigma0: None,
            lambda0: 0.5,
            tol_sigma: 0.01,
            tol_lambda: 0.01,
            max_iters: 100,
            mstep: MStepOptions::default(),
        }
    }
}

impl EMOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(sigma0) = self.sigma0 {
            model::check_sigma(sigma0)?;
        }
        model::check_lambda(self.lambda0)?;
        if !(self.tol_sigma > 0.0 && self.tol_lambda > 0.0) {
            return Err(Error::InvalidConfig("EM tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        self.mstep.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EMResult {
    pub initial: Params,
    pub sigma_star: f64,
    pub lambda_star: f64,
    /// E-step trajectory of the last iteration.
    pub trajectory: Trajectory,
    pub iterations: usize,
    /// Joint log-likelihood after each E-step and each M-step, interleaved.
    pub loglik_history: Vec<LogLik>,
    pub converged: bool,
}

impl EMResult {
    pub fn params(&self) -> Params {
        Params::new(self.sigma_star, self.lambda_star).expect("EM keeps parameters in range")
    }
}

/// Mean sales over all periods (floored at [`SIGMA0_FLOOR`]) and `lambda = 1/2`.
pub fn default_init(trace: &ObservedTrace) -> Params {
    let mean = trace.sales().iter().sum::<u64>() as f64 / trace.horizon() as f64;
    Params::new(mean.max(SIGMA0_FLOOR), 0.5).expect("floored mean is a valid rate")
}

pub fn run_em(trace: &ObservedTrace, options: &EMOptions) -> Result<EMResult> {
    model::validate_trace(trace)?;
    options.validate()?;
    let initial = Params::new(
        options.sigma0.unwrap_or_else(|| default_init(trace).sigma()),
        options.lambda0,
    )?;
    let strategy = options.mstep.strategy;

    let mut params = initial;
    let mut history = Vec::with_capacity(2 * options.max_iters.min(64));
    let mut trajectory = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iters {
        iterations += 1;
        let (traj, e_score) = estep::estimate_trajectory(trace, &params)?;
        history.push(e_score);

        let sigma = strategy.maximize_sigma(&SalesObjective::new(&traj, trace)?, params.sigma(), &options.mstep);
        let lambda = strategy.maximize_lambda(LossCounts::new(&traj, trace)?, params.lambda(), &options.mstep);
        let next = Params::new(sigma.value, lambda.value)?;
        history.push(model::trajectory_loglik(&traj, trace, &next)?);
        trajectory = Some(traj);

        let settled = (next.sigma() - params.sigma()).abs() < options.tol_sigma
            && (next.lambda() - params.lambda()).abs() < options.tol_lambda;
        params = next;
        if settled {
            converged = true;
            break;
        }
    }

    Ok(EMResult {
        initial,
        sigma_star: params.sigma(),
        lambda_star: params.lambda(),
        trajectory: trajectory.expect("at least one iteration ran"),
        iterations,
        loglik_history: history,
        converged,
    })
}
