//! Simulation of a store whose bookkeeping ignores shrinkage.
//!
//! The physical inventory loses at most one unit per period at random; the
//! recorded inventory only subtracts sales and adds deliveries, and drives a
//! (Q, R) reorder rule. Once physical stock hits zero while the record still
//! sits above the reorder point, nothing sells and nothing is ordered: the
//! system freezes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ObservedTrace, Units, MAX_LEVEL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub initial_inventory: Units,
    pub sigma_true: f64,
    pub lambda_true: f64,
    pub horizon: usize,
    pub order_qty: Units,
    pub reorder_point: Units,
    pub seed: u64,
}

impl SimConfig {
    /// Start at 15 units, order 20 at or below 10, sell at rate 5, lose a
    /// unit with probability 1/4, run 60 periods.
    pub fn baseline(seed: u64) -> Self {
        Self {
            initial_inventory: 15,
            sigma_true: 5.0,
            lambda_true: 0.25,
            horizon: 60,
            order_qty: 20,
            reorder_point: 10,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        model::check_sigma(self.sigma_true)?;
        model::check_lambda(self.lambda_true)?;
        if self.horizon < 2 {
            return Err(Error::InvalidConfig(format!("horizon must be at least 2, got {}", self.horizon)));
        }
        if self.order_qty == 0 {
            return Err(Error::InvalidConfig("order quantity must be at least 1".into()));
        }
        let worst = self.initial_inventory as u128 + self.order_qty as u128 * self.horizon as u128;
        if worst > MAX_LEVEL as u128 {
            return Err(Error::InvalidConfig(format!("inventory could exceed cap {MAX_LEVEL}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub initial_inventory: Units,
    pub reorder_point: Units,
    pub sales: Vec<Units>,
    pub losses: Vec<Units>,
    pub replenishments: Vec<Units>,
    pub true_inventory: Vec<Units>,
    pub recorded_inventory: Vec<Units>,
    pub froze: bool,
    /// 1-based first frozen period.
    pub freeze_period: Option<usize>,
}

impl SimOutcome {
    /// The part of the outcome a store manager would actually see.
    pub fn observed_trace(&self) -> ObservedTrace {
        ObservedTrace::new(self.initial_inventory, self.sales.clone(), self.replenishments.clone())
            .expect("simulated histories have matching nonzero length")
    }

    pub fn horizon(&self) -> usize {
        self.sales.len()
    }
}

/// Rates above this are split into independent chunks so the inversion's
/// starting probability `e^-sigma` stays representable.
const MAX_INVERSION_RATE: f64 = 500.0;

/// Poisson variate from one uniform `u` in `[0, 1)` by sequential search:
/// the smallest `k` with `P(X <= k) > u`.
pub fn poisson_from_uniform(u: f64, sigma: f64) -> Units {
    let mut k: Units = 0;
    let mut p = (-sigma).exp();
    let mut cdf = p;
    while u >= cdf {
        k += 1;
        p *= sigma / k as f64;
        cdf += p;
        // rounding can leave the cdf just short of u far in the tail
        if p == 0.0 && k as f64 > sigma {
            break;
        }
    }
    k
}

/// Exact Poisson sample by inversion. Large rates are drawn as a sum of
/// independent chunks, each from its own uniform.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Units {
    if sigma <= MAX_INVERSION_RATE {
        return poisson_from_uniform(rng.random::<f64>(), sigma);
    }
    let chunks = (sigma / MAX_INVERSION_RATE).ceil();
    let part = sigma / chunks;
    (0..chunks as usize).map(|_| poisson_from_uniform(rng.random::<f64>(), part)).sum()
}

/// Bernoulli sample by inversion of one uniform.
pub fn sample_bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// First period where physical stock is zero but the record still sits above
/// the reorder point.
pub fn detect_freeze(true_inventory: &[Units], recorded_inventory: &[Units], reorder_point: Units) -> Option<usize> {
    true_inventory
        .iter()
        .zip(recorded_inventory)
        .position(|(&actual, &recorded)| actual == 0 && recorded > reorder_point)
        .map(|k| k + 1)
}

pub fn simulate(config: &SimConfig) -> Result<SimOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.horizon;
    let mut out = SimOutcome {
        initial_inventory: config.initial_inventory,
        reorder_point: config.reorder_point,
        sales: Vec::with_capacity(n),
        losses: Vec::with_capacity(n),
        replenishments: Vec::with_capacity(n),
        true_inventory: Vec::with_capacity(n),
        recorded_inventory: Vec::with_capacity(n),
        froze: false,
        freeze_period: None,
    };
    let mut actual = config.initial_inventory;
    let mut recorded = config.initial_inventory;
    for _ in 0..n {
        // both variates are drawn every period so the stream layout is fixed
        let demand = sample_poisson(&mut rng, config.sigma_true);
        let lost = sample_bernoulli(&mut rng, config.lambda_true) as Units;

        let sold = demand.min(actual);
        let loss = lost.min(actual - sold);
        let posted = recorded - sold;
        let delivered = if posted <= config.reorder_point { config.order_qty } else { 0 };
        actual = actual - sold - loss + delivered;
        recorded = posted + delivered;

        out.sales.push(sold);
        out.losses.push(loss);
        out.replenishments.push(delivered);
        out.true_inventory.push(actual);
        out.recorded_inventory.push(recorded);
    }
    out.freeze_period = detect_freeze(&out.true_inventory, &out.recorded_inventory, config.reorder_point);
    out.froze = out.freeze_period.is_some();
    if let Some(start) = out.freeze_period {
        let frozen_level = out.recorded_inventory[start - 1];
        debug_assert!(out.true_inventory[start - 1..].iter().all(|&x| x == 0));
        debug_assert!(out.recorded_inventory[start - 1..].iter().all(|&x| x == frozen_level));
        debug_assert!(out.sales[start..].iter().all(|&x| x == 0));
    }
    Ok(out)
}
