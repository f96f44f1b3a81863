//! Augmented Lagrangian for inequality constraints `c(x) <= b`.
//!
//! With `k = c(x) - b`, each constraint contributes the penalty `phi(k)` to
//! the minimized loss and the multiplier is refreshed in closed form every
//! `update_period` optimizer steps, after which the penalty weight grows.

use std::io::Write;

use crate::constraints::PairwiseConstraint;
use crate::error::contract;
use crate::Result;

/// `0` if `k <= -lambda_prev / mu`, else `lambda_prev + mu k`.
pub fn multiplier_update(k: f64, lambda_prev: f64, penalty_mu: f64) -> f64 {
    if k <= -lambda_prev / penalty_mu {
        0.0
    } else {
        lambda_prev + penalty_mu * k
    }
}

/// `-lambda'^2 / (2 mu)` on the deep-feasible side, `lambda' k + mu k^2 / 2`
/// otherwise.
pub fn penalty_phi(k: f64, lambda_prev: f64, penalty_mu: f64) -> f64 {
    if k <= -lambda_prev / penalty_mu {
        -lambda_prev * lambda_prev / (2.0 * penalty_mu)
    } else {
        lambda_prev * k + 0.5 * penalty_mu * k * k
    }
}

/// `d phi / d k`, which equals [`multiplier_update`].
pub fn penalty_phi_slope(k: f64, lambda_prev: f64, penalty_mu: f64) -> f64 {
    multiplier_update(k, lambda_prev, penalty_mu)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LagrangianConfig {
    pub lambda0: f64,
    pub penalty_mu0: f64,
    pub growth: f64,
    pub update_period: usize,
}

impl Default for LagrangianConfig {
    fn default() -> Self {
        Self {
            lambda0: 0.0,
            penalty_mu0: 1.0,
            growth: 1.5,
            update_period: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianState {
    pub lambdas: Vec<f64>,
    pub penalty_mu: f64,
    /// Target `b = epsilon` per constraint; may be infinite.
    pub slack: Vec<f64>,
    pub growth: f64,
    pub update_period: usize,
}

impl LagrangianState {
    pub fn new(slack: Vec<f64>, cfg: &LagrangianConfig) -> Result<Self> {
        if slack.is_empty() {
            return Err(contract("at least one constraint required"));
        }
        if slack.iter().any(|e| !(*e >= 0.0)) {
            return Err(contract("slack values must be >= 0"));
        }
        if !(cfg.lambda0 >= 0.0) || !(cfg.penalty_mu0 > 0.0) || !(cfg.growth >= 1.0) {
            return Err(contract("need lambda0 >= 0, penalty_mu0 > 0, growth >= 1"));
        }
        if cfg.update_period == 0 {
            return Err(contract("update period must be at least 1"));
        }
        Ok(Self {
            lambdas: vec![cfg.lambda0; slack.len()],
            penalty_mu: cfg.penalty_mu0,
            slack,
            growth: cfg.growth,
            update_period: cfg.update_period,
        })
    }

    fn check(&self, violations: &[f64]) -> Result<()> {
        if violations.len() != self.lambdas.len() {
            return Err(contract(format!(
                "{} constraint values for {} multipliers",
                violations.len(),
                self.lambdas.len()
            )));
        }
        Ok(())
    }

    /// Sum of penalties and, per constraint, the loss slope with respect to
    /// the constraint value.
    pub fn penalty_and_slopes(&self, values: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(values)?;
        let mut total = 0.0;
        let mut slopes = Vec::with_capacity(values.len());
        for ((&c, &b), &l) in values.iter().zip(&self.slack).zip(&self.lambdas) {
            let k = c - b;
            total += penalty_phi(k, l, self.penalty_mu);
            slopes.push(penalty_phi_slope(k, l, self.penalty_mu));
        }
        Ok((total, slopes))
    }
}

/// `-utility + sum_pairs phi(value - slack, lambda, mu)`.
pub fn augmented_objective(
    utility: f64,
    violations: &PairwiseConstraint,
    state: &LagrangianState,
) -> Result<f64> {
    Ok(-utility + state.penalty_and_slopes(&violations.values())?.0)
}

/// Refreshes every multiplier from the current constraint values, then
/// grows the penalty weight.
pub fn schedule_step(state: &mut LagrangianState, values: &[f64]) -> Result<()> {
    state.check(values)?;
    for ((l, &c), &b) in state.lambdas.iter_mut().zip(values).zip(&state.slack) {
        *l = multiplier_update(c - b, *l, state.penalty_mu);
    }
    state.penalty_mu *= state.growth;
    Ok(())
}

/// One line of the per-run metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub lambda: f64,
    pub penalty_mu: f64,
    /// Constraint value minus slack.
    pub violation: f64,
}

/// CSV with header `step,lambda,penalty_mu,violation`.
pub fn write_metrics<W: Write>(rows: &[MetricsRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["step", "lambda", "penalty_mu", "violation"])?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.lambda.to_string(),
            r.penalty_mu.to_string(),
            r.violation.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
