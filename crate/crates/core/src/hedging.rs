//! Progressive Hedging for the stochastic transfer problem.
//!
//! Each scenario gets its own copy `y(ξ)` of the activity plan. The copies
//! are pulled together by multipliers `w(ξ)` and a proximal term around the
//! belief-weighted mean `ȳ` until they agree, at which point `ȳ` is a
//! non-anticipative plan.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Agent, PriceSystem};
use crate::numerics::solve_separable_qp;
use crate::scalar::{self, Scalar};
use crate::transfer::{reward_coefficients, transfer_constraints};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhConfig<T> {
    pub rho: T,
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for PhConfig<T> {
    fn default() -> Self {
        Self {
            rho: T::one(),
            tol: T::lit(1e-6),
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PHState<T> {
    pub nu: usize,
    pub y_by_scenario: Vec<Vec<T>>,
    pub y_bar: Vec<T>,
    pub w: Vec<Vec<T>>,
    pub rho: T,
    pub residual: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhOutcome<T> {
    /// The non-anticipative plan `ȳ` at termination.
    pub y: Vec<T>,
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
    /// Every iterate, when requested.
    pub history: Vec<PHState<T>>,
}

impl<T: Scalar> PhOutcome<T> {
    /// Turns a non-converged run into `HedgingMaxIter`.
    pub fn into_result(self, agent: usize) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::HedgingMaxIter {
                agent,
                iterations: self.iterations,
                residual: self.residual.as_f64(),
            })
        }
    }
}

/// Linear coefficient of the scenario subproblem
/// `max ⟨c̄, y⟩ − (ρ/2)|y|²`: `c̄ = reward − w + ρȳ`.
pub fn ph_scenario_coefficients<T: Scalar>(reward_linear: &[T], w: &[T], y_bar: &[T], rho: T) -> Vec<T> {
    reward_linear
        .iter()
        .zip(w.iter().zip(y_bar))
        .map(|(&c, (&wj, &yb))| c - wj + rho * yb)
        .collect()
}

/// Runs PH for one agent at prices `p`. `record` keeps every iterate in the
/// outcome's history.
pub fn ph_solve<T: Scalar>(agent: &Agent<T>, p: &PriceSystem<T>, cfg: &PhConfig<T>, record: bool) -> Result<PhOutcome<T>> {
    if !(cfg.rho > T::zero()) {
        return Err(Error::InvalidConfig("hedging rho must be positive".into()));
    }
    let n_scen = agent.e1.len();
    let linear: Vec<Vec<T>> = (0..n_scen)
        .map(|s| reward_coefficients(agent, s, &p.p0, &p.p1[s]).map(|c| c.linear))
        .collect::<Result<_>>()?;
    ph_solve_linear(agent, &p.p0, &linear, cfg, record)
}

/// PH on explicit per-scenario reward coefficients.
pub fn ph_solve_linear<T: Scalar>(
    agent: &Agent<T>,
    p0: &[T],
    linear: &[Vec<T>],
    cfg: &PhConfig<T>,
    record: bool,
) -> Result<PhOutcome<T>> {
    let m = agent.n_activities();
    let pi = &agent.beliefs;
    let (a, b) = transfer_constraints(agent, p0);
    let mut w = vec![vec![T::zero(); m]; linear.len()];
    let mut y_bar = vec![T::zero(); m];
    let mut history = Vec::new();
    let mut residual = T::infinity();
    for nu in 1..=cfg.max_iter {
        let ys: Vec<Vec<T>> = linear
            .iter()
            .zip(&w)
            .map(|(lin, ws)| solve_separable_qp(&ph_scenario_coefficients(lin, ws, &y_bar, cfg.rho), cfg.rho, &a, &b))
            .collect::<Result<_>>()?;
        // Mean as an offset from the first copy, exact when all copies agree.
        let mut mean = ys[0].clone();
        for (y, &prob) in ys.iter().zip(pi).skip(1) {
            for ((acc, &v), &base) in mean.iter_mut().zip(y).zip(&ys[0]) {
                *acc = *acc + prob * (v - base);
            }
        }
        y_bar = mean;
        residual = T::zero();
        for (y, ws) in ys.iter().zip(w.iter_mut()) {
            for ((wj, &v), &yb) in ws.iter_mut().zip(y).zip(&y_bar) {
                residual = residual.max((v - yb).abs());
                *wj = *wj + cfg.rho * (v - yb);
            }
        }
        if record {
            history.push(PHState {
                nu,
                y_by_scenario: ys,
                y_bar: y_bar.clone(),
                w: w.clone(),
                rho: cfg.rho,
                residual,
            });
        }
        if residual <= cfg.tol {
            return Ok(PhOutcome { y: y_bar, residual, iterations: nu, converged: true, history });
        }
    }
    Ok(PhOutcome {
        y: y_bar,
        residual,
        iterations: cfg.max_iter,
        converged: false,
        history,
    })
}

/// `Σ_ξ π_ξ w_ξ` as a vector.
pub fn weighted_multiplier_sum<T: Scalar>(state: &PHState<T>, beliefs: &[T]) -> Vec<T> {
    let m = state.y_bar.len();
    (0..m)
        .map(|j| scalar::sum(&state.w.iter().zip(beliefs).map(|(w, &p)| p * w[j]).collect::<Vec<_>>()))
        .collect()
}
