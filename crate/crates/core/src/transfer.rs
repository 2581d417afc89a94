//! Two-stage agent problem via the transfer-first reduction.
//!
//! For Cobb-Douglas and CES utilities the indirect utility is linear in
//! wealth, `v(p, w) = m(p) w`, so the two-stage reward of an activity plan
//! `y` is affine:
//!
//! ```text
//! r(y) = m⁰ ⟨p⁰, e⁰ − T⁰y⟩ + m¹ ⟨p¹, e¹ + T¹y⟩
//! ```
//!
//! and the optimal plan solves a small LP. The affine form is exact while
//! no survival floor or cap binds in either stage.

use crate::demand::{demand, DemandResult};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{Agent, UtilitySpec};
use crate::numerics::solve_lp;
use crate::scalar::{self, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct RewardCoefficients<T> {
    pub constant: T,
    pub linear: Vec<T>,
    /// Utility per unit of stage-0 wealth (`α` for Cobb-Douglas, `θ` for CES).
    pub mult0: T,
    pub mult1: T,
}

impl<T: Scalar> RewardCoefficients<T> {
    pub fn eval(&self, y: &[T]) -> T {
        self.constant + scalar::dot(&self.linear, y)
    }
}

/// Utility per unit of wealth under unconstrained demand.
pub fn wealth_multiplier<T: Scalar>(spec: &UtilitySpec<T>, p: &[T]) -> Result<T> {
    let m = match spec {
        UtilitySpec::CobbDouglas { beta } => beta
            .iter()
            .zip(p)
            .filter(|(&b, _)| b > T::zero())
            .fold(T::one(), |acc, (&b, &pj)| acc * (b / pj).powf(b)),
        UtilitySpec::Ces { a, b } => {
            let d = a
                .iter()
                .zip(p)
                .filter(|(&aj, _)| aj > T::zero())
                .fold(T::zero(), |acc, (&aj, &pj)| acc + aj * pj.powf(T::one() - *b));
            d.powf(T::one() / (*b - T::one()))
        }
    };
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::NonFinite("reward prices"))
    }
}

pub(crate) fn stage1_utility<T>(agent: &Agent<T>) -> &UtilitySpec<T> {
    agent.utility1.as_ref().unwrap_or(&agent.utility0)
}

/// Reward coefficients for `scenario` at stage prices `p0`, `p1`.
pub fn reward_coefficients<T: Scalar>(agent: &Agent<T>, scenario: usize, p0: &[T], p1: &[T]) -> Result<RewardCoefficients<T>> {
    if !scalar::all_finite(p0) || !scalar::all_finite(p1) {
        return Err(Error::NonFinite("reward prices"));
    }
    let e1 = agent.e1.get(scenario).ok_or(Error::DimensionMismatch { expected: scenario + 1, got: agent.e1.len() })?;
    let t1 = &agent.t1[scenario];
    let mult0 = wealth_multiplier(&agent.utility0, p0)?;
    let mult1 = wealth_multiplier(stage1_utility(agent), p1)?;
    let cost = agent.t0.tr_mul_vec(p0);
    let value = t1.tr_mul_vec(p1);
    Ok(RewardCoefficients {
        constant: mult0 * scalar::dot(p0, &agent.e0) + mult1 * scalar::dot(p1, e1),
        linear: cost.iter().zip(&value).map(|(&c, &v)| mult1 * v - mult0 * c).collect(),
        mult0,
        mult1,
    })
}

/// Feasible plans `{y ≥ 0 : T⁰y ≤ e⁰}`, plus a stage-0 budget row
/// `⟨T⁰ᵀp⁰, y⟩ ≤ ⟨p⁰, e⁰ − lb⟩` when a survival floor is present.
pub fn transfer_constraints<T: Scalar>(agent: &Agent<T>, p0: &[T]) -> (Matrix<T>, Vec<T>) {
    let floor_cost = scalar::dot(p0, &agent.survival_lb);
    if floor_cost <= T::zero() {
        return (agent.t0.clone(), agent.e0.clone());
    }
    let mut rows = agent.t0.to_rows();
    rows.push(agent.t0.tr_mul_vec(p0));
    let mut rhs = agent.e0.clone();
    rhs.push((scalar::dot(p0, &agent.e0) - floor_cost).max(T::zero()));
    let m = Matrix::from_rows(&rows).expect("rows share the activity count");
    (m, rhs)
}

/// Profit-maximizing activity plan for a linear reward.
pub fn solve_transfer_linear<T: Scalar>(agent_index: usize, agent: &Agent<T>, p0: &[T], linear: &[T]) -> Result<Vec<T>> {
    let m = agent.n_activities();
    let profitable = linear.iter().any(|&c| c > T::zero());
    if !profitable {
        return Ok(vec![T::zero(); m]);
    }
    for (k, &c) in linear.iter().enumerate() {
        let column_empty = (0..agent.t0.rows()).all(|g| agent.t0[(g, k)] <= T::zero());
        if c > T::zero() && column_empty {
            return Err(Error::UnboundedActivity { agent: agent_index, activity: k });
        }
    }
    let (a, b) = transfer_constraints(agent, p0);
    match solve_lp(linear, &a, &b) {
        Ok(sol) => Ok(sol.y.into_iter().map(|v| v.max(T::zero())).collect()),
        Err(Error::Unbounded) => Err(Error::UnboundedActivity { agent: agent_index, activity: 0 }),
        Err(e) => Err(e),
    }
}

/// Optimal transfer plan for a deterministic two-stage agent (scenario 0).
pub fn solve_transfer<T: Scalar>(agent_index: usize, agent: &Agent<T>, p0: &[T], p1: &[T]) -> Result<Vec<T>> {
    let coeffs = reward_coefficients(agent, 0, p0, p1)?;
    solve_transfer_linear(agent_index, agent, p0, &coeffs.linear)
}

/// Stage-0 demand after committing `y`.
pub fn stage0_demand<T: Scalar>(agent_index: usize, agent: &Agent<T>, p0: &[T], y: &[T], cap0: &[T]) -> Result<DemandResult<T>> {
    let used = agent.t0.mul_vec(y);
    let tol = T::lit(1e-10);
    let mut left = Vec::with_capacity(used.len());
    for (g, (&e, &u)) in agent.e0.iter().zip(&used).enumerate() {
        if u > e + tol * e.abs().max(T::one()) {
            return Err(Error::TransferExceedsEndowment { agent: agent_index, good: g });
        }
        left.push((e - u).max(T::zero()));
    }
    demand(&agent.utility0, p0, scalar::dot(p0, &left), &agent.survival_lb, cap0)
}

/// Stage-1 demand in `scenario` after committing `y`.
pub fn stage1_demand<T: Scalar>(agent: &Agent<T>, scenario: usize, p1: &[T], y: &[T], cap1: &[T]) -> Result<DemandResult<T>> {
    let out = agent.t1[scenario].mul_vec(y);
    let holdings: Vec<T> = agent.e1[scenario].iter().zip(&out).map(|(&e, &o)| e + o).collect();
    demand(stage1_utility(agent), p1, scalar::dot(p1, &holdings), &agent.survival_lb, cap1)
}

/// Both stage demands for a deterministic plan `y` (scenario 0).
#[allow(clippy::too_many_arguments)]
pub fn stage_demands<T: Scalar>(
    agent_index: usize,
    agent: &Agent<T>,
    p0: &[T],
    p1: &[T],
    y: &[T],
    cap0: &[T],
    cap1: &[T],
) -> Result<(DemandResult<T>, DemandResult<T>)> {
    Ok((stage0_demand(agent_index, agent, p0, y, cap0)?, stage1_demand(agent, 0, p1, y, cap1)?))
}
