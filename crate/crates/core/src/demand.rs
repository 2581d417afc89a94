//! Budget-constrained utility maximization for Cobb-Douglas and CES agents
//! with a survival floor `lb` and a demand cap.
//!
//! Both families share the KKT demand path `x_j(t) = clamp(k_j t, lb_j, cap_j)`
//! where `t` is the inverse budget multiplier (up to a monotone change of
//! variable) and `k_j = β_j / p_j` (Cobb-Douglas) or `k_j = a_j p_j^{-b}`
//! (CES). Spending along the path is nondecreasing in `t`, so the budget
//! equation is solved by bracketing and bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::UtilitySpec;
use crate::scalar::{self, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundFlag {
    Interior,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandResult<T> {
    pub x: Vec<T>,
    pub spent: T,
    pub utility: T,
    pub flags: Vec<BoundFlag>,
}

impl<T: Scalar> DemandResult<T> {
    /// Some good is held at its cap, so the budget may be slack.
    pub fn cap_binds(&self) -> bool {
        self.flags.contains(&BoundFlag::Upper)
    }
}

const MAX_BISECTIONS: usize = 200;
const BUDGET_RTOL: f64 = 1e-12;

/// Evaluates `u(x)`. Cobb-Douglas returns the product form, so a zero
/// quantity of a valued good gives 0.
pub fn utility_value<T: Scalar>(spec: &UtilitySpec<T>, x: &[T]) -> Result<T> {
    if x.iter().any(|&v| v < T::zero()) {
        return Err(Error::NonFinite("negative consumption in utility"));
    }
    if !scalar::all_finite(x) {
        return Err(Error::NonFinite("utility"));
    }
    match spec {
        UtilitySpec::CobbDouglas { beta } => Ok(beta
            .iter()
            .zip(x)
            .filter(|(&b, _)| b > T::zero())
            .fold(T::one(), |acc, (&b, &v)| acc * v.powf(b))),
        UtilitySpec::Ces { a, b } => {
            let rho = (*b - T::one()) / *b;
            let inner = a
                .iter()
                .zip(x)
                .filter(|(&aj, _)| aj > T::zero())
                .fold(T::zero(), |acc, (&aj, &v)| acc + aj.powf(T::one() / *b) * v.powf(rho));
            Ok(inner.powf(T::one() / rho))
        }
    }
}

pub fn demand_cobb_douglas<T: Scalar>(beta: &[T], p: &[T], wealth: T, lb: &[T], cap: &[T]) -> Result<DemandResult<T>> {
    let k: Vec<T> = beta
        .iter()
        .zip(p)
        .map(|(&b, &pj)| if b > T::zero() { b / pj } else { T::zero() })
        .collect();
    let spec = UtilitySpec::CobbDouglas { beta: beta.to_vec() };
    solve_box_demand(&spec, &k, p, wealth, lb, cap)
}

pub fn demand_ces<T: Scalar>(a: &[T], b: T, p: &[T], wealth: T, lb: &[T], cap: &[T]) -> Result<DemandResult<T>> {
    let k: Vec<T> = a
        .iter()
        .zip(p)
        .map(|(&aj, &pj)| if aj > T::zero() { aj * pj.powf(-b) } else { T::zero() })
        .collect();
    let spec = UtilitySpec::Ces { a: a.to_vec(), b };
    solve_box_demand(&spec, &k, p, wealth, lb, cap)
}

pub fn demand<T: Scalar>(spec: &UtilitySpec<T>, p: &[T], wealth: T, lb: &[T], cap: &[T]) -> Result<DemandResult<T>> {
    match spec {
        UtilitySpec::CobbDouglas { beta } => demand_cobb_douglas(beta, p, wealth, lb, cap),
        UtilitySpec::Ces { a, b } => demand_ces(a, *b, p, wealth, lb, cap),
    }
}

fn path_point<T: Scalar>(k: &[T], lb: &[T], cap: &[T], t: T) -> Vec<T> {
    k.iter()
        .zip(lb.iter().zip(cap))
        .map(|(&kj, (&l, &c))| if kj > T::zero() { (kj * t).max(l).min(c) } else { l })
        .collect()
}

fn flags_at<T: Scalar>(k: &[T], lb: &[T], cap: &[T], x: &[T]) -> Vec<BoundFlag> {
    k.iter()
        .zip(x)
        .zip(lb.iter().zip(cap))
        .map(|((&kj, &xj), (&l, &c))| {
            if kj > T::zero() && xj >= c {
                BoundFlag::Upper
            } else if xj <= l {
                BoundFlag::Lower
            } else {
                BoundFlag::Interior
            }
        })
        .collect()
}

fn finish<T: Scalar>(spec: &UtilitySpec<T>, k: &[T], p: &[T], lb: &[T], cap: &[T], x: Vec<T>) -> Result<DemandResult<T>> {
    let flags = flags_at(k, lb, cap, &x);
    Ok(DemandResult {
        spent: scalar::dot(p, &x),
        utility: utility_value(spec, &x)?,
        flags,
        x,
    })
}

/// Bracket-and-bisect on `t` for `⟨p, x(t)⟩ = wealth`. `observe` sees every
/// bracket `(t_lo, spend_lo, t_hi, spend_hi)` as it shrinks.
pub(crate) fn solve_multiplier<T: Scalar>(
    k: &[T],
    p: &[T],
    wealth: T,
    lb: &[T],
    cap: &[T],
    mut observe: impl FnMut(T, T, T, T),
) -> T {
    let spend = |t: T| scalar::dot(p, &path_point(k, lb, cap, t));
    let tol = T::lit(BUDGET_RTOL) * wealth.max(T::min_positive_value());
    let mut lo = T::zero();
    let mut f_lo = spend(lo);
    let denom = scalar::dot(p, k);
    let mut hi = if denom > T::zero() { wealth / denom } else { T::one() };
    hi = hi.max(T::min_positive_value());
    let mut f_hi = spend(hi);
    while f_hi < wealth && hi.is_finite() {
        lo = hi;
        f_lo = f_hi;
        hi = hi * T::lit(2.0);
        f_hi = spend(hi);
    }
    observe(lo, f_lo, hi, f_hi);
    for _ in 0..MAX_BISECTIONS {
        if (f_hi - wealth).abs() <= tol {
            break;
        }
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = spend(mid);
        if f_mid < wealth {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
        observe(lo, f_lo, hi, f_hi);
    }
    // Final exact solve on the free set identified by the bracket.
    let x_hi = path_point(k, lb, cap, hi);
    let mut fixed = T::zero();
    let mut free_rate = T::zero();
    for j in 0..k.len() {
        let kt = k[j] * hi;
        if k[j] > T::zero() && kt > lb[j] && kt < cap[j] {
            free_rate = free_rate + p[j] * k[j];
        } else {
            fixed = fixed + p[j] * x_hi[j];
        }
    }
    if free_rate > T::zero() {
        let t = (wealth - fixed) / free_rate;
        let same_set = (0..k.len()).all(|j| {
            let before = k[j] > T::zero() && k[j] * hi > lb[j] && k[j] * hi < cap[j];
            let after = k[j] > T::zero() && k[j] * t > lb[j] && k[j] * t < cap[j];
            before == after || !(k[j] > T::zero())
        });
        if same_set && t > T::zero() {
            return t;
        }
    }
    hi
}

fn solve_box_demand<T: Scalar>(
    spec: &UtilitySpec<T>,
    k: &[T],
    p: &[T],
    wealth: T,
    lb: &[T],
    cap: &[T],
) -> Result<DemandResult<T>> {
    let n = p.len();
    for len in [k.len(), lb.len(), cap.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    if !scalar::all_finite(k) || !scalar::all_finite(p) || !wealth.is_finite() {
        return Err(Error::NonFinite("demand"));
    }
    let floor_cost = scalar::dot(p, lb);
    if wealth < floor_cost - T::lit(1e-12) {
        return Err(Error::InfeasibleBudget {
            wealth: wealth.as_f64(),
            floor_cost: floor_cost.as_f64(),
        });
    }
    if wealth <= floor_cost {
        return finish(spec, k, p, lb, cap, lb.to_vec());
    }
    // Saturation: everything valued at its cap still fits the budget.
    let saturated: Vec<T> = k.iter().zip(lb.iter().zip(cap)).map(|(&kj, (&l, &c))| if kj > T::zero() { c } else { l }).collect();
    if scalar::dot(p, &saturated) <= wealth {
        return finish(spec, k, p, lb, cap, saturated);
    }
    // Interior closed form.
    let rate = scalar::dot(p, k);
    let valueless_floor = k.iter().zip(lb).any(|(&kj, &l)| !(kj > T::zero()) && l > T::zero());
    if rate > T::zero() && !valueless_floor {
        let t = wealth / rate;
        let x: Vec<T> = k.iter().map(|&kj| kj * t).collect();
        let inside = x
            .iter()
            .zip(k)
            .zip(lb.iter().zip(cap))
            .all(|((&xj, &kj), (&l, &c))| !(kj > T::zero()) || (xj >= l && xj <= c));
        if inside {
            return finish(spec, k, p, lb, cap, x);
        }
    }
    let t = solve_multiplier(k, p, wealth, lb, cap, |_, _, _, _| {});
    finish(spec, k, p, lb, cap, path_point(k, lb, cap, t))
}
