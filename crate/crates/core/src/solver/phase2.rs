//! Derivative-free trust-region ascent over a product of simplices.
//!
//! Each simplex block of width `n` is parametrized by its first `n − 1`
//! coordinates (the last one is implied by the unit sum). Every iteration
//! samples a `2d + 1` point stencil of half-width `Δ` and proposes steps
//! inside the box `|d|∞ ≤ Δ` from two kinds of model:
//!
//! * a separable quadratic (central-difference gradient and diagonal
//!   curvature of the scalar objective), and
//! * for composite objectives `f(p) = h(v(p))` with a known outer `h`, the
//!   model `h(v + J d)` where `J` is the central-difference Jacobian of the
//!   inner vector. It is maximized by projected gradient ascent and, for
//!   the max-min limit of `h`, by a linear program.
//!
//! The best evaluated point wins if it improves on the incumbent. Points
//! are mapped back to prices by projecting onto the simplex, applying the
//! price floor and renormalizing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::PriceSystem;
use crate::numerics::{project_simplex, solve_lp};
use crate::scalar::{self, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase2Config<T> {
    pub max_evals: usize,
    pub step_init: T,
    pub step_tol: T,
}

impl<T: Scalar> Default for Phase2Config<T> {
    fn default() -> Self {
        Self {
            max_evals: 5000,
            step_init: T::lit(0.05),
            step_tol: T::lit(1e-10),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase2Result<T> {
    pub p: PriceSystem<T>,
    pub value: T,
    pub start_value: T,
    pub evals: usize,
}

/// Objective for [`maximize`].
pub trait Objective<T: Scalar> {
    /// Value at `p` and the inner vector of a composite objective (empty
    /// otherwise). `None` marks points where the objective is undefined.
    fn probe(&mut self, p: &PriceSystem<T>) -> Option<(T, Vec<T>)>;

    /// Outer function `h` and its gradient, for composite objectives.
    fn outer(&self, _inner: &[T]) -> Option<(T, Vec<T>)> {
        None
    }
}

/// A plain scalar objective.
pub struct Scalarized<F>(pub F);

impl<T: Scalar, F: FnMut(&PriceSystem<T>) -> Option<T>> Objective<T> for Scalarized<F> {
    fn probe(&mut self, p: &PriceSystem<T>) -> Option<(T, Vec<T>)> {
        (self.0)(p).map(|v| (v, Vec::new()))
    }
}

const MAX_STEP: f64 = 0.5;
const MODEL_ASCENT_STEPS: usize = 60;

/// Chart coordinates of a price system: each block minus its last entry.
pub(crate) fn to_chart<T: Scalar>(p: &PriceSystem<T>) -> Vec<T> {
    p.blocks().flat_map(|b| b[..b.len() - 1].iter().copied()).collect()
}

/// Projects `v` onto the simplex, floors at `delta` and renormalizes.
pub fn floor_and_normalize<T: Scalar>(v: &[T], delta: T) -> Result<Vec<T>> {
    let mut p = project_simplex(v)?;
    for x in p.iter_mut() {
        *x = x.max(delta);
    }
    let total = scalar::sum(&p);
    Ok(p.into_iter().map(|x| x / total).collect())
}

pub(crate) fn from_chart<T: Scalar>(u: &[T], widths: &[usize], delta: T) -> Result<PriceSystem<T>> {
    let mut blocks = Vec::with_capacity(widths.len());
    let mut at = 0;
    for &n in widths {
        let head = &u[at..at + n - 1];
        at += n - 1;
        let mut full = head.to_vec();
        full.push(T::one() - scalar::sum(head));
        blocks.push(floor_and_normalize(&full, delta)?);
    }
    let p0 = blocks.remove(0);
    Ok(PriceSystem::new(p0, blocks))
}

struct Sample<T> {
    p: PriceSystem<T>,
    value: Option<T>,
    inner: Vec<T>,
}

/// Linearization `v + J d` of the inner vector.
struct LinearInner<T> {
    v: Vec<T>,
    /// Column `k` is `∂v/∂u_k`.
    cols: Vec<Vec<T>>,
}

impl<T: Scalar> LinearInner<T> {
    fn at(&self, d: &[T]) -> Vec<T> {
        let mut out = self.v.clone();
        for (col, &dk) in self.cols.iter().zip(d) {
            if dk != T::zero() {
                for (o, &c) in out.iter_mut().zip(col) {
                    *o = *o + dk * c;
                }
            }
        }
        out
    }

    fn tr_mul(&self, g: &[T]) -> Vec<T> {
        self.cols.iter().map(|c| scalar::dot(c, g)).collect()
    }
}

/// Projected gradient ascent with backtracking on `h(v + J d)`, `|d|∞ ≤ Δ`.
fn ascend_composite<T: Scalar, O: Objective<T>>(obj: &O, lin: &LinearInner<T>, radius: T) -> Option<(Vec<T>, T)> {
    let dim = lin.cols.len();
    let clamp = |x: T| x.max(-radius).min(radius);
    let mut d = vec![T::zero(); dim];
    let (mut val, mut grad_v) = obj.outer(&lin.v)?;
    let base = val;
    let mut g = lin.tr_mul(&grad_v);
    let gmax = g.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if !(gmax > T::zero()) {
        return None;
    }
    let mut step = radius / gmax;
    for _ in 0..MODEL_ASCENT_STEPS {
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<T> = d.iter().zip(&g).map(|(&a, &b)| clamp(a + step * b)).collect();
            let moved: T = trial.iter().zip(&d).zip(&g).fold(T::zero(), |acc, ((&t, &a), &b)| acc + (t - a) * b);
            let (tv, tg) = obj.outer(&lin.at(&trial))?;
            if tv >= val + T::lit(1e-4) * moved && tv > val {
                d = trial;
                val = tv;
                grad_v = tg;
                step = step * T::lit(2.0);
                accepted = true;
                break;
            }
            step = step * T::lit(0.5);
        }
        if !accepted {
            break;
        }
        g = lin.tr_mul(&grad_v);
    }
    (val > base).then_some((d, val))
}

/// Maximizes `Σ_b min_k (v + J d)_{b,k}` over `|d|∞ ≤ Δ` as a linear program.
fn maxmin_step<T: Scalar>(lin: &LinearInner<T>, widths: &[usize], radius: T) -> Option<Vec<T>> {
    let dim = lin.cols.len();
    let n_blocks = widths.len();
    let n_rows = lin.v.len();
    // Variables: u = d + Δ ∈ [0, 2Δ], then τ_b = t_b + M ≥ 0 per block.
    let spread: T = (0..n_rows)
        .map(|i| lin.cols.iter().fold(T::zero(), |acc, c| acc + c[i].abs()))
        .fold(T::zero(), |m, x| m.max(x));
    let lowest = lin.v.iter().fold(T::zero(), |m, &x| m.min(x));
    let shift = -lowest + radius * spread + T::one();
    let n_vars = dim + n_blocks;
    let mut a = Matrix::zeros(n_rows + dim, n_vars);
    let mut b = vec![T::zero(); n_rows + dim];
    let mut row = 0;
    for (blk, &n) in widths.iter().enumerate() {
        for _ in 0..n {
            let mut j_sum = T::zero();
            for (k, col) in lin.cols.iter().enumerate() {
                a[(row, k)] = -col[row];
                j_sum = j_sum + col[row];
            }
            a[(row, dim + blk)] = T::one();
            b[row] = lin.v[row] - radius * j_sum + shift;
            row += 1;
        }
    }
    for k in 0..dim {
        a[(n_rows + k, k)] = T::one();
        b[n_rows + k] = T::lit(2.0) * radius;
    }
    let mut c = vec![T::zero(); n_vars];
    for x in c[dim..].iter_mut() {
        *x = T::one();
    }
    let sol = solve_lp(&c, &a, &b).ok()?;
    Some(sol.y[..dim].iter().map(|&u| (u - radius).max(-radius).min(radius)).collect())
}

/// Maximizes the objective from `start`. Returns `Phase2Stalled` if no
/// point beats the start.
pub fn maximize<T: Scalar, O: Objective<T>>(
    start: &PriceSystem<T>,
    delta: T,
    cfg: &Phase2Config<T>,
    obj: &mut O,
) -> Result<Phase2Result<T>> {
    let widths: Vec<usize> = start.blocks().map(<[T]>::len).collect();
    let mut x = to_chart(start);
    let d = x.len();
    let (mut fx, mut inner_x) = obj.probe(start).ok_or(Error::NonFinite("phase II start"))?;
    let start_value = fx;
    let mut best_p = start.clone();
    let mut evals = 1;
    let mut radius = cfg.step_init;
    let two = T::lit(2.0);
    let half = T::lit(0.5);

    let sample = |u: &[T], evals: &mut usize, obj: &mut O| -> Result<Sample<T>> {
        *evals += 1;
        let p = from_chart(u, &widths, delta)?;
        Ok(match obj.probe(&p) {
            Some((v, inner)) if v.is_finite() => Sample { p, value: Some(v), inner },
            _ => Sample { p, value: None, inner: Vec::new() },
        })
    };
    let consider = |v: Option<T>, p: PriceSystem<T>, predicted: T, best: &mut Option<(T, PriceSystem<T>, T)>| {
        if let Some(v) = v {
            if best.as_ref().is_none_or(|b| v > b.0) {
                *best = Some((v, p, predicted));
            }
        }
    };

    while d > 0 && radius > cfg.step_tol && evals + 2 * d + 3 < cfg.max_evals {
        let mut g = vec![T::zero(); d];
        let mut h = vec![T::zero(); d];
        let mut best: Option<(T, PriceSystem<T>, T)> = None;
        let composite = !inner_x.is_empty();
        let mut cols = Vec::with_capacity(if composite { d } else { 0 });
        for k in 0..d {
            let mut plus = x.clone();
            plus[k] = plus[k] + radius;
            let mut minus = x.clone();
            minus[k] = minus[k] - radius;
            let sp = sample(&plus, &mut evals, obj)?;
            let sm = sample(&minus, &mut evals, obj)?;
            // Undefined neighbours fall back to a flat one-sided model.
            let (fp, fm) = (sp.value.unwrap_or(fx), sm.value.unwrap_or(fx));
            g[k] = (fp - fm) / (two * radius);
            h[k] = (fp - two * fx + fm) / (radius * radius);
            if composite {
                let col: Vec<T> = match (sp.value.is_some(), sm.value.is_some()) {
                    (true, true) => sp.inner.iter().zip(&sm.inner).map(|(&a, &b)| (a - b) / (two * radius)).collect(),
                    (true, false) => sp.inner.iter().zip(&inner_x).map(|(&a, &b)| (a - b) / radius).collect(),
                    (false, true) => inner_x.iter().zip(&sm.inner).map(|(&a, &b)| (a - b) / radius).collect(),
                    (false, false) => vec![T::zero(); inner_x.len()],
                };
                cols.push(col);
            }
            consider(sp.value, sp.p, T::zero(), &mut best);
            consider(sm.value, sm.p, T::zero(), &mut best);
        }

        // Separable quadratic model step.
        let mut step = vec![T::zero(); d];
        let mut predicted = T::zero();
        for k in 0..d {
            let model = |t: T| g[k] * t + half * h[k] * t * t;
            let mut dk = if model(radius) >= model(-radius) { radius } else { -radius };
            if h[k] < T::zero() {
                let stationary = (-g[k] / h[k]).max(-radius).min(radius);
                if model(stationary) > model(dk) {
                    dk = stationary;
                }
            }
            if !(model(dk) > T::zero()) {
                dk = T::zero();
            }
            step[k] = dk;
            predicted = predicted + model(dk);
        }
        let mut proposals = Vec::new();
        if predicted > T::zero() {
            proposals.push((step, predicted));
        }
        if composite {
            let lin = LinearInner { v: inner_x.clone(), cols };
            if let Some((dm, mv)) = ascend_composite(obj, &lin, radius) {
                proposals.push((dm, mv - fx));
            }
            if let Some(dl) = maxmin_step(&lin, &widths, radius) {
                if let Some((mv, _)) = obj.outer(&lin.at(&dl)) {
                    if mv > fx {
                        proposals.push((dl, mv - fx));
                    }
                }
            }
        }
        for (dk, pred) in proposals {
            let trial: Vec<T> = x.iter().zip(&dk).map(|(&a, &b)| a + b).collect();
            let s = sample(&trial, &mut evals, obj)?;
            consider(s.value, s.p, pred, &mut best);
        }

        match best {
            Some((v, p, pred)) if v > fx => {
                let ratio = if pred > T::zero() { (v - fx) / pred } else { T::zero() };
                fx = v;
                // Re-chart from the floored price so x and best_p agree.
                x = to_chart(&p);
                inner_x = obj.probe(&p).map(|(_, inner)| inner).unwrap_or_default();
                best_p = p;
                if ratio >= T::lit(0.75) {
                    radius = (radius * two).min(T::lit(MAX_STEP));
                } else if pred > T::zero() && ratio < T::lit(0.25) {
                    radius = radius * half;
                }
            }
            _ => radius = radius * half,
        }
    }
    if fx > start_value {
        Ok(Phase2Result { p: best_p, value: fx, start_value, evals })
    } else {
        Err(Error::Phase2Stalled { evals })
    }
}
