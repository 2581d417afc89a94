//! `max Σ_j (c_j y_j − (ρ/2) y_j²) s.t. Ay ≤ b, y ≥ 0`.
//!
//! With `ρ > 0` the optimum is unique: it is the Euclidean projection of
//! `c/ρ` onto the polyhedron. Diagonal systems clamp coordinatewise; anything
//! else goes through a primal active-set method on the projection problem.

use crate::error::{Error, Result};
use crate::matrix::{solve_dense, Matrix};
use crate::numerics::lp::solve_lp;
use crate::scalar::{self, Scalar};

pub fn solve_separable_qp<T: Scalar>(c: &[T], rho: T, a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = c.len();
    if a.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.cols() });
    }
    if a.rows() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.rows(), got: b.len() });
    }
    if !(rho > T::zero()) || !scalar::all_finite(c) || !scalar::all_finite(b) {
        return Err(Error::NonFinite("quadratic program"));
    }
    if let Some(diag) = a.as_diagonal() {
        if diag.iter().all(|&d| d >= T::zero()) && b.iter().all(|&x| x >= T::zero()) {
            return Ok(clamp_diagonal(c, rho, &diag, b));
        }
    }
    active_set(c, rho, a, b)
}

fn clamp_diagonal<T: Scalar>(c: &[T], rho: T, diag: &[T], b: &[T]) -> Vec<T> {
    c.iter()
        .zip(diag)
        .zip(b)
        .map(|((&cj, &d), &bj)| {
            let upper = if d > T::zero() { bj / d } else { T::infinity() };
            (cj / rho).max(T::zero()).min(upper)
        })
        .collect()
}

/// Constraint `k` of the stacked system `[A; −I] y ≤ [b; 0]`.
struct Stacked<'a, T> {
    a: &'a Matrix<T>,
    b: &'a [T],
    n: usize,
}

impl<T: Scalar> Stacked<'_, T> {
    fn len(&self) -> usize {
        self.a.rows() + self.n
    }

    fn dot(&self, k: usize, v: &[T]) -> T {
        if k < self.a.rows() {
            scalar::dot(self.a.row(k), v)
        } else {
            -v[k - self.a.rows()]
        }
    }

    fn rhs(&self, k: usize) -> T {
        if k < self.a.rows() {
            self.b[k]
        } else {
            T::zero()
        }
    }

    fn normal(&self, k: usize) -> Vec<T> {
        if k < self.a.rows() {
            self.a.row(k).to_vec()
        } else {
            let mut g = vec![T::zero(); self.n];
            g[k - self.a.rows()] = -T::one();
            g
        }
    }
}

/// Solves `G_W G_Wᵀ μ = G_W r` for the working-set normals.
fn working_multipliers<T: Scalar>(normals: &[Vec<T>], r: &[T]) -> Option<Vec<T>> {
    let w = normals.len();
    let mut gram = Matrix::zeros(w, w);
    for i in 0..w {
        for j in 0..w {
            gram[(i, j)] = scalar::dot(&normals[i], &normals[j]);
        }
    }
    let rhs = normals.iter().map(|g| scalar::dot(g, r)).collect();
    solve_dense(gram, rhs)
}

fn active_set<T: Scalar>(c: &[T], rho: T, a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = c.len();
    let cons = Stacked { a, b, n };
    let target: Vec<T> = c.iter().map(|&x| x / rho).collect();
    let scale = target.iter().chain(b).fold(T::one(), |m, &x| m.max(x.abs()));
    let tol = T::epsilon().sqrt() * T::lit(1e-4) * scale;

    let mut y = if b.iter().all(|&x| x >= T::zero()) {
        vec![T::zero(); n]
    } else {
        solve_lp(&vec![T::zero(); n], a, b).map_err(|_| Error::Infeasible)?.y
    };

    let mut working: Vec<usize> = Vec::new();
    let max_iter = 50 * (cons.len() + 1) * (n + 1);
    for _ in 0..max_iter {
        let normals: Vec<Vec<T>> = working.iter().map(|&k| cons.normal(k)).collect();
        let r: Vec<T> = target.iter().zip(&y).map(|(&t, &v)| t - v).collect();
        let mu = if working.is_empty() {
            Vec::new()
        } else {
            match working_multipliers(&normals, &r) {
                Some(mu) => mu,
                None => {
                    // Dependent working set: drop the newest constraint.
                    working.pop();
                    continue;
                }
            }
        };
        // d = r − G_Wᵀ μ, the step to the minimizer on the working face.
        let mut d = r.clone();
        for (g, &m) in normals.iter().zip(&mu) {
            for (dj, &gj) in d.iter_mut().zip(g) {
                *dj = *dj - m * gj;
            }
        }
        let d_norm = d.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
        if d_norm <= tol {
            // μ are the KKT multipliers of the working constraints.
            let most_negative = mu
                .iter()
                .enumerate()
                .filter(|(_, &m)| m < -tol)
                .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
                .map(|(i, _)| i);
            match most_negative {
                None => return Ok(y.into_iter().map(|v| v.max(T::zero())).collect()),
                Some(i) => {
                    working.remove(i);
                    continue;
                }
            }
        }
        let mut alpha = T::one();
        let mut blocking = None;
        for k in 0..cons.len() {
            if working.contains(&k) {
                continue;
            }
            let gd = cons.dot(k, &d);
            if gd > T::zero() {
                let slack = (cons.rhs(k) - cons.dot(k, &y)).max(T::zero());
                let step = slack / gd;
                if step < alpha {
                    alpha = step;
                    blocking = Some(k);
                }
            }
        }
        for (v, &dj) in y.iter_mut().zip(&d) {
            *v = *v + alpha * dj;
        }
        if let Some(k) = blocking {
            working.push(k);
        }
    }
    Err(Error::Infeasible)
}
