//! Dense two-phase tableau simplex for `max ⟨c,y⟩ s.t. Ay ≤ b, y ≥ 0`.
//!
//! Bland's rule (smallest eligible index for both the entering and the
//! leaving variable) rules out cycling. Meant for the small activity-by-good
//! problems of the transfer step, not for large sparse programs.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{self, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub y: Vec<T>,
    pub value: T,
    /// Multipliers of `Ay ≤ b` (nonnegative; `Aᵀu ≥ c` at optimality).
    pub duals: Vec<T>,
}

fn pivot_tol<T: Scalar>() -> T {
    T::epsilon().sqrt() * T::lit(1e-3)
}

struct Tableau<T> {
    /// m rows, each of width `n_cols + 1` (last entry is the right-hand side).
    rows: Vec<Vec<T>>,
    /// Reduced profits per column; entry `n_cols` holds minus the objective value.
    obj: Vec<T>,
    basis: Vec<usize>,
    n_cols: usize,
}

impl<T: Scalar> Tableau<T> {
    fn rhs(&self, i: usize) -> T {
        self.rows[i][self.n_cols]
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for x in self.rows[r].iter_mut() {
            *x = *x / p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != T::zero() {
                for (x, &pr) in row.iter_mut().zip(&pivot_row) {
                    *x = *x - f * pr;
                }
            }
        }
        let f = self.obj[col];
        if f != T::zero() {
            for (x, &pr) in self.obj.iter_mut().zip(&pivot_row) {
                *x = *x - f * pr;
            }
        }
        self.basis[r] = col;
    }

    /// Loads profit vector `c` (over all columns) and prices out the basis.
    fn set_objective(&mut self, c: &[T]) {
        let mut obj = c.to_vec();
        obj.push(T::zero());
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = obj[b];
            if cb != T::zero() {
                for (x, &a) in obj.iter_mut().zip(&self.rows[i]) {
                    *x = *x - cb * a;
                }
            }
        }
        self.obj = obj;
    }

    /// Runs simplex iterations on the current objective, considering only
    /// columns for which `allowed` holds. `Err(Unbounded)` if a ray is found.
    fn optimize(&mut self, allowed: impl Fn(usize) -> bool) -> Result<()> {
        let tol = pivot_tol::<T>();
        loop {
            let Some(col) = (0..self.n_cols).find(|&j| allowed(j) && self.obj[j] > tol) else {
                return Ok(());
            };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a > tol {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best || (ratio == best && self.basis[i] < self.basis[r]) {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, col),
                None => return Err(Error::Unbounded),
            }
        }
    }
}

/// Solves `max ⟨c,y⟩ s.t. Ay ≤ b, y ≥ 0`.
///
/// When `b ≥ 0` the origin is feasible and the slack basis starts phase II
/// directly; otherwise a phase I over artificial variables finds a feasible
/// vertex or reports [`Error::Infeasible`].
pub fn solve_lp<T: Scalar>(c: &[T], a: &Matrix<T>, b: &[T]) -> Result<LpSolution<T>> {
    let n = c.len();
    let m = b.len();
    if a.rows() != m {
        return Err(Error::DimensionMismatch { expected: m, got: a.rows() });
    }
    if a.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.cols() });
    }
    if !scalar::all_finite(c) || !scalar::all_finite(b) || a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("linear program"));
    }

    // Columns: y (n) | slack (m) | artificial (one per negative rhs).
    let negative: Vec<usize> = (0..m).filter(|&i| b[i] < T::zero()).collect();
    let n_art = negative.len();
    let n_cols = n + m + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![T::zero(); n_cols + 1];
        let sign = if b[i] < T::zero() { -T::one() } else { T::one() };
        for j in 0..n {
            row[j] = sign * a[(i, j)];
        }
        row[n + i] = sign;
        row[n_cols] = sign * b[i];
        if let Some(k) = negative.iter().position(|&r| r == i) {
            row[n + m + k] = T::one();
            basis.push(n + m + k);
        } else {
            basis.push(n + i);
        }
        rows.push(row);
    }
    let mut tab = Tableau {
        rows,
        obj: Vec::new(),
        basis,
        n_cols,
    };
    let is_artificial = |j: usize| j >= n + m;

    if n_art > 0 {
        let mut phase1 = vec![T::zero(); n_cols];
        for x in phase1.iter_mut().skip(n + m) {
            *x = -T::one();
        }
        tab.set_objective(&phase1);
        tab.optimize(|_| true)?;
        let infeasibility = tab.obj[n_cols];
        let scale = b.iter().fold(T::one(), |s, &x| s.max(x.abs()));
        if infeasibility > pivot_tol::<T>() * scale {
            return Err(Error::Infeasible);
        }
        // Drive zero-valued artificials out of the basis where possible.
        let tol = pivot_tol::<T>();
        for r in 0..m {
            if is_artificial(tab.basis[r]) {
                if let Some(col) = (0..n + m).find(|&j| tab.rows[r][j].abs() > tol) {
                    tab.pivot(r, col);
                }
            }
        }
    }

    let mut profit = vec![T::zero(); n_cols];
    profit[..n].copy_from_slice(c);
    tab.set_objective(&profit);
    tab.optimize(|j| !is_artificial(j))?;

    let mut y = vec![T::zero(); n];
    for (i, &bv) in tab.basis.iter().enumerate() {
        if bv < n {
            y[bv] = tab.rhs(i).max(T::zero());
        }
    }
    let duals = (0..m).map(|i| (-tab.obj[n + i]).max(T::zero())).collect();
    Ok(LpSolution {
        value: scalar::dot(c, &y),
        y,
        duals,
    })
}
