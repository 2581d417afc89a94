use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

/// Components this close to zero are snapped to zero after projection.
pub const SNAP: f64 = 1e-14;

fn snap<T: Scalar>(v: &mut [T]) {
    let s = T::lit(SNAP);
    for x in v.iter_mut() {
        if x.abs() < s {
            *x = T::zero();
        }
    }
}

/// Euclidean projection of `v` onto the unit simplex, `argmin_{z∈Δ} |z − v|₂`.
///
/// Sort-and-threshold: with `u` sorted descending, the threshold is
/// `τ = (Σ_{i≤k} u_i − 1)/k` for the largest `k` with `u_k > τ_k`, and the
/// projection is `max(v − τ, 0)`. Points already in the simplex (to within
/// rounding) are returned unchanged, so the map is exactly idempotent.
pub fn project_simplex<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    if !scalar::all_finite(v) {
        return Err(Error::NonFinite("projection"));
    }
    let n = T::of_usize(v.len());
    let in_simplex_tol = n * (T::epsilon() * T::lit(16.0) + T::lit(SNAP));
    if v.iter().all(|&x| x >= T::zero()) && (scalar::sum(v) - T::one()).abs() <= in_simplex_tol {
        let mut out = v.to_vec();
        snap(&mut out);
        return Ok(out);
    }

    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = T::zero();
    let mut tau = T::zero();
    for (k, &uk) in u.iter().enumerate() {
        cumulative = cumulative + uk;
        let t = (cumulative - T::one()) / T::of_usize(k + 1);
        if uk > t {
            tau = t;
        }
    }
    let mut out: Vec<T> = v.iter().map(|&x| (x - tau).max(T::zero())).collect();
    snap(&mut out);
    Ok(out)
}

/// `argmin_j c_j` (smallest index on ties) together with the minimum, which
/// equals `min_{q∈Δ} ⟨q, c⟩`.
pub fn min_vertex<T: Scalar>(c: &[T]) -> (usize, T) {
    let mut best = 0;
    for (j, &x) in c.iter().enumerate().skip(1) {
        if x < c[best] {
            best = j;
        }
    }
    (best, c.get(best).copied().unwrap_or_else(T::zero))
}

/// Unit vector `e^j` of length `n`.
pub fn vertex<T: Scalar>(n: usize, j: usize) -> Vec<T> {
    let mut e = vec![T::zero(); n];
    e[j] = T::one();
    e
}
