//! Small dense-vector helpers used throughout the optimizer.
//!
//! Everything operates on `&[f64]` slices; the optimizer works with plain
//! `Vec<f64>` iterates and preallocated scratch buffers.

/// Dot product. Panics on length mismatch (always a caller bug here).
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch {} vs {}", a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared Euclidean norm.
#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Euclidean norm.
#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), y.len(), "axpy: length mismatch {} vs {}", x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = x + alpha * v`, reusing `out`'s allocation.
#[inline]
pub fn add_scaled_into(x: &[f64], alpha: f64, v: &[f64], out: &mut [f64]) {
    assert_eq!(x.len(), v.len(), "add_scaled_into: length mismatch");
    assert_eq!(x.len(), out.len(), "add_scaled_into: output length mismatch");
    for ((o, xi), vi) in out.iter_mut().zip(x).zip(v) {
        *o = xi + alpha * vi;
    }
}

/// Scale in place: `x *= alpha`.
#[inline]
pub fn scale(x: &mut [f64], alpha: f64) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// True iff every component is finite.
#[inline]
pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Ceiling with a float-noise guard: values within `1e-9 * max(1, |x|)` of an
/// integer snap to that integer instead of being pushed up by rounding error.
///
/// The schedule formulas multiply and divide several user constants; without
/// the guard, a product that is mathematically an exact integer (e.g.
/// `128·ℓ·Δf/ε²` with decimal inputs) can land a few ulps above it and the
/// derived episode count would silently grow by one.
pub fn ceil_tol(x: f64) -> f64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * x.abs().max(1.0) {
        nearest
    } else {
        x.ceil()
    }
}
