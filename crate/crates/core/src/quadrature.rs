//! Composite Simpson quadrature.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Number of Simpson intervals covering `[a, b]` with spacing no larger than
/// `h`. Always even and at least 2.
pub fn simpson_intervals(a: f64, b: f64, h: f64) -> usize {
    let raw = math::ceil((b - a) / h - 1e-9).max(1.0) as usize;
    if raw.is_multiple_of(2) {
        raw
    } else {
        raw + 1
    }
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 2 && n.is_multiple_of(2), "simpson needs an even interval count");
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Vector-valued composite Simpson rule. `f(t, out)` writes the integrand.
pub fn simpson_vec<F>(mut f: F, dim: usize, a: f64, b: f64, n: usize) -> crate::Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]) -> crate::Result<()>,
{
    assert!(n >= 2 && n.is_multiple_of(2), "simpson needs an even interval count");
    let h = (b - a) / n as f64;
    let mut acc = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        // Last node uses `b` directly so the endpoint is hit without rounding drift.
        let t = if i == n { b } else { a + i as f64 * h };
        f(t, &mut buf)?;
        for (s, v) in acc.iter_mut().zip(&buf) {
            *s += w * v;
        }
    }
    for s in &mut acc {
        *s *= h / 3.0;
    }
    Ok(acc)
}
