//! Deterministic low-discrepancy sampling.
//!
//! Every sampler here is a pure function of the sample index, so the first
//! `n` samples are the same whatever the total count. Doubling a sample count
//! therefore always yields a superset of the previous samples.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

const PRIMES: [u64; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];

pub fn prime(k: usize) -> u64 {
    PRIMES[k % PRIMES.len()]
}

/// Van der Corput radical inverse of `i` in `base`, in `[0, 1)`.
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton point `i` in the unit cube, using primes starting at `prime(first_base)`.
pub fn halton(i: u64, first_base: usize, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = radical_inverse(i, prime(first_base + k));
    }
}

/// Point `i` of a Halton sequence scaled into the box `[lo, hi]`.
pub fn box_sample(i: u64, first_base: usize, lo: &[f64], hi: &[f64], out: &mut [f64]) {
    halton(i, first_base, out);
    for ((o, l), h) in out.iter_mut().zip(lo).zip(hi) {
        *o = l + (h - l) * *o;
    }
}

/// Sample `i` in the spherical shell `r_in <= |x| <= r_out`.
///
/// Sample 0 lies exactly on the inner sphere, along the first axis.
pub fn shell_sample(i: u64, r_in: f64, r_out: f64, out: &mut [f64]) {
    let r = r_in + (r_out - r_in) * radical_inverse(i, 2);
    unit_direction(i, out);
    for o in out.iter_mut() {
        *o *= r;
    }
}

/// Deterministic unit vector number `i`.
pub fn unit_direction(i: u64, out: &mut [f64]) {
    match out.len() {
        0 => {}
        1 => out[0] = if radical_inverse(i, 3) < 0.5 { 1.0 } else { -1.0 },
        2 => {
            let th = 2.0 * core::f64::consts::PI * radical_inverse(i, 3);
            out[0] = math::cos(th);
            out[1] = math::sin(th);
        }
        _ => {
            // Map Halton points in the cube to the sphere. Index 0 is the
            // corner (-1, ..., -1), which is replaced by the first axis.
            for (k, o) in out.iter_mut().enumerate() {
                *o = 2.0 * radical_inverse(i, prime(1 + k)) - 1.0;
            }
            let n = math::norm(out);
            if i == 0 || n < 1e-12 {
                out.iter_mut().for_each(|o| *o = 0.0);
                out[0] = 1.0;
            } else {
                out.iter_mut().for_each(|o| *o /= n);
            }
        }
    }
}

/// Cloud of `n` points covering the closed ball of `radius` about the origin:
/// an explicit boundary shell followed by low-discrepancy interior points.
pub fn ball_cloud(dim: usize, radius: f64, n: usize) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n);
    let n_shell = match dim {
        1 => 2.min(n),
        _ => (n / 8).max(4).min(n),
    };
    if dim == 1 {
        for s in [radius, -radius].iter().take(n_shell) {
            pts.push(vec![*s]);
        }
    } else {
        for i in 0..n_shell {
            let mut d = vec![0.0; dim];
            unit_direction(i as u64, &mut d);
            d.iter_mut().for_each(|x| *x *= radius);
            pts.push(d);
        }
    }
    let mut buf = vec![0.0; dim];
    let lo = vec![-radius; dim];
    let hi = vec![radius; dim];
    let mut i = 1u64;
    while pts.len() < n {
        box_sample(i, 0, &lo, &hi, &mut buf);
        i += 1;
        if math::norm(&buf) <= radius {
            pts.push(buf.clone());
        }
    }
    pts
}
