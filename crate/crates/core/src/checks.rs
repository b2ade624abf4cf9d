//! Sampled certificates for the hypotheses on the velocity field and the
//! plasticity rule.
//!
//! Every check evaluates a scalar at deterministic low-discrepancy samples
//! over a declared compact domain and reports the worst one with its witness.
//! Sample sets are prefixes of infinite sequences, so raising the sample count
//! never lowers the reported worst value. Ties go to the lowest sample index.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::exec::Executor;
use crate::field::{evolve_field, field_gradient, gaussian_bump_grad_sup, FieldGrid, PlasticRule, TimeFactor};
use crate::sampling::{box_sample, shell_sample};
use crate::stimulus::StimulusPath;
use crate::trajectory::VelocityField;
use crate::{math, Error, Result};

/// Tolerance for identities that hold exactly in real arithmetic.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Tolerance for sampled inequalities.
pub const SAMPLED_TOL: f64 = 1e-3;

/// Growth exponents (in powers of `|a|^2`) above this count as unbounded.
pub const MAX_GROWTH_EXPONENT: f64 = 1.25;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckReport {
    pub name: String,
    pub domain: String,
    pub n_samples: usize,
    pub worst_value: f64,
    pub worst_witness: Vec<f64>,
    pub passed: bool,
    pub tolerance: f64,
    /// Named constants attached to the report, such as `r_star`, `alpha`, `beta`.
    pub parameters: Vec<(String, f64)>,
}

impl CheckReport {
    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

/// Index of the largest value; the first one wins ties. NaN counts as worst.
fn worst_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            return i;
        }
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn reduce(samples: Vec<Result<(f64, Vec<f64>)>>) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut values = Vec::with_capacity(samples.len());
    let mut witnesses = Vec::with_capacity(samples.len());
    for s in samples {
        let (v, w) = s?;
        values.push(v);
        witnesses.push(w);
    }
    Ok((values, witnesses))
}

fn require_samples(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    Ok(())
}

/// Shell point `i` of the dissipativity shell `R* <= |x| <= R* + 1`.
pub fn dissipativity_sample(i: usize, r_star: f64, dim: usize) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    shell_sample(i as u64, r_star, r_star + 1.0, &mut x);
    x
}

/// `<a(x, t), x>` at one point.
pub fn dissipativity_value<S: VelocityField + ?Sized>(src: &S, x: &[f64], t: f64) -> Result<f64> {
    let mut a = vec![0.0; x.len()];
    src.velocity(x, t, &mut a)?;
    Ok(math::dot(&a, x))
}

/// Worst `<a(x, t), x>` over `n` shell samples at each of `times`.
/// Passes iff it is at most `-1 + tol`. The witness is `(x, t)`.
pub fn check_dissipativity_a2<E, S>(
    exec: &E,
    src: &S,
    r_star: f64,
    n: usize,
    times: &[f64],
    tol: f64,
) -> Result<CheckReport>
where
    E: Executor,
    S: VelocityField + ?Sized,
{
    require_samples(n)?;
    if times.is_empty() || !(r_star >= 0.0) {
        return Err(Error::InvalidParameter("need at least one time and R* >= 0".into()));
    }
    let d = src.dim();
    let raw = exec.map(n * times.len(), |k| {
        let t = times[k / n];
        let x = dissipativity_sample(k % n, r_star, d);
        let v = dissipativity_value(src, &x, t)?;
        let mut w = x;
        w.push(t);
        Ok((v, w))
    });
    let (values, witnesses) = reduce(raw)?;
    let i = worst_index(&values);
    Ok(CheckReport {
        name: "A2".into(),
        domain: format!("shell {} <= |x| <= {} in R^{d}, {} times", r_star, r_star + 1.0, times.len()),
        n_samples: values.len(),
        worst_value: values[i],
        worst_witness: witnesses[i].clone(),
        passed: values[i] <= -1.0 + tol,
        tolerance: tol,
        parameters: vec![("r_star".into(), r_star)],
    })
}

/// Compact sampling domain for the arguments `(a, x, y, t)` of a plasticity rule.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RuleDomain {
    /// Each component of `a` ranges over `[-a_max, a_max]`.
    pub a_max: f64,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub y_lo: Vec<f64>,
    pub y_hi: Vec<f64>,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl RuleDomain {
    pub fn dim(&self) -> usize {
        self.x_lo.len()
    }

    pub fn stimulus_dim(&self) -> usize {
        self.y_lo.len()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.a_max > 0.0
            && self.x_hi.len() == self.x_lo.len()
            && self.y_hi.len() == self.y_lo.len()
            && !self.x_lo.is_empty()
            && self.x_lo.iter().zip(&self.x_hi).all(|(l, h)| l <= h)
            && self.y_lo.iter().zip(&self.y_hi).all(|(l, h)| l <= h)
            && self.t_lo <= self.t_hi;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("malformed rule sampling domain".into()))
        }
    }

    fn describe(&self) -> String {
        format!(
            "|a_i| <= {}, x in {:?}..{:?}, y in {:?}..{:?}, t in [{}, {}]",
            self.a_max, self.x_lo, self.x_hi, self.y_lo, self.y_hi, self.t_lo, self.t_hi
        )
    }

    /// Sample `i` laid out as `[a, x, y, t]`.
    pub fn sample(&self, i: usize) -> Vec<f64> {
        let d = self.dim();
        let mut lo = vec![-self.a_max; d];
        let mut hi = vec![self.a_max; d];
        lo.extend_from_slice(&self.x_lo);
        hi.extend_from_slice(&self.x_hi);
        lo.extend_from_slice(&self.y_lo);
        hi.extend_from_slice(&self.y_hi);
        lo.push(self.t_lo);
        hi.push(self.t_hi);
        let mut out = vec![0.0; lo.len()];
        box_sample(i as u64, 0, &lo, &hi, &mut out);
        out
    }

    /// Sample `i` of `(a, y, t)` with `x` on the shell `r_in <= |x| <= r_out`,
    /// laid out as `[a, x, y, t]`.
    pub fn shell_rule_sample(&self, i: usize, r_in: f64, r_out: f64) -> Vec<f64> {
        let d = self.dim();
        let m = self.stimulus_dim();
        let mut x = vec![0.0; d];
        shell_sample(i as u64, r_in, r_out, &mut x);
        let mut lo = vec![-self.a_max; d];
        let mut hi = vec![self.a_max; d];
        lo.extend_from_slice(&self.y_lo);
        hi.extend_from_slice(&self.y_hi);
        lo.push(self.t_lo);
        hi.push(self.t_hi);
        let mut rest = vec![0.0; d + m + 1];
        // Bases past those used by the shell sampler.
        box_sample(i as u64, d + 1, &lo, &hi, &mut rest);
        let mut out = Vec::with_capacity(2 * d + m + 1);
        out.extend_from_slice(&rest[..d]);
        out.extend_from_slice(&x);
        out.extend_from_slice(&rest[d..]);
        out
    }
}

/// Splits a `[a, x, y, t]` sample.
pub fn split_rule_sample(s: &[f64], d: usize) -> (&[f64], &[f64], &[f64], f64) {
    let m = s.len() - 2 * d - 1;
    (&s[..d], &s[d..2 * d], &s[2 * d..2 * d + m], s[s.len() - 1])
}

/// `<a, c(a, x, y, t)>` at a `[a, x, y, t]` sample.
pub fn growth_value(rule: &PlasticRule, s: &[f64], d: usize) -> Result<f64> {
    let (a, x, y, t) = split_rule_sample(s, d);
    let mut c = vec![0.0; d];
    rule.rate(a, x, y, t, &mut c)?;
    Ok(math::dot(a, &c))
}

/// `<c(a, x, y, t), x>` at a `[a, x, y, t]` sample.
pub fn c4_value(rule: &PlasticRule, s: &[f64], d: usize) -> Result<f64> {
    let (a, x, y, t) = split_rule_sample(s, d);
    let mut c = vec![0.0; d];
    rule.rate(a, x, y, t, &mut c)?;
    Ok(math::dot(&c, x))
}

/// Constants `(alpha, beta)` that make the potential rule satisfy the growth
/// bound: `alpha = -k/2`, `beta = (f_max sup|G|)^2 / (2k)`, with `f_max` the
/// largest time factor (`1/t_floor` or `gamma`).
pub fn potential_growth_bound(k: f64, sigma: f64, factor: &TimeFactor) -> (f64, f64) {
    let f_max = match factor {
        TimeFactor::OneOverT { t_floor } => 1.0 / t_floor,
        TimeFactor::Constant { gamma } => gamma.abs(),
    };
    let s = f_max * gaussian_bump_grad_sup(sigma);
    (-0.5 * k, s * s / (2.0 * k))
}

/// Growth bound `<a, c> <= alpha |a|^2 + beta`.
///
/// With `bound = Some((alpha, beta))` the given constants are checked: the
/// worst value is the largest residual `<a, c> - alpha |a|^2 - beta` and the
/// check passes iff it is at most `tol`.
///
/// Without a bound, constants are fitted: `alpha` is the largest
/// `<a, c> / |a|^2` over samples in the outer half of the sampled `|a|` range
/// and `beta` the smallest value making every sample satisfy the bound. The
/// fit is sufficient on the samples, not minimal. The check then fails if
/// the largest `<a, c>` grows faster than `|a|^2` raised to
/// [`MAX_GROWTH_EXPONENT`] between the inner and the full `|a|` range.
pub fn check_growth_c2<E: Executor>(
    exec: &E,
    rule: &PlasticRule,
    domain: &RuleDomain,
    n: usize,
    bound: Option<(f64, f64)>,
    tol: f64,
) -> Result<CheckReport> {
    require_samples(n)?;
    domain.validate()?;
    let d = domain.dim();
    let raw = exec.map(n, |i| {
        let s = domain.sample(i);
        let v = growth_value(rule, &s, d)?;
        Ok((v, s))
    });
    let (values, samples) = reduce(raw)?;
    let norms2: Vec<f64> = samples.iter().map(|s| math::dot(&s[..d], &s[..d])).collect();

    let max_n2 = norms2.iter().cloned().fold(0.0, f64::max);
    let inner = 0.25 * max_n2;
    let fitted_alpha = values
        .iter()
        .zip(&norms2)
        .filter(|(_, n2)| **n2 >= inner && **n2 > 0.0)
        .map(|(v, n2)| v / n2)
        .fold(f64::NEG_INFINITY, f64::max);
    let fitted_alpha = if fitted_alpha.is_finite() { fitted_alpha } else { 0.0 };
    let (alpha, beta) = match bound {
        Some(b) => b,
        None => {
            let beta =
                values.iter().zip(&norms2).map(|(v, n2)| v - fitted_alpha * n2).fold(f64::NEG_INFINITY, f64::max);
            (fitted_alpha, beta)
        }
    };
    let residuals: Vec<f64> = values.iter().zip(&norms2).map(|(v, n2)| v - alpha * n2 - beta).collect();
    let i = worst_index(&residuals);

    let max_in = |limit: f64| {
        values.iter().zip(&norms2).filter(|(_, n2)| **n2 <= limit).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max)
    };
    let (m_inner, m_all) = (max_in(inner), max_in(max_n2));
    let exponent = if m_all <= 0.0 || !(max_n2 > 0.0) {
        0.0
    } else if m_inner <= 0.0 {
        f64::INFINITY
    } else {
        math::ln(m_all / m_inner) / math::ln(4.0)
    };
    let passed = residuals[i] <= tol && (bound.is_some() || exponent <= MAX_GROWTH_EXPONENT);
    Ok(CheckReport {
        name: "C2".into(),
        domain: domain.describe(),
        n_samples: n,
        worst_value: residuals[i],
        worst_witness: samples[i].clone(),
        passed,
        tolerance: tol,
        parameters: vec![("alpha".into(), alpha), ("beta".into(), beta), ("growth_exponent".into(), exponent)],
    })
}

/// `<c(a, x, y, t), x> <= 0` for `|x| >= R*`, sampled with `x` on the shell
/// `R* <= |x| <= r_outer` and `(a, y, t)` over `domain` (its `x` box is unused).
pub fn check_c4<E: Executor>(
    exec: &E,
    rule: &PlasticRule,
    domain: &RuleDomain,
    r_star: f64,
    r_outer: f64,
    n: usize,
    tol: f64,
) -> Result<CheckReport> {
    require_samples(n)?;
    domain.validate()?;
    if !(r_star >= 0.0 && r_outer >= r_star) {
        return Err(Error::InvalidParameter(format!("need 0 <= R* <= r_outer, got {r_star} / {r_outer}")));
    }
    let d = domain.dim();
    let raw = exec.map(n, |i| {
        let s = domain.shell_rule_sample(i, r_star, r_outer);
        let v = c4_value(rule, &s, d)?;
        Ok((v, s))
    });
    let (values, samples) = reduce(raw)?;
    let i = worst_index(&values);
    Ok(CheckReport {
        name: "C4".into(),
        domain: format!("{r_star} <= |x| <= {r_outer}; {}", domain.describe()),
        n_samples: n,
        worst_value: values[i],
        worst_witness: samples[i].clone(),
        passed: values[i] <= tol,
        tolerance: tol,
        parameters: vec![("r_star".into(), r_star)],
    })
}

/// Largest entry of `|J - J^T|` at node `node`, with `J` from [`field_gradient`].
pub fn asymmetry_at(jac: &[f64], d: usize, node: usize) -> f64 {
    let j = &jac[node * d * d..(node + 1) * d * d];
    let mut worst = 0.0f64;
    for r in 0..d {
        for c in (r + 1)..d {
            worst = worst.max(math::abs(j[r * d + c] - j[c * d + r]));
        }
    }
    worst
}

/// A field is locally a gradient only if its Jacobian is symmetric. Reports
/// the worst asymmetry over interior nodes; the witness is the node position.
pub fn check_symmetry_potential(grid: &FieldGrid, tol: f64) -> Result<CheckReport> {
    let d = grid.dim();
    if d < 2 {
        return Err(Error::InvalidParameter("symmetry check needs dimension >= 2".into()));
    }
    let jac = field_gradient(grid)?;
    let mut idx = vec![0usize; d];
    let mut worst = (f64::NEG_INFINITY, 0usize);
    let mut count = 0;
    for node in 0..grid.n_nodes() {
        grid.node_multi_index(node, &mut idx);
        if idx.iter().zip(grid.axes()).any(|(i, ax)| *i == 0 || *i + 1 == ax.nodes) {
            continue;
        }
        count += 1;
        let v = asymmetry_at(&jac, d, node);
        if v > worst.0 || v.is_nan() {
            worst = (v, node);
        }
    }
    let mut witness = vec![0.0; d];
    grid.node_coords(worst.1, &mut witness);
    Ok(CheckReport {
        name: "symmetry".into(),
        domain: format!("interior nodes of grid at t = {}", grid.t()),
        n_samples: count,
        worst_value: worst.0,
        worst_witness: witness,
        passed: worst.0 <= tol,
        tolerance: tol,
        parameters: vec![("t".into(), grid.t())],
    })
}

/// Evolves `a0` to `t_end` and re-runs the dissipativity check on the field
/// at `n_times` evenly spread steps (including both ends). Passes iff every
/// check passes; the witness is `(x, t)` of the worst sample overall.
#[allow(clippy::too_many_arguments)]
pub fn check_dissipativity_preservation<E: Executor>(
    exec: &E,
    rule: &PlasticRule,
    a0: &FieldGrid,
    path: &StimulusPath,
    t_end: f64,
    dt: f64,
    r_star: f64,
    n_times: usize,
    samples: usize,
    tol: f64,
) -> Result<CheckReport> {
    if n_times < 2 {
        return Err(Error::InvalidParameter("need at least two check times".into()));
    }
    let steps = crate::field::step_count(a0.t(), t_end, dt);
    let wanted: Vec<usize> = (0..n_times).map(|j| (j * steps + (n_times - 1) / 2) / (n_times - 1)).collect();
    let mut reports = vec![check_dissipativity_a2(exec, a0, r_star, samples, &[a0.t()], tol)?];
    evolve_field(exec, a0, rule, path, t_end, dt, |i, g| {
        if wanted[1..].contains(&i) {
            reports.push(check_dissipativity_a2(exec, g, r_star, samples, &[g.t()], tol)?);
        }
        Ok(())
    })?;
    let values: Vec<f64> = reports.iter().map(|r| r.worst_value).collect();
    let i = worst_index(&values);
    let times: Vec<f64> = reports.iter().map(|r| r.worst_witness[r.worst_witness.len() - 1]).collect();
    let first_failure = reports.iter().position(|r| !r.passed).map(|j| times[j]);
    let mut parameters = vec![("r_star".into(), r_star), ("checked_times".into(), reports.len() as f64)];
    if let Some(t) = first_failure {
        parameters.push(("first_failure_t".into(), t));
    }
    Ok(CheckReport {
        name: "A2_preserved".into(),
        domain: format!("shell {} <= |x| <= {}, t in [{}, {}]", r_star, r_star + 1.0, a0.t(), t_end),
        n_samples: reports.iter().map(|r| r.n_samples).sum(),
        worst_value: values[i],
        worst_witness: reports[i].worst_witness.clone(),
        passed: first_failure.is_none(),
        tolerance: tol,
        parameters,
    })
}

/// Central-difference Jacobian of `f` at `p`, `nout * p.len()` entries, row-major.
pub fn fd_jacobian<F>(f: &F, p: &[f64], nout: usize, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let n = p.len();
    let mut jac = vec![0.0; nout * n];
    let mut q = p.to_vec();
    let mut fp = vec![0.0; nout];
    let mut fm = vec![0.0; nout];
    for j in 0..n {
        q[j] = p[j] + h;
        f(&q, &mut fp)?;
        q[j] = p[j] - h;
        f(&q, &mut fm)?;
        q[j] = p[j];
        for i in 0..nout {
            jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Finite-difference surrogate for continuity of a Jacobian: at each sample
/// point of the box `[lo, hi]` the central-difference Jacobians with steps
/// `h` and `h / 2` are compared. For a continuously differentiable map the
/// largest entry gap shrinks like `h^2`; kinks and jumps keep it of order one.
#[allow(clippy::too_many_arguments)]
pub fn check_jacobian_consistency<E, F>(
    exec: &E,
    name: &str,
    f: F,
    nout: usize,
    lo: &[f64],
    hi: &[f64],
    n: usize,
    h: f64,
    tol: f64,
) -> Result<CheckReport>
where
    E: Executor,
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync + Send,
{
    require_samples(n)?;
    if lo.len() != hi.len() || !(h > 0.0) {
        return Err(Error::InvalidParameter("need matching box bounds and a positive step".into()));
    }
    let raw = exec.map(n, |i| {
        let mut p = vec![0.0; lo.len()];
        box_sample(i as u64, 0, lo, hi, &mut p);
        let j1 = fd_jacobian(&f, &p, nout, h)?;
        let j2 = fd_jacobian(&f, &p, nout, 0.5 * h)?;
        let gap = j1.iter().zip(&j2).map(|(a, b)| math::abs(a - b)).fold(0.0, f64::max);
        Ok((gap, p))
    });
    let (values, witnesses) = reduce(raw)?;
    let i = worst_index(&values);
    Ok(CheckReport {
        name: name.to_string(),
        domain: format!("box {lo:?}..{hi:?}"),
        n_samples: n,
        worst_value: values[i],
        worst_witness: witnesses[i].clone(),
        passed: values[i] <= tol,
        tolerance: tol,
        parameters: vec![("fd_step".into(), h)],
    })
}

/// Jacobian consistency of `a -> c(a, x, y, t)` over the rule domain.
pub fn check_c1<E: Executor>(
    exec: &E,
    rule: &PlasticRule,
    domain: &RuleDomain,
    n: usize,
    h: f64,
    tol: f64,
) -> Result<CheckReport> {
    rule_jacobian_check(exec, "C1", rule, domain, n, h, tol, false)
}

/// Jacobian consistency of `x -> c(a, x, y, t)` over the rule domain.
pub fn check_c3<E: Executor>(
    exec: &E,
    rule: &PlasticRule,
    domain: &RuleDomain,
    n: usize,
    h: f64,
    tol: f64,
) -> Result<CheckReport> {
    rule_jacobian_check(exec, "C3", rule, domain, n, h, tol, true)
}

#[allow(clippy::too_many_arguments)]
fn rule_jacobian_check<E: Executor>(
    exec: &E,
    name: &str,
    rule: &PlasticRule,
    domain: &RuleDomain,
    n: usize,
    h: f64,
    tol: f64,
    wrt_x: bool,
) -> Result<CheckReport> {
    require_samples(n)?;
    domain.validate()?;
    if !(h > 0.0) {
        return Err(Error::InvalidParameter("finite-difference step must be positive".into()));
    }
    let d = domain.dim();
    let off = if wrt_x { d } else { 0 };
    let raw = exec.map(n, |i| {
        let p = domain.sample(i);
        let g = |q: &[f64], out: &mut [f64]| -> Result<()> {
            let mut full = p.clone();
            full[off..off + d].copy_from_slice(q);
            let (a, x, y, t) = split_rule_sample(&full, d);
            rule.rate(a, x, y, t, out)
        };
        let j1 = fd_jacobian(&g, &p[off..off + d], d, h)?;
        let j2 = fd_jacobian(&g, &p[off..off + d], d, 0.5 * h)?;
        let gap = j1.iter().zip(&j2).map(|(a, b)| math::abs(a - b)).fold(0.0, f64::max);
        Ok((gap, p))
    });
    let (values, witnesses) = reduce(raw)?;
    let i = worst_index(&values);
    Ok(CheckReport {
        name: name.to_string(),
        domain: domain.describe(),
        n_samples: n,
        worst_value: values[i],
        worst_witness: witnesses[i].clone(),
        passed: values[i] <= tol,
        tolerance: tol,
        parameters: vec![("fd_step".into(), h)],
    })
}

/// Compares the spatial Jacobian of the evolved field (nodal differences)
/// with the solution of the variational equation
/// `dJ/dt = grad_a c J + grad_x c`, integrated per interior node alongside
/// `a` by RK4 on the same time steps and started from the nodal Jacobian of
/// `a0`. Rule Jacobians are central differences with step `h`. Agreement
/// is limited by the grid spacing squared.
#[allow(clippy::too_many_arguments)]
pub fn check_variational_consistency<E: Executor>(
    exec: &E,
    rule: &PlasticRule,
    a0: &FieldGrid,
    path: &StimulusPath,
    t_end: f64,
    dt: f64,
    h: f64,
    tol: f64,
) -> Result<CheckReport> {
    let d = a0.dim();
    let end = evolve_field(exec, a0, rule, path, t_end, dt, |_, _| Ok(()))?;
    let j_start = field_gradient(a0)?;
    let j_end = field_gradient(&end)?;
    let t0 = a0.t();
    let steps = crate::field::step_count(t0, t_end, dt);
    let m = path.dim();
    let mut idx = vec![0usize; d];
    let interior: Vec<usize> = (0..a0.n_nodes())
        .filter(|&node| {
            a0.node_multi_index(node, &mut idx);
            idx.iter().zip(a0.axes()).all(|(i, ax)| *i > 0 && *i + 1 < ax.nodes)
        })
        .collect();
    if interior.is_empty() {
        return Err(Error::GridTooCoarse { axis: 0, nodes: a0.axes()[0].nodes, required: 3 });
    }
    let rhs = |z: &[f64], t: f64, state: &[f64], out: &mut [f64]| -> Result<()> {
        let mut y = vec![0.0; m];
        path.eval_into(t, &mut y)?;
        let (a, jac) = state.split_at(d);
        rule.rate(a, z, &y, t, &mut out[..d])?;
        let ja = fd_jacobian(&|q: &[f64], o: &mut [f64]| rule.rate(q, z, &y, t, o), a, d, h)?;
        let jx = fd_jacobian(&|q: &[f64], o: &mut [f64]| rule.rate(a, q, &y, t, o), z, d, h)?;
        for r in 0..d {
            for c in 0..d {
                let mut s = jx[r * d + c];
                for k in 0..d {
                    s += ja[r * d + k] * jac[k * d + c];
                }
                out[d + r * d + c] = s;
            }
        }
        Ok(())
    };
    let raw = exec.map(interior.len(), |k| {
        let node = interior[k];
        let mut z = vec![0.0; d];
        a0.node_coords(node, &mut z);
        let mut state = a0.node_value(node).to_vec();
        state.extend_from_slice(&j_start[node * d * d..(node + 1) * d * d]);
        let ns = state.len();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; ns], vec![0.0; ns], vec![0.0; ns], vec![0.0; ns]);
        let mut tmp = vec![0.0; ns];
        let mut t = t0;
        for i in 1..=steps {
            let t_next = if i == steps { t_end } else { t0 + i as f64 * dt };
            let hs = t_next - t;
            rhs(&z, t, &state, &mut k1)?;
            for q in 0..ns {
                tmp[q] = state[q] + 0.5 * hs * k1[q];
            }
            rhs(&z, t + 0.5 * hs, &tmp, &mut k2)?;
            for q in 0..ns {
                tmp[q] = state[q] + 0.5 * hs * k2[q];
            }
            rhs(&z, t + 0.5 * hs, &tmp, &mut k3)?;
            for q in 0..ns {
                tmp[q] = state[q] + hs * k3[q];
            }
            rhs(&z, t_next, &tmp, &mut k4)?;
            for q in 0..ns {
                state[q] += hs / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
            }
            t = t_next;
        }
        let grid_jac = &j_end[node * d * d..(node + 1) * d * d];
        let gap = state[d..].iter().zip(grid_jac).map(|(a, b)| math::abs(a - b)).fold(0.0, f64::max);
        z.push(t_end);
        Ok((gap, z))
    });
    let (values, witnesses) = reduce(raw)?;
    let i = worst_index(&values);
    Ok(CheckReport {
        name: "variational".into(),
        domain: format!("interior nodes, t in [{t0}, {t_end}]"),
        n_samples: values.len(),
        worst_value: values[i],
        worst_witness: witnesses[i].clone(),
        passed: values[i] <= tol,
        tolerance: tol,
        parameters: vec![("fd_step".into(), h)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::field::{Axis, DirectRule, PotentialRule};
    use crate::stimulus::make_scalar_path;
    use crate::trajectory::RhsSource;

    fn domain(d: usize) -> RuleDomain {
        RuleDomain {
            a_max: 4.0,
            x_lo: vec![-3.0; d],
            x_hi: vec![3.0; d],
            y_lo: vec![-1.5; d],
            y_hi: vec![1.5; d],
            t_lo: 1.0,
            t_hi: 10.0,
        }
    }

    #[test]
    fn contraction_passes_dissipativity_with_equality() {
        let src = RhsSource::analytic(2, |x, _, o| {
            o[0] = -x[0];
            o[1] = -x[1];
        });
        let r = check_dissipativity_a2(&Sequential, &src, 1.0, 64, &[0.0], IDENTITY_TOL).unwrap();
        assert_eq!(r.worst_value, -1.0);
        assert!(r.passed);
        let (x, t) = r.worst_witness.split_at(2);
        assert_eq!(dissipativity_value(&src, x, t[0]).unwrap(), r.worst_value);
    }

    #[test]
    fn expansion_fails_dissipativity() {
        let src = RhsSource::analytic(1, |x, _, o| o[0] = x[0]);
        let r = check_dissipativity_a2(&Sequential, &src, 1.0, 16, &[0.0, 1.0], IDENTITY_TOL).unwrap();
        assert!(!r.passed);
        let x = r.worst_witness[0];
        assert!((1.0..=2.0).contains(&x.abs()));
    }

    #[test]
    fn growth_fits_trivial_rules() {
        let zero = PlasticRule::Direct(DirectRule::Frozen);
        let r = check_growth_c2(&Sequential, &zero, &domain(2), 128, None, SAMPLED_TOL).unwrap();
        assert_eq!((r.parameter("alpha"), r.parameter("beta")), (Some(0.0), Some(0.0)));
        assert!(r.passed);
        let ident = PlasticRule::custom(|a, _, _, _, o| o.copy_from_slice(a));
        let r = check_growth_c2(&Sequential, &ident, &domain(2), 128, None, SAMPLED_TOL).unwrap();
        assert!((r.parameter("alpha").unwrap() - 1.0).abs() < 1e-12);
        assert!(r.parameter("beta").unwrap().abs() < 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn superquadratic_growth_is_flagged() {
        let rule = PlasticRule::custom(|a, _, _, _, o| {
            let s = crate::math::dot(a, a);
            o.iter_mut().zip(a).for_each(|(o, a)| *o = s * a);
        });
        let r = check_growth_c2(&Sequential, &rule, &domain(2), 256, None, SAMPLED_TOL).unwrap();
        assert!(!r.passed);
        assert!(r.parameter("growth_exponent").unwrap() > 1.5);
    }

    #[test]
    fn potential_rule_meets_its_growth_bound() {
        let pr = PotentialRule::new(0.5, 1.0, TimeFactor::one_over_t()).unwrap();
        let bound = potential_growth_bound(pr.k, pr.sigma, &pr.factor);
        let rule = PlasticRule::Potential(pr);
        let r = check_growth_c2(&Sequential, &rule, &domain(2), 512, Some(bound), IDENTITY_TOL).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.worst_value <= 0.0);
    }

    #[test]
    fn c4_examples() {
        let inward = PlasticRule::Direct(DirectRule::Radial { gain: -0.3, coupling: 0.0 });
        let r = check_c4(&Sequential, &inward, &domain(2), 1.0, 2.0, 64, IDENTITY_TOL).unwrap();
        assert!(r.passed);
        let outward = PlasticRule::custom(|_, x, _, _, o| o.copy_from_slice(x));
        let r = check_c4(&Sequential, &outward, &domain(2), 1.0, 2.0, 64, IDENTITY_TOL).unwrap();
        assert!(!r.passed);
        let x = &r.worst_witness[2..4];
        assert_eq!(c4_value(&outward, &r.worst_witness, 2).unwrap(), crate::math::dot(x, x));
    }

    fn axes2() -> Vec<Axis> {
        vec![Axis::new(-3.0, 3.0, 13).unwrap(), Axis::new(-3.0, 3.0, 13).unwrap()]
    }

    #[test]
    fn symmetry_examples() {
        let g = FieldGrid::from_fn(axes2(), 0.0, |z, o| {
            o[0] = -z[0];
            o[1] = -z[1];
        })
        .unwrap();
        let r = check_symmetry_potential(&g, IDENTITY_TOL).unwrap();
        assert!(r.passed && r.worst_value.abs() < 1e-12);
        let rot = FieldGrid::from_fn(axes2(), 0.0, |z, o| {
            o[0] = -z[1];
            o[1] = z[0];
        })
        .unwrap();
        let r = check_symmetry_potential(&rot, IDENTITY_TOL).unwrap();
        assert!(!r.passed);
        assert!((r.worst_value - 2.0).abs() < 1e-12);
        assert_eq!(r.n_samples, 11 * 11);
    }

    #[test]
    fn preservation_under_inward_and_outward_rules() {
        let a0 = FieldGrid::from_fn(axes2(), 0.0, |z, o| {
            o[0] = -z[0];
            o[1] = -z[1];
        })
        .unwrap();
        let path = make_scalar_path(|t| t.sin(), -1.0, 5.0, 0.01).unwrap();
        let frozen = PlasticRule::Direct(DirectRule::Frozen);
        let r = check_dissipativity_preservation(&Sequential, &frozen, &a0, &path, 2.0, 0.05, 1.0, 5, 64, SAMPLED_TOL)
            .unwrap();
        assert!(r.passed);
        let inward = PlasticRule::Direct(DirectRule::Radial { gain: -0.2, coupling: 1.0 });
        let r = check_dissipativity_preservation(&Sequential, &inward, &a0, &path, 2.0, 0.05, 1.0, 5, 64, SAMPLED_TOL)
            .unwrap();
        assert!(r.passed);
        let outward = PlasticRule::Direct(DirectRule::Radial { gain: 0.5, coupling: 0.0 });
        let r = check_dissipativity_preservation(&Sequential, &outward, &a0, &path, 2.0, 0.05, 1.0, 5, 64, SAMPLED_TOL)
            .unwrap();
        assert!(!r.passed);
        let t_fail = r.parameter("first_failure_t").unwrap();
        assert!(t_fail > 0.0 && t_fail <= 2.0);
    }

    #[test]
    fn smooth_rule_passes_jacobian_consistency() {
        let pr = PotentialRule::new(0.5, 1.0, TimeFactor::Constant { gamma: 1.0 }).unwrap();
        let rule = PlasticRule::Potential(pr);
        assert!(check_c1(&Sequential, &rule, &domain(2), 32, 1e-3, 1e-5).unwrap().passed);
        assert!(check_c3(&Sequential, &rule, &domain(2), 32, 1e-3, 1e-5).unwrap().passed);
        let r = check_jacobian_consistency(
            &Sequential,
            "kink",
            |p: &[f64], o: &mut [f64]| {
                o[0] = p[0].abs();
                Ok(())
            },
            1,
            &[-1.0],
            &[1.0],
            64,
            0.1,
            1e-5,
        );
        assert!(!r.unwrap().passed);
    }

    #[test]
    fn variational_gap_is_second_order_in_grid_spacing() {
        let pr = PotentialRule::new(0.5, 1.0, TimeFactor::Constant { gamma: 1.0 }).unwrap();
        let factor = pr.factor;
        let rule = PlasticRule::Potential(pr);
        let path = crate::stimulus::make_deterministic_path(
            |t, o| {
                o[0] = t.sin();
                o[1] = 0.5 * t.cos();
            },
            2,
            -1.0,
            5.0,
            0.01,
        )
        .unwrap();
        let gap = |nodes: usize| {
            let axes = vec![Axis::new(-3.0, 3.0, nodes).unwrap(), Axis::new(-3.0, 3.0, nodes).unwrap()];
            let a0 = FieldGrid::from_potential(axes, 0.0, factor, |z, g| {
                g.copy_from_slice(z);
                0.5 * crate::math::dot(z, z)
            })
            .unwrap();
            check_variational_consistency(&Sequential, &rule, &a0, &path, 1.0, 0.05, 1e-4, 1.0).unwrap().worst_value
        };
        let (coarse, fine) = (gap(13), gap(25));
        assert!(coarse / fine > 3.5, "{coarse} {fine}");
        assert!(fine < 0.05);
    }
}
