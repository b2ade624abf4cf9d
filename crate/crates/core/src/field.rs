//! Plastic velocity fields on uniform spatial grids.
//!
//! A [`FieldGrid`] is a snapshot of `a(z, t)` at every node `z` of a tensor
//! grid. Nodes never interact: the plasticity rule is an ODE in `a` with `z`
//! as a parameter, so stepping is a per-node RK4 update and is bitwise
//! independent of the order in which nodes are visited.
//!
//! The potential rule evolves a scalar potential `U` and its gradient
//!
//! ```text
//! dU/dt     = -k U     - g(z - eta(t))
//! d(∇U)/dt  = -k ∇U    - G(z - eta(t)),   G = ∇g
//! a         = -f(t) ∇U
//! ```
//!
//! with `g(z) = exp(-|z|^2 / sigma^2) / sqrt(2 pi sigma^2)` and `f(t)` either
//! `1/t` or a constant. The gradient is propagated as its own ODE rather than
//! differenced from `U`, which keeps it at RK4 accuracy.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::exec::{Executor, Sequential};
use crate::quadrature::{simpson_intervals, simpson_vec};
use crate::stimulus::StimulusPath;
use crate::{math, Error, Result};

/// Uniform axis with `nodes` points from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("axis must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        if nodes < 2 {
            return Err(Error::InvalidParameter(format!("axis needs at least 2 nodes, got {nodes}")));
        }
        Ok(Self { lo, hi, nodes })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }
}

/// Maps the potential gradient to the velocity field: `a = -f(t) ∇U`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum TimeFactor {
    /// `f(t) = 1/t`, only defined for `t >= t_floor > 0`.
    OneOverT { t_floor: f64 },
    /// `f(t) = gamma`.
    Constant { gamma: f64 },
}

impl TimeFactor {
    pub const DEFAULT_T_FLOOR: f64 = 1.0;

    pub fn one_over_t() -> Self {
        TimeFactor::OneOverT { t_floor: Self::DEFAULT_T_FLOOR }
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        match *self {
            TimeFactor::OneOverT { t_floor } => {
                if t < t_floor * (1.0 - 1e-12) {
                    Err(Error::OutOfDomain { t, lo: t_floor, hi: f64::INFINITY })
                } else {
                    Ok(1.0 / t)
                }
            }
            TimeFactor::Constant { gamma } => Ok(gamma),
        }
    }

    /// `f'(t) / f(t)`.
    pub fn log_derivative(&self, t: f64) -> f64 {
        match *self {
            TimeFactor::OneOverT { .. } => -1.0 / t,
            TimeFactor::Constant { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            TimeFactor::OneOverT { t_floor } if !(t_floor > 0.0) => {
                Err(Error::InvalidParameter(format!("one-over-t factor needs t_floor > 0, got {t_floor}")))
            }
            TimeFactor::Constant { gamma } if !gamma.is_finite() => {
                Err(Error::InvalidParameter("constant factor must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

/// `g(z) = (2 pi sigma^2)^(-1/2) exp(-|z|^2 / sigma^2)`.
///
/// Note the exponent uses `sigma^2`, not `2 sigma^2`: the bump is not
/// normalised to unit mass.
pub fn gaussian_bump(z: &[f64], sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let r2 = math::dot(z, z);
    math::exp(-r2 / s2) / math::sqrt(2.0 * PI * s2)
}

/// `G(z) = ∇g(z) = -2 z exp(-|z|^2 / sigma^2) / (sigma^2 sqrt(2 pi sigma^2))`.
pub fn gaussian_bump_grad(z: &[f64], sigma: f64, out: &mut [f64]) {
    let c = bump_grad_scale(z, sigma);
    for (o, zi) in out.iter_mut().zip(z) {
        *o = c * zi;
    }
}

/// The scalar `c` with `G(z) = c z`.
#[inline]
fn bump_grad_scale(z: &[f64], sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let r2 = math::dot(z, z);
    -2.0 / (s2 * math::sqrt(2.0 * PI * s2)) * math::exp(-r2 / s2)
}

/// `sup_z |G(z)| = exp(-1/2) / (sigma^2 sqrt(pi))`, attained at `|z| = sigma / sqrt(2)`.
pub fn gaussian_bump_grad_sup(sigma: f64) -> f64 {
    math::exp(-0.5) / (sigma * sigma * math::sqrt(PI))
}

/// `sup_z g(z) = g(0)`.
pub fn gaussian_bump_sup(sigma: f64) -> f64 {
    1.0 / math::sqrt(2.0 * PI * sigma * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PotentialRule {
    /// Decay rate `k >= 0`.
    pub k: f64,
    /// Width of the Gaussian bump, `sigma > 0`.
    pub sigma: f64,
    pub factor: TimeFactor,
}

impl PotentialRule {
    pub fn new(k: f64, sigma: f64, factor: TimeFactor) -> Result<Self> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!("decay rate k must be >= 0, got {k}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
        }
        factor.validate()?;
        Ok(Self { k, sigma, factor })
    }

    /// Right-hand side for the potential, `-k U - g(z - y)`.
    pub fn potential_rate(&self, u: f64, z: &[f64], y: &[f64]) -> f64 {
        let mut buf = [0.0; 8];
        let d = z.len();
        let mut heap;
        let diff: &mut [f64] = if d <= 8 {
            &mut buf[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for ((o, a), b) in diff.iter_mut().zip(z).zip(y) {
            *o = a - b;
        }
        -self.k * u - gaussian_bump(diff, self.sigma)
    }

    /// Right-hand side for the potential gradient, `-k ∇U - G(z - y)`.
    pub fn gradient_rate(&self, grad: &[f64], z: &[f64], y: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(z).zip(y) {
            *o = a - b;
        }
        let c = bump_grad_scale(out, self.sigma);
        for (o, g) in out.iter_mut().zip(grad) {
            *o = -self.k * g - c * *o;
        }
    }

    /// Velocity-space rate `c(a, z, y, t) = (f'/f - k) a + f(t) G(z - y)`.
    pub fn field_rate(&self, a: &[f64], z: &[f64], y: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        if y.len() != z.len() {
            return Err(Error::DimensionMismatch { expected: z.len(), got: y.len() });
        }
        let f = self.factor.value(t)?;
        let lam = self.factor.log_derivative(t) - self.k;
        for ((o, zi), yi) in out.iter_mut().zip(z).zip(y) {
            *o = zi - yi;
        }
        let c = bump_grad_scale(out, self.sigma);
        for (o, ai) in out.iter_mut().zip(a) {
            *o = lam * ai + f * (c * *o);
        }
        Ok(())
    }
}

/// User-supplied velocity-space rate `c(a, z, y, t)`, written into the last argument.
pub type RateFn = Arc<dyn Fn(&[f64], &[f64], &[f64], f64, &mut [f64]) + Send + Sync>;

/// Plasticity rules acting directly on the velocity field.
#[derive(Clone)]
pub enum DirectRule {
    /// `c = 0`: the field never changes.
    Frozen,
    /// `c = gain (1 + coupling |y|^2) z`. Negative `gain` keeps
    /// `<c, z> <= 0` everywhere, positive `gain` violates it everywhere.
    Radial {
        gain: f64,
        coupling: f64,
    },
    Custom(RateFn),
}

impl fmt::Debug for DirectRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirectRule::Frozen => f.write_str("Frozen"),
            DirectRule::Radial { gain, coupling } => {
                f.debug_struct("Radial").field("gain", gain).field("coupling", coupling).finish()
            }
            DirectRule::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Right-hand side `c(a, z, eta(t), t)` of the field equation.
#[derive(Debug, Clone)]
pub enum PlasticRule {
    Potential(PotentialRule),
    Direct(DirectRule),
}

impl PlasticRule {
    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        PlasticRule::Direct(DirectRule::Custom(Arc::new(f)))
    }

    pub fn as_potential(&self) -> Option<&PotentialRule> {
        match self {
            PlasticRule::Potential(p) => Some(p),
            PlasticRule::Direct(_) => None,
        }
    }

    /// Evaluates `c(a, z, y, t)` in velocity space.
    pub fn rate(&self, a: &[f64], z: &[f64], y: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        match self {
            PlasticRule::Potential(p) => p.field_rate(a, z, y, t, out),
            PlasticRule::Direct(DirectRule::Frozen) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                Ok(())
            }
            PlasticRule::Direct(DirectRule::Radial { gain, coupling }) => {
                let s = gain * (1.0 + coupling * math::dot(y, y));
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = s * zi;
                }
                Ok(())
            }
            PlasticRule::Direct(DirectRule::Custom(f)) => {
                f(a, z, y, t, out);
                Ok(())
            }
        }
    }
}

/// Potential values and gradients carried by grids evolved under [`PotentialRule`].
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialState {
    /// One value per node.
    pub u: Vec<f64>,
    /// `d` values per node.
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    t: f64,
    a: Vec<f64>,
    potential: Option<PotentialState>,
}

impl FieldGrid {
    /// Builds a grid from flattened node values in row-major order (last axis fastest).
    pub fn new(axes: Vec<Axis>, t: f64, a: Vec<f64>, potential: Option<PotentialState>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidParameter("grid needs at least one axis".into()));
        }
        for ax in &axes {
            Axis::new(ax.lo, ax.hi, ax.nodes)?;
        }
        let d = axes.len();
        let mut strides = vec![1usize; d];
        for k in (0..d - 1).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].nodes;
        }
        let n = strides[0] * axes[0].nodes;
        if a.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, got: a.len() });
        }
        if !math::all_finite(&a) {
            return Err(Error::NonFinite { what: "field values".into(), t });
        }
        if let Some(p) = &potential {
            if p.u.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: p.u.len() });
            }
            if p.grad.len() != n * d {
                return Err(Error::DimensionMismatch { expected: n * d, got: p.grad.len() });
            }
            if !math::all_finite(&p.u) || !math::all_finite(&p.grad) {
                return Err(Error::NonFinite { what: "potential values".into(), t });
            }
        }
        Ok(Self { axes, strides, t, a, potential })
    }

    /// Samples `f(z, out)` at every node.
    pub fn from_fn<F: FnMut(&[f64], &mut [f64])>(axes: Vec<Axis>, t: f64, mut f: F) -> Result<Self> {
        let skeleton = Self::new(axes.clone(), t, vec![0.0; count(&axes) * axes.len()], None)?;
        let d = skeleton.dim();
        let mut a = vec![0.0; skeleton.n_nodes() * d];
        let mut z = vec![0.0; d];
        for (i, chunk) in a.chunks_mut(d).enumerate() {
            skeleton.node_coords(i, &mut z);
            f(&z, chunk);
        }
        Self::new(axes, t, a, None)
    }

    /// Samples a potential `f(z, grad_out) -> U` at every node and maps it to
    /// the field `a = -factor(t) ∇U`.
    pub fn from_potential<F>(axes: Vec<Axis>, t: f64, factor: TimeFactor, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64], &mut [f64]) -> f64,
    {
        let skeleton = Self::new(axes.clone(), t, vec![0.0; count(&axes) * axes.len()], None)?;
        let d = skeleton.dim();
        let n = skeleton.n_nodes();
        let fac = factor.value(t)?;
        let mut u = vec![0.0; n];
        let mut grad = vec![0.0; n * d];
        let mut z = vec![0.0; d];
        for i in 0..n {
            skeleton.node_coords(i, &mut z);
            u[i] = f(&z, &mut grad[i * d..(i + 1) * d]);
        }
        let a = grad.iter().map(|g| -fac * g).collect();
        Self::new(axes, t, a, Some(PotentialState { u, grad }))
    }

    /// Potential and gradient at time `t` from the pullback-limit integrals.
    pub fn from_pullback_limit(
        axes: Vec<Axis>,
        t: f64,
        rule: &PotentialRule,
        path: &StimulusPath,
        horizon: f64,
    ) -> Result<Self> {
        let mut err = None;
        let grid = Self::from_potential(axes, t, rule.factor, |z, grad| {
            let res = pullback_limit_grad(z, t, rule.k, rule.sigma, path, horizon)
                .and_then(|g| pullback_limit_potential(z, t, rule.k, rule.sigma, path, horizon).map(|u| (g, u)));
            match res {
                Ok((g, u)) => {
                    grad.copy_from_slice(&g.value);
                    u.value[0]
                }
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok(grid),
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.a.len() / self.dim()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn a_values(&self) -> &[f64] {
        &self.a
    }

    pub fn potential(&self) -> Option<&PotentialState> {
        self.potential.as_ref()
    }

    pub fn node_value(&self, node: usize) -> &[f64] {
        let d = self.dim();
        &self.a[node * d..(node + 1) * d]
    }

    pub fn node_multi_index(&self, mut node: usize, out: &mut [usize]) {
        for (o, s) in out.iter_mut().zip(&self.strides) {
            *o = node / s;
            node %= s;
        }
    }

    pub fn node_coords(&self, node: usize, out: &mut [f64]) {
        let mut rem = node;
        for ((o, s), ax) in out.iter_mut().zip(&self.strides).zip(&self.axes) {
            *o = ax.coord(rem / s);
            rem %= s;
        }
    }

    pub fn lower(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.hi).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.axes).all(|(xi, ax)| {
                let slack = 1e-12 * (ax.hi - ax.lo);
                *xi >= ax.lo - slack && *xi <= ax.hi + slack
            })
    }

    /// True when both grids share the same geometry.
    pub fn same_geometry(&self, other: &FieldGrid) -> bool {
        self.axes == other.axes
    }

    /// Largest gap between the stored potential gradient and a second-order
    /// finite-difference gradient of the stored potential.
    pub fn potential_consistency(&self) -> Option<f64> {
        let p = self.potential.as_ref()?;
        let fd = nodal_gradient(self, &p.u, 1).ok()?;
        Some(fd.iter().zip(&p.grad).fold(0.0f64, |m, (a, b)| m.max(math::abs(a - b))))
    }

    pub(crate) fn with_values(&self, t: f64, a: Vec<f64>, potential: Option<PotentialState>) -> Self {
        Self { axes: self.axes.clone(), strides: self.strides.clone(), t, a, potential }
    }
}

fn count(axes: &[Axis]) -> usize {
    axes.iter().map(|a| a.nodes).product()
}

/// Multilinear interpolation of the field at `x`.
pub fn eval_field(grid: &FieldGrid, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; grid.dim()];
    eval_field_into(grid, x, &mut out)?;
    Ok(out)
}

/// Allocation-light variant of [`eval_field`]; supports up to 16 dimensions.
pub fn eval_field_into(grid: &FieldGrid, x: &[f64], out: &mut [f64]) -> Result<()> {
    let d = grid.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    if d > 16 {
        return Err(Error::InvalidParameter("interpolation supports at most 16 dimensions".into()));
    }
    if !grid.contains(x) || !math::all_finite(x) {
        return Err(Error::OutsideBox { x: x.to_vec(), lo: grid.lower(), hi: grid.upper() });
    }
    let mut base = [0usize; 16];
    let mut w = [0.0f64; 16];
    for (k, ax) in grid.axes.iter().enumerate() {
        let s = ((x[k] - ax.lo) / ax.spacing()).clamp(0.0, (ax.nodes - 1) as f64);
        let r = math::round(s);
        let (i, wk) = if math::abs(s - r) <= 1e-12 {
            let r = r as usize;
            if r + 1 >= ax.nodes {
                (ax.nodes - 2, 1.0)
            } else {
                (r, 0.0)
            }
        } else {
            let i = (math::floor(s) as usize).min(ax.nodes - 2);
            (i, s - i as f64)
        };
        base[k] = i;
        w[k] = wk;
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    for corner in 0..(1usize << d) {
        let mut weight = 1.0;
        let mut node = 0;
        for k in 0..d {
            let hi = (corner >> (d - 1 - k)) & 1 == 1;
            weight *= if hi { w[k] } else { 1.0 - w[k] };
            node += (base[k] + hi as usize) * grid.strides[k];
        }
        if weight == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(grid.node_value(node)) {
            *o += weight * v;
        }
    }
    Ok(())
}

/// Finite-difference Jacobian of a nodal field with `ncomp` components per node.
///
/// Output holds `ncomp * d` entries per node; entry `(i, j)` is `∂v_i/∂x_j`.
/// Central differences inside, one-sided second-order stencils on the boundary.
pub fn nodal_gradient(grid: &FieldGrid, values: &[f64], ncomp: usize) -> Result<Vec<f64>> {
    let d = grid.dim();
    for (k, ax) in grid.axes.iter().enumerate() {
        if ax.nodes < 3 {
            return Err(Error::GridTooCoarse { axis: k, nodes: ax.nodes, required: 3 });
        }
    }
    let n = grid.n_nodes();
    if values.len() != n * ncomp {
        return Err(Error::DimensionMismatch { expected: n * ncomp, got: values.len() });
    }
    let mut out = vec![0.0; n * ncomp * d];
    let mut idx = vec![0usize; d];
    for node in 0..n {
        grid.node_multi_index(node, &mut idx);
        for j in 0..d {
            let h = grid.axes[j].spacing();
            let s = grid.strides[j];
            let nj = grid.axes[j].nodes;
            let v = |m: usize, c: usize| values[m * ncomp + c];
            for c in 0..ncomp {
                let deriv = if idx[j] == 0 {
                    (-3.0 * v(node, c) + 4.0 * v(node + s, c) - v(node + 2 * s, c)) / (2.0 * h)
                } else if idx[j] == nj - 1 {
                    (3.0 * v(node, c) - 4.0 * v(node - s, c) + v(node - 2 * s, c)) / (2.0 * h)
                } else {
                    (v(node + s, c) - v(node - s, c)) / (2.0 * h)
                };
                out[node * ncomp * d + c * d + j] = deriv;
            }
        }
    }
    Ok(out)
}

/// Jacobian `∇ₓa` at every node, `d * d` entries per node in row-major order.
pub fn field_gradient(grid: &FieldGrid) -> Result<Vec<f64>> {
    nodal_gradient(grid, &grid.a, grid.dim())
}

/// Quantities shared by every node during one field step.
#[derive(Debug, Clone)]
pub struct StepContext<'a> {
    rule: &'a PlasticRule,
    t: f64,
    t_next: f64,
    y0: Vec<f64>,
    y_mid: Vec<f64>,
    y1: Vec<f64>,
    factor_next: f64,
}

/// Result of advancing one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeUpdate {
    pub a: Vec<f64>,
    pub u: Option<f64>,
    pub grad: Option<Vec<f64>>,
}

impl<'a> StepContext<'a> {
    pub fn new(grid: &FieldGrid, rule: &'a PlasticRule, path: &StimulusPath, t_next: f64) -> Result<Self> {
        let t = grid.t;
        let h = t_next - t;
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("field step must be positive, got {h}")));
        }
        if !path.covers(t, t_next) {
            let bad = if t < path.t_min() { t } else { t_next };
            return Err(Error::OutOfDomain { t: bad, lo: path.t_min(), hi: path.t_max() });
        }
        let factor_next = match rule {
            PlasticRule::Potential(p) => {
                if grid.potential.is_none() {
                    return Err(Error::InvalidParameter("potential rule needs a grid carrying a potential".into()));
                }
                if path.dim() != grid.dim() {
                    return Err(Error::DimensionMismatch { expected: grid.dim(), got: path.dim() });
                }
                p.factor.value(t_next)?
            }
            PlasticRule::Direct(_) => 1.0,
        };
        Ok(Self {
            rule,
            t,
            t_next,
            y0: path.eval(t)?,
            y_mid: path.eval(t + 0.5 * h)?,
            y1: path.eval(t_next)?,
            factor_next,
        })
    }

    /// One classical RK4 step for a single node.
    pub fn step_node(&self, grid: &FieldGrid, node: usize) -> Result<NodeUpdate> {
        let d = grid.dim();
        let h = self.t_next - self.t;
        let mut z = vec![0.0; d];
        grid.node_coords(node, &mut z);
        let t_mid = self.t + 0.5 * h;
        let non_finite = || Error::NonFinite { what: format!("field node {node}"), t: self.t_next };
        match self.rule {
            PlasticRule::Potential(p) => {
                let pot = grid.potential.as_ref().expect("checked in StepContext::new");
                let u0 = pot.u[node];
                let g0 = &pot.grad[node * d..(node + 1) * d];
                let u = rk4_scalar(u0, h, |u, stage| p.potential_rate(u, &z, self.stage_y(stage)));
                let grad = rk4_vec(g0, h, |g, stage, out| {
                    p.gradient_rate(g, &z, self.stage_y(stage), out);
                    Ok(())
                })?;
                let a: Vec<f64> = grad.iter().map(|g| -self.factor_next * g).collect();
                if !u.is_finite() || !math::all_finite(&grad) || !math::all_finite(&a) {
                    return Err(non_finite());
                }
                Ok(NodeUpdate { a, u: Some(u), grad: Some(grad) })
            }
            PlasticRule::Direct(_) => {
                let times = [self.t, t_mid, t_mid, self.t_next];
                let a = rk4_vec(grid.node_value(node), h, |a, stage, out| {
                    self.rule.rate(a, &z, self.stage_y(stage), times[stage], out)
                })?;
                if !math::all_finite(&a) {
                    return Err(non_finite());
                }
                Ok(NodeUpdate { a, u: None, grad: None })
            }
        }
    }

    fn stage_y(&self, stage: usize) -> &[f64] {
        match stage {
            0 => &self.y0,
            3 => &self.y1,
            _ => &self.y_mid,
        }
    }

    /// Collects per-node updates (in node order) into the next snapshot.
    pub fn assemble(&self, grid: &FieldGrid, updates: Vec<NodeUpdate>) -> Result<FieldGrid> {
        let d = grid.dim();
        let n = grid.n_nodes();
        if updates.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: updates.len() });
        }
        let mut a = Vec::with_capacity(n * d);
        let has_pot = matches!(self.rule, PlasticRule::Potential(_));
        let mut u = Vec::with_capacity(if has_pot { n } else { 0 });
        let mut grad = Vec::with_capacity(if has_pot { n * d } else { 0 });
        for up in updates {
            a.extend_from_slice(&up.a);
            if let (Some(uv), Some(gv)) = (up.u, up.grad) {
                u.push(uv);
                grad.extend_from_slice(&gv);
            }
        }
        let potential = if has_pot { Some(PotentialState { u, grad }) } else { grid.potential.clone() };
        Ok(grid.with_values(self.t_next, a, potential))
    }
}

fn rk4_scalar<F: Fn(f64, usize) -> f64>(y: f64, h: f64, f: F) -> f64 {
    let k1 = f(y, 0);
    let k2 = f(y + 0.5 * h * k1, 1);
    let k3 = f(y + 0.5 * h * k2, 2);
    let k4 = f(y + h * k3, 3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn rk4_vec<F>(y: &[f64], h: f64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], usize, &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let mut buf = vec![0.0; 5 * n];
    let (k1, rest) = buf.split_at_mut(n);
    let (k2, rest) = rest.split_at_mut(n);
    let (k3, rest) = rest.split_at_mut(n);
    let (k4, tmp) = rest.split_at_mut(n);
    f(y, 0, k1)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(tmp, 1, k2)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f(tmp, 2, k3)?;
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(tmp, 3, k4)?;
    Ok((0..n).map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Advances every node by one RK4 step of size `dt`.
pub fn step_field(grid: &FieldGrid, rule: &PlasticRule, path: &StimulusPath, dt: f64) -> Result<FieldGrid> {
    advance_field(&Sequential, grid, rule, path, grid.t + dt)
}

/// Advances every node by one RK4 step ending exactly at `t_next`, spreading
/// nodes over `exec`. Results are identical for every executor.
pub fn advance_field<E: Executor>(
    exec: &E,
    grid: &FieldGrid,
    rule: &PlasticRule,
    path: &StimulusPath,
    t_next: f64,
) -> Result<FieldGrid> {
    let ctx = StepContext::new(grid, rule, path, t_next)?;
    let updates = exec.map(grid.n_nodes(), |node| ctx.step_node(grid, node));
    let updates = updates.into_iter().collect::<Result<Vec<_>>>()?;
    ctx.assemble(grid, updates)
}

/// Evolves `grid` to `t_end` with steps of `dt` (the last step is shortened to
/// land on `t_end`). Step `i` ends at `t0 + i * dt`, computed without
/// accumulating rounding. `on_step` sees every new snapshot.
pub fn evolve_field<E, F>(
    exec: &E,
    grid: &FieldGrid,
    rule: &PlasticRule,
    path: &StimulusPath,
    t_end: f64,
    dt: f64,
    mut on_step: F,
) -> Result<FieldGrid>
where
    E: Executor,
    F: FnMut(usize, &FieldGrid) -> Result<()>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("field step must be positive, got {dt}")));
    }
    let t0 = grid.t;
    let n = step_count(t0, t_end, dt);
    let mut cur = grid.clone();
    for i in 1..=n {
        let t_next = if i == n { t_end } else { t0 + i as f64 * dt };
        cur = advance_field(exec, &cur, rule, path, t_next)?;
        on_step(i, &cur)?;
    }
    Ok(cur)
}

/// Number of fixed steps of (at most) `dt` needed to go from `t0` to `t1`.
pub fn step_count(t0: f64, t1: f64, dt: f64) -> usize {
    if t1 <= t0 {
        0
    } else {
        math::ceil((t1 - t0) / dt - 1e-9).max(1.0) as usize
    }
}

/// Explicit solution of the gradient equation,
/// `∇U(z, t) = ∇U(z, t0) e^{-k (t - t0)} - ∫_{t0}^{t} e^{-k (t - s)} G(z - eta(s)) ds`,
/// with the integral evaluated by composite Simpson at half the stimulus spacing.
pub fn closed_form_grad_solution(
    z: &[f64],
    t: f64,
    t0: f64,
    grad_u0: &[f64],
    k: f64,
    sigma: f64,
    path: &StimulusPath,
) -> Result<Vec<f64>> {
    if t < t0 {
        return Err(Error::InvalidParameter(format!("need t >= t0, got t = {t}, t0 = {t0}")));
    }
    if path.dim() != z.len() || grad_u0.len() != z.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: path.dim() });
    }
    if !path.covers(t0, t) {
        let bad = if t0 < path.t_min() { t0 } else { t };
        return Err(Error::OutOfDomain { t: bad, lo: path.t_min(), hi: path.t_max() });
    }
    let decay = math::exp(-k * (t - t0));
    let mut out: Vec<f64> = grad_u0.iter().map(|g| g * decay).collect();
    if t == t0 {
        out.copy_from_slice(grad_u0);
        return Ok(out);
    }
    let integral = forced_integral(z, t, t0, k, sigma, path, true)?;
    for (o, i) in out.iter_mut().zip(integral) {
        *o -= i;
    }
    Ok(out)
}

/// `∫_{t0}^{t} e^{-k (t - s)} F(z - eta(s)) ds` with `F = G` (gradient) or `F = g`.
fn forced_integral(
    z: &[f64],
    t: f64,
    t0: f64,
    k: f64,
    sigma: f64,
    path: &StimulusPath,
    gradient: bool,
) -> Result<Vec<f64>> {
    let d = z.len();
    // Half the stimulus spacing keeps every Simpson panel inside one linear
    // piece of the path, so kinks at the nodes cost no accuracy.
    let n = simpson_intervals(t0, t, 0.5 * path.dt());
    let mut y = vec![0.0; path.dim()];
    let mut diff = vec![0.0; d];
    let dim = if gradient { d } else { 1 };
    simpson_vec(
        |s, out| {
            path.eval_into(s, &mut y)?;
            for ((o, a), b) in diff.iter_mut().zip(z).zip(&y) {
                *o = a - b;
            }
            let w = math::exp(-k * (t - s));
            if gradient {
                gaussian_bump_grad(&diff, sigma, out);
                out.iter_mut().for_each(|o| *o *= w);
            } else {
                out[0] = w * gaussian_bump(&diff, sigma);
            }
            Ok(())
        },
        dim,
        t0,
        t,
        n,
    )
}

/// Truncated pullback limit together with its truncation bound.
#[derive(Debug, Clone, PartialEq)]
pub struct PullbackValue {
    pub value: Vec<f64>,
    /// `e^{-k horizon} * sup|integrand| / k`.
    pub truncation_bound: f64,
}

fn pullback_window(t: f64, k: f64, path: &StimulusPath, horizon: f64) -> Result<()> {
    if !(k > 0.0) {
        return Err(Error::NoPullbackLimit { k });
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    if !path.covers(t - horizon, t) {
        let bad = if t - horizon < path.t_min() { t - horizon } else { t };
        return Err(Error::OutOfDomain { t: bad, lo: path.t_min(), hi: path.t_max() });
    }
    Ok(())
}

/// Pullback-limit gradient `∇Ū(z, t) = -∫_{-∞}^{t} e^{-k (t - s)} G(z - eta(s)) ds`,
/// truncated to `[t - horizon, t]`.
pub fn pullback_limit_grad(
    z: &[f64],
    t: f64,
    k: f64,
    sigma: f64,
    path: &StimulusPath,
    horizon: f64,
) -> Result<PullbackValue> {
    pullback_window(t, k, path, horizon)?;
    if path.dim() != z.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: path.dim() });
    }
    let mut value = forced_integral(z, t, t - horizon, k, sigma, path, true)?;
    value.iter_mut().for_each(|v| *v = -*v);
    let truncation_bound = math::exp(-k * horizon) * gaussian_bump_grad_sup(sigma) / k;
    Ok(PullbackValue { value, truncation_bound })
}

/// Pullback-limit potential `Ū(z, t) = -∫_{-∞}^{t} e^{-k (t - s)} g(z - eta(s)) ds`.
pub fn pullback_limit_potential(
    z: &[f64],
    t: f64,
    k: f64,
    sigma: f64,
    path: &StimulusPath,
    horizon: f64,
) -> Result<PullbackValue> {
    pullback_window(t, k, path, horizon)?;
    if path.dim() != z.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: path.dim() });
    }
    let mut value = forced_integral(z, t, t - horizon, k, sigma, path, false)?;
    value[0] = -value[0];
    let truncation_bound = math::exp(-k * horizon) * gaussian_bump_sup(sigma) / k;
    Ok(PullbackValue { value, truncation_bound })
}
