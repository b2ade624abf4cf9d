//! Stimulus signals sampled on a finite two-sided time grid.
//!
//! A [`StimulusPath`] stores node values `eta(t_min + i * dt)` and evaluates
//! between nodes by piecewise-linear (default) or piecewise-constant rules.
//! Paths are immutable once built and can be shared freely across threads.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{math, Error, Result};

/// Relative slack (in units of `dt`) tolerated at the ends of the domain and
/// when snapping evaluation times onto grid nodes.
const NODE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Interpolation {
    #[default]
    PiecewiseLinear,
    PiecewiseConstant,
}

/// Number of nodes of the grid `t_min, t_min + dt, ..., t_max`.
pub fn grid_len(t_min: f64, t_max: f64, dt: f64) -> usize {
    math::round((t_max - t_min) / dt) as usize + 1
}

fn validate_grid(t_min: f64, t_max: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    if !(t_min < t_max) || !t_min.is_finite() || !t_max.is_finite() {
        return Err(Error::InvalidParameter(format!("time window must satisfy t_min < t_max, got [{t_min}, {t_max}]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusPath {
    t_min: f64,
    t_max: f64,
    dt: f64,
    dim: usize,
    values: Vec<f64>,
    interpolation: Interpolation,
    seed: Option<u64>,
}

impl StimulusPath {
    /// Builds a path from flattened node values (`dim` entries per node).
    pub fn from_values(
        t_min: f64,
        t_max: f64,
        dt: f64,
        dim: usize,
        values: Vec<f64>,
        interpolation: Interpolation,
        seed: Option<u64>,
    ) -> Result<Self> {
        validate_grid(t_min, t_max, dt)?;
        if dim == 0 {
            return Err(Error::InvalidParameter("stimulus dimension must be at least 1".into()));
        }
        let n = grid_len(t_min, t_max, dt);
        if values.len() != n * dim {
            return Err(Error::DimensionMismatch { expected: n * dim, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "stimulus value".into(), t: t_min + (i / dim) as f64 * dt });
        }
        Ok(Self { t_min, t_max, dt, dim, values, interpolation, seed })
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Stimulus dimension `m`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn node_time(&self, i: usize) -> f64 {
        self.t_min + i as f64 * self.dt
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when `[a, b]` lies inside the path's domain.
    pub fn covers(&self, a: f64, b: f64) -> bool {
        let slack = NODE_SLACK * self.dt;
        a >= self.t_min - slack && b <= self.t_max + slack
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: out.len() });
        }
        if !self.covers(t, t) || !t.is_finite() {
            return Err(Error::OutOfDomain { t, lo: self.t_min, hi: self.t_max });
        }
        let n = self.len();
        let s = ((t - self.t_min) / self.dt).max(0.0);
        let nearest = math::round(s);
        if math::abs(s - nearest) <= NODE_SLACK {
            let i = (nearest as usize).min(n - 1);
            out.copy_from_slice(self.node(i));
            return Ok(());
        }
        let i = (math::floor(s) as usize).min(n - 2);
        match self.interpolation {
            Interpolation::PiecewiseConstant => out.copy_from_slice(self.node(i)),
            Interpolation::PiecewiseLinear => {
                let w = s - i as f64;
                let (lo, hi) = (self.node(i), self.node(i + 1));
                for ((o, a), b) in out.iter_mut().zip(lo).zip(hi) {
                    *o = (1.0 - w) * a + w * b;
                }
            }
        }
        Ok(())
    }

    /// Largest `|eta_k|` over all nodes and components.
    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)))
    }

    /// Componentwise range `(min, max)` of the node values.
    pub fn range(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|k| {
                self.values
                    .iter()
                    .skip(k)
                    .step_by(self.dim)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
            })
            .collect()
    }
}

/// Samples `f` at every grid node. `f(t, out)` writes the `dim` components.
pub fn make_deterministic_path<F>(mut f: F, dim: usize, t_min: f64, t_max: f64, dt: f64) -> Result<StimulusPath>
where
    F: FnMut(f64, &mut [f64]),
{
    validate_grid(t_min, t_max, dt)?;
    let n = grid_len(t_min, t_max, dt);
    let mut values = vec![0.0; n * dim];
    for (i, chunk) in values.chunks_mut(dim).enumerate() {
        let t = t_min + i as f64 * dt;
        f(t, chunk);
        if !math::all_finite(chunk) {
            return Err(Error::NonFinite { what: "stimulus function output".into(), t });
        }
    }
    StimulusPath::from_values(t_min, t_max, dt, dim, values, Interpolation::PiecewiseLinear, None)
}

/// Scalar convenience wrapper around [`make_deterministic_path`].
pub fn make_scalar_path<F: Fn(f64) -> f64>(f: F, t_min: f64, t_max: f64, dt: f64) -> Result<StimulusPath> {
    make_deterministic_path(|t, out| out[0] = f(t), 1, t_min, t_max, dt)
}

/// Drift `h(u)` of the scalar stimulus SDE `d eta = h(eta) dt + sigma dW`.
#[derive(Clone)]
pub enum Drift {
    /// `gain * (u - u^3)`; `gain = 0.6` gives `h(u) = 3 (u - u^3) / 5`.
    Cubic {
        gain: f64,
    },
    /// Ornstein-Uhlenbeck drift `-rate * u`.
    Linear {
        rate: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Drift {
    /// The double-well drift `h(u) = 3 (u - u^3) / 5`.
    pub fn double_well() -> Self {
        Drift::Cubic { gain: 0.6 }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Drift::Cubic { gain } => gain * (u - u * u * u),
            Drift::Linear { rate } => -rate * u,
            Drift::Custom(f) => f(u),
        }
    }
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Cubic { gain } => f.debug_struct("Cubic").field("gain", gain).finish(),
            Drift::Linear { rate } => f.debug_struct("Linear").field("rate", rate).finish(),
            Drift::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdeSpec {
    pub drift: Drift,
    /// Constant diffusion coefficient `sigma_W >= 0`.
    pub diffusion: f64,
    /// Value at `t_min`.
    pub eta0: f64,
    /// Escape bound; exceeding `|eta| > guard` aborts the simulation.
    pub guard: f64,
}

impl SdeSpec {
    pub const DEFAULT_GUARD: f64 = 1e6;

    pub fn new(drift: Drift, diffusion: f64, eta0: f64) -> Result<Self> {
        if !(diffusion >= 0.0) || !diffusion.is_finite() {
            return Err(Error::InvalidParameter(format!("diffusion must be >= 0, got {diffusion}")));
        }
        if !eta0.is_finite() {
            return Err(Error::InvalidParameter("eta0 must be finite".into()));
        }
        Ok(Self { drift, diffusion, eta0, guard: Self::DEFAULT_GUARD })
    }

    pub fn with_guard(mut self, guard: f64) -> Self {
        self.guard = guard;
        self
    }
}

/// Standard normal increment number `i` for `seed`.
///
/// Each increment is drawn from its own block of the ChaCha8 keystream, so
/// the value depends only on `(seed, i)` and never on evaluation order.
pub fn gaussian_increment(seed: u64, i: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(u128::from(i) * 16);
    rng.sample(StandardNormal)
}

/// Euler-Maruyama sample path of `d eta = h(eta) dt + sigma dW` on the grid
/// `[t_min, t_max]` with step `dt`, started from `spec.eta0` at `t_min`.
pub fn simulate_sde_path(spec: &SdeSpec, t_min: f64, t_max: f64, dt: f64, seed: u64) -> Result<StimulusPath> {
    validate_grid(t_min, t_max, dt)?;
    let n = grid_len(t_min, t_max, dt);
    let sqrt_dt = math::sqrt(dt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n);
    let mut eta = spec.eta0;
    values.push(eta);
    for i in 0..n - 1 {
        let noise = if spec.diffusion > 0.0 {
            rng.set_word_pos(i as u128 * 16);
            let xi: f64 = rng.sample(StandardNormal);
            spec.diffusion * sqrt_dt * xi
        } else {
            0.0
        };
        eta = eta + spec.drift.eval(eta) * dt + noise;
        if !eta.is_finite() || math::abs(eta) > spec.guard {
            return Err(Error::BlowUp { t: t_min + (i + 1) as f64 * dt, bound: spec.guard });
        }
        values.push(eta);
    }
    StimulusPath::from_values(t_min, t_max, dt, 1, values, Interpolation::PiecewiseLinear, Some(seed))
}
