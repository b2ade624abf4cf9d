//! Observable dynamics `dx/dt = a(x, t)`.
//!
//! The integrator is classical fixed-step RK4. Step `i` ends at `t0 + i dt`
//! (the last step is shortened to land on `t1`), so trajectories that share a
//! start time also share their time grid. Right-hand sides with a switching
//! time split any step that straddles it and evaluate each sub-step on the
//! branch active in its interior.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::field::{eval_field_into, step_count, FieldGrid};
use crate::{math, Error, Result};

/// Anything that can act as the velocity field of the observable equation.
pub trait VelocityField: Sync {
    fn dim(&self) -> usize;

    fn velocity(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()>;

    /// Evaluation inside an RK4 step whose interior midpoint is `step_mid`.
    /// Piecewise sources use it to pick the branch of the whole step.
    fn velocity_in_step(&self, x: &[f64], t: f64, _step_mid: f64, out: &mut [f64]) -> Result<()> {
        self.velocity(x, t, out)
    }

    /// Times at which the right-hand side may be discontinuous.
    fn breakpoints(&self) -> &[f64] {
        &[]
    }
}

impl VelocityField for FieldGrid {
    fn dim(&self) -> usize {
        FieldGrid::dim(self)
    }

    fn velocity(&self, x: &[f64], _t: f64, out: &mut [f64]) -> Result<()> {
        eval_field_into(self, x, out)
    }
}

pub type AnalyticFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

/// Time-ordered snapshots of a plastic field, blended linearly in time.
#[derive(Debug, Clone)]
pub struct SnapshotSeries {
    snapshots: Vec<FieldGrid>,
    times: Vec<f64>,
    hold_before: bool,
}

impl SnapshotSeries {
    /// `hold_before` freezes the field at the first snapshot for all earlier
    /// times (an artificial past).
    pub fn new(snapshots: Vec<FieldGrid>, hold_before: bool) -> Result<Self> {
        let first = snapshots.first().ok_or_else(|| Error::InvalidParameter("snapshot series is empty".into()))?;
        if let Some(bad) = snapshots.iter().find(|s| !s.same_geometry(first)) {
            return Err(Error::InvalidParameter(alloc::format!("snapshot at t = {} has a different grid", bad.t())));
        }
        let times: Vec<f64> = snapshots.iter().map(|s| s.t()).collect();
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("snapshot times must be strictly increasing".into()));
        }
        Ok(Self { snapshots, times, hold_before })
    }

    pub fn snapshots(&self) -> &[FieldGrid] {
        &self.snapshots
    }

    pub fn t_first(&self) -> f64 {
        self.times[0]
    }

    pub fn t_last(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn holds_before(&self) -> bool {
        self.hold_before
    }

    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let (t0, t1) = (self.t_first(), self.t_last());
        let slack = 1e-9 * (t1 - t0).max(1.0);
        if t < t0 - slack && !self.hold_before || t > t1 + slack || !t.is_finite() {
            return Err(Error::OutOfDomain { t, lo: if self.hold_before { f64::NEG_INFINITY } else { t0 }, hi: t1 });
        }
        if t <= t0 || self.snapshots.len() == 1 {
            return eval_field_into(&self.snapshots[0], x, out);
        }
        if t >= t1 {
            return eval_field_into(&self.snapshots[self.snapshots.len() - 1], x, out);
        }
        let j = self.times.partition_point(|s| *s <= t) - 1;
        let (ta, tb) = (self.times[j], self.times[j + 1]);
        let w = (t - ta) / (tb - ta);
        eval_field_into(&self.snapshots[j], x, out)?;
        if w == 0.0 {
            return Ok(());
        }
        let mut other = vec![0.0; out.len()];
        eval_field_into(&self.snapshots[j + 1], x, &mut other)?;
        for (o, b) in out.iter_mut().zip(&other) {
            *o = (1.0 - w) * *o + w * b;
        }
        Ok(())
    }
}

/// Right-hand side of the observable equation.
#[derive(Clone)]
pub enum RhsSource {
    Analytic {
        dim: usize,
        f: AnalyticFn,
    },
    /// `pre` for `t <= switch_time`, `post` afterwards.
    Switching {
        dim: usize,
        pre: AnalyticFn,
        post: AnalyticFn,
        switch_time: [f64; 1],
    },
    Snapshots(SnapshotSeries),
}

impl fmt::Debug for RhsSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhsSource::Analytic { dim, .. } => f.debug_struct("Analytic").field("dim", dim).finish(),
            RhsSource::Switching { dim, switch_time, .. } => {
                f.debug_struct("Switching").field("dim", dim).field("switch_time", &switch_time[0]).finish()
            }
            RhsSource::Snapshots(s) => f
                .debug_struct("Snapshots")
                .field("count", &s.snapshots.len())
                .field("t_first", &s.t_first())
                .field("t_last", &s.t_last())
                .finish(),
        }
    }
}

impl RhsSource {
    pub fn analytic<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        RhsSource::Analytic { dim, f: Arc::new(f) }
    }

    pub fn switching<F, G>(dim: usize, pre: F, post: G, switch_time: f64) -> Self
    where
        F: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
        G: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        RhsSource::Switching { dim, pre: Arc::new(pre), post: Arc::new(post), switch_time: [switch_time] }
    }

    /// `-x` up to `switch_time`, `x (1 - x^2)` componentwise afterwards.
    pub fn contraction_to_bistable(dim: usize, switch_time: f64) -> Self {
        Self::switching(
            dim,
            |x, _, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -v;
                }
            },
            |x, _, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = v * (1.0 - v * v);
                }
            },
            switch_time,
        )
    }

    pub fn snapshots(series: SnapshotSeries) -> Self {
        RhsSource::Snapshots(series)
    }
}

impl VelocityField for RhsSource {
    fn dim(&self) -> usize {
        match self {
            RhsSource::Analytic { dim, .. } | RhsSource::Switching { dim, .. } => *dim,
            RhsSource::Snapshots(s) => s.snapshots[0].dim(),
        }
    }

    fn velocity(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        self.velocity_in_step(x, t, t, out)
    }

    fn velocity_in_step(&self, x: &[f64], t: f64, step_mid: f64, out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        if x.len() != d || out.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        match self {
            RhsSource::Analytic { f, .. } => {
                f(x, t, out);
                Ok(())
            }
            RhsSource::Switching { pre, post, switch_time, .. } => {
                if step_mid <= switch_time[0] {
                    pre(x, t, out)
                } else {
                    post(x, t, out)
                }
                Ok(())
            }
            RhsSource::Snapshots(s) => s.eval(x, t, out),
        }
    }

    fn breakpoints(&self) -> &[f64] {
        match self {
            RhsSource::Switching { switch_time, .. } => switch_time,
            _ => &[],
        }
    }
}

/// The switching right-hand side: `-x` for `t <= t0`, `x (1 - x^2)` for `t > t0`.
pub fn switching_rhs(x: &[f64], t: f64, t0: f64, out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o = if t <= t0 { -v } else { v * (1.0 - v * v) };
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub scenario: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<f64>,
    dim: usize,
    pub provenance: Provenance,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

fn rk4_step<S: VelocityField + ?Sized>(
    src: &S,
    x: &mut [f64],
    ta: f64,
    tb: f64,
    scratch: &mut [Vec<f64>; 5],
) -> Result<()> {
    let h = tb - ta;
    let mid = ta + 0.5 * h;
    let n = x.len();
    let [k1, k2, k3, k4, tmp] = scratch;
    src.velocity_in_step(x, ta, mid, k1)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    src.velocity_in_step(tmp, mid, mid, k2)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    src.velocity_in_step(tmp, mid, mid, k3)?;
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    src.velocity_in_step(tmp, tb, mid, k4)?;
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

/// Core driver: integrates from `(t0, x0)` to `t1`, calling `observe` at `t0`
/// and after every step. Returns the final state.
pub fn integrate_with<S, F>(src: &S, x0: &[f64], t0: f64, t1: f64, dt: f64, mut observe: F) -> Result<Vec<f64>>
where
    S: VelocityField + ?Sized,
    F: FnMut(f64, &[f64]) -> Result<()>,
{
    let d = src.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("time step must be positive, got {dt}")));
    }
    if t1 < t0 {
        return Err(Error::InvalidParameter(alloc::format!("need t1 >= t0, got [{t0}, {t1}]")));
    }
    let mut x = x0.to_vec();
    observe(t0, &x)?;
    let n = step_count(t0, t1, dt);
    let mut scratch: [Vec<f64>; 5] = core::array::from_fn(|_| vec![0.0; d]);
    let breaks = src.breakpoints();
    let mut ta = t0;
    for i in 1..=n {
        let tb = if i == n { t1 } else { t0 + i as f64 * dt };
        let eps = 1e-12 * dt;
        let mut start = ta;
        for &b in breaks.iter().filter(|b| **b > ta + eps && **b < tb - eps) {
            step_or_exit(src, &mut x, start, b, &mut scratch)?;
            start = b;
        }
        step_or_exit(src, &mut x, start, tb, &mut scratch)?;
        if !math::all_finite(&x) {
            return Err(Error::NonFinite { what: "trajectory state".into(), t: tb });
        }
        observe(tb, &x)?;
        ta = tb;
    }
    Ok(x)
}

fn step_or_exit<S: VelocityField + ?Sized>(
    src: &S,
    x: &mut [f64],
    ta: f64,
    tb: f64,
    scratch: &mut [Vec<f64>; 5],
) -> Result<()> {
    let before = x.to_vec();
    rk4_step(src, x, ta, tb, scratch).map_err(|e| match e {
        Error::OutsideBox { .. } => Error::ExitedDomain { t: ta, state: before },
        other => other,
    })
}

/// Dense RK4 trajectory from `(t0, x0)` to `t1`.
pub fn integrate_trajectory<S: VelocityField + ?Sized>(
    src: &S,
    x0: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<Trajectory> {
    let d = src.dim();
    let mut times = Vec::new();
    let mut states = Vec::new();
    integrate_with(src, x0, t0, t1, dt, |t, x| {
        times.push(t);
        states.extend_from_slice(x);
        Ok(())
    })?;
    Ok(Trajectory { times, states, dim: d, provenance: Provenance::default() })
}

/// The process `phi(t1, t0, x0)`.
pub fn flow<S: VelocityField + ?Sized>(src: &S, x0: &[f64], t0: f64, t1: f64, dt: f64) -> Result<Vec<f64>> {
    integrate_with(src, x0, t0, t1, dt, |_, _| Ok(()))
}

/// `|a(x(t_i), t_i)|` along a trajectory.
pub fn velocity_magnitude_series<S: VelocityField + ?Sized>(traj: &Trajectory, src: &S) -> Result<Vec<f64>> {
    let mut v = vec![0.0; traj.dim()];
    (0..traj.len())
        .map(|i| {
            src.velocity(traj.state(i), traj.times()[i], &mut v)?;
            Ok(math::norm(&v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Axis;

    fn decay() -> RhsSource {
        RhsSource::analytic(1, |x, _, o| o[0] = -x[0])
    }

    #[test]
    fn linear_decay_matches_exponential() {
        let tr = integrate_trajectory(&decay(), &[1.0], 0.0, 2.0, 0.01).unwrap();
        assert_eq!(tr.len(), 201);
        assert_eq!(tr.times()[200], 2.0);
        assert!((tr.final_state()[0] - libm::exp(-2.0)).abs() < 1e-10);
    }

    #[test]
    fn zero_field_gives_constant_trajectory() {
        let src = RhsSource::analytic(2, |_, _, o| o.iter_mut().for_each(|v| *v = 0.0));
        let tr = integrate_trajectory(&src, &[0.3, -0.2], 0.0, 1.0, 0.1).unwrap();
        assert!((0..tr.len()).all(|i| tr.state(i) == [0.3, -0.2]));
    }

    #[test]
    fn initial_condition_is_reproduced_exactly() {
        assert_eq!(flow(&decay(), &[0.123], 1.5, 1.5, 0.01).unwrap(), vec![0.123]);
        assert!(flow(&decay(), &[0.1], 1.0, 0.0, 0.01).is_err());
    }

    #[test]
    fn switching_rhs_values() {
        let mut o = [0.0];
        switching_rhs(&[1.0], 1.0, 0.0, &mut o);
        assert_eq!(o[0], 0.0);
        switching_rhs(&[2.0], -1.0, 0.0, &mut o);
        assert_eq!(o[0], -2.0);
        switching_rhs(&[0.5], 1.0, 0.0, &mut o);
        assert_eq!(o[0], 0.375);
        switching_rhs(&[0.5], 0.0, 0.0, &mut o);
        assert_eq!(o[0], -0.5);
    }

    #[test]
    fn switching_source_splits_straddling_steps() {
        // Switch at 0.05 inside the first step; compare with two separate solves.
        let src = RhsSource::contraction_to_bistable(1, 0.05);
        let x = flow(&src, &[0.5], 0.0, 1.0, 0.1).unwrap();
        let pre = RhsSource::analytic(1, |x, _, o| o[0] = -x[0]);
        let post = RhsSource::analytic(1, |x, _, o| o[0] = x[0] * (1.0 - x[0] * x[0]));
        let mid = flow(&pre, &[0.5], 0.0, 0.05, 0.05).unwrap();
        let x1 = flow(&post, &mid, 0.05, 0.1, 0.05).unwrap();
        let expect = flow(&post, &x1, 0.1, 1.0, 0.1).unwrap();
        assert!((x[0] - expect[0]).abs() < 1e-15);
    }

    #[test]
    fn exiting_the_grid_is_reported() {
        let grid = FieldGrid::from_fn(vec![Axis::new(-1.0, 1.0, 11).unwrap()], 0.0, |_, o| o[0] = 1.0).unwrap();
        match integrate_trajectory(&grid, &[0.0], 0.0, 5.0, 0.01) {
            Err(Error::ExitedDomain { t, state }) => {
                assert!(t > 0.9 && t <= 1.0, "{t}");
                assert!(state[0] <= 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn snapshot_series_blends_linearly_and_holds_the_past() {
        let ax = vec![Axis::new(-1.0, 1.0, 3).unwrap()];
        let s0 = FieldGrid::from_fn(ax.clone(), 0.0, |_, o| o[0] = 1.0).unwrap();
        let s1 = FieldGrid::from_fn(ax.clone(), 1.0, |_, o| o[0] = 3.0).unwrap();
        let series = SnapshotSeries::new(vec![s0.clone(), s1.clone()], true).unwrap();
        let src = RhsSource::snapshots(series);
        let mut o = [0.0];
        src.velocity(&[0.2], 0.25, &mut o).unwrap();
        assert!((o[0] - 1.5).abs() < 1e-15);
        src.velocity(&[0.2], -7.0, &mut o).unwrap();
        assert_eq!(o[0], 1.0);
        assert!(src.velocity(&[0.2], 1.5, &mut o).is_err());
        let strict = RhsSource::snapshots(SnapshotSeries::new(vec![s0.clone(), s1.clone()], false).unwrap());
        assert!(strict.velocity(&[0.2], -0.5, &mut o).is_err());
        assert!(SnapshotSeries::new(vec![s1, s0], false).is_err());
    }

    #[test]
    fn velocity_series_of_decay() {
        let tr = integrate_trajectory(&decay(), &[1.0], 0.0, 3.0, 0.001).unwrap();
        let v = velocity_magnitude_series(&tr, &decay()).unwrap();
        for (i, vi) in v.iter().enumerate().step_by(500) {
            assert!((vi - libm::exp(-tr.times()[i])).abs() < 1e-12);
        }
    }
}
