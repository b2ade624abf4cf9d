//! Numerical pullback attractors and forward limit sets.
//!
//! Sets are finite point clouds together with the minimal cover of
//! `box_size`-sized grid boxes. The nested intersection over start times that
//! defines a pullback attractor component is realised as convergence (in
//! Hausdorff distance) of the clouds obtained by flowing the absorbing ball
//! forward from ever earlier start times. Convergence is declared once two
//! consecutive gaps are at most `eps`; that rule is a heuristic, not a bound.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::exec::Executor;
use crate::sampling::ball_cloud;
use crate::trajectory::{integrate_with, VelocityField};
use crate::{math, Error, Result};

pub type Point = Vec<f64>;

fn check_nonempty(a: &[Point], b: &[Point]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(())
}

/// `sup_{x in a} inf_{y in b} |x - y|`.
///
/// Points of `b` are sorted by their first coordinate; each query scans
/// outwards from its insertion position and stops once the first-coordinate
/// gap alone exceeds the best distance found. Queries whose nearest neighbour
/// is already closer than the running maximum are cut short.
pub fn directed_hausdorff(a: &[Point], b: &[Point]) -> Result<f64> {
    check_nonempty(a, b)?;
    let mut order: Vec<usize> = (0..b.len()).collect();
    order.sort_by(|&i, &j| b[i][0].total_cmp(&b[j][0]));
    let keys: Vec<f64> = order.iter().map(|&i| b[i][0]).collect();
    let mut worst2 = 0.0f64;
    for p in a {
        let pos = keys.partition_point(|k| *k < p[0]);
        let mut best2 = f64::INFINITY;
        let (mut lo, mut hi) = (pos, pos);
        loop {
            let left_gap = if lo > 0 { p[0] - keys[lo - 1] } else { f64::INFINITY };
            let right_gap = if hi < keys.len() { keys[hi] - p[0] } else { f64::INFINITY };
            let (gap, take_left) = if left_gap <= right_gap { (left_gap, true) } else { (right_gap, false) };
            if gap == f64::INFINITY || gap * gap >= best2 {
                break;
            }
            let idx = if take_left {
                lo -= 1;
                order[lo]
            } else {
                hi += 1;
                order[hi - 1]
            };
            let d2: f64 = p.iter().zip(&b[idx]).map(|(x, y)| (x - y) * (x - y)).sum();
            if d2 < best2 {
                best2 = d2;
                if best2 <= worst2 {
                    break;
                }
            }
        }
        if best2 > worst2 {
            worst2 = best2;
        }
    }
    Ok(math::sqrt(worst2))
}

/// Symmetric Hausdorff distance.
pub fn hausdorff_distance(a: &[Point], b: &[Point]) -> Result<f64> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}

/// Finite point cloud with its minimal box cover.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SetEstimate {
    pub t: Option<f64>,
    pub box_size: f64,
    pub boxes: BTreeSet<Vec<i64>>,
    pub points: Vec<Point>,
}

pub fn box_index(x: &[f64], box_size: f64) -> Vec<i64> {
    x.iter().map(|v| math::floor(v / box_size) as i64).collect()
}

impl SetEstimate {
    pub fn from_points(points: Vec<Point>, box_size: f64, t: Option<f64>) -> Result<Self> {
        if !(box_size > 0.0) {
            return Err(Error::InvalidParameter(format!("box size must be positive, got {box_size}")));
        }
        if points.is_empty() {
            return Err(Error::EmptySet);
        }
        if points.iter().any(|p| !math::all_finite(p)) {
            return Err(Error::NonFinite { what: "set point".into(), t: t.unwrap_or(f64::NAN) });
        }
        let boxes = points.iter().map(|p| box_index(p, box_size)).collect();
        Ok(Self { t, box_size, boxes, points })
    }

    /// Keeps the first point that falls in each box, in input order.
    pub fn thinned(points: Vec<Point>, box_size: f64, t: Option<f64>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let kept = points.into_iter().filter(|p| seen.insert(box_index(p, box_size))).collect();
        Self::from_points(kept, box_size, t)
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Box cover invariant: every point sits in a listed box and every box holds a point.
    pub fn is_consistent(&self) -> bool {
        let from_points: BTreeSet<Vec<i64>> = self.points.iter().map(|p| box_index(p, self.box_size)).collect();
        from_points == self.boxes
    }

    pub fn covers(&self, x: &[f64]) -> bool {
        self.boxes.contains(&box_index(x, self.box_size))
    }

    pub fn centroid(&self) -> Point {
        let mut c = vec![0.0; self.dim()];
        for p in &self.points {
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci += pi;
            }
        }
        let n = self.points.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    /// Largest distance of a point from the origin.
    pub fn radius(&self) -> f64 {
        self.points.iter().map(|p| math::norm(p)).fold(0.0, f64::max)
    }

    /// Connected groups of boxes, where boxes touching along a face, edge or
    /// corner are adjacent.
    pub fn components(&self) -> Vec<Vec<Vec<i64>>> {
        let mut left: BTreeSet<Vec<i64>> = self.boxes.clone();
        let mut out = Vec::new();
        let d = self.boxes.iter().next().map_or(0, |b| b.len());
        while let Some(seed) = left.iter().next().cloned() {
            left.remove(&seed);
            let mut comp = vec![seed.clone()];
            let mut stack = vec![seed];
            while let Some(b) = stack.pop() {
                for k in 0..3usize.pow(d as u32) {
                    let mut nb = b.clone();
                    let mut code = k;
                    for v in nb.iter_mut() {
                        *v += (code % 3) as i64 - 1;
                        code /= 3;
                    }
                    if left.remove(&nb) {
                        comp.push(nb.clone());
                        stack.push(nb);
                    }
                }
            }
            comp.sort();
            out.push(comp);
        }
        out
    }
}

fn ensure_guard(x: &[f64], guard: Option<f64>, t0: f64, start: &[f64], t: f64) -> Result<()> {
    if let Some(limit) = guard {
        if math::norm(x) > limit {
            return Err(Error::NotInvariant { t0, start: start.to_vec(), t, state: x.to_vec() });
        }
    }
    Ok(())
}

/// Flows `points` from `t0` to `t1`, optionally aborting with a witness when
/// a point leaves the ball of radius `guard`.
pub fn evolve_cloud<E, S>(
    exec: &E,
    src: &S,
    points: &[Point],
    t0: f64,
    t1: f64,
    dt: f64,
    guard: Option<f64>,
) -> Result<Vec<Point>>
where
    E: Executor,
    S: VelocityField + ?Sized,
{
    let results = exec.map(points.len(), |i| {
        let start = &points[i];
        integrate_with(src, start, t0, t1, dt, |t, x| ensure_guard(x, guard, t0, start, t))
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackOptions {
    pub target_t: f64,
    /// Strictly decreasing start times, all `<= target_t`.
    pub t0_sequence: Vec<f64>,
    pub cloud_n: usize,
    /// Convergence and nesting tolerance.
    pub eps: f64,
    /// Box size of the covers; defaults to `eps / 2`.
    pub box_size: f64,
    /// Integrator step.
    pub dt: f64,
    /// Points may overshoot the absorbing ball by this much before the run is aborted.
    pub margin: f64,
}

impl PullbackOptions {
    pub fn new(target_t: f64, t0_sequence: Vec<f64>, cloud_n: usize, eps: f64, dt: f64) -> Self {
        Self { target_t, t0_sequence, cloud_n, eps, box_size: eps / 2.0, dt, margin: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackSweep {
    pub target_t: f64,
    pub t0_sequence: Vec<f64>,
    pub estimates: Vec<SetEstimate>,
    /// `hausdorff_gaps[i]` is the distance between estimates `i` and `i + 1`.
    pub hausdorff_gaps: Vec<f64>,
    /// `nested[i]`: estimate `i + 1` lies within `eps` of estimate `i`.
    pub nested: Vec<bool>,
    /// Index of the first estimate preceded by two consecutive gaps `<= eps`.
    pub converged_at: Option<usize>,
    pub eps: f64,
}

impl PullbackSweep {
    pub fn converged(&self) -> bool {
        self.converged_at.is_some()
    }

    /// The converged estimate, or the last one when the sweep did not converge.
    pub fn best_estimate(&self) -> &SetEstimate {
        &self.estimates[self.converged_at.unwrap_or(self.estimates.len() - 1)]
    }
}

/// Approximates the pullback attractor component `A(target_t)` by flowing a
/// cloud covering the absorbing ball of `radius` from each start time.
pub fn pullback_attractor_estimate<E, S>(
    exec: &E,
    src: &S,
    radius: f64,
    opts: &PullbackOptions,
) -> Result<PullbackSweep>
where
    E: Executor,
    S: VelocityField + ?Sized,
{
    validate_common(radius, opts.cloud_n, opts.eps, opts.box_size, opts.dt)?;
    let seq = &opts.t0_sequence;
    if seq.is_empty() {
        return Err(Error::InvalidParameter("t0 sequence is empty".into()));
    }
    if seq.windows(2).any(|w| !(w[1] < w[0])) || seq.iter().any(|t| *t > opts.target_t) {
        return Err(Error::InvalidParameter("t0 sequence must be strictly decreasing and <= target_t".into()));
    }
    let cloud = ball_cloud(src.dim(), radius, opts.cloud_n);
    let guard = Some(radius + opts.margin);
    let mut estimates = Vec::with_capacity(seq.len());
    for &t0 in seq {
        let arrivals = evolve_cloud(exec, src, &cloud, t0, opts.target_t, opts.dt, guard)?;
        estimates.push(SetEstimate::from_points(arrivals, opts.box_size, Some(opts.target_t))?);
    }
    let mut gaps = Vec::new();
    let mut nested = Vec::new();
    for w in estimates.windows(2) {
        gaps.push(hausdorff_distance(&w[0].points, &w[1].points)?);
        nested.push(directed_hausdorff(&w[1].points, &w[0].points)? <= opts.eps);
    }
    let converged_at = gaps.windows(2).position(|g| g[0] <= opts.eps && g[1] <= opts.eps).map(|j| j + 2);
    Ok(PullbackSweep {
        target_t: opts.target_t,
        t0_sequence: seq.clone(),
        estimates,
        hausdorff_gaps: gaps,
        nested,
        converged_at,
        eps: opts.eps,
    })
}

fn validate_common(radius: f64, cloud_n: usize, eps: f64, box_size: f64, dt: f64) -> Result<()> {
    if !(radius > 0.0) || cloud_n == 0 || !(eps > 0.0) || !(box_size > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need radius, cloud size, eps, box size and dt positive (radius {radius}, n {cloud_n}, eps {eps}, box {box_size}, dt {dt})"
        )));
    }
    Ok(())
}

/// How images of the absorbing ball are represented over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ForwardMethod {
    /// Re-cover the image with boxes after every sample interval, flowing
    /// the vertices and centres of the current boxes. Images of connected
    /// sets stay connected up to the box size, so unstable manifolds are
    /// resolved; the cost grows with the number of boxes. A box survives
    /// while its own points map back into it, so the sample interval should
    /// let transverse contraction move points by more than a box, and the
    /// expansion over one interval should stay below a factor of two (test
    /// points are half a box apart).
    #[default]
    BoxContinuation,
    /// Flow a fixed cloud of `cloud_n` points. Cheap, but a finite cloud
    /// thins out along expanding directions.
    PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOptions {
    pub method: ForwardMethod,
    pub t0: f64,
    /// Start of the collection window.
    pub tau_burn: f64,
    pub t_end: f64,
    /// Cloud size of the point-cloud method.
    pub cloud_n: usize,
    pub box_size: f64,
    pub eps: f64,
    /// Spacing of collected states; rounded to a whole number of steps.
    pub sample_dt: f64,
    pub dt: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardLimit {
    pub t0: f64,
    /// Box-thinned states collected over `[tau_burn, t_end]`.
    pub estimate: SetEstimate,
    /// Hausdorff distance between the states collected over the second half of
    /// the window and over the whole window.
    pub tail_gap: f64,
    pub settled: bool,
}

/// Approximates the forward omega limit set `Omega(t0)` of the absorbing ball.
pub fn forward_limit_set_estimate<E, S>(exec: &E, src: &S, radius: f64, opts: &ForwardOptions) -> Result<ForwardLimit>
where
    E: Executor,
    S: VelocityField + ?Sized,
{
    validate_common(radius, opts.cloud_n.max(1), opts.eps, opts.box_size, opts.dt)?;
    if !(opts.t0 < opts.tau_burn && opts.tau_burn < opts.t_end) || !(opts.sample_dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need t0 < tau_burn < t_end and sample_dt > 0, got {} / {} / {}",
            opts.t0, opts.tau_burn, opts.t_end
        )));
    }
    let (full, tail) = match opts.method {
        ForwardMethod::PointCloud => {
            if opts.cloud_n == 0 {
                return Err(Error::InvalidParameter("cloud size must be positive".into()));
            }
            collect_cloud(exec, src, radius, opts)?
        }
        ForwardMethod::BoxContinuation => collect_boxes(exec, src, radius, opts)?,
    };
    let estimate = SetEstimate::thinned(full, opts.box_size, Some(opts.t0))?;
    let tail = SetEstimate::thinned(tail, opts.box_size, Some(opts.t0))?;
    let tail_gap = hausdorff_distance(&tail.points, &estimate.points)?;
    Ok(ForwardLimit { t0: opts.t0, estimate, tail_gap, settled: tail_gap <= opts.eps })
}

type Collected = (Vec<Point>, Vec<Point>);

fn collect_cloud<E, S>(exec: &E, src: &S, radius: f64, opts: &ForwardOptions) -> Result<Collected>
where
    E: Executor,
    S: VelocityField + ?Sized,
{
    let cloud = ball_cloud(src.dim(), radius, opts.cloud_n);
    let stride = (math::round(opts.sample_dt / opts.dt) as usize).max(1);
    let tau_mid = 0.5 * (opts.tau_burn + opts.t_end);
    let guard = Some(radius + opts.margin);
    let slack = 1e-9 * opts.dt;
    let per_point = exec.map(cloud.len(), |i| {
        let start = &cloud[i];
        let mut step = 0usize;
        let mut full: Vec<Point> = Vec::new();
        let mut tail: Vec<Point> = Vec::new();
        let mut seen_full = BTreeSet::new();
        let mut seen_tail = BTreeSet::new();
        integrate_with(src, start, opts.t0, opts.t_end, opts.dt, |t, x| {
            ensure_guard(x, guard, opts.t0, start, t)?;
            let on_sample = step.is_multiple_of(stride);
            step += 1;
            if on_sample && t >= opts.tau_burn - slack {
                let b = box_index(x, opts.box_size);
                if seen_full.insert(b.clone()) {
                    full.push(x.to_vec());
                }
                if t >= tau_mid - slack && seen_tail.insert(b) {
                    tail.push(x.to_vec());
                }
            }
            Ok(())
        })?;
        Ok((full, tail))
    });
    // Per-point thinning followed by global thinning keeps exactly the first
    // visit of every box in (point, time) order.
    let mut full = Vec::new();
    let mut tail = Vec::new();
    for r in per_point {
        let (f, t): Collected = r?;
        full.extend(f);
        tail.extend(t);
    }
    Ok((full, tail))
}

/// Boxes of size `box_size` that meet the closed ball of `radius`.
pub fn ball_cover(dim: usize, radius: f64, box_size: f64) -> BTreeSet<Vec<i64>> {
    let hi = math::floor(radius / box_size) as i64;
    let lo = -hi - 1;
    let span = (hi - lo + 1) as usize;
    let mut out = BTreeSet::new();
    let mut idx = vec![0i64; dim];
    for k in 0..span.pow(dim as u32) {
        let mut code = k;
        let mut d2 = 0.0;
        for v in idx.iter_mut() {
            *v = lo + (code % span) as i64;
            code /= span;
            let (a, b) = (*v as f64 * box_size, (*v + 1) as f64 * box_size);
            let nearest = if a > 0.0 {
                a
            } else if b < 0.0 {
                b
            } else {
                0.0
            };
            d2 += nearest * nearest;
        }
        if d2 <= radius * radius {
            out.insert(idx.clone());
        }
    }
    out
}

/// Vertices and centres of the boxes, each listed once, in lattice order.
fn cover_test_points(cover: &BTreeSet<Vec<i64>>, box_size: f64) -> Vec<Point> {
    // Half-box lattice: even coordinates are vertices, odd ones centres.
    let mut lattice = BTreeSet::new();
    for b in cover {
        let d = b.len();
        for k in 0..(1usize << d) {
            lattice.insert(b.iter().enumerate().map(|(j, v)| 2 * (v + ((k >> j) & 1) as i64)).collect::<Vec<_>>());
        }
        lattice.insert(b.iter().map(|v| 2 * v + 1).collect::<Vec<_>>());
    }
    lattice.into_iter().map(|h| h.iter().map(|v| *v as f64 * 0.5 * box_size).collect()).collect()
}

fn box_centre(b: &[i64], box_size: f64) -> Point {
    b.iter().map(|v| (*v as f64 + 0.5) * box_size).collect()
}

fn collect_boxes<E, S>(exec: &E, src: &S, radius: f64, opts: &ForwardOptions) -> Result<Collected>
where
    E: Executor,
    S: VelocityField + ?Sized,
{
    let d = src.dim();
    let b = opts.box_size;
    let guard = Some(radius + opts.margin + b * math::sqrt(d as f64));
    let tau_mid = 0.5 * (opts.tau_burn + opts.t_end);
    let n_samples = (math::ceil((opts.t_end - opts.t0) / opts.sample_dt - 1e-9) as usize).max(1);
    let sample_t = |k: usize| if k == n_samples { opts.t_end } else { opts.t0 + k as f64 * opts.sample_dt };
    let slack = 1e-9 * opts.sample_dt;
    let mut cover = ball_cover(d, radius, b);
    let mut full = BTreeSet::new();
    let mut tail = BTreeSet::new();
    for k in 0..=n_samples {
        let t = sample_t(k);
        if t >= opts.tau_burn - slack {
            full.extend(cover.iter().cloned());
            if t >= tau_mid - slack {
                tail.extend(cover.iter().cloned());
            }
        }
        if k == n_samples {
            break;
        }
        let pts = cover_test_points(&cover, b);
        let images = evolve_cloud(exec, src, &pts, t, sample_t(k + 1), opts.dt, guard)?;
        cover = images.iter().map(|p| box_index(p, b)).collect();
    }
    let centres = |set: BTreeSet<Vec<i64>>| set.iter().map(|bx| box_centre(bx, b)).collect();
    Ok((centres(full), centres(tail)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSetOptions {
    pub method: ForwardMethod,
    pub t0_list: Vec<f64>,
    /// Collection starts `burn` time units after each start time.
    pub burn: f64,
    pub t_end: f64,
    pub cloud_n: usize,
    pub box_size: f64,
    pub eps: f64,
    pub sample_dt: f64,
    pub dt: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardAttractingSet {
    /// Union of the limit-set covers, without an associated time.
    pub omega_star: SetEstimate,
    /// Limit sets in increasing order of start time.
    pub limit_sets: Vec<ForwardLimit>,
    /// `monotone[i]`: limit set `i` lies within `eps` of limit set `i + 1`.
    pub monotone: Vec<bool>,
    pub components: usize,
}

/// Approximates the forward attracting set as the union of `Omega(t0)` over `t0_list`.
pub fn forward_attracting_set<E, S>(
    exec: &E,
    src: &S,
    radius: f64,
    opts: &ForwardSetOptions,
) -> Result<ForwardAttractingSet>
where
    E: Executor,
    S: VelocityField + ?Sized,
{
    if opts.t0_list.is_empty() {
        return Err(Error::InvalidParameter("t0 list is empty".into()));
    }
    let mut t0s = opts.t0_list.clone();
    t0s.sort_by(f64::total_cmp);
    t0s.dedup();
    let mut limit_sets = Vec::with_capacity(t0s.len());
    for &t0 in &t0s {
        let fo = ForwardOptions {
            method: opts.method,
            t0,
            tau_burn: t0 + opts.burn,
            t_end: opts.t_end,
            cloud_n: opts.cloud_n,
            box_size: opts.box_size,
            eps: opts.eps,
            sample_dt: opts.sample_dt,
            dt: opts.dt,
            margin: opts.margin,
        };
        limit_sets.push(forward_limit_set_estimate(exec, src, radius, &fo)?);
    }
    let mut monotone = Vec::new();
    for w in limit_sets.windows(2) {
        monotone.push(directed_hausdorff(&w[0].estimate.points, &w[1].estimate.points)? <= opts.eps);
    }
    let all: Vec<Point> = limit_sets.iter().flat_map(|l| l.estimate.points.iter().cloned()).collect();
    let omega_star = SetEstimate::thinned(all, opts.box_size, None)?;
    let components = omega_star.components().len();
    Ok(ForwardAttractingSet { omega_star, limit_sets, monotone, components })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractionReport {
    pub times: Vec<f64>,
    /// `distances[s][i]`: directed distance from evolved test set `s` to the target at `times[i]`.
    pub distances: Vec<Vec<f64>>,
    /// Test set `s` ends within `eps` of the target.
    pub attracted: Vec<bool>,
    pub eps: f64,
}

/// Tracks `dist(phi(t, t0, B), target)` for each bounded test set `B`.
#[allow(clippy::too_many_arguments)]
pub fn forward_attraction_check<E, S>(
    exec: &E,
    src: &S,
    target: &SetEstimate,
    test_sets: &[Vec<Point>],
    t0: f64,
    t_end: f64,
    sample_dt: f64,
    dt: f64,
    eps: f64,
) -> Result<AttractionReport>
where
    E: Executor,
    S: VelocityField + ?Sized,
{
    if !(t_end > t0) {
        return Err(Error::InvalidParameter("need t_end > t0".into()));
    }
    let n_samples = (math::ceil((t_end - t0) / sample_dt - 1e-9) as usize).max(1);
    let times: Vec<f64> =
        (0..=n_samples).map(|i| if i == n_samples { t_end } else { t0 + i as f64 * sample_dt }).collect();
    let mut distances = Vec::with_capacity(test_sets.len());
    for set in test_sets {
        if set.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut cur = set.clone();
        let mut series = Vec::with_capacity(times.len());
        series.push(directed_hausdorff(&cur, &target.points)?);
        for w in times.windows(2) {
            cur = evolve_cloud(exec, src, &cur, w[0], w[1], dt, None)?;
            series.push(directed_hausdorff(&cur, &target.points)?);
        }
        distances.push(series);
    }
    let attracted = distances.iter().map(|s| s[s.len() - 1] <= eps).collect();
    Ok(AttractionReport { times, distances, attracted, eps })
}

/// Directed distance from `phi(t, t0, set)` back to `set` at each time in
/// `times`. For a forward attracting set this defect shrinks as `t0` grows,
/// but no rate is known, so it is reported without a threshold.
pub fn invariance_defect<E, S>(
    exec: &E,
    src: &S,
    set: &SetEstimate,
    t0: f64,
    times: &[f64],
    dt: f64,
) -> Result<Vec<f64>>
where
    E: Executor,
    S: VelocityField + ?Sized,
{
    let mut cur = set.points.clone();
    let mut last = t0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t < last {
            return Err(Error::InvalidParameter("times must be increasing and >= t0".into()));
        }
        cur = evolve_cloud(exec, src, &cur, last, t, dt, None)?;
        last = t;
        out.push(directed_hausdorff(&cur, &set.points)?);
    }
    Ok(out)
}
