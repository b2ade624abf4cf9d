//! Turns a scenario into library objects and runs the analyses in memory.
//! Writing artifacts is left to the caller.

use std::path::Path;

use plastica_core::attractor::{
    forward_attracting_set, forward_attraction_check, invariance_defect, pullback_attractor_estimate, AttractionReport,
    ForwardAttractingSet, ForwardSetOptions, PullbackOptions, PullbackSweep,
};
use plastica_core::checks::{
    check_c1, check_c3, check_c4, check_dissipativity_a2, check_dissipativity_preservation, check_growth_c2,
    check_symmetry_potential, check_variational_consistency, potential_growth_bound, CheckReport, RuleDomain,
};
use plastica_core::field::{
    evolve_field, step_count, Axis, DirectRule, FieldGrid, PlasticRule, PotentialRule, TimeFactor,
};
use plastica_core::sampling::ball_cloud;
use plastica_core::stimulus::{
    make_deterministic_path, simulate_sde_path, Drift, Interpolation, SdeSpec, StimulusPath,
};
use plastica_core::trajectory::{integrate_trajectory, Provenance, RhsSource, SnapshotSeries, Trajectory};
use plastica_core::Executor;

use crate::error::{RunError, ScenarioError};
use crate::formats::read_field_snapshot;
use crate::scenario::{
    CheckKind, DriftSpec, Dynamics, FactorSpec, Formula, InitialField, InterpolationSpec, RuleSpec, Scenario,
    StimulusSpec,
};

fn interpolation(spec: InterpolationSpec) -> Interpolation {
    match spec {
        InterpolationSpec::PiecewiseLinear => Interpolation::PiecewiseLinear,
        InterpolationSpec::PiecewiseConstant => Interpolation::PiecewiseConstant,
    }
}

/// Seed of stimulus component `j`; component 0 uses the scenario seed itself.
pub fn component_seed(seed: u64, j: usize) -> u64 {
    seed.wrapping_add(j as u64)
}

/// Stimulus over `[t_min, t_end]`, if the scenario declares one.
pub fn build_stimulus(s: &Scenario) -> Result<Option<StimulusPath>, RunError> {
    let Some(spec) = &s.stimulus else { return Ok(None) };
    let (t_min, t_end) = (s.time.t_min, s.time.t_end);
    let path = match spec {
        StimulusSpec::Deterministic { formula, dt, interpolation: interp } => {
            let m = formula.components();
            let f = formula.clone();
            make_deterministic_path(
                move |t, out| match &f {
                    Formula::Zero { .. } => out.iter_mut().for_each(|o| *o = 0.0),
                    Formula::Constant { value } => out.copy_from_slice(value),
                    Formula::Sine { amplitude, omega, phase } => {
                        for ((o, a), p) in out.iter_mut().zip(amplitude).zip(phase) {
                            *o = a * (omega * t + p).sin();
                        }
                    }
                },
                m,
                t_min,
                t_end,
                *dt,
            )?
            .with_interpolation(interpolation(*interp))
        }
        StimulusSpec::Sde { drift, diffusion, eta0, seed, dt, components, interpolation: interp } => {
            let drift = match drift {
                DriftSpec::Cubic { gain } => Drift::Cubic { gain: *gain },
                DriftSpec::Linear { rate } => Drift::Linear { rate: *rate },
            };
            let sde = SdeSpec::new(drift, *diffusion, *eta0)?;
            let paths = (0..*components)
                .map(|j| simulate_sde_path(&sde, t_min, t_end, *dt, component_seed(*seed, j)))
                .collect::<Result<Vec<_>, _>>()?;
            let first = &paths[0];
            let mut values = Vec::with_capacity(first.len() * components);
            for i in 0..first.len() {
                for p in &paths {
                    values.push(p.node(i)[0]);
                }
            }
            StimulusPath::from_values(
                first.t_min(),
                first.t_max(),
                first.dt(),
                *components,
                values,
                interpolation(*interp),
                Some(*seed),
            )?
        }
    };
    Ok(Some(path))
}

pub fn time_factor(f: &FactorSpec) -> TimeFactor {
    match f {
        FactorSpec::OneOverT { t_floor } => TimeFactor::OneOverT { t_floor: *t_floor },
        FactorSpec::Constant { gamma } => TimeFactor::Constant { gamma: *gamma },
    }
}

pub fn build_rule(s: &Scenario) -> Result<Option<PlasticRule>, RunError> {
    Ok(match &s.rule {
        None => None,
        Some(RuleSpec::PotentialLinear { k, sigma, factor }) => {
            Some(PlasticRule::Potential(PotentialRule::new(*k, *sigma, time_factor(factor))?))
        }
        Some(RuleSpec::Frozen) => Some(PlasticRule::Direct(DirectRule::Frozen)),
        Some(RuleSpec::Radial { gain, coupling }) => {
            Some(PlasticRule::Direct(DirectRule::Radial { gain: *gain, coupling: *coupling }))
        }
    })
}

pub fn build_axes(s: &Scenario) -> Result<Vec<Axis>, RunError> {
    let g = s.grid.as_ref().ok_or(ScenarioError::MissingBlock("grid"))?;
    Ok(g.axes.iter().map(|a| Axis::new(a.lo, a.hi, a.nodes)).collect::<Result<Vec<_>, _>>()?)
}

/// Initial field at `t_start`. Potential rules get a grid carrying the
/// potential; other rules get the field alone.
pub fn build_initial_field(
    s: &Scenario,
    rule: &PlasticRule,
    path: &StimulusPath,
    base_dir: Option<&Path>,
) -> Result<FieldGrid, RunError> {
    let spec = s.initial_field.as_ref().ok_or(ScenarioError::MissingBlock("initial_field"))?;
    let axes = build_axes(s)?;
    let t = s.time.t_start;
    let factor = rule.as_potential().map_or(TimeFactor::Constant { gamma: 1.0 }, |p| p.factor);
    let grid = match spec {
        InitialField::Zero => FieldGrid::from_potential(axes, t, factor, |_, g| {
            g.iter_mut().for_each(|v| *v = 0.0);
            0.0
        })?,
        InitialField::QuadraticWell { curvature } => FieldGrid::from_potential(axes, t, factor, |z, g| {
            for (gi, zi) in g.iter_mut().zip(z) {
                *gi = curvature * zi;
            }
            0.5 * curvature * z.iter().map(|v| v * v).sum::<f64>()
        })?,
        InitialField::GaussianWell { depth, width, center } => FieldGrid::from_potential(axes, t, factor, |z, g| {
            let r2: f64 = z.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            let e = (-r2 / (width * width)).exp();
            for ((gi, zi), ci) in g.iter_mut().zip(z).zip(center) {
                *gi = depth * 2.0 * (zi - ci) / (width * width) * e;
            }
            -depth * e
        })?,
        InitialField::PullbackLimit { horizon } => {
            let p = rule.as_potential().ok_or_else(|| ScenarioError::Invalid {
                invariant: "initial field".into(),
                detail: "pullback-limit field needs the potential rule".into(),
            })?;
            FieldGrid::from_pullback_limit(axes, t, p, path, *horizon)?
        }
        InitialField::File { path: file } => {
            let full = base_dir.map_or_else(|| Path::new(file).to_path_buf(), |b| b.join(file));
            let text = std::fs::read_to_string(&full).map_err(|e| RunError::io(&full, e))?;
            let (_, g) = read_field_snapshot(&full, &text)?;
            if g.axes() != axes.as_slice() {
                return Err(RunError::Format { path: full, detail: "grid differs from the scenario grid".into() });
            }
            let potential = g.potential().cloned();
            if rule.as_potential().is_some() && potential.is_none() {
                return Err(RunError::Format { path: full, detail: "potential rule needs u and du columns".into() });
            }
            FieldGrid::new(axes, t, g.a_values().to_vec(), potential)?
        }
    };
    if rule.as_potential().is_none() && grid.potential().is_some() {
        return Ok(FieldGrid::new(grid.axes().to_vec(), t, grid.a_values().to_vec(), None)?);
    }
    Ok(grid)
}

/// Snapshots at `t_start`, every `snapshot_every` field steps, and at `t_end`.
pub fn evolve_snapshots<E: Executor>(
    exec: &E,
    s: &Scenario,
    a0: &FieldGrid,
    rule: &PlasticRule,
    path: &StimulusPath,
) -> Result<Vec<FieldGrid>, RunError> {
    let n = step_count(s.time.t_start, s.time.t_end, s.time.dt_field);
    let every = s.time.snapshot_every;
    let mut snaps = vec![a0.clone()];
    evolve_field(exec, a0, rule, path, s.time.t_end, s.time.dt_field, |i, g| {
        if i % every == 0 || i == n {
            snaps.push(g.clone());
        }
        Ok(())
    })?;
    Ok(snaps)
}

/// Everything needed to integrate the observable equation.
#[derive(Debug, Clone)]
pub struct Model {
    pub stimulus: Option<StimulusPath>,
    pub rule: Option<PlasticRule>,
    pub initial_field: Option<FieldGrid>,
    pub snapshots: Vec<FieldGrid>,
    pub source: RhsSource,
}

pub fn analytic_source(s: &Scenario) -> Option<RhsSource> {
    let d = s.dimension;
    match s.dynamics {
        Dynamics::Field => None,
        Dynamics::LinearContraction { rate } => Some(RhsSource::analytic(d, move |x, _, o| {
            for (oi, xi) in o.iter_mut().zip(x) {
                *oi = -rate * xi;
            }
        })),
        Dynamics::Switching { switch_time } => Some(RhsSource::contraction_to_bistable(d, switch_time)),
        Dynamics::ForcedLinear { amplitude, omega } => Some(RhsSource::analytic(d, move |x, t, o| {
            let f = amplitude * (omega * t).sin();
            for (oi, xi) in o.iter_mut().zip(x) {
                *oi = -xi + f;
            }
        })),
    }
}

/// Builds the stimulus, evolves the field (for field dynamics) and assembles
/// the right-hand side, with the field held at `a0` before `t_start`.
pub fn build_model<E: Executor>(exec: &E, s: &Scenario, base_dir: Option<&Path>) -> Result<Model, RunError> {
    let stimulus = build_stimulus(s)?;
    let rule = build_rule(s)?;
    let mut initial_field = None;
    if let (Some(r), Some(p), Some(_), Some(_)) = (&rule, &stimulus, &s.grid, &s.initial_field) {
        initial_field = Some(build_initial_field(s, r, p, base_dir)?);
    }
    let (source, snapshots) = match analytic_source(s) {
        Some(src) => (src, Vec::new()),
        None => {
            let a0 = initial_field.as_ref().ok_or(ScenarioError::MissingBlock("initial_field"))?;
            let r = rule.as_ref().ok_or(ScenarioError::MissingBlock("rule"))?;
            let p = stimulus.as_ref().ok_or(ScenarioError::MissingBlock("stimulus"))?;
            let snaps = evolve_snapshots(exec, s, a0, r, p)?;
            (RhsSource::snapshots(SnapshotSeries::new(snaps.clone(), true)?), snaps)
        }
    };
    Ok(Model { stimulus, rule, initial_field, snapshots, source })
}

pub fn simulate(s: &Scenario, model: &Model) -> Result<Vec<Trajectory>, RunError> {
    let prov = Provenance { scenario: s.id.clone(), seed: s.seed() };
    s.initial_conditions
        .iter()
        .map(|x0| {
            Ok(integrate_trajectory(&model.source, x0, s.time.t_start, s.time.t_end, s.time.dt_traj())?
                .with_provenance(prov.clone()))
        })
        .collect()
}

pub fn pullback<E: Executor>(exec: &E, s: &Scenario, model: &Model) -> Result<Vec<PullbackSweep>, RunError> {
    let p = s.pullback.as_ref().ok_or(ScenarioError::MissingBlock("pullback"))?;
    let radius = p.radius.unwrap_or(s.r_star + 1.0);
    p.target_times
        .iter()
        .map(|&target| {
            let opts = PullbackOptions {
                target_t: target,
                t0_sequence: p.t0_offsets.iter().map(|o| target - o).collect(),
                cloud_n: p.cloud_n,
                eps: p.eps,
                box_size: p.box_size.unwrap_or(p.eps / 2.0),
                dt: p.dt.unwrap_or(s.time.dt_traj()),
                margin: p.margin,
            };
            Ok(pullback_attractor_estimate(exec, &model.source, radius, &opts)?)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub set: ForwardAttractingSet,
    /// Test ball flowed from the first start time, against the forward set.
    pub attraction: AttractionReport,
    pub defect_times: Vec<f64>,
    pub invariance_defect: Vec<f64>,
}

pub fn forward<E: Executor>(exec: &E, s: &Scenario, model: &Model) -> Result<ForwardResult, RunError> {
    let f = s.forward.as_ref().ok_or(ScenarioError::MissingBlock("forward"))?;
    let radius = f.radius.unwrap_or(s.r_star + 1.0);
    let t_end = f.t_end.unwrap_or(s.time.t_end);
    let dt = f.dt.unwrap_or(s.time.dt_traj());
    let eps = f.eps;
    let opts = ForwardSetOptions {
        method: f.method,
        t0_list: f.t0_list.clone(),
        burn: f.burn,
        t_end,
        cloud_n: f.cloud_n,
        box_size: f.box_size.unwrap_or(eps / 2.0),
        eps,
        sample_dt: f.sample_dt,
        dt,
        margin: f.margin,
    };
    let set = forward_attracting_set(exec, &model.source, radius, &opts)?;
    let t0 = f.t0_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let test = ball_cloud(s.dimension, f.test_radius.unwrap_or(radius), f.test_n);
    let attraction =
        forward_attraction_check(exec, &model.source, &set.omega_star, &[test], t0, t_end, f.sample_dt, dt, eps)?;
    let t_a = t0 + f.burn;
    let defect_times: Vec<f64> = (1..=10).map(|j| t_a + (t_end - t_a) * j as f64 / 10.0).collect();
    let defect = invariance_defect(exec, &model.source, &set.omega_star, t_a, &defect_times, dt)?;
    Ok(ForwardResult { set, attraction, defect_times, invariance_defect: defect })
}

/// Evenly spread times over `[t_start, t_end]`, both ends included.
pub fn check_times(s: &Scenario, n: usize) -> Vec<f64> {
    let (a, b) = (s.time.t_start, s.time.t_end);
    (0..n).map(|j| if j + 1 == n { b } else { a + (b - a) * j as f64 / (n - 1) as f64 }).collect()
}

/// Sampling domain of the rule checks: the grid box (or the absorbing ball's
/// bounding box), the stimulus range and the simulated time window.
pub fn rule_domain(s: &Scenario, model: &Model, a_max: f64) -> RuleDomain {
    let d = s.dimension;
    let ball = s.r_star + 1.0;
    let (x_lo, x_hi) = match &s.grid {
        Some(g) => (g.axes.iter().map(|a| a.lo).collect(), g.axes.iter().map(|a| a.hi).collect()),
        None => (vec![-ball; d], vec![ball; d]),
    };
    let (y_lo, y_hi) = match &model.stimulus {
        Some(p) => p.range().into_iter().unzip(),
        None => (vec![0.0; d], vec![0.0; d]),
    };
    RuleDomain { a_max, x_lo, x_hi, y_lo, y_hi, t_lo: s.time.t_start, t_hi: s.time.t_end }
}

fn worst_report(mut reports: Vec<CheckReport>) -> CheckReport {
    let mut best = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.worst_value > reports[best].worst_value || r.worst_value.is_nan() {
            best = i;
        }
    }
    let passed = reports.iter().all(|r| r.passed);
    let n: usize = reports.iter().map(|r| r.n_samples).sum();
    let mut out = reports.swap_remove(best);
    out.passed = passed;
    out.n_samples = n;
    out
}

pub fn run_checks<E: Executor>(exec: &E, s: &Scenario, model: &Model) -> Result<Vec<CheckReport>, RunError> {
    let c = s.checks.as_ref().ok_or(ScenarioError::MissingBlock("checks"))?;
    let need_rule = || model.rule.as_ref().ok_or(ScenarioError::MissingBlock("rule"));
    let need_field = || model.initial_field.as_ref().ok_or(ScenarioError::MissingBlock("initial_field"));
    let need_path = || model.stimulus.as_ref().ok_or(ScenarioError::MissingBlock("stimulus"));
    let times = check_times(s, c.n_times);
    let domain = rule_domain(s, model, c.a_max);
    let mut out = Vec::with_capacity(c.run.len());
    for kind in &c.run {
        let report = match kind {
            CheckKind::A2 => check_dissipativity_a2(exec, &model.source, s.r_star, c.samples, &times, c.sampled_tol)?,
            CheckKind::C1 => check_c1(exec, need_rule()?, &domain, c.samples, c.fd_step, c.sampled_tol)?,
            CheckKind::C3 => check_c3(exec, need_rule()?, &domain, c.samples, c.fd_step, c.sampled_tol)?,
            CheckKind::C2 => {
                let rule = need_rule()?;
                match rule.as_potential() {
                    Some(p) => {
                        let bound = potential_growth_bound(p.k, p.sigma, &p.factor);
                        check_growth_c2(exec, rule, &domain, c.samples, Some(bound), c.identity_tol)?
                    }
                    None => check_growth_c2(exec, rule, &domain, c.samples, None, c.sampled_tol)?,
                }
            }
            CheckKind::C4 => {
                let outer = c.c4_outer.unwrap_or(s.r_star + 1.0);
                check_c4(exec, need_rule()?, &domain, s.r_star, outer, c.samples, c.sampled_tol)?
            }
            CheckKind::Symmetry => {
                let snaps: Vec<&FieldGrid> = if model.snapshots.is_empty() {
                    vec![need_field()?]
                } else {
                    let k = model.snapshots.len();
                    let mut idx: Vec<usize> = (0..c.n_times).map(|j| j * (k - 1) / (c.n_times - 1)).collect();
                    idx.dedup();
                    idx.into_iter().map(|i| &model.snapshots[i]).collect()
                };
                let reports = snaps
                    .into_iter()
                    .map(|g| check_symmetry_potential(g, c.sampled_tol))
                    .collect::<Result<Vec<_>, _>>()?;
                worst_report(reports)
            }
            CheckKind::Preservation => check_dissipativity_preservation(
                exec,
                need_rule()?,
                need_field()?,
                need_path()?,
                s.time.t_end,
                s.time.dt_field,
                s.r_star,
                c.n_times,
                c.samples,
                c.sampled_tol,
            )?,
            CheckKind::Variational => check_variational_consistency(
                exec,
                need_rule()?,
                need_field()?,
                need_path()?,
                s.time.t_end.min(s.time.t_start + c.variational_span),
                s.time.dt_field,
                c.fd_step,
                c.sampled_tol,
            )?,
        };
        out.push(report);
    }
    Ok(out)
}

/// `|a(x(t), t)|` along a trajectory.
pub fn speeds(model: &Model, traj: &Trajectory) -> Result<Vec<f64>, RunError> {
    Ok(plastica_core::trajectory::velocity_magnitude_series(traj, &model.source)?)
}
