//! Declarative scenario files.
//!
//! A scenario is TOML, or the equivalent JSON. Unknown keys are rejected.
//! Parsing materializes every default, so the resolved record written next to
//! the artifacts names each parameter and re-parses to an identical value.

use plastica_core::attractor::ForwardMethod;
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub dimension: usize,
    pub time: TimeWindow,
    pub dynamics: Dynamics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stimulus: Option<StimulusSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<RuleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_field: Option<InitialField>,
    #[serde(default)]
    pub initial_conditions: Vec<Vec<f64>>,
    pub r_star: f64,
    /// Reserved for resetting initial conditions from the stimulus; must be false.
    #[serde(default)]
    pub reset_by_stimulus: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pullback: Option<PullbackSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<ForwardSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<ChecksSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeWindow {
    /// Start of the artificial past; the stimulus is generated from here.
    pub t_min: f64,
    /// The field is held at its initial value up to this time.
    pub t_start: f64,
    pub t_end: f64,
    pub dt_field: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_traj: Option<f64>,
    /// Field steps between stored snapshots.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

fn default_snapshot_every() -> usize {
    10
}

impl TimeWindow {
    pub fn dt_traj(&self) -> f64 {
        self.dt_traj.unwrap_or(self.dt_field)
    }

    pub fn snapshot_cadence(&self) -> f64 {
        self.snapshot_every as f64 * self.dt_field
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dynamics {
    /// `dx/dt = a(x, t)` with `a` the evolving plastic field.
    Field,
    /// `dx/dt = -rate x`.
    LinearContraction { rate: f64 },
    /// `-x` up to `switch_time`, `x (1 - x^2)` afterwards.
    Switching { switch_time: f64 },
    /// `dx/dt = -x + amplitude sin(omega t)` in every component.
    ForcedLinear { amplitude: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationSpec {
    #[default]
    PiecewiseLinear,
    PiecewiseConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StimulusSpec {
    Deterministic {
        formula: Formula,
        dt: f64,
        #[serde(default)]
        interpolation: InterpolationSpec,
    },
    /// Independent Euler–Maruyama paths per component.
    Sde {
        drift: DriftSpec,
        diffusion: f64,
        eta0: f64,
        seed: u64,
        dt: f64,
        #[serde(default = "default_components")]
        components: usize,
        #[serde(default)]
        interpolation: InterpolationSpec,
    },
}

fn default_components() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Formula {
    Zero {
        components: usize,
    },
    Constant {
        value: Vec<f64>,
    },
    /// `amplitude_i sin(omega t + phase_i)`.
    Sine {
        amplitude: Vec<f64>,
        omega: f64,
        phase: Vec<f64>,
    },
}

impl Formula {
    pub fn components(&self) -> usize {
        match self {
            Formula::Zero { components } => *components,
            Formula::Constant { value } => value.len(),
            Formula::Sine { amplitude, .. } => amplitude.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    /// `gain (u - u^3)`.
    Cubic { gain: f64 },
    /// `-rate u`.
    Linear { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorSpec {
    OneOverT {
        #[serde(default = "default_t_floor")]
        t_floor: f64,
    },
    Constant {
        gamma: f64,
    },
}

fn default_t_floor() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleSpec {
    /// Potential relaxing towards a Gaussian bump at the stimulus, `a = -f(t) ∇U`.
    PotentialLinear {
        k: f64,
        sigma: f64,
        factor: FactorSpec,
    },
    Frozen,
    /// `c = gain (1 + coupling |y|^2) z`.
    Radial {
        gain: f64,
        coupling: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialField {
    Zero,
    /// `U = curvature |z|^2 / 2`.
    QuadraticWell {
        curvature: f64,
    },
    /// `U = -depth exp(-|z - center|^2 / width^2)`.
    GaussianWell {
        depth: f64,
        width: f64,
        center: Vec<f64>,
    },
    /// Potential-rule field at `t_start` as the limit of the past stimulus,
    /// truncated `horizon` time units back.
    PullbackLimit {
        horizon: f64,
    },
    /// A field snapshot file; relative paths resolve against the scenario file.
    File {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PullbackSpec {
    pub target_times: Vec<f64>,
    /// Start times are `target - offset`; offsets strictly increasing.
    pub t0_offsets: Vec<f64>,
    pub cloud_n: usize,
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_size: Option<f64>,
    /// Radius of the absorbing ball; defaults to `r_star + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSpec {
    #[serde(default)]
    pub method: ForwardMethod,
    pub t0_list: Vec<f64>,
    pub burn: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub cloud_n: usize,
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub sample_dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Radius of the ball of test points whose attraction to the forward set is tracked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_radius: Option<f64>,
    #[serde(default = "default_test_n")]
    pub test_n: usize,
}

fn default_test_n() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckKind {
    A2,
    C1,
    C2,
    C3,
    C4,
    #[serde(rename = "symmetry")]
    Symmetry,
    #[serde(rename = "preservation")]
    Preservation,
    #[serde(rename = "variational")]
    Variational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSpec {
    pub run: Vec<CheckKind>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_n_times")]
    pub n_times: usize,
    #[serde(default = "default_identity_tol")]
    pub identity_tol: f64,
    #[serde(default = "default_sampled_tol")]
    pub sampled_tol: f64,
    /// Half-width of the sampled range of each field component in rule checks.
    #[serde(default = "default_a_max")]
    pub a_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c4_outer: Option<f64>,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Length of the window, from `t_start`, over which the variational
    /// equation is integrated alongside the field.
    #[serde(default = "default_variational_span")]
    pub variational_span: f64,
}

fn default_samples() -> usize {
    256
}
fn default_n_times() -> usize {
    10
}
fn default_identity_tol() -> f64 {
    plastica_core::checks::IDENTITY_TOL
}
fn default_sampled_tol() -> f64 {
    plastica_core::checks::SAMPLED_TOL
}
fn default_a_max() -> f64 {
    4.0
}
fn default_fd_step() -> f64 {
    1e-4
}
fn default_variational_span() -> f64 {
    10.0
}

pub const BUILTINS: &[(&str, &str)] = &[
    ("linear_contraction", include_str!("../scenarios/linear_contraction.scenario")),
    ("switching_counterexample", include_str!("../scenarios/switching_counterexample.scenario")),
    ("paper_example", include_str!("../scenarios/paper_example.scenario")),
    ("radial_plasticity", include_str!("../scenarios/radial_plasticity.scenario")),
    ("forced_linear", include_str!("../scenarios/forced_linear.scenario")),
];

pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parses TOML or JSON (detected by a leading `{`), materializes defaults and validates.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: Scenario = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
            ScenarioError::Parse { line, column, message: e.message().to_string() }
        })?
    };
    let s = raw.resolved();
    s.validate()?;
    Ok(s)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn invalid(invariant: &str, detail: String) -> ScenarioError {
    ScenarioError::Invalid { invariant: invariant.to_string(), detail }
}

impl Scenario {
    /// Copy with every optional parameter that has a default filled in.
    pub fn resolved(mut self) -> Self {
        let dt_traj = self.time.dt_traj();
        self.time.dt_traj = Some(dt_traj);
        let ball = self.r_star + 1.0;
        if let Some(p) = &mut self.pullback {
            p.box_size.get_or_insert(p.eps / 2.0);
            p.radius.get_or_insert(ball);
            p.dt.get_or_insert(dt_traj);
        }
        let t_end = self.time.t_end;
        if let Some(f) = &mut self.forward {
            f.box_size.get_or_insert(f.eps / 2.0);
            let radius = *f.radius.get_or_insert(ball);
            f.dt.get_or_insert(dt_traj);
            f.t_end.get_or_insert(t_end);
            f.test_radius.get_or_insert(radius);
        }
        if let Some(c) = &mut self.checks {
            c.c4_outer.get_or_insert(ball);
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn uses_field(&self) -> bool {
        matches!(self.dynamics, Dynamics::Field)
    }

    pub fn stimulus_components(&self) -> Option<usize> {
        self.stimulus.as_ref().map(|s| match s {
            StimulusSpec::Deterministic { formula, .. } => formula.components(),
            StimulusSpec::Sde { components, .. } => *components,
        })
    }

    pub fn seed(&self) -> Option<u64> {
        match &self.stimulus {
            Some(StimulusSpec::Sde { seed, .. }) => Some(*seed),
            _ => None,
        }
    }

    /// Replaces the stimulus seed; only meaningful for random stimuli.
    pub fn with_seed(mut self, new_seed: u64) -> Self {
        if let Some(StimulusSpec::Sde { seed, .. }) = &mut self.stimulus {
            *seed = new_seed;
        }
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let d = self.dimension;
        if self.id.trim().is_empty() {
            return Err(invalid("id", "scenario id must be non-empty".into()));
        }
        if d == 0 {
            return Err(invalid("dimension", "dimension must be at least 1".into()));
        }
        let t = &self.time;
        if !(t.t_min <= t.t_start && t.t_start < t.t_end)
            || ![t.t_min, t.t_start, t.t_end].iter().all(|v| v.is_finite())
        {
            return Err(invalid(
                "time window",
                format!("require t_min <= t_start < t_end, got {} / {} / {}", t.t_min, t.t_start, t.t_end),
            ));
        }
        if !(t.dt_field > 0.0) || !(t.dt_traj() > 0.0) {
            return Err(invalid("time steps", "dt_field and dt_traj must be positive".into()));
        }
        if t.snapshot_every == 0 {
            return Err(invalid("snapshot cadence", "snapshot_every must be a positive number of field steps".into()));
        }
        if !(self.r_star >= 0.0) {
            return Err(invalid("r_star", format!("r_star must be >= 0, got {}", self.r_star)));
        }
        if self.reset_by_stimulus {
            return Err(invalid(
                "reset_by_stimulus",
                "resetting initial conditions by the stimulus is reserved and not supported".into(),
            ));
        }
        if let Some((i, x)) = self.initial_conditions.iter().enumerate().find(|(_, x)| x.len() != d) {
            return Err(invalid(
                "initial conditions",
                format!("condition {i} has {} components, expected {d}", x.len()),
            ));
        }
        if let Some(s) = &self.stimulus {
            let dt = match s {
                StimulusSpec::Deterministic { formula, dt, .. } => {
                    if let Formula::Sine { amplitude, phase, .. } = formula {
                        if amplitude.len() != phase.len() {
                            return Err(invalid("stimulus formula", "sine amplitude and phase lengths differ".into()));
                        }
                    }
                    if formula.components() == 0 {
                        return Err(invalid("stimulus formula", "stimulus needs at least one component".into()));
                    }
                    *dt
                }
                StimulusSpec::Sde { diffusion, dt, components, .. } => {
                    if !(*diffusion >= 0.0) {
                        return Err(invalid("stimulus sde", "diffusion must be >= 0".into()));
                    }
                    if *components == 0 {
                        return Err(invalid("stimulus sde", "components must be >= 1".into()));
                    }
                    *dt
                }
            };
            if !(dt > 0.0) {
                return Err(invalid("stimulus dt", "stimulus dt must be positive".into()));
            }
        }
        if self.uses_field() {
            for (name, present) in [
                ("stimulus", self.stimulus.is_some()),
                ("rule", self.rule.is_some()),
                ("grid", self.grid.is_some()),
                ("initial_field", self.initial_field.is_some()),
            ] {
                if !present {
                    return Err(invalid("field dynamics", format!("field dynamics need a [{name}] block")));
                }
            }
        }
        if let Some(g) = &self.grid {
            if g.axes.len() != d {
                return Err(invalid("grid", format!("grid has {} axes, expected {d}", g.axes.len())));
            }
            if let Some(a) = g.axes.iter().find(|a| !(a.lo < a.hi) || a.nodes < 2) {
                return Err(invalid("grid", format!("axis {a:?} needs lo < hi and at least 2 nodes")));
            }
        }
        if let Some(RuleSpec::PotentialLinear { k, sigma, factor }) = &self.rule {
            if !(*k >= 0.0) || !(*sigma > 0.0) {
                return Err(invalid("rule", "potential rule needs k >= 0 and sigma > 0".into()));
            }
            if let FactorSpec::OneOverT { t_floor } = factor {
                if !(*t_floor > 0.0) || t.t_start < *t_floor {
                    return Err(invalid(
                        "time factor",
                        format!(
                            "one-over-t factor needs t_start >= t_floor > 0, got t_start {} and t_floor {t_floor}",
                            t.t_start
                        ),
                    ));
                }
            }
            if self.stimulus_components().is_some_and(|m| m != d) {
                return Err(invalid(
                    "stimulus dimension",
                    "potential rule needs a stimulus with one component per dimension".into(),
                ));
            }
            if matches!(self.initial_field, Some(InitialField::PullbackLimit { .. })) && !(*k > 0.0) {
                return Err(invalid("initial field", "pullback-limit field needs k > 0".into()));
            }
        }
        if let Some(InitialField::PullbackLimit { horizon }) = &self.initial_field {
            if !matches!(self.rule, Some(RuleSpec::PotentialLinear { .. })) {
                return Err(invalid("initial field", "pullback-limit field needs the potential rule".into()));
            }
            if !(*horizon > 0.0) || t.t_start - horizon < t.t_min {
                return Err(invalid("initial field", format!("need 0 < horizon <= t_start - t_min, got {horizon}")));
            }
        }
        if let Some(InitialField::GaussianWell { width, center, .. }) = &self.initial_field {
            if center.len() != d || !(*width > 0.0) {
                return Err(invalid(
                    "initial field",
                    "gaussian well needs a positive width and a center of the scenario dimension".into(),
                ));
            }
        }
        if let Some(p) = &self.pullback {
            if p.target_times.is_empty() || p.t0_offsets.is_empty() {
                return Err(invalid("pullback", "target_times and t0_offsets must be non-empty".into()));
            }
            if p.t0_offsets.iter().any(|o| !(*o > 0.0)) || p.t0_offsets.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(invalid("pullback", "t0 offsets must be positive and strictly increasing".into()));
            }
            let deepest =
                p.target_times.iter().cloned().fold(f64::INFINITY, f64::min) - p.t0_offsets[p.t0_offsets.len() - 1];
            if deepest < t.t_min || p.target_times.iter().any(|tt| *tt > t.t_end) {
                return Err(invalid("pullback", format!("start times reach {deepest}, outside [t_min, t_end]")));
            }
            if p.cloud_n == 0 || !(p.eps > 0.0) {
                return Err(invalid("pullback", "cloud_n and eps must be positive".into()));
            }
        }
        if let Some(f) = &self.forward {
            if f.t0_list.is_empty()
                || (f.cloud_n == 0 && f.method == ForwardMethod::PointCloud)
                || !(f.eps > 0.0)
                || !(f.burn > 0.0)
                || !(f.sample_dt > 0.0)
            {
                return Err(invalid(
                    "forward",
                    "need a non-empty t0_list and positive cloud_n, eps, burn and sample_dt".into(),
                ));
            }
            let f_end = f.t_end.unwrap_or(t.t_end);
            if f_end > t.t_end || f.t0_list.iter().any(|t0| *t0 < t.t_min || t0 + f.burn >= f_end) {
                return Err(invalid("forward", "each t0 needs t_min <= t0 and t0 + burn < t_end <= time.t_end".into()));
            }
        }
        if let Some(c) = &self.checks {
            if c.run.is_empty() || c.samples == 0 || c.n_times < 2 {
                return Err(invalid("checks", "need a non-empty run list, samples >= 1 and n_times >= 2".into()));
            }
            if !(c.fd_step > 0.0) || !(c.variational_span > 0.0) {
                return Err(invalid("checks", "fd_step and variational_span must be positive".into()));
            }
        }
        Ok(())
    }
}
