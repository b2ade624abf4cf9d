use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{RunError, ScenarioError};
use crate::exec::RayonExecutor;
use crate::formats::{
    field_snapshot, points_csv, series_csv, set_estimate_json, stimulus_csv, stimulus_sidecar, sweep_csv,
    trajectory_csv, TrajectorySidecar,
};
use crate::output::ArtifactDir;
use crate::plot;
use crate::run::{self, Model};
use crate::scenario::{builtin, parse_scenario, Scenario};

#[derive(Debug, Parser)]
#[command(name = "plastica", version, about = "Simulate and analyse dynamics driven by plastic vector fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stimulus, field snapshots and trajectories.
    Simulate(CommonArgs),
    /// Pullback attractor sweeps.
    Pullback(CommonArgs),
    /// Forward limit sets and the forward attracting set.
    Forward(CommonArgs),
    /// Assumption checks; exits with status 3 if any fails.
    Check(CommonArgs),
    /// The stimulus path alone.
    Stimulus(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario file (TOML or JSON), or `builtin:<name>`.
    #[arg(long)]
    pub scenario: String,
    /// Output directory; replaced atomically on success.
    #[arg(long, env = "PLASTICA_OUT")]
    pub out: PathBuf,
    /// Overrides the stimulus seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, env = "PLASTICA_THREADS")]
    pub threads: Option<usize>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Pullback(_) => "pullback",
            Command::Forward(_) => "forward",
            Command::Check(_) => "check",
            Command::Stimulus(_) => "stimulus",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a)
            | Command::Pullback(a)
            | Command::Forward(a)
            | Command::Check(a)
            | Command::Stimulus(a) => a,
        }
    }
}

/// Loads a scenario file or builtin; also returns the directory relative
/// paths inside it resolve against.
pub fn load_scenario(spec: &str) -> Result<(Scenario, Option<PathBuf>), ScenarioError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        let text = builtin(name).ok_or_else(|| ScenarioError::UnknownBuiltin(name.to_string()))?;
        return Ok((parse_scenario(text)?, None));
    }
    let path = Path::new(spec);
    let text =
        std::fs::read_to_string(path).map_err(|e| ScenarioError::Read { path: path.to_path_buf(), source: e })?;
    Ok((parse_scenario(&text)?, path.parent().map(Path::to_path_buf)))
}

pub fn execute(command: &Command) -> Result<(), RunError> {
    let args = command.args();
    let (mut scenario, base) = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario = scenario.with_seed(seed);
    }
    let exec = RayonExecutor::new(args.threads)
        .map_err(|e| ScenarioError::Invalid { invariant: "threads".into(), detail: e.to_string() })?;
    let mut out = ArtifactDir::create(&args.out)?;
    out.write("scenario.resolved.json", format!("{}\n", scenario.to_json()).as_bytes())?;
    let name = command.name();
    let mut failed = Vec::new();
    match command {
        Command::Stimulus(_) => {
            let path = run::build_stimulus(&scenario)?.ok_or(ScenarioError::MissingBlock("stimulus"))?;
            write_stimulus(&mut out, &scenario, &path)?;
            out.write("plot.gp", plot::stimulus_script(path.dim()).as_bytes())?;
        }
        Command::Simulate(_) => {
            let model = run::build_model(&exec, &scenario, base.as_deref())?;
            write_simulation(&mut out, &scenario, &model)?;
        }
        Command::Pullback(_) => {
            let model = run::build_model(&exec, &scenario, base.as_deref())?;
            let sweeps = run::pullback(&exec, &scenario, &model)?;
            let mut summary = Vec::new();
            for (i, sweep) in sweeps.iter().enumerate() {
                out.write(&format!("pullback/sweep_{i:03}.csv"), &sweep_csv(sweep))?;
                out.write(&format!("pullback/estimate_{i:03}.json"), &set_estimate_json(sweep.best_estimate()))?;
                out.write(&format!("pullback/estimate_{i:03}.csv"), &points_csv(sweep.best_estimate()))?;
                summary.push(serde_json::json!({
                    "target_t": sweep.target_t,
                    "converged": sweep.converged(),
                    "converged_at": sweep.converged_at,
                    "converged_t0": sweep.converged_at.map(|j| sweep.t0_sequence[j]),
                    "hausdorff_gaps": sweep.hausdorff_gaps,
                    "nested": sweep.nested,
                    "eps": sweep.eps,
                    "criterion": "two consecutive Hausdorff gaps <= eps (heuristic, no rate is known)",
                }));
            }
            out.write_json("pullback/summary.json", &summary)?;
            out.write("plot.gp", plot::pullback_script(sweeps.len(), scenario.dimension).as_bytes())?;
        }
        Command::Forward(_) => {
            let model = run::build_model(&exec, &scenario, base.as_deref())?;
            let res = run::forward(&exec, &scenario, &model)?;
            for (i, l) in res.set.limit_sets.iter().enumerate() {
                out.write(&format!("forward/omega_{i:03}.json"), &set_estimate_json(&l.estimate))?;
            }
            out.write("forward/omega_star.json", &set_estimate_json(&res.set.omega_star))?;
            out.write("forward/omega_star.csv", &points_csv(&res.set.omega_star))?;
            let rows = res.attraction.times.iter().enumerate().map(|(i, t)| vec![*t, res.attraction.distances[0][i]]);
            out.write("forward/attraction.csv", &series_csv(&["t", "distance"], rows))?;
            let rows = res.defect_times.iter().zip(&res.invariance_defect).map(|(t, d)| vec![*t, *d]);
            out.write("forward/invariance_defect.csv", &series_csv(&["t", "defect"], rows))?;
            let summary = serde_json::json!({
                "t0_list": res.set.limit_sets.iter().map(|l| l.t0).collect::<Vec<_>>(),
                "tail_gaps": res.set.limit_sets.iter().map(|l| l.tail_gap).collect::<Vec<_>>(),
                "settled": res.set.limit_sets.iter().map(|l| l.settled).collect::<Vec<_>>(),
                "monotone": res.set.monotone,
                "components": res.set.components,
                "attracted": res.attraction.attracted,
                "eps": res.attraction.eps,
                "invariance_defect_note": "reported without a threshold",
            });
            out.write_json("forward/summary.json", &summary)?;
            out.write("plot.gp", plot::forward_script(scenario.dimension).as_bytes())?;
        }
        Command::Check(_) => {
            let model = run::build_model(&exec, &scenario, base.as_deref())?;
            let reports = run::run_checks(&exec, &scenario, &model)?;
            out.write_json("checks.json", &reports)?;
            failed = reports.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
        }
    }
    out.finish(&scenario.id, name, scenario.seed())?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(RunError::ChecksFailed(failed))
    }
}

fn write_stimulus(
    out: &mut ArtifactDir,
    s: &Scenario,
    path: &plastica_core::stimulus::StimulusPath,
) -> Result<(), RunError> {
    out.write("stimulus.csv", &stimulus_csv(path))?;
    out.write_json("stimulus.json", &stimulus_sidecar(path, s.stimulus.as_ref()))
}

fn write_simulation(out: &mut ArtifactDir, s: &Scenario, model: &Model) -> Result<(), RunError> {
    if let Some(p) = &model.stimulus {
        write_stimulus(out, s, p)?;
    }
    for (i, g) in model.snapshots.iter().enumerate() {
        out.write(&format!("field/snapshot_{i:05}.csv"), &field_snapshot(g, s.rule.as_ref()))?;
    }
    let trajectories = run::simulate(s, model)?;
    for (i, traj) in trajectories.iter().enumerate() {
        out.write(&format!("trajectories/traj_{i:03}.csv"), &trajectory_csv(traj))?;
        out.write_json(
            &format!("trajectories/traj_{i:03}.json"),
            &TrajectorySidecar {
                scenario: s.id.clone(),
                seed: s.seed(),
                integrator: "rk4".into(),
                dt: s.time.dt_traj(),
                t0: s.time.t_start,
                t1: s.time.t_end,
                x0: s.initial_conditions[i].clone(),
            },
        )?;
        let speeds = run::speeds(model, traj)?;
        let rows = traj.times().iter().zip(&speeds).map(|(t, v)| vec![*t, *v]);
        out.write(&format!("trajectories/speed_{i:03}.csv"), &series_csv(&["t", "speed"], rows))?;
    }
    let script = plot::simulate_script(
        trajectories.len(),
        s.dimension,
        model.stimulus.as_ref().map(|p| p.dim()),
        model.snapshots.len(),
    );
    out.write("plot.gp", script.as_bytes())
}

/// Runs the CLI and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("plastica: {e}");
            e.exit_code()
        }
    }
}
