//! File formats. Every float is written with 17 significant digits, which
//! round-trips bit-exactly.

use std::path::Path;

use plastica_core::attractor::{PullbackSweep, SetEstimate};
use plastica_core::field::{Axis, FieldGrid, PotentialState};
use plastica_core::stimulus::{Interpolation, StimulusPath};
use plastica_core::trajectory::Trajectory;
use serde::{Deserialize, Serialize};

use crate::error::RunError;
use crate::scenario::{RuleSpec, StimulusSpec};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v))).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn format_err(path: &Path, detail: impl ToString) -> RunError {
    RunError::Format { path: path.to_path_buf(), detail: detail.to_string() }
}

/// Header plus float rows of a CSV document.
pub fn parse_csv(path: &Path, text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), RunError> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(|e| format_err(path, e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| format_err(path, e))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| format_err(path, format!("`{f}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != header.len() {
            return Err(format_err(path, "row length differs from header"));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

// ---------------------------------------------------------------- stimulus

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSidecar {
    pub t_min: f64,
    pub t_max: f64,
    pub dt: f64,
    pub components: usize,
    pub interpolation: Interpolation,
    pub seed: Option<u64>,
    pub spec: Option<StimulusSpec>,
}

pub fn stimulus_csv(path: &StimulusPath) -> Vec<u8> {
    let mut header = vec!["t".to_string()];
    header.extend(numbered("eta", path.dim()));
    let rows = (0..path.len()).map(|i| {
        let mut row = vec![path.node_time(i)];
        row.extend_from_slice(path.node(i));
        row
    });
    csv_bytes(&header, rows)
}

pub fn stimulus_sidecar(path: &StimulusPath, spec: Option<&StimulusSpec>) -> StimulusSidecar {
    StimulusSidecar {
        t_min: path.t_min(),
        t_max: path.t_max(),
        dt: path.dt(),
        components: path.dim(),
        interpolation: path.interpolation(),
        seed: path.seed(),
        spec: spec.cloned(),
    }
}

/// Rebuilds a path from its CSV and sidecar.
pub fn read_stimulus(file: &Path, csv_text: &str, sidecar: &StimulusSidecar) -> Result<StimulusPath, RunError> {
    let (header, rows) = parse_csv(file, csv_text)?;
    let expected: Vec<String> = std::iter::once("t".to_string()).chain(numbered("eta", sidecar.components)).collect();
    if header != expected {
        return Err(format_err(file, "expected header t,eta_1,..."));
    }
    let values = rows.iter().flat_map(|r| r[1..].iter().cloned()).collect();
    Ok(StimulusPath::from_values(
        sidecar.t_min,
        sidecar.t_max,
        sidecar.dt,
        sidecar.components,
        values,
        sidecar.interpolation,
        sidecar.seed,
    )?)
}

// ---------------------------------------------------------------- field snapshots

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisRecord {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub dim: usize,
    pub axes: Vec<AxisRecord>,
    pub t: f64,
    pub rule: Option<RuleSpec>,
    pub columns: Vec<String>,
}

/// One JSON header line, then CSV `z_1..z_d,a_1..a_d[,u,du_1..du_d]`.
pub fn field_snapshot(grid: &FieldGrid, rule: Option<&RuleSpec>) -> Vec<u8> {
    let d = grid.dim();
    let mut columns: Vec<String> = numbered("z", d).chain(numbered("a", d)).collect();
    let pot = grid.potential();
    if pot.is_some() {
        columns.push("u".into());
        columns.extend(numbered("du", d));
    }
    let header = SnapshotHeader {
        dim: d,
        axes: grid.axes().iter().map(|a| AxisRecord { lo: a.lo, hi: a.hi, nodes: a.nodes }).collect(),
        t: grid.t(),
        rule: rule.cloned(),
        columns: columns.clone(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    let rows = (0..grid.n_nodes()).map(|node| {
        let mut row = vec![0.0; d];
        grid.node_coords(node, &mut row);
        row.extend_from_slice(grid.node_value(node));
        if let Some(p) = pot {
            row.push(p.u[node]);
            row.extend_from_slice(&p.grad[node * d..(node + 1) * d]);
        }
        row
    });
    out.extend(csv_bytes(&columns, rows));
    out
}

pub fn read_field_snapshot(file: &Path, text: &str) -> Result<(SnapshotHeader, FieldGrid), RunError> {
    let (first, body) = text.split_once('\n').ok_or_else(|| format_err(file, "missing JSON header line"))?;
    let header: SnapshotHeader = serde_json::from_str(first).map_err(|e| format_err(file, e))?;
    let d = header.dim;
    let (columns, rows) = parse_csv(file, body)?;
    if columns != header.columns || header.axes.len() != d {
        return Err(format_err(file, "header columns or axes do not match the body"));
    }
    let with_potential = columns.len() == 3 * d + 1;
    if !with_potential && columns.len() != 2 * d {
        return Err(format_err(file, "unexpected column count"));
    }
    let axes = header.axes.iter().map(|a| Axis::new(a.lo, a.hi, a.nodes)).collect::<Result<Vec<_>, _>>()?;
    let a: Vec<f64> = rows.iter().flat_map(|r| r[d..2 * d].iter().cloned()).collect();
    let potential = with_potential.then(|| PotentialState {
        u: rows.iter().map(|r| r[2 * d]).collect(),
        grad: rows.iter().flat_map(|r| r[2 * d + 1..].iter().cloned()).collect(),
    });
    let grid = FieldGrid::new(axes, header.t, a, potential)?;
    let mut z = vec![0.0; d];
    for (node, row) in rows.iter().enumerate() {
        grid.node_coords(node, &mut z);
        if z.iter().zip(row).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs())) {
            return Err(format_err(file, format!("row {node} is not at its grid node")));
        }
    }
    Ok((header, grid))
}

// ---------------------------------------------------------------- trajectories

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySidecar {
    pub scenario: String,
    pub seed: Option<u64>,
    pub integrator: String,
    pub dt: f64,
    pub t0: f64,
    pub t1: f64,
    pub x0: Vec<f64>,
}

pub fn trajectory_csv(traj: &Trajectory) -> Vec<u8> {
    let mut header = vec!["t".to_string()];
    header.extend(numbered("x", traj.dim()));
    let rows = (0..traj.len()).map(|i| {
        let mut row = vec![traj.times()[i]];
        row.extend_from_slice(traj.state(i));
        row
    });
    csv_bytes(&header, rows)
}

pub fn series_csv(columns: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Vec<u8> {
    let header: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
    csv_bytes(&header, rows)
}

// ---------------------------------------------------------------- sets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetEstimateRecord {
    pub t: Option<f64>,
    /// Edge length of the boxes of the cover.
    #[serde(rename = "eps")]
    pub box_size: f64,
    pub boxes: Vec<Vec<i64>>,
    pub points: Vec<Vec<f64>>,
}

impl From<&SetEstimate> for SetEstimateRecord {
    fn from(s: &SetEstimate) -> Self {
        Self { t: s.t, box_size: s.box_size, boxes: s.boxes.iter().cloned().collect(), points: s.points.clone() }
    }
}

impl SetEstimateRecord {
    pub fn to_estimate(&self) -> Result<SetEstimate, plastica_core::Error> {
        let s = SetEstimate::from_points(self.points.clone(), self.box_size, self.t)?;
        if s.boxes.iter().cloned().collect::<Vec<_>>() != self.boxes {
            return Err(plastica_core::Error::InvalidParameter("box list does not match the points".into()));
        }
        Ok(s)
    }
}

pub fn set_estimate_json(s: &SetEstimate) -> Vec<u8> {
    serde_json::to_vec_pretty(&SetEstimateRecord::from(s)).expect("set serializes")
}

pub fn points_csv(s: &SetEstimate) -> Vec<u8> {
    let d = s.points.first().map_or(0, Vec::len);
    let header: Vec<String> = numbered("x", d).collect();
    csv_bytes(&header, s.points.iter().cloned())
}

/// `t0,n_points,n_boxes,hausdorff_gap`; the gap column is the distance to the
/// previous estimate and is empty on the first row.
pub fn sweep_csv(sweep: &PullbackSweep) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t0", "n_points", "n_boxes", "hausdorff_gap"]).expect("in-memory write");
    for (i, (t0, est)) in sweep.t0_sequence.iter().zip(&sweep.estimates).enumerate() {
        let gap = if i == 0 { String::new() } else { fmt_f64(sweep.hausdorff_gaps[i - 1]) };
        w.write_record([fmt_f64(*t0), est.points.len().to_string(), est.boxes.len().to_string(), gap])
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub command: String,
    pub seed: Option<u64>,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
