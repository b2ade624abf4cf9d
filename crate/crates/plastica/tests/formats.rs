use std::path::Path;

use plastica::formats::{
    field_snapshot, fmt_f64, parse_csv, points_csv, read_field_snapshot, read_stimulus, set_estimate_json,
    stimulus_csv, stimulus_sidecar, trajectory_csv, SetEstimateRecord, StimulusSidecar,
};
use plastica::scenario::{FactorSpec, RuleSpec};
use plastica::RunError;
use plastica_core::attractor::SetEstimate;
use plastica_core::field::{Axis, FieldGrid, TimeFactor};
use plastica_core::stimulus::{Interpolation, StimulusPath};
use plastica_core::trajectory::{integrate_trajectory, RhsSource};
use proptest::prelude::*;

fn here() -> &'static Path {
    Path::new("test.csv")
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn awkward_float() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3f64..1e3,
        prop::num::f64::NORMAL,
        prop::num::f64::SUBNORMAL,
        Just(0.0),
        Just(-0.0),
        Just(f64::MAX),
        Just(f64::MIN_POSITIVE),
        Just(0.1 + 0.2),
    ]
}

#[test]
fn seventeen_digits_survive_the_text_round_trip() {
    for v in [0.1, 1.0 / 3.0, -2.5e-310, 6.02214076e23, f64::MAX, -0.0, std::f64::consts::PI] {
        let back: f64 = fmt_f64(v).parse().unwrap();
        assert_eq!(back.to_bits(), v.to_bits(), "{v}");
    }
}

#[test]
fn parse_csv_rejects_malformed_documents() {
    let bad_number = "t,eta_1\n0.0,abc\n";
    assert!(matches!(parse_csv(here(), bad_number), Err(RunError::Format { .. })));
    let ragged = "t,eta_1\n0.0,1.0,2.0\n";
    assert!(matches!(parse_csv(here(), ragged), Err(RunError::Format { .. })));
    let short = "t,eta_1\n0.0\n";
    assert!(matches!(parse_csv(here(), short), Err(RunError::Format { .. })));
    let (header, rows) = parse_csv(here(), "t,eta_1\n0.5, -1.25\n").unwrap();
    assert_eq!(header, ["t", "eta_1"]);
    assert_eq!(rows, [[0.5, -1.25]]);
}

#[test]
fn stimulus_reader_checks_header_and_length() {
    let path =
        StimulusPath::from_values(0.0, 1.0, 0.5, 1, vec![1.0, 2.0, 3.0], Interpolation::PiecewiseLinear, None).unwrap();
    let sidecar = stimulus_sidecar(&path, None);
    let csv = String::from_utf8(stimulus_csv(&path)).unwrap();
    assert!(matches!(read_stimulus(here(), &csv.replace("eta_1", "u"), &sidecar), Err(RunError::Format { .. })));
    let truncated: String = csv.lines().take(3).map(|l| format!("{l}\n")).collect();
    assert!(read_stimulus(here(), &truncated, &sidecar).is_err());
}

#[test]
fn snapshot_reader_rejects_rows_off_the_grid() {
    let axes = vec![Axis::new(-1.0, 1.0, 3).unwrap()];
    let grid = FieldGrid::from_fn(axes, 0.0, |z, a| a[0] = -z[0]).unwrap();
    let text = String::from_utf8(field_snapshot(&grid, None)).unwrap();
    let moved = text.replacen("-1.0000000000000000e0", "-0.5000000000000000e0", 1);
    assert_ne!(moved, text);
    assert!(matches!(read_field_snapshot(here(), &moved), Err(RunError::Format { .. })));
    let headless = text.split_once('\n').unwrap().1;
    assert!(read_field_snapshot(here(), headless).is_err());
}

#[test]
fn snapshot_with_potential_round_trips_bit_exactly() {
    let axes = vec![Axis::new(-2.0, 2.0, 7).unwrap(), Axis::new(-1.0, 3.0, 5).unwrap()];
    let factor = TimeFactor::Constant { gamma: 0.7 };
    let grid = FieldGrid::from_potential(axes, 3.25, factor, |z, grad| {
        grad[0] = z[0] / 3.0;
        grad[1] = (z[1] * 1.1).sin();
        z[0] * z[0] / 6.0 - (z[1] * 1.1).cos() / 1.1
    })
    .unwrap();
    let rule = RuleSpec::PotentialLinear { k: 0.5, sigma: 1.0, factor: FactorSpec::Constant { gamma: 0.7 } };
    let text = String::from_utf8(field_snapshot(&grid, Some(&rule))).unwrap();
    let (header, back) = read_field_snapshot(here(), &text).unwrap();
    assert_eq!(header.rule, Some(rule));
    assert_eq!(header.columns, ["z_1", "z_2", "a_1", "a_2", "u", "du_1", "du_2"]);
    assert_eq!(back, grid);
    let p = back.potential().unwrap();
    assert_eq!(bits(&p.u), bits(&grid.potential().unwrap().u));
}

#[test]
fn trajectory_csv_carries_every_step() {
    let src = RhsSource::analytic(2, |x, t, o| {
        o[0] = -x[1] + t.sin() / 3.0;
        o[1] = x[0] - 0.1 * x[1];
    });
    let traj = integrate_trajectory(&src, &[1.0, -0.25], 0.0, 1.3, 0.1).unwrap();
    let text = String::from_utf8(trajectory_csv(&traj)).unwrap();
    let (header, rows) = parse_csv(here(), &text).unwrap();
    assert_eq!(header, ["t", "x_1", "x_2"]);
    assert_eq!(rows.len(), traj.len());
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0].to_bits(), traj.times()[i].to_bits());
        assert_eq!(bits(&row[1..]), bits(traj.state(i)));
    }
}

#[test]
fn set_estimate_json_uses_the_documented_keys() {
    let s = SetEstimate::from_points(vec![vec![0.1, 0.2], vec![-0.3, 0.4]], 0.25, Some(2.0)).unwrap();
    let value: serde_json::Value = serde_json::from_slice(&set_estimate_json(&s)).unwrap();
    let mut keys: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["boxes", "eps", "points", "t"]);
    assert_eq!(value["eps"], 0.25);
    let csv = String::from_utf8(points_csv(&s)).unwrap();
    assert_eq!(parse_csv(here(), &csv).unwrap().1, s.points);
}

#[test]
fn inconsistent_set_records_are_refused() {
    let s = SetEstimate::from_points(vec![vec![0.1], vec![0.9]], 0.5, None).unwrap();
    let mut record = SetEstimateRecord::from(&s);
    record.boxes.push(vec![7]);
    assert!(record.to_estimate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn stimulus_round_trips_bit_exactly(
        dim in 1usize..4,
        n in 2usize..40,
        t_min in -50.0f64..50.0,
        dt in 1e-4f64..1.0,
        seed in prop::option::of(any::<u64>()),
        step in any::<bool>(),
        raw in prop::collection::vec(awkward_float(), 160),
    ) {
        let t_max = t_min + (n - 1) as f64 * dt;
        let len = plastica_core::stimulus::grid_len(t_min, t_max, dt);
        let values: Vec<f64> = raw.iter().cycle().take(len * dim).cloned().collect();
        let interp = if step { Interpolation::PiecewiseConstant } else { Interpolation::PiecewiseLinear };
        let path = StimulusPath::from_values(t_min, t_max, dt, dim, values, interp, seed).unwrap();
        let sidecar = stimulus_sidecar(&path, None);
        let sidecar: StimulusSidecar = serde_json::from_str(&serde_json::to_string(&sidecar).unwrap()).unwrap();
        let csv = String::from_utf8(stimulus_csv(&path)).unwrap();
        let back = read_stimulus(here(), &csv, &sidecar).unwrap();
        prop_assert_eq!(bits(back.values()), bits(path.values()));
        prop_assert_eq!(back, path);
    }

    #[test]
    fn field_snapshot_round_trips_bit_exactly(
        nodes in prop::collection::vec(2usize..6, 1..4),
        lo in -5.0f64..0.0,
        width in 0.1f64..10.0,
        t in -100.0f64..100.0,
        raw in prop::collection::vec(awkward_float(), 64),
    ) {
        let axes: Vec<Axis> = nodes.iter().map(|&n| Axis::new(lo, lo + width, n).unwrap()).collect();
        let d = axes.len();
        let mut k = 0;
        let grid = FieldGrid::from_fn(axes, t, |_, a| {
            for v in a.iter_mut() {
                *v = raw[k % raw.len()];
                k += 1;
            }
        })
        .unwrap();
        let text = String::from_utf8(field_snapshot(&grid, None)).unwrap();
        let (header, back) = read_field_snapshot(here(), &text).unwrap();
        prop_assert_eq!(header.dim, d);
        prop_assert!(back.potential().is_none());
        prop_assert_eq!(bits(back.a_values()), bits(grid.a_values()));
        prop_assert_eq!(back, grid);
    }

    #[test]
    fn set_estimate_round_trips_bit_exactly(
        pts in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 2), 1..50),
        box_size in 1e-3f64..5.0,
        t in prop::option::of(-100.0f64..100.0),
    ) {
        let s = SetEstimate::from_points(pts, box_size, t).unwrap();
        let record: SetEstimateRecord = serde_json::from_slice(&set_estimate_json(&s)).unwrap();
        let back = record.to_estimate().unwrap();
        prop_assert_eq!(back, s);
    }
}
