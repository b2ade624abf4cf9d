//! gnuplot scripts that read the CSV artifacts next to them.

fn header() -> String {
    "# gnuplot script; run with `gnuplot -p plot.gp` from this directory\nset datafile separator ','\nset key autotitle columnhead\n".to_string()
}

pub fn stimulus_script(components: usize) -> String {
    let mut s = header();
    s.push_str("set xlabel 't'\nset ylabel 'stimulus'\nplot ");
    let lines: Vec<String> = (0..components).map(|j| format!("'stimulus.csv' using 1:{} with lines", j + 2)).collect();
    s.push_str(&lines.join(", \\\n     "));
    s.push('\n');
    s
}

pub fn simulate_script(trajectories: usize, dim: usize, stimulus: Option<usize>, snapshots: usize) -> String {
    let mut s = header();
    s.push_str("set multiplot layout 2,1\nset xlabel 't'\nset ylabel 'x'\n");
    let mut lines = Vec::new();
    for i in 0..trajectories {
        for j in 0..dim {
            lines.push(format!("'trajectories/traj_{i:03}.csv' using 1:{} with lines", j + 2));
        }
    }
    if lines.is_empty() {
        lines.push("0 notitle".into());
    }
    s.push_str(&format!("plot {}\n", lines.join(", \\\n     ")));
    match stimulus {
        Some(m) => {
            s.push_str("set ylabel 'stimulus'\n");
            let st: Vec<String> = (0..m).map(|j| format!("'stimulus.csv' using 1:{} with lines", j + 2)).collect();
            s.push_str(&format!("plot {}\n", st.join(", ")));
        }
        None => {
            s.push_str("set ylabel '|dx/dt|'\nset logscale y\n");
            let sp: Vec<String> =
                (0..trajectories).map(|i| format!("'trajectories/speed_{i:03}.csv' using 1:2 with lines")).collect();
            s.push_str(&format!("plot {}\n", if sp.is_empty() { "0 notitle".into() } else { sp.join(", ") }));
        }
    }
    s.push_str("unset multiplot\n");
    if snapshots > 0 && dim == 1 {
        s.push_str(&format!(
            "# field snapshots: a(z) at the last stored time\npause -1\nset xlabel 'z'\nset ylabel 'a'\nplot 'field/snapshot_{:05}.csv' every ::1 using 1:2 with lines title 'a(z)'\n",
            snapshots - 1
        ));
    }
    s
}

pub fn pullback_script(sweeps: usize, dim: usize) -> String {
    let mut s = header();
    s.push_str("set xlabel 't0'\nset ylabel 'Hausdorff gap'\nset logscale y\nplot ");
    let lines: Vec<String> =
        (0..sweeps).map(|i| format!("'pullback/sweep_{i:03}.csv' using 1:4 with linespoints")).collect();
    s.push_str(&lines.join(", "));
    s.push('\n');
    if dim >= 2 {
        s.push_str("pause -1\nunset logscale y\nset xlabel 'x_1'\nset ylabel 'x_2'\nplot ");
        let pts: Vec<String> =
            (0..sweeps).map(|i| format!("'pullback/estimate_{i:03}.csv' using 1:2 with points")).collect();
        s.push_str(&pts.join(", "));
        s.push('\n');
    }
    s
}

pub fn forward_script(dim: usize) -> String {
    let mut s = header();
    s.push_str("set multiplot layout 2,1\nset xlabel 't'\nset ylabel 'distance to forward set'\nplot 'forward/attraction.csv' using 1:2 with lines\n");
    if dim >= 2 {
        s.push_str("set xlabel 'x_1'\nset ylabel 'x_2'\nplot 'forward/omega_star.csv' using 1:2 with points\n");
    } else {
        s.push_str("set xlabel 'x_1'\nset ylabel ''\nplot 'forward/omega_star.csv' using 1:(0) with points\n");
    }
    s.push_str("unset multiplot\n");
    s
}
