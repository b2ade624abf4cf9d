//! Numerical results checked against independent references computed here:
//! closed forms, quadrature, long forward runs and dense scans.

use std::f64::consts::PI;

use plastica_core::attractor::{
    directed_hausdorff, evolve_cloud, forward_attracting_set, forward_attraction_check, forward_limit_set_estimate,
    hausdorff_distance, pullback_attractor_estimate, ForwardMethod, ForwardOptions, ForwardSetOptions, Point,
    PullbackOptions,
};
use plastica_core::checks::{check_c4, check_dissipativity_a2, check_symmetry_potential, RuleDomain};
use plastica_core::field::{
    closed_form_grad_solution, eval_field, evolve_field, gaussian_bump, pullback_limit_grad, Axis, FieldGrid,
    PlasticRule, PotentialRule, TimeFactor,
};
use plastica_core::sampling::ball_cloud;
use plastica_core::stimulus::{make_deterministic_path, make_scalar_path, simulate_sde_path, Drift, SdeSpec};
use plastica_core::trajectory::{flow, RhsSource};
use plastica_core::Sequential;

fn forced_linear() -> RhsSource {
    RhsSource::analytic(1, |x, t, out| out[0] = -x[0] + t.sin())
}

fn entire_solution(t: f64) -> f64 {
    (t.sin() - t.cos()) / 2.0
}

fn interval(lo: f64, hi: f64, step: f64) -> Vec<Point> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| vec![lo + i as f64 * step]).collect()
}

#[test]
fn gaussian_bump_has_mass_one_over_root_two() {
    let h = 1e-3;
    let n = 24_000;
    let mass: f64 = (0..=n)
        .map(|i| {
            let z = -12.0 + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * gaussian_bump(&[z], 1.0)
        })
        .sum::<f64>()
        * h;
    assert!((mass - 0.5f64.sqrt()).abs() < 1e-10, "mass {mass}");
    assert!((gaussian_bump(&[0.0], 1.0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
}

#[test]
fn stepped_gradient_converges_to_closed_form_at_fourth_order() {
    let (k, sigma) = (0.5, 1.0);
    let path = make_scalar_path(f64::sin, -1.0, 5.0, 1e-3).unwrap();
    let rule = PlasticRule::Potential(PotentialRule::new(k, sigma, TimeFactor::Constant { gamma: 1.0 }).unwrap());
    let axes = vec![Axis::new(-3.0, 3.0, 9).unwrap()];
    let grid0 = FieldGrid::from_potential(axes, 0.0, TimeFactor::Constant { gamma: 1.0 }, |z, g| {
        g[0] = z[0];
        0.5 * z[0] * z[0]
    })
    .unwrap();
    let t_end = 4.0;
    let errors: Vec<f64> = [0.4, 0.2, 0.1]
        .iter()
        .map(|&dt| {
            let g = evolve_field(&Sequential, &grid0, &rule, &path, t_end, dt, |_, _| Ok(())).unwrap();
            let grad = &g.potential().unwrap().grad;
            let mut z = [0.0];
            (0..g.n_nodes())
                .map(|i| {
                    g.node_coords(i, &mut z);
                    let exact = closed_form_grad_solution(&z, t_end, 0.0, &[z[0]], k, sigma, &path).unwrap();
                    (grad[i] - exact[0]).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 12.0 && ratio < 20.0, "errors {errors:?}");
    }
}

#[test]
fn pullback_limit_equals_a_long_run_from_zero() {
    let (k, sigma, horizon, t) = (0.5, 1.0, 30.0, 5.0);
    let spec = SdeSpec::new(Drift::double_well(), 0.5, 0.0).unwrap();
    let path = simulate_sde_path(&spec, t - horizon - 1.0, t + 1.0, 1e-3, 11).unwrap();
    let rule = PlasticRule::Potential(PotentialRule::new(k, sigma, TimeFactor::Constant { gamma: 1.0 }).unwrap());
    let axes = vec![Axis::new(-3.0, 3.0, 13).unwrap()];
    let zero = FieldGrid::from_potential(axes, t - horizon, TimeFactor::Constant { gamma: 1.0 }, |_, g| {
        g[0] = 0.0;
        0.0
    })
    .unwrap();
    // Field steps on the stimulus grid never straddle a kink of the path.
    let run = evolve_field(&Sequential, &zero, &rule, &path, t, 1e-3, |_, _| Ok(())).unwrap();
    let mut z = [0.0];
    for i in 0..run.n_nodes() {
        run.node_coords(i, &mut z);
        let limit = pullback_limit_grad(&z, t, k, sigma, &path, horizon).unwrap();
        let stepped = run.potential().unwrap().grad[i];
        assert!((limit.value[0] - stepped).abs() < 1e-9, "z {} limit {} stepped {}", z[0], limit.value[0], stepped);
        assert!(limit.truncation_bound < 1e-6);
    }
}

#[test]
fn ornstein_uhlenbeck_path_has_the_discrete_stationary_variance() {
    let (rate, diffusion, dt) = (1.0, 0.5, 1e-2);
    let spec = SdeSpec::new(Drift::Linear { rate }, diffusion, 0.0).unwrap();
    let path = simulate_sde_path(&spec, 0.0, 4000.0, dt, 3).unwrap();
    // Drop a burn-in of 20 relaxation times.
    let xs: Vec<f64> = (2000..path.len()).map(|i| path.node(i)[0]).collect();
    let batches = 40;
    let len = xs.len() / batches;
    let stats = |f: &dyn Fn(f64) -> f64| {
        let means: Vec<f64> =
            (0..batches).map(|b| xs[b * len..(b + 1) * len].iter().map(|x| f(*x)).sum::<f64>() / len as f64).collect();
        let m = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
        (m, (var / batches as f64).sqrt())
    };
    // Euler-Maruyama on the linear drift is an AR(1) recursion with this exact variance.
    let exact_var = diffusion * diffusion / (rate * (2.0 - rate * dt));
    let (mean, se_mean) = stats(&|x| x);
    let (second, se_second) = stats(&|x| x * x);
    assert!(mean.abs() < 3.0 * se_mean, "mean {mean} se {se_mean}");
    assert!((second - exact_var).abs() < 3.0 * se_second, "second moment {second} vs {exact_var} se {se_second}");
}

#[test]
fn forced_linear_pullback_tracks_the_entire_solution() {
    let src = forced_linear();
    let eps = 1e-3;
    let mut estimates = Vec::new();
    for j in 0..7 {
        let target = 0.5 * j as f64;
        let seq: Vec<f64> = [4.0, 8.0, 12.0, 16.0, 24.0, 32.0].iter().map(|o| target - o).collect();
        let opts = PullbackOptions::new(target, seq, 128, eps, 0.01);
        let sweep = pullback_attractor_estimate(&Sequential, &src, 3.0, &opts).unwrap();
        assert!(sweep.converged(), "target {target}: gaps {:?}", sweep.hausdorff_gaps);
        assert!(sweep.nested.iter().all(|n| *n));
        let best = sweep.best_estimate().clone();
        assert!(best.radius() <= 3.0 + opts.margin);
        for p in &best.points {
            assert!((p[0] - entire_solution(target)).abs() < eps, "target {target}: {p:?}");
        }
        estimates.push(best);
    }
    // Pushing an estimate forward lands on the later estimate.
    for j in 0..6 {
        let (a, b) = (&estimates[j], &estimates[j + 1]);
        let pushed = evolve_cloud(&Sequential, &src, &a.points, a.t.unwrap(), b.t.unwrap(), 0.01, None).unwrap();
        assert!(hausdorff_distance(&pushed, &b.points).unwrap() <= 2.0 * eps);
    }
}

#[test]
fn forced_linear_forward_limit_set_is_the_orbit_band() {
    let src = forced_linear();
    let opts = ForwardOptions {
        method: ForwardMethod::PointCloud,
        t0: 0.0,
        tau_burn: 15.0,
        t_end: 15.0 + 4.0 * PI,
        cloud_n: 16,
        box_size: 0.01,
        eps: 0.02,
        sample_dt: 0.02,
        dt: 0.01,
        margin: 1e-2,
    };
    let limit = forward_limit_set_estimate(&Sequential, &src, 3.0, &opts).unwrap();
    let band: Vec<Point> = (0..2000).map(|i| vec![entire_solution(2.0 * PI * i as f64 / 2000.0)]).collect();
    let gap = hausdorff_distance(&limit.estimate.points, &band).unwrap();
    assert!(gap <= opts.eps + opts.box_size, "gap {gap}");
}

#[test]
fn switching_system_forward_set_is_the_unit_interval() {
    let src = RhsSource::contraction_to_bistable(1, 0.0);
    let opts = ForwardSetOptions {
        method: ForwardMethod::BoxContinuation,
        t0_list: vec![-5.0, 0.0, 1.0, 5.0],
        burn: 10.0,
        t_end: 30.0,
        cloud_n: 512,
        box_size: 0.01,
        eps: 0.02,
        sample_dt: 0.5,
        dt: 0.01,
        margin: 1e-2,
    };
    let set = forward_attracting_set(&Sequential, &src, 2.0, &opts).unwrap();
    let unit = interval(-1.0, 1.0, 1e-3);
    let gap = hausdorff_distance(&set.omega_star.points, &unit).unwrap();
    assert!(gap <= 0.05, "gap {gap}");
    assert_eq!(set.components, 1);
    assert!(set.monotone.iter().all(|m| *m), "{:?}", set.monotone);
    for l in &set.limit_sets {
        assert!(l.estimate.radius() <= 2.0 + opts.margin);
    }

    let ball = ball_cloud(1, 2.0, 256);
    let report =
        forward_attraction_check(&Sequential, &src, &set.omega_star, &[ball], 0.0, 30.0, 0.5, 0.01, 0.02).unwrap();
    assert!(report.attracted[0], "{:?}", report.distances[0].last());
}

#[test]
fn switching_system_pullback_and_forward_disagree() {
    let src = RhsSource::contraction_to_bistable(1, 0.0);
    let opts = PullbackOptions::new(0.0, vec![-1.0, -2.0, -4.0, -8.0, -16.0, -32.0], 512, 0.02, 0.01);
    let sweep = pullback_attractor_estimate(&Sequential, &src, 2.0, &opts).unwrap();
    assert!(sweep.converged());
    let origin = vec![vec![0.0]];
    assert!(hausdorff_distance(&sweep.best_estimate().points, &origin).unwrap() <= 0.02);

    // Forward in time the ball spreads over [-1, 1] and never returns to the origin.
    let mut cloud = ball_cloud(1, 2.0, 512);
    let mut t = 0.0;
    while t < 30.0 {
        cloud = evolve_cloud(&Sequential, &src, &cloud, t, t + 1.0, 0.01, None).unwrap();
        t += 1.0;
        if t >= 5.0 {
            let d = directed_hausdorff(&cloud, &origin).unwrap();
            assert!(d >= 0.5, "t {t}: {d}");
        }
    }
}

#[test]
fn contraction_attracts_the_ball_to_the_origin() {
    let src = RhsSource::analytic(1, |x, _, out| out[0] = -x[0]);
    let origin = plastica_core::attractor::SetEstimate::from_points(vec![vec![0.0]], 0.01, None).unwrap();
    let report =
        forward_attraction_check(&Sequential, &src, &origin, &[ball_cloud(1, 2.0, 64)], 0.0, 25.0, 1.0, 0.01, 1e-9)
            .unwrap();
    assert!(report.attracted[0]);
    assert!(*report.distances[0].last().unwrap() < 2.0 * (-24.0f64).exp());
}

/// Potential field of a bistable stimulus, built from the pullback limit.
fn pullback_potential_field() -> (FieldGrid, PotentialRule) {
    let spec = SdeSpec::new(Drift::double_well(), 0.5, 0.0).unwrap();
    let path = simulate_sde_path(&spec, -40.0, 1.0, 1e-3, 20240611).unwrap();
    let rule = PotentialRule::new(0.5, 1.0, TimeFactor::one_over_t()).unwrap();
    let grid =
        FieldGrid::from_pullback_limit(vec![Axis::new(-4.0, 4.0, 161).unwrap()], 1.0, &rule, &path, 40.0).unwrap();
    (grid, rule)
}

#[test]
fn dissipativity_check_agrees_with_a_dense_shell_scan() {
    let (grid, _) = pullback_potential_field();
    for r_star in [0.5, 1.5, 2.5] {
        let report = check_dissipativity_a2(&Sequential, &grid, r_star, 256, &[1.0], 1e-3).unwrap();
        let dense = (0..=20_000)
            .flat_map(|i| {
                let r = r_star + i as f64 / 20_000.0;
                [r, -r]
            })
            .map(|x| eval_field(&grid, &[x]).unwrap()[0] * x)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(report.worst_value <= dense + 1e-12);
        assert!(dense - report.worst_value < 1e-2, "R* {r_star}: sampled {} dense {dense}", report.worst_value);
        assert_eq!(report.passed, dense <= -1.0 + 1e-3, "R* {r_star}");
    }
}

#[test]
fn c4_check_agrees_with_a_dense_scan_for_the_potential_rule() {
    let rule = PotentialRule::new(0.5, 1.0, TimeFactor::one_over_t()).unwrap();
    let plastic = PlasticRule::Potential(rule);
    let domain = RuleDomain {
        a_max: 2.0,
        x_lo: vec![-4.0],
        x_hi: vec![4.0],
        y_lo: vec![-1.5],
        y_hi: vec![1.5],
        t_lo: 1.0,
        t_hi: 100.0,
    };
    let report = check_c4(&Sequential, &plastic, &domain, 3.0, 4.0, 4096, 1e-3).unwrap();
    // <c, x> is affine in a and monotone in t here, so the maximum sits on the a- and t-edges.
    let mut dense = f64::NEG_INFINITY;
    let mut c = [0.0];
    for ix in 0..=200 {
        let r = 3.0 + ix as f64 / 200.0;
        for x in [r, -r] {
            for iy in 0..=60 {
                let y = -1.5 + 3.0 * iy as f64 / 60.0;
                for a in [-2.0, 2.0] {
                    for t in [1.0, 100.0] {
                        rule.field_rate(&[a], &[x], &[y], t, &mut c).unwrap();
                        dense = dense.max(c[0] * x);
                    }
                }
            }
        }
    }
    // Quasi-random samples approach but rarely hit the corners of the domain.
    assert!(report.worst_value <= dense + 1e-12);
    assert!(report.worst_value >= 0.5 * dense, "sampled {} dense {dense}", report.worst_value);
    assert_eq!(report.passed, dense <= 1e-3);
    assert!(!report.passed);
}

#[test]
fn potential_field_asymmetry_shrinks_at_second_order() {
    let factor = TimeFactor::Constant { gamma: 1.0 };
    let rule = PlasticRule::Potential(PotentialRule::new(0.5, 1.0, factor).unwrap());
    let path = make_deterministic_path(
        |t, out| {
            out[0] = t.sin();
            out[1] = 0.5 * (1.3 * t).cos();
        },
        2,
        0.0,
        2.0,
        1e-3,
    )
    .unwrap();
    let asym: Vec<f64> = [21, 41, 81]
        .iter()
        .map(|&n| {
            let axes = vec![Axis::new(-2.0, 2.0, n).unwrap(), Axis::new(-2.0, 2.0, n).unwrap()];
            // A non-separable initial potential whose mixed derivatives do not cancel.
            let g0 = FieldGrid::from_potential(axes, 0.0, factor, |z, g| {
                let e = (0.5 * z[0] * z[1]).exp();
                g[0] = 0.5 * z[1] * e + z[0];
                g[1] = 0.5 * z[0] * e;
                e + 0.5 * z[0] * z[0]
            })
            .unwrap();
            let g = evolve_field(&Sequential, &g0, &rule, &path, 2.0, 0.05, |_, _| Ok(())).unwrap();
            check_symmetry_potential(&g, 1e-3).unwrap().worst_value
        })
        .collect();
    let orders: Vec<f64> = asym.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    assert!(orders[0] > 1.5 && orders[1] > 1.8, "asymmetry {asym:?}, orders {orders:?}");
}

#[test]
fn gradient_gap_between_two_fields_decays_exponentially() {
    let k = 0.5;
    let factor = TimeFactor::Constant { gamma: 1.0 };
    let rule = PlasticRule::Potential(PotentialRule::new(k, 1.0, factor).unwrap());
    let path = make_scalar_path(f64::sin, -5.0, 5.0, 1e-3).unwrap();
    let axes = || vec![Axis::new(-3.0, 3.0, 64).unwrap()];
    let a = FieldGrid::from_potential(axes(), -5.0, factor, |z, g| {
        g[0] = z[0];
        0.5 * z[0] * z[0]
    })
    .unwrap();
    let b = FieldGrid::from_potential(axes(), -5.0, factor, |z, g| {
        g[0] = -0.3 * z[0].sin();
        0.3 * z[0].cos()
    })
    .unwrap();
    let gap = |x: &FieldGrid, y: &FieldGrid| {
        let (gx, gy) = (&x.potential().unwrap().grad, &y.potential().unwrap().grad);
        gx.iter().zip(gy).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
    };
    let gap0 = gap(&a, &b);
    let mut snaps_b = Vec::new();
    evolve_field(&Sequential, &b, &rule, &path, 5.0, 0.01, |_, g| {
        snaps_b.push(g.clone());
        Ok(())
    })
    .unwrap();
    let mut i = 0;
    evolve_field(&Sequential, &a, &rule, &path, 5.0, 0.01, |_, g| {
        let t = g.t();
        let bound = gap0 * (-k * (t + 5.0)).exp() * (1.0 + 1e-3);
        assert!(gap(g, &snaps_b[i]) <= bound, "t {t}");
        i += 1;
        Ok(())
    })
    .unwrap();
}

#[test]
fn flow_of_the_forced_equation_matches_variation_of_constants() {
    let src = forced_linear();
    let x = flow(&src, &[2.0], 0.0, 6.0, 0.01).unwrap();
    let exact = entire_solution(6.0) + (2.0 - entire_solution(0.0)) * (-6.0f64).exp();
    assert!((x[0] - exact).abs() < 1e-9);
}
