use super::*;
use crate::fixtures::{brownian_motion, jump_drift};
use crate::piecewise::PiecewiseFn;

fn plan(method: Method, grid: Grid, paths: usize) -> ExperimentPlan {
    ExperimentPlan {
        method,
        grid,
        paths,
        p: 2.0,
        error_kind: ErrorKind::FinalTime,
        delta_ref: None,
        ref_divisor: DEFAULT_REFERENCE_DIVISOR,
        seed: 17,
        mode: Mode::Clamped,
    }
}

#[test]
fn reference_is_exact_for_brownian_motion() {
    let p = brownian_motion(0.0).unwrap();
    let mut path = BrownianPath::new(3, 0);
    let v = reference_solution(&p, &mut path, 1.0 / 4096.0, Mode::Clamped, &[1.0]).unwrap();
    assert_eq!(v.len(), 1);
    assert!((v[0] - path.sample_at(1.0).unwrap()).abs() <= 1e-12);
    let grid: Vec<f64> = (1..=10).map(|j| j as f64 / 10.0).collect();
    let mut path = BrownianPath::new(3, 1);
    let v = reference_solution(&p, &mut path, 1.0 / 1000.0, Mode::Clamped, &grid).unwrap();
    for (t, x) in grid.iter().zip(v) {
        assert!((x - path.sample_at(*t).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn reference_is_deterministic_and_matches_stored_run() {
    let p = jump_drift(0.1, 1.0).unwrap();
    let delta = 1.0 / 8192.0;
    let a = reference_solution(&p, &mut BrownianPath::new(5, 2), delta, Mode::Clamped, &[0.3, 1.0]).unwrap();
    let b = reference_solution(&p, &mut BrownianPath::new(5, 2), delta, Mode::Clamped, &[0.3, 1.0]).unwrap();
    assert_eq!(a, b);
    let mut path = BrownianPath::new(5, 2);
    let tp = transform_problem(&p, None).unwrap();
    let ctrl = StepController::new(delta, p.eps0(), p.theta(), Mode::Clamped).unwrap();
    let z = crate::schemes::run_adaptive_qm(&tp, &ctrl, &mut path).unwrap();
    for (t, want) in [0.3, 1.0].into_iter().zip(a) {
        let x = tp.inverse(eval_trajectory(&z, &mut path, t).unwrap()).unwrap();
        assert_eq!(x.to_bits(), want.to_bits());
    }
}

#[test]
fn equidistant_em_is_exact_on_brownian_motion() {
    let p = brownian_motion(1.0).unwrap();
    let spec = ExperimentSpec::new(p, plan(Method::EquidistantEm, Grid::Steps(vec![4, 8, 16]), 8));
    let t = estimate_error(&spec).unwrap();
    assert_eq!(t.rows.len(), 3);
    for r in &t.rows {
        assert!(r.error_lp <= 1e-12, "{}", r.error_lp);
    }
}

#[test]
fn identical_paths_have_zero_stderr() {
    // Without noise both paths produce the same outcome.
    let p = SdeProblem::new(0.0, PiecewiseFn::constant(1.0), PiecewiseFn::constant(0.0), 1.0).unwrap();
    let spec = ExperimentSpec::new(p, plan(Method::EquidistantQm, Grid::Steps(vec![2, 4, 8]), 2));
    let t = estimate_error(&spec).unwrap();
    for r in &t.rows {
        assert_eq!(r.mean_cost_stderr, 0.0);
        assert_eq!(r.error_stderr, 0.0);
    }
}

#[test]
fn results_do_not_depend_on_threads() {
    let p = jump_drift(0.3, 1.0).unwrap();
    let grid = Grid::Deltas(vec![1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]);
    let mut spec = ExperimentSpec::new(p, plan(Method::AdaptiveTransformed, grid, 6));
    spec.threads = Some(1);
    let one = estimate_errors(&spec, &[Method::AdaptiveTransformed, Method::TransformedEquidistantQm]).unwrap();
    spec.threads = Some(3);
    let three = estimate_errors(&spec, &[Method::AdaptiveTransformed, Method::TransformedEquidistantQm]).unwrap();
    assert_eq!(one, three);
    let single = estimate_error(&spec).unwrap();
    assert_eq!(single, one[0]);
}

#[test]
fn coarse_methods_share_the_reference() {
    let p = jump_drift(0.3, 1.0).unwrap();
    let grid = Grid::Deltas(vec![1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]);
    let spec = ExperimentSpec::new(p, plan(Method::AdaptiveTransformed, grid, 4));
    let a = estimate_errors(&spec, &[Method::AdaptiveTransformed]).unwrap();
    let b = estimate_errors(&spec, &[Method::EquidistantEm, Method::AdaptiveTransformed]).unwrap();
    assert_eq!(a[0].rows.len(), b[1].rows.len());
    for (x, y) in a[0].rows.iter().zip(&b[1].rows) {
        assert!(x.error_lp > 0.0 && y.error_lp > 0.0);
    }
}

#[test]
fn cost_profile_far_from_theta() {
    let p = SdeProblem::new(
        10.0,
        PiecewiseFn::step(-1e6, 0.0, 0.0).unwrap(),
        PiecewiseFn::constant(1.0),
        1.0,
    )
    .unwrap();
    let grid = Grid::Deltas(vec![1.0 / 100.0, 1.0 / 300.0]);
    let spec = ExperimentSpec::new(p, plan(Method::AdaptiveTransformed, grid, 3));
    let t = cost_profile(&spec).unwrap();
    assert_eq!(t.rows[0].mean_cost, 100.0);
    assert_eq!(t.rows[1].mean_cost, 300.0);
    for r in &t.rows {
        assert_eq!(r.branch_fractions, [1.0, 0.0, 0.0]);
        assert!(r.error_lp.is_nan());
        assert!(r.mean_cost >= 1.0 / r.delta);
    }
}

#[test]
fn rejects_invalid_specs() {
    let p = jump_drift(0.3, 1.0).unwrap();
    let mut spec = ExperimentSpec::new(p, plan(Method::AdaptiveTransformed, Grid::Deltas(vec![0.01]), 1));
    assert!(matches!(spec.validate(), Err(Error::InvalidExperiment(_))));
    spec.plan.paths = 2;
    assert!(spec.validate().is_ok());
    spec.plan.delta_ref = Some(0.001);
    assert!(spec.validate().is_err());
    spec.plan.delta_ref = None;
    spec.plan.ref_divisor = 8.0;
    assert!(spec.validate().is_err());
    spec.plan.ref_divisor = 64.0;
    spec.plan.grid = Grid::Deltas(vec![1.5]);
    assert!(spec.validate().is_err());
}

#[test]
fn path_failures_carry_index_and_seed() {
    let p = jump_drift(0.3, 1.0).unwrap();
    let mut spec = ExperimentSpec::new(
        p,
        plan(Method::AdaptiveTransformed, Grid::Deltas(vec![0.1, 0.05, 0.01]), 2),
    );
    spec.plan.mode = Mode::Theory;
    // Theory mode refuses these δ before any path runs.
    assert!(matches!(estimate_error(&spec), Err(Error::InadmissibleDelta { .. })));
    let err = Error::PathFailure {
        index: 3,
        seed: 17,
        source: Box::new(Error::StepCapExceeded { cap: 1 }),
    };
    assert!(err.to_string().contains("path 3 (seed 17)"));
}

#[test]
fn csv_layout() {
    let p = jump_drift(0.3, 1.0).unwrap();
    let grid = Grid::Deltas(vec![1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]);
    let spec = ExperimentSpec::new(p, plan(Method::AdaptiveTransformed, grid, 4));
    let t = estimate_error(&spec).unwrap();
    let mut buf = Vec::new();
    write_rate_csv(&t, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], RATE_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(lines[1].ends_with(','));
    assert_eq!(lines[2].split(',').count(), 6);
    let mut buf = Vec::new();
    write_cost_csv(&t, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    let js = summary_json(&[t], serde_json::json!({"k": 1}));
    assert!(js["tables"][0]["slope_vs_delta"]["slope"].is_number());
    assert_eq!(js["spec"]["k"], 1);
}
