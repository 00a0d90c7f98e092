//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.
//!
//! Criteria 6 to 8 share one Monte Carlo run with 400 paths and a reference
//! at 2^-22; on a single core this takes on the order of twenty minutes.

use std::process::ExitCode;
use std::time::Instant;

use admil::brownian::BrownianPath;
use admil::fixtures;
use admil::harness::{
    estimate_error, estimate_errors, fit_rate, ErrorKind, ExperimentPlan, ExperimentSpec, Grid, Method, RateTable,
};
use admil::schemes::{
    eval_trajectory, run_adaptive_qm, run_equidistant, run_transformed, EquidistantKind, Mode, StepController,
};
use admil::transform::{transform_problem, Limit};
use admil::Result;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>, failures: &mut Vec<String>) -> bool {
    let detail = detail.into();
    if !pass {
        failures.push(detail.clone());
    }
    pass
}

fn outcome(failures: Vec<String>, summary: String) -> Outcome {
    if failures.is_empty() {
        Outcome {
            pass: true,
            detail: summary,
        }
    } else {
        Outcome {
            pass: false,
            detail: format!("{summary}; failed: {}", failures.join("; ")),
        }
    }
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn transform_suite() -> Result<Outcome> {
    let p = fixtures::jump_drift(0.5, 1.0)?;
    let tp = transform_problem(&p, None)?;
    let g = tp.params();
    let mut f = Vec::new();
    check(g.alpha() == [1.0], format!("alpha {:?}", g.alpha()), &mut f);
    check(g.rho() == 0.125, format!("rho {}", g.rho()), &mut f);
    check(g.g_eval(0.0) == 0.0, format!("G(0) = {}", g.g_eval(0.0)), &mut f);
    let nu = g.nu();
    for x in [-1.0, -nu, -nu - 1e-9, nu, nu + 1e-9, 0.7, 3.0] {
        check(
            g.g_eval(x) == x,
            format!("G({x}) = {} outside the bump", g.g_eval(x)),
            &mut f,
        );
    }

    let n = 100_000;
    let (lo, hi) = (-2.0 * nu, 2.0 * nu);
    let min_gp = (0..=n)
        .map(|i| g.g_prime(lo + (hi - lo) * i as f64 / n as f64))
        .fold(f64::INFINITY, f64::min);
    check(min_gp > 0.0, format!("min G' = {min_gp}"), &mut f);

    let left = g.g_second(0.0, Limit::Left)?;
    let right = g.g_second(0.0, Limit::Right)?;
    check(
        left == -2.0 && right == 2.0,
        format!("G'' limits ({left}, {right})"),
        &mut f,
    );
    let h = 1e-7;
    let fd_left = (g.g_prime(0.0) - g.g_prime(-h)) / h;
    let fd_right = (g.g_prime(h) - g.g_prime(0.0)) / h;
    check(
        (fd_left - left).abs() <= 1e-4 && (fd_right - right).abs() <= 1e-4,
        format!("finite-difference G'' ({fd_left}, {fd_right})"),
        &mut f,
    );

    let m = 10_000;
    let mut residual: f64 = 0.0;
    for i in 0..=m {
        let x = lo + (hi - lo) * i as f64 / m as f64;
        residual = residual.max((g.g_inverse(g.g_eval(x))? - x).abs());
    }
    check(residual <= 1e-9, format!("round-trip residual {residual:e}"), &mut f);

    let (ml, mr) = tp.drift_limits_at(0);
    check(
        (ml - mr).abs() <= 1e-5 && ml.abs() <= 1e-5 && mr.abs() <= 1e-5,
        format!("transformed drift limits ({ml}, {mr})"),
        &mut f,
    );
    let summary = format!(
        "alpha {:?}, rho {}, min G' {min_gp:.6}, G'' ({left}, {right}) vs one-sided differences ({fd_left:.6}, {fd_right:.6}), round trip {residual:.1e}, drift limits ({ml}, {mr})",
        g.alpha(),
        g.rho()
    );
    Ok(outcome(f, summary))
}

fn controller_suite() -> Result<Outcome> {
    let delta = 1e-6;
    let c = StepController::new(delta, 0.4, &[0.0], Mode::Theory)?;
    let l2 = (1.0 / delta).ln().powi(2);
    let mut f = Vec::new();
    let examples = [(0.5, 1e-6), (0.1, 2.74493e-7), (0.01, 3.64306e-8)];
    for (x, want) in examples {
        let h = c.step_size(x);
        check(
            rel(h, want) <= 1e-5,
            format!("h({x}) = {h:e}, expected {want:e}"),
            &mut f,
        );
    }
    check(
        rel(c.step_size(0.1), (0.1 / l2).powi(2)) <= 1e-6,
        "annulus formula",
        &mut f,
    );
    check(
        rel(c.step_size(0.01), delta * delta * l2 * l2) <= 1e-6,
        "inner formula",
        &mut f,
    );

    let lo = delta * delta * l2 * l2;
    let mut rng_state = 0x2545f4914f6cdd1du64;
    let mut bad = 0;
    for _ in 0..100_000 {
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        let x = (rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        let h = c.step_size(x);
        if !(lo * (1.0 - 1e-12) <= h && h <= delta) {
            bad += 1;
        }
    }
    check(bad == 0, format!("{bad} points outside the step bounds"), &mut f);

    let outer = c.step_size(c.eps1());
    let inner = c.step_size(c.eps2());
    check(rel(outer, delta) <= 1e-12, format!("h(eps1) = {outer:e}"), &mut f);
    check(rel(inner, lo) <= 1e-12, format!("h(eps2) = {inner:e}"), &mut f);
    let rejected = StepController::new(1e-3, 0.4, &[0.0], Mode::Theory).is_err();
    check(rejected, "theory mode accepted delta = 1e-3 with eps0 = 0.4", &mut f);
    Ok(outcome(
        f,
        format!(
            "examples within 1e-5, 1e5 random points in bounds, boundary mismatch {:.1e}",
            rel(outer, delta).max(rel(inner, lo))
        ),
    ))
}

fn brownian_statistics() -> Result<Outcome> {
    let n = 100_000u64;
    let seed = 2024;
    let draw = |i: u64| -> Result<(f64, f64)> {
        let mut path = BrownianPath::new(seed, i);
        let w1 = path.sample_at(1.0)?;
        let wh = path.sample_at(0.5)?;
        Ok((w1, wh - 0.5 * w1))
    };
    let samples = (0..n).into_par_iter().map(draw).collect::<Result<Vec<_>>>()?;
    let nf = n as f64;
    let mean = |v: &mut dyn Iterator<Item = f64>| v.sum::<f64>() / nf;
    let m1 = mean(&mut samples.iter().map(|s| s.0));
    let v1 = samples.iter().map(|s| (s.0 - m1).powi(2)).sum::<f64>() / (nf - 1.0);
    let mr = mean(&mut samples.iter().map(|s| s.1));
    let vr = samples.iter().map(|s| (s.1 - mr).powi(2)).sum::<f64>() / (nf - 1.0);
    let replay = (0..n).into_par_iter().map(draw).collect::<Result<Vec<_>>>()?;
    let identical = samples
        .iter()
        .zip(&replay)
        .all(|(a, b)| a.0.to_bits() == b.0.to_bits() && a.1.to_bits() == b.1.to_bits());

    let mut f = Vec::new();
    check((0.98..=1.02).contains(&v1), format!("Var(W1) = {v1}"), &mut f);
    check(m1.abs() <= 4.0 / nf.sqrt(), format!("mean(W1) = {m1}"), &mut f);
    check(
        (0.245..=0.255).contains(&vr),
        format!("bridge residual variance {vr}"),
        &mut f,
    );
    check(identical, "replay differs", &mut f);
    Ok(outcome(
        f,
        format!("Var(W1) {v1:.4}, mean {m1:.4}, bridge residual variance {vr:.4}, replay bit-exact {identical}"),
    ))
}

fn exactness() -> Result<Outcome> {
    let mut f = Vec::new();
    let bm = fixtures::brownian_motion(0.0)?;
    let mut worst: f64 = 0.0;
    for index in 0..20 {
        let mut path = BrownianPath::new(11, index);
        let w1 = path.sample_at(1.0)?;
        let ctrl = StepController::new(2f64.powi(-10), 1.0, bm.theta(), Mode::Clamped)?;
        let adaptive = run_adaptive_qm(&bm, &ctrl, &mut path)?;
        let transformed = run_transformed(&transform_problem(&bm, None)?, &ctrl, &mut path)?;
        let mut values = vec![eval_trajectory(&adaptive, &mut path, 1.0)?, transformed.x_final];
        for kind in [EquidistantKind::EulerMaruyama, EquidistantKind::QuasiMilstein] {
            for n in [7, 100, 1000] {
                let tr = run_equidistant(&bm, n, &mut path, kind)?;
                values.push(eval_trajectory(&tr, &mut path, 1.0)?);
            }
        }
        for v in values {
            worst = worst.max((v - w1).abs());
        }
    }
    check(worst <= 1e-12, format!("Brownian motion error {worst:e}"), &mut f);

    let (x0, c) = (0.5, 0.75);
    let cd = fixtures::constant_drift(x0, c)?;
    let mut path = BrownianPath::new(12, 0);
    let ctrl = StepController::new(2f64.powi(-8), 1.0, cd.theta(), Mode::Clamped)?;
    let mut finals = vec![
        eval_trajectory(&run_adaptive_qm(&cd, &ctrl, &mut path)?, &mut path, 1.0)?,
        run_transformed(&transform_problem(&cd, None)?, &ctrl, &mut path)?.x_final,
    ];
    for kind in [EquidistantKind::EulerMaruyama, EquidistantKind::QuasiMilstein] {
        for n in [1, 64, 1024] {
            finals.push(eval_trajectory(
                &run_equidistant(&cd, n, &mut path, kind)?,
                &mut path,
                1.0,
            )?);
        }
    }
    let exact = finals.iter().all(|&v| v == x0 + c);
    check(exact, format!("constant drift finals {finals:?}"), &mut f);
    Ok(outcome(
        f,
        format!("Brownian motion max error {worst:.1e} over 8 schemes x 20 paths, constant drift exact {exact}"),
    ))
}

fn increment_scaling() -> Result<Outcome> {
    let p = fixtures::jump_drift(0.5, 1.0)?;
    let tp = transform_problem(&p, None)?;
    let ctrl = StepController::new(2f64.powi(-12), p.eps0(), p.theta(), Mode::Clamped)?;
    let t0 = 0.25;
    let lags: Vec<f64> = (4..=10).map(|k| 2f64.powi(-k)).collect();
    let paths = 1000u64;
    let per_path = (0..paths)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut path = BrownianPath::new(5, i);
            let run = run_transformed(&tp, &ctrl, &mut path)?;
            let x0 = run.x_at(&tp, &mut path, t0)?;
            lags.iter()
                .map(|&d| Ok((run.x_at(&tp, &mut path, t0 + d)? - x0).powi(2)))
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let rms: Vec<f64> = (0..lags.len())
        .map(|j| (per_path.iter().map(|v| v[j]).sum::<f64>() / paths as f64).sqrt())
        .collect();
    let fit = fit_rate(
        &lags.iter().map(|d| d.ln()).collect::<Vec<_>>(),
        &rms.iter().map(|r| r.ln()).collect::<Vec<_>>(),
    )?;
    let mut f = Vec::new();
    check((fit.slope - 0.5).abs() <= 0.1, format!("slope {}", fit.slope), &mut f);
    Ok(outcome(
        f,
        format!(
            "slope {:.4} (r2 {:.4}) over lags 2^-4..2^-10 from t = {t0}",
            fit.slope, fit.r2
        ),
    ))
}

fn print_table(t: &RateTable) {
    println!(
        "  {} ({}), {} paths, delta_ref {:e}",
        t.method.name(),
        t.mode.label(),
        t.paths,
        t.delta_ref
    );
    println!(
        "    {:>12} {:>12} {:>8} {:>12} {:>10}  zones coarse/annulus/inner",
        "delta", "E[N]", "E[N]d", "L2 error", "stderr"
    );
    for r in &t.rows {
        let [a, b, c] = r.branch_fractions;
        println!(
            "    {:>12.4e} {:>12.1} {:>8.3} {:>12.4e} {:>10.2e}  {a:.3}/{b:.3}/{c:.3}",
            r.delta,
            r.mean_cost,
            r.cost_times_delta(),
            r.error_lp,
            r.error_stderr
        );
    }
}

fn cost_ratio(t: &RateTable) -> f64 {
    let nd: Vec<f64> = t.rows.iter().map(|r| r.cost_times_delta()).collect();
    nd.iter().copied().fold(0.0, f64::max) / nd.iter().copied().fold(f64::INFINITY, f64::min)
}

fn desk_scale_plan(method: Method) -> ExperimentSpec {
    let plan = ExperimentPlan {
        method,
        grid: Grid::Deltas((10..=16).map(|k| 2f64.powi(-k)).collect()),
        paths: 400,
        p: 2.0,
        error_kind: ErrorKind::FinalTime,
        delta_ref: Some(2f64.powi(-22)),
        ref_divisor: 64.0,
        seed: 20_240_601,
        mode: Mode::Clamped,
    };
    ExperimentSpec::new(fixtures::jump_drift(0.5, 1.0).expect("fixture"), plan)
}

fn theory_spot_check() -> Result<(Outcome, RateTable)> {
    let plan = ExperimentPlan {
        method: Method::AdaptiveTransformed,
        grid: Grid::Deltas(vec![1e-5, 5e-6, 2.5e-6]),
        paths: 24,
        p: 2.0,
        error_kind: ErrorKind::FinalTime,
        delta_ref: Some(2.5e-6 / 32.0),
        ref_divisor: 32.0,
        seed: 77,
        mode: Mode::Theory,
    };
    let t = estimate_error(&ExperimentSpec::new(fixtures::jump_drift(0.5, 1.0)?, plan))?;
    let errs: Vec<f64> = t.rows.iter().map(|r| r.error_lp).collect();
    let ratio = cost_ratio(&t);
    let mut f = Vec::new();
    check(
        errs.windows(2).all(|w| w[1] < w[0]),
        format!("errors [{}] not decreasing", sci(&errs)),
        &mut f,
    );
    check(ratio <= 4.0, format!("E[N]d ratio {ratio}"), &mut f);
    let o = outcome(f, format!("errors [{}], E[N]d ratio {ratio:.3}", sci(&errs)));
    Ok((o, t))
}

fn convergence(tables: &[RateTable], spot: &Outcome) -> Outcome {
    let t = &tables[0];
    let mut f = Vec::new();
    let (sd, sc) = match (t.fit_delta, t.fit_cost) {
        (Some(d), Some(c)) => (d.slope, c.slope),
        _ => (f64::NAN, f64::NAN),
    };
    check(sd >= 0.85, format!("slope vs delta {sd}"), &mut f);
    check(sc <= -0.85, format!("slope vs cost {sc}"), &mut f);
    if !spot.pass {
        f.push(format!("theory spot check: {}", spot.detail));
    }
    outcome(
        f,
        format!(
            "slope vs delta {sd:.4}, vs mean cost {sc:.4}; theory spot check {}",
            spot.detail
        ),
    )
}

fn separation(tables: &[RateTable]) -> Outcome {
    let slope = |t: &RateTable| t.fit_delta.map_or(f64::NAN, |f| f.slope);
    let (adaptive, equi) = (slope(&tables[0]), slope(&tables[1]));
    let mut f = Vec::new();
    check((0.6..=0.9).contains(&equi), format!("equidistant rate {equi}"), &mut f);
    check(adaptive - equi >= 0.1, format!("gap {}", adaptive - equi), &mut f);
    outcome(
        f,
        format!(
            "equidistant rate {equi:.4}, adaptive rate {adaptive:.4}, gap {:.4}",
            adaptive - equi
        ),
    )
}

fn cost_scaling(tables: &[RateTable]) -> Outcome {
    let t = &tables[0];
    let ratio = cost_ratio(t);
    let mut f = Vec::new();
    check(ratio <= 4.0, format!("E[N]d ratio {ratio}"), &mut f);
    for r in &t.rows {
        check(
            r.mean_cost * r.delta >= 1.0,
            format!("E[N] = {} below 1/delta at {:e}", r.mean_cost, r.delta),
            &mut f,
        );
    }
    let fractions: Vec<String> = t
        .rows
        .iter()
        .map(|r| {
            format!(
                "{:.3}/{:.3}/{:.3}",
                r.branch_fractions[0], r.branch_fractions[1], r.branch_fractions[2]
            )
        })
        .collect();
    outcome(
        f,
        format!("E[N]d ratio {ratio:.3}, zones per delta [{}]", fractions.join(", ")),
    )
}

fn report(id: u32, name: &str, started: Instant, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!(
        "[{tag}] {id}. {name} ({:.1} s): {}",
        started.elapsed().as_secs_f64(),
        o.detail
    );
}

fn run(id: u32, name: &str, f: impl FnOnce() -> Result<Outcome>, all: &mut bool) {
    let started = Instant::now();
    let o = f().unwrap_or_else(|e| Outcome {
        pass: false,
        detail: format!("error: {e}"),
    });
    *all &= o.pass;
    report(id, name, started, &o);
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let mut all = true;
    run(1, "transform properties", transform_suite, &mut all);
    run(2, "step controller", controller_suite, &mut all);
    run(3, "Brownian statistics", brownian_statistics, &mut all);
    run(4, "exactness degeneracies", exactness, &mut all);
    run(5, "increment scaling", increment_scaling, &mut all);

    let started = Instant::now();
    let spot = theory_spot_check();
    let shared = estimate_errors(
        &desk_scale_plan(Method::AdaptiveTransformed),
        &[Method::AdaptiveTransformed, Method::TransformedEquidistantQm],
    );
    match (spot, shared) {
        (Ok((spot, spot_table)), Ok(tables)) => {
            print_table(&spot_table);
            for t in &tables {
                print_table(t);
            }
            let results = [
                (6, "order-one convergence", convergence(&tables, &spot)),
                (7, "rate separation", separation(&tables)),
                (8, "cost scaling", cost_scaling(&tables)),
            ];
            for (id, name, o) in &results {
                all &= o.pass;
                report(*id, name, started, o);
            }
        }
        (spot, shared) => {
            let msg = [spot.err(), shared.err()]
                .into_iter()
                .flatten()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            for (id, name) in [
                (6, "order-one convergence"),
                (7, "rate separation"),
                (8, "cost scaling"),
            ] {
                all = false;
                report(
                    id,
                    name,
                    started,
                    &Outcome {
                        pass: false,
                        detail: format!("error: {msg}"),
                    },
                );
            }
        }
    }

    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria failed");
        ExitCode::FAILURE
    }
}
