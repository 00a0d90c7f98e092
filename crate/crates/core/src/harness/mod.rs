//! Monte Carlo strong-error and cost estimation against a coupled reference.
//!
//! For every path the reference (transformed adaptive scheme at `δ_ref`)
//! runs first and fixes the Brownian samples; coarse methods only refine the
//! same path afterwards. Per-path outcomes are reduced in path order, so all
//! numbers depend on `(spec, seed)` only and not on the thread count.

mod output;
mod stats;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use output::{summary_json, write_cost_csv, write_rate_csv, COST_HEADER, RATE_HEADER};
pub use stats::{fit_rate, Fit};

use crate::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::problem::{Model, SdeProblem};
use crate::schemes::{
    eval_trajectory, march, run_adaptive_quiet, run_equidistant, EquidistantKind, Mode, StepController, Trajectory,
};
use crate::transform::{transform_problem, TransformedProblem};
use stats::{lp_norm, Moments};

/// Smallest allowed ratio `min(δ)/δ_ref`.
pub const MIN_REFERENCE_RATIO: f64 = 32.0;
pub const DEFAULT_REFERENCE_DIVISOR: f64 = 64.0;
pub const DEFAULT_SUP_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AdaptiveTransformed,
    AdaptiveQm,
    EquidistantEm,
    EquidistantQm,
    TransformedEquidistantQm,
}

impl Method {
    pub fn is_adaptive(self) -> bool {
        matches!(self, Method::AdaptiveTransformed | Method::AdaptiveQm)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::AdaptiveTransformed => "adaptive_transformed",
            Method::AdaptiveQm => "adaptive_qm",
            Method::EquidistantEm => "equidistant_em",
            Method::EquidistantQm => "equidistant_qm",
            Method::TransformedEquidistantQm => "transformed_equidistant_qm",
        }
    }
}

/// Resolutions, given either as step parameters δ or as step counts n.
/// Adaptive methods use `δ = 1/n` on a count grid, equidistant ones
/// `n = round(1/δ)` on a δ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    Deltas(Vec<f64>),
    Steps(Vec<u64>),
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Deltas(d) => d.len(),
            Grid::Steps(n) => n.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The values as written in the config.
    pub fn resolutions(&self) -> Vec<f64> {
        match self {
            Grid::Deltas(d) => d.clone(),
            Grid::Steps(n) => n.iter().map(|&n| n as f64).collect(),
        }
    }

    pub fn deltas(&self) -> Vec<f64> {
        match self {
            Grid::Deltas(d) => d.clone(),
            Grid::Steps(n) => n.iter().map(|&n| 1.0 / n as f64).collect(),
        }
    }

    pub fn steps(&self) -> Vec<u64> {
        match self {
            Grid::Deltas(d) => d.iter().map(|&d| (1.0 / d).round().max(1.0) as u64).collect(),
            Grid::Steps(n) => n.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// `|X̂_1 - X_1|`.
    #[default]
    FinalTime,
    /// `max_j |X̂_{t_j} - X_{t_j}|` over `t_j = j/points`, `j = 1..=points`.
    SupOnGrid { points: usize },
}

impl ErrorKind {
    pub fn times(self) -> Vec<f64> {
        match self {
            ErrorKind::FinalTime => vec![1.0],
            ErrorKind::SupOnGrid { points } => (1..=points).map(|j| j as f64 / points as f64).collect(),
        }
    }
}

fn default_p() -> f64 {
    2.0
}

fn default_divisor() -> f64 {
    DEFAULT_REFERENCE_DIVISOR
}

/// The serializable part of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub method: Method,
    pub grid: Grid,
    pub paths: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub error_kind: ErrorKind,
    /// Defaults to `min(δ)/ref_divisor`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_ref: Option<f64>,
    #[serde(default = "default_divisor")]
    pub ref_divisor: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
}

impl ExperimentPlan {
    pub fn delta_ref(&self) -> f64 {
        let min = self.grid.deltas().into_iter().fold(f64::INFINITY, f64::min);
        self.delta_ref.unwrap_or(min / self.ref_divisor)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub problem: SdeProblem,
    pub plan: ExperimentPlan,
    /// Transform half-width; `None` means `ρ/2`.
    pub nu: Option<f64>,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(problem: SdeProblem, plan: ExperimentPlan) -> Self {
        Self {
            problem,
            plan,
            nu: None,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let plan = &self.plan;
        let bad = |m: String| Err(Error::InvalidExperiment(m));
        if plan.grid.is_empty() {
            return bad("empty resolution grid".into());
        }
        if let Grid::Deltas(d) = &plan.grid {
            if let Some(x) = d.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
                return bad(format!("delta {x} outside (0, 1)"));
            }
        }
        if let Grid::Steps(n) = &plan.grid {
            if n.contains(&0) {
                return bad("step count 0".into());
            }
        }
        if plan.paths < 2 {
            return bad(format!("need at least 2 paths, got {}", plan.paths));
        }
        if !(plan.p >= 1.0 && plan.p.is_finite()) {
            return bad(format!("error order p = {} must be >= 1", plan.p));
        }
        if let ErrorKind::SupOnGrid { points: 0 } = plan.error_kind {
            return bad("sup grid needs at least one point".into());
        }
        if plan.ref_divisor.is_nan() || plan.ref_divisor < MIN_REFERENCE_RATIO {
            return bad(format!("ref_divisor {} below {MIN_REFERENCE_RATIO}", plan.ref_divisor));
        }
        let min = plan.grid.deltas().into_iter().fold(f64::INFINITY, f64::min);
        let dr = plan.delta_ref();
        if !(dr > 0.0 && dr * MIN_REFERENCE_RATIO <= min * (1.0 + 1e-12)) {
            return bad(format!(
                "delta_ref {dr} must be at most min(delta)/{MIN_REFERENCE_RATIO} = {}",
                min / 32.0
            ));
        }
        Ok(())
    }
}

/// Reference scheme: transformed adaptive quasi-Milstein at `δ_ref`.
#[derive(Debug, Clone)]
pub struct ReferenceSolver {
    transform: TransformedProblem,
    ctrl: StepController,
}

impl ReferenceSolver {
    pub fn new(transform: TransformedProblem, delta_ref: f64, mode: Mode) -> Result<Self> {
        let p = transform.original();
        let ctrl = StepController::new(delta_ref, p.eps0(), p.theta(), mode)?;
        Ok(Self { transform, ctrl })
    }

    /// X-space values at the sorted `times ⊂ (0, 1]`, evaluated while the
    /// scheme runs so the trajectory itself is never stored.
    pub fn solve(&self, path: &mut BrownianPath, times: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(times.len());
        let mut k = 0;
        let tp = &self.transform;
        let ctrl = &self.ctrl;
        march(
            tp,
            path,
            ctrl.max_steps(),
            false,
            |_, t, x| {
                let (h, b) = ctrl.classify(x);
                (t + h, b)
            },
            |path, s| {
                while k < times.len() && times[k] <= s.t1 {
                    let z = if times[k] == s.t1 {
                        s.x1
                    } else {
                        s.eval(path, times[k])?
                    };
                    out.push(tp.inverse(z)?);
                    k += 1;
                }
                Ok(())
            },
        )?;
        Ok(out)
    }
}

/// Reference values of `p` on `path` at the sorted `times ⊂ (0, 1]`.
pub fn reference_solution(
    p: &SdeProblem,
    path: &mut BrownianPath,
    delta_ref: f64,
    mode: Mode,
    times: &[f64],
) -> Result<Vec<f64>> {
    ReferenceSolver::new(transform_problem(p, None)?, delta_ref, mode)?.solve(path, times)
}

/// One row of a [`RateTable`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    /// Grid value as configured (δ or n).
    pub resolution: f64,
    pub delta: f64,
    pub mean_cost: f64,
    pub mean_cost_stderr: f64,
    pub error_lp: f64,
    pub error_stderr: f64,
    pub max_cost: u64,
    /// Share of steps in the coarse, annulus and inner zones.
    pub branch_fractions: [f64; 3],
}

impl RateRow {
    pub fn cost_times_delta(&self) -> f64 {
        self.mean_cost * self.delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub method: Method,
    pub mode: Mode,
    pub p: f64,
    pub paths: usize,
    pub delta_ref: f64,
    pub rows: Vec<RateRow>,
    /// `log(error)` against `log(δ)`: the convergence order.
    pub fit_delta: Option<Fit>,
    /// `log(error)` against `log(E[N])`: minus the order in cost.
    pub fit_cost: Option<Fit>,
}

impl RateTable {
    /// Slopes between consecutive rows, `None` for the first.
    pub fn partial_slopes(&self) -> Vec<Option<f64>> {
        let mut out = vec![None];
        for w in self.rows.windows(2) {
            let s = (w[1].error_lp.ln() - w[0].error_lp.ln()) / (w[1].delta.ln() - w[0].delta.ln());
            out.push(s.is_finite().then_some(s));
        }
        out.truncate(self.rows.len());
        out
    }

    fn fit(&mut self) {
        let ok = self.rows.len() >= 3 && self.rows.iter().all(|r| r.error_lp > 0.0);
        if !ok {
            return;
        }
        let ly: Vec<f64> = self.rows.iter().map(|r| r.error_lp.ln()).collect();
        let ld: Vec<f64> = self.rows.iter().map(|r| r.delta.ln()).collect();
        let lc: Vec<f64> = self.rows.iter().map(|r| r.mean_cost.ln()).collect();
        self.fit_delta = fit_rate(&ld, &ly).ok();
        self.fit_cost = fit_rate(&lc, &ly).ok();
    }
}

/// Outcome of one method at one resolution on one path.
#[derive(Debug, Clone, Copy)]
struct Sample {
    error: f64,
    cost: u64,
    branches: [u64; 3],
}

struct Runner<'a> {
    spec: &'a ExperimentSpec,
    transform: TransformedProblem,
    reference: Option<ReferenceSolver>,
    times: Vec<f64>,
    methods: &'a [Method],
    controllers: Vec<Option<StepController>>,
    steps: Vec<u64>,
}

impl Runner<'_> {
    fn run_path(&self, index: u64) -> Result<Vec<Vec<Sample>>> {
        let mut path = BrownianPath::new(self.spec.plan.seed, index);
        let reference = match &self.reference {
            Some(r) => Some(r.solve(&mut path, &self.times)?),
            None => None,
        };
        let mut out = Vec::with_capacity(self.methods.len());
        for &m in self.methods {
            let mut row = Vec::with_capacity(self.steps.len());
            for (ctrl, &n) in self.controllers.iter().zip(&self.steps) {
                let (values, cost, branches) = self.run_method(m, ctrl.as_ref(), n, &mut path)?;
                let error = match &reference {
                    Some(r) => values.iter().zip(r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
                    None => f64::NAN,
                };
                row.push(Sample { error, cost, branches });
            }
            out.push(row);
        }
        Ok(out)
    }

    fn run_method(
        &self,
        method: Method,
        ctrl: Option<&StepController>,
        n: u64,
        path: &mut BrownianPath,
    ) -> Result<(Vec<f64>, u64, [u64; 3])> {
        let p = &self.spec.problem;
        let tp = &self.transform;
        let values_x = |tr: &Trajectory, path: &mut BrownianPath| -> Result<Vec<f64>> {
            self.times.iter().map(|&t| eval_trajectory(tr, path, t)).collect()
        };
        let values_z = |tr: &Trajectory, path: &mut BrownianPath| -> Result<Vec<f64>> {
            self.times
                .iter()
                .map(|&t| tp.inverse(eval_trajectory(tr, path, t)?))
                .collect()
        };
        let (tr, values) = match method {
            Method::AdaptiveTransformed => {
                let tr = run_adaptive_quiet(tp, ctrl.expect("adaptive controller"), path)?;
                let v = values_z(&tr, path)?;
                (tr, v)
            }
            Method::AdaptiveQm => {
                let tr = run_adaptive_quiet(p, ctrl.expect("adaptive controller"), path)?;
                let v = values_x(&tr, path)?;
                (tr, v)
            }
            Method::EquidistantEm | Method::EquidistantQm => {
                let kind = if method == Method::EquidistantEm {
                    EquidistantKind::EulerMaruyama
                } else {
                    EquidistantKind::QuasiMilstein
                };
                let tr = run_equidistant(p, n, path, kind)?;
                let v = values_x(&tr, path)?;
                (tr, v)
            }
            Method::TransformedEquidistantQm => {
                let tr = run_equidistant(tp, n, path, EquidistantKind::QuasiMilstein)?;
                let v = values_z(&tr, path)?;
                (tr, v)
            }
        };
        Ok((values, tr.cost(), tr.branch_counts()))
    }
}

fn simulate(spec: &ExperimentSpec, methods: &[Method], with_reference: bool) -> Result<Vec<RateTable>> {
    spec.validate()?;
    let plan = &spec.plan;
    let p = &spec.problem;
    if methods.contains(&Method::AdaptiveQm) && !p.drift_is_continuous() {
        warn!("adaptive_qm on a discontinuous drift is an ablation without convergence guarantee");
    }
    let transform = transform_problem(p, spec.nu)?;
    let delta_ref = plan.delta_ref();
    let reference = if with_reference {
        Some(ReferenceSolver::new(transform.clone(), delta_ref, plan.mode)?)
    } else {
        None
    };
    let deltas = plan.grid.deltas();
    let adaptive = methods.iter().any(|m| m.is_adaptive());
    let controllers = deltas
        .iter()
        .map(|&d| {
            adaptive
                .then(|| StepController::new(d, p.eps0(), p.theta(), plan.mode))
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    let runner = Runner {
        spec,
        transform,
        reference,
        times: plan.error_kind.times(),
        methods,
        controllers,
        steps: plan.grid.steps(),
    };
    info!(
        "{} paths, {} resolutions, methods {:?}, delta_ref {delta_ref:e}, mode {}",
        plan.paths,
        deltas.len(),
        methods,
        plan.mode.label()
    );

    let seed = plan.seed;
    let work = || -> Vec<Result<Vec<Vec<Sample>>>> {
        (0..plan.paths as u64)
            .into_par_iter()
            .map(|i| {
                runner.run_path(i).map_err(|e| Error::PathFailure {
                    index: i,
                    seed,
                    source: Box::new(e),
                })
            })
            .collect()
    };
    let outcomes = match spec.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidExperiment(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let resolutions = plan.grid.resolutions();
    let mut tables = Vec::with_capacity(methods.len());
    for (mi, &method) in methods.iter().enumerate() {
        let mut rows = Vec::with_capacity(deltas.len());
        for (ri, (&res, &delta)) in resolutions.iter().zip(&deltas).enumerate() {
            let mut cost = Moments::default();
            let mut max_cost = 0;
            let mut branches = [0u64; 3];
            let mut errors = Vec::with_capacity(outcomes.len());
            for o in &outcomes {
                let s = o[mi][ri];
                cost.push(s.cost as f64);
                max_cost = max_cost.max(s.cost);
                for (b, c) in branches.iter_mut().zip(s.branches) {
                    *b += c;
                }
                errors.push(s.error);
            }
            let (error_lp, error_stderr) = if with_reference {
                lp_norm(&errors, plan.p)
            } else {
                (f64::NAN, f64::NAN)
            };
            let total = branches.iter().sum::<u64>().max(1) as f64;
            rows.push(RateRow {
                resolution: res,
                delta,
                mean_cost: cost.mean(),
                mean_cost_stderr: cost.stderr(),
                error_lp,
                error_stderr,
                max_cost,
                branch_fractions: branches.map(|b| b as f64 / total),
            });
        }
        let mut table = RateTable {
            method,
            mode: plan.mode,
            p: plan.p,
            paths: plan.paths,
            delta_ref,
            rows,
            fit_delta: None,
            fit_cost: None,
        };
        if with_reference {
            table.fit();
        }
        tables.push(table);
    }
    Ok(tables)
}

/// Strong error of `spec.plan.method` on every resolution.
pub fn estimate_error(spec: &ExperimentSpec) -> Result<RateTable> {
    Ok(simulate(spec, &[spec.plan.method], true)?.remove(0))
}

/// Like [`estimate_error`] for several methods on the same paths and the
/// same reference; `spec.plan.method` is ignored.
pub fn estimate_errors(spec: &ExperimentSpec, methods: &[Method]) -> Result<Vec<RateTable>> {
    if methods.is_empty() {
        return Err(Error::InvalidExperiment("no methods".into()));
    }
    simulate(spec, methods, true)
}

/// Cost statistics without a reference; the error columns are NaN.
pub fn cost_profile(spec: &ExperimentSpec) -> Result<RateTable> {
    Ok(simulate(spec, &[spec.plan.method], false)?.remove(0))
}

#[cfg(test)]
mod tests;
