//! Time-continuous quasi-Milstein schemes on a shared Brownian path.
//!
//! Every scheme follows the same recursion: from the node `(τ_i, X_i)` the
//! next node is `τ_{i+1} = next(τ_i, X_i)` and, for `t ∈ (τ_i, τ_{i+1}]`,
//!
//! ```text
//! X_t = X_i + μ(X_i)(t - τ_i) + σ(X_i)(W_t - W_τi) + ½σd_σ(X_i)((W_t - W_τi)² - (t - τ_i))
//! ```
//!
//! The adaptive scheme takes `next = τ_i + h^δ(X_i)`; the equidistant ones
//! take `next = (i + 1)/n`.

mod controller;

use log::warn;
use serde::{Deserialize, Serialize};

pub use controller::{eps1, eps2, theory_delta_max, Branch, Mode, StepController};

use crate::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::problem::{Coefficients, Model, SdeProblem};
use crate::transform::{transform_problem, TransformedProblem};

/// A final node this close to 1, relative to the step, is moved onto 1.
const SNAP: f64 = 1e-9;

/// One quasi-Milstein update.
#[inline]
pub fn qm_step(x: f64, mu: f64, sigma: f64, sig_dsig: f64, dt: f64, dw: f64) -> f64 {
    x + mu * dt + sigma * dw + 0.5 * sig_dsig * (dw * dw - dt)
}

#[inline]
fn apply(x: f64, c: &Coefficients, dt: f64, dw: f64) -> f64 {
    qm_step(x, c.mu, c.sigma, c.sig_dsig, dt, dw)
}

/// Grid nodes `(τ_i, X_i)` with the coefficients used from each node, so
/// the scheme can be evaluated at any `t ∈ [0, τ_N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<f64>,
    /// One entry per step, i.e. per node except the last.
    coeffs: Vec<Coefficients>,
    branch_counts: [u64; 3],
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn coefficients(&self) -> &[Coefficients] {
        &self.coeffs
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.states.iter().copied())
    }

    /// `N = min{i : τ_i ≥ 1}`, the number of Brownian evaluations.
    pub fn cost(&self) -> u64 {
        self.coeffs.len() as u64
    }

    /// Steps taken in the coarse, annulus and inner zones.
    pub fn branch_counts(&self) -> [u64; 3] {
        self.branch_counts
    }

    pub fn end_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }
}

/// One step as seen by a [`march`] observer.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Step {
    pub t0: f64,
    pub x0: f64,
    pub w0: f64,
    pub coeffs: Coefficients,
    pub t1: f64,
    pub x1: f64,
    pub branch: Branch,
}

impl Step {
    /// Continuous extension at `t ∈ (t0, t1]`.
    #[inline]
    pub fn eval(&self, path: &mut BrownianPath, t: f64) -> Result<f64> {
        let dw = path.sample_at(t)? - self.w0;
        Ok(apply(self.x0, &self.coeffs, t - self.t0, dw))
    }
}

/// Runs the recursion until the first node at or beyond t = 1 and returns
/// the number of steps. Queries the path once per step, in time order.
pub(crate) fn march<M: Model + ?Sized>(
    model: &M,
    path: &mut BrownianPath,
    cap: u64,
    euler: bool,
    mut next_time: impl FnMut(u64, f64, f64) -> (f64, Branch),
    mut visit: impl FnMut(&mut BrownianPath, &Step) -> Result<()>,
) -> Result<u64> {
    let (mut t, mut x) = (0.0, model.x0());
    let mut w = path.sample_at(0.0)?;
    let mut n = 0u64;
    while t < 1.0 {
        if n >= cap {
            return Err(Error::StepCapExceeded { cap });
        }
        let mut coeffs = model.coefficients(x)?;
        if euler {
            coeffs.sig_dsig = 0.0;
        }
        let (mut t1, branch) = next_time(n, t, x);
        // Summing n steps of δ ≈ 1/n can fall short of 1 by rounding.
        if t1 < 1.0 && 1.0 - t1 <= SNAP * (t1 - t) {
            t1 = 1.0;
        }
        let w1 = path.sample_at(t1)?;
        let x1 = apply(x, &coeffs, t1 - t, w1 - w);
        let step = Step {
            t0: t,
            x0: x,
            w0: w,
            coeffs,
            t1,
            x1,
            branch,
        };
        visit(path, &step)?;
        (t, x, w) = (t1, x1, w1);
        n += 1;
    }
    Ok(n)
}

fn collect<M: Model + ?Sized>(
    model: &M,
    path: &mut BrownianPath,
    cap: u64,
    euler: bool,
    capacity: usize,
    next_time: impl FnMut(u64, f64, f64) -> (f64, Branch),
) -> Result<Trajectory> {
    let mut tr = Trajectory {
        times: Vec::with_capacity(capacity + 1),
        states: Vec::with_capacity(capacity + 1),
        coeffs: Vec::with_capacity(capacity),
        branch_counts: [0; 3],
    };
    tr.times.push(0.0);
    tr.states.push(model.x0());
    march(model, path, cap, euler, next_time, |_, s| {
        tr.times.push(s.t1);
        tr.states.push(s.x1);
        tr.coeffs.push(s.coeffs);
        tr.branch_counts[s.branch as usize] += 1;
        Ok(())
    })?;
    Ok(tr)
}

/// The adaptive quasi-Milstein scheme with step size `h^δ`.
///
/// The convergence theory assumes a continuous drift; a discontinuous one
/// only triggers a warning so the untransformed scheme can be compared.
pub fn run_adaptive_qm<M: Model + ?Sized>(
    model: &M,
    ctrl: &StepController,
    path: &mut BrownianPath,
) -> Result<Trajectory> {
    if !model.drift_is_continuous() {
        warn!("adaptive quasi-Milstein run on a discontinuous drift; no convergence guarantee");
    }
    run_adaptive_quiet(model, ctrl, path)
}

pub(crate) fn run_adaptive_quiet<M: Model + ?Sized>(
    model: &M,
    ctrl: &StepController,
    path: &mut BrownianPath,
) -> Result<Trajectory> {
    let capacity = (1.0 / ctrl.delta()).ceil().min(1e8) as usize;
    collect(model, path, ctrl.max_steps(), false, capacity, |_, t, x| {
        let (h, branch) = ctrl.classify(x);
        (t + h, branch)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquidistantKind {
    EulerMaruyama,
    QuasiMilstein,
}

/// Fixed grid `τ_i = i/n`; Euler–Maruyama drops the correction term.
pub fn run_equidistant<M: Model + ?Sized>(
    model: &M,
    n: u64,
    path: &mut BrownianPath,
    kind: EquidistantKind,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::InvalidParameter("equidistant scheme needs n >= 1".into()));
    }
    let nf = n as f64;
    let euler = kind == EquidistantKind::EulerMaruyama;
    collect(model, path, n, euler, n.min(100_000_000) as usize, |i, _, _| {
        ((i + 1) as f64 / nf, Branch::Coarse)
    })
}

/// Scheme value at `t`, refining the path by a bridge sample if needed.
pub fn eval_trajectory(tr: &Trajectory, path: &mut BrownianPath, t: f64) -> Result<f64> {
    let end = tr.end_time();
    if !(t >= 0.0 && t <= end) {
        return Err(Error::OutOfRange { t, end });
    }
    let j = tr.times.partition_point(|&s| s < t);
    if tr.times[j] == t {
        return Ok(tr.states[j]);
    }
    let i = j - 1;
    let t0 = tr.times[i];
    let dw = path.increment(t0, t)?;
    Ok(apply(tr.states[i], &tr.coeffs[i], t - t0, dw))
}

/// Adaptive scheme for `Z = G(X)` together with the map back to X-space.
#[derive(Debug, Clone)]
pub struct TransformedRun {
    pub z: Trajectory,
    pub x_final: f64,
}

impl TransformedRun {
    /// `G⁻¹(Ẑ_t)`, and exactly `x0` at `t = 0`.
    pub fn x_at(&self, transform: &TransformedProblem, path: &mut BrownianPath, t: f64) -> Result<f64> {
        let z = eval_trajectory(&self.z, path, t)?;
        if t == 0.0 {
            return Ok(transform.original().x0());
        }
        transform.inverse(z)
    }

    pub fn cost(&self) -> u64 {
        self.z.cost()
    }
}

/// Runs the adaptive scheme on the transformed SDE with a controller built
/// on the original breakpoints, which `G` leaves fixed.
pub fn run_transformed(
    transform: &TransformedProblem,
    ctrl: &StepController,
    path: &mut BrownianPath,
) -> Result<TransformedRun> {
    let z = run_adaptive_qm(transform, ctrl, path)?;
    let x_final = transform.inverse(eval_trajectory(&z, path, 1.0)?)?;
    Ok(TransformedRun { z, x_final })
}

/// Builds the transform (ν = ρ/2) and controller for `p` and runs
/// [`run_transformed`].
pub fn run_transformed_adaptive(
    p: &SdeProblem,
    delta: f64,
    mode: Mode,
    path: &mut BrownianPath,
) -> Result<(TransformedProblem, TransformedRun)> {
    let transform = transform_problem(p, None)?;
    let ctrl = StepController::new(delta, p.eps0(), p.theta(), mode)?;
    let run = run_transformed(&transform, &ctrl, path)?;
    Ok((transform, run))
}
