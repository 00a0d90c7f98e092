use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::piecewise::check_sorted;
use crate::problem::distance_or_inf;

/// How the zone radii are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `ε₁ = √δ·log²(1/δ)`, `ε₂ = δ·log⁴(1/δ)`; δ must satisfy
    /// `ε₂ ≤ ε₁ ≤ ε₀/2` for every smaller δ as well.
    #[default]
    Theory,
    /// Radii capped at `ε₀/2` and steps capped at δ so that moderate δ
    /// are runnable. Not covered by the convergence theorem.
    Clamped,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Theory => "theory",
            Mode::Clamped => "clamped (not theorem-faithful)",
        }
    }
}

/// Zone of the step-size function a step was taken in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// Distance to the breakpoints at least `ε₁`: step δ.
    Coarse = 0,
    /// Between `ε₂` and `ε₁`: step `(d/log²(1/δ))²`.
    Annulus = 1,
    /// Closer than `ε₂`: step `δ²·log⁴(1/δ)`.
    Inner = 2,
}

pub fn eps1(delta: f64) -> f64 {
    let l = (1.0 / delta).ln();
    delta.sqrt() * l * l
}

pub fn eps2(delta: f64) -> f64 {
    let l = (1.0 / delta).ln();
    delta * l * l * l * l
}

/// Largest `δ₀` with `ε₂^δ ≤ ε₁^δ ≤ ε₀/2` for all `δ ∈ (0, δ₀]`.
///
/// `ε₂ ≤ ε₁` is equivalent to `ε₁ ≤ 1`, and `ε₁` increases on `(0, e⁻⁴)`,
/// so `δ₀` is where `ε₁` first reaches `ε₀/2`.
pub fn theory_delta_max(eps0: f64) -> f64 {
    let target = 0.5 * eps0.min(1.0);
    let (mut lo, mut hi) = (0.0f64, (-4.0f64).exp());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eps1(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// The step-size function `h^δ`.
#[derive(Debug, Clone)]
pub struct StepController {
    delta: f64,
    eps0: f64,
    theta: Vec<f64>,
    eps1: f64,
    eps2: f64,
    log_sq: f64,
    fine: f64,
    mode: Mode,
}

impl StepController {
    pub fn new(delta: f64, eps0: f64, theta: &[f64], mode: Mode) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta = {delta} outside (0, 1)")));
        }
        if !(eps0 > 0.0 && eps0 <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps0 = {eps0} outside (0, 1]")));
        }
        check_sorted(theta)?;
        let l = (1.0 / delta).ln();
        let (mut e1, mut e2) = (eps1(delta), eps2(delta));
        let mut fine = delta * delta * l.powi(4);
        match mode {
            Mode::Theory => {
                let delta_max = theory_delta_max(eps0);
                if !(e2 <= e1 && e1 <= 0.5 * eps0) || delta > delta_max {
                    return Err(Error::InadmissibleDelta { delta, delta_max });
                }
            }
            Mode::Clamped => {
                e1 = e1.min(0.5 * eps0);
                e2 = e2.min(e1);
                fine = fine.min(delta);
            }
        }
        Ok(Self {
            delta,
            eps0,
            theta: theta.to_vec(),
            eps1: e1,
            eps2: e2,
            log_sq: l * l,
            fine,
            mode,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn eps1(&self) -> f64 {
        self.eps1
    }

    pub fn eps2(&self) -> f64 {
        self.eps2
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Step size at `x` and the zone it came from.
    #[inline]
    pub fn classify(&self, x: f64) -> (f64, Branch) {
        let d = distance_or_inf(x, &self.theta);
        if d >= self.eps1 {
            (self.delta, Branch::Coarse)
        } else if d >= self.eps2 {
            let r = d / self.log_sq;
            (r * r, Branch::Annulus)
        } else {
            (self.fine, Branch::Inner)
        }
    }

    #[inline]
    pub fn step_size(&self, x: f64) -> f64 {
        self.classify(x).0
    }

    /// Smallest step the controller can return.
    pub fn min_step(&self) -> f64 {
        if self.theta.is_empty() {
            self.delta
        } else {
            let annulus_min = (self.eps2 / self.log_sq).powi(2);
            self.fine.min(annulus_min).min(self.delta)
        }
    }

    /// Upper bound on the number of steps needed to pass t = 1.
    pub fn max_steps(&self) -> u64 {
        (1.0 / self.min_step()).ceil() as u64
    }
}
