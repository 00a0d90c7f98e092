//! The SDE container and sample-based checks of the standing assumptions.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::piecewise::{nearest_distance, PiecewiseFn};

/// Grid size used for the per-piece Lipschitz estimates.
pub const LIPSCHITZ_SAMPLES: usize = 1000;
/// Half-width of the sampled window on unbounded pieces.
pub const UNBOUNDED_WINDOW: f64 = 10.0;
/// Offset at which one-sided limits are checked against the pieces.
pub const LIMIT_PROBE: f64 = 1e-8;
/// Allowed mismatch between a one-sided limit and the probed piece value.
pub const LIMIT_TOL: f64 = 1e-6;

/// Coefficients of one quasi-Milstein step at the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub mu: f64,
    pub sigma: f64,
    /// `σ·d_σ`, the quasi-Milstein correction factor.
    pub sig_dsig: f64,
}

/// Anything a scheme can integrate.
pub trait Model: Send + Sync {
    fn x0(&self) -> f64;

    /// Sorted points where the step controller refines.
    fn theta(&self) -> &[f64];

    fn eps0(&self) -> f64;

    fn coefficients(&self, x: f64) -> Result<Coefficients>;

    fn drift_is_continuous(&self) -> bool {
        true
    }
}

/// `dX = μ(X) dt + σ(X) dW`, `X_0 = x0`.
#[derive(Debug, Clone)]
pub struct SdeProblem {
    x0: f64,
    mu: PiecewiseFn,
    sigma: PiecewiseFn,
    theta: Vec<f64>,
    eps0: f64,
}

impl SdeProblem {
    /// `theta` is the sorted union of the drift and diffusion breakpoints.
    pub fn new(x0: f64, mu: PiecewiseFn, sigma: PiecewiseFn, eps0: f64) -> Result<Self> {
        if !x0.is_finite() {
            return Err(Error::InvalidParameter(format!("x0 = {x0} is not finite")));
        }
        if !(eps0 > 0.0 && eps0 <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps0 = {eps0} outside (0, 1]")));
        }
        let mut theta: Vec<f64> = mu.breakpoints().iter().chain(sigma.breakpoints()).copied().collect();
        theta.sort_by(f64::total_cmp);
        theta.dedup();
        Ok(Self {
            x0,
            mu,
            sigma,
            theta,
            eps0,
        })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn mu(&self) -> &PiecewiseFn {
        &self.mu
    }

    pub fn sigma(&self) -> &PiecewiseFn {
        &self.sigma
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    /// `(μ(ξ-), μ(ξ+))` at a point of `theta`; equal when μ has no
    /// breakpoint there.
    pub fn drift_limits(&self, xi: f64) -> (f64, f64) {
        let bp = self.mu.breakpoints();
        match bp.iter().position(|&b| b == xi) {
            Some(i) => self.mu.one_sided_limits()[i],
            None => {
                let v = self.mu.eval(xi);
                (v, v)
            }
        }
    }
}

impl Model for SdeProblem {
    fn x0(&self) -> f64 {
        self.x0
    }

    fn theta(&self) -> &[f64] {
        &self.theta
    }

    fn eps0(&self) -> f64 {
        self.eps0
    }

    #[inline]
    fn coefficients(&self, x: f64) -> Result<Coefficients> {
        let sigma = self.sigma.eval(x);
        Ok(Coefficients {
            mu: self.mu.eval(x),
            sigma,
            sig_dsig: sigma * self.sigma.eval_d(x),
        })
    }

    fn drift_is_continuous(&self) -> bool {
        self.mu.is_continuous()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Assumption {
    /// Breakpoint values agree with the adjacent pieces.
    OneSidedLimits,
    /// Supplied derivatives agree with finite differences of the values.
    DerivativeConsistency,
    /// μ Lipschitz on each piece.
    Mu1,
    /// μ' Lipschitz on each piece.
    Mu2,
    /// σ Lipschitz on ℝ and σ(ξ_i) ≠ 0.
    Sigma1,
    /// σ' Lipschitz on each piece.
    Sigma2,
    /// ε₀ ≤ ½·min gap between breakpoints.
    GapCondition,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Assumption::OneSidedLimits => "one-sided limits",
            Assumption::DerivativeConsistency => "derivative consistency",
            Assumption::Mu1 => "(μ1)",
            Assumption::Mu2 => "(μ2)",
            Assumption::Sigma1 => "(σ1)",
            Assumption::Sigma2 => "(σ2)",
            Assumption::GapCondition => "gap condition",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub assumption: Assumption,
    pub passed: bool,
    pub detail: String,
    /// Sampled Lipschitz constants, one per piece, when applicable.
    pub lipschitz: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Informational: whether μ is continuous on ℝ.
    pub drift_continuous: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, a: Assumption) -> Option<&Check> {
        self.checks.iter().find(|c| c.assumption == a)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(
                f,
                "[{}] {}: {}",
                if c.passed { "pass" } else { "FAIL" },
                c.assumption,
                c.detail
            )?;
            if !c.lipschitz.is_empty() {
                let est: Vec<String> = c.lipschitz.iter().map(|l| format!("{l:.4e}")).collect();
                write!(f, " (sampled Lipschitz: {})", est.join(", "))?;
            }
            writeln!(f)?;
        }
        writeln!(
            f,
            "drift is {}",
            if self.drift_continuous {
                "continuous"
            } else {
                "discontinuous"
            }
        )
    }
}

/// Sampling interval for piece `i` of a function with breakpoints `bp`.
/// Unbounded pieces are cut to a window around the breakpoints (or `x0`).
fn piece_window(bp: &[f64], i: usize, x0: f64) -> (f64, f64) {
    let (lo_anchor, hi_anchor) = match (bp.first(), bp.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (x0, x0),
    };
    let lo = if i == 0 {
        lo_anchor - UNBOUNDED_WINDOW
    } else {
        bp[i - 1]
    };
    let hi = if i == bp.len() {
        hi_anchor + UNBOUNDED_WINDOW
    } else {
        bp[i]
    };
    (lo, hi)
}

/// Interior sample grid on `(lo, hi)`.
fn sample_grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let n = LIPSCHITZ_SAMPLES;
    let h = (hi - lo) / (n + 1) as f64;
    (1..=n).map(move |j| lo + h * j as f64)
}

fn lipschitz_estimate(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
        .fold(0.0, |acc, v| {
            if v.is_nan() || acc.is_nan() {
                f64::NAN
            } else {
                acc.max(v)
            }
        })
}

struct PieceStats {
    lip_value: Vec<f64>,
    lip_derivative: Vec<f64>,
    worst_derivative_mismatch: f64,
}

fn piece_stats(f: &PiecewiseFn, x0: f64) -> PieceStats {
    let bp = f.breakpoints();
    let mut stats = PieceStats {
        lip_value: Vec::new(),
        lip_derivative: Vec::new(),
        worst_derivative_mismatch: 0.0,
    };
    for (i, piece) in f.pieces().iter().enumerate() {
        let (lo, hi) = piece_window(bp, i, x0);
        let xs: Vec<f64> = sample_grid(lo, hi).collect();
        let (vals, ders): (Vec<f64>, Vec<f64>) = xs.iter().map(|&x| piece.eval(x)).unzip();
        stats.lip_value.push(lipschitz_estimate(&xs, &vals));
        stats.lip_derivative.push(lipschitz_estimate(&xs, &ders));
        let h = 1e-6 * (hi - lo).min(1.0);
        for &x in xs.iter().step_by(10) {
            let fd = (piece.value(x + h) - piece.value(x - h)) / (2.0 * h);
            let d = piece.eval(x).1;
            let rel = (d - fd).abs() / d.abs().max(1.0);
            if rel.is_nan() || rel > stats.worst_derivative_mismatch {
                stats.worst_derivative_mismatch = rel;
            }
        }
    }
    stats
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn limits_consistent(f: &PiecewiseFn) -> Option<(f64, f64)> {
    for (i, (&xi, &(l, r))) in f.breakpoints().iter().zip(f.one_sided_limits()).enumerate() {
        let probe_l = f.pieces()[i].value(xi - LIMIT_PROBE);
        let probe_r = f.pieces()[i + 1].value(xi + LIMIT_PROBE);
        let ok = |a: f64, b: f64| (a - b).abs() <= LIMIT_TOL * a.abs().max(1.0);
        if !(ok(l, probe_l) && ok(r, probe_r)) {
            return Some((xi, (l - probe_l).abs().max((r - probe_r).abs())));
        }
    }
    None
}

/// Checks the assumptions on samples. Lipschitz constants are estimates
/// over [`LIPSCHITZ_SAMPLES`] grid points per piece, never proofs.
pub fn validate_problem(p: &SdeProblem) -> ValidationReport {
    let mut checks = Vec::new();
    let mu = piece_stats(&p.mu, p.x0);
    let sigma = piece_stats(&p.sigma, p.x0);

    let bad_limits = limits_consistent(&p.mu).or_else(|| limits_consistent(&p.sigma));
    checks.push(Check {
        assumption: Assumption::OneSidedLimits,
        passed: bad_limits.is_none(),
        detail: match bad_limits {
            None => "breakpoint limits match adjacent pieces".into(),
            Some((xi, err)) => format!("limit mismatch {err:.3e} at {xi}"),
        },
        lipschitz: Vec::new(),
    });

    let worst = mu.worst_derivative_mismatch.max(sigma.worst_derivative_mismatch);
    checks.push(Check {
        assumption: Assumption::DerivativeConsistency,
        passed: worst <= 1e-4,
        detail: format!("worst relative mismatch against central differences {worst:.3e}"),
        lipschitz: Vec::new(),
    });

    checks.push(Check {
        assumption: Assumption::Mu1,
        passed: all_finite(&mu.lip_value),
        detail: "drift Lipschitz on each piece".into(),
        lipschitz: mu.lip_value,
    });
    checks.push(Check {
        assumption: Assumption::Mu2,
        passed: all_finite(&mu.lip_derivative),
        detail: "drift derivative Lipschitz on each piece".into(),
        lipschitz: mu.lip_derivative,
    });

    let mut sigma1 = Vec::new();
    for (i, xi) in p.sigma.breakpoints().iter().enumerate() {
        if !p.sigma.is_continuous_at(i) {
            sigma1.push(format!("sigma jumps at {xi}"));
        }
    }
    for &xi in &p.theta {
        let s = p.sigma.eval(xi);
        if s == 0.0 || !s.is_finite() {
            sigma1.push(format!("sigma({xi}) = {s}, must be nonzero"));
        }
    }
    if !all_finite(&sigma.lip_value) {
        sigma1.push("sigma not Lipschitz on samples".into());
    }
    let sigma_global = sigma.lip_value.iter().copied().fold(0.0, f64::max);
    checks.push(Check {
        assumption: Assumption::Sigma1,
        passed: sigma1.is_empty(),
        detail: if sigma1.is_empty() {
            format!("sigma continuous, nonzero on theta, sampled Lipschitz {sigma_global:.4e}")
        } else {
            sigma1.join("; ")
        },
        lipschitz: sigma.lip_value,
    });
    checks.push(Check {
        assumption: Assumption::Sigma2,
        passed: all_finite(&sigma.lip_derivative),
        detail: "diffusion derivative Lipschitz on each piece".into(),
        lipschitz: sigma.lip_derivative,
    });

    let min_gap = p.theta.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let gap_ok = p.theta.len() < 2 || p.eps0 <= 0.5 * min_gap;
    checks.push(Check {
        assumption: Assumption::GapCondition,
        passed: gap_ok,
        detail: if p.theta.len() < 2 {
            format!("eps0 = {} (fewer than two breakpoints)", p.eps0)
        } else {
            format!("eps0 = {} vs half min gap {}", p.eps0, 0.5 * min_gap)
        },
        lipschitz: Vec::new(),
    });

    ValidationReport {
        checks,
        drift_continuous: p.mu.is_continuous(),
    }
}

/// Distance to `theta`, or infinity when there are no breakpoints.
#[inline]
pub(crate) fn distance_or_inf(x: f64, theta: &[f64]) -> f64 {
    if theta.is_empty() {
        f64::INFINITY
    } else {
        nearest_distance(x, theta)
    }
}
