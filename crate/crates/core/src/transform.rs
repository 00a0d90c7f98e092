//! The transform `G(x) = x + Σ α_i (x - z_i)|x - z_i| φ((x - z_i)/ν)` that
//! removes drift discontinuities, its inverse, and the transformed SDE.
//!
//! With `α_i = (μ(ξ_i-) - μ(ξ_i+)) / (2σ²(ξ_i))` the process `Z = G(X)`
//! solves an SDE whose drift `μ̃ = (G'μ + ½G''σ²) ∘ G⁻¹` is continuous and
//! whose diffusion is `σ̃ = (G'σ) ∘ G⁻¹`. Each bump is supported on
//! `[z_i - ν, z_i + ν]`, which `G` maps onto itself, so the inverse is
//! the identity outside those intervals and a bracketed Newton solve inside.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::piecewise::{agree, check_sorted, Piece, PiecewiseFn, Side};
use crate::problem::{Coefficients, Model, SdeProblem};

pub const DEFAULT_INVERSE_TOL: f64 = 1e-12;
pub const DEFAULT_INVERSE_MAX_ITER: usize = 100;

/// `φ(x) = (1 - x²)⁴ on [-1, 1]`, with `φ'` and `φ''`.
#[inline]
pub fn bump(x: f64) -> (f64, f64, f64) {
    if x.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let q = 1.0 - x * x;
    let q2 = q * q;
    (q2 * q2, -8.0 * x * q2 * q, 8.0 * q2 * (7.0 * x * x - 1.0))
}

#[inline]
fn bump_third(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        return 0.0;
    }
    -48.0 * x * (1.0 - x * x) * (7.0 * x * x - 3.0)
}

/// One `α` per point of `theta`; zero exactly where μ is continuous.
pub fn compute_alpha(p: &SdeProblem) -> Result<Vec<f64>> {
    p.theta()
        .iter()
        .map(|&xi| {
            let s = p.sigma().eval(xi);
            if s == 0.0 || !s.is_finite() {
                return Err(Error::DegenerateDiffusion { xi });
            }
            let (left, right) = p.drift_limits(xi);
            Ok((left - right) / (2.0 * s * s))
        })
        .collect()
}

/// Largest admissible bump radius (exclusive), with `1/0 = ∞`.
pub fn compute_rho(z: &[f64], alpha: &[f64]) -> f64 {
    let from_alpha = alpha
        .iter()
        .map(|a| 1.0 / (8.0 * a.abs()))
        .fold(f64::INFINITY, f64::min);
    let from_gaps = z.windows(2).map(|w| 0.5 * (w[1] - w[0])).fold(f64::INFINITY, f64::min);
    from_alpha.min(from_gaps)
}

/// Which value of `G''` to report at a point `z_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    Left,
    Right,
    /// The value that makes `μ̃` continuous, defined only at the `z_i`.
    Extended,
}

#[derive(Debug, Clone)]
pub struct TransformParams {
    z: Vec<f64>,
    alpha: Vec<f64>,
    nu: f64,
    rho: f64,
    pub inverse_tol: f64,
    pub inverse_max_iter: usize,
    extension: Option<Vec<f64>>,
}

/// Per-bump quantities at one point: `(T', T'', T''')` of the correction term.
#[derive(Debug, Clone, Copy, Default)]
struct TermDerivs {
    d1: f64,
    d2: f64,
    d3: f64,
}

impl TransformParams {
    /// `nu = None` picks `ρ/2`, or 1 when `ρ = ∞`.
    pub fn new(z: Vec<f64>, alpha: Vec<f64>, nu: Option<f64>) -> Result<Self> {
        check_sorted(&z)?;
        if z.len() != alpha.len() {
            return Err(Error::InvalidParameter(format!(
                "{} transform centres but {} alphas",
                z.len(),
                alpha.len()
            )));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter("non-finite alpha".into()));
        }
        let rho = compute_rho(&z, &alpha);
        let nu = nu.unwrap_or(if rho.is_finite() { 0.5 * rho } else { 1.0 });
        if !(nu > 0.0 && nu < rho) {
            return Err(Error::InadmissibleNu { nu, rho });
        }
        Ok(Self {
            z,
            alpha,
            nu,
            rho,
            inverse_tol: DEFAULT_INVERSE_TOL,
            inverse_max_iter: DEFAULT_INVERSE_MAX_ITER,
            extension: None,
        })
    }

    /// Centres at `theta`, `α` from the drift jumps, and the extended `G''`
    /// values at the centres.
    pub fn for_problem(p: &SdeProblem, nu: Option<f64>) -> Result<Self> {
        let alpha = compute_alpha(p)?;
        let mut tp = Self::new(p.theta().to_vec(), alpha, nu)?;
        let ext =
            tp.z.iter()
                .zip(&tp.alpha)
                .map(|(&xi, &a)| {
                    let s = p.sigma().eval(xi);
                    let (_, right) = p.drift_limits(xi);
                    2.0 * a + 2.0 * (right - p.mu().eval(xi)) / (s * s)
                })
                .collect();
        tp.extension = Some(ext);
        Ok(tp)
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// True when every `α_i` is zero, so `G` is the identity.
    pub fn is_identity(&self) -> bool {
        self.alpha.iter().all(|&a| a == 0.0)
    }

    /// Index of the bump whose open support contains `x`.
    #[inline]
    fn bump_at(&self, x: f64) -> Option<usize> {
        let i = self.z.partition_point(|&c| c < x);
        if i < self.z.len() && self.z[i] - x < self.nu {
            Some(i)
        } else if i > 0 && x - self.z[i - 1] < self.nu {
            Some(i - 1)
        } else {
            None
        }
    }

    #[inline]
    fn term_value(&self, i: usize, x: f64) -> f64 {
        let u = x - self.z[i];
        self.alpha[i] * u * u.abs() * bump(u / self.nu).0
    }

    /// `(T, T')` of bump term `i`.
    #[inline]
    fn term_value_slope(&self, i: usize, x: f64) -> (f64, f64) {
        let a = self.alpha[i];
        let u = x - self.z[i];
        let au = u.abs();
        let (p0, p1, _) = bump(u / self.nu);
        (a * u * au * p0, a * (2.0 * au * p0 + u * au * p1 / self.nu))
    }

    /// Derivatives of bump term `i`; `side` resolves `sgn(0)`.
    #[inline]
    fn term_derivs<const THIRD: bool>(&self, i: usize, x: f64, side: Side) -> TermDerivs {
        let a = self.alpha[i];
        let nu = self.nu;
        let u = x - self.z[i];
        let s = if u > 0.0 {
            1.0
        } else if u < 0.0 {
            -1.0
        } else {
            match side {
                Side::Left => -1.0,
                Side::Right => 1.0,
            }
        };
        let au = u.abs();
        let v = u / nu;
        let (p0, p1, p2) = bump(v);
        let p3 = if THIRD { bump_third(v) } else { 0.0 };
        TermDerivs {
            d1: a * (2.0 * au * p0 + u * au * p1 / nu),
            d2: a * (2.0 * s * p0 + 4.0 * au * p1 / nu + u * au * p2 / (nu * nu)),
            d3: a * (6.0 * s * p1 / nu + 6.0 * au * p2 / (nu * nu) + u * au * p3 / (nu * nu * nu)),
        }
    }

    #[inline]
    fn derivs(&self, x: f64, side: Side) -> TermDerivs {
        self.bump_at(x)
            .map_or_else(TermDerivs::default, |i| self.term_derivs::<true>(i, x, side))
    }

    /// [`Self::derivs`] without `T'''`.
    #[inline]
    fn derivs12(&self, x: f64, side: Side) -> TermDerivs {
        self.bump_at(x)
            .map_or_else(TermDerivs::default, |i| self.term_derivs::<false>(i, x, side))
    }

    #[inline]
    pub fn g_eval(&self, x: f64) -> f64 {
        match self.bump_at(x) {
            Some(i) => x + self.term_value(i, x),
            None => x,
        }
    }

    #[inline]
    pub fn g_prime(&self, x: f64) -> f64 {
        1.0 + self.derivs12(x, Side::Right).d1
    }

    /// `G''` off the centres; at a centre the requested one-sided limit or
    /// the extended value.
    pub fn g_second(&self, x: f64, limit: Limit) -> Result<f64> {
        match limit {
            Limit::Left => Ok(self.derivs12(x, Side::Left).d2),
            Limit::Right => Ok(self.derivs12(x, Side::Right).d2),
            Limit::Extended => {
                let i = self.z.iter().position(|&c| c == x).ok_or(Error::NotABreakpoint(x))?;
                self.extension
                    .as_ref()
                    .map(|e| e[i])
                    .ok_or_else(|| Error::InvalidParameter("transform was not built from a problem".into()))
            }
        }
    }

    pub fn g_third(&self, x: f64, side: Side) -> f64 {
        self.derivs(x, side).d3
    }

    /// Solves `G(x) = y` to `|G(x) - y| ≤ inverse_tol·max(1, |y|)`.
    pub fn g_inverse(&self, y: f64) -> Result<f64> {
        let Some(i) = self.bump_at(y) else {
            return Ok(y);
        };
        if self.alpha[i] == 0.0 {
            return Ok(y);
        }
        let tol = self.inverse_tol * y.abs().max(1.0);
        let (mut lo, mut hi) = (self.z[i] - self.nu, self.z[i] + self.nu);
        // One fixed-point step of x = y - T(x) is already close.
        let mut x = (y - self.term_value(i, y)).clamp(lo, hi);
        let mut best = (f64::INFINITY, x);
        for iter in 1..=self.inverse_max_iter {
            let (tv, ts) = self.term_value_slope(i, x);
            let r = x + tv - y;
            if r.abs() < best.0 {
                best = (r.abs(), x);
            }
            if r.abs() <= tol {
                return Ok(x);
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = x - r / (1.0 + ts);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if next == x {
                return Err(Error::InverseNotConverged {
                    y,
                    best: best.1,
                    residual: best.0,
                    iterations: iter,
                });
            }
            x = next;
        }
        Err(Error::InverseNotConverged {
            y,
            best: best.1,
            residual: best.0,
            iterations: self.inverse_max_iter,
        })
    }

    /// Smallest `G'` over `n` uniform points of `[lo, hi]`.
    pub fn min_g_prime(&self, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / (n.max(2) - 1) as f64;
        (0..n.max(2))
            .map(|j| self.g_prime(lo + h * j as f64))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug)]
struct Inner {
    problem: SdeProblem,
    params: TransformParams,
    identity: bool,
    z0: f64,
}

impl Inner {
    /// `(μ̃, σ̃, σ̃')` at `x = G⁻¹(z)` using the pieces adjacent on `side`.
    #[inline]
    fn sided(&self, x: f64, side: Side) -> (f64, f64, f64) {
        let p = &self.problem;
        let tp = &self.params;
        let mu = p.mu().eval_side(x, side).0;
        let (s, ds) = p.sigma().eval_side(x, side);
        let t = tp.derivs12(x, side);
        let g1 = 1.0 + t.d1;
        (g1 * mu + 0.5 * t.d2 * s * s, g1 * s, (t.d2 * s + g1 * ds) / g1)
    }

    /// Derivative of `μ̃` on one side.
    fn drift_slope(&self, x: f64, side: Side) -> f64 {
        let p = &self.problem;
        let (mu, dmu) = p.mu().eval_side(x, side);
        let (s, ds) = p.sigma().eval_side(x, side);
        let t = self.params.derivs(x, side);
        let g1 = 1.0 + t.d1;
        (t.d2 * mu + g1 * dmu + 0.5 * t.d3 * s * s + t.d2 * s * ds) / g1
    }

    fn extended_drift(&self, i: usize) -> f64 {
        let xi = self.params.z[i];
        let s = self.problem.sigma().eval(xi);
        let g2 = self.params.extension.as_ref().map_or(0.0, |e| e[i]);
        self.problem.mu().eval(xi) + 0.5 * g2 * s * s
    }

    fn coefficients(&self, z: f64) -> Result<Coefficients> {
        if self.identity {
            return self.problem.coefficients(z);
        }
        let x = self.params.g_inverse(z)?;
        let theta = self.problem.theta();
        let i = theta.partition_point(|&b| b < x);
        if i < theta.len() && theta[i] == x {
            let (_, sig, dl) = self.sided(x, Side::Left);
            let (_, _, dr) = self.sided(x, Side::Right);
            let dsig = if agree(dl, dr) { 0.5 * (dl + dr) } else { 0.0 };
            return Ok(Coefficients {
                mu: self.extended_drift(i),
                sigma: sig,
                sig_dsig: sig * dsig,
            });
        }
        let (mu, sig, dsig) = self.sided(x, Side::Right);
        Ok(Coefficients {
            mu,
            sigma: sig,
            sig_dsig: sig * dsig,
        })
    }
}

/// The SDE for `Z = G(X)`. Coefficients are evaluated lazily through
/// `G⁻¹`; the breakpoints stay at `theta` because `G` fixes each `ξ_i`.
#[derive(Debug, Clone)]
pub struct TransformedProblem {
    inner: Arc<Inner>,
}

impl TransformedProblem {
    pub fn params(&self) -> &TransformParams {
        &self.inner.params
    }

    pub fn original(&self) -> &SdeProblem {
        &self.inner.problem
    }

    /// True when the drift is already continuous and `G` is the identity.
    pub fn is_identity(&self) -> bool {
        self.inner.identity
    }

    pub fn forward(&self, x: f64) -> f64 {
        if self.inner.identity {
            x
        } else {
            self.inner.params.g_eval(x)
        }
    }

    pub fn inverse(&self, z: f64) -> Result<f64> {
        if self.inner.identity {
            Ok(z)
        } else {
            self.inner.params.g_inverse(z)
        }
    }

    /// `(μ̃(ξ-), μ̃(ξ+))` evaluated from the one-sided pieces at a centre.
    pub fn drift_limits_at(&self, i: usize) -> (f64, f64) {
        let xi = self.inner.params.z[i];
        (self.inner.sided(xi, Side::Left).0, self.inner.sided(xi, Side::Right).0)
    }

    /// The transformed coefficients as piecewise functions, for validation
    /// and inspection. Inversion failures surface as NaN.
    pub fn to_problem(&self) -> Result<SdeProblem> {
        let theta = self.inner.problem.theta().to_vec();
        let k = theta.len();
        let side_for = move |theta: &[f64], i: usize, x: f64| {
            if i < theta.len() && x >= theta[i] {
                Side::Left
            } else {
                Side::Right
            }
        };
        let mut mu_pieces = Vec::with_capacity(k + 1);
        let mut sigma_pieces = Vec::with_capacity(k + 1);
        for i in 0..=k {
            let inner = Arc::clone(&self.inner);
            let th = theta.clone();
            mu_pieces.push(Piece::custom(move |z| {
                let Ok(x) = inner.params.g_inverse(z) else {
                    return (f64::NAN, f64::NAN);
                };
                let side = side_for(&th, i, x);
                (inner.sided(x, side).0, inner.drift_slope(x, side))
            }));
            let inner = Arc::clone(&self.inner);
            let th = theta.clone();
            sigma_pieces.push(Piece::custom(move |z| {
                let Ok(x) = inner.params.g_inverse(z) else {
                    return (f64::NAN, f64::NAN);
                };
                let (_, s, ds) = inner.sided(x, side_for(&th, i, x));
                (s, ds)
            }));
        }
        let mu_at: Vec<f64> = (0..k).map(|i| self.inner.extended_drift(i)).collect();
        let sigma_at: Vec<f64> = theta.iter().map(|&xi| self.inner.problem.sigma().eval(xi)).collect();
        let mu = PiecewiseFn::new(theta.clone(), mu_pieces, Some(mu_at))?;
        let sigma = PiecewiseFn::new(theta, sigma_pieces, Some(sigma_at))?;
        SdeProblem::new(self.inner.z0, mu, sigma, self.inner.problem.eps0())
    }
}

impl Model for TransformedProblem {
    fn x0(&self) -> f64 {
        self.inner.z0
    }

    fn theta(&self) -> &[f64] {
        self.inner.problem.theta()
    }

    fn eps0(&self) -> f64 {
        self.inner.problem.eps0()
    }

    #[inline]
    fn coefficients(&self, z: f64) -> Result<Coefficients> {
        self.inner.coefficients(z)
    }
}

/// Builds the transformed SDE. The initial value maps to `G(x0)`.
pub fn transformed_problem(p: &SdeProblem, tp: TransformParams) -> Result<TransformedProblem> {
    if tp.z() != p.theta() {
        return Err(Error::InvalidParameter(
            "transform centres must equal the problem breakpoints".into(),
        ));
    }
    let identity = tp.is_identity();
    let z0 = if identity { p.x0() } else { tp.g_eval(p.x0()) };
    Ok(TransformedProblem {
        inner: Arc::new(Inner {
            problem: p.clone(),
            params: tp,
            identity,
            z0,
        }),
    })
}

/// Shorthand for [`TransformParams::for_problem`] plus [`transformed_problem`].
pub fn transform_problem(p: &SdeProblem, nu: Option<f64>) -> Result<TransformedProblem> {
    transformed_problem(p, TransformParams::for_problem(p, nu)?)
}
