//! Ready-made problems used by the tests, the acceptance suite and the CLI
//! examples.

use crate::error::Result;
use crate::piecewise::PiecewiseFn;
use crate::problem::SdeProblem;

/// `μ = 1` left of 0 and `-1` from 0 on, `σ ≡ 1`, started at `x0`.
pub fn jump_drift(x0: f64, eps0: f64) -> Result<SdeProblem> {
    SdeProblem::new(x0, PiecewiseFn::step(0.0, 1.0, -1.0)?, PiecewiseFn::constant(1.0), eps0)
}

/// `X = x0 + W`.
pub fn brownian_motion(x0: f64) -> Result<SdeProblem> {
    SdeProblem::new(x0, PiecewiseFn::constant(0.0), PiecewiseFn::constant(1.0), 1.0)
}

/// `X_t = x0 + c·t`.
pub fn constant_drift(x0: f64, c: f64) -> Result<SdeProblem> {
    SdeProblem::new(x0, PiecewiseFn::constant(c), PiecewiseFn::constant(0.0), 1.0)
}

/// Geometric Brownian motion without drift, `σ(x) = x`.
pub fn linear_diffusion(x0: f64) -> Result<SdeProblem> {
    SdeProblem::new(x0, PiecewiseFn::constant(0.0), PiecewiseFn::identity(), 1.0)
}
