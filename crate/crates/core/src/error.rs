use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no discontinuities")]
    NoDiscontinuities,

    #[error("breakpoints must be finite and strictly increasing: {0:?}")]
    UnsortedBreakpoints(Vec<f64>),

    #[error("expected {expected} pieces for {breakpoints} breakpoints, got {got}")]
    PieceCount {
        expected: usize,
        got: usize,
        breakpoints: usize,
    },

    #[error("expected {expected} values at breakpoints, got {got}")]
    BreakpointValueCount { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("diffusion vanishes at breakpoint {xi} (σ1)")]
    DegenerateDiffusion { xi: f64 },

    #[error("transform parameter nu = {nu} must lie in (0, {rho})")]
    InadmissibleNu { nu: f64, rho: f64 },

    #[error("extended second derivative requested at {0}, which is not a breakpoint")]
    NotABreakpoint(f64),

    #[error(
        "inverse of G did not converge for y = {y} after {iterations} iterations \
         (best x = {best}, residual = {residual:e})"
    )]
    InverseNotConverged {
        y: f64,
        best: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("negative or non-finite time {0}")]
    InvalidTime(f64),

    #[error("increment requested with s = {s} > t = {t}")]
    TimeOrder { s: f64, t: f64 },

    #[error("time {t} outside trajectory range [0, {end}]")]
    OutOfRange { t: f64, end: f64 },

    #[error("delta = {delta} violates eps2 <= eps1 <= eps0/2 (largest admissible delta is {delta_max:e})")]
    InadmissibleDelta { delta: f64, delta_max: f64 },

    #[error("step cap {cap} exceeded before reaching t = 1")]
    StepCapExceeded { cap: u64 },

    #[error("regression needs at least 3 finite points with distinct abscissae")]
    DegenerateRegression,

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("path {index} (seed {seed}) failed: {source}")]
    PathFailure {
        index: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed path dump: {0}")]
    MalformedDump(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
