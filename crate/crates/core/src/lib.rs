//! Adaptive quasi-Milstein schemes for scalar SDEs whose drift jumps at
//! finitely many points, with the drift-removing transform `G`, a lazily
//! refined Brownian path and a Monte Carlo convergence harness.

pub mod brownian;
pub mod config;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod harness;
pub mod piecewise;
pub mod problem;
pub mod schemes;
pub mod transform;

pub use brownian::BrownianPath;
pub use error::{Error, Result};
pub use problem::{validate_problem, Model, SdeProblem, ValidationReport};
pub use schemes::{Mode, StepController, Trajectory};
pub use transform::{transform_problem, TransformParams, TransformedProblem};
