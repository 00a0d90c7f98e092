//! JSON configuration files.
//!
//! ```json
//! {
//!   "problem": {
//!     "x0": 0.5,
//!     "eps0": 1.0,
//!     "breakpoints": [0.0],
//!     "drift": {
//!       "pieces": [{ "value": "1", "derivative": "0" }, { "value": "-1", "derivative": "0" }],
//!       "values_at_breakpoints": [-1.0]
//!     },
//!     "diffusion": { "pieces": [{ "value": "1", "derivative": "0" }] }
//!   },
//!   "transform": { "nu": "auto" },
//!   "experiment": { "method": "adaptive_transformed", "grid": { "deltas": [0.001, 0.0005, 0.00025] }, "paths": 100 },
//!   "output": { "dir": "out", "formats": ["csv", "json"] }
//! }
//! ```
//!
//! A coefficient with a single piece is smooth; otherwise it has one piece
//! per interval between the shared breakpoints.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::harness::{ExperimentPlan, ExperimentSpec};
use crate::piecewise::{Piece, PiecewiseFn};
use crate::problem::SdeProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: ProblemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub x0: f64,
    pub eps0: f64,
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub drift: CoefficientConfig,
    pub diffusion: CoefficientConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub pieces: Vec<PieceConfig>,
    /// Defaults to the right limits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values_at_breakpoints: Option<Vec<f64>>,
}

/// A smooth branch as expression strings in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceConfig {
    pub value: String,
    pub derivative: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    #[serde(default)]
    pub nu: Nu,
}

/// `"auto"` (ρ/2) or an explicit half-width.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Nu {
    Value(f64),
    #[default]
    #[serde(with = "auto")]
    Auto,
}

mod auto {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(de::Error::custom(format!("expected \"auto\" or a number, found {s:?}")))
        }
    }
}

impl Nu {
    pub fn value(self) -> Option<f64> {
        match self {
            Nu::Value(v) => Some(v),
            Nu::Auto => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl ConfigFile {
    /// Parses a document; errors name the offending field and position.
    pub fn from_json_str(src: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(src);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config {
                path,
                message: format!("{inner}"),
            }
        })?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn nu(&self) -> Option<f64> {
        self.transform.and_then(|t| t.nu.value())
    }

    pub fn problem(&self) -> Result<SdeProblem> {
        let p = &self.problem;
        let mu = build_coefficient(&p.drift, &p.breakpoints, "problem.drift")?;
        let sigma = build_coefficient(&p.diffusion, &p.breakpoints, "problem.diffusion")?;
        SdeProblem::new(p.x0, mu, sigma, p.eps0).map_err(|e| config_error("problem", e))
    }

    pub fn experiment_spec(&self) -> Result<ExperimentSpec> {
        let plan = self.experiment.clone().ok_or_else(|| Error::Config {
            path: "experiment".into(),
            message: "missing section".into(),
        })?;
        let mut spec = ExperimentSpec::new(self.problem()?, plan);
        spec.nu = self.nu();
        spec.validate().map_err(|e| config_error("experiment", e))?;
        Ok(spec)
    }
}

fn config_error(path: &str, e: Error) -> Error {
    Error::Config {
        path: path.into(),
        message: e.to_string(),
    }
}

fn parse_expr(src: &str, path: String) -> Result<Expr> {
    Expr::parse(src).map_err(|e| Error::Config {
        path,
        message: e.to_string(),
    })
}

fn build_piece(p: &PieceConfig, path: &str) -> Result<Piece> {
    let value = parse_expr(&p.value, format!("{path}.value"))?;
    let derivative = parse_expr(&p.derivative, format!("{path}.derivative"))?;
    Ok(match (value.constant_value(), derivative.constant_value()) {
        (Some(c), Some(0.0)) => Piece::Constant(c),
        _ => Piece::expr(value, derivative),
    })
}

fn build_coefficient(c: &CoefficientConfig, breakpoints: &[f64], path: &str) -> Result<PiecewiseFn> {
    let pieces = c
        .pieces
        .iter()
        .enumerate()
        .map(|(i, p)| build_piece(p, &format!("{path}.pieces[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let f = if pieces.len() == 1 && c.values_at_breakpoints.is_none() {
        Ok(PiecewiseFn::smooth(pieces.into_iter().next().expect("one piece")))
    } else {
        PiecewiseFn::new(breakpoints.to_vec(), pieces, c.values_at_breakpoints.clone())
    };
    f.map_err(|e| config_error(path, e))
}
