//! Piecewise-smooth scalar functions with finitely many breakpoints.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Relative tolerance used to decide whether two one-sided quantities agree.
const AGREEMENT_TOL: f64 = 1e-10;

pub(crate) fn agree(a: f64, b: f64) -> bool {
    (a - b).abs() <= AGREEMENT_TOL * 1f64.max(a.abs()).max(b.abs())
}

type PieceFn = dyn Fn(f64) -> (f64, f64) + Send + Sync;

/// One smooth branch: returns its value and first derivative.
#[derive(Clone)]
pub enum Piece {
    Constant(f64),
    Affine { slope: f64, intercept: f64 },
    Expr { value: Arc<Expr>, derivative: Arc<Expr> },
    Custom(Arc<PieceFn>),
}

impl Piece {
    pub fn expr(value: Expr, derivative: Expr) -> Self {
        Piece::Expr {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }

    pub fn custom(f: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        Piece::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> (f64, f64) {
        match self {
            Piece::Constant(c) => (*c, 0.0),
            Piece::Affine { slope, intercept } => (slope * x + intercept, *slope),
            Piece::Expr { value, derivative } => (value.eval(x), derivative.eval(x)),
            Piece::Custom(f) => f(x),
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Piece::Expr { value, .. } => value.eval(x),
            _ => self.eval(x).0,
        }
    }
}

impl fmt::Debug for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Piece::Constant(c) => write!(f, "Constant({c})"),
            Piece::Affine { slope, intercept } => write!(f, "Affine({slope}*x + {intercept})"),
            Piece::Expr { value, derivative } => write!(f, "Expr({value}; d = {derivative})"),
            Piece::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Location {
    Inside(usize),
    At(usize),
}

/// A function that is smooth on each interval `(ξ_{i-1}, ξ_i)` between
/// sorted breakpoints, with an explicitly configured value at each `ξ_i`.
#[derive(Debug, Clone)]
pub struct PiecewiseFn {
    breakpoints: Vec<f64>,
    pieces: Vec<Piece>,
    at_breakpoints: Vec<f64>,
    limits: Vec<(f64, f64)>,
}

impl PiecewiseFn {
    /// `at_breakpoints` defaults to the right limit at each breakpoint.
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Piece>, at_breakpoints: Option<Vec<f64>>) -> Result<Self> {
        check_sorted(&breakpoints)?;
        if pieces.len() != breakpoints.len() + 1 {
            return Err(Error::PieceCount {
                expected: breakpoints.len() + 1,
                got: pieces.len(),
                breakpoints: breakpoints.len(),
            });
        }
        let limits: Vec<(f64, f64)> = breakpoints
            .iter()
            .enumerate()
            .map(|(i, &xi)| (pieces[i].value(xi), pieces[i + 1].value(xi)))
            .collect();
        let at_breakpoints = match at_breakpoints {
            Some(v) if v.len() != breakpoints.len() => {
                return Err(Error::BreakpointValueCount {
                    expected: breakpoints.len(),
                    got: v.len(),
                })
            }
            Some(v) => v,
            None => limits.iter().map(|&(_, right)| right).collect(),
        };
        Ok(Self {
            breakpoints,
            pieces,
            at_breakpoints,
            limits,
        })
    }

    pub fn smooth(piece: Piece) -> Self {
        Self {
            breakpoints: Vec::new(),
            pieces: vec![piece],
            at_breakpoints: Vec::new(),
            limits: Vec::new(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::smooth(Piece::Constant(c))
    }

    pub fn identity() -> Self {
        Self::smooth(Piece::Affine {
            slope: 1.0,
            intercept: 0.0,
        })
    }

    /// `left` below `xi`, `right` from `xi` on.
    pub fn step(xi: f64, left: f64, right: f64) -> Result<Self> {
        Self::new(vec![xi], vec![Piece::Constant(left), Piece::Constant(right)], None)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn values_at_breakpoints(&self) -> &[f64] {
        &self.at_breakpoints
    }

    /// `(f(ξ_i-), f(ξ_i+))` for each breakpoint.
    pub fn one_sided_limits(&self) -> &[(f64, f64)] {
        &self.limits
    }

    #[inline]
    pub(crate) fn locate(&self, x: f64) -> Location {
        let i = self.breakpoints.partition_point(|&b| b < x);
        if i < self.breakpoints.len() && self.breakpoints[i] == x {
            Location::At(i)
        } else {
            Location::Inside(i)
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.locate(x) {
            Location::Inside(i) => self.pieces[i].value(x),
            Location::At(i) => self.at_breakpoints[i],
        }
    }

    /// The a.e. derivative: the piece derivative inside a piece, and 0 at
    /// any breakpoint where the function is not differentiable.
    #[inline]
    pub fn eval_d(&self, x: f64) -> f64 {
        match self.locate(x) {
            Location::Inside(i) => self.pieces[i].eval(x).1,
            Location::At(i) => self.derivative_at_breakpoint(i),
        }
    }

    /// Value and derivative of the piece adjacent to `x` on `side`. Off the
    /// breakpoints the side is irrelevant.
    #[inline]
    pub fn eval_side(&self, x: f64, side: Side) -> (f64, f64) {
        match self.locate(x) {
            Location::Inside(i) => self.pieces[i].eval(x),
            Location::At(i) => match side {
                Side::Left => self.pieces[i].eval(x),
                Side::Right => self.pieces[i + 1].eval(x),
            },
        }
    }

    pub fn is_continuous_at(&self, i: usize) -> bool {
        let (l, r) = self.limits[i];
        agree(l, r) && agree(r, self.at_breakpoints[i])
    }

    pub fn is_continuous(&self) -> bool {
        (0..self.breakpoints.len()).all(|i| self.is_continuous_at(i))
    }

    fn derivative_at_breakpoint(&self, i: usize) -> f64 {
        if !self.is_continuous_at(i) {
            return 0.0;
        }
        let xi = self.breakpoints[i];
        let dl = self.pieces[i].eval(xi).1;
        let dr = self.pieces[i + 1].eval(xi).1;
        if agree(dl, dr) {
            0.5 * (dl + dr)
        } else {
            0.0
        }
    }
}

pub(crate) fn check_sorted(points: &[f64]) -> Result<()> {
    let finite = points.iter().all(|p| p.is_finite());
    let increasing = points.windows(2).all(|w| w[0] < w[1]);
    if finite && increasing {
        Ok(())
    } else {
        Err(Error::UnsortedBreakpoints(points.to_vec()))
    }
}

/// `min_i |x - ξ_i|` over a sorted, non-empty set.
pub fn dist_to_theta(x: f64, theta: &[f64]) -> Result<f64> {
    if theta.is_empty() {
        return Err(Error::NoDiscontinuities);
    }
    Ok(nearest_distance(x, theta))
}

#[inline]
pub(crate) fn nearest_distance(x: f64, theta: &[f64]) -> f64 {
    let i = theta.partition_point(|&t| t < x);
    let right = theta.get(i).map_or(f64::INFINITY, |&t| t - x);
    let left = if i > 0 { x - theta[i - 1] } else { f64::INFINITY };
    left.min(right)
}
