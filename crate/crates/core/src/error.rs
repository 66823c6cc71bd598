use thiserror::Error;

use crate::problem::Regime;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate field: mass {mass:e} is below the underflow guard")]
    DegenerateField { mass: f64 },

    #[error("grid mismatch: field lives on {found}, operator expects {expected}")]
    GridMismatch { expected: String, found: String },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("oracle size guard: {points} grid points exceed the limit of {limit}")]
    SizeGuard { points: usize, limit: usize },

    #[error("regime mismatch: operation requires {expected:?}, problem is {found:?}")]
    Regime { expected: Regime, found: Regime },

    #[error("fiber bracket failure: {0}")]
    Bracket(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("field container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
