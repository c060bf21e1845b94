use thiserror::Error;

use crate::scalar::ScalarError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate cut in element {element}: a level-set difference vanishes")]
    DegenerateCut { element: usize },

    #[error("degenerate sensitivity denominator at node {node}")]
    DegenerateDenominator { node: usize },

    #[error("node {node} is not a shape node")]
    NotShapeNode { node: usize },

    #[error("element {element} is not positively oriented (det J = {det:e})")]
    SingularElement { element: usize, det: f64 },

    #[error("factorization breakdown at row {row}: pivot real part {pivot:e}")]
    SolverBreakdown { row: usize, pivot: f64 },

    #[error("expected a vector of length {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("slerp angle {theta:e} is degenerate")]
    DegenerateAngle { theta: f64 },

    #[error("step {step:e} at node {node} changes the cut configuration")]
    UnstableStep { node: usize, step: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(transparent)]
    Scalar(#[from] ScalarError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}
