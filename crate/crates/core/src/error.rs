//! Error type shared by every module of the core crate.

use alloc::string::String;
use core::fmt;

/// Failures surfaced by tape evaluation, objective construction, optimizer
/// steps, and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A supplied value is outside the documented range for the operation.
    InvalidParameter(String),
    /// Incompatible shapes between tape node inputs.
    ShapeMismatch { node: usize, detail: String },
    /// Evaluating the given tape node produced a NaN or infinity.
    NonFiniteNode { node: usize, op: &'static str },
    /// A non-finite value appeared outside the tape (objective probe point,
    /// gradient entry fed to an optimizer, loss value).
    NonFinite(String),
    /// Vector dimensions disagree (parameters vs gradient vs optimizer state).
    DimMismatch { expected: usize, got: usize },
    /// `backward_with_seed` was called before a successful forward pass.
    BackwardBeforeForward,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::ShapeMismatch { node, detail } => {
                write!(f, "shape mismatch at node {node}: {detail}")
            }
            Error::NonFiniteNode { node, op } => {
                write!(f, "non-finite value at node {node} (op {op})")
            }
            Error::NonFinite(context) => write!(f, "non-finite value: {context}"),
            Error::DimMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::BackwardBeforeForward => {
                write!(f, "backward pass requested before forward evaluation")
            }
        }
    }
}

impl core::error::Error for Error {}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>) -> Self {
        Error::InvalidParameter(what.into())
    }
}
