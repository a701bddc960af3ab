//! Error type shared across the core.

use alloc::string::String;
use core::fmt;

/// Errors produced by the core pipeline, tensor engine, and trainer.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes are incompatible for the attempted operation.
    Dimension(String),
    /// An operation produced a non-finite value.
    Numeric(String),
    /// Input too small or empty to be meaningful (single-point trajectory,
    /// empty batch, ...).
    DegenerateInput(String),
    /// A configuration entry is missing, out of range, or inconsistent.
    Config(String),
    /// Internal bookkeeping mismatch (parameter/gradient keys, snapshot
    /// shapes, task ids).
    Consistency(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
            Error::DegenerateInput(m) => write!(f, "degenerate input: {m}"),
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Consistency(m) => write!(f, "consistency error: {m}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
