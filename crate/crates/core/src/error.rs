//! Shared error type for the toolkit.

use thiserror::Error;

/// Errors surfaced by any layer of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix shapes do not line up. Names both shapes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An index (dimension, unit, class, position) is out of range.
    #[error("index out of range: {0}")]
    Index(String),

    /// A text input could not be parsed. Lines are 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A configuration value is invalid or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A caller violated an operation's stated precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}: {message}")]
    Diverged {
        epoch: usize,
        batch: usize,
        message: String,
    },

    /// A model/policy file could not be loaded (version, checksum, structure).
    #[error("model file error: {0}")]
    ModelFile(String),

    /// A statistic was requested over an empty population.
    #[error("empty population: {0}")]
    EmptyPopulation(String),

    /// An exact computation exceeds its size budget.
    #[error("budget exceeded: {0}")]
    Budget(String),

    /// A regression fit is degenerate (zero variance in a variable).
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
