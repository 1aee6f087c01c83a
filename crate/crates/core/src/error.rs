use thiserror::Error;

/// Library-wide error type.
///
/// Numerical guards are deliberately loud: a truncated Fock space that is
/// too small, a variance that comes out significantly negative, or a
/// determinant with a large imaginary residue all indicate that downstream
/// numbers cannot be trusted, so they abort the computation instead of
/// being silently clamped.
#[derive(Debug, Error)]
pub enum Error {
    /// Fock-space truncation cannot support the requested operation.
    #[error("truncation error: {0}")]
    Truncation(String),

    /// A state preparation has no valid result for the given parameters.
    #[error("degenerate state: {0}")]
    DegenerateState(String),

    /// A floating-point guard tripped (residues, normalization, clamps).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A statistical quantity is degenerate (e.g. nothing to measure).
    #[error("degenerate: {0}")]
    Degenerate(String),

    /// A measurement allocation is unusable for the requested evaluation.
    #[error("allocation error: {0}")]
    Allocation(String),

    /// Too few samples to form the requested estimate.
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// Malformed textual input (operator words, criterion specs).
    #[error("parse error: {0}")]
    Parse(String),

    /// Snapshot container violations (bad magic, truncated payload, ...).
    #[error("snapshot format error: {0}")]
    Format(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
