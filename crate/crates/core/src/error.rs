//! Shared error type for the library.

use thiserror::Error;

/// Errors surfaced by configuration validation and the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter set violates one of the documented invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An antenna layout violates the bounds or minimum-spacing constraints.
    #[error("infeasible layout: {0}")]
    InfeasibleLayout(String),

    /// Geometry that would put a user on top of an antenna (zero distance).
    #[error("degenerate geometry: {0}")]
    Geometry(String),

    /// The effective channel lost rank or is too ill-conditioned to invert.
    #[error("rank-deficient channel: {0}")]
    RankDeficient(String),

    /// A linear solve failed even after regularization.
    #[error("singular linear system: {0}")]
    Singular(String),

    /// An optimizer produced a non-finite objective value.
    #[error("non-finite objective: {0}")]
    NonFinite(String),
}
