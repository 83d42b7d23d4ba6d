//! Tri-hybrid beamforming for fully-connected pinching-antenna systems.
//!
//! A pinching-antenna transmitter radiates from small dielectric elements that can
//! slide along waveguides, so the array geometry itself becomes an optimization
//! variable next to the usual digital and analog beamformers. This crate provides:
//!
//! - [`model`]: system geometry, line-of-sight channels, SINR / weighted sum-rate /
//!   energy-efficiency evaluation, and CSI perturbation,
//! - [`manifold`]: Riemannian conjugate gradient over products of complex unit
//!   circles (the constant-modulus constraint of analog phase-shifter networks),
//! - [`shade`]: success-history adaptive differential evolution for antenna
//!   placement under spacing constraints,
//! - [`fp`]: the fractional-programming alternating optimizer that ties the three
//!   beamforming stages together,
//! - [`zf`]: a low-complexity zero-forcing pipeline with water-filling power
//!   allocation and analog/digital factorization,
//! - [`benchmarks`]: reference schemes (sub-connected pinching array, conventional
//!   massive MIMO, cyclic per-antenna grid search).
//!
//! Everything is deterministic under a caller-supplied seed; concurrent fitness
//! evaluation never changes results.

pub mod benchmarks;
pub mod error;
pub mod fp;
pub mod manifold;
pub mod model;
pub mod shade;
pub mod zf;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
