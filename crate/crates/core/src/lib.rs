//! Weak (Pettis-style) stochastic calculus on a finite-dimensional model of a
//! Banach space, with Monte Carlo certification of exponential-martingale
//! measure changes and conditional-measure martingale properties.
//!
//! Every vector-valued integral in this crate is computed the weak way: each
//! probe functional of a [`vecspace::DualFamily`] is integrated as a scalar,
//! and the vector is recovered from those pairings by a residual-gated least
//! squares solve. A pairing vector that no single vector realizes is reported
//! as [`Error::PettisViolation`].
//!
//! Module map:
//! - [`vecspace`]: the space, its probe functionals and reconstruction.
//! - [`paths`]: time grids, counter-based normal streams, Brownian ensembles.
//! - [`integrate`]: Lebesgue/Pettis, BDS, Itô and stochastic Pettis integrals.
//! - [`girsanov`]: exponential martingales, measure weights, drift removal.
//! - [`conditioning`]: partition conditional expectation, bridge laws, the
//!   conditional measures `N` and `Q`.
//! - [`stats`]: weighted estimators, Brownian-law and martingale z-tests.

pub mod conditioning;
pub mod error;
pub mod girsanov;
pub mod integrate;
pub mod paths;
pub mod stats;
pub mod vecspace;

pub use error::{Error, Result};
