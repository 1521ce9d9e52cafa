//! Certified robustness toolkit for online learning under dynamic data poisoning.
//!
//! The toolkit computes dual certificates that upper-bound the long-run average
//! adversarial loss of simple online learners (mean estimation, linear hinge
//! classification) when an adaptive adversary injects an ε-fraction of poisoned
//! points, independently re-verifies every certificate by direct search over the
//! inner supremum, simulates concrete attacks as empirical lower bounds, and
//! tunes defense hyperparameters by alternating minimization.
//!
//! Module map:
//! - [`certcore`] — learning rules, contaminated streams, quadratic dual
//!   multipliers, the certificate verifier, and a discretized-MDP oracle.
//! - [`sdp`] — a small dense cone-program solver (PSD + nonnegative cones)
//!   with a matrix-fractional epigraph builder.
//! - [`mean_cert`] — the mean-estimation certificate.
//! - [`class_cert`] — the binary-classification certificate (two branches,
//!   integer relaxation, McCormick envelopes) and brute-force oracles.
//! - [`meta`] — alternating minimization of the defense noise covariance.
//! - [`simulate`] — poisoned online dynamics with pluggable attack policies.
//! - [`data`] — dataset ingestion and the SVD/normalize/bias/label pipeline.

pub mod certcore;
pub mod class_cert;
pub mod data;
mod error;
pub mod linalg;
pub mod mean_cert;
pub mod meta;
pub mod sdp;
pub mod simulate;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
