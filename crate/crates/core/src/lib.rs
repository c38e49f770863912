//! Uplink channel estimation for multi-user holographic MIMO receivers fed
//! through a stacked intelligent metasurface (SIM).
//!
//! The crate models the SIM as a cascade of programmable phase layers with
//! diffraction between them, builds the stacked transmission matrix seen by a
//! multi-block pilot protocol, and provides LS, MMSE and reduced-subspace LS
//! estimators together with their closed-form error and a random codebook
//! search over phase schedules. The `harness` module drives seeded Monte
//! Carlo sweeps and writes CSV results.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod correlation;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod performance;
pub mod pilot;
pub mod propagation;
pub mod rng;

pub use error::{Error, Result};
