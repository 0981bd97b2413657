//! Ensemble simulation of how macroscopic superpositions reduce under
//! self-generated microscopic noise.
//!
//! The crate has three layers. [`hilbert`] holds the state types and the
//! macro/micro decomposition. [`oracle`] evolves the full microscopic
//! Schrodinger equation and is the ground truth. [`sde`] integrates the
//! effective stochastic equations, [`analysis`] reduces trajectory ensembles
//! to moments, fits and regime reports, and [`dispersion`] checks the
//! single-mode inertial spectrum.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod dispersion;
pub mod error;
pub mod hilbert;
pub mod matrix;
pub mod noise;
pub mod oracle;
pub mod parallel;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod tolerance;

pub use error::{Error, Result};
pub use hilbert::{MacroConfig, MicroAmplitudes, MicroState, SuperpositionState};
pub use matrix::{HollowHermitian, SigmaMatrix};
pub use noise::{NoiseKind, NoiseSpec};
pub use rng::{seed_stream, RngStream};
