//! Tolerances shared across the crate.

/// Accumulated floating-point sums (normalisation of probability vectors).
pub const ACCUMULATED: f64 = 1e-9;

/// Single-shot algebraic identities.
pub const SINGLE_SHOT: f64 = 1e-12;

/// Norm drift tolerated from the fixed-step oracle integrator before the
/// state is renormalised.
pub const INTEGRATION: f64 = 1e-7;

/// Norm drift beyond which the oracle integration is declared failed.
pub const INTEGRATION_FAILURE: f64 = 1e-4;

/// Physical constants in SI units.
pub mod si {
    /// Reduced Planck constant, J s.
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Speed of light, m/s.
    pub const C: f64 = 299_792_458.0;
}
