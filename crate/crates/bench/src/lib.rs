//! Fixtures shared by the benchmarks.

use macrocollapse::noise::ScalarOu;
use macrocollapse::sde::{BdotPolicy, InertialConfig};
use macrocollapse::{MacroConfig, NoiseSpec, SigmaMatrix};
use num_complex::Complex64;

/// `M` macrostates with uniform unit coupling.
pub fn white_spec(m: usize) -> NoiseSpec {
    NoiseSpec::white(SigmaMatrix::uniform(m, 1.0).expect("m >= 1"), 1.0).expect("valid spec")
}

/// Two bins of `n` microstates, half-width 50, centres 150 apart.
pub fn two_bins(n: usize) -> MacroConfig {
    MacroConfig::new(vec![n, n], vec![0.0, 150.0], 50.0, 1.0).expect("valid bins")
}

/// One inertial realisation's worth of work at `lambda tau = 1`.
pub fn inertial(realizations: usize) -> InertialConfig {
    InertialConfig {
        tau_r: 1.0,
        noise: ScalarOu::new(0.02, 1.0).expect("valid OU"),
        hbar: 1.0,
        b0: Complex64::new(1.0, 0.0),
        bdot0_policy: BdotPolicy::SchrodingerConsistent,
        dt: 0.05,
        t_max: 40.0,
        ensemble_size: realizations,
        record_every: 100,
        window_start: Some(10.0),
    }
}
