//! Statistical checks of the noise generators against their defining
//! moments.

use macrocollapse::noise::{estimate_autocorrelation, ou_init, ou_step, white_increment};
use macrocollapse::rng::splitmix64;
use macrocollapse::stats::mean_and_se;
use macrocollapse::{seed_stream, NoiseSpec, SigmaMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{z_score, Tables};
use crate::artifacts::{num, Table};
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_white_draws")]
    pub white_draws: usize,
    /// Length of each OU segment; segments are independent chains.
    #[serde(default = "default_segment")]
    pub ou_segment: usize,
    #[serde(default = "default_segments")]
    pub ou_segments: usize,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
}

fn one() -> f64 {
    1.0
}
fn default_dim() -> usize {
    3
}
fn default_dt() -> f64 {
    0.01
}
fn default_white_draws() -> usize {
    100_000
}
fn default_segment() -> usize {
    10_000
}
fn default_segments() -> usize {
    40
}
fn default_max_lag() -> usize {
    300
}

impl Default for NoiseParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every noise parameter has a default")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentCheck {
    pub name: &'static str,
    pub measured: f64,
    pub se: f64,
    pub expected: f64,
    pub z: f64,
}

impl MomentCheck {
    fn new(name: &'static str, samples: &[f64], expected: f64) -> Self {
        let (measured, se) = mean_and_se(samples);
        Self { name, measured, se, expected, z: z_score(measured, expected, se) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseReport {
    pub white: Vec<MomentCheck>,
    pub ou_stationary: Vec<MomentCheck>,
    /// Largest `|z|` of the OU autocorrelation over all lags.
    pub ou_max_lag_z: f64,
    pub max_abs_z: f64,
    pub passes: bool,
}

pub fn execute(params: &NoiseParams, seed: u64) -> Result<(NoiseReport, Tables), CliError> {
    if params.dim < 2 || params.white_draws < 2 || params.ou_segments < 2 {
        return Err(CliError::Config("need dim >= 2, white_draws >= 2 and ou_segments >= 2".into()));
    }
    let sigma = SigmaMatrix::uniform(params.dim, params.sigma)?;
    let (s2, dt) = (params.sigma * params.sigma, params.dt);

    // White increments: each element is circular complex Gaussian with
    // E|dW|^2 = sigma^2 dt.
    let white_spec = NoiseSpec::white(sigma.clone(), params.hbar)?;
    let mut rng = seed_stream(seed, 0);
    let (mut abs2, mut re2, mut sq_re, mut quart) = (vec![], vec![], vec![], vec![]);
    for _ in 0..params.white_draws {
        let inc = white_increment(&white_spec, dt, &mut rng)?;
        let z = inc.dw.get(0, 1);
        abs2.push(z.norm_sqr());
        re2.push(z.re * z.re);
        sq_re.push((z * z).re);
        quart.push(z.re.powi(4));
    }
    let half = 0.5 * s2 * dt;
    let white = vec![
        MomentCheck::new("E|dW|^2", &abs2, s2 * dt),
        MomentCheck::new("E[Re(dW)^2]", &re2, half),
        MomentCheck::new("Re E[dW^2]", &sq_re, 0.0),
        MomentCheck::new("E[Re(dW)^4]", &quart, 3.0 * half * half),
    ];

    // OU: independent stationary chains; autocorrelation per chain, then
    // mean and standard error across chains.
    let ou_spec = NoiseSpec::ornstein_uhlenbeck(sigma, params.lambda, params.hbar)?;
    let family = splitmix64(seed ^ 0x4f55);
    let c0 = 0.5 * s2 * params.lambda;
    let mut per_lag: Vec<Vec<f64>> = vec![Vec::with_capacity(params.ou_segments); params.max_lag + 1];
    let mut stationary = Vec::with_capacity(params.ou_segments);
    for j in 0..params.ou_segments {
        let mut rng = seed_stream(family, j as u64);
        let mut state = ou_init(&ou_spec, &mut rng)?;
        stationary.push(state.w.get(0, 1).norm_sqr());
        let mut trace: Vec<Complex64> = Vec::with_capacity(params.ou_segment);
        for _ in 0..params.ou_segment {
            trace.push(state.w.get(0, 1));
            state = ou_step(&ou_spec, &state, dt, &mut rng)?;
        }
        for (k, c) in estimate_autocorrelation(&trace, params.max_lag)?.into_iter().enumerate() {
            per_lag[k].push(c.re);
        }
    }
    let mut table = Table::new(["lag", "tau", "measured", "se", "expected", "z"]);
    let mut ou_max_lag_z: f64 = 0.0;
    for (k, samples) in per_lag.iter().enumerate() {
        let tau = k as f64 * dt;
        let expected = c0 * (-params.lambda * tau).exp();
        let (m, se) = mean_and_se(samples);
        let z = z_score(m, expected, se);
        ou_max_lag_z = ou_max_lag_z.max(z.abs());
        table.push(vec![k.to_string(), num(tau), num(m), num(se), num(expected), num(z)]);
    }
    let ou_stationary = vec![MomentCheck::new("E|W(0)|^2", &stationary, c0)];
    let max_abs_z = white.iter().chain(&ou_stationary).map(|c| c.z.abs()).fold(ou_max_lag_z, f64::max);
    let report = NoiseReport { white, ou_stationary, ou_max_lag_z, max_abs_z, passes: max_abs_z <= 4.0 };
    Ok((report, vec![("noise_autocorrelation.csv", table)]))
}
