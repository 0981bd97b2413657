//! Exact microscopic ensembles compared with the effective-equation
//! predictions.

use macrocollapse::analysis::{collapse_time_from_coupling, decay_fit, martingale_check, DecayFit, MartingaleCheck};
use macrocollapse::oracle::{
    build_hamiltonian_with, w_correlator, CorrelatorGrid, CouplingProfile, Method, OracleEnsemble, WCorrelator,
};
use macrocollapse::rng::splitmix64;
use macrocollapse::{seed_stream, MacroConfig, SuperpositionState};
use serde::{Deserialize, Serialize};

use super::{ensemble_table, trajectory_table, Tables};
use crate::artifacts::{num, Table};
use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    #[default]
    Flat,
    Gaussian {
        width: f64,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    Rk4,
    #[default]
    Diagonalize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleParams {
    #[serde(default = "default_counts")]
    pub micro_counts: Vec<usize>,
    /// Bin half-width.
    #[serde(default = "default_delta_e")]
    pub delta_e: f64,
    /// Bin centres; defaults to `3 delta_e` apart starting at zero.
    #[serde(default)]
    pub bin_energies: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub vbar: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default = "default_p0")]
    pub p0: Vec<f64>,
    /// Defaults to four predicted decay times of `<p_0 p_1>`.
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub method: OracleMethod,
    /// RK4 step; defaults to the stability limit.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Microscopic draws for the `W_01` correlator; 0 skips it.
    #[serde(default = "default_draws")]
    pub correlator_draws: usize,
    /// Members re-run with RK4 and compared with diagonalisation.
    #[serde(default = "default_crosscheck")]
    pub rk4_crosscheck: usize,
    #[serde(default = "default_keep")]
    pub keep_trajectories: usize,
}

fn default_counts() -> Vec<usize> {
    vec![200, 200]
}
fn default_delta_e() -> f64 {
    50.0
}
fn one() -> f64 {
    1.0
}
fn default_p0() -> Vec<f64> {
    vec![0.3, 0.7]
}
fn default_samples() -> usize {
    101
}
fn default_runs() -> usize {
    200
}
fn default_draws() -> usize {
    100
}
fn default_crosscheck() -> usize {
    2
}
fn default_keep() -> usize {
    10
}

impl Default for OracleParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every oracle parameter has a default")
    }
}

impl OracleParams {
    pub fn macro_config(&self) -> macrocollapse::Result<MacroConfig> {
        let energies = match &self.bin_energies {
            Some(e) => e.clone(),
            None => (0..self.micro_counts.len()).map(|n| 3.0 * self.delta_e * n as f64).collect(),
        };
        MacroConfig::new(self.micro_counts.clone(), energies, self.delta_e, self.hbar)
    }

    fn profile(&self) -> CouplingProfile {
        match self.profile {
            Profile::Flat => CouplingProfile::Flat,
            Profile::Gaussian { width } => CouplingProfile::Gaussian { width },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Predictions {
    /// `pi hbar vbar^2 / delta_e`.
    pub sigma_sq: f64,
    /// `hbar^2 / sigma^2`.
    pub collapse_time: f64,
    /// `2 sigma^2 / hbar^2`.
    pub rate: f64,
    /// `hbar / delta_e`.
    pub tau_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelatorReport {
    pub draws: usize,
    pub half_width: Option<f64>,
    pub width_ratio: Option<f64>,
    pub width_within_factor_two: bool,
    pub sigma_sq: f64,
    pub sigma_sq_ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrossCheck {
    pub member: usize,
    pub max_abs_dp: f64,
    pub max_norm_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub runs: usize,
    pub dim: usize,
    pub p0: Vec<f64>,
    pub t_max: f64,
    pub method: OracleMethod,
    pub predicted: Predictions,
    pub decay: Option<DecayFit>,
    pub decay_error: Option<String>,
    pub rate_ratio: Option<f64>,
    pub rate_within_factor_two: bool,
    pub martingale: MartingaleCheck,
    pub martingale_passes: bool,
    pub correlator: Option<CorrelatorReport>,
    pub rk4_crosscheck: Vec<CrossCheck>,
    pub max_norm_drift: f64,
    pub renormalizations: usize,
}

fn within_factor_two(ratio: f64) -> bool {
    (0.5..=2.0).contains(&ratio)
}

pub fn execute(params: &OracleParams, seed: u64) -> Result<(OracleReport, Tables), CliError> {
    let cfg = params.macro_config()?;
    if cfg.macro_count() < 2 {
        return Err(CliError::Config("the oracle experiment needs at least two macrostates".into()));
    }
    let p0 = SuperpositionState::new(params.p0.clone())?;
    let coupling = collapse_time_from_coupling(params.hbar, params.delta_e, params.vbar)?;
    let predicted = Predictions {
        sigma_sq: params.hbar * params.hbar / coupling.with_pi,
        collapse_time: coupling.with_pi,
        rate: 2.0 / coupling.with_pi,
        tau_c: cfg.correlation_time(),
    };
    let t_max = params.t_max.unwrap_or(4.0 / predicted.rate);
    if params.samples < 3 || !(t_max > 0.0) {
        return Err(CliError::Config("need t_max > 0 and at least 3 samples".into()));
    }
    let times: Vec<f64> = (0..params.samples).map(|i| t_max * i as f64 / (params.samples - 1) as f64).collect();
    let method = match params.method {
        OracleMethod::Rk4 => Method::Rk4,
        OracleMethod::Diagonalize => Method::Diagonalize,
    };
    let ensemble = OracleEnsemble {
        cfg: cfg.clone(),
        vbar: params.vbar,
        profile: params.profile(),
        p0: p0.clone(),
        times,
        method,
        dt: params.dt,
    };
    let (stats, trajectories) = ensemble.run(params.runs, seed)?;

    let (decay, decay_error) = match decay_fit(&stats, (0, 1)) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let rate_ratio = decay.map(|f| f.rate / predicted.rate);
    let martingale = martingale_check(&stats, &p0)?;

    let mut tables: Tables = Vec::new();
    let correlator = if params.correlator_draws > 0 {
        // Separate stream family so the correlator never shares draws with
        // ensemble members.
        let mut rng = seed_stream(splitmix64(seed ^ 0x5743_4f52_5245_4c41), 0);
        let h = build_hamiltonian_with(&cfg, params.vbar, params.profile(), &mut rng)?;
        let c = w_correlator(&h, (0, 1), params.correlator_draws, CorrelatorGrid::for_config(&cfg), &mut rng)?;
        tables.push(("w_correlator.csv", correlator_table(&c)));
        let half_width = c.half_width();
        let width_ratio = half_width.map(|w| w / predicted.tau_c);
        Some(CorrelatorReport {
            draws: params.correlator_draws,
            half_width,
            width_ratio,
            width_within_factor_two: width_ratio.is_some_and(within_factor_two),
            sigma_sq: c.sigma_sq(),
            sigma_sq_ratio: c.sigma_sq() / predicted.sigma_sq,
        })
    } else {
        None
    };

    let mut rk4_crosscheck = Vec::new();
    if params.method == OracleMethod::Diagonalize {
        let rk4 = OracleEnsemble { method: Method::Rk4, ..ensemble.clone() };
        for (i, reference) in trajectories.iter().enumerate().take(params.rk4_crosscheck) {
            let tr = rk4.trajectory(seed, i as u64)?;
            let max_abs_dp = tr
                .p_of_t
                .iter()
                .zip(&reference.p_of_t)
                .flat_map(|(a, b)| a.p().iter().zip(b.p()).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            rk4_crosscheck.push(CrossCheck { member: i, max_abs_dp, max_norm_drift: tr.max_norm_drift });
        }
    }

    let report = OracleReport {
        runs: params.runs,
        dim: cfg.total_dim(),
        p0: p0.p().to_vec(),
        t_max,
        method: params.method,
        predicted,
        decay,
        decay_error,
        rate_ratio,
        rate_within_factor_two: rate_ratio.is_some_and(within_factor_two),
        martingale_passes: martingale.passes(),
        martingale,
        correlator,
        rk4_crosscheck,
        max_norm_drift: trajectories.iter().map(|t| t.max_norm_drift).fold(0.0, f64::max),
        renormalizations: trajectories.iter().map(|t| t.renormalizations).sum(),
    };
    let paths: Vec<Vec<Vec<f64>>> = trajectories.iter().take(params.keep_trajectories).map(|t| t.paths()).collect();
    let kept = trajectory_table(
        cfg.macro_count(),
        trajectories.iter().zip(&paths).map(|(t, p)| (t.times.as_slice(), p.as_slice())),
    );
    tables.insert(0, ("ensemble.csv", ensemble_table(&stats)));
    tables.insert(0, ("trajectories.csv", kept));
    Ok((report, tables))
}

fn correlator_table(c: &WCorrelator) -> Table {
    let mut t = Table::new(["lag", "tau", "raw_re", "raw_im", "demodulated_re", "demodulated_im"]);
    for (k, (r, d)) in c.raw.iter().zip(&c.demodulated).enumerate() {
        t.push(vec![k.to_string(), num(k as f64 * c.lag_step), num(r.re), num(r.im), num(d.re), num(d.im)]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> OracleParams {
        OracleParams {
            micro_counts: vec![12, 12],
            delta_e: 5.0,
            runs: 6,
            samples: 11,
            t_max: Some(1.0),
            correlator_draws: 2,
            rk4_crosscheck: 1,
            keep_trajectories: 2,
            ..OracleParams::default()
        }
    }

    #[test]
    fn defaults_are_the_flagship_configuration() {
        let p = OracleParams::default();
        assert_eq!(p.micro_counts, [200, 200]);
        assert_eq!((p.delta_e, p.vbar, p.hbar, p.runs), (50.0, 1.0, 1.0, 200));
    }

    #[test]
    fn small_run_cross_checks_rk4() {
        let (r, tables) = execute(&small(), 3).unwrap();
        assert_eq!(r.dim, 24);
        assert_eq!(r.rk4_crosscheck.len(), 1);
        assert!(r.rk4_crosscheck[0].max_abs_dp < 1e-6, "{:?}", r.rk4_crosscheck);
        let names: Vec<_> = tables.iter().map(|t| t.0).collect();
        assert_eq!(names, ["trajectories.csv", "ensemble.csv", "w_correlator.csv"]);
        assert_eq!(tables[0].1.rows.len(), 2 * 11);
    }

    #[test]
    fn single_macrostate_is_rejected() {
        let p = OracleParams { micro_counts: vec![10], p0: vec![1.0], ..small() };
        assert!(execute(&p, 1).is_err());
    }
}
