//! Spectrum of the free single-mode inertial equation.

use macrocollapse::dispersion::{
    log_space, physical_spectrum, scaled_residual, spectrum, spectrum_grid, time_domain_check, ModeConfig,
};
use serde::{Deserialize, Serialize};

use super::Tables;
use crate::artifacts::{num, Table};
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogAxis {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModePoint {
    pub tau0: f64,
    pub omega_k: f64,
    /// Defaults to `40 / |w+ - w-|`.
    #[serde(default)]
    pub t_max: Option<f64>,
    /// Defaults to `tau0 / 50`, reduced if the fast branch needs it.
    #[serde(default)]
    pub dt: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KSweep {
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default)]
    pub k_from: f64,
    #[serde(default = "default_k_to")]
    pub k_to: f64,
    #[serde(default = "default_k_count")]
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionParams {
    #[serde(default = "default_tau0_axis")]
    pub tau0: LogAxis,
    #[serde(default = "default_omega_axis")]
    pub omega_k: LogAxis,
    #[serde(default = "default_modes")]
    pub time_domain: Vec<ModePoint>,
    #[serde(default = "default_k_sweep")]
    pub k_sweep: KSweep,
}

fn one() -> f64 {
    1.0
}
fn default_k_to() -> f64 {
    5.0
}
fn default_k_count() -> usize {
    101
}
fn default_tau0_axis() -> LogAxis {
    LogAxis { from: 1e-4, to: 1e2, count: 10 }
}
fn default_omega_axis() -> LogAxis {
    LogAxis { from: 1e-3, to: 1e4, count: 10 }
}
fn default_modes() -> Vec<ModePoint> {
    [(0.5, 0.5), (1.0, 1.0), (0.1, 1.0), (0.01, 1.0), (0.3, 20.0)]
        .into_iter()
        .map(|(tau0, omega_k)| ModePoint { tau0, omega_k, t_max: None, dt: None })
        .collect()
}
fn default_k_sweep() -> KSweep {
    KSweep { mass: 1.0, c: 1.0, hbar: 1.0, k_from: 0.0, k_to: default_k_to(), count: default_k_count() }
}

impl Default for DispersionParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every dispersion parameter has a default")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeFit {
    pub tau0: f64,
    pub omega_k: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub fitted: Vec<f64>,
    pub coarse: Vec<f64>,
    pub max_relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersionReport {
    pub grid_points: usize,
    pub max_scaled_residual: f64,
    pub time_domain: Vec<ModeFit>,
    pub max_time_domain_error: f64,
    /// Largest relative gap between the two algebraic forms over the k sweep.
    pub max_form_gap: f64,
}

pub fn execute(params: &DispersionParams) -> Result<(DispersionReport, Tables), CliError> {
    for axis in [params.tau0, params.omega_k] {
        if !(axis.from > 0.0 && axis.to >= axis.from && axis.count >= 1) {
            return Err(CliError::Config(format!("log axis {axis:?} needs 0 < from <= to and count >= 1")));
        }
    }
    let rows = spectrum_grid(
        &log_space(params.tau0.from, params.tau0.to, params.tau0.count),
        &log_space(params.omega_k.from, params.omega_k.to, params.omega_k.count),
    )?;
    let mut grid = Table::new(["tau0", "omega_k", "omega_plus", "omega_minus", "residual_plus", "residual_minus"]);
    for r in &rows {
        grid.push(
            [r.tau0, r.omega_k, r.omega_plus, r.omega_minus, r.residual_plus, r.residual_minus]
                .into_iter()
                .map(num)
                .collect(),
        );
    }
    let max_scaled_residual = rows.iter().map(|r| r.residual_plus.max(r.residual_minus)).fold(0.0, f64::max);

    let mut time_domain = Vec::with_capacity(params.time_domain.len());
    for m in &params.time_domain {
        let cfg = ModeConfig::new(m.tau0, m.omega_k)?;
        let s = spectrum(&cfg);
        let t_max = m.t_max.unwrap_or(40.0 / s.gap());
        let dt = m.dt.unwrap_or((m.tau0 / 50.0).min(0.2 / s.omega_minus.abs()));
        let fit = time_domain_check(&cfg, t_max, dt)?;
        let exact = [s.omega_plus, s.omega_minus];
        let max_relative_error = if fit.frequencies.len() == 2 {
            fit.frequencies.iter().zip(exact).map(|(f, e)| ((f - e) / e).abs()).fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        time_domain.push(ModeFit {
            tau0: m.tau0,
            omega_k: m.omega_k,
            omega_plus: s.omega_plus,
            omega_minus: s.omega_minus,
            fitted: fit.frequencies,
            coarse: fit.coarse,
            max_relative_error,
        });
    }

    let k = params.k_sweep;
    if k.count < 2 || !(k.k_to > k.k_from) {
        return Err(CliError::Config("k_sweep needs count >= 2 and k_to > k_from".into()));
    }
    let mut sweep =
        Table::new(["k", "tau0", "omega_k", "omega_plus", "omega_minus", "residual_plus", "residual_minus"]);
    let mut max_form_gap: f64 = 0.0;
    for i in 0..k.count {
        let kk = k.k_from + (k.k_to - k.k_from) * i as f64 / (k.count - 1) as f64;
        let cfg = ModeConfig::from_physical(k.mass, kk, k.c, k.hbar)?;
        let s = spectrum(&cfg);
        let e = physical_spectrum(&cfg.physical().expect("physical inputs were given"));
        for (a, b) in [(s.omega_plus, e.omega_plus), (s.omega_minus, e.omega_minus)] {
            let scale = a.abs().max(b.abs());
            if scale > 0.0 {
                max_form_gap = max_form_gap.max((a - b).abs() / scale);
            }
        }
        sweep.push(
            [
                kk,
                cfg.tau0(),
                cfg.omega_k(),
                s.omega_plus,
                s.omega_minus,
                scaled_residual(&cfg, s.omega_plus),
                scaled_residual(&cfg, s.omega_minus),
            ]
            .into_iter()
            .map(num)
            .collect(),
        );
    }

    let report = DispersionReport {
        grid_points: rows.len(),
        max_scaled_residual,
        max_time_domain_error: time_domain.iter().map(|m| m.max_relative_error).fold(0.0, f64::max),
        time_domain,
        max_form_gap,
    };
    Ok((report, vec![("dispersion_grid.csv", grid), ("dispersion_k.csv", sweep)]))
}
