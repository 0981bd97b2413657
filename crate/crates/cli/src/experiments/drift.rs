//! Ito/Stratonovich crossover: drift of the inertial amplitude equation
//! across `lambda tau_R`.

use macrocollapse::noise::ScalarOu;
use macrocollapse::rng::splitmix64;
use macrocollapse::sde::{run_inertial, BdotPolicy, InertialConfig, InertialRun};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{z_score, Tables};
use crate::artifacts::{num, Table};
use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    #[default]
    SchrodingerConsistent,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftParams {
    #[serde(default = "default_sweep")]
    pub lambda_tau: Vec<f64>,
    #[serde(default = "one")]
    pub lambda: f64,
    /// `sigma^2 t_max` at every point; keeps the second-order expansion
    /// behind the closed form accurate.
    #[serde(default = "default_strength")]
    pub sigma_sq_t: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    /// `[re, im]`.
    #[serde(default = "default_b0")]
    pub b0: [f64; 2],
    #[serde(default)]
    pub bdot0_policy: Policy,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    /// Steps per `min(tau_R, 1/lambda)`.
    #[serde(default = "default_resolution")]
    pub steps_per_scale: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_sweep() -> Vec<f64> {
    vec![0.01, 0.1, 1.0, 10.0, 100.0]
}
fn one() -> f64 {
    1.0
}
fn default_strength() -> f64 {
    0.01
}
fn default_b0() -> [f64; 2] {
    [1.0, 0.0]
}
fn default_realizations() -> usize {
    10_000
}
fn default_resolution() -> usize {
    20
}
fn default_record_every() -> usize {
    100
}

impl Default for DriftParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every drift parameter has a default")
    }
}

impl DriftParams {
    /// Inertial run for one sweep point. The window opens after ten
    /// correlation times and lasts ten correlation times or twenty
    /// oscillation periods `tau_R`, whichever is longer.
    pub fn point(&self, lambda_tau: f64) -> macrocollapse::Result<InertialConfig> {
        if !(lambda_tau > 0.0 && self.lambda > 0.0 && self.sigma_sq_t > 0.0) {
            return Err(macrocollapse::Error::Invalid("lambda_tau, lambda and sigma_sq_t must be positive".into()));
        }
        if self.steps_per_scale < 20 {
            return Err(macrocollapse::Error::Invalid("steps_per_scale must be at least 20".into()));
        }
        let tau = lambda_tau / self.lambda;
        let start = 10.0 / self.lambda;
        let t_max = start + (10.0 / self.lambda).max(20.0 * tau);
        let cfg = InertialConfig {
            tau_r: tau,
            noise: ScalarOu::new((self.sigma_sq_t / t_max).sqrt(), self.lambda)?,
            hbar: self.hbar,
            b0: Complex64::new(self.b0[0], self.b0[1]),
            bdot0_policy: match self.bdot0_policy {
                Policy::SchrodingerConsistent => BdotPolicy::SchrodingerConsistent,
                Policy::Zero => BdotPolicy::Zero,
            },
            dt: tau.min(1.0 / self.lambda) / self.steps_per_scale as f64,
            t_max,
            ensemble_size: self.realizations,
            record_every: self.record_every,
            window_start: Some(start),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DriftPoint {
    pub lambda_tau: f64,
    pub tau_r: f64,
    pub sigma: f64,
    pub dt: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub measured_re: f64,
    pub measured_im: f64,
    pub se_re: f64,
    pub se_im: f64,
    pub analytic_re: f64,
    pub analytic_im: f64,
    /// `-sigma^2 b0 / 2 hbar^2`, the Stratonovich limit.
    pub reference_re: f64,
    pub reference_im: f64,
    pub z_re: f64,
    pub z_im: f64,
    /// `|measured| / |reference|`.
    pub relative_magnitude: f64,
    /// `|measured - reference| / |reference|`.
    pub relative_to_reference: f64,
}

impl DriftPoint {
    pub fn within_3se(&self) -> bool {
        self.z_re.abs() <= 3.0 && self.z_im.abs() <= 3.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftReport {
    pub realizations: usize,
    pub points: Vec<DriftPoint>,
    pub all_within_3se: bool,
}

pub fn execute(params: &DriftParams, seed: u64) -> Result<(DriftReport, Tables), CliError> {
    let configs = params.lambda_tau.iter().map(|&x| params.point(x)).collect::<macrocollapse::Result<Vec<_>>>()?;
    let mut points = Vec::with_capacity(configs.len());
    let mut paths = Table::new(["lambda_tau", "t", "mean_re", "mean_im", "se_re", "se_im", "raw_re", "raw_im"]);
    for (j, (cfg, &lt)) in configs.iter().zip(&params.lambda_tau).enumerate() {
        // Each point gets its own stream family.
        let run = run_inertial(cfg, splitmix64(seed ^ splitmix64(j as u64)))?;
        points.push(point(cfg, lt, &run));
        for (t, ((m, se), raw)) in run.times.iter().zip(run.mean_db.iter().zip(&run.se_db).zip(&run.mean_db_raw)) {
            paths.push(vec![num(lt), num(*t), num(m.re), num(m.im), num(se.0), num(se.1), num(raw.re), num(raw.im)]);
        }
    }
    let mut sweep = Table::new([
        "lambda_tau",
        "tau_r",
        "measured_re",
        "se_re",
        "measured_im",
        "se_im",
        "analytic_re",
        "analytic_im",
        "reference_re",
        "reference_im",
    ]);
    for p in &points {
        sweep.push(
            [
                p.lambda_tau,
                p.tau_r,
                p.measured_re,
                p.se_re,
                p.measured_im,
                p.se_im,
                p.analytic_re,
                p.analytic_im,
                p.reference_re,
                p.reference_im,
            ]
            .into_iter()
            .map(num)
            .collect(),
        );
    }
    let report = DriftReport {
        realizations: params.realizations,
        all_within_3se: points.iter().all(DriftPoint::within_3se),
        points,
    };
    Ok((report, vec![("drift.csv", sweep), ("drift_paths.csv", paths)]))
}

fn point(cfg: &InertialConfig, lambda_tau: f64, run: &InertialRun) -> DriftPoint {
    let d = run.drift;
    let sigma = cfg.noise.sigma();
    let reference = -sigma * sigma * cfg.b0 / (2.0 * cfg.hbar * cfg.hbar);
    let measured = d.value();
    DriftPoint {
        lambda_tau,
        tau_r: cfg.tau_r,
        sigma,
        dt: cfg.dt,
        window_start: d.window_start,
        window_end: d.window_end,
        measured_re: d.re,
        measured_im: d.im,
        se_re: d.se_re,
        se_im: d.se_im,
        analytic_re: run.analytic.re,
        analytic_im: run.analytic.im,
        reference_re: reference.re,
        reference_im: reference.im,
        z_re: z_score(d.re, run.analytic.re, d.se_re),
        z_im: z_score(d.im, run.analytic.im, d.se_im),
        relative_magnitude: measured.norm() / reference.norm(),
        relative_to_reference: (measured - reference).norm() / reference.norm(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_points_follow_the_window_rule() {
        let p = DriftParams::default();
        let fast = p.point(0.01).unwrap();
        assert!((fast.t_max - 20.0).abs() < 1e-12);
        assert!((fast.dt - 0.01 / 20.0).abs() < 1e-15);
        let slow = p.point(100.0).unwrap();
        assert!((slow.t_max - 2010.0).abs() < 1e-9);
        let s = slow.noise.sigma();
        assert!((s * s * slow.t_max - 0.01).abs() < 1e-15);
        assert!(p.point(0.0).is_err());
    }

    #[test]
    fn small_sweep_runs() {
        let p = DriftParams { lambda_tau: vec![1.0], realizations: 200, ..DriftParams::default() };
        let (r, tables) = execute(&p, 9).unwrap();
        assert_eq!(r.points.len(), 1);
        assert!(r.points[0].se_re > 0.0);
        assert_eq!(tables[0].1.rows.len(), 1);
    }
}
