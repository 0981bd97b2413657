//! Effective-SDE ensembles (`sde` and `born`).

use macrocollapse::analysis::{born_test, decay_fit, martingale_check, BornTest, DecayFit, MartingaleCheck};
use macrocollapse::sde::{run_ensemble, SdeConfig, SdeScheme};
use macrocollapse::{NoiseSpec, SigmaMatrix, SuperpositionState};
use serde::{Deserialize, Serialize};

use super::{ensemble_table, trajectory_table, z_score, Tables};
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaInput {
    Uniform(f64),
    Matrix(Vec<Vec<f64>>),
}

impl SigmaInput {
    fn matrix(&self, dim: usize) -> macrocollapse::Result<SigmaMatrix> {
        match self {
            Self::Uniform(s) => SigmaMatrix::uniform(dim, *s),
            Self::Matrix(rows) => SigmaMatrix::from_rows(rows),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Ito,
    Amplitude,
    Stratonovich,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeParams {
    pub p0: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: SigmaInput,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// OU rate; required by the Stratonovich arm.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_epsilon")]
    pub collapse_epsilon: f64,
    #[serde(default)]
    pub stop_on_collapse: bool,
    #[serde(default = "default_keep")]
    pub keep_trajectories: usize,
}

fn default_sigma() -> SigmaInput {
    SigmaInput::Uniform(1.0)
}
fn one() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_t_max() -> f64 {
    5.0
}
fn default_trajectories() -> usize {
    10_000
}
fn default_record_every() -> usize {
    10
}
fn default_epsilon() -> f64 {
    1e-3
}
fn default_keep() -> usize {
    10
}

impl SdeParams {
    /// Ito ensemble from `p0` with unit `sigma` and `hbar`.
    pub fn ito(p0: Vec<f64>) -> Self {
        Self {
            p0,
            sigma: default_sigma(),
            hbar: 1.0,
            scheme: Scheme::Ito,
            lambda: None,
            dt: default_dt(),
            t_max: default_t_max(),
            trajectories: default_trajectories(),
            record_every: default_record_every(),
            collapse_epsilon: default_epsilon(),
            stop_on_collapse: false,
            keep_trajectories: default_keep(),
        }
    }

    pub fn config(&self) -> macrocollapse::Result<(SdeConfig, SuperpositionState)> {
        let p0 = SuperpositionState::new(self.p0.clone())?;
        let sigma = self.sigma.matrix(p0.len())?;
        let (noise, scheme) = match self.scheme {
            Scheme::Ito => (NoiseSpec::white(sigma, self.hbar)?, SdeScheme::ItoEulerMaruyama),
            Scheme::Amplitude => (NoiseSpec::white(sigma, self.hbar)?, SdeScheme::AmplitudeIto),
            Scheme::Stratonovich => {
                let lambda = self
                    .lambda
                    .ok_or_else(|| macrocollapse::Error::Invalid("the stratonovich scheme needs `lambda`".into()))?;
                (NoiseSpec::ornstein_uhlenbeck(sigma, lambda, self.hbar)?, SdeScheme::StratonovichHeun)
            }
        };
        let mut cfg = SdeConfig::new(noise, self.dt, self.t_max, scheme)?;
        cfg.collapse_epsilon = self.collapse_epsilon;
        cfg.record_every = self.record_every;
        cfg.stop_on_collapse = self.stop_on_collapse;
        cfg.validate()?;
        Ok((cfg, p0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinomialCheck {
    pub outcome: usize,
    pub frequency: f64,
    pub expected: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairDecay {
    pub pair: (usize, usize),
    /// `2 sigma_km^2 / hbar^2`, the exact decay rate of `<p_k p_m>` under
    /// the Ito equation.
    pub ito_rate: f64,
    pub fit: Option<DecayFit>,
    pub fit_error: Option<String>,
    /// 95% interval overlaps `ito_rate` within 5%.
    pub consistent: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SdeReport {
    pub scheme: Scheme,
    pub trajectories: usize,
    pub p0: Vec<f64>,
    pub outcome_counts: Vec<u64>,
    pub uncollapsed: usize,
    pub uncollapsed_fraction: f64,
    /// More than 1% of trajectories were still undecided at `t_max`.
    pub uncollapsed_flag: bool,
    pub born: Option<BornTest>,
    pub born_error: Option<String>,
    pub binomial: Vec<BinomialCheck>,
    pub decay: Vec<PairDecay>,
    pub martingale: MartingaleCheck,
    pub martingale_passes: bool,
    pub clamp_fraction: f64,
    pub median_collapse_time: Option<f64>,
}

/// Run the ensemble. With `require_born` an ensemble too small for the
/// chi-square test is an error rather than a note in the report.
pub fn execute(params: &SdeParams, seed: u64, require_born: bool) -> Result<(SdeReport, Tables), CliError> {
    let (cfg, p0) = params.config()?;
    if require_born && cfg.scheme != SdeScheme::ItoEulerMaruyama {
        return Err(CliError::Config("the born experiment runs the ito scheme".into()));
    }
    let ens = run_ensemble(&cfg, &p0, params.trajectories, seed, params.keep_trajectories)?;
    let stats = &ens.stats;
    let hbar = params.hbar;

    let (born, born_error) = match born_test(stats, &p0) {
        Ok(b) => (Some(b), None),
        Err(e) if require_born => return Err(e.into()),
        Err(e) => (None, Some(e.to_string())),
    };
    let decided: u64 = stats.outcome_counts.iter().sum();
    let binomial = stats
        .outcome_counts
        .iter()
        .zip(p0.p())
        .enumerate()
        .map(|(m, (&c, &p))| {
            let n = decided.max(1) as f64;
            let frequency = c as f64 / n;
            let se = (p * (1.0 - p) / n).sqrt();
            BinomialCheck { outcome: m, frequency, expected: p, se, z: z_score(frequency, p, se) }
        })
        .collect();

    let sigma = cfg.noise.sigma();
    let decay = stats
        .pairs
        .iter()
        .map(|&(k, m)| {
            let ito_rate = 2.0 * sigma.get(k, m).powi(2) / (hbar * hbar);
            match decay_fit(stats, (k, m)) {
                Ok(fit) => PairDecay {
                    pair: (k, m),
                    ito_rate,
                    consistent: Some(fit.consistent_with(ito_rate, 0.05)),
                    fit: Some(fit),
                    fit_error: None,
                },
                Err(e) => {
                    PairDecay { pair: (k, m), ito_rate, fit: None, fit_error: Some(e.to_string()), consistent: None }
                }
            }
        })
        .collect();
    let martingale = martingale_check(stats, &p0)?;
    let uncollapsed = stats.n_uncollapsed();
    let report = SdeReport {
        scheme: params.scheme,
        trajectories: params.trajectories,
        p0: p0.p().to_vec(),
        outcome_counts: stats.outcome_counts.clone(),
        uncollapsed,
        uncollapsed_fraction: uncollapsed as f64 / params.trajectories as f64,
        uncollapsed_flag: uncollapsed * 100 > params.trajectories,
        born,
        born_error,
        binomial,
        decay,
        martingale_passes: martingale.passes(),
        martingale,
        clamp_fraction: ens.clamp_fraction(),
        median_collapse_time: ens.median_collapse_time(),
    };
    let kept = trajectory_table(p0.len(), ens.kept.iter().map(|t| (t.times.as_slice(), t.path.as_slice())));
    Ok((report, vec![("trajectories.csv", kept), ("ensemble.csv", ensemble_table(stats))]))
}
