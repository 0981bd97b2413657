//! Effective stochastic dynamics of the macroscopic weights.
//!
//! * `p`-form Ito equation: `dp_n = (2/hbar) sum_m sqrt(p_n p_m) Im dW_nm`.
//! * Amplitude form for `b_n = sqrt(p_n)`, which needs the Ito correction
//!   drift `-sum_m sigma_nm^2 b_m^2 / (4 hbar^2 b_n) dt`.
//! * A Heun (Stratonovich) arm driven by smooth OU noise, for contrast.
//! * The scalar inertial equation `tau_R b'' = i b' - W b / hbar`, whose
//!   mean drift interpolates between the Stratonovich and Ito readings.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::analysis::{EnsembleAccumulator, EnsembleStats};
use crate::error::{Error, Result};
use crate::hilbert::SuperpositionState;
use crate::matrix::HollowHermitian;
use crate::noise::{ou_init, ou_step, white_increment_into, NoiseIncrement, NoiseKind, NoiseSpec, OuState, ScalarOu};
use crate::parallel::for_each_ordered;
use crate::rng::seed_stream;
use crate::stats::batched_mean_se;

/// Amplitudes at or below this value are treated as exactly zero.
pub const B_FLOOR: f64 = 1e-8;

/// Consecutive steps near a vertex required to declare a collapse.
pub const COLLAPSE_RUN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SdeScheme {
    ItoEulerMaruyama,
    StratonovichHeun,
    AmplitudeIto,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum ClampPolicy {
    /// Negative weights are set to zero and the vector renormalised.
    #[default]
    ClampRenormalize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdeConfig {
    pub noise: NoiseSpec,
    pub dt: f64,
    pub t_max: f64,
    pub scheme: SdeScheme,
    pub collapse_epsilon: f64,
    pub clamp_policy: ClampPolicy,
    /// Path samples are kept every `record_every` steps.
    pub record_every: usize,
    /// Stop integrating once a collapse is detected. Ensemble moments need a
    /// common grid, so ensembles usually keep running.
    pub stop_on_collapse: bool,
}

impl SdeConfig {
    pub fn new(noise: NoiseSpec, dt: f64, t_max: f64, scheme: SdeScheme) -> Result<Self> {
        let cfg = Self {
            noise,
            dt,
            t_max,
            scheme,
            collapse_epsilon: 1e-3,
            clamp_policy: ClampPolicy::ClampRenormalize,
            record_every: 1,
            stop_on_collapse: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_max.is_finite() && self.dt <= self.t_max) {
            return Err(Error::Invalid(format!("need 0 < dt <= t_max, got dt = {}, t_max = {}", self.dt, self.t_max)));
        }
        let h = self.noise.hbar();
        let s = self.noise.sigma().max();
        if self.dt * s * s / (h * h) > 0.01 + 1e-12 {
            return Err(Error::Invalid(format!("dt sigma^2 / hbar^2 = {} exceeds 0.01", self.dt * s * s / (h * h))));
        }
        if !(self.collapse_epsilon > 0.0 && self.collapse_epsilon <= 0.1) {
            return Err(Error::Invalid(format!("collapse epsilon {} outside (0, 0.1]", self.collapse_epsilon)));
        }
        if self.record_every == 0 {
            return Err(Error::Invalid("record_every must be >= 1".into()));
        }
        match (self.scheme, self.noise.kind()) {
            (SdeScheme::StratonovichHeun, NoiseKind::OrnsteinUhlenbeck { lambda }) => {
                if self.dt > 1.0 / (20.0 * lambda) + 1e-15 {
                    return Err(Error::Invalid(format!(
                        "Heun step {} exceeds 1 / (20 lambda) = {}",
                        self.dt,
                        1.0 / (20.0 * lambda)
                    )));
                }
            }
            (SdeScheme::StratonovichHeun, NoiseKind::White) => {
                return Err(Error::Invalid("the Stratonovich arm needs OU noise".into()));
            }
            (_, NoiseKind::OrnsteinUhlenbeck { .. }) => {
                return Err(Error::Invalid("Ito schemes need white noise".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    /// Times at which paths are recorded.
    pub fn record_times(&self) -> Vec<f64> {
        let steps = self.steps();
        (0..=steps / self.record_every).map(|k| (k * self.record_every) as f64 * self.dt).collect()
    }
}

/// Project onto the simplex: clamp negatives to zero and renormalise.
/// Returns true when a component had to be clamped.
pub fn clamp_renormalize(p: &mut [f64]) -> bool {
    let mut clamped = false;
    for x in p.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
            clamped = true;
        }
    }
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter_mut().for_each(|x| *x /= s);
    }
    clamped
}

/// Unclamped Ito update of `p`. The sum is conserved term by term, since
/// `Im dW_nm = -Im dW_mn`.
pub fn ito_p_update(p: &[f64], dw: &HollowHermitian, hbar: f64) -> Vec<f64> {
    let mut out = p.to_vec();
    ito_p_update_into(p, dw, hbar, &mut out);
    out
}

fn ito_p_update_into(p: &[f64], dw: &HollowHermitian, hbar: f64, out: &mut [f64]) {
    let m = p.len();
    out.copy_from_slice(p);
    let c = 2.0 / hbar;
    for n in 0..m {
        for k in n + 1..m {
            let d = c * (p[n] * p[k]).sqrt() * dw.get(n, k).im;
            out[n] += d;
            out[k] -= d;
        }
    }
}

/// One Euler-Maruyama step of the `p`-form Ito equation.
pub fn step_ito_p(p: &SuperpositionState, dw: &NoiseIncrement, hbar: f64) -> SuperpositionState {
    let mut next = ito_p_update(p.p(), &dw.dw, hbar);
    clamp_renormalize(&mut next);
    SuperpositionState::from_weights(&next).expect("clamped weights are a valid state")
}

/// One Euler-Maruyama step of the amplitude form.
///
/// `b'_n = b_n + (1/hbar) sum_m Im(dW_nm) b_m - sum_m sigma_nm^2 b_m^2 / (4 hbar^2 b_n) dt`.
/// Components at or below [`B_FLOOR`] stay at zero: in the `p`-form they are
/// absorbed, and the singular drift has no meaning there.
pub fn step_ito_b(b: &[f64], dw: &NoiseIncrement, spec: &NoiseSpec) -> Vec<f64> {
    let m = b.len();
    let hbar = spec.hbar();
    let sigma = spec.sigma();
    let dt = dw.dt;
    (0..m)
        .map(|n| {
            if b[n] <= B_FLOOR {
                return 0.0;
            }
            let mut noise = 0.0;
            let mut drift = 0.0;
            for k in 0..m {
                if k == n {
                    continue;
                }
                noise += dw.dw.get(n, k).im * b[k];
                let s = sigma.get(n, k);
                drift += s * s * b[k] * b[k];
            }
            b[n] + noise / hbar - drift / (4.0 * hbar * hbar * b[n]) * dt
        })
        .collect()
}

fn p_rhs(p: &[f64], w: &HollowHermitian, hbar: f64, out: &mut [f64]) {
    let m = p.len();
    out.iter_mut().for_each(|x| *x = 0.0);
    let c = 2.0 / hbar;
    for n in 0..m {
        for k in n + 1..m {
            let d = c * (p[n].max(0.0) * p[k].max(0.0)).sqrt() * w.get(n, k).im;
            out[n] += d;
            out[k] -= d;
        }
    }
}

/// Heun step of `dp/dt = f(p, W)` with `W` the OU value at both ends of
/// the step.
pub fn step_stratonovich_p(
    p: &SuperpositionState,
    w_now: &OuState,
    w_next: &OuState,
    dt: f64,
    hbar: f64,
) -> SuperpositionState {
    let mut next = heun_update(p.p(), &w_now.w, &w_next.w, dt, hbar);
    clamp_renormalize(&mut next);
    SuperpositionState::from_weights(&next).expect("clamped weights are a valid state")
}

fn heun_update(p: &[f64], w0: &HollowHermitian, w1: &HollowHermitian, dt: f64, hbar: f64) -> Vec<f64> {
    let m = p.len();
    let mut f0 = vec![0.0; m];
    let mut f1 = vec![0.0; m];
    p_rhs(p, w0, hbar, &mut f0);
    let pred: Vec<f64> = p.iter().zip(&f0).map(|(x, f)| x + f * dt).collect();
    p_rhs(&pred, w1, hbar, &mut f1);
    p.iter().zip(f0.iter().zip(&f1)).map(|(x, (a, b))| x + 0.5 * (a + b) * dt).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub path: Vec<Vec<f64>>,
    pub outcome: Option<usize>,
    /// Start of the run of near-vertex steps that triggered detection.
    pub collapse_time: Option<f64>,
    /// Steps at which the clamp policy changed the state.
    pub clamp_events: usize,
    pub steps_taken: usize,
}

struct CollapseDetector {
    eps: f64,
    current: Option<usize>,
    run: usize,
    run_start: f64,
}

impl CollapseDetector {
    fn observe(&mut self, p: &[f64], t: f64) -> Option<(usize, f64)> {
        let hit = p.iter().position(|&x| x >= 1.0 - self.eps);
        match hit {
            Some(m) if self.current == Some(m) => self.run += 1,
            Some(m) => {
                self.current = Some(m);
                self.run = 1;
                self.run_start = t;
            }
            None => {
                self.current = None;
                self.run = 0;
            }
        }
        (self.run >= COLLAPSE_RUN).then(|| (self.current.unwrap(), self.run_start))
    }
}

/// Integrate one trajectory from `p0`.
pub fn run_trajectory<R: Rng + ?Sized>(cfg: &SdeConfig, p0: &SuperpositionState, rng: &mut R) -> Result<Trajectory> {
    let m = cfg.noise.dim();
    if p0.len() != m {
        return Err(Error::Dimension(format!("p0 has {} weights, noise is {m}x{m}", p0.len())));
    }
    let hbar = cfg.noise.hbar();
    let dt = cfg.dt;
    let steps = cfg.steps();
    let record_times = cfg.record_times();

    let mut p = p0.p().to_vec();
    let mut b: Vec<f64> = p.iter().map(|x| x.sqrt()).collect();
    let mut next = vec![0.0; m];
    let mut inc = NoiseIncrement { dw: HollowHermitian::zeros(m), dt };
    let mut ou = match cfg.scheme {
        SdeScheme::StratonovichHeun => Some(ou_init(&cfg.noise, rng)?),
        _ => None,
    };

    let mut path = Vec::with_capacity(record_times.len());
    path.push(p.clone());
    let mut detector = CollapseDetector { eps: cfg.collapse_epsilon, current: None, run: 0, run_start: 0.0 };
    let mut outcome = detector.observe(&p, 0.0);
    let mut clamp_events = 0;
    let mut taken = 0;

    for step in 1..=steps {
        let t = step as f64 * dt;
        let clamped = match cfg.scheme {
            SdeScheme::ItoEulerMaruyama => {
                white_increment_into(&cfg.noise, dt, rng, &mut inc.dw)?;
                ito_p_update_into(&p, &inc.dw, hbar, &mut next);
                let c = clamp_renormalize(&mut next);
                std::mem::swap(&mut p, &mut next);
                c
            }
            SdeScheme::AmplitudeIto => {
                white_increment_into(&cfg.noise, dt, rng, &mut inc.dw)?;
                let mut nb = step_ito_b(&b, &inc, &cfg.noise);
                let mut c = false;
                for x in nb.iter_mut() {
                    if *x <= B_FLOOR {
                        c |= *x < 0.0;
                        *x = 0.0;
                    }
                }
                let norm = nb.iter().map(|x| x * x).sum::<f64>().sqrt();
                nb.iter_mut().for_each(|x| *x /= norm);
                b = nb;
                p.iter_mut().zip(&b).for_each(|(pn, bn)| *pn = bn * bn);
                c
            }
            SdeScheme::StratonovichHeun => {
                let w_now = ou.take().expect("OU state present for the Heun arm");
                let w_next = ou_step(&cfg.noise, &w_now, dt, rng)?;
                next = heun_update(&p, &w_now.w, &w_next.w, dt, hbar);
                let c = clamp_renormalize(&mut next);
                std::mem::swap(&mut p, &mut next);
                ou = Some(w_next);
                c
            }
        };
        if !p.iter().all(|x| x.is_finite()) {
            return Err(Error::Integration(format!("non-finite weights {:?} at t = {t} (step {step})", p)));
        }
        clamp_events += clamped as usize;
        taken = step;
        if step % cfg.record_every == 0 {
            path.push(p.clone());
        }
        if outcome.is_none() {
            outcome = detector.observe(&p, t);
            if outcome.is_some() && cfg.stop_on_collapse {
                break;
            }
        }
    }
    // A stopped path is held at its final state for the rest of the grid.
    while path.len() < record_times.len() {
        path.push(p.clone());
    }
    Ok(Trajectory {
        times: record_times,
        path,
        outcome: outcome.map(|o| o.0),
        collapse_time: outcome.map(|o| o.1),
        clamp_events,
        steps_taken: taken,
    })
}

/// Result of an ensemble of effective trajectories.
#[derive(Clone, Debug)]
pub struct SdeEnsemble {
    pub stats: EnsembleStats,
    pub collapse_times: Vec<Option<f64>>,
    pub clamp_events: usize,
    pub total_steps: usize,
    /// Full paths of the first few trajectories, for dumps.
    pub kept: Vec<Trajectory>,
}

impl SdeEnsemble {
    pub fn clamp_fraction(&self) -> f64 {
        self.clamp_events as f64 / self.total_steps.max(1) as f64
    }

    /// Median over collapsed trajectories.
    pub fn median_collapse_time(&self) -> Option<f64> {
        let mut t: Vec<f64> = self.collapse_times.iter().flatten().copied().collect();
        if t.is_empty() {
            return None;
        }
        t.sort_by(f64::total_cmp);
        let n = t.len();
        Some(if n % 2 == 1 { t[n / 2] } else { 0.5 * (t[n / 2 - 1] + t[n / 2]) })
    }
}

/// `n` trajectories, trajectory `i` on stream `(seed, i)`.
pub fn run_ensemble(cfg: &SdeConfig, p0: &SuperpositionState, n: usize, seed: u64, keep: usize) -> Result<SdeEnsemble> {
    cfg.validate()?;
    let mut acc = EnsembleAccumulator::new(cfg.record_times(), p0.len(), n)?;
    let mut collapse_times = Vec::with_capacity(n);
    let mut kept = Vec::new();
    let (mut clamp_events, mut total_steps) = (0, 0);
    for_each_ordered(
        n,
        |i| run_trajectory(cfg, p0, &mut seed_stream(seed, i)),
        |i, tr| {
            acc.push(&tr.path, tr.outcome)?;
            collapse_times.push(tr.collapse_time);
            clamp_events += tr.clamp_events;
            total_steps += tr.steps_taken;
            if (i as usize) < keep {
                kept.push(tr);
            }
            Ok(())
        },
    )?;
    Ok(SdeEnsemble { stats: acc.finish()?, collapse_times, clamp_events, total_steps, kept })
}

/// Initial velocity of the inertial equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum BdotPolicy {
    /// `u(0) = W(0) b(0) / (i hbar)`, on the Schrodinger manifold.
    #[default]
    SchrodingerConsistent,
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InertialConfig {
    pub tau_r: f64,
    pub noise: ScalarOu,
    pub hbar: f64,
    pub b0: Complex64,
    pub bdot0_policy: BdotPolicy,
    pub dt: f64,
    pub t_max: f64,
    pub ensemble_size: usize,
    /// Mean path samples are kept every `record_every` steps.
    pub record_every: usize,
    /// Start of the drift-measurement window; defaults to `10 / lambda`.
    pub window_start: Option<f64>,
}

impl InertialConfig {
    pub fn validate(&self) -> Result<()> {
        let lambda = self.noise.lambda();
        if !(self.tau_r > 0.0 && self.hbar > 0.0 && self.t_max > 0.0) {
            return Err(Error::Invalid("tau_R, hbar and t_max must be positive".into()));
        }
        let limit = self.tau_r.min(1.0 / lambda) / 20.0;
        if !(self.dt > 0.0 && self.dt <= limit * (1.0 + 1e-9)) {
            return Err(Error::Usage(format!("step {} exceeds min(tau_R, 1/lambda) / 20 = {limit}", self.dt)));
        }
        if self.ensemble_size < 2 || self.record_every == 0 {
            return Err(Error::Invalid("need >= 2 realisations and record_every >= 1".into()));
        }
        let (s, e) = self.window()?;
        if !(s >= 0.0 && e > s) {
            return Err(Error::Invalid(format!("empty drift window [{s}, {e}]")));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    fn window(&self) -> Result<(f64, f64)> {
        let start = self.window_start.unwrap_or(10.0 / self.noise.lambda());
        Ok((start, self.steps() as f64 * self.dt))
    }

    /// Step indices of the two averaging blocks, `[i0, i0 + nb]` and
    /// `[i1 - nb, i1]`. Each block spans a whole number of free-oscillation
    /// periods `2 pi tau_R` when that fits, so the undamped homogeneous
    /// oscillation averages out.
    pub fn blocks(&self) -> Result<(usize, usize, usize)> {
        let (start, _) = self.window()?;
        let i0 = (start / self.dt).round() as usize;
        let i1 = self.steps();
        if i1 <= i0 + 4 {
            return Err(Error::InsufficientData("drift window shorter than four steps".into()));
        }
        let span = (i1 - i0) as f64 * self.dt;
        let period = 2.0 * std::f64::consts::PI * self.tau_r;
        let target = 0.2 * span;
        let len = if period <= target { period * (target / period).floor() } else { target };
        let nb = ((len / self.dt).round() as usize).clamp(1, (i1 - i0) / 2);
        Ok((i0, i1, nb))
    }

    fn record_times(&self) -> Vec<f64> {
        (0..=self.steps() / self.record_every).map(|k| (k * self.record_every) as f64 * self.dt).collect()
    }
}

/// Mean drift measured over the window, per component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DriftEstimate {
    pub re: f64,
    pub im: f64,
    pub se_re: f64,
    pub se_im: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub block: f64,
}

impl DriftEstimate {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InertialRun {
    pub times: Vec<f64>,
    /// `<b - b0 - b1 - (u(0) z - <u(0) z>)>`. `b1` is the first-order
    /// response and `u(0) z` the part of the second-order response driven by
    /// the initial velocity, which dominates the spread when `tau_r` is long.
    /// Both subtracted terms have exactly zero mean under the discrete
    /// scheme, so this is an unbiased estimate of `<b - b0>`.
    pub mean_db: Vec<Complex64>,
    pub se_db: Vec<(f64, f64)>,
    /// Plain `<b - b0>`.
    pub mean_db_raw: Vec<Complex64>,
    pub drift: DriftEstimate,
    /// The same window estimator applied to the closed-form mean path.
    pub analytic: Complex64,
}

/// `-(sigma^2 b0 / 2 hbar^2) A(t) / (1 + i lambda tau_R)` with
/// `A(t) = 1 - e^{-lambda t} [1 - i lambda tau_R (e^{i t / tau_R} - 1)]`.
pub fn analytic_drift(t: f64, lambda: f64, tau_r: f64, sigma: f64, b0: Complex64, hbar: f64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let lt = Complex64::new(lambda * tau_r, 0.0);
    let a = 1.0 - (-lambda * t).exp() * (1.0 - i * lt * (Complex64::from_polar(1.0, t / tau_r) - 1.0));
    -(sigma * sigma * b0 / (2.0 * hbar * hbar)) * a / (1.0 + i * lt)
}

/// Block-difference slope of a sampled path, trapezoid-averaged.
fn block_slope(series: &[Complex64], dt: f64, (i0, i1, nb): (usize, usize, usize)) -> Complex64 {
    let avg = |lo: usize| {
        let s = &series[lo..=lo + nb];
        let inner: Complex64 = s[1..nb].iter().sum();
        (inner + 0.5 * (s[0] + s[nb])) / nb as f64
    };
    (avg(i1 - nb) - avg(i0)) / ((i1 - nb - i0) as f64 * dt)
}

/// Window estimator applied to `integral_0^t analytic_drift`.
pub fn analytic_window_drift(cfg: &InertialConfig) -> Result<Complex64> {
    let blocks = cfg.blocks()?;
    let (lambda, sigma) = (cfg.noise.lambda(), cfg.noise.sigma());
    let mut path = Vec::with_capacity(cfg.steps() + 1);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut prev = analytic_drift(0.0, lambda, cfg.tau_r, sigma, cfg.b0, cfg.hbar);
    path.push(acc);
    for k in 1..=cfg.steps() {
        // Simpson on each step keeps the quadrature error far below MC noise.
        let t = k as f64 * cfg.dt;
        let mid = analytic_drift(t - 0.5 * cfg.dt, lambda, cfg.tau_r, sigma, cfg.b0, cfg.hbar);
        let next = analytic_drift(t, lambda, cfg.tau_r, sigma, cfg.b0, cfg.hbar);
        acc += (prev + 4.0 * mid + next) * (cfg.dt / 6.0);
        path.push(acc);
        prev = next;
    }
    Ok(block_slope(&path, cfg.dt, blocks))
}

struct Realisation {
    recorded: Vec<(Complex64, Complex64)>,
    slope: Complex64,
}

/// One RK4 step of `tau u' = i u - W s / hbar`, `b' = u`, where the source
/// `s` is given by its four stage values. Returns the new state and this
/// state's own stage values, which drive the next order.
fn driven_step(
    cfg: &InertialConfig,
    (b, u): (Complex64, Complex64),
    src: [Complex64; 4],
    [w, w_mid, w_end]: [f64; 3],
) -> ((Complex64, Complex64), [Complex64; 4]) {
    let i = Complex64::new(0.0, 1.0);
    let (dt, tau, hbar) = (cfg.dt, cfg.tau_r, cfg.hbar);
    let force = |u: Complex64, s: Complex64, w: f64| (i * u - w * s / hbar) / tau;
    let (kb1, ku1) = (u, force(u, src[0], w));
    let (kb2, ku2) = (u + 0.5 * dt * ku1, force(u + 0.5 * dt * ku1, src[1], w_mid));
    let (kb3, ku3) = (u + 0.5 * dt * ku2, force(u + 0.5 * dt * ku2, src[2], w_mid));
    let (kb4, ku4) = (u + dt * ku3, force(u + dt * ku3, src[3], w_end));
    let stages = [b, b + 0.5 * dt * kb1, b + 0.5 * dt * kb2, b + dt * kb3];
    ((b + dt / 6.0 * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4), u + dt / 6.0 * (ku1 + 2.0 * ku2 + 2.0 * ku3 + ku4)), stages)
}

/// `u(0) = gain * W(0)`.
fn initial_velocity_gain(cfg: &InertialConfig) -> Complex64 {
    match cfg.bdot0_policy {
        BdotPolicy::SchrodingerConsistent => Complex64::new(0.0, -1.0) * cfg.b0 / cfg.hbar,
        BdotPolicy::Zero => Complex64::new(0.0, 0.0),
    }
}

/// `E[W(0) z_k]` for every step, where `z` is the second-order response to
/// the free first-order mode `h` (`h(0) = 0`, `h'(0) = 1`, no noise).
///
/// `(z, z', w)` is linear in its previous value and in the two fresh normals,
/// which are independent of `W(0)`, so the correlation propagates through the
/// deterministic part of the step alone.
fn initial_velocity_response(cfg: &InertialConfig) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let (a, _) = cfg.noise.transition(0.5 * cfg.dt);
    let var = cfg.noise.stationary_sd().powi(2);
    let mut h = (zero, Complex64::new(1.0, 0.0));
    let mut r = [zero, zero, Complex64::from(var)];
    let mut out = Vec::with_capacity(cfg.steps() + 1);
    out.push(r[0]);
    for _ in 0..cfg.steps() {
        let (h_next, h_stages) = driven_step(cfg, h, [zero; 4], [0.0; 3]);
        let ((z, uz), _) = driven_step(cfg, (r[0], r[1]), h_stages, [0.0; 3]);
        let ((zw, uzw), _) = driven_step(cfg, (zero, zero), h_stages, [1.0, a, a * a]);
        r = [z + zw * r[2], uz + uzw * r[2], r[2] * a * a];
        h = h_next;
        out.push(r[0]);
    }
    out
}

fn inertial_realisation(
    cfg: &InertialConfig,
    blocks: (usize, usize, usize),
    w0_z_mean: &[Complex64],
    rng: &mut impl Rng,
) -> Result<Realisation> {
    let i = Complex64::new(0.0, 1.0);
    let zero = Complex64::new(0.0, 0.0);
    let (dt, tau, hbar, b0) = (cfg.dt, cfg.tau_r, cfg.hbar, cfg.b0);
    let (a_half, s_half) = cfg.noise.transition(0.5 * dt);
    let normal = |rng: &mut dyn rand::RngCore| -> f64 { rng.sample(rand_distr::StandardNormal) };

    let w0 = cfg.noise.init(rng);
    let gain = initial_velocity_gain(cfg);
    let u_init = gain * w0;
    let mut w = w0;
    // Full state (b, u), first-order response (b1, u1), the free mode h and
    // the second-order response z to it. b2 contains u(0) z exactly.
    let (mut b, mut u) = (b0, u_init);
    let mut first = (zero, u_init);
    let mut h = (zero, Complex64::new(1.0, 0.0));
    let mut z = (zero, zero);
    let force = |u: Complex64, b: Complex64, w: f64| (i * u - w * b / hbar) / tau;

    let steps = cfg.steps();
    let mut recorded = Vec::with_capacity(steps / cfg.record_every + 1);
    recorded.push((zero, zero));
    let mut residual = Vec::with_capacity(steps + 1);
    residual.push(zero);

    for k in 1..=steps {
        let w_mid = a_half * w + s_half * normal(rng);
        let w_end = a_half * w_mid + s_half * normal(rng);

        let (kb1, ku1) = (u, force(u, b, w));
        let (kb2, ku2) = (u + 0.5 * dt * ku1, force(u + 0.5 * dt * ku1, b + 0.5 * dt * kb1, w_mid));
        let (kb3, ku3) = (u + 0.5 * dt * ku2, force(u + 0.5 * dt * ku2, b + 0.5 * dt * kb2, w_mid));
        let (kb4, ku4) = (u + dt * ku3, force(u + dt * ku3, b + dt * kb3, w_end));
        b += dt / 6.0 * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4);
        u += dt / 6.0 * (ku1 + 2.0 * ku2 + 2.0 * ku3 + ku4);

        first = driven_step(cfg, first, [b0; 4], [w, w_mid, w_end]).0;
        let (h_next, h_stages) = driven_step(cfg, h, [zero; 4], [0.0; 3]);
        z = driven_step(cfg, z, h_stages, [w, w_mid, w_end]).0;
        h = h_next;

        w = w_end;
        if !(b.re.is_finite() && b.im.is_finite()) {
            return Err(Error::Integration(format!("inertial amplitude diverged at step {k}")));
        }
        let db = b - b0;
        let cv = db - first.0 - (u_init * z.0 - gain * w0_z_mean[k]);
        residual.push(cv);
        if k % cfg.record_every == 0 {
            recorded.push((cv, db));
        }
    }
    Ok(Realisation { recorded, slope: block_slope(&residual, dt, blocks) })
}

/// Ensemble of inertial realisations; realisation `i` uses stream `(seed, i)`.
pub fn run_inertial(cfg: &InertialConfig, seed: u64) -> Result<InertialRun> {
    cfg.validate()?;
    let blocks = cfg.blocks()?;
    let times = cfg.record_times();
    let nt = times.len();
    let n = cfg.ensemble_size;
    let nb = crate::analysis::DEFAULT_BATCHES.min(n);

    // Per batch: sums of the control-variate path (re, im) and the raw path.
    let mut batch_cv = vec![vec![(0.0, 0.0); nt]; nb];
    let mut batch_counts = vec![0usize; nb];
    let mut raw_sum = vec![Complex64::new(0.0, 0.0); nt];
    let mut slopes_re = Vec::with_capacity(n);
    let mut slopes_im = Vec::with_capacity(n);

    let w0_z_mean = initial_velocity_response(cfg);
    for_each_ordered(
        n,
        |k| inertial_realisation(cfg, blocks, &w0_z_mean, &mut seed_stream(seed, k)),
        |k, r| {
            let b = k as usize * nb / n;
            batch_counts[b] += 1;
            for (t, (cv, raw)) in r.recorded.iter().enumerate() {
                batch_cv[b][t].0 += cv.re;
                batch_cv[b][t].1 += cv.im;
                raw_sum[t] += raw;
            }
            slopes_re.push(r.slope.re);
            slopes_im.push(r.slope.im);
            Ok(())
        },
    )?;

    let mut mean_db = Vec::with_capacity(nt);
    let mut se_db = Vec::with_capacity(nt);
    for t in 0..nt {
        let (sr, si): (f64, f64) = batch_cv.iter().map(|b| b[t]).fold((0.0, 0.0), |a, x| (a.0 + x.0, a.1 + x.1));
        mean_db.push(Complex64::new(sr / n as f64, si / n as f64));
        let bm_re: Vec<f64> = batch_cv.iter().zip(&batch_counts).map(|(b, &c)| b[t].0 / c as f64).collect();
        let bm_im: Vec<f64> = batch_cv.iter().zip(&batch_counts).map(|(b, &c)| b[t].1 / c as f64).collect();
        se_db.push((batched_mean_se(&bm_re, nb).1, batched_mean_se(&bm_im, nb).1));
    }
    let (re, se_re) = batched_mean_se(&slopes_re, nb);
    let (im, se_im) = batched_mean_se(&slopes_im, nb);
    let (i0, i1, blk) = blocks;
    Ok(InertialRun {
        times,
        mean_db,
        se_db,
        mean_db_raw: raw_sum.iter().map(|z| z / n as f64).collect(),
        drift: DriftEstimate {
            re,
            im,
            se_re,
            se_im,
            window_start: i0 as f64 * cfg.dt,
            window_end: i1 as f64 * cfg.dt,
            block: blk as f64 * cfg.dt,
        },
        analytic: analytic_window_drift(cfg)?,
    })
}
