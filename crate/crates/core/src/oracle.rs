//! Exact unitary evolution of the full microscopic system.
//!
//! The Hamiltonian is `H0 + V`. `H0` is diagonal with eigenvalues drawn
//! inside each macrostate bin; `V` is a random Hermitian coupling that
//! connects different bins only. Microstates are identified with the `H0`
//! eigenbasis. Two propagators are provided: fixed-step RK4 in the
//! interaction picture and full diagonalisation of `H`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analysis::{EnsembleAccumulator, EnsembleStats};
use crate::error::{Error, Result};
use crate::hilbert::{
    assemble_micro, block_weights, sample_micro_amplitudes, MacroConfig, MicroAmplitudes, MicroState,
    SuperpositionState,
};
use crate::matrix::HollowHermitian;
use crate::noise::estimate_autocorrelation;
use crate::rng::seed_stream;
use crate::tolerance::{INTEGRATION, INTEGRATION_FAILURE};

/// Mean squared coupling as a function of the reduced energy difference
/// `e = (E_k - E_n) - (E_k' - E_m)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CouplingProfile {
    /// `|V|^2 = vbar^2` for every pair of levels.
    Flat,
    /// `|V|^2 = vbar^2 exp(-e^2 / (2 width^2))`.
    Gaussian { width: f64 },
}

impl CouplingProfile {
    fn weight(&self, e: f64) -> f64 {
        match *self {
            CouplingProfile::Flat => 1.0,
            CouplingProfile::Gaussian { width } => (-0.5 * (e / width).powi(2)).exp(),
        }
    }
}

/// `H0` eigenvalues plus dense inter-bin coupling.
#[derive(Clone, Debug)]
pub struct MicroHamiltonian {
    cfg: MacroConfig,
    energies: Vec<f64>,
    /// Row-major `D x D`; blocks on the diagonal are identically zero.
    v: Vec<Complex64>,
    coupling_scale: f64,
    profile: CouplingProfile,
}

impl MicroHamiltonian {
    pub fn config(&self) -> &MacroConfig {
        &self.cfg
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn coupling_scale(&self) -> f64 {
        self.coupling_scale
    }

    pub fn profile(&self) -> CouplingProfile {
        self.profile
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Matrix element `V_{ij}` in the combined index.
    #[inline]
    pub fn v(&self, i: usize, j: usize) -> Complex64 {
        self.v[i * self.dim() + j]
    }

    /// Rows `block(n)` by columns `block(m)` of `V`.
    pub fn block(&self, n: usize, m: usize) -> Vec<Vec<Complex64>> {
        let cols = self.cfg.block(m);
        self.cfg.block(n).map(|i| cols.clone().map(|j| self.v(i, j)).collect()).collect()
    }

    /// Golden-rule estimate `sigma^2 = pi hbar vbar^2 / dE` for a flat profile.
    pub fn sigma_sq_estimate(&self) -> f64 {
        std::f64::consts::PI * self.cfg.hbar() * self.coupling_scale.powi(2) / self.cfg.bin_width()
    }

    /// `hbar^2 / sigma^2`, the effective collapse time.
    pub fn collapse_time(&self) -> f64 {
        let s2 = self.sigma_sq_estimate();
        if s2 > 0.0 {
            self.cfg.hbar().powi(2) / s2
        } else {
            f64::INFINITY
        }
    }

    /// Largest admissible RK4 step.
    pub fn max_step(&self) -> f64 {
        (self.cfg.hbar() / (10.0 * self.cfg.spectral_span())).min(self.collapse_time() / 1000.0)
    }

    fn full_matrix(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| if i == j { Complex64::new(self.energies[i], 0.0) } else { self.v(i, j) })
    }

    /// `y = V x`, skipping the zero diagonal blocks.
    fn apply_v(&self, x: &[Complex64], y: &mut [Complex64]) {
        let d = self.dim();
        let offsets = self.cfg.offsets();
        for n in 0..self.cfg.macro_count() {
            let (lo, hi) = (offsets[n], offsets[n + 1]);
            for i in lo..hi {
                let row = &self.v[i * d..(i + 1) * d];
                let mut s = Complex64::new(0.0, 0.0);
                for j in (0..lo).chain(hi..d) {
                    s += row[j] * x[j];
                }
                y[i] = s;
            }
        }
    }
}

pub fn build_hamiltonian<R: Rng + ?Sized>(cfg: &MacroConfig, vbar: f64, rng: &mut R) -> Result<MicroHamiltonian> {
    build_hamiltonian_with(cfg, vbar, CouplingProfile::Flat, rng)
}

/// Levels i.i.d. uniform within each bin; couplings circular complex
/// Gaussian with `E|V|^2 = vbar^2 * profile(e)`.
pub fn build_hamiltonian_with<R: Rng + ?Sized>(
    cfg: &MacroConfig,
    vbar: f64,
    profile: CouplingProfile,
    rng: &mut R,
) -> Result<MicroHamiltonian> {
    if !(vbar >= 0.0 && vbar.is_finite()) {
        return Err(Error::Invalid(format!("coupling scale must be >= 0, got {vbar}")));
    }
    if let CouplingProfile::Gaussian { width } = profile {
        if !(width > 0.0) {
            return Err(Error::Invalid(format!("profile width must be > 0, got {width}")));
        }
    }
    let d = cfg.total_dim();
    let de = cfg.bin_width();
    let mut energies = Vec::with_capacity(d);
    for (n, &centre) in cfg.bin_energies().iter().enumerate() {
        for _ in 0..cfg.micro_counts()[n] {
            let u: f64 = rng.random();
            energies.push((centre - de + 2.0 * de * u).clamp(centre - de, centre + de));
        }
    }
    let mut v = vec![Complex64::new(0.0, 0.0); d * d];
    let scale = vbar * std::f64::consts::FRAC_1_SQRT_2;
    for n in 0..cfg.macro_count() {
        for m in n + 1..cfg.macro_count() {
            let (en, em) = (cfg.bin_energies()[n], cfg.bin_energies()[m]);
            for i in cfg.block(n) {
                for j in cfg.block(m) {
                    let s = scale * profile.weight((energies[i] - en) - (energies[j] - em)).sqrt();
                    let z = Complex64::new(
                        s * rng.sample::<f64, _>(StandardNormal),
                        s * rng.sample::<f64, _>(StandardNormal),
                    );
                    v[i * d + j] = z;
                    v[j * d + i] = z.conj();
                }
            }
        }
    }
    Ok(MicroHamiltonian { cfg: cfg.clone(), energies, v, coupling_scale: vbar, profile })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleTrajectory {
    pub times: Vec<f64>,
    pub p_of_t: Vec<SuperpositionState>,
    pub w_of_t: Option<Vec<HollowHermitian>>,
    /// Largest `| |b|^2 - 1 |` seen before any renormalisation.
    pub max_norm_drift: f64,
    /// Grid points at which the state was renormalised.
    pub renormalizations: usize,
}

impl OracleTrajectory {
    /// Attach `W(t)` for the fixed microscopic amplitudes `eta`.
    pub fn with_w(mut self, h: &MicroHamiltonian, eta: &MicroAmplitudes) -> Self {
        self.w_of_t = Some(self.times.iter().map(|&t| measure_w(h, eta, t)).collect());
        self
    }

    pub fn paths(&self) -> Vec<Vec<f64>> {
        self.p_of_t.iter().map(|p| p.p().to_vec()).collect()
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid[0] != 0.0 {
        return Err(Error::Usage("time grid must start at 0".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Usage("time grid must be strictly increasing".into()));
    }
    Ok(())
}

fn check_state(h: &MicroHamiltonian, psi0: &MicroState) -> Result<()> {
    if psi0.amplitudes().len() != h.dim() {
        return Err(Error::Dimension(format!(
            "state has {} amplitudes, Hamiltonian acts on {}",
            psi0.amplitudes().len(),
            h.dim()
        )));
    }
    Ok(())
}

/// Norm bookkeeping shared by the propagators.
struct NormGuard {
    max_drift: f64,
    renormalizations: usize,
}

impl NormGuard {
    fn check(&mut self, b: &mut [Complex64], t: f64) -> Result<()> {
        let norm: f64 = b.iter().map(|z| z.norm_sqr()).sum();
        if !norm.is_finite() {
            return Err(Error::Integration(format!("non-finite amplitudes at t = {t}")));
        }
        let drift = (norm - 1.0).abs();
        self.max_drift = self.max_drift.max(drift);
        if drift > INTEGRATION_FAILURE {
            return Err(Error::Integration(format!("norm drifted by {drift:e} at t = {t}")));
        }
        if drift > INTEGRATION {
            let s = norm.sqrt().recip();
            b.iter_mut().for_each(|z| *z *= s);
            self.renormalizations += 1;
        }
        Ok(())
    }
}

/// Interaction-picture RK4 with step at most `dt`.
///
/// Each grid interval is split into equal substeps no longer than `dt`, so
/// every grid time is hit exactly.
pub fn evolve_exact(h: &MicroHamiltonian, psi0: &MicroState, t_grid: &[f64], dt: f64) -> Result<OracleTrajectory> {
    check_grid(t_grid)?;
    check_state(h, psi0)?;
    let limit = h.max_step();
    if !(dt > 0.0 && dt <= limit) {
        return Err(Error::Usage(format!("RK4 step {dt} exceeds the stability limit {limit}")));
    }
    let cfg = h.config();
    let hbar = cfg.hbar();
    let d = h.dim();
    let e = h.energies();

    let mut b = psi0.amplitudes().to_vec();
    let mut guard = NormGuard { max_drift: 0.0, renormalizations: 0 };
    let mut p_of_t = vec![SuperpositionState::from_weights(&block_weights(&b, cfg))?];

    let mut c = vec![Complex64::new(0.0, 0.0); d];
    let mut y = vec![Complex64::new(0.0, 0.0); d];
    let mut ks = [
        vec![Complex64::new(0.0, 0.0); d],
        vec![Complex64::new(0.0, 0.0); d],
        vec![Complex64::new(0.0, 0.0); d],
        vec![Complex64::new(0.0, 0.0); d],
    ];
    let mut stage = vec![Complex64::new(0.0, 0.0); d];
    let minus_i_over_hbar = Complex64::new(0.0, -1.0 / hbar);

    // f(t, b) = (1 / i hbar) e^{iEt} V e^{-iEt} b
    let mut rhs = |t: f64, x: &[Complex64], out: &mut [Complex64]| {
        for j in 0..d {
            c[j] = Complex64::from_polar(1.0, -e[j] * t / hbar) * x[j];
        }
        h.apply_v(&c, &mut y);
        for i in 0..d {
            out[i] = minus_i_over_hbar * Complex64::from_polar(1.0, e[i] * t / hbar) * y[i];
        }
    };

    for w in t_grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let steps = ((t1 - t0) / dt).ceil().max(1.0) as usize;
        let hstep = (t1 - t0) / steps as f64;
        for s in 0..steps {
            let t = t0 + s as f64 * hstep;
            let [k1, k2, k3, k4] = &mut ks;
            rhs(t, &b, k1);
            for i in 0..d {
                stage[i] = b[i] + k1[i] * (0.5 * hstep);
            }
            rhs(t + 0.5 * hstep, &stage, k2);
            for i in 0..d {
                stage[i] = b[i] + k2[i] * (0.5 * hstep);
            }
            rhs(t + 0.5 * hstep, &stage, k3);
            for i in 0..d {
                stage[i] = b[i] + k3[i] * hstep;
            }
            rhs(t + hstep, &stage, k4);
            for i in 0..d {
                b[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (hstep / 6.0);
            }
        }
        guard.check(&mut b, t1)?;
        p_of_t.push(SuperpositionState::from_weights(&block_weights(&b, cfg))?);
    }
    Ok(OracleTrajectory {
        times: t_grid.to_vec(),
        p_of_t,
        w_of_t: None,
        max_norm_drift: guard.max_drift,
        renormalizations: guard.renormalizations,
    })
}

/// Eigendecomposition of `H0 + V`, reusable across initial states.
pub struct Propagator {
    hbar: f64,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<Complex64>,
}

impl Propagator {
    pub fn new(h: &MicroHamiltonian) -> Self {
        let eig = h.full_matrix().symmetric_eigen();
        Self {
            hbar: h.config().hbar(),
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
        }
    }

    /// Schrodinger-picture state at each grid time. Interaction-picture
    /// amplitudes differ only by phases, which leave `p` unchanged.
    pub fn states(&self, psi0: &[Complex64], t_grid: &[f64]) -> Vec<Vec<Complex64>> {
        let u = &self.eigenvectors;
        let c0 = u.adjoint() * DVector::from_column_slice(psi0);
        t_grid
            .iter()
            .map(|&t| {
                let ct = DVector::from_iterator(
                    c0.len(),
                    c0.iter().zip(&self.eigenvalues).map(|(c, &l)| c * Complex64::from_polar(1.0, -l * t / self.hbar)),
                );
                (u * ct).iter().copied().collect()
            })
            .collect()
    }
}

/// Evolution by exact diagonalisation; the validation route for RK4 and the
/// fast route for ensembles at moderate dimension.
pub fn evolve_diagonalized(h: &MicroHamiltonian, psi0: &MicroState, t_grid: &[f64]) -> Result<OracleTrajectory> {
    check_grid(t_grid)?;
    check_state(h, psi0)?;
    let prop = Propagator::new(h);
    let mut guard = NormGuard { max_drift: 0.0, renormalizations: 0 };
    let mut p_of_t = Vec::with_capacity(t_grid.len());
    for (mut b, &t) in prop.states(psi0.amplitudes(), t_grid).into_iter().zip(t_grid) {
        guard.check(&mut b, t)?;
        p_of_t.push(SuperpositionState::from_weights(&block_weights(&b, h.config()))?);
    }
    Ok(OracleTrajectory {
        times: t_grid.to_vec(),
        p_of_t,
        w_of_t: None,
        max_norm_drift: guard.max_drift,
        renormalizations: guard.renormalizations,
    })
}

/// `W_nm(t) = sum_{k,k'} conj(eta_n^k) V_{nk,mk'} eta_m^{k'} e^{i(E_k - E_k')t/hbar}`.
pub fn measure_w(h: &MicroHamiltonian, eta: &MicroAmplitudes, t: f64) -> HollowHermitian {
    let cfg = h.config();
    let hbar = cfg.hbar();
    let phased: Vec<Vec<Complex64>> = (0..cfg.macro_count())
        .map(|n| {
            eta.block(n)
                .iter()
                .zip(&h.energies()[cfg.block(n)])
                .map(|(z, &e)| z * Complex64::from_polar(1.0, -e * t / hbar))
                .collect()
        })
        .collect();
    HollowHermitian::from_upper(cfg.macro_count(), |n, m| w_element(h, n, m, &phased[n], &phased[m]))
}

/// `sum_{k,k'} conj(a_k) V_{nk,mk'} c_k'` with pre-phased vectors.
fn w_element(h: &MicroHamiltonian, n: usize, m: usize, a: &[Complex64], c: &[Complex64]) -> Complex64 {
    let cfg = h.config();
    let cols = cfg.block(m);
    let mut total = Complex64::new(0.0, 0.0);
    for (i, ai) in cfg.block(n).zip(a) {
        let row = &h.v[i * h.dim() + cols.start..i * h.dim() + cols.end];
        let s: Complex64 = row.iter().zip(c).map(|(v, x)| v * x).sum();
        total += ai.conj() * s;
    }
    total
}

/// `W_nm` sampled at each time in `times` for fixed `eta`.
pub fn w_series(h: &MicroHamiltonian, eta: &MicroAmplitudes, (n, m): (usize, usize), times: &[f64]) -> Vec<Complex64> {
    let cfg = h.config();
    let hbar = cfg.hbar();
    let phase = |k: usize, t: f64| -> Vec<Complex64> {
        eta.block(k)
            .iter()
            .zip(&h.energies()[cfg.block(k)])
            .map(|(z, &e)| z * Complex64::from_polar(1.0, -e * t / hbar))
            .collect()
    };
    times.iter().map(|&t| w_element(h, n, m, &phase(n, t), &phase(m, t))).collect()
}

/// Ensemble-averaged autocorrelation of one `W_nm`.
#[derive(Clone, Debug, PartialEq)]
pub struct WCorrelator {
    pub lag_step: f64,
    /// `<W(t) conj(W(t + k lag_step))>`.
    pub raw: Vec<Complex64>,
    /// `raw` with the carrier `exp(-i (E_n - E_m) tau / hbar)` removed.
    pub demodulated: Vec<Complex64>,
}

impl WCorrelator {
    /// `2 * integral_0^{tau_max} Re d(tau)` by the trapezoid rule.
    pub fn sigma_sq(&self) -> f64 {
        let re: Vec<f64> = self.demodulated.iter().map(|z| z.re).collect();
        let inner: f64 = re[1..re.len() - 1].iter().sum();
        2.0 * self.lag_step * (0.5 * (re[0] + re[re.len() - 1]) + inner)
    }

    /// Half width at half maximum of `|C(tau)|`, linearly interpolated.
    pub fn half_width(&self) -> Option<f64> {
        let c0 = self.raw[0].norm();
        let half = 0.5 * c0;
        self.raw.windows(2).enumerate().find_map(|(k, w)| {
            let (a, b) = (w[0].norm(), w[1].norm());
            (a >= half && b < half).then(|| self.lag_step * (k as f64 + (a - half) / (a - b)))
        })
    }
}

/// Lag grid used for `W` correlators: samples every `tau_c / 10` over
/// `[0, 100 tau_c]`, lags up to `10 tau_c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelatorGrid {
    pub step: f64,
    pub samples: usize,
    pub max_lag: usize,
}

impl CorrelatorGrid {
    pub fn for_config(cfg: &MacroConfig) -> Self {
        Self { step: cfg.correlation_time() / 10.0, samples: 1001, max_lag: 100 }
    }
}

/// Average the correlator of `W_nm` over `eta_draws` microscopic draws.
pub fn w_correlator<R: Rng + ?Sized>(
    h: &MicroHamiltonian,
    pair: (usize, usize),
    eta_draws: usize,
    grid: CorrelatorGrid,
    rng: &mut R,
) -> Result<WCorrelator> {
    let cfg = h.config();
    if pair.0 == pair.1 || pair.0.max(pair.1) >= cfg.macro_count() {
        return Err(Error::Dimension(format!("invalid pair {pair:?}")));
    }
    if eta_draws == 0 {
        return Err(Error::InsufficientData("no eta draws".into()));
    }
    let times: Vec<f64> = (0..grid.samples).map(|i| i as f64 * grid.step).collect();
    let mut raw = vec![Complex64::new(0.0, 0.0); grid.max_lag + 1];
    for _ in 0..eta_draws {
        let eta = sample_micro_amplitudes(cfg, rng);
        let series = w_series(h, &eta, pair, &times);
        for (acc, c) in raw.iter_mut().zip(estimate_autocorrelation(&series, grid.max_lag)?) {
            *acc += c;
        }
    }
    raw.iter_mut().for_each(|c| *c /= eta_draws as f64);
    let omega = (cfg.bin_energies()[pair.0] - cfg.bin_energies()[pair.1]) / cfg.hbar();
    let demodulated =
        raw.iter().enumerate().map(|(k, c)| c * Complex64::from_polar(1.0, omega * k as f64 * grid.step)).collect();
    Ok(WCorrelator { lag_step: grid.step, raw, demodulated })
}

/// Empirical `sigma_nm^2` for every pair, from `ensemble_size` eta draws.
pub fn estimate_sigma<R: Rng + ?Sized>(
    h: &MicroHamiltonian,
    ensemble_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if ensemble_size < 100 {
        return Err(Error::Usage(format!("ensemble size {ensemble_size} is below 100")));
    }
    let m = h.config().macro_count();
    let grid = CorrelatorGrid::for_config(h.config());
    let mut out = vec![vec![0.0; m]; m];
    for n in 0..m {
        for k in n + 1..m {
            let s2 = w_correlator(h, (n, k), ensemble_size, grid, rng)?.sigma_sq();
            out[n][k] = s2;
            out[k][n] = s2;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rk4,
    Diagonalize,
}

/// Ensemble of independent `(V, eta)` draws evolved from a common `p0`.
#[derive(Clone, Debug)]
pub struct OracleEnsemble {
    pub cfg: MacroConfig,
    pub vbar: f64,
    pub profile: CouplingProfile,
    pub p0: SuperpositionState,
    pub times: Vec<f64>,
    pub method: Method,
    /// RK4 step; `None` uses the stability limit.
    pub dt: Option<f64>,
}

impl OracleEnsemble {
    /// One ensemble member; trajectory `index` draws from its own stream.
    pub fn trajectory(&self, seed: u64, index: u64) -> Result<OracleTrajectory> {
        let mut rng = seed_stream(seed, index);
        let h = build_hamiltonian_with(&self.cfg, self.vbar, self.profile, &mut rng)?;
        let eta = sample_micro_amplitudes(&self.cfg, &mut rng);
        let psi0 = assemble_micro(&self.p0, &eta, &self.cfg)?;
        match self.method {
            Method::Rk4 => evolve_exact(&h, &psi0, &self.times, self.dt.unwrap_or(h.max_step())),
            Method::Diagonalize => evolve_diagonalized(&h, &psi0, &self.times),
        }
    }

    /// Run `n` members in parallel on the current rayon pool and reduce
    /// them in index order.
    pub fn run(&self, n: usize, seed: u64) -> Result<(EnsembleStats, Vec<OracleTrajectory>)> {
        let trajectories: Vec<OracleTrajectory> =
            (0..n as u64).into_par_iter().map(|i| self.trajectory(seed, i)).collect::<Result<_>>()?;
        let mut acc = EnsembleAccumulator::new(self.times.clone(), self.cfg.macro_count(), n)?;
        for tr in &trajectories {
            acc.push(&tr.paths(), None)?;
        }
        Ok((acc.finish()?, trajectories))
    }
}
