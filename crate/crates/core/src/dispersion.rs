//! Free single-mode inertial equation `tau0 b'' = i b' - Omega b`.
//!
//! Substituting `b = e^{-i w t}` gives `tau0 w^2 + w - Omega = 0`, whose
//! roots are the positive and negative energy branches of the relativistic
//! spectrum once `tau0 = hbar / 2mc^2` and `Omega = hbar k^2 / 2m`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tolerance::SINGLE_SHOT;

/// Largest `|w| dt` the time-domain check accepts. RK4's phase error per unit
/// time is about `(w dt)^4 / 120` relative, which stays below 1e-5 here.
const MAX_PHASE_STEP: f64 = 0.25;
/// Hankel singular values below this fraction of the largest are noise.
const RANK_CUTOFF: f64 = 1e-6;
const HANKEL_ROWS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Physical {
    pub mass: f64,
    pub k: f64,
    pub c: f64,
    pub hbar: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModeConfig {
    tau0: f64,
    omega_k: f64,
    physical: Option<Physical>,
}

impl ModeConfig {
    pub fn new(tau0: f64, omega_k: f64) -> Result<Self> {
        if !(tau0 > 0.0 && tau0.is_finite()) {
            return Err(Error::Invalid(format!("tau0 must be positive and finite, got {tau0}")));
        }
        if !(omega_k >= 0.0 && omega_k.is_finite()) {
            return Err(Error::Invalid(format!("omega_k must be non-negative and finite, got {omega_k}")));
        }
        Ok(Self { tau0, omega_k, physical: None })
    }

    /// `tau0 = hbar / 2mc^2`, `Omega = hbar k^2 / 2m`.
    pub fn from_physical(mass: f64, k: f64, c: f64, hbar: f64) -> Result<Self> {
        for (name, v) in [("mass", mass), ("c", c), ("hbar", hbar)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !k.is_finite() {
            return Err(Error::Invalid(format!("k must be finite, got {k}")));
        }
        let cfg = Self::new(hbar / (2.0 * mass * c * c), hbar * k * k / (2.0 * mass))?;
        Ok(Self { physical: Some(Physical { mass, k, c, hbar }), ..cfg })
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn omega_k(&self) -> f64 {
        self.omega_k
    }

    pub fn physical(&self) -> Option<Physical> {
        self.physical
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Spectrum {
    pub omega_plus: f64,
    pub omega_minus: f64,
}

impl Spectrum {
    pub fn gap(&self) -> f64 {
        self.omega_plus - self.omega_minus
    }
}

/// Roots of `tau0 w^2 + w - Omega = 0`, in cancellation-free form.
pub fn spectrum(cfg: &ModeConfig) -> Spectrum {
    let (tau0, omega) = (cfg.tau0, cfg.omega_k);
    let root = (1.0 + 4.0 * tau0 * omega).sqrt();
    let s = Spectrum { omega_plus: 2.0 * omega / (1.0 + root), omega_minus: -(1.0 + root) / (2.0 * tau0) };
    if let Some(p) = cfg.physical {
        let e = physical_spectrum(&p);
        debug_assert!(relative_gap(s.omega_plus, e.omega_plus) <= SINGLE_SHOT);
        debug_assert!(relative_gap(s.omega_minus, e.omega_minus) <= SINGLE_SHOT);
    }
    s
}

/// `hbar w = -mc^2 +- sqrt(m^2 c^4 + hbar^2 k^2 c^2)`, divided by hbar.
pub fn physical_spectrum(p: &Physical) -> Spectrum {
    let rest = p.mass * p.c * p.c;
    let momentum = p.hbar * p.k * p.c;
    let radical = rest.hypot(momentum);
    Spectrum { omega_plus: momentum * momentum / (rest + radical) / p.hbar, omega_minus: -(rest + radical) / p.hbar }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// `|tau0 w^2 + w - Omega|` relative to the size of its terms.
pub fn scaled_residual(cfg: &ModeConfig, omega: f64) -> f64 {
    let quad = cfg.tau0 * omega * omega;
    let scale = quad + omega.abs() + cfg.omega_k;
    if scale == 0.0 {
        return 0.0;
    }
    (quad + omega - cfg.omega_k).abs() / scale
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub tau0: f64,
    pub omega_k: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub residual_plus: f64,
    pub residual_minus: f64,
}

/// Spectrum and residuals on the outer product of the two axes.
pub fn spectrum_grid(tau0s: &[f64], omegas: &[f64]) -> Result<Vec<SpectrumRow>> {
    let mut rows = Vec::with_capacity(tau0s.len() * omegas.len());
    for &tau0 in tau0s {
        for &omega_k in omegas {
            let cfg = ModeConfig::new(tau0, omega_k)?;
            let s = spectrum(&cfg);
            rows.push(SpectrumRow {
                tau0,
                omega_k,
                omega_plus: s.omega_plus,
                omega_minus: s.omega_minus,
                residual_plus: scaled_residual(&cfg, s.omega_plus),
                residual_minus: scaled_residual(&cfg, s.omega_minus),
            });
        }
    }
    Ok(rows)
}

/// `n` points spaced evenly in log between `lo` and `hi`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeDomainFit {
    /// Refined frequencies, highest first.
    pub frequencies: Vec<f64>,
    /// Periodogram peak locations, highest first. Resolution is one bin.
    pub coarse: Vec<f64>,
    pub bin_width: f64,
    pub samples: usize,
}

/// Integrates from `b = 1`, `b' = 0`, which excites both branches.
pub fn time_domain_check(cfg: &ModeConfig, t_max: f64, dt: f64) -> Result<TimeDomainFit> {
    time_domain_fit(cfg, t_max, dt, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
}

/// Integrates from the given `(b, b')` and extracts the oscillation
/// frequencies: periodogram peaks locate them, linear prediction on the
/// sampled signal refines them.
pub fn time_domain_fit(
    cfg: &ModeConfig,
    t_max: f64,
    dt: f64,
    b0: Complex64,
    bdot0: Complex64,
) -> Result<TimeDomainFit> {
    let s = spectrum(cfg);
    if !(dt > 0.0 && dt <= cfg.tau0 / 50.0) {
        return Err(Error::Usage(format!("dt = {dt} must be in (0, tau0/50 = {}]", cfg.tau0 / 50.0)));
    }
    if s.omega_minus.abs() * dt > MAX_PHASE_STEP {
        return Err(Error::Usage(format!(
            "dt = {dt} resolves |w-| = {} too coarsely; need |w-| dt <= {MAX_PHASE_STEP}",
            s.omega_minus.abs()
        )));
    }
    if !(t_max >= 20.0 / s.gap()) {
        return Err(Error::Usage(format!("t_max = {t_max} must be >= 20/|w+ - w-| = {}", 20.0 / s.gap())));
    }
    let signal = integrate(cfg, t_max, dt, b0, bdot0);
    let (coarse, bin_width) = periodogram_peaks(&signal, dt, 2);
    let frequencies = linear_prediction(&signal, dt)?;
    Ok(TimeDomainFit { frequencies, coarse, bin_width, samples: signal.len() })
}

fn integrate(cfg: &ModeConfig, t_max: f64, dt: f64, b0: Complex64, bdot0: Complex64) -> Vec<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    let (tau0, omega) = (cfg.tau0, cfg.omega_k);
    let force = |b: Complex64, u: Complex64| (i * u - omega * b) / tau0;
    let steps = (t_max / dt).round() as usize;
    let (mut b, mut u) = (b0, bdot0);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(b);
    for _ in 0..steps {
        let (kb1, ku1) = (u, force(b, u));
        let (kb2, ku2) = (u + 0.5 * dt * ku1, force(b + 0.5 * dt * kb1, u + 0.5 * dt * ku1));
        let (kb3, ku3) = (u + 0.5 * dt * ku2, force(b + 0.5 * dt * kb2, u + 0.5 * dt * ku2));
        let (kb4, ku4) = (u + dt * ku3, force(b + dt * kb3, u + dt * ku3));
        b += dt / 6.0 * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4);
        u += dt / 6.0 * (ku1 + 2.0 * ku2 + 2.0 * ku3 + ku4);
        out.push(b);
    }
    out
}

/// Up to `count` local maxima of the periodogram, strongest first, as
/// angular frequencies under the `e^{-i w t}` convention.
fn periodogram_peaks(signal: &[Complex64], dt: f64, count: usize) -> (Vec<f64>, f64) {
    let n = (4 * signal.len()).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    // Hann window keeps the weaker branch from drowning in leakage.
    let len = signal.len() as f64;
    for (k, (dst, src)) in buf.iter_mut().zip(signal).enumerate() {
        let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / len).cos();
        *dst = src * w;
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf.iter().map(|z| z.norm_sqr()).collect();
    let mut peaks: Vec<(f64, usize)> = (0..n)
        .filter(|&j| power[j] > power[(j + n - 1) % n] && power[j] >= power[(j + 1) % n])
        .map(|j| (power[j], j))
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    let bin = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    // Forward FFT bin j picks up e^{+2 pi i j k / n}, i.e. w = -j bin.
    let to_omega = |j: usize| {
        let signed = if j > n / 2 { j as f64 - n as f64 } else { j as f64 };
        -signed * bin
    };
    let mut coarse: Vec<f64> = peaks.iter().take(count).map(|&(_, j)| to_omega(j)).collect();
    coarse.sort_by(|a, b| b.total_cmp(a));
    (coarse, bin)
}

/// Model order from the numerical rank of a Hankel matrix, then a least
/// squares linear predictor whose characteristic roots are `e^{-i w dt}`.
fn linear_prediction(signal: &[Complex64], dt: f64) -> Result<Vec<f64>> {
    let rows = HANKEL_ROWS;
    if signal.len() < 4 * rows {
        return Err(Error::InsufficientData(format!("{} samples are too few for a spectral fit", signal.len())));
    }
    let cols = signal.len() - rows + 1;
    let hankel = DMatrix::from_fn(rows, cols, |r, c| signal[r + c]);
    let sv = hankel.singular_values();
    let order = sv.iter().filter(|&&v| v > RANK_CUTOFF * sv[0]).count();
    if order == 0 {
        return Err(Error::InsufficientData("signal is identically zero".into()));
    }
    if order > 2 {
        return Err(Error::Integration(format!("signal has {order} components; the free mode has two")));
    }

    // b_n = sum_j a_j b_{n-j}
    let eqs = signal.len() - order;
    let a = DMatrix::from_fn(eqs, order, |r, j| signal[r + order - 1 - j]);
    let y = DVector::from_fn(eqs, |r, _| signal[r + order]);
    let coef = a.svd(true, true).solve(&y, 1e-14).map_err(|e| Error::Integration(e.to_string()))?;
    let roots = match order {
        1 => vec![coef[0]],
        _ => {
            // z^2 - a0 z - a1 = 0
            let disc = (coef[0] * coef[0] + 4.0 * coef[1]).sqrt();
            vec![0.5 * (coef[0] + disc), 0.5 * (coef[0] - disc)]
        }
    };
    let mut freqs: Vec<f64> = roots.iter().map(|z| -z.arg() / dt).collect();
    freqs.sort_by(|a, b| b.total_cmp(a));
    Ok(freqs)
}
