//! Hermitian noise generators.
//!
//! White increments obey `E[dW_nm conj(dW_nm)] = sigma_nm^2 dt` and
//! `E[dW_nm dW_nm] = 0` (circularly symmetric). The coloured variant is an
//! Ornstein-Uhlenbeck process with stationary correlator
//! `sigma^2 (lambda / 2) exp(-lambda |t - t'|)`, advanced with the exact
//! exponential update so no discretisation bias enters the correlator.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::{HollowHermitian, SigmaMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    White,
    /// Exponentially correlated noise with rate `lambda = 1 / tau_c`.
    OrnsteinUhlenbeck {
        lambda: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    sigma: SigmaMatrix,
    kind: NoiseKind,
    hbar: f64,
}

impl NoiseSpec {
    pub fn new(sigma: SigmaMatrix, kind: NoiseKind, hbar: f64) -> Result<Self> {
        if let NoiseKind::OrnsteinUhlenbeck { lambda } = kind {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::Invalid(format!("OU rate must be > 0, got {lambda}")));
            }
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::Invalid(format!("hbar must be > 0, got {hbar}")));
        }
        Ok(Self { sigma, kind, hbar })
    }

    pub fn white(sigma: SigmaMatrix, hbar: f64) -> Result<Self> {
        Self::new(sigma, NoiseKind::White, hbar)
    }

    pub fn ornstein_uhlenbeck(sigma: SigmaMatrix, lambda: f64, hbar: f64) -> Result<Self> {
        Self::new(sigma, NoiseKind::OrnsteinUhlenbeck { lambda }, hbar)
    }

    pub fn sigma(&self) -> &SigmaMatrix {
        &self.sigma
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    fn lambda(&self) -> Result<f64> {
        match self.kind {
            NoiseKind::OrnsteinUhlenbeck { lambda } => Ok(lambda),
            NoiseKind::White => Err(Error::Usage("operation requires OU noise".into())),
        }
    }
}

/// One white-noise increment over a step `dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseIncrement {
    pub dw: HollowHermitian,
    pub dt: f64,
}

/// Current value of the matrix OU process (energy units).
#[derive(Clone, Debug, PartialEq)]
pub struct OuState {
    pub w: HollowHermitian,
}

#[inline]
fn complex_normal<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Complex64 {
    Complex64::new(scale * rng.sample::<f64, _>(StandardNormal), scale * rng.sample::<f64, _>(StandardNormal))
}

/// Draw a white-noise increment.
pub fn white_increment<R: Rng + ?Sized>(spec: &NoiseSpec, dt: f64, rng: &mut R) -> Result<NoiseIncrement> {
    let mut dw = HollowHermitian::zeros(spec.dim());
    white_increment_into(spec, dt, rng, &mut dw)?;
    Ok(NoiseIncrement { dw, dt })
}

/// Allocation-free variant of [`white_increment`] for inner loops.
pub fn white_increment_into<R: Rng + ?Sized>(
    spec: &NoiseSpec,
    dt: f64,
    rng: &mut R,
    out: &mut HollowHermitian,
) -> Result<()> {
    if spec.kind != NoiseKind::White {
        return Err(Error::Usage("white_increment called on a coloured-noise spec".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Usage(format!("dt must be > 0, got {dt}")));
    }
    let half = (0.5 * dt).sqrt();
    let m = spec.dim();
    for n in 0..m {
        for k in n + 1..m {
            let s = spec.sigma.get(n, k);
            // Draw even for zero sigma so streams stay aligned across configs.
            let z = complex_normal(rng, s * half);
            out.set_pair(n, k, if s == 0.0 { Complex64::new(0.0, 0.0) } else { z });
        }
    }
    Ok(())
}

/// Draw from the stationary law: `E[|W_nm|^2] = sigma_nm^2 lambda / 2`.
pub fn ou_init<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R) -> Result<OuState> {
    let lambda = spec.lambda()?;
    let scale = (0.25 * lambda).sqrt();
    Ok(OuState { w: HollowHermitian::from_upper(spec.dim(), |n, m| complex_normal(rng, spec.sigma.get(n, m) * scale)) })
}

/// Exact OU transition over `dt`: `W' = a W + sqrt(1 - a^2) G` with
/// `a = exp(-lambda dt)` and `G` a fresh stationary draw.
pub fn ou_step<R: Rng + ?Sized>(spec: &NoiseSpec, state: &OuState, dt: f64, rng: &mut R) -> Result<OuState> {
    let lambda = spec.lambda()?;
    if !(dt >= 0.0) {
        return Err(Error::Usage(format!("dt must be >= 0, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let a = (-lambda * dt).exp();
    let b = (-(-2.0 * lambda * dt).exp_m1()).sqrt();
    let scale = (0.25 * lambda).sqrt();
    Ok(OuState {
        w: HollowHermitian::from_upper(spec.dim(), |n, m| {
            state.w.get(n, m) * a + complex_normal(rng, spec.sigma.get(n, m) * scale) * b
        }),
    })
}

/// Scalar real OU process, the diagonal-noise special case used by the
/// inertial drift experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarOu {
    sigma: f64,
    lambda: f64,
}

impl ScalarOu {
    pub fn new(sigma: f64, lambda: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) || !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Invalid(format!("scalar OU needs sigma >= 0 and lambda > 0, got ({sigma}, {lambda})")));
        }
        Ok(Self { sigma, lambda })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Stationary standard deviation `sigma sqrt(lambda / 2)`.
    pub fn stationary_sd(&self) -> f64 {
        self.sigma * (0.5 * self.lambda).sqrt()
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.stationary_sd() * rng.sample::<f64, _>(StandardNormal)
    }

    /// Precomputed transition coefficients for a fixed step.
    pub fn transition(&self, dt: f64) -> (f64, f64) {
        let a = (-self.lambda * dt).exp();
        (a, self.stationary_sd() * (-(-2.0 * self.lambda * dt).exp_m1()).sqrt())
    }

    pub fn step<R: Rng + ?Sized>(&self, w: f64, dt: f64, rng: &mut R) -> f64 {
        let (a, b) = self.transition(dt);
        a * w + b * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Lagged products `c_k = mean_t W(t) conj(W(t + k dt))` for `k = 0..=max_lag`.
///
/// Each lag is averaged over the `len - k` available pairs. The trace must
/// hold at least four times as many samples as lags.
pub fn estimate_autocorrelation(trace: &[Complex64], max_lag: usize) -> Result<Vec<Complex64>> {
    if trace.len() < 4 * (max_lag + 1) {
        return Err(Error::Usage(format!("trace of {} samples is too short for {} lags", trace.len(), max_lag)));
    }
    Ok((0..=max_lag)
        .map(|k| {
            let n = trace.len() - k;
            let s: Complex64 = trace[..n].iter().zip(&trace[k..]).map(|(a, b)| a * b.conj()).sum();
            s / n as f64
        })
        .collect())
}

/// Real-valued convenience wrapper over [`estimate_autocorrelation`].
pub fn estimate_autocorrelation_real(trace: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let z: Vec<Complex64> = trace.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    Ok(estimate_autocorrelation(&z, max_lag)?.into_iter().map(|c| c.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_stream;
    use crate::stats::{line_fit, mean_and_se};

    fn pair_spec(sigma: f64, kind: NoiseKind) -> NoiseSpec {
        NoiseSpec::new(SigmaMatrix::uniform(2, sigma).unwrap(), kind, 1.0).unwrap()
    }

    #[test]
    fn zero_sigma_gives_exact_zero() {
        let sigma = SigmaMatrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 2.0], vec![0.0, 2.0, 0.0]]).unwrap();
        let spec = NoiseSpec::white(sigma, 1.0).unwrap();
        let mut rng = seed_stream(1, 0);
        for _ in 0..100 {
            let inc = white_increment(&spec, 0.01, &mut rng).unwrap();
            assert_eq!(inc.dw.get(0, 2), Complex64::new(0.0, 0.0));
            assert_eq!(inc.dw.get(2, 0), Complex64::new(0.0, 0.0));
            assert!(inc.dw.is_hollow_hermitian());
        }
    }

    #[test]
    fn white_second_moments() {
        let spec = pair_spec(1.0, NoiseKind::White);
        let mut rng = seed_stream(2, 0);
        let n = 1_000_000;
        let mut paired = Vec::with_capacity(n);
        let mut unpaired_re = Vec::with_capacity(n);
        let mut unpaired_im = Vec::with_capacity(n);
        let mut dw = HollowHermitian::zeros(2);
        for _ in 0..n {
            white_increment_into(&spec, 0.01, &mut rng, &mut dw).unwrap();
            let z = dw.get(0, 1);
            paired.push(z.norm_sqr());
            let zz = z * z;
            unpaired_re.push(zz.re);
            unpaired_im.push(zz.im);
        }
        let (m, se) = mean_and_se(&paired);
        assert!((m - 0.01).abs() < 4.0 * se, "E|dW|^2 = {m} +- {se}");
        for xs in [&unpaired_re, &unpaired_im] {
            let (m, se) = mean_and_se(xs);
            assert!(m.abs() < 4.0 * se, "E[dW^2] = {m} +- {se}");
        }
    }

    #[test]
    fn white_increments_are_uncorrelated_in_time() {
        let spec = pair_spec(1.0, NoiseKind::White);
        let mut rng = seed_stream(3, 0);
        let dt = 0.01;
        let trace: Vec<Complex64> =
            (0..200_000).map(|_| white_increment(&spec, dt, &mut rng).unwrap().dw.get(0, 1) / dt.sqrt()).collect();
        let c = estimate_autocorrelation(&trace, 5).unwrap();
        // Lag-0 estimates sigma^2 = 1; |W|^2 is Exp(1) so its SE is 1/sqrt(n).
        let se = 1.0 / (trace.len() as f64).sqrt();
        assert!((c[0].re - 1.0).abs() < 4.0 * se, "lag 0 = {}", c[0]);
        for ck in &c[1..] {
            // Each component of a lagged product has variance 1/2.
            assert!(ck.re.abs() < 4.0 * se && ck.im.abs() < 4.0 * se, "lag = {ck}");
        }
    }

    #[test]
    fn kind_mismatch_is_usage_error() {
        let white = pair_spec(1.0, NoiseKind::White);
        let ou = pair_spec(1.0, NoiseKind::OrnsteinUhlenbeck { lambda: 1.0 });
        let mut rng = seed_stream(4, 0);
        assert!(matches!(white_increment(&ou, 0.1, &mut rng), Err(Error::Usage(_))));
        assert!(matches!(ou_init(&white, &mut rng), Err(Error::Usage(_))));
        let st = OuState { w: HollowHermitian::zeros(2) };
        assert!(matches!(ou_step(&white, &st, 0.1, &mut rng), Err(Error::Usage(_))));
        assert!(NoiseSpec::ornstein_uhlenbeck(SigmaMatrix::uniform(2, 1.0).unwrap(), 0.0, 1.0).is_err());
    }

    #[test]
    fn ou_zero_sigma_and_zero_step() {
        let mut rng = seed_stream(5, 0);
        let spec = pair_spec(0.0, NoiseKind::OrnsteinUhlenbeck { lambda: 3.0 });
        assert_eq!(ou_init(&spec, &mut rng).unwrap().w, HollowHermitian::zeros(2));
        let spec = pair_spec(1.0, NoiseKind::OrnsteinUhlenbeck { lambda: 3.0 });
        let s = ou_init(&spec, &mut rng).unwrap();
        assert_eq!(ou_step(&spec, &s, 0.0, &mut rng).unwrap(), s);
    }

    #[test]
    fn ou_stationary_variance_and_stationarity() {
        let spec = pair_spec(1.0, NoiseKind::OrnsteinUhlenbeck { lambda: 100.0 });
        let mut rng = seed_stream(6, 0);
        let n = 100_000;
        let mut init = Vec::with_capacity(n);
        let mut stepped = Vec::with_capacity(n);
        for _ in 0..n {
            let s = ou_init(&spec, &mut rng).unwrap();
            init.push(s.w.get(0, 1).norm_sqr());
            let s2 = ou_step(&spec, &s, 0.003, &mut rng).unwrap();
            assert!(s2.w.is_hollow_hermitian());
            stepped.push(s2.w.get(0, 1).norm_sqr());
        }
        let (m, se) = mean_and_se(&init);
        assert!((m - 50.0).abs() < 4.0 * se, "E|W|^2 = {m} +- {se}");
        let (m2, _) = mean_and_se(&stepped);
        assert!((m2 / m - 1.0).abs() < 0.01, "stationary second moment moved: {m} -> {m2}");
    }

    #[test]
    fn ou_autocorrelation_recovers_rate() {
        let (lambda, dt) = (10.0, 0.001);
        let spec = pair_spec(1.0, NoiseKind::OrnsteinUhlenbeck { lambda });
        let mut rng = seed_stream(7, 0);
        let mut s = ou_init(&spec, &mut rng).unwrap();
        let trace: Vec<Complex64> = (0..1_000_000)
            .map(|_| {
                s = ou_step(&spec, &s, dt, &mut rng).unwrap();
                s.w.get(0, 1)
            })
            .collect();
        let lags = 100;
        let c = estimate_autocorrelation(&trace, lags).unwrap();
        let t: Vec<f64> = (0..=lags).map(|k| k as f64 * dt).collect();
        let y: Vec<f64> = c.iter().map(|z| z.re.ln()).collect();
        let fit = line_fit(&t, &y).unwrap();
        assert!((-fit.slope / lambda - 1.0).abs() < 0.05, "fitted rate {}", -fit.slope);
        assert!((fit.intercept.exp() / (lambda / 2.0) - 1.0).abs() < 0.05);
        // Two-point value at tau = 1/lambda is sigma^2 lambda / (2e).
        let expected = lambda / (2.0 * std::f64::consts::E);
        assert!((c[100].re / expected - 1.0).abs() < 0.05, "C(1/lambda) = {}", c[100].re);
    }

    #[test]
    fn integrated_ou_approaches_white_noise() {
        // Var of the window integral is sigma^2 (T - (1 - e^{-lambda T}) / lambda).
        let (lambda, dt, window) = (100.0, 0.001, 1.0);
        let spec = pair_spec(1.0, NoiseKind::OrnsteinUhlenbeck { lambda });
        let mut rng = seed_stream(8, 0);
        let steps = (window / dt) as usize;
        let n = 4000;
        let ints: Vec<f64> = (0..n)
            .map(|_| {
                let mut s = ou_init(&spec, &mut rng).unwrap();
                let mut acc = Complex64::new(0.0, 0.0);
                for _ in 0..steps {
                    let next = ou_step(&spec, &s, dt, &mut rng).unwrap();
                    acc += (s.w.get(0, 1) + next.w.get(0, 1)) * (0.5 * dt);
                    s = next;
                }
                acc.norm_sqr()
            })
            .collect();
        let (m, se) = mean_and_se(&ints);
        assert!((m / window - 1.0).abs() < 0.05 + 2.0 * se, "Var = {m} +- {se}");
    }

    #[test]
    fn constant_trace_autocorrelation() {
        let c = Complex64::new(0.3, -1.2);
        let r = estimate_autocorrelation(&vec![c; 100], 10).unwrap();
        for v in r {
            assert!((v - Complex64::new(c.norm_sqr(), 0.0)).norm() < 1e-14);
        }
        assert!(matches!(estimate_autocorrelation(&vec![c; 20], 10), Err(Error::Usage(_))));
    }

    #[test]
    fn scalar_ou_stationary() {
        let ou = ScalarOu::new(2.0, 8.0).unwrap();
        let mut rng = seed_stream(9, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| ou.step(ou.init(&mut rng), 0.05, &mut rng)).collect();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let (m, se) = mean_and_se(&sq);
        assert!((m - 16.0).abs() < 4.0 * se, "{m} +- {se}");
    }
}
