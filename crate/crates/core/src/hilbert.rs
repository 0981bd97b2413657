//! Macro/micro decomposition of a many-body state.
//!
//! A state is written as `b_n^a` over macrostates `n` and microstates `a`.
//! The macroscopic weights are `p_n = sum_a |b_n^a|^2`, and the normalised
//! microscopic amplitudes are `eta_n^a = b_n^a / sqrt(p_n)`. Microstate
//! amplitudes are stored contiguously per macrostate with an offset table.

use std::ops::Range;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tolerance::{ACCUMULATED, SINGLE_SHOT};

/// Binning of the spectrum into macrostates.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroConfig {
    micro_counts: Vec<usize>,
    bin_energies: Vec<f64>,
    bin_width: f64,
    hbar: f64,
    offsets: Vec<usize>,
}

impl MacroConfig {
    /// Bins are centred at `bin_energies[n]` with half-width `bin_width`
    /// and must not overlap.
    pub fn new(micro_counts: Vec<usize>, bin_energies: Vec<f64>, bin_width: f64, hbar: f64) -> Result<Self> {
        if micro_counts.is_empty() {
            return Err(Error::Invalid("at least one macrostate is required".into()));
        }
        if micro_counts.len() != bin_energies.len() {
            return Err(Error::Dimension(format!(
                "{} micro counts but {} bin energies",
                micro_counts.len(),
                bin_energies.len()
            )));
        }
        if let Some(n) = micro_counts.iter().position(|&c| c == 0) {
            return Err(Error::Invalid(format!("macrostate {n} has no microstates")));
        }
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::Invalid(format!("bin width must be > 0, got {bin_width}")));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::Invalid(format!("hbar must be > 0, got {hbar}")));
        }
        for (i, &ei) in bin_energies.iter().enumerate() {
            if !ei.is_finite() {
                return Err(Error::Invalid(format!("bin energy {i} is not finite")));
            }
            for (j, &ej) in bin_energies.iter().enumerate().skip(i + 1) {
                if (ei - ej).abs() <= 2.0 * bin_width {
                    return Err(Error::Invalid(format!("bins {i} and {j} overlap: |{ei} - {ej}| <= 2 * {bin_width}")));
                }
            }
        }
        let mut offsets = Vec::with_capacity(micro_counts.len() + 1);
        offsets.push(0);
        for &c in &micro_counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        Ok(Self { micro_counts, bin_energies, bin_width, hbar, offsets })
    }

    /// `macro_count` bins of `micro_count` states each, centred `3 * bin_width`
    /// apart starting at zero.
    pub fn evenly_spaced(macro_count: usize, micro_count: usize, bin_width: f64, hbar: f64) -> Result<Self> {
        Self::new(
            vec![micro_count; macro_count],
            (0..macro_count).map(|n| 3.0 * bin_width * n as f64).collect(),
            bin_width,
            hbar,
        )
    }

    pub fn macro_count(&self) -> usize {
        self.micro_counts.len()
    }

    pub fn micro_counts(&self) -> &[usize] {
        &self.micro_counts
    }

    pub fn bin_energies(&self) -> &[f64] {
        &self.bin_energies
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block(&self, n: usize) -> Range<usize> {
        self.offsets[n]..self.offsets[n + 1]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Correlation time `hbar / dE` of the emergent noise.
    pub fn correlation_time(&self) -> f64 {
        self.hbar / self.bin_width
    }

    /// Full width of the unperturbed spectrum (outer bin edges).
    pub fn spectral_span(&self) -> f64 {
        let lo = self.bin_energies.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.bin_energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo + 2.0 * self.bin_width
    }
}

/// Macroscopic weights `p_n`: nonnegative, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpositionState {
    p: Vec<f64>,
}

impl SuperpositionState {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Invalid("empty probability vector".into()));
        }
        for (n, &x) in p.iter().enumerate() {
            if !(-ACCUMULATED..=1.0 + ACCUMULATED).contains(&x) {
                return Err(Error::Invalid(format!("p[{n}] = {x} outside [0, 1]")));
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > ACCUMULATED {
            return Err(Error::Invalid(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self { p: p.into_iter().map(|x| x.clamp(0.0, 1.0)).collect() })
    }

    /// Normalise nonnegative weights to unit sum.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || sum <= 0.0 {
            return Err(Error::Invalid(format!("weights {w:?} cannot be normalised")));
        }
        Ok(Self { p: w.iter().map(|x| (x / sum).min(1.0)).collect() })
    }

    /// The collapsed state with all weight on macrostate `m`.
    pub fn vertex(dim: usize, m: usize) -> Self {
        let mut p = vec![0.0; dim];
        p[m] = 1.0;
        Self { p }
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.p
    }
}

/// Full amplitude vector `b_n^a`, laid out block by block.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroState {
    amplitudes: Vec<Complex64>,
}

impl MicroState {
    pub fn new(amplitudes: Vec<Complex64>, cfg: &MacroConfig) -> Result<Self> {
        if amplitudes.len() != cfg.total_dim() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for {} microstates",
                amplitudes.len(),
                cfg.total_dim()
            )));
        }
        let norm: f64 = amplitudes.iter().map(|b| b.norm_sqr()).sum();
        if (norm - 1.0).abs() > ACCUMULATED {
            return Err(Error::Invalid(format!("state norm^2 is {norm}, not 1")));
        }
        Ok(Self { amplitudes })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.amplitudes
    }
}

/// Per-block unit vectors `eta_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroAmplitudes {
    blocks: Vec<Vec<Complex64>>,
}

impl MicroAmplitudes {
    pub fn new(blocks: Vec<Vec<Complex64>>) -> Result<Self> {
        for (n, block) in blocks.iter().enumerate() {
            let norm: f64 = block.iter().map(|z| z.norm_sqr()).sum();
            if (norm - 1.0).abs() > ACCUMULATED {
                return Err(Error::Invalid(format!("block {n} has norm^2 {norm}, not 1")));
            }
        }
        Ok(Self { blocks })
    }

    pub fn block(&self, n: usize) -> &[Complex64] {
        &self.blocks[n]
    }

    pub fn blocks(&self) -> &[Vec<Complex64>] {
        &self.blocks
    }

    fn matches(&self, cfg: &MacroConfig) -> bool {
        self.blocks.len() == cfg.macro_count() && self.blocks.iter().zip(cfg.micro_counts()).all(|(b, &c)| b.len() == c)
    }
}

/// Macroscopic weights of a microstate: `p_n = sum_a |b_n^a|^2`.
pub fn project_macro(micro: &MicroState, cfg: &MacroConfig) -> Result<SuperpositionState> {
    if micro.amplitudes.len() != cfg.total_dim() {
        return Err(Error::Dimension(format!(
            "state has {} amplitudes, config expects {}",
            micro.amplitudes.len(),
            cfg.total_dim()
        )));
    }
    let p = block_weights(&micro.amplitudes, cfg);
    SuperpositionState::new(p)
}

/// Unvalidated block sums of `|b|^2`.
pub(crate) fn block_weights(b: &[Complex64], cfg: &MacroConfig) -> Vec<f64> {
    (0..cfg.macro_count()).map(|n| b[cfg.block(n)].iter().map(|z| z.norm_sqr()).sum()).collect()
}

/// Draw every block as an independent Haar-uniform complex unit vector.
pub fn sample_micro_amplitudes<R: Rng + ?Sized>(cfg: &MacroConfig, rng: &mut R) -> MicroAmplitudes {
    let blocks = cfg.micro_counts().iter().map(|&n| random_unit_vector(n, rng)).collect();
    MicroAmplitudes { blocks }
}

pub(crate) fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex64> {
    loop {
        let mut v: Vec<Complex64> =
            (0..n).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|z| *z /= norm);
            return v;
        }
    }
}

/// `b_n^a = sqrt(p_n) * eta_n^a`.
pub fn assemble_micro(p: &SuperpositionState, eta: &MicroAmplitudes, cfg: &MacroConfig) -> Result<MicroState> {
    if p.len() != cfg.macro_count() || !eta.matches(cfg) {
        return Err(Error::Dimension("superposition / micro amplitudes do not match the block structure".into()));
    }
    let mut amplitudes = Vec::with_capacity(cfg.total_dim());
    for (pn, block) in p.p().iter().zip(eta.blocks()) {
        let s = pn.sqrt();
        amplitudes.extend(block.iter().map(|z| z * s));
    }
    let norm: f64 = amplitudes.iter().map(|b| b.norm_sqr()).sum();
    debug_assert!((norm - 1.0).abs() < ACCUMULATED + SINGLE_SHOT);
    Ok(MicroState { amplitudes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_stream;
    use crate::stats::{ks_one_sample, ks_two_sample, mean_and_se};
    use proptest::prelude::*;

    fn two_by_two() -> MacroConfig {
        MacroConfig::new(vec![2, 2], vec![0.0, 10.0], 1.0, 1.0).unwrap()
    }

    #[test]
    fn config_rejects_overlapping_bins() {
        assert!(MacroConfig::new(vec![1, 1], vec![0.0, 2.0], 1.0, 1.0).is_err());
        assert!(MacroConfig::new(vec![1, 1], vec![0.0, 2.01], 1.0, 1.0).is_ok());
        assert!(MacroConfig::new(vec![1, 0], vec![0.0, 5.0], 1.0, 1.0).is_err());
        assert!(MacroConfig::new(vec![1, 1], vec![0.0, 5.0], 0.0, 1.0).is_err());
        assert!(MacroConfig::new(vec![1], vec![0.0, 5.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn project_single_macrostate() {
        let cfg = two_by_two();
        let mut b = vec![Complex64::new(0.0, 0.0); 4];
        b[0] = Complex64::new(1.0, 0.0);
        let p = project_macro(&MicroState::new(b, &cfg).unwrap(), &cfg).unwrap();
        assert_eq!(p.p(), &[1.0, 0.0]);
    }

    #[test]
    fn project_symmetric() {
        let cfg = two_by_two();
        let b = vec![
            Complex64::new(0.5f64.sqrt(), 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.5, 0.0),
        ];
        let p = project_macro(&MicroState::new(b, &cfg).unwrap(), &cfg).unwrap();
        assert!((p.p()[0] - 0.5).abs() < 1e-15);
        assert!((p.p()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn project_matches_compensated_resummation() {
        // Oracle: Neumaier-compensated sum of exactly split squares.
        fn compensated(vals: impl Iterator<Item = f64>) -> f64 {
            let (mut sum, mut c) = (0.0f64, 0.0f64);
            for v in vals {
                let t = sum + v;
                c += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
                sum = t;
            }
            sum + c
        }
        let cfg = MacroConfig::new(vec![32, 32], vec![0.0, 10.0], 1.0, 1.0).unwrap();
        let mut rng = seed_stream(11, 0);
        let v = random_unit_vector(64, &mut rng);
        let p = project_macro(&MicroState::new(v.clone(), &cfg).unwrap(), &cfg).unwrap();
        for n in 0..2 {
            let exact = compensated(v[cfg.block(n)].iter().flat_map(|z| [z.re * z.re, z.im * z.im]));
            assert!((p.p()[n] - exact).abs() < 1e-15, "block {n}");
        }
    }

    #[test]
    fn project_dimension_mismatch() {
        let cfg = two_by_two();
        let other = MacroConfig::new(vec![1, 1], vec![0.0, 10.0], 1.0, 1.0).unwrap();
        let s = MicroState::new(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], &other).unwrap();
        assert!(matches!(project_macro(&s, &cfg), Err(Error::Dimension(_))));
    }

    #[test]
    fn single_microstate_is_pure_phase() {
        let cfg = MacroConfig::new(vec![1, 3], vec![0.0, 10.0], 1.0, 1.0).unwrap();
        let mut rng = seed_stream(5, 0);
        for _ in 0..100 {
            let eta = sample_micro_amplitudes(&cfg, &mut rng);
            assert!((eta.block(0)[0].norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn configurational_averages() {
        let n = 10_000;
        let cfg = MacroConfig::new(vec![n], vec![0.0], 1.0, 1.0).unwrap();
        let mut rng = seed_stream(6, 0);
        let draws = 1000;
        let (mut re, mut im, mut sq) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..draws {
            let eta = sample_micro_amplitudes(&cfg, &mut rng);
            let z = eta.block(0)[17];
            re.push(z.re);
            im.push(z.im);
            sq.push(z.norm_sqr());
        }
        for xs in [&re, &im] {
            let (m, se) = mean_and_se(xs);
            assert!(m.abs() < 4.0 * se, "mean {m} se {se}");
        }
        let (m, se) = mean_and_se(&sq);
        assert!((m - 1.0 / n as f64).abs() < 4.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn squared_component_of_unit_two_vector_is_uniform() {
        let cfg = MacroConfig::new(vec![2], vec![0.0], 1.0, 1.0).unwrap();
        let mut rng = seed_stream(7, 0);
        let xs: Vec<f64> =
            (0..100_000).map(|_| sample_micro_amplitudes(&cfg, &mut rng).block(0)[0].norm_sqr()).collect();
        let (_, p) = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn sampling_is_rotation_invariant() {
        // Fixed unitary on a 3-dim block: compare |eta_0|^2 before and after.
        let cfg = MacroConfig::new(vec![3], vec![0.0], 1.0, 1.0).unwrap();
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let ph = Complex64::from_polar(1.0, 0.7);
        let rotate = |v: &[Complex64]| [v[0] * c - v[1] * s * ph, v[0] * s * ph.conj() + v[1] * c, v[2]];
        let mut rng = seed_stream(8, 0);
        let mut before = Vec::new();
        let mut after = Vec::new();
        for i in 0..40_000 {
            let eta = sample_micro_amplitudes(&cfg, &mut rng);
            if i % 2 == 0 {
                before.push(eta.block(0)[0].norm_sqr());
            } else {
                after.push(rotate(eta.block(0))[0].norm_sqr());
            }
        }
        let (_, p) = ks_two_sample(&before, &after);
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn assemble_explicit() {
        let cfg = MacroConfig::new(vec![1, 1], vec![0.0, 10.0], 1.0, 1.0).unwrap();
        let p = SuperpositionState::new(vec![0.3, 0.7]).unwrap();
        let eta = MicroAmplitudes::new(vec![vec![Complex64::new(1.0, 0.0)], vec![Complex64::new(0.0, 1.0)]]).unwrap();
        let b = assemble_micro(&p, &eta, &cfg).unwrap();
        assert_eq!(b.amplitudes()[0], Complex64::new(0.3f64.sqrt(), 0.0));
        assert_eq!(b.amplitudes()[1], Complex64::new(0.0, 0.7f64.sqrt()));
    }

    #[test]
    fn assemble_collapsed_zeroes_other_block() {
        let cfg = two_by_two();
        let mut rng = seed_stream(9, 0);
        let eta = sample_micro_amplitudes(&cfg, &mut rng);
        let b = assemble_micro(&SuperpositionState::vertex(2, 0), &eta, &cfg).unwrap();
        assert!(b.amplitudes()[2..].iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    proptest! {
        #[test]
        fn assemble_then_project_round_trips(
            counts in proptest::collection::vec(1usize..6, 2..5),
            raw in proptest::collection::vec(0.0f64..1.0, 5),
            seed in any::<u64>(),
        ) {
            let m = counts.len();
            let weights: Vec<f64> = raw[..m].iter().map(|x| x + 1e-3).collect();
            let p = SuperpositionState::from_weights(&weights).unwrap();
            let cfg = MacroConfig::new(counts, (0..m).map(|n| 10.0 * n as f64).collect(), 1.0, 1.0).unwrap();
            let eta = sample_micro_amplitudes(&cfg, &mut seed_stream(seed, 0));
            let back = project_macro(&assemble_micro(&p, &eta, &cfg).unwrap(), &cfg).unwrap();
            for (a, b) in p.p().iter().zip(back.p()) {
                prop_assert!((a - b).abs() < SINGLE_SHOT);
            }
        }
    }
}
