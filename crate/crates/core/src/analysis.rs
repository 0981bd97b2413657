//! Ensemble statistics, decay fits, the Born-rule and martingale tests, and
//! the regime calculators.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::SuperpositionState;
use crate::matrix::SigmaMatrix;
use crate::stats::{chi_square_sf, line_fit, weighted_line_fit};
use crate::tolerance::{si, SINGLE_SHOT};

/// Number of contiguous trajectory batches used for standard errors.
pub const DEFAULT_BATCHES: usize = 100;

/// Moments of an ensemble of `p(t)` paths sampled on a common time grid.
///
/// Standard errors come from batch means over contiguous blocks of
/// trajectory indices. The per-batch cross moments are kept so that fits can
/// be jackknifed batch by batch.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    /// `mean_p[t][n]` and its standard error.
    pub mean_p: Vec<Vec<f64>>,
    pub se_p: Vec<Vec<f64>>,
    /// Unordered pairs `(k, m)` with `k < m`, in lexicographic order.
    pub pairs: Vec<(usize, usize)>,
    /// `cross[t][j] = <p_k p_m>` for `pairs[j]`, and its standard error.
    pub cross: Vec<Vec<f64>>,
    pub se_cross: Vec<Vec<f64>>,
    /// `batch_cross[b][t][j]`: cross-moment sums within batch `b`.
    batch_cross_sums: Vec<Vec<Vec<f64>>>,
    batch_sizes: Vec<usize>,
    pub outcome_counts: Vec<u64>,
    pub n_trajectories: usize,
}

impl EnsembleStats {
    pub fn macro_count(&self) -> usize {
        self.outcome_counts.len()
    }

    pub fn n_uncollapsed(&self) -> usize {
        self.n_trajectories - self.outcome_counts.iter().sum::<u64>() as usize
    }

    pub fn pair_index(&self, k: usize, m: usize) -> Option<usize> {
        let (k, m) = if k < m { (k, m) } else { (m, k) };
        self.pairs.iter().position(|&p| p == (k, m))
    }

    pub fn n_batches(&self) -> usize {
        self.batch_sizes.len()
    }

    /// Cross moment of pair `j` with batch `skip` left out.
    fn cross_without_batch(&self, j: usize, skip: usize) -> Vec<f64> {
        let n = (self.n_trajectories - self.batch_sizes[skip]) as f64;
        (0..self.times.len())
            .map(|t| {
                let total: f64 =
                    self.batch_cross_sums.iter().enumerate().filter(|&(b, _)| b != skip).map(|(_, s)| s[t][j]).sum();
                total / n
            })
            .collect()
    }
}

/// Streaming builder for [`EnsembleStats`].
///
/// Trajectories must be pushed in index order; the reduction is sequential,
/// so the result is bit-identical however the paths were computed.
#[derive(Clone, Debug)]
pub struct EnsembleAccumulator {
    times: Vec<f64>,
    m: usize,
    n_total: usize,
    n_batches: usize,
    pairs: Vec<(usize, usize)>,
    pushed: usize,
    // Indexed [batch][time][component].
    sum_p: Vec<Vec<Vec<f64>>>,
    sum_cross: Vec<Vec<Vec<f64>>>,
    batch_sizes: Vec<usize>,
    outcome_counts: Vec<u64>,
}

impl EnsembleAccumulator {
    pub fn new(times: Vec<f64>, macro_count: usize, n_trajectories: usize) -> Result<Self> {
        Self::with_batches(times, macro_count, n_trajectories, DEFAULT_BATCHES)
    }

    pub fn with_batches(times: Vec<f64>, macro_count: usize, n_trajectories: usize, n_batches: usize) -> Result<Self> {
        if n_trajectories == 0 || macro_count == 0 {
            return Err(Error::InsufficientData("empty ensemble".into()));
        }
        let b = n_batches.clamp(1, n_trajectories);
        let pairs: Vec<(usize, usize)> =
            (0..macro_count).flat_map(|k| (k + 1..macro_count).map(move |m| (k, m))).collect();
        let nt = times.len();
        Ok(Self {
            m: macro_count,
            n_total: n_trajectories,
            n_batches: b,
            sum_p: vec![vec![vec![0.0; macro_count]; nt]; b],
            sum_cross: vec![vec![vec![0.0; pairs.len()]; nt]; b],
            batch_sizes: vec![0; b],
            outcome_counts: vec![0; macro_count],
            pairs,
            pushed: 0,
            times,
        })
    }

    /// Add the next trajectory: its path on the common grid and its outcome.
    pub fn push(&mut self, path: &[Vec<f64>], outcome: Option<usize>) -> Result<()> {
        if self.pushed >= self.n_total {
            return Err(Error::Usage("more trajectories pushed than declared".into()));
        }
        if path.len() != self.times.len() || path.iter().any(|p| p.len() != self.m) {
            return Err(Error::Dimension("path does not match the ensemble grid".into()));
        }
        let b = self.pushed * self.n_batches / self.n_total;
        for (t, p) in path.iter().enumerate() {
            for (acc, x) in self.sum_p[b][t].iter_mut().zip(p) {
                *acc += x;
            }
            for (j, &(k, m)) in self.pairs.iter().enumerate() {
                self.sum_cross[b][t][j] += p[k] * p[m];
            }
        }
        self.batch_sizes[b] += 1;
        if let Some(o) = outcome {
            if o >= self.m {
                return Err(Error::Dimension(format!("outcome {o} out of range")));
            }
            self.outcome_counts[o] += 1;
        }
        self.pushed += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<EnsembleStats> {
        if self.pushed != self.n_total {
            return Err(Error::Usage(format!("{} of {} trajectories pushed", self.pushed, self.n_total)));
        }
        let nt = self.times.len();
        let n = self.n_total as f64;
        let nb = self.n_batches;
        let reduce = |sums: &Vec<Vec<Vec<f64>>>, width: usize| {
            let mut mean = vec![vec![0.0; width]; nt];
            let mut se = vec![vec![0.0; width]; nt];
            for t in 0..nt {
                for i in 0..width {
                    let total: f64 = sums.iter().map(|s| s[t][i]).sum();
                    mean[t][i] = total / n;
                    if nb > 1 {
                        let bm: Vec<f64> =
                            sums.iter().zip(&self.batch_sizes).map(|(s, &c)| s[t][i] / c as f64).collect();
                        let mbar = bm.iter().sum::<f64>() / nb as f64;
                        let var = bm.iter().map(|x| (x - mbar) * (x - mbar)).sum::<f64>() / (nb as f64 - 1.0);
                        se[t][i] = (var / nb as f64).sqrt();
                    }
                }
            }
            (mean, se)
        };
        let (mean_p, se_p) = reduce(&self.sum_p, self.m);
        let (cross, se_cross) = reduce(&self.sum_cross, self.pairs.len());
        Ok(EnsembleStats {
            times: self.times,
            mean_p,
            se_p,
            pairs: self.pairs,
            cross,
            se_cross,
            batch_cross_sums: self.sum_cross,
            batch_sizes: self.batch_sizes,
            outcome_counts: self.outcome_counts,
            n_trajectories: self.n_total,
        })
    }
}

/// Fitted exponential decay of a cross moment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    /// Jackknife standard error over trajectory batches (0 when the series
    /// carries no sampling error).
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub points: usize,
}

impl DecayFit {
    /// True when the 95% interval overlaps `[target (1 - rel), target (1 + rel)]`.
    pub fn consistent_with(&self, target: f64, rel: f64) -> bool {
        self.ci_high >= target * (1.0 - rel) && self.ci_low <= target * (1.0 + rel)
    }
}

const Z95: f64 = 1.959_963_984_540_054;

fn fit_window(y: &[f64], se: &[f64]) -> Result<usize> {
    // Window starts at index 1 and runs while the moment stays above ten
    // standard errors.
    let end = (1..y.len()).find(|&i| !(y[i] > 0.0) || y[i] < 10.0 * se[i]).unwrap_or(y.len());
    if end < 3 {
        return Err(Error::InsufficientData(format!("decay fit window holds {} points", end.saturating_sub(1))));
    }
    Ok(end)
}

fn log_fit(t: &[f64], y: &[f64], se: &[f64]) -> Result<f64> {
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let fit = if se.iter().all(|&s| s > 0.0) {
        // Var(log y) ~ (se / y)^2.
        let w: Vec<f64> = y.iter().zip(se).map(|(v, s)| (v / s) * (v / s)).collect();
        weighted_line_fit(t, &ly, &w)?
    } else {
        line_fit(t, &ly)?
    };
    Ok(-fit.slope)
}

/// Exponential rate of `<p_k p_m>(t)` by weighted least squares on the log.
pub fn decay_fit(stats: &EnsembleStats, pair: (usize, usize)) -> Result<DecayFit> {
    let j = stats.pair_index(pair.0, pair.1).ok_or_else(|| Error::Dimension(format!("no pair {pair:?}")))?;
    let y: Vec<f64> = stats.cross.iter().map(|c| c[j]).collect();
    let se: Vec<f64> = stats.se_cross.iter().map(|c| c[j]).collect();
    let end = fit_window(&y, &se)?;
    let t = &stats.times[1..end];
    let rate = log_fit(t, &y[1..end], &se[1..end])?;

    let nb = stats.n_batches();
    let jack_se = if nb > 1 && se[1..end].iter().any(|&s| s > 0.0) {
        let mut reps = Vec::with_capacity(nb);
        for b in 0..nb {
            let yb = stats.cross_without_batch(j, b);
            if yb[1..end].iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InsufficientData(
                    "cross moment vanishes inside the fit window of a jackknife replicate".into(),
                ));
            }
            reps.push(log_fit(t, &yb[1..end], &se[1..end])?);
        }
        let mbar = reps.iter().sum::<f64>() / nb as f64;
        let ss: f64 = reps.iter().map(|r| (r - mbar) * (r - mbar)).sum();
        ((nb as f64 - 1.0) / nb as f64 * ss).sqrt()
    } else {
        0.0
    };
    Ok(DecayFit {
        rate,
        se: jack_se,
        ci_low: rate - Z95 * jack_se,
        ci_high: rate + Z95 * jack_se,
        window_start: t[0],
        window_end: t[t.len() - 1],
        points: t.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BornTest {
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    pub frequencies: Vec<f64>,
    pub expected: Vec<f64>,
    pub n_outcomes: u64,
}

/// Pearson chi-square of the outcome counts against `p0`.
pub fn born_test(stats: &EnsembleStats, p0: &SuperpositionState) -> Result<BornTest> {
    born_test_counts(&stats.outcome_counts, p0)
}

pub fn born_test_counts(counts: &[u64], p0: &SuperpositionState) -> Result<BornTest> {
    let m = counts.len();
    if p0.len() != m {
        return Err(Error::Dimension(format!("{} counts vs {} weights", m, p0.len())));
    }
    let total: u64 = counts.iter().sum();
    if total < 100 * m as u64 {
        return Err(Error::InsufficientData(format!("{total} outcomes, need at least {}", 100 * m)));
    }
    let nf = total as f64;
    let mut chi = 0.0;
    for (&o, &p) in counts.iter().zip(p0.p()) {
        let e = nf * p;
        let o = o as f64;
        if e == 0.0 {
            if o > 0.0 {
                chi = f64::INFINITY;
            }
            continue;
        }
        chi += (o - e) * (o - e) / e;
    }
    let p_value = if m < 2 { 1.0 } else { chi_square_sf(chi, m - 1)? };
    Ok(BornTest {
        chi_square: chi,
        dof: m.saturating_sub(1),
        p_value,
        frequencies: counts.iter().map(|&c| c as f64 / nf).collect(),
        expected: p0.p().to_vec(),
        n_outcomes: total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MartingaleCheck {
    pub max_z: f64,
    pub time: f64,
    pub index: usize,
}

impl MartingaleCheck {
    pub fn passes(&self) -> bool {
        self.max_z <= 4.0
    }
}

/// Worst `|<p_n(t)> - p_n(0)| / se` over all `n` and `t`. Deviations at
/// summation-rounding level count as zero: at `t = 0` every member sits at
/// `p(0)` and the standard error is itself rounding noise.
pub fn martingale_check(stats: &EnsembleStats, p0: &SuperpositionState) -> Result<MartingaleCheck> {
    if p0.len() != stats.macro_count() {
        return Err(Error::Dimension("p0 does not match the ensemble".into()));
    }
    let mut worst = MartingaleCheck { max_z: 0.0, time: stats.times.first().copied().unwrap_or(0.0), index: 0 };
    for (t, (mean, se)) in stats.mean_p.iter().zip(&stats.se_p).enumerate() {
        for n in 0..mean.len() {
            let dev = (mean[n] - p0.p()[n]).abs();
            let z = if dev <= SINGLE_SHOT {
                0.0
            } else if se[n] == 0.0 {
                f64::INFINITY
            } else {
                dev / se[n]
            };
            if z > worst.max_z {
                worst = MartingaleCheck { max_z: z, time: stats.times[t], index: n };
            }
        }
    }
    Ok(worst)
}

/// `t_km = hbar^2 / sigma_km^2`; `None` marks pairs without coupling.
pub fn collapse_time_estimate(sigma: &SigmaMatrix, hbar: f64) -> Vec<Vec<Option<f64>>> {
    let m = sigma.dim();
    (0..m)
        .map(|k| {
            (0..m)
                .map(|j| {
                    let s = sigma.get(k, j);
                    (k != j && s > 0.0).then(|| hbar * hbar / (s * s))
                })
                .collect()
        })
        .collect()
}

/// Collapse time from the microscopic coupling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CouplingCollapseTime {
    /// `hbar dE / (pi |V|^2)`, using `sigma^2 = pi hbar |V|^2 / dE`.
    pub with_pi: f64,
    /// Order-of-magnitude form `hbar dE / |V|^2`.
    pub order: f64,
}

pub fn collapse_time_from_coupling(hbar: f64, delta_e: f64, v: f64) -> Result<CouplingCollapseTime> {
    if !(hbar > 0.0 && delta_e > 0.0 && v > 0.0) {
        return Err(Error::Invalid("collapse time needs positive hbar, dE and |V|".into()));
    }
    let order = hbar * delta_e / (v * v);
    Ok(CouplingCollapseTime { with_pi: order / std::f64::consts::PI, order })
}

/// Causality regime of the effective dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    pub delta_x: f64,
    pub delta_e: f64,
    pub v_max: f64,
    pub tau_r: f64,
    pub tau_c: f64,
    /// `tau_r / tau_c = dX dE / (hbar v_max)`.
    pub ratio: f64,
    pub ito_valid: bool,
    /// Same ratio with `v_max` replaced by the speed of light.
    pub light_ratio: f64,
    pub light_valid: bool,
    pub threshold: f64,
}

pub const DEFAULT_ITO_THRESHOLD: f64 = 100.0;

pub fn causality_report(delta_x: f64, delta_e: f64, v_max: f64, hbar: f64) -> Result<RegimeReport> {
    causality_report_with(delta_x, delta_e, v_max, hbar, si::C, DEFAULT_ITO_THRESHOLD)
}

/// As [`causality_report`], with explicit light speed (in the caller's
/// units) and validity threshold.
pub fn causality_report_with(
    delta_x: f64,
    delta_e: f64,
    v_max: f64,
    hbar: f64,
    c: f64,
    threshold: f64,
) -> Result<RegimeReport> {
    for (name, v) in [("dX", delta_x), ("dE", delta_e), ("v_max", v_max), ("hbar", hbar), ("c", c)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let tau_c = hbar / delta_e;
    let tau_r = delta_x / v_max;
    let ratio = delta_x * delta_e / (hbar * v_max);
    let light_ratio = delta_x * delta_e / (hbar * c);
    Ok(RegimeReport {
        delta_x,
        delta_e,
        v_max,
        tau_r,
        tau_c,
        ratio,
        ito_valid: ratio >= threshold,
        light_ratio,
        light_valid: light_ratio >= threshold,
        threshold,
    })
}

/// Energy and position spreads of a minimal Gaussian packet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoherentProduct {
    pub sigma_e: f64,
    pub sigma_x: f64,
    pub product: f64,
    /// `hbar V0 / 2` with `V0 = sqrt(2E / M)`.
    pub half_hbar_v0: f64,
}

pub fn coherent_state_product(mass: f64, omega: f64, energy: f64, hbar: f64) -> Result<CoherentProduct> {
    for (name, v) in [("mass", mass), ("omega", omega), ("energy", energy), ("hbar", hbar)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
        }
    }
    if energy < hbar * omega {
        return Err(Error::Invalid("packet energy must be at least hbar omega".into()));
    }
    let sigma_e = (hbar * omega * energy).sqrt();
    let sigma_x = (hbar / (2.0 * mass * omega)).sqrt();
    let product = sigma_e * sigma_x;
    let half_hbar_v0 = 0.5 * hbar * (2.0 * energy / mass).sqrt();
    if ((product - half_hbar_v0) / half_hbar_v0).abs() > SINGLE_SHOT {
        return Err(Error::Integration(format!("packet identity broken: {product} vs {half_hbar_v0}")));
    }
    Ok(CoherentProduct { sigma_e, sigma_x, product, half_hbar_v0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_stream;
    use rand::Rng;

    fn synthetic(times: &[f64], f: impl Fn(f64) -> Vec<f64>, n: usize) -> EnsembleStats {
        let m = f(0.0).len();
        let mut acc = EnsembleAccumulator::new(times.to_vec(), m, n).unwrap();
        let path: Vec<Vec<f64>> = times.iter().map(|&t| f(t)).collect();
        for _ in 0..n {
            acc.push(&path, None).unwrap();
        }
        acc.finish().unwrap()
    }

    #[test]
    fn decay_fit_recovers_exact_exponential() {
        // p(1 - p) = 0.25 e^{-2t} for p = (1 + sqrt(1 - e^{-2t})) / 2.
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
        let stats = synthetic(
            &times,
            |t| {
                let p = 0.5 * (1.0 + (1.0 - (-2.0 * t).exp()).sqrt());
                vec![p, 1.0 - p]
            },
            3,
        );
        let fit = decay_fit(&stats, (0, 1)).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-6, "rate {}", fit.rate);
        assert!(fit.se < 1e-12);
    }

    #[test]
    fn decay_fit_needs_a_window() {
        let stats = synthetic(&[0.0, 1.0], |_| vec![0.5, 0.5], 2);
        assert!(matches!(decay_fit(&stats, (0, 1)), Err(Error::InsufficientData(_))));
        let stats = synthetic(&[0.0, 1.0, 2.0, 3.0], |_| vec![1.0, 0.0], 2);
        assert!(matches!(decay_fit(&stats, (0, 1)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn accumulator_matches_direct_moments() {
        let mut rng = seed_stream(11, 0);
        let times = vec![0.0, 0.5, 1.0];
        let n = 250;
        let paths: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| {
                times
                    .iter()
                    .map(|_| {
                        let a: f64 = rng.random();
                        let b: f64 = rng.random::<f64>() * (1.0 - a);
                        vec![a, b, 1.0 - a - b]
                    })
                    .collect()
            })
            .collect();
        let mut acc = EnsembleAccumulator::with_batches(times.clone(), 3, n, 10).unwrap();
        for p in &paths {
            acc.push(p, Some(2)).unwrap();
        }
        let s = acc.finish().unwrap();
        assert_eq!(s.pairs, vec![(0, 1), (0, 2), (1, 2)]);
        for t in 0..times.len() {
            let direct: f64 = paths.iter().map(|p| p[t][0] * p[t][2]).sum::<f64>() / n as f64;
            assert!((s.cross[t][1] - direct).abs() < 1e-14);
            let direct: f64 = paths.iter().map(|p| p[t][1]).sum::<f64>() / n as f64;
            assert!((s.mean_p[t][1] - direct).abs() < 1e-14);
            assert!(s.se_p[t][1] > 0.0);
        }
        assert_eq!(s.outcome_counts, vec![0, 0, n as u64]);
        assert_eq!(s.n_uncollapsed(), 0);
    }

    #[test]
    fn born_trivial_and_power() {
        let p0 = SuperpositionState::new(vec![1.0, 0.0]).unwrap();
        let r = born_test_counts(&[200, 0], &p0).unwrap();
        assert_eq!(r.chi_square, 0.0);
        assert_eq!(r.p_value, 1.0);

        // 3000 / 7000 is exactly the (0.3, 0.7) expectation.
        let p0 = SuperpositionState::new(vec![0.3, 0.7]).unwrap();
        assert!(born_test_counts(&[3000, 7000], &p0).unwrap().p_value > 0.99);
        let wrong = SuperpositionState::new(vec![0.5, 0.5]).unwrap();
        assert!(born_test_counts(&[3000, 7000], &wrong).unwrap().p_value < 0.01);
        assert!(matches!(born_test_counts(&[10, 20], &p0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn born_power_against_binomial_draws() {
        let mut rng = seed_stream(12, 0);
        let n = 10_000;
        let zeros = (0..n).filter(|_| rng.random::<f64>() < 0.3).count() as u64;
        let counts = [zeros, n - zeros];
        let right = SuperpositionState::new(vec![0.3, 0.7]).unwrap();
        let wrong = SuperpositionState::new(vec![0.5, 0.5]).unwrap();
        assert!(born_test_counts(&counts, &right).unwrap().p_value > 0.01);
        assert!(born_test_counts(&counts, &wrong).unwrap().p_value < 0.01);
    }

    #[test]
    fn born_statistic_is_label_invariant() {
        let p0 = SuperpositionState::new(vec![0.2, 0.3, 0.5]).unwrap();
        let a = born_test_counts(&[190, 320, 490], &p0).unwrap();
        let q0 = SuperpositionState::new(vec![0.5, 0.2, 0.3]).unwrap();
        let b = born_test_counts(&[490, 190, 320], &q0).unwrap();
        assert!((a.chi_square - b.chi_square).abs() < 1e-12);
    }

    #[test]
    fn martingale_of_collapsed_ensemble_is_zero() {
        let stats = synthetic(&[0.0, 1.0, 2.0], |_| vec![1.0, 0.0], 1);
        let p0 = SuperpositionState::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(martingale_check(&stats, &p0).unwrap().max_z, 0.0);
    }

    #[test]
    fn martingale_ignores_rounding_at_the_start() {
        // Ten thousand copies of 0.3 do not sum to exactly 3000.
        let times = [0.0, 1.0];
        let mut acc = EnsembleAccumulator::new(times.to_vec(), 2, 10_000).unwrap();
        for i in 0..10_000 {
            let end = if i % 10 < 3 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
            acc.push(&[vec![0.3, 0.7], end], None).unwrap();
        }
        let stats = acc.finish().unwrap();
        assert_ne!(stats.mean_p[0][0], 0.3);
        let p0 = SuperpositionState::new(vec![0.3, 0.7]).unwrap();
        assert!(martingale_check(&stats, &p0).unwrap().max_z < 1e-6);
    }

    #[test]
    fn collapse_times() {
        let s = SigmaMatrix::uniform(2, 1.0).unwrap();
        let t = collapse_time_estimate(&s, 1.0);
        assert_eq!(t[0][1], Some(1.0));
        assert_eq!(t[0][0], None);
        assert_eq!(collapse_time_estimate(&SigmaMatrix::uniform(2, 0.0).unwrap(), 1.0)[0][1], None);

        let c = collapse_time_from_coupling(1.0546e-34, 1e-12, 1.0).unwrap();
        assert!((c.order / 1.0546e-46 - 1.0).abs() < 1e-12);
        let c2 = collapse_time_from_coupling(1.0546e-34, 2e-12, 1.0).unwrap();
        assert!((c2.order / c.order - 2.0).abs() < 1e-12);
        assert!((c.with_pi * std::f64::consts::PI / c.order - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regime_reports() {
        let r = causality_report_with(2.0, 3.0, 6.0, 1.0, 10.0, 100.0).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-15);
        assert!(!r.ito_valid);

        let hbar_c = si::HBAR * si::C;
        let r = causality_report(1e-13, 1e-12, si::C, si::HBAR).unwrap();
        assert!((r.ratio - 1e-25 / hbar_c).abs() < 1e-12 * r.ratio);
        assert!((r.ratio - 3.16).abs() < 0.02, "ratio {}", r.ratio);
        assert!(!r.ito_valid);

        let r = causality_report(1e-3, 1.0, si::C, si::HBAR).unwrap();
        assert!((r.ratio / 3.163e22 - 1.0).abs() < 1e-3, "ratio {}", r.ratio);
        assert!(r.ito_valid);
        assert!((r.tau_r / r.tau_c - r.ratio).abs() < 1e-9 * r.ratio);
    }

    #[test]
    fn regime_monotone() {
        let base = causality_report(1e-3, 1e-30, 1.0, si::HBAR).unwrap();
        let wider = causality_report(2e-3, 1e-30, 1.0, si::HBAR).unwrap();
        let faster = causality_report(1e-3, 1e-30, 2.0, si::HBAR).unwrap();
        assert!(wider.ratio > base.ratio && faster.ratio < base.ratio);
    }

    #[test]
    fn coherent_products() {
        let c = coherent_state_product(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((c.product - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((c.half_hbar_v0 - 2f64.sqrt() / 2.0).abs() < 1e-15);
        let c4 = coherent_state_product(1.0, 1.0, 4.0, 1.0).unwrap();
        assert!((c4.product / c.product - 2.0).abs() < 1e-14);
        let si_case = coherent_state_product(1e-3, 1.0, 1e-3, si::HBAR).unwrap();
        assert!((si_case.product / (si::HBAR * 0.5f64.sqrt()) - 1.0).abs() < 1e-12);
        assert!((si_case.product - 7.457e-35).abs() < 1e-37);
        assert!(coherent_state_product(1.0, 2.0, 1.0, 1.0).is_err());
    }
}
