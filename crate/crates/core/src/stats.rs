//! Sample statistics used by the validators and the ensemble analysis.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and its standard error `s / sqrt(n)`.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Standard error of the mean from contiguous batch means.
///
/// With i.i.d. samples this agrees with [`mean_and_se`] in expectation; a
/// disagreement that grows with batch size exposes correlation between
/// neighbouring samples. `n_batches` is clamped to the sample count.
pub fn batched_mean_se(xs: &[f64], n_batches: usize) -> (f64, f64) {
    let n = xs.len();
    let b = n_batches.clamp(1, n.max(1));
    let means = batch_means(xs, b);
    let m = mean(xs);
    if b < 2 {
        return (m, 0.0);
    }
    let bm = mean(&means);
    let var = means.iter().map(|x| (x - bm) * (x - bm)).sum::<f64>() / (b as f64 - 1.0);
    (m, (var / b as f64).sqrt())
}

/// Means of `b` contiguous, near-equal batches.
pub fn batch_means(xs: &[f64], b: usize) -> Vec<f64> {
    let n = xs.len();
    (0..b)
        .map(|k| {
            let lo = k * n / b;
            let hi = (k + 1) * n / b;
            mean(&xs[lo..hi])
        })
        .collect()
}

/// Kolmogorov distribution tail `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test against a continuous CDF: `(D, p-value)`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    let sqrt_n = n.sqrt();
    (d, kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d))
}

/// Two-sample KS test: `(D, p-value)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    (d, kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d))
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(x: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Invalid("chi-square needs at least one degree of freedom".into()));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    if !x.is_finite() {
        return Ok(0.0);
    }
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(dist.sf(x))
}

/// Straight-line fit `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope, scaled by the reduced chi-square when
    /// that exceeds one.
    pub slope_se: f64,
}

/// Weighted least squares with weights `w_i = 1 / var_i`.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(Error::Dimension("line fit inputs differ in length".into()));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!("line fit needs at least 2 points, got {}", x.len())));
    }
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - xm) * (a - xm)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("line fit abscissae are degenerate".into()));
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - xm) * (c - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| {
            let r = c - intercept - slope * a;
            b * r * r
        })
        .sum();
    let dof = x.len().saturating_sub(2).max(1) as f64;
    let scale = (chi2 / dof).max(1.0);
    Ok(LineFit { slope, intercept, slope_se: (scale / sxx).sqrt() })
}

/// Ordinary least squares (unit weights).
pub fn line_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    weighted_line_fit(x, y, &vec![1.0; x.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_stream;
    use rand::Rng;

    #[test]
    fn line_fit_exact() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|t| 3.0 - 0.5 * t).collect();
        let f = line_fit(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 3.0).abs() < 1e-14);
    }

    #[test]
    fn ks_accepts_uniform_rejects_shifted() {
        let mut rng = seed_stream(1, 0);
        let u: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let (_, p) = ks_one_sample(&u, |x| x.clamp(0.0, 1.0));
        assert!(p > 0.01, "p = {p}");
        let shifted: Vec<f64> = u.iter().map(|x| x * 0.9).collect();
        let (_, p) = ks_one_sample(&shifted, |x| x.clamp(0.0, 1.0));
        assert!(p < 0.01);
        let (_, p2) = ks_two_sample(&u[..2500], &u[2500..]);
        assert!(p2 > 0.01);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Critical values of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn batched_se_tracks_plain_se_for_iid() {
        let mut rng = seed_stream(2, 0);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let (_, se) = mean_and_se(&xs);
        for b in [20, 100, 400] {
            let (_, sb) = batched_mean_se(&xs, b);
            assert!((sb / se - 1.0).abs() < 0.35, "batches {b}: {sb} vs {se}");
        }
    }

    #[test]
    fn batched_se_detects_correlation() {
        // Each value repeated 50 times: the plain SE is far too small.
        let mut rng = seed_stream(3, 0);
        let xs: Vec<f64> = (0..200).flat_map(|_| std::iter::repeat_n(rng.random::<f64>(), 50)).collect();
        let (_, se) = mean_and_se(&xs);
        let (_, sb) = batched_mean_se(&xs, 20);
        assert!(sb > 4.0 * se);
    }

    #[test]
    fn chi_square_tail() {
        assert!((chi_square_sf(3.841_458_820_694_124, 1).unwrap() - 0.05).abs() < 1e-9);
        assert_eq!(chi_square_sf(0.0, 1).unwrap(), 1.0);
    }
}
