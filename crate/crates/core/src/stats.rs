//! Small statistical toolkit: moments, correlation, regression, quantiles
//! and Kolmogorov–Smirnov tests.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::vec3::Vec3;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() as f64 - 1.0)
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    covariance(xs, ys) / (variance(xs) * variance(ys)).sqrt()
}

/// Mean vector and unbiased 3×3 covariance of a vector sample.
pub fn mean_and_covariance(vs: &[Vec3]) -> (Vec3, [[f64; 3]; 3]) {
    let n = vs.len() as f64;
    let m = vs.iter().fold(Vec3::ZERO, |acc, &v| acc + v) / n;
    let mut cov = [[0.0; 3]; 3];
    for v in vs {
        let d = *v - m;
        for (i, row) in cov.iter_mut().enumerate() {
            for (j, c) in row.iter_mut().enumerate() {
                *c += d[i] * d[j];
            }
        }
    }
    for row in cov.iter_mut() {
        for c in row.iter_mut() {
            *c /= n - 1.0;
        }
    }
    (m, cov)
}

/// Component `i` of every vector.
pub fn component(vs: &[Vec3], i: usize) -> Vec<f64> {
    vs.iter().map(|v| v[i]).collect()
}

/// Least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "regression needs at least two paired points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData(
            "regression abscissae are all equal".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Linear-interpolation quantile (type 7) of an unsorted sample.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() as f64 - 1.0) * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Standard error of the mean of a correlated series by non-overlapping
/// batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).take(batches).map(mean).collect();
    standard_error(&means)
}

pub fn normal_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    0.5 * erfc(-(x - mu) / (sigma * std::f64::consts::SQRT_2))
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic critical value `c(α)` with `P(K > c(α)) ≈ α`.
pub fn kolmogorov_critical(alpha: f64) -> f64 {
    (-(0.5 * alpha).ln() / 2.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    /// Sup-distance between the distribution functions.
    pub statistic: f64,
    /// Effective sample size, `n` or `nm/(n+m)`.
    pub effective_n: f64,
    pub p_value: f64,
}

impl KsResult {
    fn new(statistic: f64, effective_n: f64) -> Self {
        KsResult {
            statistic,
            effective_n,
            p_value: kolmogorov_sf(effective_n.sqrt() * statistic),
        }
    }

    /// Critical distance at level `alpha`.
    pub fn critical(&self, alpha: f64) -> f64 {
        kolmogorov_critical(alpha) / self.effective_n.sqrt()
    }

    pub fn passes(&self, alpha: f64) -> bool {
        self.statistic <= self.critical(alpha)
    }
}

pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> KsResult {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    KsResult::new(d, n)
}

pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> KsResult {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    KsResult::new(d, nf * mf / (nf + mf))
}

/// KS test of `xs` against a Gaussian with the sample's own mean and variance.
pub fn ks_normal_fitted(xs: &[f64]) -> KsResult {
    let mu = mean(xs);
    let sd = variance(xs).sqrt();
    ks_one_sample(xs, |x| normal_cdf(x, mu, sd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert!((correlation(&xs, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn slope_and_degenerate_fit() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, -1.0, -3.0];
        assert!((ols_slope(&xs, &ys).unwrap() + 2.0).abs() < 1e-15);
        assert!(matches!(
            ols_slope(&[1.0], &[2.0]),
            Err(Error::InsufficientData(_))
        ));
        assert!(ols_slope(&[1.0, 1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert_eq!(quantile(&xs, 0.9), 4.6);
    }

    #[test]
    fn kolmogorov_tables() {
        // classical table: c(0.05) = 1.3581, c(0.01) = 1.6276
        assert!((kolmogorov_critical(0.05) - 1.3581).abs() < 1e-3);
        assert!((kolmogorov_critical(0.01) - 1.6276).abs() < 1e-3);
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn ks_accepts_gaussian_and_rejects_uniform() {
        let mut s = RandomStream::new(3);
        let g: Vec<f64> = (0..20_000).map(|_| s.standard_normal()).collect();
        assert!(ks_one_sample(&g, |x| normal_cdf(x, 0.0, 1.0)).passes(0.01));
        let u: Vec<f64> = (0..20_000).map(|_| s.uniform()).collect();
        assert!(!ks_normal_fitted(&u).passes(0.01));
    }

    #[test]
    fn two_sample_detects_shift() {
        let mut s = RandomStream::new(4);
        let a: Vec<f64> = (0..5000).map(|_| s.standard_normal()).collect();
        let b: Vec<f64> = (0..5000).map(|_| s.standard_normal()).collect();
        let c: Vec<f64> = (0..5000).map(|_| s.standard_normal() + 0.2).collect();
        assert!(ks_two_sample(&a, &b).passes(0.01));
        assert!(!ks_two_sample(&a, &c).passes(0.01));
    }
}
