//! Small statistics toolkit: moments, the two-sample Kolmogorov–Smirnov
//! test and weighted least squares.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample skewness and (non-excess) kurtosis from central moments.
pub fn skew_kurtosis(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

impl KsResult {
    /// Asymptotic critical value `c(α)·√((n+m)/(nm))`.
    pub fn critical_value(&self, alpha: f64) -> f64 {
        let (n, m) = (self.n_a as f64, self.n_b as f64);
        (-0.5 * (alpha / 2.0).ln()).sqrt() * ((n + m) / (n * m)).sqrt()
    }
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData(
            "KS test needs two nonempty samples".into(),
        ));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    let p = kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d);
    Ok(KsResult {
        statistic: d,
        p_value: p,
        n_a: n,
        n_b: m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Weighted least squares `y ≈ intercept + slope·x`.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(Error::Dimension("fit inputs differ in length".into()));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(
            "fit needs at least two points".into(),
        ));
    }
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for k in 0..x.len() {
        let dx = x[k] - xm;
        let dy = y[k] - ym;
        sxx += w[k] * dx * dx;
        sxy += w[k] * dx * dy;
        syy += w[k] * dy * dy;
    }
    if sxx <= 0.0 {
        return Err(Error::InsufficientData(
            "fit abscissae are all equal".into(),
        ));
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(LinearFit {
        slope,
        intercept: ym - slope * xm,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_survival_reference_points() {
        // classical critical values: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let b: Vec<f64> = (0..100).map(|i| 1000.0 + i as f64).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn ks_handles_ties() {
        let a = [1.0, 1.0, 2.0, 2.0];
        let b = [1.0, 2.0, 2.0, 2.0];
        assert!((ks_two_sample(&a, &b).unwrap().statistic - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v - 1.0).collect();
        let f = weighted_linear_fit(&x, &y, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-14);
        assert!((f.intercept + 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn moments_of_symmetric_sample() {
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let (s, k) = skew_kurtosis(&xs);
        assert_eq!(s, 0.0);
        assert!((k - 1.7).abs() < 1e-14);
        assert!((variance(&xs) - 2.5).abs() < 1e-14);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
    }
}
