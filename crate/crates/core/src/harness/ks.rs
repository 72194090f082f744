//! One- and two-sample Kolmogorov-Smirnov tests.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KsError {
    #[error("KS test needs at least {min} observations, got {got}")]
    SampleTooSmall { got: usize, min: usize },
    #[error("sample contains a non-finite value")]
    NonFinite,
}

pub const MIN_SAMPLE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub d: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Asymptotic Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        // the alternating series converges slowly here and the value is 1 to double precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// p-value for distance `d` on an effective sample size `n` (Stephens' correction).
pub fn ks_p_value(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// Asymptotic 1% critical value of the one-sample statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

fn check(sample: &[f64]) -> Result<(), KsError> {
    if sample.len() < MIN_SAMPLE {
        return Err(KsError::SampleTooSmall {
            got: sample.len(),
            min: MIN_SAMPLE,
        });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(KsError::NonFinite);
    }
    Ok(())
}

/// Distance between the empirical CDF of `sorted` and the model CDF values
/// `cdf[i] = F(sorted[i])`.
pub fn ks_distance_sorted(cdf: &[f64]) -> f64 {
    let n = cdf.len() as f64;
    cdf.iter()
        .enumerate()
        .map(|(i, &f)| {
            let lo = f - i as f64 / n;
            let hi = (i + 1) as f64 / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// One-sample test against an arbitrary continuous CDF.
pub fn ks_test_against(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult, KsError> {
    check(sample)?;
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let values: Vec<f64> = s.iter().map(|&x| cdf(x)).collect();
    let d = ks_distance_sorted(&values);
    Ok(KsResult {
        d,
        p_value: ks_p_value(d, s.len() as f64),
        n: s.len(),
    })
}

/// One-sample test against the standard normal.
pub fn ks_test(sample: &[f64]) -> Result<KsResult, KsError> {
    let phi = Normal::standard();
    ks_test_against(sample, |x| phi.cdf(x))
}

/// Two-sample test; the p-value uses the effective size `n m / (n + m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, KsError> {
    check(a)?;
    check(b)?;
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    Ok(KsResult {
        d,
        p_value: ks_p_value(d, ne),
        n: x.len() + y.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replication_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn perfect_quantiles() {
        let phi = Normal::standard();
        let n = 100;
        let s: Vec<f64> = (1..=n).map(|i| phi.inverse_cdf((i as f64 - 0.5) / n as f64)).collect();
        let r = ks_test(&s).unwrap();
        // inverse_cdf is accurate to roughly 1e-10
        assert!(r.d <= 0.005 + 1e-9, "{}", r.d);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn normal_draws_pass() {
        let mut rng = replication_rng(2024, 0);
        let s: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let r = ks_test(&s).unwrap();
        assert!(r.d < 0.02, "{}", r.d);
        assert!(r.p_value > 0.01);
    }

    #[test]
    fn constant_sample_fails() {
        let r = ks_test(&[0.3; 50]).unwrap();
        assert!(r.d >= 0.5);
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn too_small() {
        assert!(matches!(ks_test(&[0.0; 5]), Err(KsError::SampleTooSmall { .. })));
    }

    #[test]
    fn kolmogorov_reference_values() {
        // P(K > 1.36) ~ 0.05, P(K > 1.6276) ~ 0.01
        assert!((kolmogorov_sf(1.358_1) - 0.05).abs() < 2e-4);
        assert!((kolmogorov_sf(1.627_6) - 0.01).abs() < 2e-4);
    }

    #[test]
    fn two_sample_same_and_shifted() {
        let mut rng = replication_rng(5, 1);
        let a: Vec<f64> = (0..2000).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..2000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.01);
        let c: Vec<f64> = b.iter().map(|v| v + 0.5).collect();
        assert!(ks_two_sample(&a, &c).unwrap().p_value < 1e-6);
    }
}
