//! Kolmogorov-Smirnov checks of standardized feature distances against the
//! chi distribution.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::TargetModel;
use crate::seed;
use crate::{Error, Result};

pub const MIN_CHI_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiCheckResult {
    pub ks_statistic: f64,
    pub p_value: f64,
    pub sample_count: usize,
    pub dof: usize,
}

/// CDF of the chi distribution with `dof` degrees of freedom.
pub fn chi_cdf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ChiSquared::new(dof as f64).expect("dof > 0").cdf(x * x)
}

/// Asymptotic Kolmogorov survival function `Q(lambda)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `xs` against `cdf`.
pub fn ks_test(xs: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sq = n.sqrt();
    (d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d))
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < MIN_CHI_SAMPLES {
        return Err(Error::validation(format!(
            "chi check needs at least {MIN_CHI_SAMPLES} samples, got {samples}"
        )));
    }
    Ok(())
}

fn draw(t: &TargetModel, rng: &mut impl Rng, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        let n = Normal::new(t.mu.values()[k], t.sigma[k]).expect("sigma > 0");
        *o = n.sample(rng);
    }
}

fn finish(stats: Vec<f64>, dof: usize) -> ChiCheckResult {
    let (ks_statistic, p_value) = ks_test(&stats, |x| chi_cdf(x, dof));
    ChiCheckResult {
        ks_statistic,
        p_value,
        sample_count: stats.len(),
        dof,
    }
}

/// Same-target pairs standardized by `assumed_sigma` (the true sigma when
/// `None`).
pub fn chi_check_intra(
    target: &TargetModel,
    assumed_sigma: Option<&[f64]>,
    samples: usize,
    seed_value: u64,
) -> Result<ChiCheckResult> {
    check_samples(samples)?;
    let n = target.mu.dim();
    let sigma = assumed_sigma.unwrap_or(&target.sigma);
    if sigma.len() != n {
        return Err(Error::validation("assumed sigma has the wrong dimension"));
    }
    let mut rng = seed::rng(&[seed_value, 0xc1]);
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    let stats = (0..samples)
        .map(|_| {
            draw(target, &mut rng, &mut a);
            draw(target, &mut rng, &mut b);
            (0..n)
                .map(|k| {
                    let z = (a[k] - b[k]) / (2.0 * sigma[k] * sigma[k]).sqrt();
                    z * z
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(finish(stats, n))
}

/// Cross-target pairs. With `shift_means` false the mean difference is not
/// subtracted, which leaves a non-central statistic.
pub fn chi_check_inter(
    a: &TargetModel,
    b: &TargetModel,
    shift_means: bool,
    samples: usize,
    seed_value: u64,
) -> Result<ChiCheckResult> {
    check_samples(samples)?;
    let n = a.mu.dim();
    if b.mu.dim() != n {
        return Err(Error::validation("targets differ in feature dimension"));
    }
    let mut rng = seed::rng(&[seed_value, 0xc2]);
    let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
    let stats = (0..samples)
        .map(|_| {
            draw(a, &mut rng, &mut x);
            draw(b, &mut rng, &mut y);
            (0..n)
                .map(|k| {
                    let shift = if shift_means { a.mu.values()[k] - b.mu.values()[k] } else { 0.0 };
                    let z = (x[k] - y[k] - shift) / (a.sigma[k].powi(2) + b.sigma[k].powi(2)).sqrt();
                    z * z
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(finish(stats, n))
}
