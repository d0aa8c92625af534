//! Two-component 1-D Gaussian mixture fitted by EM.

use crate::{Error, Result};

/// Absolute log-likelihood improvement below which EM stops.
pub const TOL: f64 = 1e-6;
pub const MAX_ITER: usize = 200;
pub const VAR_FLOOR: f64 = 1e-8;
pub const MIN_FIT_SAMPLES: usize = 4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

pub fn sample_stats(xs: &[f64]) -> Result<SampleStats> {
    if xs.is_empty() {
        return Err(Error::validation("statistics of an empty sample"));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok(SampleStats {
        mean,
        std: var.sqrt(),
        count: xs.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    /// Ascending.
    pub means: [f64; 2],
    pub variances: [f64; 2],
    pub weights: [f64; 2],
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after every E-step, in order.
    pub trace: Vec<f64>,
}

impl GmmFit {
    pub fn mean_gap(&self) -> f64 {
        self.means[1] - self.means[0]
    }

    /// Posterior component probabilities for one value.
    pub fn responsibilities(&self, x: f64) -> [f64; 2] {
        let lp = [0, 1].map(|k| log_weighted_density(x, self.weights[k], self.means[k], self.variances[k]));
        let lse = log_sum_exp(lp[0], lp[1]);
        [(lp[0] - lse).exp(), (lp[1] - lse).exp()]
    }

    /// Number of values more likely drawn from the larger-mean component.
    pub fn upper_count(&self, xs: &[f64]) -> usize {
        xs.iter().filter(|&&x| self.responsibilities(x)[1] > 0.5).count()
    }
}

pub fn mean_gap(fit: &GmmFit) -> f64 {
    fit.mean_gap()
}

fn log_weighted_density(x: f64, w: f64, mu: f64, var: f64) -> f64 {
    if w <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let d = x - mu;
    w.ln() - 0.5 * (LN_2PI + var.ln()) - d * d / (2.0 * var)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (-(a - b).abs()).exp().ln_1p()
}

/// Linear-interpolated percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Fits a two-component mixture by EM with a deterministic start: means at
/// the quartiles, variances at a quarter of the sample variance, equal weights.
pub fn fit_gmm2(xs: &[f64]) -> Result<GmmFit> {
    if xs.len() < MIN_FIT_SAMPLES {
        return Err(Error::validation(format!(
            "mixture fit needs at least {MIN_FIT_SAMPLES} samples, got {}",
            xs.len()
        )));
    }
    if let Some(bad) = xs.iter().find(|x| !x.is_finite()) {
        return Err(Error::validation(format!("non-finite sample {bad}")));
    }
    let stats = sample_stats(xs)?;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);

    if lo == hi {
        let n = xs.len() as f64;
        let ll = n * (-0.5 * (LN_2PI + VAR_FLOOR.ln()));
        return Ok(GmmFit {
            means: [lo, lo],
            variances: [VAR_FLOOR, VAR_FLOOR],
            weights: [0.5, 0.5],
            log_likelihood: ll,
            iterations: 0,
            converged: true,
            trace: vec![ll],
        });
    }

    let mut means = [percentile(&sorted, 0.25), percentile(&sorted, 0.75)];
    if means[0] == means[1] {
        // Heavily tied data: both quartiles land on the same value.
        means = [stats.mean - stats.std, stats.mean + stats.std];
    }
    let v0 = (stats.std * stats.std / 4.0).max(VAR_FLOOR);
    let mut vars = [v0, v0];
    let mut weights = [0.5, 0.5];

    let n = xs.len();
    let mut resp = vec![0.0f64; n];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    loop {
        // E-step: resp holds the posterior of the upper component.
        let mut ll = 0.0;
        let c = [0, 1].map(|k| log_weighted_density(means[k], weights[k], means[k], vars[k]));
        let h = [0, 1].map(|k| 0.5 / vars[k]);
        for (r, &x) in resp.iter_mut().zip(xs) {
            let (d0, d1) = (x - means[0], x - means[1]);
            let a = c[0] - d0 * d0 * h[0];
            let b = c[1] - d1 * d1 * h[1];
            let lse = log_sum_exp(a, b);
            ll += lse;
            *r = (b - lse).exp();
        }
        if let Some(&prev) = trace.last() {
            if ll - prev < TOL {
                converged = true;
            }
        }
        trace.push(ll);
        if converged || iterations == MAX_ITER {
            break;
        }

        // M-step.
        let mut mass = [0.0f64; 2];
        let mut sum = [0.0f64; 2];
        for (&r, &x) in resp.iter().zip(xs) {
            mass[0] += 1.0 - r;
            mass[1] += r;
            sum[0] += (1.0 - r) * x;
            sum[1] += r * x;
        }
        for k in 0..2 {
            if mass[k] <= 0.0 {
                weights[k] = 0.0;
                continue;
            }
            means[k] = sum[k] / mass[k];
        }
        let mut sq = [0.0f64; 2];
        for (&r, &x) in resp.iter().zip(xs) {
            sq[0] += (1.0 - r) * (x - means[0]) * (x - means[0]);
            sq[1] += r * (x - means[1]) * (x - means[1]);
        }
        let total = mass[0] + mass[1];
        for k in 0..2 {
            if mass[k] > 0.0 {
                vars[k] = (sq[k] / mass[k]).max(VAR_FLOOR);
                weights[k] = mass[k] / total;
            }
        }
        iterations += 1;
    }

    if means[0] > means[1] {
        means.swap(0, 1);
        vars.swap(0, 1);
        weights.swap(0, 1);
    }
    Ok(GmmFit {
        means,
        variances: vars,
        weights,
        log_likelihood: *trace.last().expect("at least one E-step"),
        iterations,
        converged,
        trace,
    })
}
