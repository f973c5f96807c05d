//! Normal-approximation confidence intervals, log-domain ensemble means and
//! the bootstrapped geometric-rate fit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::derive_seed;

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959964;

/// Smallest sample count a confidence interval is computed from.
pub const MIN_SAMPLES: usize = 30;

/// Relative standard error beyond which an ensemble mean is too noisy to fit.
pub const MAX_REL_SE: f64 = 0.1;

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Sample mean with its standard error and 95% interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Mean and 95% CI. `−∞` samples (log of zero) force the mean to `−∞`.
pub fn mean_ci(samples: &[f64]) -> Result<MeanCi> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: n,
        });
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("sample".into()));
    }
    let neg = samples.contains(&f64::NEG_INFINITY);
    let pos = samples.contains(&f64::INFINITY);
    match (neg, pos) {
        (true, true) => return Err(Error::NonFinite("samples contain both infinities".into())),
        (true, false) | (false, true) => {
            let m = if neg { f64::NEG_INFINITY } else { f64::INFINITY };
            return Ok(MeanCi {
                mean: m,
                se: 0.0,
                lo: m,
                hi: m,
                n,
            });
        }
        _ => {}
    }
    let nf = n as f64;
    let mean = sample_mean(samples);
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let se = (var / nf).sqrt();
    Ok(MeanCi {
        mean,
        se,
        lo: mean - Z95 * se,
        hi: mean + Z95 * se,
        n,
    })
}

/// Arithmetic mean, exact when all samples are equal.
pub fn sample_mean(samples: &[f64]) -> f64 {
    match samples.first() {
        Some(&first) if samples.iter().all(|v| *v == first) => first,
        _ => samples.iter().sum::<f64>() / samples.len() as f64,
    }
}

/// `ln(mean(e^{l}))` and the relative standard error of that mean, for
/// samples given as logs. Stable for logs far below the `f64` range.
pub fn log_mean_exp(logs: &[f64]) -> (f64, f64) {
    let n = logs.len() as f64;
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, f64::NAN);
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let m = w.iter().sum::<f64>() / n;
    let var = if logs.len() > 1 {
        w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (top + m.ln(), (var / n).sqrt() / m)
}

/// Number of leading steps `i = 1, 2, …` whose relative SE stays within
/// [`MAX_REL_SE`] and whose mean is positive.
pub fn reliable_steps(log_q: &[f64], rel_se: &[f64]) -> usize {
    (1..log_q.len())
        .take_while(|&i| log_q[i].is_finite() && rel_se[i] <= MAX_REL_SE)
        .count()
}

/// Least-squares slope through the origin of `log_q[i] − log_q[0]` on
/// `i = 1..=k`, with the RMS residual.
pub fn fit_through_origin(log_q: &[f64], k: usize) -> (f64, f64) {
    if log_q[0] == f64::NEG_INFINITY || log_q[1..=k].contains(&f64::NEG_INFINITY) {
        return (f64::NEG_INFINITY, 0.0);
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in 1..=k {
        let x = i as f64;
        sxy += x * (log_q[i] - log_q[0]);
        sxx += x * x;
    }
    let slope = sxy / sxx;
    let rss: f64 = (1..=k)
        .map(|i| (log_q[i] - log_q[0] - slope * i as f64).powi(2))
        .sum();
    (slope, (rss / k as f64).sqrt())
}

/// Fitted per-step log factor of a geometric decay or growth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometricFit {
    pub log_factor: f64,
    pub residual: f64,
    /// Steps `1..=steps_used` entered the fit.
    pub steps_used: usize,
    /// Bootstrap 95% interval of `log_factor`.
    pub ci: (f64, f64),
}

/// Fits `q_i ≈ q_0 η^i` to an ensemble statistic and bootstraps it.
///
/// `stat(indices)` returns `(ln q_i, relative SE of q_i)` for the ensemble
/// made of the given path indices (with repetition). The fit window is
/// chosen once on the full ensemble and reused for every resample.
pub fn bootstrap_geometric<S>(paths: usize, stat: S, seed: u64) -> Result<GeometricFit>
where
    S: Fn(&[usize]) -> (Vec<f64>, Vec<f64>) + Sync,
{
    let all: Vec<usize> = (0..paths).collect();
    let (log_q, rel_se) = stat(&all);
    if log_q.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: log_q.len(),
        });
    }
    if log_q[0] == f64::NEG_INFINITY {
        return Ok(GeometricFit {
            log_factor: f64::NEG_INFINITY,
            residual: 0.0,
            steps_used: 0,
            ci: (f64::NEG_INFINITY, f64::NEG_INFINITY),
        });
    }
    let k = reliable_steps(&log_q, &rel_se).max(1);
    let (log_factor, residual) = fit_through_origin(&log_q, k);
    let mut boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, b, 0xB007]));
            let idx: Vec<usize> = (0..paths).map(|_| rng.random_range(0..paths)).collect();
            fit_through_origin(&stat(&idx).0, k).0
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    Ok(GeometricFit {
        log_factor,
        residual,
        steps_used: k,
        ci: (percentile(&boot, 0.025), percentile(&boot, 0.975)),
    })
}

/// Linear-interpolated percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Time average of a sampled signal over the last `frac` of its span,
/// using the trapezoid rule.
pub fn tail_average(times: &[f64], values: &[f64], frac: f64) -> Result<f64> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: times.len().min(values.len()),
        });
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::InvalidArgument(format!("tail fraction must lie in (0, 1], got {frac}")));
    }
    let end = times[times.len() - 1];
    let start = end - frac * (end - times[0]);
    let k0 = times.partition_point(|t| *t < start).min(times.len() - 2);
    let (mut area, mut span) = (0.0, 0.0);
    for k in k0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        area += 0.5 * dt * (values[k] + values[k + 1]);
        span += dt;
    }
    Ok(area / span)
}
