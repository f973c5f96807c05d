//! Exponential rates: tail-window finite-time Lyapunov exponents and the
//! mean-square geometric rate of an ensemble.

use crate::error::{Error, Result};
use crate::propagate::Trajectory;

use super::stats::{bootstrap_geometric, log_mean_exp, sample_mean, MIN_SAMPLES};

/// Fitted exponential rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RateEstimate {
    /// Per step or per unit time, matching the abscissa of the fit.
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the fit.
    pub residual: f64,
    /// `(first, last)` abscissa used.
    pub window: (f64, f64),
    pub samples: usize,
    /// Largest running rate `(ln‖δz(t)‖ − ln‖δz(t_0)‖)/(t − t_0)` in the window.
    pub max_running_rate: f64,
    /// 95% interval of `slope`, when one was computed.
    pub ci: Option<(f64, f64)>,
}

impl RateEstimate {
    /// `e^{slope}`, the per-step factor.
    pub fn factor(&self) -> f64 {
        self.slope.exp()
    }

    pub fn factor_ci(&self) -> Option<(f64, f64)> {
        self.ci.map(|(a, b)| (a.exp(), b.exp()))
    }

    fn minus_infinity(window: (f64, f64), samples: usize) -> Self {
        Self {
            slope: f64::NEG_INFINITY,
            intercept: f64::NEG_INFINITY,
            residual: 0.0,
            window,
            samples,
            max_running_rate: f64::NEG_INFINITY,
            ci: Some((f64::NEG_INFINITY, f64::NEG_INFINITY)),
        }
    }
}

/// Least-squares slope of `ln‖δz‖` against time over the last `q` of the
/// horizon. A zero norm in the window makes the slope `−∞`.
pub fn finite_time_lyapunov(traj: &Trajectory, q: f64) -> Result<RateEstimate> {
    let logs = traj
        .log_dz_norms()
        .ok_or_else(|| Error::InvalidArgument("trajectory has no displacement norms".into()))?;
    log_rate(traj.times(), logs, q)
}

/// [`finite_time_lyapunov`] on raw `(t, ln‖δz‖)` samples.
pub fn log_rate(times: &[f64], logs: &[f64], q: f64) -> Result<RateEstimate> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!("tail fraction must lie in (0, 1], got {q}")));
    }
    if times.len() != logs.len() || times.is_empty() {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: 0,
        });
    }
    if logs.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::NonFinite("log displacement norm".into()));
    }
    let (t0, t_end) = (times[0], times[times.len() - 1]);
    let start = t_end - q * (t_end - t0);
    let k0 = times.partition_point(|t| *t < start);
    let (tw, lw) = (&times[k0..], &logs[k0..]);
    if tw.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: tw.len(),
        });
    }
    let window = (tw[0], tw[tw.len() - 1]);
    if lw.contains(&f64::NEG_INFINITY) {
        return Ok(RateEstimate::minus_infinity(window, tw.len()));
    }
    let n = tw.len() as f64;
    let tm = tw.iter().sum::<f64>() / n;
    let lm = lw.iter().sum::<f64>() / n;
    let sxx: f64 = tw.iter().map(|t| (t - tm).powi(2)).sum();
    let sxy: f64 = tw.iter().zip(lw).map(|(t, l)| (t - tm) * (l - lm)).sum();
    let slope = sxy / sxx;
    let intercept = lm - slope * tm;
    let rss: f64 = tw
        .iter()
        .zip(lw)
        .map(|(t, l)| (l - intercept - slope * t).powi(2))
        .sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    let max_running_rate = if logs[0] == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        tw.iter()
            .zip(lw)
            .filter(|(t, _)| **t > t0)
            .map(|(t, l)| (l - logs[0]) / (t - t0))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(RateEstimate {
        slope,
        intercept,
        residual: (rss / n).sqrt(),
        window,
        samples: tw.len(),
        max_running_rate,
        ci: Some((slope - 1.959964 * se, slope + 1.959964 * se)),
    })
}

/// Fits `E‖δz_i‖² ≈ ‖δz_0‖² η^i` to an ensemble given as per-path
/// `ln‖δz_i‖²` series of equal length; the returned slope is `ln η̂`.
///
/// The fit runs through the origin over the leading steps whose Monte Carlo
/// mean has relative SE ≤ 0.1, and is bootstrapped over paths.
pub fn ms_rate_fit(log_sq_norms: &[Vec<f64>], seed: u64) -> Result<RateEstimate> {
    let p = log_sq_norms.len();
    if p < 100 {
        return Err(Error::InsufficientSamples { needed: 100, got: p });
    }
    let steps = log_sq_norms[0].len();
    if log_sq_norms.iter().any(|s| s.len() != steps) {
        return Err(Error::InvalidArgument("ensemble series have unequal lengths".into()));
    }
    let stat = |idx: &[usize]| -> (Vec<f64>, Vec<f64>) {
        let mut col = vec![0.0; idx.len()];
        (0..steps)
            .map(|i| {
                for (c, &j) in col.iter_mut().zip(idx) {
                    *c = log_sq_norms[j][i];
                }
                log_mean_exp(&col)
            })
            .unzip()
    };
    let fit = bootstrap_geometric(p, stat, seed)?;
    let window = (1.0, fit.steps_used as f64);
    if fit.log_factor == f64::NEG_INFINITY {
        return Ok(RateEstimate::minus_infinity(window, p));
    }
    Ok(RateEstimate {
        slope: fit.log_factor,
        intercept: 0.0,
        residual: fit.residual,
        window,
        samples: p,
        max_running_rate: fit.log_factor,
        ci: Some(fit.ci),
    })
}

/// [`ms_rate_fit`] on trajectories carrying displacement norms.
pub fn ms_rate_fit_trajectories(trajs: &[Trajectory], seed: u64) -> Result<RateEstimate> {
    let series = trajs
        .iter()
        .map(|t| {
            t.log_dz_norms()
                .map(|l| l.iter().map(|v| 2.0 * v).collect())
                .ok_or_else(|| Error::InvalidArgument("trajectory has no displacement norms".into()))
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    ms_rate_fit(&series, seed)
}

/// Fits `‖E δ_i‖ ≈ ‖δ_0‖ η^i` where `displacements[p][i]` is the vector
/// `δ_i` of path `p`; the returned slope is `ln η̂`. Same windowing and
/// bootstrap as [`ms_rate_fit`].
pub fn mean_decay_fit(displacements: &[Vec<Vec<f64>>], seed: u64) -> Result<RateEstimate> {
    let p = displacements.len();
    if p < 100 {
        return Err(Error::InsufficientSamples { needed: 100, got: p });
    }
    let steps = displacements[0].len();
    let n = displacements[0].first().map_or(0, Vec::len);
    if displacements.iter().any(|s| s.len() != steps || s.iter().any(|d| d.len() != n)) {
        return Err(Error::InvalidArgument("ensemble series have unequal shapes".into()));
    }
    let stat = |idx: &[usize]| -> (Vec<f64>, Vec<f64>) {
        let m = idx.len() as f64;
        let mut col = vec![0.0; idx.len()];
        (0..steps)
            .map(|i| {
                let (mut norm2, mut se2) = (0.0, 0.0);
                #[allow(clippy::needless_range_loop)]
                for j in 0..n {
                    for (c, &k) in col.iter_mut().zip(idx) {
                        *c = displacements[k][i][j];
                    }
                    let mean = sample_mean(&col);
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
                    norm2 += mean * mean;
                    se2 += var / m;
                }
                let norm = norm2.sqrt();
                let rel = if norm > 0.0 { se2.sqrt() / norm } else { f64::INFINITY };
                (norm.ln(), rel)
            })
            .unzip()
    };
    let fit = bootstrap_geometric(p, stat, seed)?;
    let window = (1.0, fit.steps_used as f64);
    if fit.log_factor == f64::NEG_INFINITY {
        return Ok(RateEstimate::minus_infinity(window, p));
    }
    Ok(RateEstimate {
        slope: fit.log_factor,
        intercept: 0.0,
        residual: fit.residual,
        window,
        samples: p,
        max_running_rate: fit.log_factor,
        ci: Some(fit.ci),
    })
}
