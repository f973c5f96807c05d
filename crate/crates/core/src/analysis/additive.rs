//! Monte Carlo tests for contracting fields driven by bounded zero-mean
//! additive noise: the ensemble mean against the noise-free trajectory, and
//! the expected deviation between two independently forced copies.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::{Distribution, NoisePath, NoiseSpec};
use crate::propagate::{integrate_continuous, propagate_pair_continuous, ContinuousOptions};
use crate::system::{ContinuousSystem, Metric, StateVector};

use super::stats::sample_mean;

/// Ensemble size, master seed and integrator settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleSettings {
    pub paths: usize,
    pub seed: u64,
    pub opts: ContinuousOptions,
}

fn require_zero_mean(noise: &NoiseSpec) -> Result<()> {
    if noise.kind == crate::noise::NoiseKind::Discrete {
        return Err(Error::WrongPathKind {
            expected: "coarse-grain",
        });
    }
    for d in &noise.components {
        let m = d.mean();
        if m.abs() > 1e-12 * d.hard_bound().max(1.0) {
            return Err(Error::NonZeroMean(m));
        }
    }
    Ok(())
}

/// The same time structure with every component fixed at zero.
pub fn silenced(noise: &NoiseSpec) -> NoiseSpec {
    NoiseSpec {
        components: vec![Distribution::Constant(0.0); noise.dim()],
        kind: noise.kind.clone(),
    }
}

/// Output of [`mean_trajectory_test`].
#[derive(Clone, Debug, PartialEq)]
pub struct MeanTrajectoryReport {
    pub times: Vec<f64>,
    /// `‖mean_p x_p(t) − x̂(t)‖`.
    pub discrepancy: Vec<f64>,
    /// `sqrt(Σ_j SE_j²)` of the ensemble mean.
    pub se: Vec<f64>,
    pub max_discrepancy: f64,
    /// Largest `discrepancy / SE` over times with positive SE.
    pub max_ratio: f64,
    pub passes: bool,
}

/// Compares the Monte Carlo mean of `paths` noisy runs with the noise-free
/// run on the same grid. Passes when the discrepancy is within 3 SE at
/// every saved time.
pub fn mean_trajectory_test(
    sys: &ContinuousSystem,
    noise: &Arc<NoiseSpec>,
    x0: &StateVector,
    horizon: f64,
    settings: EnsembleSettings,
) -> Result<MeanTrajectoryReport> {
    require_zero_mean(noise)?;
    if settings.paths < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: settings.paths,
        });
    }
    let n = x0.dim();
    let metric = Metric::identity(n)?;
    let quiet = NoisePath::new(Arc::new(silenced(noise)), settings.seed, 0);
    let reference = integrate_continuous(sys, &metric, x0, None, horizon, &quiet, settings.opts)?.trajectory;
    let runs = (0..settings.paths as u64)
        .into_par_iter()
        .map(|p| {
            let path = NoisePath::new(noise.clone(), settings.seed, p);
            integrate_continuous(sys, &metric, x0, None, horizon, &path, settings.opts).map(|r| r.trajectory)
        })
        .collect::<Result<Vec<_>>>()?;
    let pf = settings.paths as f64;
    let mut report = MeanTrajectoryReport {
        times: reference.times().to_vec(),
        discrepancy: Vec::with_capacity(reference.len()),
        se: Vec::with_capacity(reference.len()),
        max_discrepancy: 0.0,
        max_ratio: 0.0,
        passes: true,
    };
    let mut column = Vec::with_capacity(runs.len());
    for k in 0..reference.len() {
        let (mut d2, mut se2) = (0.0, 0.0);
        for j in 0..n {
            column.clear();
            column.extend(runs.iter().map(|r| r.state(k)[j]));
            let mean = sample_mean(&column);
            let var = runs.iter().map(|r| (r.state(k)[j] - mean).powi(2)).sum::<f64>() / (pf - 1.0);
            d2 += (mean - reference.state(k)[j]).powi(2);
            se2 += var / pf;
        }
        let (d, se) = (d2.sqrt(), se2.sqrt());
        report.max_discrepancy = report.max_discrepancy.max(d);
        if se > 0.0 {
            report.max_ratio = report.max_ratio.max(d / se);
        }
        report.passes &= d <= 3.0 * se + 1e-12;
        report.discrepancy.push(d);
        report.se.push(se);
    }
    Ok(report)
}

/// Output of [`deviation_bound_test`].
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationReport {
    pub times: Vec<f64>,
    /// Monte Carlo `E‖x₁ − x₂‖`.
    pub mean_separation: Vec<f64>,
    pub se: Vec<f64>,
    /// `E‖x₁−x₂‖₀ e^{λt} + (2σ/|λ|)(1 − e^{λt})`.
    pub bound: Vec<f64>,
    /// `2σ/|λ|`.
    pub asymptote: f64,
    /// Largest `mean − bound − 3·SE`; non-positive when the bound holds.
    pub max_excess: f64,
    pub passes: bool,
}

/// Checks the expected deviation bound for two copies of `sys` started at
/// `xa`, `xb` and forced by independent noise paths (indices `2p`, `2p+1`).
pub fn deviation_bound_test(
    sys: &ContinuousSystem,
    noise: &Arc<NoiseSpec>,
    xa: &StateVector,
    xb: &StateVector,
    sigma: f64,
    lambda_max: f64,
    horizon: f64,
    settings: EnsembleSettings,
) -> Result<DeviationReport> {
    require_zero_mean(noise)?;
    if lambda_max >= 0.0 || !lambda_max.is_finite() {
        return Err(Error::NotContracting {
            lambda: lambda_max,
            point: xa.to_vec(),
        });
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise bound must be non-negative, got {sigma}")));
    }
    if settings.paths < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: settings.paths,
        });
    }
    let pairs = (0..settings.paths as u64)
        .into_par_iter()
        .map(|p| {
            let a = NoisePath::new(noise.clone(), settings.seed, 2 * p);
            let b = NoisePath::new(noise.clone(), settings.seed, 2 * p + 1);
            propagate_pair_continuous(sys, xa, xb, horizon, &a, Some(&b), settings.opts).map(|r| (r.a.times().to_vec(), r.separation))
        })
        .collect::<Result<Vec<_>>>()?;
    let times = pairs[0].0.clone();
    if pairs.iter().any(|(t, _)| *t != times) {
        return Err(Error::InvalidArgument("pair runs sampled at different times".into()));
    }
    let pf = settings.paths as f64;
    let asymptote = 2.0 * sigma / lambda_max.abs();
    let mut report = DeviationReport {
        times: times.clone(),
        mean_separation: Vec::new(),
        se: Vec::new(),
        bound: Vec::new(),
        asymptote,
        max_excess: f64::NEG_INFINITY,
        passes: true,
    };
    let sep0 = pairs.iter().map(|(_, s)| s[0]).sum::<f64>() / pf;
    for (k, &t) in times.iter().enumerate() {
        let mean = pairs.iter().map(|(_, s)| s[k]).sum::<f64>() / pf;
        let var = pairs.iter().map(|(_, s)| (s[k] - mean).powi(2)).sum::<f64>() / (pf - 1.0);
        let se = (var / pf).sqrt();
        let decay = (lambda_max * t).exp();
        let bound = sep0 * decay + asymptote * (1.0 - decay);
        let excess = mean - bound - 3.0 * se;
        report.max_excess = report.max_excess.max(excess);
        report.passes &= excess <= 1e-12;
        report.mean_separation.push(mean);
        report.se.push(se);
        report.bound.push(bound);
    }
    Ok(report)
}
