//! Ready-made systems: scalar random gains, a coarse-grain linear field, a
//! randomized-difference gradient scheme, coupled Van der Pol oscillators
//! and contracting fields with additive noise.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::noise::{Distribution, NoiseKind, NoisePath, NoiseSpec};
use crate::spectral;
use crate::system::{jacobian_or_fd, ContinuousSystem, DiscreteSystem, Dynamics, FnDynamics};

/// `x_{i+1} = a_i x_i` with `a_i` the (scalar) noise value.
pub fn linear_random_gain() -> DiscreteSystem {
    DiscreteSystem::new(
        FnDynamics::new(1, 1, |x, _, a, o| o[0] = a[0] * x[0]).with_jacobian(|_, _, a, j| j[(0, 0)] = a[0]),
    )
    .expect("dimension is 1")
}

/// Closed-form `(E log|a|, E a²)` for a gain law: the almost-sure and the
/// mean-square per-step rates.
pub fn gain_rates(dist: &Distribution) -> (f64, f64) {
    (dist.mean_log_abs(), dist.second_moment())
}

/// `ẋ = γ_t x` with `γ_t` the (scalar) noise value.
pub fn linear_coarse_grain() -> ContinuousSystem {
    ContinuousSystem::new(
        FnDynamics::new(1, 1, |x, _, g, o| o[0] = g[0] * x[0]).with_jacobian(|_, _, g, j| j[(0, 0)] = g[0]),
    )
    .expect("dimension is 1")
}

/// Smooth objective with gradient and Hessian access.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, p: &[f64]) -> f64;
    fn gradient(&self, p: &[f64], out: &mut [f64]);
    fn hessian(&self, p: &[f64]) -> Matrix;
}

/// `E(P) = ½ (P − c)ᵀ H (P − c)` with symmetric `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub h: Matrix,
    pub center: Vec<f64>,
}

impl Quadratic {
    pub fn new(h: Matrix, center: Vec<f64>) -> Result<Self> {
        if center.len() != h.dim() {
            return Err(Error::DimensionMismatch {
                expected: h.dim(),
                got: center.len(),
            });
        }
        if h.sub(&h.transpose()).max_abs() > 1e-12 * h.max_abs().max(1.0) {
            return Err(Error::InvalidArgument("Hessian must be symmetric".into()));
        }
        if !h.is_finite() || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quadratic objective".into()));
        }
        Ok(Self { h, center })
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.h.dim()
    }

    fn value(&self, p: &[f64]) -> f64 {
        let d: Vec<f64> = p.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let mut hd = vec![0.0; d.len()];
        self.h.mul_vec(&d, &mut hd);
        0.5 * d.iter().zip(&hd).map(|(a, b)| a * b).sum::<f64>()
    }

    fn gradient(&self, p: &[f64], out: &mut [f64]) {
        let d: Vec<f64> = p.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        self.h.mul_vec(&d, out);
    }

    fn hessian(&self, _p: &[f64]) -> Matrix {
        self.h.clone()
    }
}

/// `P_{n+1} = P_n − μ (E(P_n + Π_n) − E(P_n)) Π_n`.
struct GradientScheme {
    objective: Arc<dyn Objective>,
    mu: f64,
}

impl Dynamics for GradientScheme {
    fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn noise_dim(&self) -> usize {
        self.objective.dim()
    }

    fn eval(&self, p: &[f64], _t: f64, pi: &[f64], out: &mut [f64]) {
        let shifted: Vec<f64> = p.iter().zip(pi).map(|(a, b)| a + b).collect();
        let diff = self.objective.value(&shifted) - self.objective.value(p);
        for ((o, a), b) in out.iter_mut().zip(p).zip(pi) {
            *o = a - self.mu * diff * b;
        }
    }

    /// `I − μ Π (∇E(P+Π) − ∇E(P))ᵀ`, which is `I − μ Π Πᵀ H` for a quadratic.
    fn jacobian(&self, p: &[f64], _t: f64, pi: &[f64], out: &mut Matrix) -> bool {
        let n = p.len();
        let shifted: Vec<f64> = p.iter().zip(pi).map(|(a, b)| a + b).collect();
        let (mut g1, mut g0) = (vec![0.0; n], vec![0.0; n]);
        self.objective.gradient(&shifted, &mut g1);
        self.objective.gradient(p, &mut g0);
        *out = Matrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] -= self.mu * pi[i] * (g1[j] - g0[j]);
            }
        }
        true
    }
}

/// Convergence conditions of the randomized gradient scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct SgConditionReport {
    pub hessian_positive_definite: bool,
    pub min_hessian_eigenvalue: f64,
    pub max_hessian_eigenvalue: f64,
    /// `μσ²`.
    pub gain: f64,
    /// `max_k |1 − μσ² λ_k(H)|` over probes: the contraction factor of the
    /// expected update.
    pub factor: f64,
    /// `μσ² λ_max(H) < 1`, the stricter sufficient bound.
    pub gain_bound_holds: bool,
    /// Largest measured `|corr(Π_i, Π_j)|`, `i ≠ j`.
    pub max_cross_correlation: f64,
    /// Hessian positive definite and `factor < 1`.
    pub condition: bool,
}

/// Builds the scheme and its condition report.
///
/// `pi` gives one law per component. The components must have zero mean
/// and a common second moment `σ²`; their cross-correlations are measured on
/// 10⁴ draws of `NoisePath(seed, 0)` and must stay below 0.05.
pub fn stochastic_gradient(
    objective: Arc<dyn Objective>,
    mu: f64,
    pi: &[Distribution],
    probes: &[Vec<f64>],
    seed: u64,
) -> Result<(DiscreteSystem, SgConditionReport)> {
    let n = objective.dim();
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("step gain must be positive, got {mu}")));
    }
    if pi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: pi.len(),
        });
    }
    for d in pi {
        d.validate()?;
        if d.mean().abs() > 1e-12 * d.hard_bound().max(1.0) {
            return Err(Error::NonZeroMean(d.mean()));
        }
    }
    let sigma2 = pi[0].second_moment();
    if !(sigma2 > 0.0) || pi.iter().any(|d| (d.second_moment() - sigma2).abs() > 1e-12 * sigma2) {
        return Err(Error::InvalidArgument(
            "perturbation components need a common positive second moment".into(),
        ));
    }
    let max_cross_correlation = cross_correlation(pi, seed);
    if max_cross_correlation >= 0.05 {
        return Err(Error::InvalidArgument(format!(
            "perturbation components are correlated (|rho| = {max_cross_correlation})"
        )));
    }
    if probes.is_empty() {
        return Err(Error::InvalidArgument("at least one Hessian probe is required".into()));
    }
    let gain = mu * sigma2;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in probes {
        if p.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
        if !objective.value(p).is_finite() {
            return Err(Error::NonFinite(format!("objective at {p:?}")));
        }
        let h = objective.hessian(p);
        lo = lo.min(spectral::lambda_min_symmetric(&h));
        hi = hi.max(spectral::lambda_max_symmetric(&h));
    }
    let factor = (1.0 - gain * lo).abs().max((1.0 - gain * hi).abs());
    let report = SgConditionReport {
        hessian_positive_definite: lo > 0.0,
        min_hessian_eigenvalue: lo,
        max_hessian_eigenvalue: hi,
        gain,
        factor,
        gain_bound_holds: gain * hi < 1.0,
        max_cross_correlation,
        condition: lo > 0.0 && factor < 1.0,
    };
    let sys = DiscreteSystem::new(GradientScheme { objective, mu })?;
    Ok((sys, report))
}

fn cross_correlation(pi: &[Distribution], seed: u64) -> f64 {
    let n = pi.len();
    if n < 2 {
        return 0.0;
    }
    let spec = Arc::new(NoiseSpec {
        components: pi.to_vec(),
        kind: NoiseKind::Discrete,
    });
    let path = NoisePath::new(spec, seed, 0);
    let draws: Vec<Vec<f64>> = (0..10_000).map(|i| path.cell_value(i)).collect();
    let m = draws.len() as f64;
    let mean: Vec<f64> = (0..n).map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / m).collect();
    let cov = |a: usize, b: usize| draws.iter().map(|d| (d[a] - mean[a]) * (d[b] - mean[b])).sum::<f64>() / m;
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            let r = cov(a, b) / (cov(a, a) * cov(b, b)).sqrt();
            worst = worst.max(if r.is_finite() { r.abs() } else { 0.0 });
        }
    }
    worst
}

/// Two Van der Pol oscillators coupled through their velocities, with
/// random coupling gains `ε₁(t), ε₂(t)` (noise components 0 and 1). State
/// is `(x₁, ẋ₁, x₂, ẋ₂)`.
pub fn vdp_coupled(alpha: f64, w: f64) -> Result<ContinuousSystem> {
    for (name, v) in [("alpha", alpha), ("w", w)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    let w2 = w * w;
    let f = move |s: &[f64], _: f64, e: &[f64], o: &mut [f64]| {
        let (x1, v1, x2, v2) = (s[0], s[1], s[2], s[3]);
        o[0] = v1;
        o[1] = -alpha * (x1 * x1 - 1.0) * v1 - w2 * x1 + alpha * e[0] * (v2 - v1);
        o[2] = v2;
        o[3] = -alpha * (x2 * x2 - 1.0) * v2 - w2 * x2 + alpha * e[1] * (v1 - v2);
    };
    let jac = move |s: &[f64], _: f64, e: &[f64], j: &mut Matrix| {
        let (x1, v1, x2, v2) = (s[0], s[1], s[2], s[3]);
        j.fill(0.0);
        j[(0, 1)] = 1.0;
        j[(1, 0)] = -2.0 * alpha * x1 * v1 - w2;
        j[(1, 1)] = -alpha * (x1 * x1 - 1.0) - alpha * e[0];
        j[(1, 3)] = alpha * e[0];
        j[(2, 3)] = 1.0;
        j[(3, 1)] = alpha * e[1];
        j[(3, 2)] = -2.0 * alpha * x2 * v2 - w2;
        j[(3, 3)] = -alpha * (x2 * x2 - 1.0) - alpha * e[1];
    };
    ContinuousSystem::new(FnDynamics::new(4, 2, f).with_jacobian(jac))
}

/// Synchronization is predicted when `E ε₁ + E ε₂ > 1`.
pub fn vdp_sync_predicted(eps1: &Distribution, eps2: &Distribution) -> bool {
    eps1.mean() + eps2.mean() > 1.0
}

/// `‖(x₁, ẋ₁) − (x₂, ẋ₂)‖` of a coupled state.
pub fn vdp_separation(s: &[f64]) -> f64 {
    (s[0] - s[2]).hypot(s[1] - s[3])
}

/// How the contraction rate of the drift is established.
#[derive(Clone, Debug, PartialEq)]
pub enum LambdaCertificate {
    /// A known bound `λ_f^max < 0`.
    Given(f64),
    /// Probe `λ_max((J+Jᵀ)/2)` on a grid of `per_axis` points per axis over
    /// the box `[lo, hi]`.
    Probe { lo: Vec<f64>, hi: Vec<f64>, per_axis: usize },
}

/// A contracting drift with additive bounded zero-mean noise.
#[derive(Clone, Debug)]
pub struct AdditiveNoiseSystem {
    pub system: ContinuousSystem,
    pub noise: Arc<NoiseSpec>,
    /// Largest symmetric-part eigenvalue of the drift Jacobian.
    pub lambda_max: f64,
    /// Bound on `E‖ξ_t‖`: exact `E|ξ|` in one dimension, `sqrt(Σ_j E ξ_j²)`
    /// otherwise.
    pub sigma: f64,
}

struct Additive {
    drift: Arc<dyn Dynamics>,
}

impl Dynamics for Additive {
    fn dim(&self) -> usize {
        self.drift.dim()
    }

    fn noise_dim(&self) -> usize {
        self.drift.dim()
    }

    fn eval(&self, x: &[f64], t: f64, xi: &[f64], out: &mut [f64]) {
        self.drift.eval(x, t, &[], out);
        for (o, e) in out.iter_mut().zip(xi) {
            *o += e;
        }
    }

    fn jacobian(&self, x: &[f64], t: f64, _xi: &[f64], out: &mut Matrix) -> bool {
        self.drift.jacobian(x, t, &[], out)
    }
}

/// Builds `ẋ = f(x, t) + ξ_t` after certifying `λ_f^max < 0` for `drift`
/// (a noise-free field) and checking the noise is zero-mean and bounded.
pub fn additive_noise_system(
    drift: Arc<dyn Dynamics>,
    noise: Arc<NoiseSpec>,
    certificate: LambdaCertificate,
) -> Result<AdditiveNoiseSystem> {
    let n = drift.dim();
    if drift.noise_dim() != 0 {
        return Err(Error::InvalidArgument("drift must not read noise".into()));
    }
    if noise.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: noise.dim(),
        });
    }
    if !matches!(noise.kind, NoiseKind::CoarseGrain(_)) {
        return Err(Error::WrongPathKind {
            expected: "coarse-grain",
        });
    }
    for d in &noise.components {
        if d.mean().abs() > 1e-12 * d.hard_bound().max(1.0) {
            return Err(Error::NonZeroMean(d.mean()));
        }
    }
    let lambda_max = match certificate {
        LambdaCertificate::Given(l) => {
            if !(l < 0.0) {
                return Err(Error::NotContracting {
                    lambda: l,
                    point: vec![],
                });
            }
            l
        }
        LambdaCertificate::Probe { lo, hi, per_axis } => probe_lambda(drift.as_ref(), &lo, &hi, per_axis)?,
    };
    let sigma = if n == 1 {
        noise.components[0].mean_abs()
    } else {
        noise.components.iter().map(Distribution::second_moment).sum::<f64>().sqrt()
    };
    let system = ContinuousSystem::new(Additive { drift })?;
    Ok(AdditiveNoiseSystem {
        system,
        noise,
        lambda_max,
        sigma,
    })
}

fn probe_lambda(drift: &dyn Dynamics, lo: &[f64], hi: &[f64], per_axis: usize) -> Result<f64> {
    let n = drift.dim();
    if lo.len() != n || hi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: lo.len().min(hi.len()),
        });
    }
    if per_axis < 2 || lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
        return Err(Error::InvalidArgument("probe box needs lo <= hi and at least 2 points per axis".into()));
    }
    let total = (per_axis as u64).checked_pow(n as u32).filter(|t| *t <= 10_000_000).ok_or_else(|| {
        Error::InvalidArgument("probe grid too large".into())
    })?;
    let mut jac = Matrix::zeros(n);
    let mut x = vec![0.0; n];
    let mut worst = f64::NEG_INFINITY;
    for k in 0..total {
        let mut r = k;
        for j in 0..n {
            let idx = (r % per_axis as u64) as f64;
            r /= per_axis as u64;
            x[j] = lo[j] + (hi[j] - lo[j]) * idx / (per_axis - 1) as f64;
        }
        jacobian_or_fd(drift, &x, 0.0, &[], &mut jac)?;
        let l = spectral::lambda_max_symmetric(&jac);
        if !(l < 0.0) {
            return Err(Error::NotContracting {
                lambda: l,
                point: x.clone(),
            });
        }
        worst = worst.max(l);
    }
    Ok(worst)
}

/// `ẋ = −k x` in `n` dimensions.
pub fn linear_drift(n: usize, k: f64) -> Arc<dyn Dynamics> {
    Arc::new(
        FnDynamics::new(n, 0, move |x, _, _, o| {
            for (o, x) in o.iter_mut().zip(x) {
                *o = -k * x;
            }
        })
        .with_jacobian(move |x, _, _, j| *j = Matrix::identity(x.len()).scaled(-k)),
    )
}

/// Componentwise `ẋ = −x − x³`.
pub fn cubic_drift(n: usize) -> Arc<dyn Dynamics> {
    Arc::new(
        FnDynamics::new(n, 0, |x, _, _, o| {
            for (o, x) in o.iter_mut().zip(x) {
                *o = -x - x * x * x;
            }
        })
        .with_jacobian(|x, _, _, j| {
            let d: Vec<f64> = x.iter().map(|v| -1.0 - 3.0 * v * v).collect();
            *j = Matrix::diag(&d);
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::Partition;
    use crate::propagate::{integrate_continuous, ContinuousOptions};
    use crate::system::{validate_system, Metric, Probe, StateVector};

    fn rademacher(n: usize) -> Vec<Distribution> {
        vec![Distribution::two_point(-1.0, 1.0, 0.5).unwrap(); n]
    }

    fn probes(n: usize, noise: usize) -> Vec<Probe> {
        (0..5)
            .map(|k| {
                let x = (0..n).map(|j| 0.3 * k as f64 - 0.5 + 0.1 * j as f64).collect();
                let e = (0..noise).map(|j| 0.7 - 0.2 * (k + j) as f64).collect();
                Probe::new(x, 0.5 * k as f64, e)
            })
            .collect()
    }

    #[test]
    fn gain_rates_closed_forms() {
        let (l, m) = gain_rates(&Distribution::two_point(0.5, 1.5, 0.5).unwrap());
        assert!((l - (-0.143_841_036)).abs() < 1e-8);
        assert_eq!(m, 1.25);
        let (l, m) = gain_rates(&Distribution::constant(0.3).unwrap());
        assert_eq!(l, 0.3f64.ln());
        assert!((m - 0.09).abs() < 1e-16);
    }

    #[test]
    fn uniform_gain_log_rate_matches_quadrature() {
        // Midpoint rule on ln x over [0.2, 0.8].
        let m = 200_000;
        let h = 0.6 / m as f64;
        let quad = (0..m).map(|k| (0.2 + (k as f64 + 0.5) * h).ln()).sum::<f64>() / m as f64;
        let (l, m2) = gain_rates(&Distribution::uniform(0.2, 0.8).unwrap());
        assert!((l - quad).abs() < 1e-9);
        assert!(l < 0.0 && m2 < 1.0);
    }

    #[test]
    fn scenario_jacobians_match_fd() {
        let sys = linear_random_gain();
        assert!(validate_system(sys.dynamics(), &probes(1, 1)).unwrap().passes(1e-5));
        let sys = linear_coarse_grain();
        assert!(validate_system(sys.dynamics(), &probes(1, 1)).unwrap().passes(1e-5));
        let vdp = vdp_coupled(1.3, 0.8).unwrap();
        let r = validate_system(vdp.dynamics(), &probes(4, 2)).unwrap();
        assert!(r.passes(1e-5), "{r:?}");
        let q = Quadratic::new(Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap(), vec![0.1, -0.2]).unwrap();
        let (sg, _) = stochastic_gradient(Arc::new(q), 0.1, &rademacher(2), &[vec![0.0, 0.0]], 1).unwrap();
        assert!(validate_system(sg.dynamics(), &probes(2, 2)).unwrap().passes(1e-5));
        let noise = Arc::new(
            NoiseSpec::new(
                vec![Distribution::uniform(-1.0, 1.0).unwrap()],
                NoiseKind::CoarseGrain(Partition::uniform(0.1).unwrap()),
            )
            .unwrap(),
        );
        let add = additive_noise_system(cubic_drift(1), noise, LambdaCertificate::Given(-1.0)).unwrap();
        assert!(validate_system(add.system.dynamics(), &probes(1, 1)).unwrap().passes(1e-5));
    }

    #[test]
    fn sg_one_step_by_hand() {
        // E = ½‖P‖², P = (1, 2), Π = (1, −1), μ = 0.5:
        // E(P+Π) − E(P) = ½(4 + 1) − ½(1 + 4) = 0, so P is unchanged.
        // With Π = (1, 1): ½(4 + 9) − 2.5 = 4, P' = (1, 2) − 0.5·4·(1, 1) = (−1, 0).
        let q = Quadratic::new(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        let (sg, _) = stochastic_gradient(Arc::new(q), 0.5, &rademacher(2), &[vec![0.0, 0.0]], 1).unwrap();
        let mut out = [0.0; 2];
        sg.eval(&[1.0, 2.0], 0.0, &[1.0, -1.0], &mut out);
        assert_eq!(out, [1.0, 2.0]);
        sg.eval(&[1.0, 2.0], 0.0, &[1.0, 1.0], &mut out);
        assert_eq!(out, [-1.0, 0.0]);
    }

    #[test]
    fn sg_condition_reports() {
        let id = Arc::new(Quadratic::new(Matrix::identity(2), vec![0.0; 2]).unwrap());
        let (_, r) = stochastic_gradient(id.clone(), 0.5, &rademacher(2), &[vec![0.0; 2]], 2).unwrap();
        assert!((r.factor - 0.5).abs() < 1e-15);
        assert!(r.condition && r.gain_bound_holds);
        assert!(r.max_cross_correlation < 0.05);

        let (_, r) = stochastic_gradient(id.clone(), 1.5, &rademacher(2), &[vec![0.0; 2]], 2).unwrap();
        assert!(!r.gain_bound_holds);

        let h = Arc::new(Quadratic::new(Matrix::diag(&[1.0, 4.0]), vec![0.0; 2]).unwrap());
        let (_, r) = stochastic_gradient(h.clone(), 0.4, &rademacher(2), &[vec![0.0; 2]], 2).unwrap();
        assert!((r.factor - 0.6).abs() < 1e-12);
        assert!(r.condition);
        let (_, r) = stochastic_gradient(h, 0.6, &rademacher(2), &[vec![0.0; 2]], 2).unwrap();
        assert!((r.factor - 1.4).abs() < 1e-12);
        assert!(!r.condition);

        assert!(stochastic_gradient(id.clone(), 0.0, &rademacher(2), &[vec![0.0; 2]], 2).is_err());
        let biased = vec![Distribution::two_point(0.0, 1.0, 0.5).unwrap(); 2];
        assert!(matches!(
            stochastic_gradient(id, 0.1, &biased, &[vec![0.0; 2]], 2),
            Err(Error::NonZeroMean(_))
        ));
    }

    #[test]
    fn vdp_parameters_and_prediction() {
        assert!(vdp_coupled(0.0, 1.0).is_err());
        assert!(vdp_coupled(1.0, -1.0).is_err());
        let one = Distribution::constant(1.0).unwrap();
        let zero = Distribution::constant(0.0).unwrap();
        let u = Distribution::uniform(0.1, 1.1).unwrap();
        assert!(vdp_sync_predicted(&one, &one));
        assert!(!vdp_sync_predicted(&zero, &zero));
        assert!(vdp_sync_predicted(&u, &u));
    }

    #[test]
    fn vdp_symmetric_start_stays_synchronized() {
        let sys = vdp_coupled(1.0, 1.0).unwrap();
        let spec = Arc::new(
            NoiseSpec::new(
                vec![Distribution::constant(0.4).unwrap(); 2],
                NoiseKind::CoarseGrain(Partition::uniform(0.5).unwrap()),
            )
            .unwrap(),
        );
        let path = NoisePath::new(spec, 0, 0);
        let x0 = StateVector::new(vec![1.2, -0.3, 1.2, -0.3]).unwrap();
        let run = integrate_continuous(
            &sys,
            &Metric::identity(4).unwrap(),
            &x0,
            None,
            20.0,
            &path,
            ContinuousOptions::default(),
        )
        .unwrap();
        for k in 0..run.trajectory.len() {
            assert!(vdp_separation(run.trajectory.state(k)) <= 1e-9);
        }
    }

    #[test]
    fn additive_certificates() {
        let noise = Arc::new(
            NoiseSpec::new(
                vec![Distribution::uniform(-1.0, 1.0).unwrap()],
                NoiseKind::CoarseGrain(Partition::uniform(0.1).unwrap()),
            )
            .unwrap(),
        );
        let a = additive_noise_system(linear_drift(1, 1.0), noise.clone(), LambdaCertificate::Given(-1.0)).unwrap();
        assert_eq!(a.sigma, 0.5);
        assert_eq!(a.lambda_max, -1.0);
        let c = additive_noise_system(
            cubic_drift(1),
            noise.clone(),
            LambdaCertificate::Probe {
                lo: vec![-3.0],
                hi: vec![3.0],
                per_axis: 61,
            },
        )
        .unwrap();
        assert!((c.lambda_max - (-1.0)).abs() < 1e-12);

        let unstable: Arc<dyn Dynamics> = Arc::new(
            FnDynamics::new(1, 0, |x, _, _, o| o[0] = x[0] * x[0] - 1.0).with_jacobian(|x, _, _, j| j[(0, 0)] = 2.0 * x[0]),
        );
        let err = additive_noise_system(
            unstable,
            noise.clone(),
            LambdaCertificate::Probe {
                lo: vec![-1.0],
                hi: vec![1.0],
                per_axis: 5,
            },
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::NotContracting {
                lambda: 0.0,
                point: vec![0.0]
            }
        );
        let biased = Arc::new(
            NoiseSpec::new(
                vec![Distribution::uniform(0.0, 1.0).unwrap()],
                NoiseKind::CoarseGrain(Partition::uniform(0.1).unwrap()),
            )
            .unwrap(),
        );
        assert!(additive_noise_system(linear_drift(1, 1.0), biased, LambdaCertificate::Given(-1.0)).is_err());
    }

    #[test]
    fn additive_zero_noise_is_deterministic_system() {
        let noise = Arc::new(
            NoiseSpec::new(
                vec![Distribution::constant(0.0).unwrap()],
                NoiseKind::CoarseGrain(Partition::uniform(0.1).unwrap()),
            )
            .unwrap(),
        );
        let a = additive_noise_system(linear_drift(1, 1.0), noise.clone(), LambdaCertificate::Given(-1.0)).unwrap();
        assert_eq!(a.sigma, 0.0);
        let path = NoisePath::new(noise, 0, 0);
        let run = integrate_continuous(
            &a.system,
            &Metric::identity(1).unwrap(),
            &StateVector::new(vec![1.0]).unwrap(),
            None,
            1.0,
            &path,
            ContinuousOptions {
                h: Some(1e-3),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((run.trajectory.last_state()[0] - (-1f64).exp()).abs() < 1e-9);
    }
}
