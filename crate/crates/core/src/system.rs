//! State, system and metric types shared by every other module.
//!
//! Systems are pure functions of `(state, time-or-step, noise value)`; the
//! noise enters by value only. A [`DiscreteSystem`] is iterated as
//! `x_{i+1} = f(x_i, i, ξ_i)` and a [`ContinuousSystem`] is integrated as
//! `ẋ = f(x, t, ξ_t)`. Both wrap the same [`Dynamics`] trait so Jacobian
//! handling is shared.
//!
//! Metrics are restricted to state-independent transforms `Θ(t)` with
//! `M(t) = Θ(t)ᵀΘ(t) ⪰ λ_M·I`.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::spectral::{self, default_fd_step};

/// A point in ℝⁿ with n ≥ 1 and finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("state dimension must be at least 1".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state vector".into()));
        }
        Ok(Self(entries))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for StateVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

/// Dynamics shared by discrete maps and vector fields.
///
/// `t` is the step index (as `f64`) for discrete maps and physical time for
/// vector fields. Implementations must be pure.
pub trait Dynamics: Send + Sync {
    fn dim(&self) -> usize;

    /// Number of noise components the map reads.
    fn noise_dim(&self) -> usize {
        0
    }

    fn eval(&self, x: &[f64], t: f64, noise: &[f64], out: &mut [f64]);

    /// Writes the analytic Jacobian ∂f/∂x into `out` and returns `true`, or
    /// returns `false` when no analytic form is available.
    fn jacobian(&self, _x: &[f64], _t: f64, _noise: &[f64], _out: &mut Matrix) -> bool {
        false
    }
}

type EvalFn = dyn Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync;
type JacFn = dyn Fn(&[f64], f64, &[f64], &mut Matrix) + Send + Sync;

/// Closure-backed [`Dynamics`].
pub struct FnDynamics {
    dim: usize,
    noise_dim: usize,
    f: Box<EvalFn>,
    jac: Option<Box<JacFn>>,
}

impl FnDynamics {
    pub fn new<F>(dim: usize, noise_dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            dim,
            noise_dim,
            f: Box::new(f),
            jac: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&[f64], f64, &[f64], &mut Matrix) + Send + Sync + 'static,
    {
        self.jac = Some(Box::new(jac));
        self
    }
}

impl Dynamics for FnDynamics {
    fn dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn eval(&self, x: &[f64], t: f64, noise: &[f64], out: &mut [f64]) {
        (self.f)(x, t, noise, out)
    }

    fn jacobian(&self, x: &[f64], t: f64, noise: &[f64], out: &mut Matrix) -> bool {
        match &self.jac {
            Some(j) => {
                j(x, t, noise, out);
                true
            }
            None => false,
        }
    }
}

macro_rules! system_wrapper {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone)]
        pub struct $name(Arc<dyn Dynamics>);

        impl $name {
            pub fn new<D: Dynamics + 'static>(dynamics: D) -> Result<Self> {
                if dynamics.dim() == 0 {
                    return Err(Error::InvalidArgument("system dimension must be at least 1".into()));
                }
                Ok(Self(Arc::new(dynamics)))
            }

            pub fn from_fn<F>(dim: usize, noise_dim: usize, f: F) -> Result<Self>
            where
                F: Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync + 'static,
            {
                Self::new(FnDynamics::new(dim, noise_dim, f))
            }

            pub fn dynamics(&self) -> &dyn Dynamics {
                self.0.as_ref()
            }

            pub fn dim(&self) -> usize {
                self.0.dim()
            }

            pub fn noise_dim(&self) -> usize {
                self.0.noise_dim()
            }

            pub fn eval(&self, x: &[f64], t: f64, noise: &[f64], out: &mut [f64]) {
                self.0.eval(x, t, noise, out)
            }

            pub fn has_analytic_jacobian(&self) -> bool {
                let n = self.dim();
                let mut scratch = Matrix::zeros(n);
                self.0.jacobian(&vec![0.0; n], 0.0, &vec![0.0; self.noise_dim()], &mut scratch)
            }

            /// Analytic Jacobian when available, central differences otherwise.
            pub fn jacobian(&self, x: &[f64], t: f64, noise: &[f64], out: &mut Matrix) -> Result<()> {
                jacobian_or_fd(self.0.as_ref(), x, t, noise, out)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.debug_struct(stringify!($name))
                    .field("dim", &self.dim())
                    .field("noise_dim", &self.noise_dim())
                    .finish()
            }
        }
    };
}

system_wrapper!(
    /// Random map `x_{i+1} = f(x_i, i, ξ_i)`.
    DiscreteSystem
);
system_wrapper!(
    /// Random differential system `ẋ = f(x, t, ξ_t)`.
    ContinuousSystem
);

pub(crate) fn jacobian_or_fd(
    d: &dyn Dynamics,
    x: &[f64],
    t: f64,
    noise: &[f64],
    out: &mut Matrix,
) -> Result<()> {
    if out.dim() != x.len() {
        *out = Matrix::zeros(x.len());
    }
    if d.jacobian(x, t, noise, out) {
        return Ok(());
    }
    *out = spectral::jacobian_fd(|y, o| d.eval(y, t, noise, o), x, default_fd_step(x))?;
    Ok(())
}

type ThetaFn = dyn Fn(f64) -> Matrix + Send + Sync;

/// Time-dependent coordinate transform `Θ(t)` with `ΘᵀΘ ⪰ λ_M·I`.
#[derive(Clone)]
pub struct Metric {
    dim: usize,
    theta: Arc<ThetaFn>,
    theta_dot: Option<Arc<ThetaFn>>,
    lower_bound: f64,
    identity: bool,
}

/// Identity metric `Θ = I`, `λ_M = 1`, `Θ̇ = 0`.
pub fn make_metric_identity(n: usize) -> Result<Metric> {
    Metric::identity(n)
}

impl Metric {
    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("metric dimension must be at least 1".into()));
        }
        Ok(Self {
            dim: n,
            theta: Arc::new(move |_| Matrix::identity(n)),
            theta_dot: Some(Arc::new(move |_| Matrix::zeros(n))),
            lower_bound: 1.0,
            identity: true,
        })
    }

    /// Constant transform; `λ_M` is the smallest eigenvalue of `ΘᵀΘ`.
    pub fn constant(theta: Matrix) -> Result<Self> {
        let n = theta.dim();
        if n == 0 {
            return Err(Error::InvalidArgument("metric dimension must be at least 1".into()));
        }
        theta.inverse()?;
        let lower_bound = spectral::lambda_min_symmetric(&theta.gram());
        if !(lower_bound > 0.0) {
            return Err(Error::InvalidArgument("constant metric is not positive definite".into()));
        }
        let identity = theta.is_identity();
        let th = theta.clone();
        Ok(Self {
            dim: n,
            theta: Arc::new(move |_| th.clone()),
            theta_dot: Some(Arc::new(move |_| Matrix::zeros(n))),
            lower_bound,
            identity,
        })
    }

    pub fn new<T>(dim: usize, theta: T, lower_bound: f64) -> Result<Self>
    where
        T: Fn(f64) -> Matrix + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::InvalidArgument("metric dimension must be at least 1".into()));
        }
        if !(lower_bound > 0.0 && lower_bound.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "metric lower bound must be positive, got {lower_bound}"
            )));
        }
        Ok(Self {
            dim,
            theta: Arc::new(theta),
            theta_dot: None,
            lower_bound,
            identity: false,
        })
    }

    pub fn with_derivative<D>(mut self, theta_dot: D) -> Self
    where
        D: Fn(f64) -> Matrix + Send + Sync + 'static,
    {
        self.theta_dot = Some(Arc::new(theta_dot));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn theta(&self, t: f64) -> Matrix {
        (self.theta)(t)
    }

    pub fn theta_dot(&self, t: f64) -> Result<Matrix> {
        self.theta_dot
            .as_ref()
            .map(|d| d(t))
            .ok_or(Error::MissingMetricDerivative)
    }

    pub fn has_derivative(&self) -> bool {
        self.theta_dot.is_some()
    }

    /// Samples `min eig(Θ(t)ᵀΘ(t))` and invertibility at the given times.
    pub fn check_uniformly_positive(&self, times: &[f64]) -> MetricCheck {
        let mut check = MetricCheck {
            min_eigenvalue: f64::INFINITY,
            worst_time: f64::NAN,
            singular_at: Vec::new(),
            holds: true,
        };
        for &t in times {
            let th = self.theta(t);
            if th.dim() != self.dim || th.inverse().is_err() {
                check.singular_at.push(t);
                continue;
            }
            let m = spectral::lambda_min_symmetric(&th.gram());
            if m < check.min_eigenvalue {
                check.min_eigenvalue = m;
                check.worst_time = t;
            }
        }
        check.holds =
            check.singular_at.is_empty() && check.min_eigenvalue >= self.lower_bound - 1e-9;
        check
    }
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Metric")
            .field("dim", &self.dim)
            .field("lower_bound", &self.lower_bound)
            .field("identity", &self.identity)
            .field("has_derivative", &self.theta_dot.is_some())
            .finish()
    }
}

/// Result of [`Metric::check_uniformly_positive`].
#[derive(Clone, Debug)]
pub struct MetricCheck {
    pub min_eigenvalue: f64,
    pub worst_time: f64,
    pub singular_at: Vec<f64>,
    pub holds: bool,
}

/// Trajectory point together with its virtual displacement in Θ-coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalState {
    pub x: StateVector,
    pub dz: Vec<f64>,
}

impl VariationalState {
    pub fn new(x: StateVector, dz: Vec<f64>) -> Result<Self> {
        if dz.len() != x.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                got: dz.len(),
            });
        }
        if dz.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("virtual displacement".into()));
        }
        Ok(Self { x, dz })
    }

    pub fn dz_norm(&self) -> f64 {
        spectral::norm(&self.dz)
    }

    /// `ln ‖dz‖`, with `ln 0 = −∞`.
    pub fn log_dz_norm(&self) -> f64 {
        self.dz_norm().ln()
    }
}

/// One probe point for [`validate_system`].
#[derive(Clone, Debug)]
pub struct Probe {
    pub x: Vec<f64>,
    pub t: f64,
    pub noise: Vec<f64>,
}

impl Probe {
    pub fn new(x: Vec<f64>, t: f64, noise: Vec<f64>) -> Self {
        Self { x, t, noise }
    }
}

/// Outcome of [`validate_system`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    /// `max |J_analytic − J_fd| / max(1, |J_analytic|)` entrywise over probes;
    /// `None` when the system has no analytic Jacobian.
    pub max_rel_discrepancy: Option<f64>,
    /// Indices of probes where `f` (or its Jacobian) was not finite.
    pub non_finite_probes: Vec<usize>,
    pub probes: usize,
}

impl ValidationReport {
    pub fn fd_only(&self) -> bool {
        self.max_rel_discrepancy.is_none()
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.non_finite_probes.is_empty() && self.max_rel_discrepancy.is_none_or(|d| d <= tol)
    }
}

/// Compares analytic and finite-difference Jacobians over `probes` and flags
/// non-finite outputs. Non-finite values are reported, not returned as errors.
pub fn validate_system(sys: &dyn Dynamics, probes: &[Probe]) -> Result<ValidationReport> {
    if probes.is_empty() {
        return Err(Error::InvalidArgument("at least one probe is required".into()));
    }
    let n = sys.dim();
    let mut report = ValidationReport {
        max_rel_discrepancy: None,
        non_finite_probes: Vec::new(),
        probes: probes.len(),
    };
    let mut out = vec![0.0; n];
    let mut analytic = Matrix::zeros(n);
    for (k, p) in probes.iter().enumerate() {
        if p.x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.x.len(),
            });
        }
        if p.x.iter().chain(&p.noise).chain(std::iter::once(&p.t)).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("probe {k}")));
        }
        sys.eval(&p.x, p.t, &p.noise, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            report.non_finite_probes.push(k);
            continue;
        }
        let has_analytic = sys.jacobian(&p.x, p.t, &p.noise, &mut analytic);
        if !has_analytic {
            continue;
        }
        let fd = match spectral::jacobian_fd(
            |y, o| sys.eval(y, p.t, &p.noise, o),
            &p.x,
            default_fd_step(&p.x),
        ) {
            Ok(fd) => fd,
            Err(_) => {
                report.non_finite_probes.push(k);
                continue;
            }
        };
        if !analytic.is_finite() {
            report.non_finite_probes.push(k);
            continue;
        }
        let disc = analytic
            .as_slice()
            .iter()
            .zip(fd.as_slice())
            .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
            .fold(0.0, f64::max);
        let cur = report.max_rel_discrepancy.get_or_insert(0.0);
        *cur = cur.max(disc);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_vector_rejects_nan_and_empty() {
        assert!(StateVector::new(vec![]).is_err());
        assert!(StateVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(StateVector::new(vec![f64::INFINITY]).is_err());
        assert_eq!(StateVector::new(vec![1.0, 2.0]).unwrap().dim(), 2);
    }

    #[test]
    fn identity_metric() {
        let m = make_metric_identity(2).unwrap();
        assert_eq!(m.theta(3.5), Matrix::identity(2));
        let m1 = make_metric_identity(1).unwrap();
        assert_eq!(m1.theta(5.0), Matrix::scalar(1.0));
        assert_eq!(m1.lower_bound(), 1.0);
        let m3 = make_metric_identity(3).unwrap();
        assert_eq!(m3.theta_dot(2.0).unwrap(), Matrix::zeros(3));
        assert!(make_metric_identity(0).is_err());
    }

    #[test]
    fn metric_positive_definiteness_sampled() {
        let m = Metric::new(
            2,
            |t: f64| Matrix::diag(&[2.0 + t.sin(), 1.5]),
            1.0,
        )
        .unwrap();
        let times: Vec<f64> = (0..1000).map(|k| k as f64 * 0.01).collect();
        let check = m.check_uniformly_positive(&times);
        assert!(check.holds, "{check:?}");
        assert!(check.min_eigenvalue >= 1.0 - 1e-9);

        let bad = Metric::new(1, |t: f64| Matrix::scalar(1.0 - t), 0.5).unwrap();
        let check = bad.check_uniformly_positive(&times);
        assert!(!check.holds);
        assert!(!check.singular_at.is_empty());
    }

    #[test]
    fn constant_metric_lower_bound() {
        let m = Metric::constant(Matrix::diag(&[2.0, 0.5])).unwrap();
        assert!((m.lower_bound() - 0.25).abs() < 1e-14);
        assert!(Metric::constant(Matrix::zeros(2)).is_err());
        assert!(Metric::new(2, |_| Matrix::identity(2), 0.0).is_err());
        assert!(Metric::new(2, |_| Matrix::identity(2), f64::NAN).is_err());
    }

    #[test]
    fn missing_derivative_reported() {
        let m = Metric::new(1, |_| Matrix::scalar(1.0), 1.0).unwrap();
        assert_eq!(m.theta_dot(0.0), Err(Error::MissingMetricDerivative));
    }

    #[test]
    fn variational_state_dims() {
        let x = StateVector::new(vec![1.0, 2.0]).unwrap();
        assert!(VariationalState::new(x.clone(), vec![1.0]).is_err());
        let v = VariationalState::new(x, vec![0.0, 0.0]).unwrap();
        assert_eq!(v.log_dz_norm(), f64::NEG_INFINITY);
    }

    #[test]
    fn validate_linear_with_analytic_jacobian() {
        let sys = FnDynamics::new(2, 0, |x, _, _, o| {
            o[0] = 2.0 * x[0] - x[1];
            o[1] = 0.5 * x[1];
        })
        .with_jacobian(|_, _, _, j| {
            *j = Matrix::from_rows(&[[2.0, -1.0], [0.0, 0.5]]).unwrap();
        });
        let probes = vec![
            Probe::new(vec![1.0, 2.0], 0.0, vec![]),
            Probe::new(vec![-3.0, 0.1], 1.0, vec![]),
        ];
        let r = validate_system(&sys, &probes).unwrap();
        assert!(r.max_rel_discrepancy.unwrap() <= 1e-6);
        assert!(r.passes(1e-5));
    }

    #[test]
    fn validate_without_jacobian_is_fd_only() {
        let sys = FnDynamics::new(1, 0, |x, _, _, o| o[0] = x[0]);
        let r = validate_system(&sys, &[Probe::new(vec![1.0], 0.0, vec![])]).unwrap();
        assert!(r.fd_only());
    }

    #[test]
    fn fd_of_square_matches_derivative() {
        // FD Jacobian at x=3 of x² is 6; a wrong analytic Jacobian is flagged.
        let sys = FnDynamics::new(1, 0, |x, _, _, o| o[0] = x[0] * x[0])
            .with_jacobian(|x, _, _, j| j[(0, 0)] = 2.0 * x[0]);
        let r = validate_system(&sys, &[Probe::new(vec![3.0], 0.0, vec![])]).unwrap();
        assert!(r.max_rel_discrepancy.unwrap() < 1e-6 / 6.0);
        let wrong = FnDynamics::new(1, 0, |x, _, _, o| o[0] = x[0] * x[0])
            .with_jacobian(|x, _, _, j| j[(0, 0)] = x[0]);
        let r = validate_system(&wrong, &[Probe::new(vec![3.0], 0.0, vec![])]).unwrap();
        assert!(!r.passes(1e-5));
    }

    #[test]
    fn non_finite_output_is_reported_not_thrown() {
        let sys = FnDynamics::new(1, 0, |x, _, _, o| o[0] = 1.0 / x[0]);
        let r = validate_system(
            &sys,
            &[Probe::new(vec![0.0], 0.0, vec![]), Probe::new(vec![1.0], 0.0, vec![])],
        )
        .unwrap();
        assert_eq!(r.non_finite_probes, vec![0]);
        assert!(validate_system(&sys, &[]).is_err());
        assert!(validate_system(&sys, &[Probe::new(vec![f64::NAN], 0.0, vec![])]).is_err());
    }
}
