//! Time stepping: discrete iteration, jump-aligned fixed-step RK4, joint
//! propagation of `(x, δz)`, paired trajectories and the envelope sequence.
//!
//! `δz` is carried as a unit direction plus an accumulated log-norm and is
//! renormalized after every step. The variational recursion is linear in
//! `δz`, so this is exact up to rounding, and it keeps long contracting runs
//! (norms like `e^{-10^4}`) representable. An exactly zero `δz` has log-norm
//! `−∞` and stays there.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::noise::{derive_seed, NoisePath, Partition};
use crate::output::fmt_float;
use crate::spectral::{self, norm};
use crate::system::{jacobian_or_fd, ContinuousSystem, DiscreteSystem, Dynamics, Metric, StateVector};

/// Sampled solution of one path, with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    log_dz_norms: Option<Vec<f64>>,
    pub seed: u64,
    pub path_index: u64,
}

impl Trajectory {
    fn new(dim: usize, seed: u64, path_index: u64, with_dz: bool) -> Self {
        Self {
            dim,
            times: Vec::new(),
            states: Vec::new(),
            log_dz_norms: with_dz.then(Vec::new),
            seed,
            path_index,
        }
    }

    fn push(&mut self, t: f64, x: &[f64], log_dz: f64) {
        self.times.push(t);
        self.states.extend_from_slice(x);
        if let Some(l) = &mut self.log_dz_norms {
            l.push(log_dz);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Sample times (step indices for discrete runs).
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// `ln ‖δz‖` at each sample; `−∞` where `δz = 0`.
    pub fn log_dz_norms(&self) -> Option<&[f64]> {
        self.log_dz_norms.as_deref()
    }

    /// `‖δz‖` at each sample; may underflow to 0 on long contracting runs.
    pub fn dz_norms(&self) -> Option<Vec<f64>> {
        self.log_dz_norms
            .as_ref()
            .map(|l| l.iter().map(|v| v.exp()).collect())
    }

    /// CSV with header `t,x1..xn[,dz_norm]`, keeping every `stride`-th row
    /// and the last one.
    pub fn write_csv<W: Write>(&self, w: &mut W, stride: usize) -> io::Result<()> {
        let stride = stride.max(1);
        let mut header = String::from("t");
        for k in 1..=self.dim {
            header.push_str(&format!(",x{k}"));
        }
        if self.log_dz_norms.is_some() {
            header.push_str(",dz_norm");
        }
        writeln!(w, "{header}")?;
        let last = self.len().saturating_sub(1);
        for k in (0..self.len()).filter(|&k| k % stride == 0 || k == last) {
            let mut row = fmt_float(self.times[k]);
            for v in self.state(k) {
                row.push(',');
                row.push_str(&fmt_float(*v));
            }
            if let Some(l) = &self.log_dz_norms {
                row.push(',');
                row.push_str(&fmt_float(l[k].exp()));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Unit vector in a direction drawn from `(seed, path_index)`.
pub fn default_dz0(n: usize, seed: u64, path_index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, path_index, 0xD2_D2]));
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = norm(&v);
        if r > 1e-8 {
            return v.into_iter().map(|a| a / r).collect();
        }
    }
}

/// Unit direction and log-norm of a displacement.
fn split_dz(dz: &[f64]) -> Result<(Vec<f64>, f64)> {
    if dz.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial displacement".into()));
    }
    let r = norm(dz);
    if r == 0.0 {
        Ok((vec![0.0; dz.len()], f64::NEG_INFINITY))
    } else {
        Ok((dz.iter().map(|v| v / r).collect(), r.ln()))
    }
}

/// Rescales `u` to unit length and returns the log of its previous norm.
fn renormalize(u: &mut [f64]) -> f64 {
    let r = norm(u);
    if r > 0.0 && r.is_finite() {
        u.iter_mut().for_each(|v| *v /= r);
    } else if r == 0.0 {
        u.iter_mut().for_each(|v| *v = 0.0);
    }
    r.ln()
}

fn check_dims(sys: &dyn Dynamics, x0: &[f64], path: &NoisePath) -> Result<()> {
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: x0.len(),
        });
    }
    if path.dim() != sys.noise_dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.noise_dim(),
            got: path.dim(),
        });
    }
    Ok(())
}

fn diverged(step: u64, time: f64, path: &NoisePath) -> Error {
    Error::Diverged {
        step,
        time,
        seed: path.seed(),
        path_index: path.path_index(),
    }
}

/// `x_{i+1} = f(x_i, i, ξ_i)`.
pub fn step_discrete(
    sys: &DiscreteSystem,
    x: &StateVector,
    i: u64,
    path: &NoisePath,
) -> Result<StateVector> {
    if !path.is_discrete() {
        return Err(Error::WrongPathKind { expected: "discrete" });
    }
    check_dims(sys.dynamics(), x, path)?;
    let xi = path.cell_value(i);
    let mut out = vec![0.0; x.dim()];
    sys.eval(x, i as f64, &xi, &mut out);
    StateVector::new(out).map_err(|_| diverged(i, i as f64, path))
}

/// Output of [`propagate_variational_discrete`].
#[derive(Clone, Debug)]
pub struct DiscreteRun {
    pub trajectory: Trajectory,
    /// `ln σ_{f_i}` for every step, evaluated at `(x_i, i, ξ_i)`.
    pub log_sigma: Vec<f64>,
    /// `ln(‖δz_{i+1}‖ / ‖δz_i‖)` for every step.
    pub log_growth: Vec<f64>,
}

impl DiscreteRun {
    /// Steps where `‖δz_{i+1}‖ > σ_{f_i} ‖δz_i‖ (1 + rel_tol)`.
    pub fn proof_inequality_violations(&self, rel_tol: f64) -> usize {
        let slack = rel_tol.ln_1p();
        self.log_growth
            .iter()
            .zip(&self.log_sigma)
            .filter(|(g, s)| **g > **s + slack)
            .count()
    }
}

/// Iterates `x` and `δz_{i+1} = F_i δz_i` for `steps` steps, saving every
/// `save_stride`-th step and the last.
pub fn propagate_variational_discrete(
    sys: &DiscreteSystem,
    metric: &Metric,
    x0: &StateVector,
    dz0: &[f64],
    steps: u64,
    path: &NoisePath,
    save_stride: usize,
) -> Result<DiscreteRun> {
    if !path.is_discrete() {
        return Err(Error::WrongPathKind { expected: "discrete" });
    }
    check_dims(sys.dynamics(), x0, path)?;
    let n = x0.dim();
    if dz0.len() != n || metric.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if dz0.len() != n { dz0.len() } else { metric.dim() },
        });
    }
    let stride = save_stride.max(1) as u64;
    let (mut u, mut log_dz) = split_dz(dz0)?;
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut xi = vec![0.0; path.dim()];
    let mut jac = Matrix::zeros(n);
    let mut v = vec![0.0; n];
    let mut traj = Trajectory::new(n, path.seed(), path.path_index(), true);
    let mut log_sigma = Vec::with_capacity(steps as usize);
    let mut log_growth = Vec::with_capacity(steps as usize);
    traj.push(0.0, &x, log_dz);
    for i in 0..steps {
        let t = i as f64;
        path.cell_value_into(i, &mut xi);
        sys.eval(&x, t, &xi, &mut next);
        if next.iter().any(|a| !a.is_finite()) {
            return Err(diverged(i, t, path));
        }
        jacobian_or_fd(sys.dynamics(), &x, t, &xi, &mut jac)
            .map_err(|_| diverged(i, t, path))?;
        let f = if metric.is_identity() {
            jac.clone()
        } else {
            spectral::generalized_jacobian_discrete(&jac, &metric.theta(t), &metric.theta(t + 1.0))?
        };
        log_sigma.push(spectral::largest_singular_value(&f).ln());
        f.mul_vec(&u, &mut v);
        let g = renormalize(&mut v);
        if g.is_nan() || g == f64::INFINITY {
            return Err(diverged(i, t, path));
        }
        std::mem::swap(&mut u, &mut v);
        log_growth.push(g);
        log_dz += g;
        std::mem::swap(&mut x, &mut next);
        if (i + 1) % stride == 0 || i + 1 == steps {
            traj.push(t + 1.0, &x, log_dz);
        }
    }
    Ok(DiscreteRun {
        trajectory: traj,
        log_sigma,
        log_growth,
    })
}

/// Output of the pair propagators.
#[derive(Clone, Debug)]
pub struct PairRun {
    pub a: Trajectory,
    pub b: Trajectory,
    /// `‖x^a − x^b‖` at each saved time.
    pub separation: Vec<f64>,
}

impl PairRun {
    fn from_trajectories(a: Trajectory, b: Trajectory) -> Self {
        let separation = (0..a.len())
            .map(|k| {
                a.state(k)
                    .iter()
                    .zip(b.state(k))
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        Self { a, b, separation }
    }

    pub fn times(&self) -> &[f64] {
        self.a.times()
    }
}

/// Iterates two initial conditions; both use `path_a` unless `path_b` is given.
pub fn propagate_pair_discrete(
    sys: &DiscreteSystem,
    xa: &StateVector,
    xb: &StateVector,
    steps: u64,
    path_a: &NoisePath,
    path_b: Option<&NoisePath>,
    save_stride: usize,
) -> Result<PairRun> {
    let path_b = path_b.unwrap_or(path_a);
    for p in [path_a, path_b] {
        if !p.is_discrete() {
            return Err(Error::WrongPathKind { expected: "discrete" });
        }
    }
    check_dims(sys.dynamics(), xa, path_a)?;
    check_dims(sys.dynamics(), xb, path_b)?;
    let stride = save_stride.max(1) as u64;
    let run = |x0: &StateVector, path: &NoisePath| -> Result<Trajectory> {
        let mut traj = Trajectory::new(x0.dim(), path.seed(), path.path_index(), false);
        let mut x = x0.to_vec();
        let mut next = vec![0.0; x.len()];
        let mut xi = vec![0.0; path.dim()];
        traj.push(0.0, &x, 0.0);
        for i in 0..steps {
            path.cell_value_into(i, &mut xi);
            sys.eval(&x, i as f64, &xi, &mut next);
            if next.iter().any(|a| !a.is_finite()) {
                return Err(diverged(i, i as f64, path));
            }
            std::mem::swap(&mut x, &mut next);
            if (i + 1) % stride == 0 || i + 1 == steps {
                traj.push((i + 1) as f64, &x, 0.0);
            }
        }
        Ok(traj)
    };
    Ok(PairRun::from_trajectories(run(xa, path_a)?, run(xb, path_b)?))
}

/// A run of `substeps` equal RK4 steps over `[t0, t1]` containing no noise
/// jump in its interior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub substeps: usize,
}

impl Segment {
    /// Start of substep `k`; `step_start(substeps)` is exactly `t1`.
    pub fn step_start(&self, k: usize) -> f64 {
        if k >= self.substeps {
            self.t1
        } else {
            self.t0 + (self.t1 - self.t0) * (k as f64 / self.substeps as f64)
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.t0 + self.t1)
    }
}

/// Fixed-step grid on `[0, T]` refined so every jump time is a grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct StepGrid {
    pub segments: Vec<Segment>,
}

impl StepGrid {
    /// Splits `[0, horizon]` at `jumps` (any order, duplicates allowed) and
    /// each piece into `ceil(len / h)` equal steps.
    pub fn aligned(jumps: &[f64], horizon: f64, h: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
        }
        let mut cuts: Vec<f64> = jumps
            .iter()
            .copied()
            .filter(|&b| b > 0.0 && b < horizon)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.insert(0, 0.0);
        cuts.push(horizon);
        let segments = cuts
            .windows(2)
            .map(|w| Segment {
                t0: w[0],
                t1: w[1],
                substeps: ((w[1] - w[0]) / h).ceil().max(1.0) as usize,
            })
            .collect();
        Ok(Self { segments })
    }

    pub fn step_count(&self) -> usize {
        self.segments.iter().map(|s| s.substeps).sum()
    }

    /// Every grid time, starting at 0 and ending at the horizon.
    pub fn points(&self) -> Vec<f64> {
        let mut pts = vec![0.0];
        for s in &self.segments {
            pts.extend((1..=s.substeps).map(|k| s.step_start(k)));
        }
        pts
    }

    /// True if some step has `b` strictly inside it.
    pub fn straddles(&self, b: f64) -> bool {
        self.points().windows(2).any(|w| w[0] < b && b < w[1])
    }
}

/// Default base step `min(Δ/50, 1e-2)`, with Δ the shortest noise cell
/// that meets `[0, horizon)`.
pub fn default_step(part: &Partition, horizon: f64) -> Result<f64> {
    let last = part.cell_index(horizon.max(0.0))?;
    let shortest = (0..=last)
        .map(|n| part.cell_len(n))
        .fold(f64::INFINITY, f64::min);
    Ok((shortest / 50.0).min(1e-2))
}

/// Which grid points a continuous run records.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SaveGrid {
    /// Every `k`-th RK4 step, plus the first and last points.
    Stride(usize),
    /// Segment ends: every noise jump inside the horizon and the horizon.
    CellBoundaries,
}

/// Settings for [`integrate_continuous`] and [`propagate_pair_continuous`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuousOptions {
    /// Base step; `None` picks [`default_step`].
    pub h: Option<f64>,
    pub save: SaveGrid,
    /// Record `∫ λ_f dt` per segment (costs an eigenvalue per RK4 stage).
    pub track_lambda: bool,
    /// With `track_lambda` and `δz`, also keep one [`StepCheck`] per step.
    pub record_steps: bool,
}

impl Default for ContinuousOptions {
    fn default() -> Self {
        Self {
            h: None,
            save: SaveGrid::CellBoundaries,
            track_lambda: false,
            record_steps: false,
        }
    }
}

/// Growth of `‖δz‖` over one RK4 step next to `∫ λ_f dt` over the step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepCheck {
    pub t: f64,
    pub h: f64,
    pub log_growth: f64,
    pub lambda_integral: f64,
}

/// Output of [`integrate_continuous`].
#[derive(Clone, Debug)]
pub struct ContinuousRun {
    pub trajectory: Trajectory,
    pub grid: StepGrid,
    /// `∫ λ_f dt` over each segment, when tracked.
    pub segment_lambda_integrals: Option<Vec<f64>>,
    pub step_checks: Option<Vec<StepCheck>>,
}

impl ContinuousRun {
    /// Steps where the growth of `‖δz‖` exceeds `exp(∫λ_f)·(1 + c·h²)`.
    pub fn differential_inequality_violations(&self, c: f64) -> Option<usize> {
        self.step_checks.as_ref().map(|checks| {
            checks
                .iter()
                .filter(|s| s.log_growth > s.lambda_integral + (c * s.h * s.h).ln_1p())
                .count()
        })
    }
}

struct Rk4Work {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn new(n: usize) -> Self {
        Self {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }
}

/// Classical RK4 step. `f(t, y, dy, stage)` is called for stages 0..4.
fn rk4_step<F>(f: &mut F, t: f64, h: f64, y: &mut [f64], w: &mut Rk4Work) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64], usize) -> Result<()>,
{
    let [k1, k2, k3, k4] = &mut w.k;
    let tmp = &mut w.tmp;
    f(t, y, k1, 0)?;
    for j in 0..y.len() {
        tmp[j] = y[j] + 0.5 * h * k1[j];
    }
    f(t + 0.5 * h, tmp, k2, 1)?;
    for j in 0..y.len() {
        tmp[j] = y[j] + 0.5 * h * k2[j];
    }
    f(t + 0.5 * h, tmp, k3, 2)?;
    for j in 0..y.len() {
        tmp[j] = y[j] + h * k3[j];
    }
    f(t + h, tmp, k4, 3)?;
    for j in 0..y.len() {
        y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    Ok(())
}

const RK4_WEIGHTS: [f64; 4] = [1.0, 2.0, 2.0, 1.0];

fn jump_times(path: &NoisePath, horizon: f64) -> Result<Vec<f64>> {
    let part = path.partition().ok_or(Error::WrongPathKind {
        expected: "coarse-grain",
    })?;
    part.boundaries_between(0.0, horizon)
}

fn resolve_step(paths: &[&NoisePath], horizon: f64, h: Option<f64>) -> Result<f64> {
    if let Some(h) = h {
        return Ok(h);
    }
    let mut h = f64::INFINITY;
    for p in paths {
        let part = p.partition().ok_or(Error::WrongPathKind {
            expected: "coarse-grain",
        })?;
        h = h.min(default_step(part, horizon)?);
    }
    Ok(h)
}

/// Integrates `ẋ = f(x, t, ξ_t)` with RK4 on a jump-aligned grid, together
/// with `δż = F δz` when `dz0` is given (`F` the generalized Jacobian).
pub fn integrate_continuous(
    sys: &ContinuousSystem,
    metric: &Metric,
    x0: &StateVector,
    dz0: Option<&[f64]>,
    horizon: f64,
    path: &NoisePath,
    opts: ContinuousOptions,
) -> Result<ContinuousRun> {
    check_dims(sys.dynamics(), x0, path)?;
    let n = x0.dim();
    if metric.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: metric.dim(),
        });
    }
    let variational = dz0.is_some();
    if variational && !metric.has_derivative() {
        return Err(Error::MissingMetricDerivative);
    }
    let jumps = jump_times(path, horizon)?;
    let grid = StepGrid::aligned(&jumps, horizon, resolve_step(&[path], horizon, opts.h)?)?;
    let track = opts.track_lambda;

    let mut y = x0.to_vec();
    let mut log_dz = 0.0;
    if let Some(dz) = dz0 {
        if dz.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: dz.len(),
            });
        }
        let (u, l) = split_dz(dz)?;
        y.extend(u);
        log_dz = l;
    }
    let mut traj = Trajectory::new(n, path.seed(), path.path_index(), variational);
    traj.push(0.0, &y[..n], log_dz);

    let mut xi = vec![0.0; path.dim()];
    let mut jac = Matrix::zeros(n);
    let mut stage_lambda = [0.0f64; 4];
    let mut seg_lambda = track.then(Vec::new);
    let mut checks = (track && variational && opts.record_steps).then(Vec::new);
    let mut work = Rk4Work::new(y.len());
    let mut step_no: u64 = 0;

    for seg in &grid.segments {
        path.cell_value_into(path.cell_index(seg.midpoint())?, &mut xi);
        let mut lambda_acc = 0.0;
        for k in 0..seg.substeps {
            let t = seg.step_start(k);
            let h = seg.step_start(k + 1) - t;
            let mut rhs = |t: f64, y: &[f64], dy: &mut [f64], stage: usize| -> Result<()> {
                let (x, u) = y.split_at(n);
                sys.eval(x, t, &xi, &mut dy[..n]);
                if !variational && !track {
                    return Ok(());
                }
                jacobian_or_fd(sys.dynamics(), x, t, &xi, &mut jac)?;
                let general;
                let f = if metric.is_identity() {
                    &jac
                } else {
                    general = spectral::generalized_jacobian_continuous(
                        &jac,
                        &metric.theta(t),
                        &metric.theta_dot(t)?,
                    )?;
                    &general
                };
                if variational {
                    f.mul_vec(u, &mut dy[n..]);
                }
                if track {
                    stage_lambda[stage] = spectral::lambda_max_symmetric(f);
                }
                Ok(())
            };
            rk4_step(&mut rhs, t, h, &mut y, &mut work).map_err(|_| diverged(step_no, t, path))?;
            step_no += 1;
            let t_end = seg.step_start(k + 1);
            if y[..n].iter().any(|v| !v.is_finite()) {
                return Err(diverged(step_no, t_end, path));
            }
            let mut g = 0.0;
            if variational {
                g = renormalize(&mut y[n..]);
                if g.is_nan() || g == f64::INFINITY {
                    return Err(diverged(step_no, t_end, path));
                }
                log_dz += g;
            }
            if track {
                let li = h / 6.0
                    * RK4_WEIGHTS
                        .iter()
                        .zip(&stage_lambda)
                        .map(|(w, l)| w * l)
                        .sum::<f64>();
                lambda_acc += li;
                if let Some(c) = &mut checks {
                    c.push(StepCheck {
                        t,
                        h,
                        log_growth: g,
                        lambda_integral: li,
                    });
                }
            }
            let save = match opts.save {
                SaveGrid::Stride(s) => step_no.is_multiple_of(s.max(1) as u64),
                SaveGrid::CellBoundaries => k + 1 == seg.substeps,
            };
            let last = k + 1 == seg.substeps && seg.t1 == horizon;
            if save || last {
                traj.push(t_end, &y[..n], log_dz);
            }
        }
        if let Some(s) = &mut seg_lambda {
            s.push(lambda_acc);
        }
    }
    Ok(ContinuousRun {
        trajectory: traj,
        grid,
        segment_lambda_integrals: seg_lambda,
        step_checks: checks,
    })
}

/// Integrates two initial conditions on one shared grid. Both use `path_a`
/// unless `path_b` is given, in which case the grid is aligned to the jumps
/// of both paths.
pub fn propagate_pair_continuous(
    sys: &ContinuousSystem,
    xa: &StateVector,
    xb: &StateVector,
    horizon: f64,
    path_a: &NoisePath,
    path_b: Option<&NoisePath>,
    opts: ContinuousOptions,
) -> Result<PairRun> {
    let pb = path_b.unwrap_or(path_a);
    check_dims(sys.dynamics(), xa, path_a)?;
    check_dims(sys.dynamics(), xb, pb)?;
    let n = xa.dim();
    let mut jumps = jump_times(path_a, horizon)?;
    if path_b.is_some() {
        jumps.extend(jump_times(pb, horizon)?);
    }
    let grid = StepGrid::aligned(&jumps, horizon, resolve_step(&[path_a, pb], horizon, opts.h)?)?;

    let mut y = xa.to_vec();
    y.extend_from_slice(xb);
    let mut ta = Trajectory::new(n, path_a.seed(), path_a.path_index(), false);
    let mut tb = Trajectory::new(n, pb.seed(), pb.path_index(), false);
    ta.push(0.0, &y[..n], 0.0);
    tb.push(0.0, &y[n..], 0.0);
    let mut xi_a = vec![0.0; path_a.dim()];
    let mut xi_b = vec![0.0; pb.dim()];
    let mut work = Rk4Work::new(2 * n);
    let mut step_no: u64 = 0;
    for seg in &grid.segments {
        let mid = seg.midpoint();
        path_a.cell_value_into(path_a.cell_index(mid)?, &mut xi_a);
        pb.cell_value_into(pb.cell_index(mid)?, &mut xi_b);
        for k in 0..seg.substeps {
            let t = seg.step_start(k);
            let h = seg.step_start(k + 1) - t;
            let mut rhs = |t: f64, y: &[f64], dy: &mut [f64], _: usize| -> Result<()> {
                let (dya, dyb) = dy.split_at_mut(n);
                sys.eval(&y[..n], t, &xi_a, dya);
                sys.eval(&y[n..], t, &xi_b, dyb);
                Ok(())
            };
            rk4_step(&mut rhs, t, h, &mut y, &mut work)?;
            step_no += 1;
            let t_end = seg.step_start(k + 1);
            if let Some(bad) = [(0, path_a), (n, pb)]
                .iter()
                .find(|(o, _)| y[*o..*o + n].iter().any(|v| !v.is_finite()))
            {
                return Err(diverged(step_no, t_end, bad.1));
            }
            let save = match opts.save {
                SaveGrid::Stride(s) => step_no.is_multiple_of(s.max(1) as u64),
                SaveGrid::CellBoundaries => k + 1 == seg.substeps,
            };
            if save || (k + 1 == seg.substeps && seg.t1 == horizon) {
                ta.push(t_end, &y[..n], 0.0);
                tb.push(t_end, &y[n..], 0.0);
            }
        }
    }
    Ok(PairRun::from_trajectories(ta, tb))
}

/// Dominating recursion `Z_{n+1} = e^{I_n} Z_n`, kept in linear and log form.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeSequence {
    pub integrals: Vec<f64>,
    pub z: Vec<f64>,
    pub log_z: Vec<f64>,
}

/// Builds `Z` from per-cell integrals `I_n` and `Z_0`. With `λ_f`-integrals
/// this is the discrete envelope of a continuous run.
pub fn envelope_sequence(integrals: &[f64], z0: f64) -> Result<EnvelopeSequence> {
    if !(z0 >= 0.0 && z0.is_finite()) {
        return Err(Error::InvalidArgument(format!("Z_0 must be finite and non-negative, got {z0}")));
    }
    if integrals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cell integral".into()));
    }
    let mut z = Vec::with_capacity(integrals.len() + 1);
    let mut log_z = Vec::with_capacity(integrals.len() + 1);
    z.push(z0);
    log_z.push(z0.ln());
    for (k, i) in integrals.iter().enumerate() {
        z.push(i.exp() * z[k]);
        log_z.push(log_z[k] + i);
    }
    Ok(EnvelopeSequence {
        integrals: integrals.to_vec(),
        z,
        log_z,
    })
}
