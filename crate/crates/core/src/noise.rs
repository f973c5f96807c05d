//! Seeded stationary noise: iid step sequences and piecewise-constant
//! processes on a time partition.
//!
//! Every value is a pure function of `(seed, path_index, cell, component)`.
//! A cell's components are drawn from one ChaCha8 stream seeded by hashing
//! `(seed, path_index, cell)`, so paths can be evaluated in any order and on
//! any worker.

use std::sync::Arc;

use rand::distr::{Distribution as _, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Scalar law of one noise component.
#[derive(Clone, Debug, PartialEq)]
pub enum Distribution {
    /// Uniform on `[a, b]`; draws lie strictly inside when `a < b`.
    Uniform { a: f64, b: f64 },
    /// `v1` with probability `p`, `v2` otherwise.
    TwoPoint { v1: f64, v2: f64, p: f64 },
    /// `N(mean, stdev²)` clamped to `[mean − clip, mean + clip]`.
    ClippedGaussian { mean: f64, stdev: f64, clip: f64 },
    Constant(f64),
}

impl Distribution {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        Self::Uniform { a, b }.validated()
    }

    pub fn two_point(v1: f64, v2: f64, p: f64) -> Result<Self> {
        Self::TwoPoint { v1, v2, p }.validated()
    }

    pub fn clipped_gaussian(mean: f64, stdev: f64, clip: f64) -> Result<Self> {
        Self::ClippedGaussian { mean, stdev, clip }.validated()
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::Constant(c).validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match *self {
            Self::Uniform { a, b } => {
                if !finite(&[a, b]) {
                    return bad("uniform bounds must be finite".into());
                }
                if a > b {
                    return bad(format!("uniform interval needs a <= b, got [{a}, {b}]"));
                }
            }
            Self::TwoPoint { v1, v2, p } => {
                if !finite(&[v1, v2]) {
                    return bad("two-point values must be finite".into());
                }
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("two-point probability must lie in [0, 1], got {p}"));
                }
            }
            Self::ClippedGaussian { mean, stdev, clip } => {
                if !finite(&[mean, stdev, clip]) {
                    return bad("clipped gaussian parameters must be finite".into());
                }
                if stdev < 0.0 {
                    return bad(format!("standard deviation must be non-negative, got {stdev}"));
                }
                if clip <= 0.0 {
                    return bad(format!("clip bound must be positive, got {clip}"));
                }
            }
            Self::Constant(c) => {
                if !c.is_finite() {
                    return bad("constant noise value must be finite".into());
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { a, b } => {
                if a == b {
                    return a;
                }
                let u: f64 = Open01.sample(rng);
                // Rounding can land on an endpoint for very narrow intervals.
                (a + (b - a) * u).clamp(a, b)
            }
            Self::TwoPoint { v1, v2, p } => {
                let u: f64 = rng.random();
                if u < p {
                    v1
                } else {
                    v2
                }
            }
            Self::ClippedGaussian { mean, stdev, clip } => {
                let z: f64 = StandardNormal.sample(rng);
                (mean + stdev * z).clamp(mean - clip, mean + clip)
            }
            Self::Constant(c) => c,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Uniform { a, b } => 0.5 * (a + b),
            Self::TwoPoint { v1, v2, p } => p * v1 + (1.0 - p) * v2,
            Self::ClippedGaussian { mean, .. } => mean,
            Self::Constant(c) => c,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            Self::Uniform { a, b } => (a * a + a * b + b * b) / 3.0,
            Self::TwoPoint { v1, v2, p } => p * v1 * v1 + (1.0 - p) * v2 * v2,
            Self::ClippedGaussian { mean, stdev, clip } => {
                mean * mean + stdev * stdev * clipped_normal_second_moment(clip_ratio(stdev, clip))
            }
            Self::Constant(c) => c * c,
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.second_moment() - m * m).max(0.0)
    }

    /// `E ln|X|`; `−∞` when `X = 0` has positive probability.
    pub fn mean_log_abs(&self) -> f64 {
        match *self {
            Self::Uniform { a, b } => {
                if a == b {
                    return a.abs().ln();
                }
                // Antiderivative of ln|x| is x ln|x| − x, continuous at 0.
                let g = |x: f64| if x == 0.0 { 0.0 } else { x * x.abs().ln() - x };
                (g(b) - g(a)) / (b - a)
            }
            Self::TwoPoint { v1, v2, p } => weighted(p, v1.abs().ln(), v2.abs().ln()),
            Self::ClippedGaussian { .. } => self.expect_clipped(|x| x.abs().ln()),
            Self::Constant(c) => c.abs().ln(),
        }
    }

    /// `E|X|`.
    pub fn mean_abs(&self) -> f64 {
        match *self {
            Self::Uniform { a, b } => {
                if a >= 0.0 {
                    0.5 * (a + b)
                } else if b <= 0.0 {
                    -0.5 * (a + b)
                } else {
                    (a * a + b * b) / (2.0 * (b - a))
                }
            }
            Self::TwoPoint { v1, v2, p } => weighted(p, v1.abs(), v2.abs()),
            Self::ClippedGaussian { mean: 0.0, stdev, clip } => {
                let k = clip_ratio(stdev, clip);
                if k.is_infinite() {
                    return 0.0;
                }
                let n = std_normal();
                stdev * (2.0 * (n.pdf(0.0) - n.pdf(k)) + 2.0 * k * n.sf(k))
            }
            Self::ClippedGaussian { .. } => self.expect_clipped(f64::abs),
            Self::Constant(c) => c.abs(),
        }
    }

    /// `sup |X|` over the support.
    pub fn hard_bound(&self) -> f64 {
        match *self {
            Self::Uniform { a, b } => a.abs().max(b.abs()),
            Self::TwoPoint { v1, v2, p } => {
                if p == 1.0 {
                    v1.abs()
                } else if p == 0.0 {
                    v2.abs()
                } else {
                    v1.abs().max(v2.abs())
                }
            }
            Self::ClippedGaussian { mean, stdev, clip } => {
                if stdev == 0.0 {
                    mean.abs()
                } else {
                    (mean - clip).abs().max((mean + clip).abs())
                }
            }
            Self::Constant(c) => c.abs(),
        }
    }

    /// Quadrature for `E g(X)` under the clipped Gaussian: Simpson on the
    /// interior plus the two atoms at the clip bounds.
    fn expect_clipped(&self, g: impl Fn(f64) -> f64) -> f64 {
        let Self::ClippedGaussian { mean, stdev, clip } = *self else {
            unreachable!()
        };
        if stdev == 0.0 {
            return g(mean);
        }
        let k = clip_ratio(stdev, clip);
        let n = std_normal();
        let tail = n.sf(k);
        let mut total = tail * (g(mean - clip) + g(mean + clip));
        const M: usize = 20_000;
        let h = 2.0 * k / M as f64;
        let mut acc = 0.0;
        for j in 0..=M {
            let z = -k + j as f64 * h;
            let w = if j == 0 || j == M {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let v = g(mean + stdev * z);
            if v.is_infinite() {
                // Integrable log singularity hit exactly on a node; nudge off it.
                acc += w * g(mean + stdev * (z + 1e-3 * h)) * n.pdf(z);
            } else {
                acc += w * v * n.pdf(z);
            }
        }
        total += acc * h / 3.0;
        total
    }
}

fn weighted(p: f64, a: f64, b: f64) -> f64 {
    // Skip zero-weight branches so a −∞ there does not produce NaN.
    match p {
        1.0 => a,
        0.0 => b,
        p => p * a + (1.0 - p) * b,
    }
}

fn clip_ratio(stdev: f64, clip: f64) -> f64 {
    if stdev == 0.0 {
        f64::INFINITY
    } else {
        clip / stdev
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// `E[clamp(Z, −k, k)²]` for standard normal `Z`.
fn clipped_normal_second_moment(k: f64) -> f64 {
    if k.is_infinite() {
        return 0.0;
    }
    let n = std_normal();
    (1.0 - 2.0 * n.sf(k)) - 2.0 * k * n.pdf(k) + 2.0 * k * k * n.sf(k)
}

/// Cell structure of a piecewise-constant process. Cell `n` is
/// `[t_n, t_{n+1})` with `t_0 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum Partition {
    Uniform { delta: f64 },
    /// Boundaries `t_1 < t_2 < … < t_k`. Past `t_k` the last spacing repeats.
    Explicit(Vec<f64>),
}

impl Partition {
    pub fn uniform(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("cell length must be positive, got {delta}")));
        }
        Ok(Self::Uniform { delta })
    }

    pub fn explicit(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.is_empty() {
            return Err(Error::InvalidArgument("partition needs at least one boundary".into()));
        }
        if boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("partition boundary".into()));
        }
        if boundaries[0] <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "first boundary must be positive, got {}",
                boundaries[0]
            )));
        }
        if let Some(w) = boundaries.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "boundaries must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self::Explicit(boundaries))
    }

    /// Start time `t_n` of cell `n`.
    pub fn boundary(&self, n: u64) -> f64 {
        match self {
            Self::Uniform { delta } => n as f64 * delta,
            Self::Explicit(b) => {
                let k = b.len() as u64;
                if n == 0 {
                    0.0
                } else if n <= k {
                    b[(n - 1) as usize]
                } else {
                    b[b.len() - 1] + (n - k) as f64 * self.tail_spacing()
                }
            }
        }
    }

    fn tail_spacing(&self) -> f64 {
        match self {
            Self::Uniform { delta } => *delta,
            Self::Explicit(b) => match b.len() {
                1 => b[0],
                k => b[k - 1] - b[k - 2],
            },
        }
    }

    pub fn cell_bounds(&self, n: u64) -> (f64, f64) {
        (self.boundary(n), self.boundary(n + 1))
    }

    pub fn cell_len(&self, n: u64) -> f64 {
        let (a, b) = self.cell_bounds(n);
        b - a
    }

    /// Index of the cell containing `t`; a boundary belongs to the cell it starts.
    pub fn cell_index(&self, t: f64) -> Result<u64> {
        if t.is_nan() {
            return Err(Error::NonFinite("query time".into()));
        }
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        let (origin, first, spacing) = match self {
            Self::Uniform { delta } => (0.0, 0u64, *delta),
            Self::Explicit(b) => {
                let last = b[b.len() - 1];
                if t < last {
                    return Ok(b.partition_point(|&x| x <= t) as u64);
                }
                (last, b.len() as u64, self.tail_spacing())
            }
        };
        let guess = ((t - origin) / spacing).floor();
        if !guess.is_finite() || guess >= u64::MAX as f64 / 2.0 {
            return Err(Error::InvalidArgument(format!("query time {t} is out of range")));
        }
        let mut n = first + guess as u64;
        // Agree exactly with `boundary`, which the floor can miss by one ulp.
        while n > first && t < self.boundary(n) {
            n -= 1;
        }
        while t >= self.boundary(n + 1) {
            n += 1;
        }
        Ok(n)
    }

    /// Boundaries strictly inside `(t0, t1)`.
    pub fn boundaries_between(&self, t0: f64, t1: f64) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        if t1 <= t0 {
            return Ok(out);
        }
        let mut n = self.cell_index(t0.max(0.0))? + 1;
        loop {
            let b = self.boundary(n);
            if b >= t1 {
                break;
            }
            if b > t0 {
                out.push(b);
            }
            n += 1;
        }
        Ok(out)
    }
}

/// How a path maps time to cells.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseKind {
    /// One draw per integer step.
    Discrete,
    /// One draw per partition cell, held constant across the cell.
    CoarseGrain(Partition),
}

/// Component laws plus the time structure.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    pub components: Vec<Distribution>,
    pub kind: NoiseKind,
}

impl NoiseSpec {
    pub fn new(components: Vec<Distribution>, kind: NoiseKind) -> Result<Self> {
        for c in &components {
            c.validate()?;
        }
        Ok(Self { components, kind })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn means(&self) -> Vec<f64> {
        self.components.iter().map(Distribution::mean).collect()
    }

    /// `sup ‖ξ‖` over all cells.
    pub fn norm_bound(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.hard_bound().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// One realization `ξ(ω)` of a noise process.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    seed: u64,
    path_index: u64,
    spec: Arc<NoiseSpec>,
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a tuple of words into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |h, &p| splitmix64(h ^ splitmix64(p)))
}

impl NoisePath {
    pub fn new(spec: Arc<NoiseSpec>, seed: u64, path_index: u64) -> Self {
        Self {
            seed,
            path_index,
            spec,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.spec.kind, NoiseKind::Discrete)
    }

    pub fn partition(&self) -> Option<&Partition> {
        match &self.spec.kind {
            NoiseKind::CoarseGrain(p) => Some(p),
            NoiseKind::Discrete => None,
        }
    }

    fn coarse(&self) -> Result<&Partition> {
        self.partition().ok_or(Error::WrongPathKind {
            expected: "coarse-grain",
        })
    }

    /// Values of cell (or step) `n`. Discrete and coarse-grain paths share
    /// this lookup; only the time-to-cell map differs.
    pub fn cell_value_into(&self, n: u64, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.seed, self.path_index, n]));
        for (o, d) in out.iter_mut().zip(&self.spec.components) {
            *o = d.sample(&mut rng);
        }
    }

    pub fn cell_value(&self, n: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.cell_value_into(n, &mut out);
        out
    }

    /// `ξ_i` of a discrete path.
    pub fn value_at_step(&self, i: u64) -> Result<Vec<f64>> {
        if !self.is_discrete() {
            return Err(Error::WrongPathKind { expected: "discrete" });
        }
        Ok(self.cell_value(i))
    }

    /// `ξ_t` of a coarse-grain path.
    pub fn value_at(&self, t: f64) -> Result<Vec<f64>> {
        let n = self.coarse()?.cell_index(t)?;
        Ok(self.cell_value(n))
    }

    pub fn cell_index(&self, t: f64) -> Result<u64> {
        self.coarse()?.cell_index(t)
    }

    pub fn cell_bounds(&self, n: u64) -> Result<(f64, f64)> {
        Ok(self.coarse()?.cell_bounds(n))
    }

    /// `∫_{P_n} ξ_t dt = |P_n|·G_n` for each component.
    pub fn cell_integrals(&self, n: u64) -> Result<Vec<f64>> {
        let len = self.coarse()?.cell_len(n);
        Ok(self.cell_value(n).into_iter().map(|g| len * g).collect())
    }

    /// Scalar form of [`Self::cell_integrals`].
    pub fn integral_over_cell(&self, n: u64) -> Result<f64> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.dim(),
            });
        }
        Ok(self.cell_integrals(n)?[0])
    }
}

/// Discrete path with iid draws from `dist`.
pub fn iid_sequence(dist: Distribution, seed: u64, path_index: u64) -> Result<NoisePath> {
    let spec = NoiseSpec::new(vec![dist], NoiseKind::Discrete)?;
    Ok(NoisePath::new(Arc::new(spec), seed, path_index))
}

/// Piecewise-constant path with iid cell values from `dist`.
pub fn coarse_grain_process(
    part: Partition,
    dist: Distribution,
    seed: u64,
    path_index: u64,
) -> Result<NoisePath> {
    let spec = NoiseSpec::new(vec![dist], NoiseKind::CoarseGrain(part))?;
    Ok(NoisePath::new(Arc::new(spec), seed, path_index))
}

/// Zero-mean bounded piecewise-constant noise on a grid of spacing `dt`.
pub fn bounded_zero_mean(
    dists: Vec<Distribution>,
    seed: u64,
    path_index: u64,
    dt: f64,
) -> Result<NoisePath> {
    for d in &dists {
        let m = d.mean();
        if m.abs() > 1e-12 * d.hard_bound().max(1.0) {
            return Err(Error::NonZeroMean(m));
        }
    }
    let spec = NoiseSpec::new(dists, NoiseKind::CoarseGrain(Partition::uniform(dt)?))?;
    Ok(NoisePath::new(Arc::new(spec), seed, path_index))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, var)
    }

    #[test]
    fn two_point_empirical_mean() {
        let p = iid_sequence(Distribution::two_point(0.5, 1.5, 0.5).unwrap(), 11, 0).unwrap();
        let draws: Vec<f64> = (0..100_000).map(|i| p.value_at_step(i).unwrap()[0]).collect();
        let (m, _) = mean_var(&draws);
        assert!((m - 1.0).abs() < 0.01, "{m}");
        assert!(draws.iter().all(|&d| d == 0.5 || d == 1.5));
    }

    #[test]
    fn degenerate_uniform_is_constant() {
        let p = iid_sequence(Distribution::uniform(0.0, 0.0).unwrap(), 3, 1).unwrap();
        assert!((0..1000).all(|i| p.value_at_step(i).unwrap()[0] == 0.0));
    }

    #[test]
    fn determinism_same_step() {
        let d = Distribution::uniform(-1.0, 2.0).unwrap();
        let a = iid_sequence(d.clone(), 42, 5).unwrap();
        let b = iid_sequence(d, 42, 5).unwrap();
        assert_eq!(a.value_at_step(7).unwrap(), a.value_at_step(7).unwrap());
        assert_eq!(a.value_at_step(7).unwrap(), b.value_at_step(7).unwrap());
        let c = iid_sequence(Distribution::uniform(-1.0, 2.0).unwrap(), 42, 6).unwrap();
        assert_ne!(a.value_at_step(7).unwrap(), c.value_at_step(7).unwrap());
    }

    #[test]
    fn coarse_grain_is_piecewise_constant_and_right_continuous() {
        let p = coarse_grain_process(
            Partition::uniform(1.0).unwrap(),
            Distribution::two_point(-2.0, 0.5, 0.5).unwrap(),
            9,
            0,
        )
        .unwrap();
        for n in 0..50u64 {
            let g = p.cell_value(n)[0];
            for k in 0..10 {
                let t = n as f64 + k as f64 * 0.0999;
                assert_eq!(p.value_at(t).unwrap()[0], g);
            }
            assert_eq!(p.value_at(n as f64).unwrap()[0], g);
        }
        assert_eq!(p.value_at(-0.1), Err(Error::NegativeTime(-0.1)));
    }

    #[test]
    fn constant_process() {
        let p = coarse_grain_process(
            Partition::explicit(vec![0.3, 1.0, 1.2]).unwrap(),
            Distribution::constant(2.5).unwrap(),
            1,
            1,
        )
        .unwrap();
        for t in [0.0, 0.3, 0.9, 1.19, 5.0, 1e6] {
            assert_eq!(p.value_at(t).unwrap(), vec![2.5]);
        }
        let n = p.cell_index(1.1).unwrap();
        assert_eq!(n, 2);
        assert!((p.integral_over_cell(n).unwrap() - 2.5 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn integral_over_cell_is_exact() {
        let p = coarse_grain_process(
            Partition::uniform(0.5).unwrap(),
            Distribution::constant(4.0).unwrap(),
            0,
            0,
        )
        .unwrap();
        assert_eq!(p.integral_over_cell(0).unwrap(), 2.0);
        let q = coarse_grain_process(
            Partition::uniform(1.0).unwrap(),
            Distribution::two_point(-2.0, 0.5, 0.5).unwrap(),
            4,
            2,
        )
        .unwrap();
        for n in 0..20 {
            assert_eq!(q.integral_over_cell(n).unwrap(), q.cell_value(n)[0]);
        }
        let d = iid_sequence(Distribution::constant(1.0).unwrap(), 0, 0).unwrap();
        assert!(matches!(d.integral_over_cell(0), Err(Error::WrongPathKind { .. })));
    }

    #[test]
    fn explicit_partition_lookup_and_extension() {
        let part = Partition::explicit(vec![0.5, 1.5, 2.0]).unwrap();
        assert_eq!(part.cell_index(0.0).unwrap(), 0);
        assert_eq!(part.cell_index(0.5).unwrap(), 1);
        assert_eq!(part.cell_index(1.49).unwrap(), 1);
        assert_eq!(part.cell_index(2.0).unwrap(), 3);
        assert_eq!(part.cell_bounds(3), (2.0, 2.5));
        assert_eq!(part.cell_index(2.75).unwrap(), 4);
        assert!(Partition::explicit(vec![]).is_err());
        assert!(Partition::explicit(vec![0.0, 1.0]).is_err());
        assert!(Partition::explicit(vec![1.0, 1.0]).is_err());
        assert!(Partition::uniform(0.0).is_err());
    }

    #[test]
    fn uniform_partition_boundaries_are_exact() {
        let part = Partition::uniform(0.1).unwrap();
        for n in 0..10_000u64 {
            let b = part.boundary(n);
            assert_eq!(part.cell_index(b).unwrap(), n);
            if n > 0 {
                assert_eq!(part.cell_index(b * (1.0 - 1e-15)).unwrap(), n - 1);
            }
        }
        assert_eq!(
            part.boundaries_between(0.05, 0.35).unwrap(),
            vec![part.boundary(1), part.boundary(2), part.boundary(3)]
        );
    }

    #[test]
    fn bounded_zero_mean_bounds() {
        let p = bounded_zero_mean(vec![Distribution::uniform(-1.0, 1.0).unwrap()], 5, 0, 0.1).unwrap();
        for k in 0..10_000 {
            let v = p.value_at(k as f64 * 0.037).unwrap()[0];
            assert!(v > -1.0 && v < 1.0);
        }
        let g = bounded_zero_mean(
            vec![Distribution::clipped_gaussian(0.0, 1.0, 3.0).unwrap()],
            5,
            1,
            0.1,
        )
        .unwrap();
        assert!((0..10_000).all(|n| g.cell_value(n)[0].abs() <= 3.0));
        let err = bounded_zero_mean(vec![Distribution::uniform(0.0, 1.0).unwrap()], 0, 0, 0.1);
        assert_eq!(err, Err(Error::NonZeroMean(0.5)));
    }

    #[test]
    fn bounded_zero_mean_clt() {
        let d = Distribution::uniform(-1.0, 1.0).unwrap();
        let sd = d.variance().sqrt();
        let p = bounded_zero_mean(vec![d], 77, 0, 0.01).unwrap();
        let draws: Vec<f64> = (0..100_000).map(|n| p.cell_value(n)[0]).collect();
        let (m, _) = mean_var(&draws);
        assert!(m.abs() < 3.0 * sd / (1e5f64).sqrt(), "{m}");
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(Distribution::uniform(1.0, 0.0).is_err());
        assert!(Distribution::two_point(0.0, 1.0, 1.5).is_err());
        assert!(Distribution::clipped_gaussian(0.0, 1.0, 0.0).is_err());
        assert!(Distribution::constant(f64::NAN).is_err());
    }

    #[test]
    fn closed_form_moments_against_monte_carlo() {
        let dists = [
            Distribution::uniform(0.2, 0.8).unwrap(),
            Distribution::uniform(-0.5, 1.5).unwrap(),
            Distribution::two_point(-2.0, 0.5, 0.3).unwrap(),
            Distribution::clipped_gaussian(0.0, 1.0, 1.5).unwrap(),
            Distribution::clipped_gaussian(0.7, 0.4, 0.5).unwrap(),
        ];
        for (k, d) in dists.iter().enumerate() {
            let p = iid_sequence(d.clone(), 1000 + k as u64, 0).unwrap();
            let xs: Vec<f64> = (0..200_000).map(|i| p.value_at_step(i).unwrap()[0]).collect();
            let n = xs.len() as f64;
            let check = |name: &str, f: &dyn Fn(f64) -> f64, exact: f64| {
                let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
                let (m, v) = mean_var(&vals);
                let tol = 5.0 * (v / n).sqrt() + 1e-12;
                assert!((m - exact).abs() < tol, "{d:?} {name}: {m} vs {exact}");
            };
            check("mean", &|x| x, d.mean());
            check("second", &|x| x * x, d.second_moment());
            check("abs", &|x| x.abs(), d.mean_abs());
            if d.mean_log_abs().is_finite() {
                check("log", &|x| x.abs().ln(), d.mean_log_abs());
            }
        }
    }

    #[test]
    fn mean_log_abs_values() {
        let u = Distribution::uniform(0.2, 0.8).unwrap();
        assert!((u.mean_log_abs() - (-0.761_045)).abs() < 1e-6);
        let tp = Distribution::two_point(0.5, 1.5, 0.5).unwrap();
        assert!((tp.mean_log_abs() - 0.5 * (0.75f64).ln()).abs() < 1e-15);
        assert_eq!(
            Distribution::two_point(0.0, 1.0, 0.5).unwrap().mean_log_abs(),
            f64::NEG_INFINITY
        );
        assert_eq!(Distribution::two_point(0.0, 1.0, 0.0).unwrap().mean_log_abs(), 0.0);
    }

    #[test]
    fn independence_and_stationarity_diagnostics() {
        let p = coarse_grain_process(
            Partition::uniform(0.5).unwrap(),
            Distribution::uniform(0.1, 1.1).unwrap(),
            2024,
            3,
        )
        .unwrap();
        let ints: Vec<f64> = (0..10_001).map(|n| p.integral_over_cell(n).unwrap()).collect();
        let (a, b) = (&ints[..10_000], &ints[1..]);
        let (ma, va) = mean_var(a);
        let (mb, vb) = mean_var(b);
        let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / 9_999.0;
        let rho = cov / (va * vb).sqrt();
        assert!(rho.abs() < 0.03, "{rho}");

        let (m1, v1) = mean_var(&ints[..5000]);
        let (m2, v2) = mean_var(&ints[5000..10_000]);
        let se = (v1 / 5000.0 + v2 / 5000.0).sqrt();
        assert!((m1 - m2).abs() < 3.0 * se);
    }
}
