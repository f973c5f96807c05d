//! Statistical checks of the bound-process conditions for almost-sure and
//! mean-square contraction, discrete and continuous.

use std::fmt;

use crate::error::{Error, Result};
use crate::propagate::{envelope_sequence, ContinuousRun, SaveGrid};

use super::stats::{mean_ci, MeanCi, MIN_SAMPLES};

/// Which contraction condition a verdict refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Theorem {
    /// Discrete, almost sure: `E log η_i ≤ η < 0`.
    T1,
    /// Discrete, mean square: `E η_i² ≤ η < 1`.
    T2,
    /// Continuous, almost sure: `E η_t ≤ η < 0`.
    T3,
    /// Continuous coarse-grain, mean square: `E (e^{∫_{P_n} η})² ≤ η < 1`.
    T4,
}

impl Theorem {
    /// Hard cap the CI upper bound must stay strictly below.
    pub fn cap(self) -> f64 {
        match self {
            Theorem::T1 | Theorem::T3 => 0.0,
            Theorem::T2 | Theorem::T4 => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Theorem::T1 => "t1",
            Theorem::T2 => "t2",
            Theorem::T3 => "t3",
            Theorem::T4 => "t4",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of one condition check.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionVerdict {
    pub theorem: Theorem,
    pub quantity: String,
    /// Estimate from the group with the largest CI upper bound.
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Rate bound `η` compared against, or the cap when none was given.
    pub threshold: f64,
    pub cap: f64,
    pub verdict: bool,
    pub samples: usize,
    pub groups: usize,
    pub diagnostics: Vec<(String, f64)>,
}

impl ContractionVerdict {
    fn from_groups(
        theorem: Theorem,
        quantity: &str,
        groups: &[MeanCi],
        eta: Option<f64>,
    ) -> Result<Self> {
        let cap = theorem.cap();
        if let Some(e) = eta {
            let ok = match theorem {
                Theorem::T1 | Theorem::T3 => e < 0.0,
                Theorem::T2 | Theorem::T4 => (0.0..1.0).contains(&e),
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "rate bound {e} is outside the admissible range for {theorem}"
                )));
            }
        }
        let worst = groups
            .iter()
            .max_by(|a, b| a.hi.total_cmp(&b.hi))
            .ok_or(Error::InsufficientSamples {
                needed: MIN_SAMPLES,
                got: 0,
            })?;
        let threshold = eta.unwrap_or(cap);
        let verdict = worst.hi < cap && eta.is_none_or(|e| worst.hi <= e);
        Ok(Self {
            theorem,
            quantity: quantity.into(),
            estimate: worst.mean,
            ci_lo: worst.lo,
            ci_hi: worst.hi,
            threshold,
            cap,
            verdict,
            samples: groups.iter().map(|g| g.n).sum(),
            groups: groups.len(),
            diagnostics: Vec::new(),
        })
    }

    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// Samples of a discrete bound process, grouped for per-index estimation.
///
/// Each group is a block of consecutive steps pooled across paths; the
/// condition is checked on every group and the worst one decides.
#[derive(Clone, Debug, PartialEq)]
pub struct GainSamples {
    pub groups: Vec<Vec<f64>>,
}

impl GainSamples {
    /// `series[p][i]` is the sample of path `p` at step `i`. Steps are cut
    /// into blocks of `block_len`; a short trailing block joins the previous one.
    pub fn blocked(series: &[Vec<f64>], block_len: usize) -> Result<Self> {
        let steps = series.first().map_or(0, Vec::len);
        if steps == 0 || series.iter().any(|s| s.len() != steps) {
            return Err(Error::InvalidArgument("series must be non-empty and of equal length".into()));
        }
        let b = block_len.clamp(1, steps);
        let mut starts: Vec<usize> = (0..steps).step_by(b).collect();
        if starts.len() > 1 && (steps - starts[starts.len() - 1]) * series.len() < MIN_SAMPLES {
            starts.pop();
        }
        let groups = starts
            .iter()
            .enumerate()
            .map(|(g, &s)| {
                let e = starts.get(g + 1).copied().unwrap_or(steps);
                series.iter().flat_map(|p| p[s..e].iter().copied()).collect()
            })
            .collect();
        Ok(Self { groups })
    }

    /// All samples in one group.
    pub fn pooled(series: &[Vec<f64>]) -> Result<Self> {
        let steps = series.first().map_or(0, Vec::len);
        Self::blocked(series, steps.max(1))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            groups: self.groups.iter().map(|g| g.iter().map(|v| f(*v)).collect()).collect(),
        }
    }

    fn cis(&self) -> Result<Vec<MeanCi>> {
        if self.groups.is_empty() {
            return Err(Error::InsufficientSamples {
                needed: MIN_SAMPLES,
                got: 0,
            });
        }
        self.groups.iter().map(|g| mean_ci(g)).collect()
    }

    fn total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

/// Running-average drift between the half-way point and the end of the
/// pooled sample sequence; small values indicate the law of large numbers
/// has settled.
fn lln_drift(samples: &GainSamples) -> f64 {
    let all: Vec<f64> = samples.groups.iter().flatten().copied().collect();
    if all.iter().any(|v| !v.is_finite()) {
        return 0.0;
    }
    let half = all.len() / 2;
    let m_half = all[..half].iter().sum::<f64>() / half.max(1) as f64;
    let m_all = all.iter().sum::<f64>() / all.len() as f64;
    (m_all - m_half).abs()
}

/// Checks `E log η_i ≤ η < 0` on samples of `log η_i`.
pub fn check_t1_discrete(log_eta: &GainSamples, eta: Option<f64>) -> Result<ContractionVerdict> {
    if log_eta.total() == 0 {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: 0,
        });
    }
    let mut v = ContractionVerdict::from_groups(Theorem::T1, "E[log eta]", &log_eta.cis()?, eta)?;
    v.diagnostics.push(("lln_drift".into(), lln_drift(log_eta)));
    Ok(v)
}

/// Checks `E η_i² ≤ η < 1` on samples of `η_i²`.
pub fn check_t2_discrete(eta_sq: &GainSamples, eta: Option<f64>) -> Result<ContractionVerdict> {
    if eta_sq.total() == 0 {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: 0,
        });
    }
    let mut v = ContractionVerdict::from_groups(Theorem::T2, "E[eta^2]", &eta_sq.cis()?, eta)?;
    v.diagnostics.push(("lln_drift".into(), lln_drift(eta_sq)));
    Ok(v)
}

/// Per-cell data of one coarse-grain path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathCells {
    pub lengths: Vec<f64>,
    /// `∫_{P_n} η_t dt`.
    pub integrals: Vec<f64>,
    /// `ln‖δz(t_n)‖` at `t_0, t_1, …`, for the envelope dominance check.
    pub log_dz: Option<Vec<f64>>,
}

impl PathCells {
    pub fn new(lengths: Vec<f64>, integrals: Vec<f64>) -> Result<Self> {
        if lengths.len() != integrals.len() {
            return Err(Error::DimensionMismatch {
                expected: lengths.len(),
                got: integrals.len(),
            });
        }
        if integrals.iter().chain(&lengths).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cell integral".into()));
        }
        Ok(Self {
            lengths,
            integrals,
            log_dz: None,
        })
    }

    /// Cells of a run made with `track_lambda`; the displacement norms are
    /// attached when the run saved at cell boundaries and carried `δz`.
    pub fn from_run(run: &ContinuousRun, save: SaveGrid) -> Result<Self> {
        let integrals = run
            .segment_lambda_integrals
            .clone()
            .ok_or_else(|| Error::InvalidArgument("run did not track lambda integrals".into()))?;
        let lengths = run.grid.segments.iter().map(|s| s.t1 - s.t0).collect();
        let cells = Self::new(lengths, integrals)?;
        match (save, run.trajectory.log_dz_norms()) {
            (SaveGrid::CellBoundaries, Some(l)) if l.len() == cells.integrals.len() + 1 => Ok(cells.with_log_dz(l.to_vec())),
            _ => Ok(cells),
        }
    }

    pub fn with_log_dz(mut self, log_dz: Vec<f64>) -> Self {
        self.log_dz = Some(log_dz);
        self
    }

    /// `(1/t) ∫_0^t η` over all cells.
    pub fn time_average(&self) -> f64 {
        self.integrals.iter().sum::<f64>() / self.lengths.iter().sum::<f64>()
    }
}

fn check_cell_count(cells: &[PathCells]) -> Result<()> {
    if cells.is_empty() {
        return Err(Error::InsufficientSamples {
            needed: 1,
            got: 0,
        });
    }
    let fewest = cells.iter().map(|c| c.integrals.len()).min().unwrap_or(0);
    if fewest < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: fewest,
        });
    }
    Ok(())
}

/// Checks `E η_t ≤ η < 0` from the time averages `(1/t)∫_0^t η`.
///
/// With at least 30 paths the CI is over per-path time averages; with fewer
/// it is over the per-cell averages `∫_{P_n} η / |P_n|` of all paths.
pub fn check_t3_continuous(cells: &[PathCells], eta: Option<f64>) -> Result<ContractionVerdict> {
    check_cell_count(cells)?;
    let pooled = cells.len() < MIN_SAMPLES;
    let samples: Vec<f64> = if pooled {
        cells
            .iter()
            .flat_map(|c| c.integrals.iter().zip(&c.lengths).map(|(i, l)| i / l))
            .collect()
    } else {
        cells.iter().map(PathCells::time_average).collect()
    };
    let mut v = ContractionVerdict::from_groups(Theorem::T3, "E[eta_t]", &[mean_ci(&samples)?], eta)?;
    v.samples = cells.iter().map(|c| c.integrals.len()).sum();
    v.diagnostics.push(("paths".into(), cells.len() as f64));
    v.diagnostics.push(("pooled_cells".into(), if pooled { 1.0 } else { 0.0 }));
    Ok(v)
}

/// Checks `E (e^{∫_{P_n} η})² ≤ η < 1` per cell across paths, worst cell
/// deciding, and verifies `‖δz(t_n)‖ ≤ Z_n (1 + 1e-6)` on every path that
/// carries displacement norms.
pub fn check_t4_coarse_grain(cells: &[PathCells], eta: Option<f64>) -> Result<ContractionVerdict> {
    check_cell_count(cells)?;
    if cells.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: cells.len(),
        });
    }
    let n_cells = cells.iter().map(|c| c.integrals.len()).min().unwrap_or(0);
    let mut column = vec![0.0; cells.len()];
    let groups = (0..n_cells)
        .map(|n| {
            for (c, p) in column.iter_mut().zip(cells) {
                *c = (2.0 * p.integrals[n]).exp();
            }
            mean_ci(&column)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut v = ContractionVerdict::from_groups(Theorem::T4, "E[exp(2*int eta)]", &groups, eta)?;

    let slack = 1e-6f64.ln_1p();
    let (mut checked, mut violations) = (0usize, 0usize);
    let mut worst_excess = f64::NEG_INFINITY;
    for p in cells {
        let Some(log_dz) = &p.log_dz else { continue };
        let m = log_dz.len().min(p.integrals.len() + 1);
        let env = envelope_sequence(&p.integrals[..m - 1], 1.0)?;
        for n in 0..m {
            // log Z_n with Z_0 = ‖δz_0‖.
            let log_z = log_dz[0] + env.log_z[n];
            let excess = if log_dz[n] == f64::NEG_INFINITY { f64::NEG_INFINITY } else { log_dz[n] - log_z };
            worst_excess = worst_excess.max(excess);
            if excess > slack {
                violations += 1;
            }
            checked += 1;
        }
    }
    v.diagnostics.push(("envelope_checked".into(), checked as f64));
    v.diagnostics.push(("envelope_violations".into(), violations as f64));
    v.diagnostics.push(("envelope_worst_log_excess".into(), worst_excess));
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{iid_sequence, Distribution};

    fn draws(d: Distribution, paths: u64, steps: u64, f: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
        (0..paths)
            .map(|p| {
                let path = iid_sequence(d.clone(), 17, p).unwrap();
                (0..steps).map(|i| f(path.value_at_step(i).unwrap()[0])).collect()
            })
            .collect()
    }

    #[test]
    fn t1_constant_bound() {
        let s = GainSamples::pooled(&vec![vec![0.5f64.ln(); 50]; 2]).unwrap();
        assert!(check_t1_discrete(&s, Some(-0.5)).unwrap().verdict);
        let one = GainSamples::pooled(&vec![vec![0.0; 50]; 2]).unwrap();
        assert!(!check_t1_discrete(&one, Some(-1e-9)).unwrap().verdict);
        assert!(!check_t1_discrete(&one, None).unwrap().verdict);
        assert!(check_t1_discrete(&s, Some(0.1)).is_err());
    }

    #[test]
    fn t1_t2_two_point() {
        let d = Distribution::two_point(0.5, 1.5, 0.5).unwrap();
        let logs = GainSamples::pooled(&draws(d.clone(), 100, 100, f64::ln)).unwrap();
        let t1 = check_t1_discrete(&logs, Some(-0.1)).unwrap();
        assert!(t1.verdict, "{t1:?}");
        assert!((t1.estimate - d.mean_log_abs()).abs() < 0.02);
        assert!(!check_t1_discrete(&logs, Some(-0.2)).unwrap().verdict);
        let sq = GainSamples::pooled(&draws(d, 100, 100, |a| a * a)).unwrap();
        let t2 = check_t2_discrete(&sq, None).unwrap();
        assert!(!t2.verdict);
        assert!(t2.ci_lo > 1.2);
    }

    #[test]
    fn t2_uniform() {
        let d = Distribution::uniform(0.2, 0.8).unwrap();
        assert!((d.second_moment() - 0.28).abs() < 1e-15);
        let sq = GainSamples::pooled(&draws(d, 100, 100, |a| a * a)).unwrap();
        assert!(check_t2_discrete(&sq, Some(0.3)).unwrap().verdict);
        let one = GainSamples::pooled(&[vec![1.0; 40]]).unwrap();
        assert!(!check_t2_discrete(&one, None).unwrap().verdict);
    }

    #[test]
    fn blocking_groups_steps_across_paths() {
        let series = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0]; 10];
        let g = GainSamples::blocked(&series, 2).unwrap();
        assert_eq!(g.groups.len(), 2);
        assert_eq!(g.groups[0].len(), 20);
        assert_eq!(g.groups[1].len(), 30);
        assert!(GainSamples::blocked(&[], 1).is_err());
    }

    #[test]
    fn verdict_monotone_in_threshold() {
        let d = Distribution::two_point(0.5, 1.5, 0.5).unwrap();
        let logs = GainSamples::pooled(&draws(d, 50, 50, f64::ln)).unwrap();
        let mut passed = false;
        for k in 1..100 {
            let eta = -0.3 + k as f64 * 0.003;
            let v = check_t1_discrete(&logs, Some(eta)).unwrap().verdict;
            assert!(!passed || v);
            passed |= v;
        }
        assert!(passed);
    }

    fn const_cells(g: f64, n: usize, paths: usize) -> Vec<PathCells> {
        (0..paths)
            .map(|_| PathCells::new(vec![1.0; n], vec![g; n]).unwrap())
            .collect()
    }

    #[test]
    fn t3_constant_and_zero_mean() {
        assert!(check_t3_continuous(&const_cells(-1.0, 40, 1), Some(-1.0)).unwrap().verdict);
        let alt: Vec<PathCells> = (0..40)
            .map(|p| {
                let ints: Vec<f64> = (0..40).map(|n| if (n + p) % 2 == 0 { -1.0 } else { 1.0 }).collect();
                PathCells::new(vec![1.0; 40], ints).unwrap()
            })
            .collect();
        assert!(!check_t3_continuous(&alt, None).unwrap().verdict);
        assert!(check_t3_continuous(&const_cells(-1.0, 29, 40), None).is_err());
    }

    #[test]
    fn t4_constant_exponent() {
        let v = check_t4_coarse_grain(&const_cells(-1.0, 40, 40), Some(0.2)).unwrap();
        assert!((v.estimate - (-2f64).exp()).abs() < 1e-15);
        assert!(v.verdict);
        let z = check_t4_coarse_grain(&const_cells(0.0, 40, 40), None).unwrap();
        assert_eq!(z.estimate, 1.0);
        assert!(!z.verdict);
    }

    #[test]
    fn t4_envelope_violation_detected() {
        let mut cells = const_cells(-1.0, 40, 40);
        let good: Vec<f64> = (0..=40).map(|n| -(n as f64)).collect();
        let mut bad = good.clone();
        bad[7] += 1e-3;
        cells[0] = cells[0].clone().with_log_dz(good);
        cells[1] = cells[1].clone().with_log_dz(bad);
        let v = check_t4_coarse_grain(&cells, None).unwrap();
        assert_eq!(v.diagnostic("envelope_checked"), Some(82.0));
        assert_eq!(v.diagnostic("envelope_violations"), Some(1.0));
    }
}
