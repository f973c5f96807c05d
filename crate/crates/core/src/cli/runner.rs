//! Builds the configured scenario, runs the ensemble, evaluates the
//! requested analyses and writes the output files.

use std::fmt::Write as _;
use std::io;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::analysis::{
    check_t1_discrete, check_t2_discrete, check_t3_continuous, check_t4_coarse_grain, deviation_bound_test,
    finite_time_lyapunov, log_mean_exp, mean_ci, mean_decay_fit, mean_trajectory_test, ms_rate_fit, tail_average,
    ContractionVerdict, DeviationReport, EnsembleSettings, GainSamples, MeanTrajectoryReport, PathCells, RateEstimate,
};
use crate::error::Error;
use crate::matrix::Matrix;
use crate::noise::{derive_seed, NoiseKind, NoisePath, NoiseSpec, Partition};
use crate::output::{fmt_float, write_atomic};
use crate::propagate::{
    default_dz0, integrate_continuous, propagate_pair_discrete, propagate_variational_discrete, ContinuousOptions,
    SaveGrid, Trajectory,
};
use crate::scenarios::{self, LambdaCertificate, Quadratic, SgConditionReport};
use crate::system::{ContinuousSystem, DiscreteSystem, Metric, StateVector};

use super::config::{Analysis, Drift, ExperimentConfig, NoiseTiming, ScenarioKind};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Sim(#[from] Error),
    #[error("{analysis}: {source}")]
    Analysis { analysis: Analysis, source: Error },
    #[error("writing output: {0}")]
    Io(#[from] io::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Outcome of one requested analysis.
#[derive(Clone, Debug)]
pub enum Outcome {
    Verdict(Analysis, ContractionVerdict),
    Rate(Analysis, RateEstimate),
    MeanTrajectory(MeanTrajectoryReport),
    Deviation(DeviationReport),
    Sync(SyncOutcome),
    SgCondition(SgConditionReport),
}

/// Fraction of paths whose tail-averaged oscillator separation fell below
/// the tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct SyncOutcome {
    pub predicted: bool,
    pub tail_separations: Vec<f64>,
    pub synchronized: usize,
    pub fraction: f64,
    pub required: f64,
    pub tol: f64,
}

/// One line of `verdicts.csv`; `verdict` is `None` for pure estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct VerdictRow {
    pub analysis: Analysis,
    pub quantity: String,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub threshold: f64,
    pub verdict: Option<bool>,
}

impl Outcome {
    pub fn analysis(&self) -> Analysis {
        match self {
            Self::Verdict(a, _) | Self::Rate(a, _) => *a,
            Self::MeanTrajectory(_) => Analysis::MeanTrajectory,
            Self::Deviation(_) => Analysis::DeviationBound,
            Self::Sync(_) => Analysis::Sync,
            Self::SgCondition(_) => Analysis::SgCondition,
        }
    }

    pub fn row(&self) -> VerdictRow {
        let analysis = self.analysis();
        let nan = f64::NAN;
        match self {
            Self::Verdict(_, v) => VerdictRow {
                analysis,
                quantity: v.quantity.clone(),
                estimate: v.estimate,
                ci_lo: v.ci_lo,
                ci_hi: v.ci_hi,
                threshold: v.threshold,
                verdict: Some(v.verdict),
            },
            Self::Rate(a, r) => {
                let (quantity, estimate, (lo, hi)) = match a {
                    Analysis::Lyapunov => ("lyapunov_exponent", r.slope, r.ci.unwrap_or((nan, nan))),
                    Analysis::MsRate => ("eta_ms", r.factor(), r.factor_ci().unwrap_or((nan, nan))),
                    _ => ("mean_decay_factor", r.factor(), r.factor_ci().unwrap_or((nan, nan))),
                };
                VerdictRow {
                    analysis,
                    quantity: quantity.into(),
                    estimate,
                    ci_lo: lo,
                    ci_hi: hi,
                    threshold: nan,
                    verdict: None,
                }
            }
            Self::MeanTrajectory(m) => VerdictRow {
                analysis,
                quantity: "max_discrepancy_over_se".into(),
                estimate: m.max_ratio,
                ci_lo: nan,
                ci_hi: nan,
                threshold: 3.0,
                verdict: Some(m.passes),
            },
            Self::Deviation(d) => VerdictRow {
                analysis,
                quantity: "max_excess_over_bound".into(),
                estimate: d.max_excess,
                ci_lo: nan,
                ci_hi: nan,
                threshold: 0.0,
                verdict: Some(d.passes),
            },
            Self::Sync(s) => VerdictRow {
                analysis,
                quantity: "fraction_synchronized".into(),
                estimate: s.fraction,
                ci_lo: nan,
                ci_hi: nan,
                threshold: s.required,
                verdict: Some(s.fraction >= s.required),
            },
            Self::SgCondition(r) => VerdictRow {
                analysis,
                quantity: "expected_update_factor".into(),
                estimate: r.factor,
                ci_lo: r.factor,
                ci_hi: r.factor,
                threshold: 1.0,
                verdict: Some(r.condition),
            },
        }
    }
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub config: ExperimentConfig,
    /// In the order the analyses were requested.
    pub outcomes: Vec<Outcome>,
    pub wall_clock: Duration,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    /// 0 when every requested verdict holds, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.outcomes.iter().any(|o| o.row().verdict == Some(false)) {
            2
        } else {
            0
        }
    }
}

/// Runs on a dedicated pool of `threads` workers (`None`: rayon's default).
pub fn run_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunReport, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| run_experiment(cfg))
}

/// Runs in the current rayon pool and writes the outputs into
/// `cfg.out_dir`. Nothing is written when the run fails.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let (outcomes, files) = simulate(cfg)?;
    let files = files.into_iter().chain([("report.txt".to_string(), Vec::new())]).collect::<Vec<_>>();
    let mut report = RunReport {
        config: cfg.clone(),
        outcomes,
        wall_clock: Duration::ZERO,
        files: files.iter().map(|(n, _)| cfg.out_dir.join(n)).collect(),
    };
    std::fs::create_dir_all(&cfg.out_dir)?;
    for (name, bytes) in &files[..files.len() - 1] {
        write_atomic(&cfg.out_dir.join(name), bytes)?;
    }
    report.wall_clock = started.elapsed();
    write_atomic(&cfg.out_dir.join("report.txt"), render_report(&report).as_bytes())?;
    Ok(report)
}

enum Built {
    Discrete {
        sys: DiscreteSystem,
        sg: Option<SgConditionReport>,
    },
    Continuous {
        sys: ContinuousSystem,
        additive: Option<(f64, f64)>,
    },
}

fn noise_spec(cfg: &ExperimentConfig) -> Result<Arc<NoiseSpec>, Error> {
    let kind = match &cfg.timing {
        NoiseTiming::Discrete => NoiseKind::Discrete,
        NoiseTiming::Uniform(d) => NoiseKind::CoarseGrain(Partition::uniform(*d)?),
        NoiseTiming::Boundaries(b) => NoiseKind::CoarseGrain(Partition::explicit(b.clone())?),
    };
    Ok(Arc::new(NoiseSpec::new(cfg.noise.clone(), kind)?))
}

fn build(cfg: &ExperimentConfig, spec: &Arc<NoiseSpec>) -> Result<Built, Error> {
    let p = &cfg.params;
    Ok(match cfg.scenario {
        ScenarioKind::LinearRandomGain => Built::Discrete {
            sys: scenarios::linear_random_gain(),
            sg: None,
        },
        ScenarioKind::LinearCoarseGrain => Built::Continuous {
            sys: scenarios::linear_coarse_grain(),
            additive: None,
        },
        ScenarioKind::StochasticGradient => {
            let q = Quadratic::new(Matrix::diag(&p.hessian), p.center.clone())?;
            let (sys, report) = scenarios::stochastic_gradient(
                Arc::new(q),
                p.mu,
                &cfg.noise,
                std::slice::from_ref(&p.center),
                derive_seed(&[cfg.seed, 0x5347]),
            )?;
            Built::Discrete { sys, sg: Some(report) }
        }
        ScenarioKind::VdpCoupled => Built::Continuous {
            sys: scenarios::vdp_coupled(p.alpha, p.w)?,
            additive: None,
        },
        ScenarioKind::AdditiveNoise => {
            let drift = match p.drift {
                Drift::Linear => scenarios::linear_drift(p.dim, p.rate),
                Drift::Cubic => scenarios::cubic_drift(p.dim),
            };
            let cert = match p.lambda {
                Some(l) => LambdaCertificate::Given(l),
                None => LambdaCertificate::Probe {
                    lo: vec![-p.probe_box; p.dim],
                    hi: vec![p.probe_box; p.dim],
                    per_axis: if p.dim <= 2 { 41 } else { 11 },
                },
            };
            let a = scenarios::additive_noise_system(drift, spec.clone(), cert)?;
            Built::Continuous {
                sys: a.system,
                additive: Some((a.sigma, a.lambda_max)),
            }
        }
    })
}

struct PathResult {
    trajectory: Trajectory,
    log_sigma: Vec<f64>,
    /// Pair displacement `x^a − x^b` per step (discrete mean-decay).
    displacement: Option<Vec<Vec<f64>>>,
    cells: Option<PathCells>,
    /// Per saved point, a separation feeding the `mean_sep` column.
    separation: Option<Vec<f64>>,
}

type Files = Vec<(String, Vec<u8>)>;

fn simulate(cfg: &ExperimentConfig) -> Result<(Vec<Outcome>, Files), RunError> {
    let spec = noise_spec(cfg)?;
    let built = build(cfg, &spec)?;
    let n = cfg.x0.len();
    let x0 = StateVector::new(cfg.x0.clone())?;
    let metric = Metric::identity(n)?;
    let wants = |a: Analysis| cfg.analyses.contains(&a);
    let track = wants(Analysis::T3) || wants(Analysis::T4);
    let opts = ContinuousOptions {
        h: cfg.h,
        save: SaveGrid::CellBoundaries,
        track_lambda: track,
        record_steps: false,
    };

    let results: Vec<PathResult> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|p| -> Result<PathResult, Error> {
            let path = NoisePath::new(spec.clone(), cfg.seed, p);
            let dz0 = default_dz0(n, cfg.seed, p);
            match &built {
                Built::Discrete { sys, .. } => {
                    let steps = cfg.steps().unwrap_or(0);
                    let run = propagate_variational_discrete(sys, &metric, &x0, &dz0, steps, &path, 1)?;
                    let displacement = if wants(Analysis::MeanDecay) {
                        let u = 1.0 / (n as f64).sqrt();
                        let xb = StateVector::new(cfg.x0.iter().map(|v| v + cfg.offset * u).collect())?;
                        let pair = propagate_pair_discrete(sys, &x0, &xb, steps, &path, None, 1)?;
                        Some(
                            (0..pair.a.len())
                                .map(|k| pair.a.state(k).iter().zip(pair.b.state(k)).map(|(a, b)| a - b).collect())
                                .collect(),
                        )
                    } else {
                        None
                    };
                    let separation = displacement
                        .as_ref()
                        .map(|d: &Vec<Vec<f64>>| d.iter().map(|v| v.iter().map(|c| c * c).sum::<f64>().sqrt()).collect());
                    Ok(PathResult {
                        trajectory: run.trajectory,
                        log_sigma: run.log_sigma,
                        displacement,
                        cells: None,
                        separation,
                    })
                }
                Built::Continuous { sys, .. } => {
                    let run = integrate_continuous(sys, &metric, &x0, Some(&dz0), cfg.time().unwrap_or(0.0), &path, opts)?;
                    let cells = if track { Some(PathCells::from_run(&run, opts.save)?) } else { None };
                    let separation = (cfg.scenario == ScenarioKind::VdpCoupled).then(|| {
                        (0..run.trajectory.len())
                            .map(|k| scenarios::vdp_separation(run.trajectory.state(k)))
                            .collect()
                    });
                    Ok(PathResult {
                        trajectory: run.trajectory,
                        log_sigma: Vec::new(),
                        displacement: None,
                        cells,
                        separation,
                    })
                }
            }
        })
        .collect::<Result<_, _>>()?;

    let mut outcomes = Vec::with_capacity(cfg.analyses.len());
    let mut pair_sep: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    for &a in &cfg.analyses {
        let tag = |e: Error| RunError::Analysis { analysis: a, source: e };
        let outcome = match a {
            Analysis::Lyapunov => Outcome::Rate(a, lyapunov(&results, cfg.lyapunov_tail).map_err(tag)?),
            Analysis::T1 | Analysis::T2 => {
                let series: Vec<Vec<f64>> = results.iter().map(|r| r.log_sigma.clone()).collect();
                let logs = match cfg.block {
                    Some(b) => GainSamples::blocked(&series, b),
                    None => GainSamples::pooled(&series),
                }
                .map_err(tag)?;
                let v = if a == Analysis::T1 {
                    check_t1_discrete(&logs, cfg.eta[0])
                } else {
                    check_t2_discrete(&logs.map(|l| (2.0 * l).exp()), cfg.eta[1])
                };
                Outcome::Verdict(a, v.map_err(tag)?)
            }
            Analysis::T3 | Analysis::T4 => {
                let cells: Vec<PathCells> = results.iter().filter_map(|r| r.cells.clone()).collect();
                let v = if a == Analysis::T3 {
                    check_t3_continuous(&cells, cfg.eta[2])
                } else {
                    check_t4_coarse_grain(&cells, cfg.eta[3])
                };
                Outcome::Verdict(a, v.map_err(tag)?)
            }
            Analysis::MsRate => {
                let k = cfg.ms_steps.min(results[0].trajectory.len() - 1);
                let series: Vec<Vec<f64>> = results
                    .iter()
                    .map(|r| r.trajectory.log_dz_norms().unwrap_or_default()[..=k].iter().map(|l| 2.0 * l).collect())
                    .collect();
                Outcome::Rate(a, ms_rate_fit(&series, derive_seed(&[cfg.seed, 0x4D53])).map_err(tag)?)
            }
            Analysis::MeanDecay => {
                let d: Vec<Vec<Vec<f64>>> = results.iter().filter_map(|r| r.displacement.clone()).collect();
                Outcome::Rate(a, mean_decay_fit(&d, derive_seed(&[cfg.seed, 0x4D44])).map_err(tag)?)
            }
            Analysis::SgCondition => match &built {
                Built::Discrete { sg: Some(r), .. } => Outcome::SgCondition(r.clone()),
                _ => unreachable!("schema restricts sg-condition to the gradient scenario"),
            },
            Analysis::MeanTrajectory | Analysis::DeviationBound => {
                let Built::Continuous { sys, additive: Some((sigma, lambda)) } = &built else {
                    unreachable!("schema restricts {a} to additive noise")
                };
                let settings = EnsembleSettings {
                    paths: cfg.paths,
                    seed: cfg.seed,
                    opts: ContinuousOptions { track_lambda: false, ..opts },
                };
                let horizon = cfg.time().unwrap_or(0.0);
                if a == Analysis::MeanTrajectory {
                    Outcome::MeanTrajectory(mean_trajectory_test(sys, &spec, &x0, horizon, settings).map_err(tag)?)
                } else {
                    let xb = StateVector::new(cfg.x0b.clone().unwrap_or_else(|| cfg.x0.clone()))?;
                    let d = deviation_bound_test(sys, &spec, &x0, &xb, *sigma, *lambda, horizon, settings).map_err(tag)?;
                    pair_sep = Some((d.times.clone(), d.mean_separation.clone(), d.se.clone()));
                    Outcome::Deviation(d)
                }
            }
            Analysis::Sync => {
                let eps = (&cfg.noise[0], &cfg.noise[1]);
                let tails = results
                    .iter()
                    .map(|r| tail_average(r.trajectory.times(), r.separation.as_deref().unwrap_or_default(), cfg.sync_tail))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(tag)?;
                let synchronized = tails.iter().filter(|s| **s < cfg.sync_tol).count();
                Outcome::Sync(SyncOutcome {
                    predicted: scenarios::vdp_sync_predicted(eps.0, eps.1),
                    fraction: synchronized as f64 / tails.len() as f64,
                    tail_separations: tails,
                    synchronized,
                    required: cfg.sync_fraction,
                    tol: cfg.sync_tol,
                })
            }
        };
        outcomes.push(outcome);
    }

    let mut files = Vec::new();
    if cfg.write_trajectories {
        files.push(("trajectories.csv".into(), trajectories_csv(&results, cfg.stride)?));
    }
    files.push(("ensemble.csv".into(), ensemble_csv(&results, pair_sep.as_ref())));
    files.push(("verdicts.csv".into(), verdicts_csv(&outcomes)));
    Ok((outcomes, files))
}

/// Mean of per-path slopes. The interval is the regression interval for a
/// single path, the normal CI over paths from 30 paths on, and the average
/// of per-path regression intervals in between.
fn lyapunov(results: &[PathResult], q: f64) -> Result<RateEstimate, Error> {
    let rates = results
        .iter()
        .map(|r| finite_time_lyapunov(&r.trajectory, q))
        .collect::<Result<Vec<_>, _>>()?;
    if rates.len() == 1 {
        return Ok(rates.into_iter().next().expect("one path"));
    }
    let slopes: Vec<f64> = rates.iter().map(|r| r.slope).collect();
    let m = rates.len() as f64;
    let mut out = rates[0].clone();
    out.slope = slopes.iter().sum::<f64>() / m;
    out.intercept = rates.iter().map(|r| r.intercept).sum::<f64>() / m;
    out.residual = rates.iter().map(|r| r.residual).fold(0.0, f64::max);
    out.samples = rates.iter().map(|r| r.samples).sum();
    out.max_running_rate = rates.iter().map(|r| r.max_running_rate).fold(f64::NEG_INFINITY, f64::max);
    out.ci = if rates.len() >= 30 {
        let ci = mean_ci(&slopes)?;
        Some((ci.lo, ci.hi))
    } else {
        let (lo, hi): (Vec<f64>, Vec<f64>) = rates.iter().filter_map(|r| r.ci).unzip();
        Some((lo.iter().sum::<f64>() / m, hi.iter().sum::<f64>() / m))
    };
    Ok(out)
}

fn trajectories_csv(results: &[PathResult], stride: usize) -> Result<Vec<u8>, io::Error> {
    let mut out = Vec::new();
    for (p, r) in results.iter().enumerate() {
        let mut buf = Vec::new();
        r.trajectory.write_csv(&mut buf, stride)?;
        let text = String::from_utf8(buf).map_err(io::Error::other)?;
        for (k, line) in text.lines().enumerate() {
            if k == 0 {
                if p == 0 {
                    out.extend_from_slice(format!("path,{line}\n").as_bytes());
                }
            } else {
                out.extend_from_slice(format!("{p},{line}\n").as_bytes());
            }
        }
    }
    Ok(out)
}

fn mean_se(col: &[f64]) -> (f64, f64) {
    let m = col.len() as f64;
    let mean = col.iter().sum::<f64>() / m;
    if col.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// `t,mean_dz_norm_sq,se,mean_sep,se_sep` on the grid of path 0.
fn ensemble_csv(results: &[PathResult], pair: Option<&(Vec<f64>, Vec<f64>, Vec<f64>)>) -> Vec<u8> {
    let times = results[0].trajectory.times();
    let pair = pair.filter(|(t, _, _)| t.as_slice() == times);
    let mut s = String::from("t,mean_dz_norm_sq,se,mean_sep,se_sep\n");
    let mut logs = vec![0.0; results.len()];
    let mut seps = vec![0.0; results.len()];
    for (k, t) in times.iter().enumerate() {
        for (l, r) in logs.iter_mut().zip(results) {
            *l = 2.0 * r.trajectory.log_dz_norms().map_or(f64::NAN, |v| v[k]);
        }
        let (lm, rel) = log_mean_exp(&logs);
        let mean = lm.exp();
        let se = if results.len() < 2 { f64::NAN } else { rel * mean };
        let (ms, ss) = if let Some((_, m, se)) = pair {
            (m[k], se[k])
        } else if results.iter().all(|r| r.separation.is_some()) {
            for (c, r) in seps.iter_mut().zip(results) {
                *c = r.separation.as_ref().expect("checked")[k];
            }
            mean_se(&seps)
        } else {
            (f64::NAN, f64::NAN)
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_float(*t),
            fmt_float(mean),
            fmt_float(se),
            fmt_float(ms),
            fmt_float(ss)
        );
    }
    s.into_bytes()
}

fn verdict_text(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "true",
        Some(false) => "false",
        None => "na",
    }
}

fn verdicts_csv(outcomes: &[Outcome]) -> Vec<u8> {
    let mut s = String::from("analysis,quantity,estimate,ci_lo,ci_hi,threshold,verdict\n");
    for o in outcomes {
        let r = o.row();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.analysis,
            r.quantity,
            fmt_float(r.estimate),
            fmt_float(r.ci_lo),
            fmt_float(r.ci_hi),
            fmt_float(r.threshold),
            verdict_text(r.verdict)
        );
    }
    s.into_bytes()
}

fn render_report(report: &RunReport) -> String {
    let mut s = String::from("stocon run report\n\n[config]\n");
    s.push_str(&report.config.to_text());
    s.push_str("\n[results]\n");
    for o in &report.outcomes {
        let r = o.row();
        let _ = writeln!(
            s,
            "{}: {} = {} (95% CI [{}, {}]), threshold {}, verdict {}",
            r.analysis,
            r.quantity,
            fmt_float(r.estimate),
            fmt_float(r.ci_lo),
            fmt_float(r.ci_hi),
            fmt_float(r.threshold),
            verdict_text(r.verdict)
        );
        let detail: Vec<(String, f64)> = match o {
            Outcome::Verdict(_, v) => {
                let mut d = vec![("samples".into(), v.samples as f64), ("groups".into(), v.groups as f64)];
                d.extend(v.diagnostics.iter().cloned());
                d
            }
            Outcome::Rate(_, e) => vec![
                ("window_start".into(), e.window.0),
                ("window_end".into(), e.window.1),
                ("residual".into(), e.residual),
                ("samples".into(), e.samples as f64),
                ("max_running_rate".into(), e.max_running_rate),
            ],
            Outcome::MeanTrajectory(m) => vec![("max_discrepancy".into(), m.max_discrepancy)],
            Outcome::Deviation(d) => vec![("asymptote".into(), d.asymptote)],
            Outcome::Sync(y) => vec![
                ("predicted".into(), f64::from(u8::from(y.predicted))),
                ("synchronized_paths".into(), y.synchronized as f64),
                ("tol".into(), y.tol),
            ],
            Outcome::SgCondition(c) => vec![
                ("hessian_positive_definite".into(), f64::from(u8::from(c.hessian_positive_definite))),
                ("gain".into(), c.gain),
                ("gain_bound_holds".into(), f64::from(u8::from(c.gain_bound_holds))),
                ("max_cross_correlation".into(), c.max_cross_correlation),
            ],
        };
        for (k, v) in detail {
            let _ = writeln!(s, "    {k} = {}", fmt_float(v));
        }
    }
    s.push_str("\n[outputs]\n");
    for f in &report.files {
        let _ = writeln!(s, "{}", f.display());
    }
    let _ = writeln!(s, "\nwall_clock_seconds = {:.3}", report.wall_clock.as_secs_f64());
    let _ = writeln!(s, "exit_code = {}", report.exit_code());
    s
}
