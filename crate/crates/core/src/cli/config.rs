//! Flat `key = value` experiment configuration with a strict schema.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use crate::noise::Distribution;

/// Parse or validation failure, located by line where possible.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` {message}")]
    Schema { line: usize, key: String, message: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("line {line}: `{key} = {value}` out of range: {message}")]
    Range {
        line: usize,
        key: String,
        value: String,
        message: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    LinearRandomGain,
    LinearCoarseGrain,
    StochasticGradient,
    VdpCoupled,
    AdditiveNoise,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::LinearRandomGain,
        ScenarioKind::LinearCoarseGrain,
        ScenarioKind::StochasticGradient,
        ScenarioKind::VdpCoupled,
        ScenarioKind::AdditiveNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::LinearRandomGain => "linear_random_gain",
            Self::LinearCoarseGrain => "linear_coarse_grain",
            Self::StochasticGradient => "stochastic_gradient",
            Self::VdpCoupled => "vdp_coupled",
            Self::AdditiveNoise => "additive_noise",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, Self::LinearRandomGain | Self::StochasticGradient)
    }

    /// One-paragraph description for `list-scenarios`.
    pub fn describe(self) -> &'static str {
        match self {
            Self::LinearRandomGain => {
                "discrete  x' = a x, a ~ noise.dist (1 component)\n  no parameters; init.x0 default 1"
            }
            Self::LinearCoarseGrain => {
                "continuous  dx/dt = g(t) x, g piecewise constant ~ noise.dist (1 component)\n  no parameters; init.x0 default 1"
            }
            Self::StochasticGradient => {
                "discrete  P' = P - mu (E(P + Pi) - E(P)) Pi on E(P) = 1/2 (P - c)' H (P - c)\n  params.mu (required), params.hessian = diagonal of H (default 1, 4),\n  params.center = c (default 0); Pi ~ noise.dist per component; init.offset = pair offset (default 1e-3)"
            }
            Self::VdpCoupled => {
                "continuous  two Van der Pol oscillators coupled through eps1(t), eps2(t) (noise.dist.1, noise.dist.2)\n  params.alpha (default 1), params.w (default 1); init.x0 default 2, 0, -1, 0.5"
            }
            Self::AdditiveNoise => {
                "continuous  dx/dt = f(x) + xi(t), xi zero-mean ~ noise.dist per component\n  params.drift = linear | cubic (default linear), params.rate (linear, default 1),\n  params.dim (default 1), params.lambda = known bound (otherwise probed on [-params.box, params.box]^dim, default 5);\n  init.x0b = second start for deviation-bound (default init.x0)"
            }
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Analysis {
    Lyapunov,
    T1,
    T2,
    T3,
    T4,
    MsRate,
    MeanTrajectory,
    DeviationBound,
    Sync,
    MeanDecay,
    SgCondition,
}

impl Analysis {
    pub const ALL: [Analysis; 11] = [
        Analysis::Lyapunov,
        Analysis::T1,
        Analysis::T2,
        Analysis::T3,
        Analysis::T4,
        Analysis::MsRate,
        Analysis::MeanTrajectory,
        Analysis::DeviationBound,
        Analysis::Sync,
        Analysis::MeanDecay,
        Analysis::SgCondition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lyapunov => "lyapunov",
            Self::T1 => "t1",
            Self::T2 => "t2",
            Self::T3 => "t3",
            Self::T4 => "t4",
            Self::MsRate => "ms-rate",
            Self::MeanTrajectory => "mean-trajectory",
            Self::DeviationBound => "deviation-bound",
            Self::Sync => "sync",
            Self::MeanDecay => "mean-decay",
            Self::SgCondition => "sg-condition",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn applies_to(self, kind: ScenarioKind) -> bool {
        use ScenarioKind::*;
        match self {
            Self::Lyapunov => true,
            Self::T1 | Self::T2 | Self::MsRate | Self::MeanDecay => kind.is_discrete(),
            Self::T3 | Self::T4 => !kind.is_discrete(),
            Self::MeanTrajectory | Self::DeviationBound => kind == AdditiveNoise,
            Self::Sync => kind == VdpCoupled,
            Self::SgCondition => kind == StochasticGradient,
        }
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Drift {
    Linear,
    Cubic,
}

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseTiming {
    Discrete,
    Uniform(f64),
    Boundaries(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Horizon {
    Steps(u64),
    Time(f64),
}

/// Scenario parameters; only those relevant to the chosen scenario are used.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioParams {
    pub alpha: f64,
    pub w: f64,
    pub mu: f64,
    pub hessian: Vec<f64>,
    pub center: Vec<f64>,
    pub drift: Drift,
    pub rate: f64,
    pub dim: usize,
    pub lambda: Option<f64>,
    pub probe_box: f64,
}

/// Fully resolved experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub params: ScenarioParams,
    /// One law per noise component.
    pub noise: Vec<Distribution>,
    pub timing: NoiseTiming,
    pub horizon: Horizon,
    pub h: Option<f64>,
    pub paths: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub write_trajectories: bool,
    pub stride: usize,
    pub analyses: Vec<Analysis>,
    pub x0: Vec<f64>,
    pub x0b: Option<Vec<f64>>,
    pub offset: f64,
    /// Optional thresholds for t1..t4.
    pub eta: [Option<f64>; 4],
    /// Block length for t1/t2; `None` pools all steps.
    pub block: Option<usize>,
    pub lyapunov_tail: f64,
    pub ms_steps: usize,
    pub sync_tol: f64,
    pub sync_fraction: f64,
    pub sync_tail: f64,
}

const KEYS: &[&str] = &[
    "scenario",
    "metric",
    "noise.dist",
    "noise.delta",
    "noise.boundaries",
    "horizon.steps",
    "horizon.time",
    "integrator.h",
    "ensemble.paths",
    "seed",
    "output.dir",
    "output.trajectories",
    "output.stride",
    "analyses",
    "init.x0",
    "init.x0b",
    "init.offset",
    "params.alpha",
    "params.w",
    "params.mu",
    "params.hessian",
    "params.center",
    "params.drift",
    "params.rate",
    "params.dim",
    "params.lambda",
    "params.box",
    "t1.eta",
    "t2.eta",
    "t3.eta",
    "t4.eta",
    "t1.block",
    "t2.block",
    "lyapunov.tail",
    "ms_rate.steps",
    "sync.tol",
    "sync.fraction",
    "sync.tail",
];

fn scenario_keys(kind: ScenarioKind) -> &'static [&'static str] {
    match kind {
        ScenarioKind::LinearRandomGain | ScenarioKind::LinearCoarseGrain => &[],
        ScenarioKind::StochasticGradient => &["params.mu", "params.hessian", "params.center", "init.offset"],
        ScenarioKind::VdpCoupled => &["params.alpha", "params.w"],
        ScenarioKind::AdditiveNoise => &[
            "params.drift",
            "params.rate",
            "params.dim",
            "params.lambda",
            "params.box",
            "init.x0b",
        ],
    }
}

struct Entry {
    line: usize,
    value: String,
}

struct Reader {
    entries: BTreeMap<String, Entry>,
}

impl Reader {
    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn bad(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Schema {
            line: self.line(key),
            key: key.into(),
            message: message.into(),
        }
    }

    fn range(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Range {
            line: self.line(key),
            key: key.into(),
            value: self.raw(key).unwrap_or_default().into(),
            message: message.into(),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(key)
            .map(|v| parse_f64(v).ok_or_else(|| self.bad(key, format!("expects a number, got `{v}`"))))
            .transpose()
    }

    fn positive(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.f64(key)? {
            Some(v) if !(v > 0.0 && v.is_finite()) => Err(self.range(key, "must be positive")),
            v => Ok(v),
        }
    }

    fn fraction(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.f64(key)? {
            Some(v) if !(v > 0.0 && v <= 1.0) => Err(self.range(key, "must lie in (0, 1]")),
            v => Ok(v),
        }
    }

    fn count(&self, key: &str, min: u64) -> Result<Option<u64>, ConfigError> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let n = parse_count(v).ok_or_else(|| self.bad(key, format!("expects a non-negative integer, got `{v}`")))?;
        if n < min {
            return Err(self.range(key, format!("must be at least {min}")));
        }
        Ok(Some(n))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(|s| parse_f64(s.trim()).ok_or_else(|| self.bad(key, format!("expects a comma-separated list of numbers, got `{v}`"))))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn dist(&self, key: &str) -> Result<Option<Distribution>, ConfigError> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let d = parse_distribution(v).map_err(|m| self.bad(key, m))?;
        d.validate().map_err(|e| self.range(key, e.to_string()))?;
        Ok(Some(d))
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse::<f64>().ok().filter(|v| !v.is_nan()),
    }
}

/// Accepts `100000` as well as `1e5`.
fn parse_count(s: &str) -> Option<u64> {
    s.parse::<u64>().ok().or_else(|| {
        let v: f64 = s.parse().ok()?;
        (v >= 0.0 && v.fract() == 0.0 && v < 9.007_199_254_740_992e15).then_some(v as u64)
    })
}

/// `uniform(a, b)`, `two_point(v1, v2[, p])`, `clipped_gaussian(m, s, c)`,
/// `constant(c)`; braces may replace parentheses and `-` may replace `_`.
pub fn parse_distribution(s: &str) -> Result<Distribution, String> {
    let s = s.trim();
    let open = s.find(['(', '{']).ok_or_else(|| format!("expects a distribution like `uniform(a, b)`, got `{s}`"))?;
    let close = if s.as_bytes()[open] == b'(' { ')' } else { '}' };
    if !s.ends_with(close) {
        return Err(format!("unbalanced brackets in `{s}`"));
    }
    let name = s[..open].trim().replace('-', "_");
    let args = s[open + 1..s.len() - 1]
        .split(',')
        .map(|a| parse_f64(a.trim()).ok_or_else(|| format!("bad number `{}` in `{s}`", a.trim())))
        .collect::<Result<Vec<_>, _>>()?;
    let arity = |n: &[usize]| {
        if n.contains(&args.len()) {
            Ok(())
        } else {
            Err(format!("`{name}` takes {n:?} arguments, got {}", args.len()))
        }
    };
    match name.as_str() {
        "uniform" => arity(&[2]).map(|_| Distribution::Uniform { a: args[0], b: args[1] }),
        "two_point" => arity(&[2, 3]).map(|_| Distribution::TwoPoint {
            v1: args[0],
            v2: args[1],
            p: args.get(2).copied().unwrap_or(0.5),
        }),
        "clipped_gaussian" => arity(&[3]).map(|_| Distribution::ClippedGaussian {
            mean: args[0],
            stdev: args[1],
            clip: args[2],
        }),
        "constant" => arity(&[1]).map(|_| Distribution::Constant(args[0])),
        _ => Err(format!("unknown distribution `{name}`")),
    }
}

fn distribution_text(d: &Distribution) -> String {
    match d {
        Distribution::Uniform { a, b } => format!("uniform({a}, {b})"),
        Distribution::TwoPoint { v1, v2, p } => format!("two_point({v1}, {v2}, {p})"),
        Distribution::ClippedGaussian { mean, stdev, clip } => format!("clipped_gaussian({mean}, {stdev}, {clip})"),
        Distribution::Constant(c) => format!("constant({c})"),
    }
}

fn list_text(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

/// Splits text into `key → (line, value)`; rejects malformed lines,
/// duplicates and unknown keys.
fn read_entries(text: &str) -> Result<Reader, ConfigError> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: "empty key or value".into(),
            });
        }
        let known = KEYS.contains(&key) || dist_override_index(key).is_some();
        if !known {
            return Err(ConfigError::UnknownKey { line, key: key.into() });
        }
        if let Some(prev) = entries.insert(
            key.to_string(),
            Entry {
                line,
                value: value.to_string(),
            },
        ) {
            return Err(ConfigError::Schema {
                line,
                key: key.into(),
                message: format!("repeats line {}", prev.line),
            });
        }
    }
    Ok(Reader { entries })
}

/// `noise.dist.K` with `K ≥ 1`.
fn dist_override_index(key: &str) -> Option<usize> {
    key.strip_prefix("noise.dist.")?.parse::<usize>().ok().filter(|k| *k >= 1)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let r = read_entries(text)?;
    let scenario_raw = r.raw("scenario").ok_or_else(|| ConfigError::Missing("scenario".into()))?;
    let scenario = ScenarioKind::from_name(scenario_raw).ok_or_else(|| {
        let names: Vec<_> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
        r.bad("scenario", format!("names no scenario (`{scenario_raw}`); known: {}", names.join(", ")))
    })?;

    let discrete = scenario.is_discrete();
    for key in r.entries.keys() {
        let owned_by = ScenarioKind::ALL.iter().find(|k| scenario_keys(**k).contains(&key.as_str()));
        if let Some(owner) = owned_by {
            if !scenario_keys(scenario).contains(&key.as_str()) {
                return Err(r.bad(key, format!("applies to {owner}, not {scenario}")));
            }
        }
        let continuous_only = ["noise.delta", "noise.boundaries", "horizon.time", "integrator.h"];
        let discrete_only = ["horizon.steps", "t1.eta", "t2.eta", "t1.block", "t2.block", "ms_rate.steps"];
        if discrete && continuous_only.contains(&key.as_str()) {
            return Err(r.bad(key, format!("does not apply to the discrete scenario {scenario}")));
        }
        if !discrete && discrete_only.contains(&key.as_str()) {
            return Err(r.bad(key, format!("does not apply to the continuous scenario {scenario}")));
        }
    }
    if let Some(m) = r.raw("metric") {
        if m != "identity" {
            return Err(r.bad("metric", format!("supports only `identity`, got `{m}`")));
        }
    }

    let params = ScenarioParams {
        alpha: r.positive("params.alpha")?.unwrap_or(1.0),
        w: r.positive("params.w")?.unwrap_or(1.0),
        mu: match scenario {
            ScenarioKind::StochasticGradient => {
                r.positive("params.mu")?.ok_or_else(|| ConfigError::Missing("params.mu".into()))?
            }
            _ => 0.0,
        },
        hessian: r.list("params.hessian")?.unwrap_or_else(|| vec![1.0, 4.0]),
        center: r.list("params.center")?.unwrap_or_default(),
        drift: match r.raw("params.drift") {
            None | Some("linear") => Drift::Linear,
            Some("cubic") => Drift::Cubic,
            Some(other) => return Err(r.bad("params.drift", format!("expects `linear` or `cubic`, got `{other}`"))),
        },
        rate: r.positive("params.rate")?.unwrap_or(1.0),
        dim: r.count("params.dim", 1)?.unwrap_or(1) as usize,
        lambda: r.f64("params.lambda")?,
        probe_box: r.positive("params.box")?.unwrap_or(5.0),
    };
    if params.lambda.is_some_and(|l| !(l < 0.0)) {
        return Err(r.range("params.lambda", "a contraction bound must be negative"));
    }
    if r.raw("params.rate").is_some() && params.drift != Drift::Linear {
        return Err(r.bad("params.rate", "applies only to the linear drift"));
    }
    let mut params = params;
    if scenario == ScenarioKind::StochasticGradient {
        if params.hessian.is_empty() {
            return Err(r.range("params.hessian", "needs at least one entry"));
        }
        if params.center.is_empty() {
            params.center = vec![0.0; params.hessian.len()];
        }
        if params.center.len() != params.hessian.len() {
            return Err(r.range("params.center", format!("needs {} entries", params.hessian.len())));
        }
    }

    let (state_dim, noise_dim) = match scenario {
        ScenarioKind::LinearRandomGain | ScenarioKind::LinearCoarseGrain => (1, 1),
        ScenarioKind::StochasticGradient => (params.hessian.len(), params.hessian.len()),
        ScenarioKind::VdpCoupled => (4, 2),
        ScenarioKind::AdditiveNoise => (params.dim, params.dim),
    };

    let base = r.dist("noise.dist")?;
    let mut noise = vec![base.clone(); noise_dim];
    for key in r.entries.keys() {
        if let Some(k) = dist_override_index(key) {
            if k > noise_dim {
                return Err(r.bad(key, format!("but {scenario} has {noise_dim} noise component(s)")));
            }
            noise[k - 1] = r.dist(key)?;
        }
    }
    let noise = noise
        .into_iter()
        .enumerate()
        .map(|(k, d)| d.ok_or_else(|| ConfigError::Missing(if noise_dim == 1 { "noise.dist".into() } else { format!("noise.dist (or noise.dist.{})", k + 1) })))
        .collect::<Result<Vec<_>, _>>()?;

    let timing = if discrete {
        NoiseTiming::Discrete
    } else {
        match (r.positive("noise.delta")?, r.list("noise.boundaries")?) {
            (Some(_), Some(_)) => return Err(r.bad("noise.boundaries", "conflicts with noise.delta")),
            (Some(d), None) => NoiseTiming::Uniform(d),
            (None, Some(b)) => {
                crate::noise::Partition::explicit(b.clone()).map_err(|e| r.range("noise.boundaries", e.to_string()))?;
                NoiseTiming::Boundaries(b)
            }
            (None, None) => return Err(ConfigError::Missing("noise.delta (or noise.boundaries)".into())),
        }
    };

    let horizon = if discrete {
        Horizon::Steps(r.count("horizon.steps", 1)?.ok_or_else(|| ConfigError::Missing("horizon.steps".into()))?)
    } else {
        Horizon::Time(r.positive("horizon.time")?.ok_or_else(|| ConfigError::Missing("horizon.time".into()))?)
    };

    let analyses = match r.raw("analyses") {
        None => vec![Analysis::Lyapunov],
        Some(v) => {
            let mut out = Vec::new();
            for name in v.split(',').map(str::trim) {
                let a = Analysis::from_name(name).ok_or_else(|| r.bad("analyses", format!("names no analysis (`{name}`)")))?;
                if !a.applies_to(scenario) {
                    return Err(r.bad("analyses", format!("`{a}` does not apply to {scenario}")));
                }
                if out.contains(&a) {
                    return Err(r.bad("analyses", format!("lists `{a}` twice")));
                }
                out.push(a);
            }
            out
        }
    };

    let default_x0 = match scenario {
        ScenarioKind::VdpCoupled => vec![2.0, 0.0, -1.0, 0.5],
        _ => vec![1.0; state_dim],
    };
    let x0 = r.list("init.x0")?.unwrap_or(default_x0);
    if x0.len() != state_dim {
        return Err(r.range("init.x0", format!("{scenario} has state dimension {state_dim}")));
    }
    let x0b = r.list("init.x0b")?;
    if x0b.as_ref().is_some_and(|v| v.len() != state_dim) {
        return Err(r.range("init.x0b", format!("{scenario} has state dimension {state_dim}")));
    }

    let eta = [r.f64("t1.eta")?, r.f64("t2.eta")?, r.f64("t3.eta")?, r.f64("t4.eta")?];
    let block = match (r.count("t1.block", 1)?, r.count("t2.block", 1)?) {
        (Some(a), Some(b)) if a != b => return Err(r.bad("t2.block", "must equal t1.block")),
        (a, b) => a.or(b).map(|v| v as usize),
    };

    Ok(ExperimentConfig {
        scenario,
        params,
        noise,
        timing,
        horizon,
        h: r.positive("integrator.h")?,
        paths: r.count("ensemble.paths", 1)?.unwrap_or(1) as usize,
        seed: match r.raw("seed") {
            None => 0,
            Some(v) => v.parse::<u64>().map_err(|_| r.bad("seed", format!("expects an unsigned 64-bit integer, got `{v}`")))?,
        },
        out_dir: PathBuf::from(r.raw("output.dir").unwrap_or("out")),
        write_trajectories: match r.raw("output.trajectories") {
            None | Some("false") => false,
            Some("true") => true,
            Some(v) => return Err(r.bad("output.trajectories", format!("expects true or false, got `{v}`"))),
        },
        stride: r.count("output.stride", 1)?.unwrap_or(1) as usize,
        analyses,
        x0,
        x0b,
        offset: r.positive("init.offset")?.unwrap_or(1e-3),
        eta,
        block,
        lyapunov_tail: r.fraction("lyapunov.tail")?.unwrap_or(0.5),
        ms_steps: r.count("ms_rate.steps", 1)?.unwrap_or(50) as usize,
        sync_tol: r.positive("sync.tol")?.unwrap_or(1e-2),
        sync_fraction: r.fraction("sync.fraction")?.unwrap_or(0.95),
        sync_tail: r.fraction("sync.tail")?.unwrap_or(0.2),
    })
}

impl ExperimentConfig {
    /// Canonical text with every default written out; parses back to an
    /// equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("scenario", self.scenario.name().into());
        kv("metric", "identity".into());
        let p = &self.params;
        match self.scenario {
            ScenarioKind::StochasticGradient => {
                kv("params.mu", p.mu.to_string());
                kv("params.hessian", list_text(&p.hessian));
                kv("params.center", list_text(&p.center));
            }
            ScenarioKind::VdpCoupled => {
                kv("params.alpha", p.alpha.to_string());
                kv("params.w", p.w.to_string());
            }
            ScenarioKind::AdditiveNoise => {
                kv(
                    "params.drift",
                    match p.drift {
                        Drift::Linear => "linear",
                        Drift::Cubic => "cubic",
                    }
                    .into(),
                );
                if p.drift == Drift::Linear {
                    kv("params.rate", p.rate.to_string());
                }
                kv("params.dim", p.dim.to_string());
                if let Some(l) = p.lambda {
                    kv("params.lambda", l.to_string());
                }
                kv("params.box", p.probe_box.to_string());
            }
            _ => {}
        }
        for (k, d) in self.noise.iter().enumerate() {
            kv(&format!("noise.dist.{}", k + 1), distribution_text(d));
        }
        match &self.timing {
            NoiseTiming::Discrete => {}
            NoiseTiming::Uniform(d) => kv("noise.delta", d.to_string()),
            NoiseTiming::Boundaries(b) => kv("noise.boundaries", list_text(b)),
        }
        match self.horizon {
            Horizon::Steps(n) => kv("horizon.steps", n.to_string()),
            Horizon::Time(t) => kv("horizon.time", t.to_string()),
        }
        if let Some(h) = self.h {
            kv("integrator.h", h.to_string());
        }
        kv("ensemble.paths", self.paths.to_string());
        kv("seed", self.seed.to_string());
        kv("output.dir", self.out_dir.display().to_string());
        kv("output.trajectories", self.write_trajectories.to_string());
        kv("output.stride", self.stride.to_string());
        kv(
            "analyses",
            self.analyses.iter().map(|a| a.name()).collect::<Vec<_>>().join(", "),
        );
        kv("init.x0", list_text(&self.x0));
        if let Some(b) = &self.x0b {
            kv("init.x0b", list_text(b));
        }
        if self.scenario == ScenarioKind::StochasticGradient {
            kv("init.offset", self.offset.to_string());
        }
        let discrete = self.scenario.is_discrete();
        for (k, e) in self.eta.iter().enumerate() {
            if let Some(e) = e {
                kv(&format!("t{}.eta", k + 1), e.to_string());
            }
        }
        if discrete {
            if let Some(b) = self.block {
                kv("t1.block", b.to_string());
            }
            kv("ms_rate.steps", self.ms_steps.to_string());
        }
        kv("lyapunov.tail", self.lyapunov_tail.to_string());
        kv("sync.tol", self.sync_tol.to_string());
        kv("sync.fraction", self.sync_fraction.to_string());
        kv("sync.tail", self.sync_tail.to_string());
        s
    }

    pub fn steps(&self) -> Option<u64> {
        match self.horizon {
            Horizon::Steps(n) => Some(n),
            Horizon::Time(_) => None,
        }
    }

    pub fn time(&self) -> Option<f64> {
        match self.horizon {
            Horizon::Time(t) => Some(t),
            Horizon::Steps(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "scenario = linear_random_gain\nnoise.dist = two_point(0.5, 1.5)\nhorizon.steps = 1e5\nensemble.paths = 1\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.steps(), Some(100_000));
        assert_eq!(c.paths, 1);
        assert_eq!(c.seed, 0);
        assert_eq!(c.analyses, vec![Analysis::Lyapunov]);
        assert_eq!(c.x0, vec![1.0]);
        assert_eq!(c.noise, vec![Distribution::TwoPoint { v1: 0.5, v2: 1.5, p: 0.5 }]);
        assert_eq!(c.timing, NoiseTiming::Discrete);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config(&format!("{MINIMAL}stepsz = 3\n")).unwrap_err();
        assert_eq!(
            e,
            ConfigError::UnknownKey {
                line: 5,
                key: "stepsz".into()
            }
        );
        assert!(e.to_string().contains("stepsz"));
    }

    #[test]
    fn zero_paths_is_a_range_error() {
        let e = parse_config(&MINIMAL.replace("ensemble.paths = 1", "ensemble.paths = 0")).unwrap_err();
        assert!(matches!(e, ConfigError::Range { line: 4, ref key, .. } if key == "ensemble.paths"), "{e}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let e = parse_config("# comment\n\nscenario linear_random_gain\n").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 3, .. }));
        let e = parse_config(&format!("{MINIMAL}seed = 1\nseed = 2\n")).unwrap_err();
        assert!(matches!(e, ConfigError::Schema { line: 6, .. }));
    }

    #[test]
    fn schema_rejects_misplaced_keys() {
        for extra in ["horizon.time = 3", "params.alpha = 2", "analyses = t3", "noise.dist.2 = constant(1)"] {
            assert!(
                matches!(parse_config(&format!("{MINIMAL}{extra}\n")), Err(ConfigError::Schema { .. })),
                "{extra}"
            );
        }
        assert_eq!(
            parse_config("noise.dist = constant(1)\n").unwrap_err(),
            ConfigError::Missing("scenario".into())
        );
    }

    #[test]
    fn range_violations() {
        let cases = [
            MINIMAL.replace("horizon.steps = 1e5", "horizon.steps = 0"),
            MINIMAL.replace("two_point(0.5, 1.5)", "uniform(1, 0)"),
            "scenario = linear_coarse_grain\nnoise.dist = constant(1)\nnoise.delta = 1\nhorizon.time = 5\nintegrator.h = -1\n".into(),
            "scenario = vdp_coupled\nparams.alpha = 0\nnoise.dist = constant(1)\nnoise.delta = 1\nhorizon.time = 5\n".into(),
        ];
        for text in cases {
            assert!(matches!(parse_config(&text), Err(ConfigError::Range { .. })), "{text}");
        }
    }

    #[test]
    fn distributions_parse() {
        assert_eq!(parse_distribution("two-point{0.5,1.5}").unwrap(), Distribution::TwoPoint { v1: 0.5, v2: 1.5, p: 0.5 });
        assert_eq!(parse_distribution("uniform(0.2, 0.8)").unwrap(), Distribution::Uniform { a: 0.2, b: 0.8 });
        assert!(parse_distribution("uniform(0.2)").is_err());
        assert!(parse_distribution("cauchy(0, 1)").is_err());
    }

    #[test]
    fn canonical_text_round_trips() {
        let texts = [
            MINIMAL.to_string(),
            "scenario = vdp_coupled\nnoise.dist.1 = uniform(0.1, 1.1)\nnoise.dist.2 = constant(1)\nnoise.delta = 0.05\nhorizon.time = 10\nanalyses = lyapunov, sync\n".into(),
            "scenario = stochastic_gradient\nparams.mu = 0.4\nnoise.dist = two_point(-1, 1)\nhorizon.steps = 20\nanalyses = sg-condition, mean-decay\nt1.block = 5\n".into(),
            "scenario = additive_noise\nparams.drift = cubic\nparams.dim = 2\nnoise.dist = uniform(-1, 1)\nnoise.boundaries = 0.1, 0.3\nhorizon.time = 1\ninit.x0b = 0, 1\n".into(),
        ];
        for t in texts {
            let c = parse_config(&t).unwrap();
            assert_eq!(parse_config(&c.to_text()).unwrap(), c, "{}", c.to_text());
        }
    }
}
