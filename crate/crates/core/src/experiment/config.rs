//! TOML experiment configuration: named presets plus overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::{DtPolicy, Quadrature};
use crate::kernel::{Diffusion, InteractionKernel};
use crate::params::{GammaMode, ModelParams, RateMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Fp,
    Mc,
    NetworkOnly,
    Moments,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp" => Ok(Self::Fp),
            "mc" => Ok(Self::Mc),
            "network-only" => Ok(Self::NetworkOnly),
            "moments" => Ok(Self::Moments),
            _ => Err(config_error(None, Some("solver"), format!("unknown solver `{s}`"))),
        }
    }
}

/// Initial datum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Bimodal opinions times the stationary degree law rho_inf(gamma0, alpha).
    Test1G0 { sigma_f2: f64, gamma0: f64 },
    Test2F0 { sigma_f2: f64, gamma0: f64, c0: usize },
    /// Followers and leaders, weighted by rho_inf(gamma0, alpha).
    Test3F0 { sigma_f2: f64, sigma_l2: f64, gamma0: f64 },
    /// Uniform opinions times rho_inf(gamma0, alpha).
    Test4Uniform { gamma0: f64 },
    Dirac { w: f64, c: usize },
    /// CSV with header `w,c,f`, rows ordered as the snapshot files.
    File { path: PathBuf },
}

/// What the diagnostics L1 error column compares against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    None,
    /// Opinion marginal against the case-1 profile with the initial mean opinion.
    Opinion,
    /// Full density against that profile times the truncated stationary degree law.
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum GammaSetting {
    Pinned(f64),
    Word(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    alpha: Option<f64>,
    beta: Option<f64>,
    sigma2: Option<f64>,
    epsilon: Option<f64>,
    eta: Option<f64>,
    lambda_freq: Option<f64>,
    gamma: Option<GammaSetting>,
    rates: Option<RateMode>,
}

impl RawModel {
    fn over(self, base: RawModel) -> RawModel {
        RawModel {
            alpha: self.alpha.or(base.alpha),
            beta: self.beta.or(base.beta),
            sigma2: self.sigma2.or(base.sigma2),
            epsilon: self.epsilon.or(base.epsilon),
            eta: self.eta.or(base.eta),
            lambda_freq: self.lambda_freq.or(base.lambda_freq),
            gamma: self.gamma.or(base.gamma),
            rates: self.rates.or(base.rates),
        }
    }
}

/// The file format. Every key is optional here; `resolve` reports the missing ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    preset: Option<String>,
    name: Option<String>,
    solver: Option<SolverKind>,
    n: Option<usize>,
    c_max: Option<usize>,
    t_end: Option<f64>,
    dt: Option<String>,
    seed: Option<u64>,
    quadrature: Option<Quadrature>,
    snapshots: Option<Vec<f64>>,
    diagnostics_every: Option<usize>,
    row_dominance: Option<bool>,
    alphas: Option<Vec<f64>>,
    n_samples: Option<usize>,
    out_dir: Option<PathBuf>,
    model: Option<RawModel>,
    kernel: Option<InteractionKernel>,
    diffusion: Option<Diffusion>,
    initial: Option<InitialSpec>,
    reference: Option<ReferenceKind>,
}

impl RawConfig {
    /// Field-wise override: values set in `self` win, tables are merged key by key
    /// except `kernel`, `diffusion` and `initial`, which are replaced whole.
    fn over(self, base: RawConfig) -> RawConfig {
        let model = match (self.model, base.model) {
            (Some(a), Some(b)) => Some(a.over(b)),
            (a, b) => a.or(b),
        };
        RawConfig {
            preset: self.preset.or(base.preset),
            name: self.name.or(base.name),
            solver: self.solver.or(base.solver),
            n: self.n.or(base.n),
            c_max: self.c_max.or(base.c_max),
            t_end: self.t_end.or(base.t_end),
            dt: self.dt.or(base.dt),
            seed: self.seed.or(base.seed),
            quadrature: self.quadrature.or(base.quadrature),
            snapshots: self.snapshots.or(base.snapshots),
            diagnostics_every: self.diagnostics_every.or(base.diagnostics_every),
            row_dominance: self.row_dominance.or(base.row_dominance),
            alphas: self.alphas.or(base.alphas),
            n_samples: self.n_samples.or(base.n_samples),
            out_dir: self.out_dir.or(base.out_dir),
            model,
            kernel: self.kernel.or(base.kernel),
            diffusion: self.diffusion.or(base.diffusion),
            initial: self.initial.or(base.initial),
            reference: self.reference.or(base.reference),
        }
    }
}

/// Validated experiment description.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub solver: SolverKind,
    pub params: ModelParams,
    pub kernel: InteractionKernel,
    pub diffusion: Diffusion,
    pub initial: InitialSpec,
    pub reference: ReferenceKind,
    pub n: usize,
    pub c_max: usize,
    pub t_end: f64,
    pub dt: DtPolicy,
    pub seed: u64,
    pub quadrature: Quadrature,
    pub snapshots: Vec<f64>,
    /// Diagnostics are recorded every this many steps, and at every snapshot.
    pub diagnostics_every: usize,
    /// Enforce the row-dominance bounds on the network step (constant rates only).
    pub row_dominance: bool,
    /// Attraction coefficients swept by the network-only solver.
    pub alphas: Vec<f64>,
    /// Number of particles of the Monte Carlo solver.
    pub n_samples: usize,
    pub out_dir: PathBuf,
}

pub const PRESETS: [&str; 5] = ["test1", "test2", "test3", "test4", "fig1"];

const COMMON: &str = r#"
solver = "fp"
n = 80
c_max = 250
dt = "auto"
seed = 0
quadrature = "midpoint"
diagnostics_every = 1
row_dominance = true
n_samples = 100000
out_dir = "out"
reference = "none"

[model]
alpha = 0.1
beta = 0.0
sigma2 = 0.05
epsilon = 0.0005
eta = 0.25
lambda_freq = 1.0
gamma = 30.0

[kernel]
h = { type = "unity" }
k = { type = "unity" }

[diffusion]
type = "quadratic"
"#;

const TEST1: &str = r#"
name = "test1"
t_end = 10.0
dt = "paper:test1"
snapshots = [0.5, 1.0, 2.0, 5.0, 10.0]
reference = "opinion"

[model]
rates = { type = "constant", v_r = 1.0, v_a = 1.0 }

[initial]
type = "test1_g0"
sigma_f2 = 0.06
gamma0 = 30.0
"#;

// Rates are set per run: constant V or density-dependent U in {1e3, 1e4, 1e5}.
const TEST2: &str = r#"
name = "test2"
t_end = 20.0
snapshots = [1.0, 2.0, 5.0, 10.0, 20.0]
reference = "joint"

[initial]
type = "test2_f0"
sigma_f2 = 0.06
gamma0 = 30.0
c0 = 20
"#;

const TEST3: &str = r#"
name = "test3"
t_end = 2.5
snapshots = [0.1, 0.5, 1.0, 2.0, 2.5]

[model]
alpha = 0.0001
sigma2 = 0.005
rates = { type = "constant", v_r = 1.0, v_a = 1.0 }

[kernel]
h = { type = "local" }
k = { type = "power", a = 3.0, b = 3.0, clamp = false }

[initial]
type = "test3_f0"
sigma_f2 = 0.04
sigma_l2 = 0.025
gamma0 = 30.0
"#;

const TEST4: &str = r#"
name = "test4"
t_end = 100.0
snapshots = [1.0, 10.0, 50.0, 100.0]

[model]
sigma2 = 0.001
rates = { type = "constant", v_r = 1.0, v_a = 1.0 }

[kernel]
h = { type = "bounded_confidence", confidence = { type = "constant", delta = 0.25 } }
k = { type = "unity" }

[initial]
type = "test4_uniform"
gamma0 = 30.0
"#;

const FIG1: &str = r#"
name = "fig1"
solver = "network-only"
n = 20
c_max = 1500
t_end = 200000.0
dt = "fixed:5.0"
diagnostics_every = 100
alphas = [0.1, 0.01, 0.001]
snapshots = [100.0, 1000.0, 10000.0, 100000.0]

[model]
rates = { type = "constant", v_r = 1.0, v_a = 1.0 }

[initial]
type = "dirac"
w = 0.0
c = 30
"#;

fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "test1" => Some(TEST1),
        "test2" => Some(TEST2),
        "test3" => Some(TEST3),
        "test4" => Some(TEST4),
        "fig1" => Some(FIG1),
        _ => None,
    }
}

pub(crate) fn config_error(line: Option<usize>, key: Option<&str>, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        key: key.map(str::to_owned),
        message: message.into(),
    }
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

// First line assigning `key` (the last path segment), for errors raised after parsing.
fn line_of_key(src: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    src.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(leaf)
            .map(|rest| rest.trim_start().starts_with('='))
            .unwrap_or(false)
            || t == format!("[{key}]")
    })
    .map(|i| i + 1)
}

fn parse_raw(src: &str) -> Result<RawConfig> {
    toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(src, s.start));
        config_error(line, None, e.message().to_owned())
    })
}

/// Raw contents of a preset, before overrides.
pub fn preset_raw(name: &str) -> Result<RawConfig> {
    let text = preset_text(name).ok_or_else(|| {
        config_error(None, Some("preset"), format!("unknown preset `{name}`, expected one of {PRESETS:?}"))
    })?;
    let common = parse_raw(COMMON).expect("built-in defaults parse");
    Ok(parse_raw(text).expect("built-in presets parse").over(common))
}

/// "auto", "fixed:<value>" or "paper:test1".
pub fn parse_dt_policy(s: &str) -> Result<DtPolicy> {
    let bad = |msg: String| config_error(None, Some("dt"), msg);
    match s.trim() {
        "auto" => Ok(DtPolicy::Auto),
        "paper:test1" => Ok(DtPolicy::PaperTest1),
        other => {
            let v = other
                .strip_prefix("fixed:")
                .ok_or_else(|| bad(format!("expected auto, fixed:<value> or paper:test1, got `{other}`")))?;
            let dt: f64 = v.trim().parse().map_err(|_| bad(format!("`{v}` is not a number")))?;
            if !(dt.is_finite() && dt > 0.0) {
                return Err(bad(format!("fixed time step must be positive, got {dt}")));
            }
            Ok(DtPolicy::Fixed(dt))
        }
    }
}

pub fn dt_policy_string(p: DtPolicy) -> String {
    match p {
        DtPolicy::Auto => "auto".into(),
        DtPolicy::Fixed(v) => format!("fixed:{v}"),
        DtPolicy::PaperTest1 => "paper:test1".into(),
    }
}

macro_rules! require {
    ($opt:expr, $key:expr) => {
        $opt.ok_or_else(|| config_error(None, Some($key), format!("missing required key `{}`", $key)))?
    };
}

impl RawConfig {
    fn resolve(self) -> Result<ExperimentConfig> {
        let model = require!(self.model, "model");
        let gamma_mode = match require!(model.gamma, "model.gamma") {
            GammaSetting::Pinned(g) => GammaMode::Pinned(g),
            GammaSetting::Word(w) if w == "evolving" => GammaMode::Evolving,
            GammaSetting::Word(w) => {
                return Err(config_error(
                    None,
                    Some("model.gamma"),
                    format!("expected a number or \"evolving\", got `{w}`"),
                ))
            }
        };
        let params = ModelParams {
            alpha: require!(model.alpha, "model.alpha"),
            beta: require!(model.beta, "model.beta"),
            rates: require!(model.rates, "model.rates"),
            gamma_mode,
            sigma2: require!(model.sigma2, "model.sigma2"),
            epsilon: require!(model.epsilon, "model.epsilon"),
            eta: require!(model.eta, "model.eta"),
            lambda_freq: require!(model.lambda_freq, "model.lambda_freq"),
        };
        let with_key = |key: &'static str| move |e: Error| match e {
            Error::InvalidParameter { name, reason } => {
                config_error(None, Some(&format!("{key}.{name}")), reason)
            }
            other => other,
        };
        params.validate().map_err(with_key("model"))?;
        let kernel = require!(self.kernel, "kernel");
        kernel.validate().map_err(with_key("kernel"))?;
        let diffusion = require!(self.diffusion, "diffusion");
        diffusion.validate().map_err(with_key("diffusion"))?;
        let n = require!(self.n, "n");
        let c_max = require!(self.c_max, "c_max");
        let t_end = require!(self.t_end, "t_end");
        if !(t_end.is_finite() && t_end >= 0.0) {
            return Err(config_error(None, Some("t_end"), "must be finite and nonnegative"));
        }
        let mut snapshots = self.snapshots.unwrap_or_default();
        if let Some(bad) = snapshots.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(config_error(None, Some("snapshots"), format!("invalid time {bad}")));
        }
        // a shortened run keeps the preset's earlier snapshot times
        snapshots.retain(|&t| t <= t_end);
        snapshots.sort_by(f64::total_cmp);
        snapshots.dedup();
        let diagnostics_every = require!(self.diagnostics_every, "diagnostics_every");
        if diagnostics_every == 0 {
            return Err(config_error(None, Some("diagnostics_every"), "must be at least 1"));
        }
        let alphas = self.alphas.unwrap_or_else(|| vec![params.alpha]);
        if alphas.is_empty() || alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(config_error(None, Some("alphas"), "needs positive finite values"));
        }
        Ok(ExperimentConfig {
            name: self.name.or(self.preset).unwrap_or_else(|| "experiment".into()),
            solver: require!(self.solver, "solver"),
            params,
            kernel,
            diffusion,
            initial: require!(self.initial, "initial"),
            reference: self.reference.unwrap_or(ReferenceKind::None),
            n,
            c_max,
            t_end,
            dt: parse_dt_policy(&require!(self.dt, "dt"))?,
            seed: self.seed.unwrap_or(0),
            quadrature: self.quadrature.unwrap_or_default(),
            snapshots,
            diagnostics_every,
            row_dominance: self.row_dominance.unwrap_or(true),
            alphas,
            n_samples: require!(self.n_samples, "n_samples"),
            out_dir: self.out_dir.unwrap_or_else(|| PathBuf::from("out")),
        })
    }
}

fn attach_line(e: Error, src: &str) -> Error {
    match e {
        Error::Config { line: None, key: Some(key), message } => Error::Config {
            line: line_of_key(src, &key),
            key: Some(key),
            message,
        },
        other => other,
    }
}

/// Parses a configuration text. A `preset` key pulls in that preset; everything else overrides it.
pub fn parse_config(src: &str) -> Result<ExperimentConfig> {
    let raw = parse_raw(src)?;
    let merged = match raw.preset.clone() {
        Some(p) => raw.over(preset_raw(&p).map_err(|e| attach_line(e, src))?),
        None => raw.over(parse_raw(COMMON).expect("built-in defaults parse")),
    };
    merged.resolve().map_err(|e| attach_line(e, src))
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let src = std::fs::read_to_string(path.as_ref())?;
    parse_config(&src)
}

/// A preset with no overrides.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    preset_raw(name)?.resolve()
}

/// A preset with its test-2 rates filled in.
pub fn preset_with_rates(name: &str, rates: RateMode) -> Result<ExperimentConfig> {
    let over = RawConfig {
        model: Some(RawModel { rates: Some(rates), ..Default::default() }),
        ..Default::default()
    };
    over.over(preset_raw(name)?).resolve()
}
