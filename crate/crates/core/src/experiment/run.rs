//! Executes an experiment and writes its artifacts.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use serde::Serialize;

use super::config::{ExperimentConfig, InitialSpec, ReferenceKind, SolverKind};
use crate::diagnostics::{compute_moments, l1_relative_error, l1_relative_error_field, solve_moment_system};
use crate::error::{Error, Result};
use crate::fp::{push_dt, DtPolicy, FpSolver, Schedule, StepInfo};
use crate::grid::{ConnectivityRange, DensityField, OpinionGrid};
use crate::initial;
use crate::kernel::{Diffusion, InteractionKernel};
use crate::mc::{Ensemble, McSchedule};
use crate::network::{explicit_rho_bound, particle_network_bound, step_rho_explicit, step_rho_implicit};
use crate::params::{GammaMode, ModelParams};
use crate::stationary::{f_inf_product, g_inf, ProfileVariant, StationaryDegreeLaw, StationaryOpinionProfile};

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| io_error(path, e))
}

/// Header `w,c,f`, rows ordered by opinion node then connectivity.
pub fn write_field_csv(path: &Path, f: &DensityField) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| io_error(path, e);
    w.write_record(["w", "c", "f"]).map_err(io)?;
    for ((i, c), v) in f.values().indexed_iter() {
        w.write_record([num(f.grid().node(i)), c.to_string(), num(*v)]).map_err(io)?;
    }
    finish(w, path)
}

/// Header `w,g`.
pub fn write_g_csv(path: &Path, grid: &OpinionGrid, g: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| io_error(path, e);
    w.write_record(["w", "g"]).map_err(io)?;
    for (i, v) in g.iter().enumerate() {
        w.write_record([num(grid.node(i)), num(*v)]).map_err(io)?;
    }
    finish(w, path)
}

/// Header `c,rho`, plus extra named columns.
pub fn write_rho_csv(path: &Path, rho: &[f64], extra: &[(&str, &[f64])]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| io_error(path, e);
    let mut header = vec!["c", "rho"];
    header.extend(extra.iter().map(|(name, _)| *name));
    w.write_record(&header).map_err(io)?;
    for (c, v) in rho.iter().enumerate() {
        let mut row = vec![c.to_string(), num(*v)];
        row.extend(extra.iter().map(|(_, col)| num(col[c])));
        w.write_record(&row).map_err(io)?;
    }
    finish(w, path)
}

/// Reads a `w,c,f` file onto the given grid.
pub fn read_field_csv(path: &Path, grid: OpinionGrid, crange: ConnectivityRange) -> Result<DensityField> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_error(path, e))?;
    let headers = r.headers().map_err(|e| io_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["w", "c", "f"] {
        return Err(io_error(path, "expected header w,c,f"));
    }
    let mut values = Array2::zeros((grid.len(), crange.len()));
    let mut seen = 0;
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| io_error(path, e))?;
        let bad = |msg: &str| io_error(path, format!("row {}: {msg}", k + 2));
        let field = |j: usize| rec.get(j).ok_or_else(|| bad("missing column"));
        let w: f64 = field(0)?.trim().parse().map_err(|_| bad("w is not a number"))?;
        let c: usize = field(1)?.trim().parse().map_err(|_| bad("c is not an index"))?;
        let v: f64 = field(2)?.trim().parse().map_err(|_| bad("f is not a number"))?;
        let i = ((w + 1.0) / grid.dw()).round();
        if !(0.0..=grid.n() as f64).contains(&i) || (grid.node(i as usize) - w).abs() > 1e-9 {
            return Err(bad("w is not a grid node"));
        }
        if c > crange.c_max() {
            return Err(bad("c exceeds c_max"));
        }
        values[[i as usize, c]] = v;
        seen += 1;
    }
    if seen != grid.len() * crange.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows", grid.len() * crange.len()),
            found: format!("{seen} rows"),
        });
    }
    DensityField::from_values(grid, crange, values)
}

/// Initial datum of the configuration, unit mass.
pub fn build_initial(cfg: &ExperimentConfig) -> Result<DensityField> {
    let grid = OpinionGrid::new(cfg.n)?;
    let crange = ConnectivityRange::new(cfg.c_max)?;
    let rho = |gamma0: f64| StationaryDegreeLaw::new(gamma0, cfg.params.alpha, cfg.c_max).map(|l| l.normalized());
    match &cfg.initial {
        InitialSpec::Test1G0 { sigma_f2, gamma0 } => initial::test1(grid, crange, &rho(*gamma0)?, *sigma_f2),
        InitialSpec::Test2F0 { sigma_f2, gamma0, c0 } => initial::test2(grid, crange, *gamma0, *sigma_f2, *c0),
        InitialSpec::Test3F0 { sigma_f2, sigma_l2, gamma0 } => {
            initial::test3(grid, crange, &rho(*gamma0)?, *sigma_f2, *sigma_l2)
        }
        InitialSpec::Test4Uniform { gamma0 } => initial::uniform(grid, crange, &rho(*gamma0)?),
        InitialSpec::Dirac { w, c } => initial::dirac(grid, crange, *w, *c),
        InitialSpec::File { path } => {
            let mut f = read_field_csv(path, grid, crange)?;
            f.normalize()?;
            Ok(f)
        }
    }
}

/// Mean connectivity the stationary degree law is built on.
fn reference_gamma(params: &ModelParams, f0: &DensityField) -> f64 {
    match params.gamma_mode {
        GammaMode::Pinned(g) => g,
        GammaMode::Evolving => f0.gamma(),
    }
}

enum Reference {
    Opinion(Vec<f64>),
    Joint(DensityField),
}

impl Reference {
    fn build(cfg: &ExperimentConfig, f0: &DensityField) -> Result<Option<Self>> {
        if cfg.reference == ReferenceKind::None {
            return Ok(None);
        }
        if cfg.kernel != InteractionKernel::UNITY || cfg.diffusion != Diffusion::Quadratic {
            return Err(Error::Unsupported(
                "the closed-form reference needs P = 1 and D = 1 - w^2".into(),
            ));
        }
        let profile = StationaryOpinionProfile {
            kappa: 1.0,
            mbar: f0.mean_opinion(),
            sigma2: cfg.params.sigma2,
            variant: ProfileVariant::Case1,
        };
        let g = g_inf(&profile, f0.grid())?;
        Ok(Some(match cfg.reference {
            ReferenceKind::Opinion => Reference::Opinion(g),
            _ => {
                let law = StationaryDegreeLaw::new(reference_gamma(&cfg.params, f0), cfg.params.alpha, cfg.c_max)?;
                Reference::Joint(f_inf_product(*f0.grid(), *f0.crange(), &g, &law.normalized())?)
            }
        }))
    }

    fn error(&self, f: &DensityField) -> Result<f64> {
        match self {
            Reference::Opinion(g) => l1_relative_error(&f.marginal_g(), g),
            Reference::Joint(r) => l1_relative_error_field(f, r),
        }
    }
}

struct Diagnostics {
    writer: csv::Writer<BufWriter<File>>,
    path: PathBuf,
    last_l1: Option<f64>,
}

impl Diagnostics {
    fn create(path: PathBuf) -> Result<Self> {
        let mut writer = csv_writer(&path)?;
        writer
            .write_record(["t", "mass", "gamma", "mean_opinion", "l1_error", "min_f"])
            .map_err(|e| io_error(&path, e))?;
        Ok(Self { writer, path, last_l1: None })
    }

    fn row(&mut self, t: f64, mass: f64, gamma: f64, mean: f64, l1: Option<f64>, min_f: f64) -> Result<()> {
        self.last_l1 = l1.or(self.last_l1);
        let l1 = l1.map(num).unwrap_or_default();
        self.writer
            .write_record([num(t), num(mass), num(gamma), num(mean), l1, num(min_f)])
            .map_err(|e| io_error(&self.path, e))
    }

    fn field_row(&mut self, t: f64, f: &DensityField, reference: Option<&Reference>) -> Result<()> {
        let l1 = reference.map(|r| r.error(f)).transpose()?;
        self.row(t, f.mass(), f.gamma(), f.mean_opinion(), l1, f.min_value())
    }

    fn close(self) -> Result<Option<f64>> {
        let Diagnostics { writer, path, last_l1 } = self;
        finish(writer, &path)?;
        Ok(last_l1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SnapshotEntry {
    pub t: f64,
    pub files: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    version: &'static str,
    solver: SolverKind,
    seed: u64,
    config: &'a ExperimentConfig,
    steps: usize,
    t_final: f64,
    /// Run-length encoded: (count, dt).
    dt_history: &'a [(usize, f64)],
    wall_time_s: f64,
    started_unix_s: u64,
    diagnostics: &'a [String],
    snapshots: &'a [SnapshotEntry],
    final_l1_error: Option<f64>,
}

/// What a finished run reports back.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub steps: usize,
    pub t: f64,
    pub final_l1_error: Option<f64>,
    pub final_mean_opinion: f64,
    pub final_gamma: f64,
    pub wall_time_s: f64,
    pub snapshots: Vec<SnapshotEntry>,
}

struct Snapshots {
    times: Vec<f64>,
    next: usize,
    entries: Vec<SnapshotEntry>,
}

impl Snapshots {
    fn new(cfg: &ExperimentConfig) -> Self {
        let mut times = vec![0.0];
        times.extend(cfg.snapshots.iter().copied());
        times.push(cfg.t_end);
        times.sort_by(f64::total_cmp);
        times.dedup();
        Self { times, next: 0, entries: Vec::new() }
    }

    /// Index of the snapshot due at time t, if any.
    fn due(&mut self, t: f64) -> Option<usize> {
        let s = *self.times.get(self.next)?;
        if (t - s).abs() <= 1e-12 * s.max(1.0) {
            self.next += 1;
            Some(self.next - 1)
        } else {
            None
        }
    }

    fn checkpoints(&self) -> Vec<f64> {
        self.times.iter().copied().filter(|&t| t > 0.0).collect()
    }

    fn write_field(&mut self, dir: &Path, k: usize, t: f64, f: &DensityField) -> Result<()> {
        let names = [format!("f_{k:03}.csv"), format!("g_{k:03}.csv"), format!("rho_{k:03}.csv")];
        write_field_csv(&dir.join(&names[0]), f)?;
        write_g_csv(&dir.join(&names[1]), f.grid(), &f.marginal_g())?;
        write_rho_csv(&dir.join(&names[2]), &f.marginal_rho(), &[])?;
        self.entries.push(SnapshotEntry { t, files: names.to_vec() });
        Ok(())
    }
}

struct Outcome {
    steps: usize,
    t: f64,
    dt_history: Vec<(usize, f64)>,
    diagnostics: Vec<String>,
    final_l1: Option<f64>,
    final_mean: f64,
    final_gamma: f64,
}

/// Runs the configured solver, writing snapshot CSVs, diagnostics CSV(s) and `manifest.json`
/// into `cfg.out_dir`. Reruns with the same configuration write identical CSVs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let started = Instant::now();
    let started_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let dir = cfg.out_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let f0 = build_initial(cfg)?;
    let mut snaps = Snapshots::new(cfg);
    let outcome = match cfg.solver {
        SolverKind::Fp => run_fp(cfg, &f0, &dir, &mut snaps)?,
        SolverKind::Mc => run_mc(cfg, &f0, &dir, &mut snaps)?,
        SolverKind::NetworkOnly => run_network(cfg, &f0, &dir, &mut snaps)?,
        SolverKind::Moments => run_moments(cfg, &f0, &dir)?,
    };
    let wall_time_s = started.elapsed().as_secs_f64();
    let manifest = Manifest {
        name: &cfg.name,
        version: env!("CARGO_PKG_VERSION"),
        solver: cfg.solver,
        seed: cfg.seed,
        config: cfg,
        steps: outcome.steps,
        t_final: outcome.t,
        dt_history: &outcome.dt_history,
        wall_time_s,
        started_unix_s,
        diagnostics: &outcome.diagnostics,
        snapshots: &snaps.entries,
        final_l1_error: outcome.final_l1,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_error(&path, e))?;
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    Ok(RunSummary {
        out_dir: dir,
        steps: outcome.steps,
        t: outcome.t,
        final_l1_error: outcome.final_l1,
        final_mean_opinion: outcome.final_mean,
        final_gamma: outcome.final_gamma,
        wall_time_s,
        snapshots: snaps.entries,
    })
}

fn run_fp(cfg: &ExperimentConfig, f0: &DensityField, dir: &Path, snaps: &mut Snapshots) -> Result<Outcome> {
    let solver = FpSolver::new(
        *f0.grid(),
        *f0.crange(),
        cfg.params,
        cfg.kernel,
        cfg.diffusion,
        cfg.quadrature,
    )?
    .with_row_dominance(cfg.row_dominance);
    let reference = Reference::build(cfg, f0)?;
    let mut diag = Diagnostics::create(dir.join("diagnostics.csv"))?;
    let mut schedule = Schedule::new(cfg.t_end, cfg.dt);
    schedule.checkpoints = snaps.checkpoints();
    let report = solver.run(f0, &schedule, |info: &StepInfo, f| {
        if info.checkpoint || info.step.is_multiple_of(cfg.diagnostics_every) {
            diag.field_row(info.t, f, reference.as_ref())?;
        }
        if info.checkpoint {
            if let Some(k) = snaps.due(info.t) {
                snaps.write_field(dir, k, info.t, f)?;
            }
        }
        Ok(())
    })?;
    Ok(Outcome {
        steps: report.steps,
        t: report.t,
        dt_history: report.dt_history,
        diagnostics: vec!["diagnostics.csv".into()],
        final_l1: diag.close()?,
        final_mean: report.field.mean_opinion(),
        final_gamma: report.field.gamma(),
    })
}

// The grid-based paper:test1 step has no meaning for particles; it falls back to auto,
// which is epsilon unless the network bound is tighter.
fn mc_dt(cfg: &ExperimentConfig, f0: &DensityField) -> Result<f64> {
    Ok(match cfg.dt {
        DtPolicy::Fixed(v) => v,
        DtPolicy::Auto | DtPolicy::PaperTest1 => {
            let gamma = cfg.params.effective_gamma(f0.gamma());
            cfg.params
                .epsilon
                .min(0.9 * particle_network_bound(&cfg.params, gamma, cfg.c_max)?)
        }
    })
}

fn run_mc(cfg: &ExperimentConfig, f0: &DensityField, dir: &Path, snaps: &mut Snapshots) -> Result<Outcome> {
    let reference = Reference::build(cfg, f0)?;
    let mut ensemble = Ensemble::sample(f0, cfg.n_samples, cfg.params, cfg.seed)?;
    let schedule = McSchedule {
        t_end: cfg.t_end,
        dt: mc_dt(cfg, f0)?,
        checkpoints: snaps.checkpoints(),
    };
    let (grid, crange) = (*f0.grid(), *f0.crange());
    let mut diag = Diagnostics::create(dir.join("diagnostics.csv"))?;
    let report = ensemble.run(&schedule, &cfg.kernel, &cfg.diffusion, |info: &StepInfo, e| {
        let record = info.checkpoint || info.step.is_multiple_of(cfg.diagnostics_every);
        if !record {
            return Ok(());
        }
        let f = e.reconstruct(grid, crange)?;
        let l1 = reference.as_ref().map(|r| r.error(&f)).transpose()?;
        diag.row(info.t, f.mass(), e.gamma(), e.mean_opinion(), l1, f.min_value())?;
        if info.checkpoint {
            if let Some(k) = snaps.due(info.t) {
                snaps.write_field(dir, k, info.t, &f)?;
            }
        }
        Ok(())
    })?;
    Ok(Outcome {
        steps: report.steps,
        t: report.t,
        dt_history: report.dt_history,
        diagnostics: vec!["diagnostics.csv".into()],
        final_l1: diag.close()?,
        final_mean: ensemble.mean_opinion(),
        final_gamma: ensemble.gamma(),
    })
}

fn mean_of(rho: &[f64]) -> f64 {
    rho.iter().enumerate().map(|(c, r)| c as f64 * r).sum()
}

// Degree dynamics alone, once per attraction coefficient. "auto" takes explicit steps at
// 0.9 times the positivity bound; "fixed:<dt>" takes backward-Euler steps.
fn run_network(cfg: &ExperimentConfig, f0: &DensityField, dir: &Path, snaps: &mut Snapshots) -> Result<Outcome> {
    if cfg.dt == DtPolicy::PaperTest1 {
        return Err(Error::Unsupported("paper:test1 time steps apply to the opinion dynamics only".into()));
    }
    let rho0 = f0.marginal_rho();
    let mean_w = f0.mean_opinion();
    let targets = snaps.checkpoints();
    let mut out = Outcome {
        steps: 0,
        t: 0.0,
        dt_history: Vec::new(),
        diagnostics: Vec::new(),
        final_l1: None,
        final_mean: mean_w,
        final_gamma: mean_of(&rho0),
    };
    let mut entries = Vec::new();
    for (a, &alpha) in cfg.alphas.iter().enumerate() {
        let params = ModelParams { alpha, ..cfg.params };
        params.validate()?;
        let law = StationaryDegreeLaw::new(reference_gamma(&params, f0), alpha, cfg.c_max)?;
        let rho_inf = law.normalized();
        let name = format!("diagnostics_a{a}.csv");
        let mut diag = Diagnostics::create(dir.join(&name))?;
        out.diagnostics.push(name);
        let mut rho = rho0.clone();
        let mut t = 0.0;
        let mut step = 0;
        let write = |k: usize, t: f64, rho: &[f64], entries: &mut Vec<SnapshotEntry>| -> Result<()> {
            let file = format!("network_a{a}_{k:03}.csv");
            write_rho_csv(&dir.join(&file), rho, &[("rho_inf", &rho_inf)])?;
            entries.push(SnapshotEntry { t, files: vec![file] });
            Ok(())
        };
        let row = |diag: &mut Diagnostics, t: f64, rho: &[f64]| -> Result<()> {
            let l1 = l1_relative_error(rho, &rho_inf)?;
            let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
            diag.row(t, rho.iter().sum(), mean_of(rho), mean_w, Some(l1), min)
        };
        row(&mut diag, 0.0, &rho)?;
        write(0, 0.0, &rho, &mut entries)?;
        for (k, &target) in (1..).zip(&targets) {
            while t < target {
                let advance = || -> Result<(Vec<f64>, f64, bool)> {
                    let gamma = params.effective_gamma(mean_of(&rho));
                    let (mut dt, implicit) = match cfg.dt {
                        DtPolicy::Fixed(v) => (v, true),
                        _ => (0.9 * explicit_rho_bound(&params, gamma, cfg.c_max)?, false),
                    };
                    let hit = t + dt >= target * (1.0 - 1e-14);
                    if hit {
                        dt = target - t;
                    }
                    let next = if implicit {
                        step_rho_implicit(&rho, &params, dt)?
                    } else {
                        step_rho_explicit(&rho, &params, dt)?
                    };
                    Ok((next, dt, hit))
                };
                let (next, dt, hit) = advance().map_err(|e| e.at_step(step + 1, t))?;
                rho = next;
                step += 1;
                t = if hit { target } else { t + dt };
                push_dt(&mut out.dt_history, dt);
                if hit || step.is_multiple_of(cfg.diagnostics_every) {
                    row(&mut diag, t, &rho)?;
                }
            }
            write(k, t, &rho, &mut entries)?;
        }
        out.steps += step;
        out.t = t;
        out.final_gamma = mean_of(&rho);
        out.final_l1 = diag.close()?;
    }
    snaps.entries = entries;
    Ok(out)
}

fn run_moments(cfg: &ExperimentConfig, f0: &DensityField, dir: &Path) -> Result<Outcome> {
    let m = compute_moments(f0, 0.0);
    let records = solve_moment_system(&m.rho, &m.m_w, &m.e_w, &cfg.params, cfg.t_end)?;
    let path = dir.join("moments.csv");
    let mut w = csv_writer(&path)?;
    let io = |e: csv::Error| io_error(&path, e);
    w.write_record(["t", "mass", "gamma", "total_mean", "variance"]).map_err(io)?;
    let mut diag = Diagnostics::create(dir.join("diagnostics.csv"))?;
    let mut history = Vec::new();
    let last = records.len() - 1;
    for (k, r) in records.iter().enumerate() {
        if k > 0 {
            push_dt(&mut history, r.t - records[k - 1].t);
        }
        if k % cfg.diagnostics_every == 0 || k == last {
            w.write_record([num(r.t), num(r.mass), num(r.gamma), num(r.total_mean), num(r.variance())])
                .map_err(io)?;
            let min = r.rho.iter().copied().fold(f64::INFINITY, f64::min);
            diag.row(r.t, r.mass, r.gamma, r.total_mean / r.mass, None, min)?;
        }
    }
    finish(w, &path)?;
    diag.close()?;
    let end = &records[last];
    Ok(Outcome {
        steps: last,
        t: end.t,
        dt_history: history,
        diagnostics: vec!["diagnostics.csv".into(), "moments.csv".into()],
        final_l1: None,
        final_mean: end.total_mean / end.mass,
        final_gamma: end.gamma,
    })
}
