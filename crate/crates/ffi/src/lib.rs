//! C ABI over the opinion-kinetics library.
//!
//! Every function returns a [`KodStatus`]; on failure the message is kept per thread and
//! can be read back with [`kod_last_error_message`]. Handles are opaque and must be
//! released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use opinion_kinetics::experiment::{self, ExperimentConfig};
use opinion_kinetics::fp::{DtPolicy, FpSolver};
use opinion_kinetics::grid::{DensityField, OpinionGrid};
use opinion_kinetics::stationary::{g_inf, ProfileVariant, StationaryDegreeLaw, StationaryOpinionProfile};
use opinion_kinetics::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KodStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    TimeStepTooLarge = 4,
    NegativeDensity = 5,
    Unsupported = 6,
    Config = 7,
    Io = 8,
    Numerical = 9,
    Panic = 10,
}

/// Opinion profile family for [`kod_g_inf`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KodProfile {
    /// H = 1, D = 1 - w^2.
    Case1 = 1,
    /// H = 1 - w^2, D = 1 - w^2.
    Case2 = 2,
}

/// Scalar observables of a density.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KodObservables {
    pub t: f64,
    pub mass: f64,
    pub gamma: f64,
    pub mean_opinion: f64,
    pub min_f: f64,
    pub steps: u64,
}

/// Outcome of [`kod_experiment_run`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KodRunSummary {
    pub steps: u64,
    pub t: f64,
    /// NaN when the experiment has no reference solution.
    pub final_l1_error: f64,
    pub final_mean_opinion: f64,
    pub final_gamma: f64,
    pub wall_time_s: f64,
}

/// A validated experiment configuration.
pub struct KodExperiment {
    config: ExperimentConfig,
}

/// A Fokker-Planck solver together with its current density.
pub struct KodSimulation {
    solver: FpSolver,
    field: DensityField,
    dt: DtPolicy,
    t: f64,
    steps: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> KodStatus {
    match e.kind() {
        "invalid_parameter" | "out_of_domain" | "shape_mismatch" => KodStatus::InvalidArgument,
        "time_step_too_large" => KodStatus::TimeStepTooLarge,
        "negative_density" => KodStatus::NegativeDensity,
        "unsupported" => KodStatus::Unsupported,
        "config" => KodStatus::Config,
        "io" => KodStatus::Io,
        _ => KodStatus::Numerical,
    }
}

struct Fail(KodStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(KodStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> KodStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            KodStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            KodStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(KodStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, needed: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < needed {
        return Err(Fail(
            KodStatus::BufferTooSmall,
            format!("{what} holds {len} values, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn put<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// Length in bytes of the last error message of this thread, without the terminator.
#[no_mangle]
pub extern "C" fn kod_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message into `buf` (NUL terminated, truncated to `len - 1` bytes).
/// Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn kod_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Truncated stationary degree law rho_inf(c), c = 0..=c_max, into `out[0..=c_max]`.
/// With `normalized` set the values are rescaled to sum one.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kod_rho_inf(
    gamma: f64,
    alpha: f64,
    c_max: usize,
    normalized: bool,
    out: *mut f64,
    len: usize,
) -> KodStatus {
    guard(|| {
        let law = StationaryDegreeLaw::new(gamma, alpha, c_max)?;
        let values = if normalized { law.normalized() } else { law.values() };
        out_slice(out, len, values.len(), "out")?.copy_from_slice(&values);
        Ok(())
    })
}

/// Stationary opinion profile on the N-cell grid (N + 1 nodes), unit discrete mass.
/// `profile` takes a [`KodProfile`] value.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kod_g_inf(
    kappa: f64,
    mbar: f64,
    sigma2: f64,
    profile: i32,
    n: usize,
    out: *mut f64,
    len: usize,
) -> KodStatus {
    guard(|| {
        let variant = match profile {
            p if p == KodProfile::Case1 as i32 => ProfileVariant::Case1,
            p if p == KodProfile::Case2 as i32 => ProfileVariant::Case2,
            p => return Err(Fail(KodStatus::InvalidArgument, format!("unknown profile {p}"))),
        };
        let grid = OpinionGrid::new(n)?;
        let g = g_inf(&StationaryOpinionProfile { kappa, mbar, sigma2, variant }, &grid)?;
        out_slice(out, len, g.len(), "out")?.copy_from_slice(&g);
        Ok(())
    })
}

/// Parses a TOML experiment description.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn kod_experiment_from_toml(toml: *const c_char, out: *mut *mut KodExperiment) -> KodStatus {
    guard(|| {
        let config = experiment::parse_config(str_arg(toml, "toml")?)?;
        put(out, Box::into_raw(Box::new(KodExperiment { config })), "out")
    })
}

/// Loads a named preset (test1, test3, test4, fig1; test2 needs rates and is only
/// available through TOML).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn kod_experiment_from_preset(name: *const c_char, out: *mut *mut KodExperiment) -> KodStatus {
    guard(|| {
        let config = experiment::preset(str_arg(name, "name")?)?;
        put(out, Box::into_raw(Box::new(KodExperiment { config })), "out")
    })
}

/// Sets the directory the run writes into.
///
/// # Safety
/// `exp` must come from a `kod_experiment_from_*` call; `dir` must be NUL terminated.
#[no_mangle]
pub unsafe extern "C" fn kod_experiment_set_out_dir(exp: *mut KodExperiment, dir: *const c_char) -> KodStatus {
    guard(|| {
        let exp = exp.as_mut().ok_or_else(|| null("exp"))?;
        exp.config.out_dir = PathBuf::from(str_arg(dir, "dir")?);
        Ok(())
    })
}

/// Sets the seed of the Monte Carlo streams.
///
/// # Safety
/// `exp` must come from a `kod_experiment_from_*` call.
#[no_mangle]
pub unsafe extern "C" fn kod_experiment_set_seed(exp: *mut KodExperiment, seed: u64) -> KodStatus {
    guard(|| {
        exp.as_mut().ok_or_else(|| null("exp"))?.config.seed = seed;
        Ok(())
    })
}

/// Runs the experiment, writing its artifacts to the output directory.
///
/// # Safety
/// `exp` must come from a `kod_experiment_from_*` call; `summary` may be null.
#[no_mangle]
pub unsafe extern "C" fn kod_experiment_run(exp: *const KodExperiment, summary: *mut KodRunSummary) -> KodStatus {
    guard(|| {
        let exp = exp.as_ref().ok_or_else(|| null("exp"))?;
        let s = experiment::run_experiment(&exp.config)?;
        if !summary.is_null() {
            summary.write(KodRunSummary {
                steps: s.steps as u64,
                t: s.t,
                final_l1_error: s.final_l1_error.unwrap_or(f64::NAN),
                final_mean_opinion: s.final_mean_opinion,
                final_gamma: s.final_gamma,
                wall_time_s: s.wall_time_s,
            });
        }
        Ok(())
    })
}

/// # Safety
/// `exp` must be null or come from a `kod_experiment_from_*` call, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kod_experiment_free(exp: *mut KodExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Builds the Fokker-Planck solver and initial density of an experiment.
///
/// # Safety
/// `exp` must come from a `kod_experiment_from_*` call; `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn kod_simulation_new(exp: *const KodExperiment, out: *mut *mut KodSimulation) -> KodStatus {
    guard(|| {
        let cfg = &exp.as_ref().ok_or_else(|| null("exp"))?.config;
        let field = experiment::build_initial(cfg)?;
        let solver = FpSolver::new(
            *field.grid(),
            *field.crange(),
            cfg.params,
            cfg.kernel,
            cfg.diffusion,
            cfg.quadrature,
        )?
        .with_row_dominance(cfg.row_dominance);
        let sim = KodSimulation { solver, field, dt: cfg.dt, t: 0.0, steps: 0 };
        put(out, Box::into_raw(Box::new(sim)), "out")
    })
}

/// One IMEX step. `dt <= 0` uses the experiment's time-step policy; the step taken is
/// stored in `dt_taken` when it is not null.
///
/// # Safety
/// `sim` must come from [`kod_simulation_new`].
#[no_mangle]
pub unsafe extern "C" fn kod_simulation_step(sim: *mut KodSimulation, dt: f64, dt_taken: *mut f64) -> KodStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or_else(|| null("sim"))?;
        let dt = if dt > 0.0 {
            dt
        } else {
            let admissible = sim.solver.admissible_dt(&sim.field)?;
            match sim.dt {
                DtPolicy::Fixed(v) => v,
                DtPolicy::PaperTest1 => {
                    sim.field.grid().dw().powi(2) / (4.0 * sim.solver.params().sigma2)
                }
                DtPolicy::Auto => 0.9 * admissible,
            }
        };
        sim.field = sim.solver.imex_step(&sim.field, dt).map_err(|e| e.at_step(sim.steps as usize + 1, sim.t))?;
        sim.t += dt;
        sim.steps += 1;
        if !dt_taken.is_null() {
            dt_taken.write(dt);
        }
        Ok(())
    })
}

/// Number of opinion nodes (N + 1) and connectivity levels (c_max + 1).
///
/// # Safety
/// `sim` must come from [`kod_simulation_new`]; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn kod_simulation_shape(
    sim: *const KodSimulation,
    nodes: *mut usize,
    levels: *mut usize,
) -> KodStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        put(nodes, sim.field.grid().len(), "nodes")?;
        put(levels, sim.field.crange().len(), "levels")
    })
}

/// Copies f(w_i, c) row-major over (i, c).
///
/// # Safety
/// `sim` must come from [`kod_simulation_new`]; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kod_simulation_density(sim: *const KodSimulation, out: *mut f64, len: usize) -> KodStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        let values = sim.field.values();
        let dst = out_slice(out, len, values.len(), "out")?;
        for (d, v) in dst.iter_mut().zip(values.iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`kod_simulation_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kod_simulation_observables(sim: *const KodSimulation, out: *mut KodObservables) -> KodStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        let f = &sim.field;
        put(
            out,
            KodObservables {
                t: sim.t,
                mass: f.mass(),
                gamma: f.gamma(),
                mean_opinion: f.mean_opinion(),
                min_f: f.min_value(),
                steps: sim.steps,
            },
            "out",
        )
    })
}

/// # Safety
/// `sim` must be null or come from [`kod_simulation_new`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kod_simulation_free(sim: *mut KodSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
