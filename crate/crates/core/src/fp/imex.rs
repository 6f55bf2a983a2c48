use ndarray::{Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::drift::DriftOperator;
use crate::fp::flux::{self, FluxAssembly, Quadrature};
use crate::grid::{ConnectivityRange, DensityField, OpinionGrid};
use crate::kernel::{Diffusion, InteractionKernel};
use crate::network::{evaluate_rates, prefactors, Factor};
use crate::params::ModelParams;

// Negative values above -NEG_TOL * max|f| are roundoff and are zeroed.
const NEG_TOL: f64 = 1e-12;

/// Time step selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum DtPolicy {
    /// Safety factor times the tightest admissible bound, recomputed every step.
    Auto,
    Fixed(f64),
    /// dw^2 / (4 sigma^2).
    PaperTest1,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub t_end: f64,
    pub dt: DtPolicy,
    pub safety: f64,
    /// Times the stepper lands on exactly, reported to the observer.
    pub checkpoints: Vec<f64>,
}

impl Schedule {
    pub fn new(t_end: f64, dt: DtPolicy) -> Self {
        Self {
            t_end,
            dt,
            safety: 0.9,
            checkpoints: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub checkpoint: bool,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub field: DensityField,
    pub steps: usize,
    pub t: f64,
    /// Run-length encoded time steps: (count, dt).
    pub dt_history: Vec<(usize, f64)>,
}

pub(crate) fn push_dt(history: &mut Vec<(usize, f64)>, dt: f64) {
    match history.last_mut() {
        Some((count, last)) if (*last - dt).abs() <= 1e-12 * dt.abs() => *count += 1,
        _ => history.push((1, dt)),
    }
}

/// IMEX stepper: explicit Chang-Cooper step in w followed by the implicit network step in c.
#[derive(Clone, Debug)]
pub struct FpSolver {
    grid: OpinionGrid,
    crange: ConnectivityRange,
    params: ModelParams,
    diffusion: Diffusion,
    quadrature: Quadrature,
    drift: DriftOperator,
    enforce_row_dominance: bool,
}

impl FpSolver {
    pub fn new(
        grid: OpinionGrid,
        crange: ConnectivityRange,
        params: ModelParams,
        kernel: InteractionKernel,
        diffusion: Diffusion,
        quadrature: Quadrature,
    ) -> Result<Self> {
        params.validate()?;
        kernel.validate()?;
        diffusion.validate()?;
        flux::check_diffusion(&diffusion, &grid, quadrature, crange.c_max())?;
        Ok(Self {
            grid,
            crange,
            params,
            diffusion,
            quadrature,
            drift: DriftOperator::new(kernel, crange.c_max()),
            enforce_row_dominance: true,
        })
    }

    /// Whether the row diagonal-dominance bounds limit dt with constant rates (default on).
    pub fn with_row_dominance(mut self, on: bool) -> Self {
        self.enforce_row_dominance = on;
        self
    }

    pub fn grid(&self) -> &OpinionGrid {
        &self.grid
    }

    pub fn crange(&self) -> &ConnectivityRange {
        &self.crange
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn kernel(&self) -> &InteractionKernel {
        self.drift.kernel()
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    fn check_shape(&self, f: &DensityField) -> Result<()> {
        if f.grid() != &self.grid || f.crange() != &self.crange {
            return Err(Error::ShapeMismatch {
                expected: format!("({}, {})", self.grid.len(), self.crange.len()),
                found: format!("({}, {})", f.grid().len(), f.crange().len()),
            });
        }
        Ok(())
    }

    /// Flux quantities with P[f] frozen at `f`.
    pub fn assemble(&self, f: &DensityField) -> FluxAssembly {
        let drift = self.drift.evaluate(f);
        flux::assemble(
            &drift,
            &self.grid,
            self.crange.c_max(),
            &self.diffusion,
            self.params.sigma2,
            self.quadrature,
        )
    }

    pub fn explicit_opinion_step(&self, f: &DensityField, dt: f64) -> Result<DensityField> {
        self.check_shape(f)?;
        let assembly = self.assemble(f);
        self.explicit_with(f, &assembly, dt)
    }

    fn explicit_with(&self, f: &DensityField, assembly: &FluxAssembly, dt: f64) -> Result<DensityField> {
        let bound = assembly.opinion_bound();
        if !(dt > 0.0) || dt > bound {
            return Err(Error::TimeStepTooLarge {
                requested: dt,
                admissible: bound,
                constraint: "explicit opinion step",
            });
        }
        let fluxes = assembly.fluxes(f);
        let n = self.grid.n();
        let r = dt / self.grid.dw();
        let mut out = f.clone();
        let scale = f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Zip::indexed(out.values_mut().axis_iter_mut(Axis(1))).par_for_each(|c, mut col| {
            for i in 0..=n {
                let right = if i < n { fluxes[[i, c]] } else { 0.0 };
                let left = if i > 0 { fluxes[[i - 1, c]] } else { 0.0 };
                col[i] += r * (right - left);
            }
        });
        clean_negatives(&mut out, scale)?;
        Ok(out)
    }

    /// Coefficients v_r = 2 V_r/(gamma + beta), v_a = 2 V_a/(gamma + alpha) per opinion node.
    fn network_coefficients(&self, f: &DensityField) -> Result<(Vec<f64>, Vec<f64>)> {
        let gamma = self.params.effective_gamma(f.gamma());
        let (pr, pa) = prefactors(&self.params, gamma)?;
        let rates = evaluate_rates(f, &self.params);
        Ok((
            rates.vr.iter().map(|v| pr * v).collect(),
            rates.va.iter().map(|v| pa * v).collect(),
        ))
    }

    /// Largest dt keeping every row of the network system diagonally dominant.
    pub fn row_dominance_bound(&self, f: &DensityField) -> Result<f64> {
        let (vr, va) = self.network_coefficients(f)?;
        let (alpha, beta) = (self.params.alpha, self.params.beta);
        let m = self.crange.c_max() as f64;
        let mut bound = f64::INFINITY;
        for (&r, &a) in vr.iter().zip(&va) {
            for excess in [r - a, r * (1.0 + beta) - a * alpha, a * (m - 1.0 + alpha) - r * (m + beta)] {
                if excess > 0.0 {
                    bound = bound.min(1.0 / excess);
                }
            }
        }
        Ok(bound)
    }

    /// Bound enforced on the network step: the row bounds with constant rates, none otherwise.
    /// The system is a column-dominant M-matrix for every dt, so positivity never depends on it.
    pub fn network_bound(&self, f: &DensityField) -> Result<f64> {
        if self.enforce_row_dominance && self.params.rates.is_constant() {
            self.row_dominance_bound(f)
        } else {
            Ok(f64::INFINITY)
        }
    }

    /// Solves [1 + d + a + b] f(c) - a f(c+1) - b f(c-1) = f_half(c) in every opinion row.
    pub fn implicit_network_step(&self, half: &DensityField, dt: f64) -> Result<DensityField> {
        self.check_shape(half)?;
        if !(dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        let bound = self.network_bound(half)?;
        if dt > bound {
            return Err(Error::TimeStepTooLarge {
                requested: dt,
                admissible: bound,
                constraint: "network row dominance",
            });
        }
        let (vr, va) = self.network_coefficients(half)?;
        let (alpha, beta) = (self.params.alpha, self.params.beta);
        let m = self.crange.c_max();
        // rows with equal rates share one factorization
        let mut factors: Vec<Factor> = Vec::new();
        let mut which = Vec::with_capacity(vr.len());
        for i in 0..vr.len() {
            if i == 0 || vr[i] != vr[i - 1] || va[i] != va[i - 1] {
                factors.push(Factor::new(dt * vr[i], dt * va[i], alpha, beta, m));
            }
            which.push(factors.len() - 1);
        }
        let mut out = half.clone();
        let scale = half.values().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        Zip::indexed(out.values_mut().axis_iter_mut(Axis(0))).par_for_each(|i, mut row| {
            let mass_in: f64 = row.sum();
            factors[which[i]].solve(row.as_slice_mut().expect("standard layout"));
            // the columns of the system sum to one, so the row mass is invariant; remove roundoff drift
            let mass_out: f64 = row.sum();
            if mass_out > 0.0 {
                row.mapv_inplace(|v| v * (mass_in / mass_out));
            }
        });
        clean_negatives(&mut out, scale)?;
        Ok(out)
    }

    /// Tightest admissible dt at state `f`.
    pub fn admissible_dt(&self, f: &DensityField) -> Result<f64> {
        let assembly = self.assemble(f);
        Ok(assembly.opinion_bound().min(self.network_bound(f)?))
    }

    pub fn imex_step(&self, f: &DensityField, dt: f64) -> Result<DensityField> {
        self.check_shape(f)?;
        let assembly = self.assemble(f);
        let half = self.explicit_with(f, &assembly, dt)?;
        self.implicit_network_step(&half, dt)
    }

    fn policy_dt(&self, policy: DtPolicy, safety: f64, admissible: f64) -> Result<f64> {
        let dt = match policy {
            DtPolicy::Auto => safety * admissible,
            DtPolicy::Fixed(v) => v,
            DtPolicy::PaperTest1 => {
                if self.params.sigma2 <= 0.0 {
                    return Err(Error::invalid("dt", "the dw^2/(4 sigma^2) rule needs sigma2 > 0"));
                }
                self.grid.dw().powi(2) / (4.0 * self.params.sigma2)
            }
        };
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("time step must be positive and finite, got {dt}")));
        }
        if dt > admissible {
            return Err(Error::TimeStepTooLarge {
                requested: dt,
                admissible,
                constraint: "imex step",
            });
        }
        Ok(dt)
    }

    /// Integrates to `schedule.t_end`. The observer sees the initial state and every step.
    pub fn run(
        &self,
        f0: &DensityField,
        schedule: &Schedule,
        mut observer: impl FnMut(&StepInfo, &DensityField) -> Result<()>,
    ) -> Result<RunReport> {
        self.check_shape(f0)?;
        let mut checkpoints: Vec<f64> = schedule
            .checkpoints
            .iter()
            .copied()
            .filter(|&t| t > 0.0 && t <= schedule.t_end)
            .collect();
        checkpoints.push(schedule.t_end);
        checkpoints.sort_by(f64::total_cmp);
        checkpoints.dedup();
        let mut next_cp = 0;
        let mut f = f0.clone();
        let mut t = 0.0;
        let mut step = 0;
        let mut history = Vec::new();
        observer(&StepInfo { step: 0, t: 0.0, dt: 0.0, checkpoint: true }, &f)?;
        while next_cp < checkpoints.len() {
            let target = checkpoints[next_cp];
            let run = || -> Result<(DensityField, f64, bool)> {
                let assembly = self.assemble(&f);
                let admissible = assembly.opinion_bound().min(self.network_bound(&f)?);
                let mut dt = self.policy_dt(schedule.dt, schedule.safety, admissible)?;
                let mut hit = false;
                if t + dt >= target * (1.0 - 1e-14) {
                    dt = target - t;
                    hit = true;
                }
                let half = self.explicit_with(&f, &assembly, dt)?;
                Ok((self.implicit_network_step(&half, dt)?, dt, hit))
            };
            let (next, dt, hit) = run().map_err(|e| e.at_step(step + 1, t))?;
            f = next;
            step += 1;
            t = if hit { target } else { t + dt };
            push_dt(&mut history, dt);
            if hit {
                next_cp += 1;
            }
            observer(&StepInfo { step, t, dt, checkpoint: hit }, &f).map_err(|e| e.at_step(step, t))?;
        }
        Ok(RunReport { field: f, steps: step, t, dt_history: history })
    }
}

fn clean_negatives(f: &mut DensityField, scale: f64) -> Result<()> {
    let tol = NEG_TOL * scale.max(f64::MIN_POSITIVE);
    for ((i, c), v) in f.values_mut().indexed_iter_mut() {
        if *v < 0.0 {
            if *v < -tol {
                return Err(Error::NegativeDensity { value: *v, node: i, connectivity: c });
            }
            *v = 0.0;
        }
    }
    Ok(())
}
