//! Particle solver: sampled agents, the connection add/remove step and the scaled
//! binary interaction step, with density reconstruction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::StepInfo;
use crate::grid::{ConnectivityRange, DensityField, OpinionGrid};
use crate::kernel::{Diffusion, InteractionKernel};
use crate::network::{particle_network_bound, prefactors};
use crate::params::{ModelParams, RateMode};

const CHUNK: usize = 4096;

// Stream purposes.
const SAMPLE: u64 = 1;
const NETWORK: u64 = 2;
const SHUFFLE: u64 = 3;
const COLLIDE: u64 = 4;

/// Independent generator for (seed, draw, purpose, chunk); results do not depend on the thread count.
fn stream(seed: u64, draw: u64, purpose: u64, chunk: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (k, v) in [seed, draw, purpose, chunk].into_iter().enumerate() {
        key[8 * k..8 * k + 8].copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub w: f64,
    pub c: usize,
}

#[derive(Clone, Debug)]
pub struct Ensemble {
    particles: Vec<Particle>,
    params: ModelParams,
    c_max: usize,
    seed: u64,
    step: u64,
    // advanced by every step method, keys the random streams
    draws: u64,
}

/// Probability of adding a connection, dt V_a (c + alpha)/(gamma + alpha).
pub fn adding_probability(c: usize, dt: f64, v_a: f64, alpha: f64, gamma: f64) -> f64 {
    dt * v_a * (c as f64 + alpha) / (gamma + alpha)
}

/// Probability of removing a connection, dt V_r (c + beta)/(gamma + beta).
pub fn removal_probability(c: usize, dt: f64, v_r: f64, beta: f64, gamma: f64) -> f64 {
    dt * v_r * (c as f64 + beta) / (gamma + beta)
}

fn cdf(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

fn pick(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().unwrap();
    cdf.partition_point(|&v| v <= u * total).min(cdf.len() - 1)
}

impl Ensemble {
    pub fn from_particles(particles: Vec<Particle>, params: ModelParams, c_max: usize, seed: u64) -> Result<Self> {
        params.validate()?;
        if particles.is_empty() || !particles.len().is_multiple_of(2) {
            return Err(Error::invalid("n_samples", "must be positive and even"));
        }
        if let Some(p) = particles.iter().find(|p| !(-1.0..=1.0).contains(&p.w) || p.c > c_max) {
            return Err(Error::invalid("particles", format!("state ({}, {}) is outside the domain", p.w, p.c)));
        }
        Ok(Self { particles, params, c_max, seed, step: 0, draws: 0 })
    }

    /// Draws c from the degree marginal, then w from the conditional column, placing
    /// each agent on its grid node.
    pub fn sample(field: &DensityField, n_samples: usize, params: ModelParams, seed: u64) -> Result<Self> {
        if field.mass() <= 0.0 || !field.mass().is_finite() {
            return Err(Error::ZeroMass);
        }
        if n_samples == 0 || !n_samples.is_multiple_of(2) {
            return Err(Error::invalid("n_samples", "must be positive and even"));
        }
        let grid = *field.grid();
        let rho_cdf = cdf(field.marginal_rho().into_iter());
        let col_cdf: Vec<Vec<f64>> = (0..field.crange().len())
            .map(|c| cdf((0..grid.len()).map(|i| field.get(i, c))))
            .collect();
        let particles: Vec<Particle> = (0..n_samples.div_ceil(CHUNK))
            .into_par_iter()
            .flat_map_iter(|k| {
                let mut rng = stream(seed, 0, SAMPLE, k as u64);
                let len = CHUNK.min(n_samples - k * CHUNK);
                let rho_cdf = &rho_cdf;
                let col_cdf = &col_cdf;
                (0..len)
                    .map(move |_| {
                        let c = pick(rho_cdf, rng.random());
                        let i = pick(&col_cdf[c], rng.random());
                        Particle { w: grid.node(i), c }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Self::from_particles(particles, params, field.crange().c_max(), seed)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Number of completed steps.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Empirical mean connectivity.
    pub fn gamma(&self) -> f64 {
        self.particles.iter().map(|p| p.c as f64).sum::<f64>() / self.len() as f64
    }

    pub fn mean_opinion(&self) -> f64 {
        self.particles.iter().map(|p| p.w).sum::<f64>() / self.len() as f64
    }

    fn check_bounds(&self) {
        debug_assert!(self
            .particles
            .iter()
            .all(|p| (-1.0..=1.0).contains(&p.w) && p.c <= self.c_max));
    }

    /// Adds a connection with probability p_a, then removes one with probability p_r
    /// evaluated at the updated connectivity.
    pub fn network_step(&mut self, dt: f64) -> Result<()> {
        let RateMode::Constant { v_r, v_a } = self.params.rates else {
            return Err(Error::Unsupported("the particle solver needs constant rates".into()));
        };
        let gamma = self.params.effective_gamma(self.gamma());
        prefactors(&self.params, gamma)?;
        let bound = particle_network_bound(&self.params, gamma, self.c_max)?;
        if !(dt > 0.0) || dt > bound {
            return Err(Error::TimeStepTooLarge {
                requested: dt,
                admissible: bound,
                constraint: "particle network step",
            });
        }
        let (alpha, beta, c_max) = (self.params.alpha, self.params.beta, self.c_max);
        let (seed, draw) = (self.seed, self.draws);
        self.draws += 1;
        self.particles.par_chunks_mut(CHUNK).enumerate().for_each(|(k, chunk)| {
            let mut rng = stream(seed, draw, NETWORK, k as u64);
            for p in chunk {
                let (ua, ur): (f64, f64) = (rng.random(), rng.random());
                if p.c < c_max && ua < adding_probability(p.c, dt, v_a, alpha, gamma) {
                    p.c += 1;
                }
                if p.c >= 1 && ur < removal_probability(p.c, dt, v_r, beta, gamma) {
                    p.c -= 1;
                }
            }
        });
        self.check_bounds();
        Ok(())
    }

    /// Random disjoint pairing; each pair interacts with probability dt/epsilon through
    /// w' = w + eps P (w_* - w) + xi D(w, c), with xi uniform of variance eps sigma^2.
    /// Interactions leaving [-1, 1] are discarded for both agents.
    pub fn collision_step(&mut self, dt: f64, kernel: &InteractionKernel, diffusion: &Diffusion) -> Result<()> {
        let eps = self.params.epsilon;
        if !(dt > 0.0) || dt > eps {
            return Err(Error::TimeStepTooLarge {
                requested: dt,
                admissible: eps,
                constraint: "collision step (dt <= epsilon)",
            });
        }
        let half_width = (3.0 * eps * self.params.sigma2).sqrt();
        let prob = dt / eps;
        let (seed, draw, c_max) = (self.seed, self.draws, self.c_max);
        self.draws += 1;
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut stream(seed, draw, SHUFFLE, 0));
        let parts = &self.particles;
        let updates: Vec<(usize, f64, usize, f64)> = order
            .par_chunks(2 * CHUNK)
            .enumerate()
            .flat_map_iter(|(k, pairs)| {
                let mut rng = stream(seed, draw, COLLIDE, k as u64);
                let mut out = Vec::new();
                for pair in pairs.chunks_exact(2) {
                    let (u, xi, xs): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
                    if u >= prob {
                        continue;
                    }
                    let (a, b) = (parts[pair[0]], parts[pair[1]]);
                    let xi = half_width * (2.0 * xi - 1.0);
                    let xs = half_width * (2.0 * xs - 1.0);
                    let wa = a.w + eps * kernel.eval(a.w, b.w, a.c, b.c, c_max) * (b.w - a.w) + xi * diffusion.d(a.w, a.c);
                    let wb = b.w + eps * kernel.eval(b.w, a.w, b.c, a.c, c_max) * (a.w - b.w) + xs * diffusion.d(b.w, b.c);
                    if wa.abs() <= 1.0 && wb.abs() <= 1.0 {
                        out.push((pair[0], wa, pair[1], wb));
                    }
                }
                out
            })
            .collect();
        for (i, wa, j, wb) in updates {
            self.particles[i].w = wa;
            self.particles[j].w = wb;
        }
        self.check_bounds();
        Ok(())
    }

    /// Histogram on the N + 1 opinion cells times the connectivity values, unit mass.
    pub fn reconstruct(&self, grid: OpinionGrid, crange: ConnectivityRange) -> Result<DensityField> {
        if crange.c_max() < self.c_max {
            return Err(Error::ShapeMismatch {
                expected: format!("c_max >= {}", self.c_max),
                found: crange.c_max().to_string(),
            });
        }
        let mut f = DensityField::zeros(grid, crange);
        let dw = grid.dw();
        let unit = 1.0 / (self.len() as f64 * dw);
        let values = f.values_mut();
        for p in &self.particles {
            let i = (((p.w + 1.0) / dw).round() as usize).min(grid.n());
            values[[i, p.c]] += 1.0;
        }
        values.mapv_inplace(|count| count * unit);
        Ok(f)
    }

    /// Network step then collision step until `t_end`, landing on every checkpoint.
    pub fn run(
        &mut self,
        schedule: &McSchedule,
        kernel: &InteractionKernel,
        diffusion: &Diffusion,
        mut observer: impl FnMut(&StepInfo, &Ensemble) -> Result<()>,
    ) -> Result<McReport> {
        let mut targets: Vec<f64> = schedule
            .checkpoints
            .iter()
            .copied()
            .filter(|&t| t > 0.0 && t <= schedule.t_end)
            .collect();
        targets.push(schedule.t_end);
        targets.sort_by(f64::total_cmp);
        targets.dedup();
        let mut t = 0.0;
        let mut steps = 0;
        let mut history = Vec::new();
        observer(&StepInfo { step: 0, t, dt: 0.0, checkpoint: true }, self)?;
        for target in targets {
            while t < target {
                let mut dt = schedule.dt;
                let hit = t + dt >= target * (1.0 - 1e-14);
                if hit {
                    dt = target - t;
                }
                let result = self
                    .network_step(dt)
                    .and_then(|_| self.collision_step(dt, kernel, diffusion));
                result.map_err(|e| e.at_step(steps + 1, t))?;
                self.step += 1;
                steps += 1;
                t = if hit { target } else { t + dt };
                crate::fp::push_dt(&mut history, dt);
                observer(&StepInfo { step: steps, t, dt, checkpoint: hit }, self).map_err(|e| e.at_step(steps, t))?;
            }
        }
        Ok(McReport { steps, t, dt_history: history })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McSchedule {
    pub t_end: f64,
    pub dt: f64,
    pub checkpoints: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McReport {
    pub steps: usize,
    pub t: f64,
    pub dt_history: Vec<(usize, f64)>,
}
