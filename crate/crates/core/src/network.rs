//! Connectivity evolution: the network operator N[f], its linear version L[rho],
//! and the identities it satisfies.

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis, Zip};

use crate::error::{Error, Result};
use crate::grid::DensityField;
use crate::params::{ModelParams, RateMode};

/// Per-node characteristic rates V_r(f; w_i), V_a(f; w_i).
#[derive(Clone, Debug, PartialEq)]
pub struct RateEvaluation {
    pub vr: Vec<f64>,
    pub va: Vec<f64>,
}

impl RateEvaluation {
    pub fn constant(len: usize, vr: f64, va: f64) -> Self {
        Self {
            vr: vec![vr; len],
            va: vec![va; len],
        }
    }
}

// Below this the node carries no agents and the density-dependent rates are set to zero.
const EMPTY_NODE: f64 = 1e-300;

/// Rates at every opinion node. Density-dependent rates use the mean connectivity
/// `params.effective_gamma(field.gamma())`.
pub fn evaluate_rates(field: &DensityField, params: &ModelParams) -> RateEvaluation {
    let n = field.grid().len();
    match params.rates {
        RateMode::Constant { v_r, v_a } => RateEvaluation::constant(n, v_r, v_a),
        RateMode::DensityDependent { u_r, u_a } => {
            let gamma = params.effective_gamma(field.gamma());
            let g = field.marginal_g();
            let gf = field.gamma_f();
            let rate = |u: f64, shift: f64, i: usize| {
                let denom = gf[i] + shift * g[i];
                if denom < EMPTY_NODE {
                    0.0
                } else {
                    u * (gamma + shift) / denom
                }
            };
            RateEvaluation {
                vr: (0..n).map(|i| rate(u_r, params.beta, i)).collect(),
                va: (0..n).map(|i| rate(u_a, params.alpha, i)).collect(),
            }
        }
    }
}

/// The factors 2/(gamma + beta) and 2/(gamma + alpha).
pub fn prefactors(params: &ModelParams, gamma: f64) -> Result<(f64, f64)> {
    let gb = gamma + params.beta;
    let ga = gamma + params.alpha;
    if gb <= 0.0 || ga <= 0.0 || !gb.is_finite() || !ga.is_finite() {
        return Err(Error::DegenerateConnectivity(format!(
            "gamma + beta = {gb}, gamma + alpha = {ga}; both must be positive"
        )));
    }
    Ok((2.0 / gb, 2.0 / ga))
}

/// Birth-death operator on one column over c, with removal coefficient `kr` and adding
/// coefficient `ka` (the rates already divided by gamma + beta, gamma + alpha and doubled).
pub(crate) fn apply_chain(
    x: ArrayView1<f64>,
    mut out: ArrayViewMut1<f64>,
    kr: f64,
    ka: f64,
    alpha: f64,
    beta: f64,
) {
    let m = x.len() - 1;
    out[0] = -kr * (beta + 1.0) * x[1] + ka * alpha * x[0];
    for c in 1..m {
        let cf = c as f64;
        out[c] = -kr * ((cf + 1.0 + beta) * x[c + 1] - (cf + beta) * x[c])
            - ka * ((cf - 1.0 + alpha) * x[c - 1] - (cf + alpha) * x[c]);
    }
    let mf = m as f64;
    out[m] = kr * (mf + beta) * x[m] - ka * (mf - 1.0 + alpha) * x[m - 1];
}

/// N[f](w_i, c) for every node and connectivity.
pub fn apply_network_operator(
    field: &DensityField,
    rates: &RateEvaluation,
    params: &ModelParams,
) -> Result<Array2<f64>> {
    let gamma = params.effective_gamma(field.gamma());
    let (pr, pa) = prefactors(params, gamma)?;
    let values = field.values();
    let mut out = Array2::zeros(values.dim());
    Zip::indexed(out.axis_iter_mut(Axis(0)))
        .and(values.axis_iter(Axis(0)))
        .par_for_each(|i, row_out, row| {
            apply_chain(row, row_out, pr * rates.vr[i], pa * rates.va[i], params.alpha, params.beta)
        });
    Ok(out)
}

/// d gamma/dt from the closed four-integral expression.
pub fn gamma_derivative(
    field: &DensityField,
    rates: &RateEvaluation,
    params: &ModelParams,
) -> Result<f64> {
    let gamma = params.effective_gamma(field.gamma());
    let (pr, pa) = prefactors(params, gamma)?;
    let (alpha, beta) = (params.alpha, params.beta);
    let c_max = field.crange().c_max();
    let g = field.marginal_g();
    let gf = field.gamma_f();
    let dw = field.grid().dw();
    let mut total = 0.0;
    for i in 0..g.len() {
        let (vr, va) = (rates.vr[i], rates.va[i]);
        total += -pr * vr * (gf[i] + beta * g[i]) + pa * va * (gf[i] + alpha * g[i])
            + pr * beta * vr * field.get(i, 0)
            - pa * (c_max as f64 + alpha) * va * field.get(i, c_max);
    }
    Ok(dw * total)
}

fn constant_rates(params: &ModelParams) -> Result<(f64, f64)> {
    match params.rates {
        RateMode::Constant { v_r, v_a } => Ok((v_r, v_a)),
        RateMode::DensityDependent { .. } => Err(Error::Unsupported(
            "the closed degree dynamics needs constant characteristic rates".into(),
        )),
    }
}

fn mean_of(rho: &[f64]) -> f64 {
    rho.iter().enumerate().map(|(c, r)| c as f64 * r).sum()
}

/// L[x] for a vector over c, constant rates, with the given mean connectivity.
pub fn apply_linear_operator(x: &[f64], params: &ModelParams, gamma: f64) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::invalid("c_max", "must be at least 1"));
    }
    let (vr, va) = constant_rates(params)?;
    let (pr, pa) = prefactors(params, gamma)?;
    let mut out = vec![0.0; x.len()];
    apply_chain(
        ArrayView1::from(x),
        ArrayViewMut1::from(out.as_mut_slice()),
        pr * vr,
        pa * va,
        params.alpha,
        params.beta,
    );
    Ok(out)
}

/// Largest forward-Euler step keeping every diagonal coefficient 1 - dt * loss(c) nonnegative.
pub fn explicit_rho_bound(params: &ModelParams, gamma: f64, c_max: usize) -> Result<f64> {
    let (vr, va) = constant_rates(params)?;
    let (pr, pa) = prefactors(params, gamma)?;
    let (kr, ka) = (pr * vr, pa * va);
    let loss = |c: usize| {
        let cf = c as f64;
        let removal = if c > 0 { kr * (cf + params.beta) } else { 0.0 };
        let adding = if c < c_max { ka * (cf + params.alpha) } else { 0.0 };
        removal + adding
    };
    let worst = (0..=c_max).map(loss).fold(0.0, f64::max);
    Ok(if worst > 0.0 { 1.0 / worst } else { f64::INFINITY })
}

/// min{(gamma + beta)/(V_r (c_max + beta)), (gamma + alpha)/(V_a (c_max + alpha))}.
pub fn particle_network_bound(params: &ModelParams, gamma: f64, c_max: usize) -> Result<f64> {
    let (vr, va) = constant_rates(params)?;
    let cm = c_max as f64;
    let r = (gamma + params.beta) / (vr * (cm + params.beta));
    let a = (gamma + params.alpha) / (va * (cm + params.alpha));
    Ok(r.min(a))
}

// Roundoff allowance before a negative value counts as a violated bound.
pub(crate) const NEGATIVE_TOLERANCE: f64 = 1e-15;

/// One forward-Euler step of d rho/dt + L[rho] = 0.
pub fn step_rho_explicit(rho: &[f64], params: &ModelParams, dt: f64) -> Result<Vec<f64>> {
    let gamma = params.effective_gamma(mean_of(rho));
    let bound = explicit_rho_bound(params, gamma, rho.len() - 1)?;
    if !(dt > 0.0) || dt > bound {
        return Err(Error::TimeStepTooLarge {
            requested: dt,
            admissible: bound,
            constraint: "explicit degree dynamics",
        });
    }
    let l = apply_linear_operator(rho, params, gamma)?;
    let mut out: Vec<f64> = rho.iter().zip(&l).map(|(r, d)| r - dt * d).collect();
    for (c, v) in out.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -NEGATIVE_TOLERANCE {
                return Err(Error::NegativeDensity { value: *v, node: 0, connectivity: c });
            }
            *v = 0.0;
        }
    }
    Ok(out)
}

/// One backward-Euler step of d rho/dt + L[rho] = 0. Positive and mass preserving for any dt > 0.
pub fn step_rho_implicit(rho: &[f64], params: &ModelParams, dt: f64) -> Result<Vec<f64>> {
    if rho.len() < 2 {
        return Err(Error::invalid("c_max", "must be at least 1"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive and finite"));
    }
    let gamma = params.effective_gamma(mean_of(rho));
    let (vr, va) = constant_rates(params)?;
    let (pr, pa) = prefactors(params, gamma)?;
    let factor = Factor::new(dt * pr * vr, dt * pa * va, params.alpha, params.beta, rho.len() - 1);
    let mut out = rho.to_vec();
    factor.solve(&mut out);
    let (before, after): (f64, f64) = (rho.iter().sum(), out.iter().sum());
    if after > 0.0 {
        out.iter_mut().for_each(|v| *v *= before / after);
    }
    for (c, v) in out.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -NEGATIVE_TOLERANCE {
                return Err(Error::NegativeDensity { value: *v, node: 0, connectivity: c });
            }
            *v = 0.0;
        }
    }
    Ok(out)
}

// Thomas factorization of [1 + kr (c + beta) + ka (c + alpha)] x_c - kr (c + 1 + beta) x_{c+1}
// - ka (c - 1 + alpha) x_{c-1}, with the boundary rows truncated. Every term stays nonnegative.
pub(crate) struct Factor {
    lower: Vec<f64>,
    inv_den: Vec<f64>,
    cp: Vec<f64>,
}

impl Factor {
    pub(crate) fn new(kr: f64, ka: f64, alpha: f64, beta: f64, m: usize) -> Self {
        let upper = |c: usize| kr * (c as f64 + 1.0 + beta);
        let diag = |c: usize| {
            let cf = c as f64;
            if c == 0 {
                1.0 + ka * alpha
            } else if c == m {
                1.0 + kr * (cf + beta)
            } else {
                1.0 + kr * (cf + beta) + ka * (cf + alpha)
            }
        };
        let lower: Vec<f64> = (0..=m).map(|c| if c == 0 { 0.0 } else { ka * (c as f64 - 1.0 + alpha) }).collect();
        let mut inv_den = vec![0.0; m + 1];
        let mut cp = vec![0.0; m + 1];
        let mut prev = 0.0;
        for c in 0..=m {
            let den = diag(c) - lower[c] * prev;
            inv_den[c] = 1.0 / den;
            cp[c] = if c < m { upper(c) / den } else { 0.0 };
            prev = cp[c];
        }
        Self { lower, inv_den, cp }
    }

    pub(crate) fn solve(&self, x: &mut [f64]) {
        let m = x.len() - 1;
        x[0] *= self.inv_den[0];
        for c in 1..=m {
            x[c] = (x[c] + self.lower[c] * x[c - 1]) * self.inv_den[c];
        }
        for c in (0..m).rev() {
            x[c] += self.cp[c] * x[c + 1];
        }
    }
}

/// Discrete fixed point of L for constant rates and a given gamma, from detailed balance
/// rho(c+1) (c+1+beta) k_r = rho(c) (c+alpha) k_a. Normalized to sum one.
pub fn stationary_rho(params: &ModelParams, gamma: f64, c_max: usize) -> Result<Vec<f64>> {
    let (vr, va) = constant_rates(params)?;
    let (pr, pa) = prefactors(params, gamma)?;
    let (kr, ka) = (pr * vr, pa * va);
    if kr <= 0.0 || ka <= 0.0 {
        return Err(Error::DegenerateConnectivity("both rates must be positive".into()));
    }
    let mut log_r = Vec::with_capacity(c_max + 1);
    let mut acc = 0.0;
    log_r.push(acc);
    for c in 0..c_max {
        let cf = c as f64;
        acc += (ka * (cf + params.alpha)).ln() - (kr * (cf + 1.0 + params.beta)).ln();
        log_r.push(acc);
    }
    let top = log_r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = log_r.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ConnectivityRange, OpinionGrid};
    use crate::params::GammaMode;
    use crate::stationary::StationaryDegreeLaw;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(alpha: f64, beta: f64) -> ModelParams {
        ModelParams { alpha, beta, ..Default::default() }
    }

    fn random_field(seed: u64, n: usize, c_max: usize) -> DensityField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = OpinionGrid::new(n).unwrap();
        let crange = ConnectivityRange::new(c_max).unwrap();
        let mut f = DensityField::from_fn(grid, crange, |_, _| rng.random::<f64>());
        f.normalize().unwrap();
        f
    }

    #[test]
    fn constant_rates_broadcast() {
        let f = random_field(1, 10, 5);
        let r = evaluate_rates(&f, &params(0.1, 0.0));
        assert!(r.vr.iter().chain(&r.va).all(|&v| v == 1.0));
    }

    #[test]
    fn density_dependent_rates_on_product_field() {
        let grid = OpinionGrid::new(20).unwrap();
        let crange = ConnectivityRange::new(60).unwrap();
        let g: Vec<f64> = grid.nodes().iter().map(|w| 1.0 - w * w).collect();
        let rho = StationaryDegreeLaw::new(30.0, 10.0, 60).unwrap().normalized();
        let mut f = DensityField::product(grid, crange, &g, &rho).unwrap();
        f.normalize().unwrap();
        let p = ModelParams {
            rates: RateMode::DensityDependent { u_r: 2.0, u_a: 1.0 },
            ..params(0.1, 0.0)
        };
        let r = evaluate_rates(&f, &p);
        let gm = f.marginal_g();
        for (i, &g) in gm.iter().enumerate().take(grid.n()).skip(1) {
            assert!((r.vr[i] - 2.0 / g).abs() < 1e-10 * r.vr[i]);
        }
        // boundary nodes carry no agents
        assert_eq!(r.vr[0], 0.0);
        assert_eq!(r.va[grid.n()], 0.0);
    }

    #[test]
    fn agent_conservation_rowwise() {
        for seed in 0..5 {
            let f = random_field(seed, 16, 40);
            let p = ModelParams {
                rates: RateMode::DensityDependent { u_r: 1.5, u_a: 0.7 },
                ..params(0.3, 0.4)
            };
            let r = evaluate_rates(&f, &p);
            let out = apply_network_operator(&f, &r, &p).unwrap();
            for row in out.axis_iter(Axis(0)) {
                let scale = row.iter().map(|v| v.abs()).fold(0.0, f64::max);
                assert!(row.sum().abs() <= 1e-13 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn gamma_derivative_matches_weighted_operator() {
        for (seed, mode) in [
            (3, RateMode::Constant { v_r: 1.0, v_a: 2.0 }),
            (4, RateMode::DensityDependent { u_r: 1.0, u_a: 3.0 }),
        ] {
            let f = random_field(seed, 20, 30);
            let p = ModelParams { rates: mode, ..params(0.5, 0.8) };
            let r = evaluate_rates(&f, &p);
            let out = apply_network_operator(&f, &r, &p).unwrap();
            let dw = f.grid().dw();
            let oracle: f64 = -dw
                * out
                    .indexed_iter()
                    .map(|((_, c), v)| c as f64 * v)
                    .sum::<f64>();
            let closed = gamma_derivative(&f, &r, &p).unwrap();
            assert!((closed - oracle).abs() < 1e-12 * oracle.abs().max(1.0), "{closed} {oracle}");
        }
    }

    #[test]
    fn gamma_derivative_signs() {
        let grid = OpinionGrid::new(10).unwrap();
        let crange = ConnectivityRange::new(20).unwrap();
        // mass at c = 0 with beta > 0
        let mut f0 = DensityField::from_fn(grid, crange, |_, c| if c == 0 { 1.0 } else { 0.0 });
        f0.normalize().unwrap();
        let p = ModelParams { gamma_mode: GammaMode::Pinned(5.0), ..params(0.1, 2.0) };
        let r = evaluate_rates(&f0, &p);
        assert!(gamma_derivative(&f0, &r, &p).unwrap() > 0.0);
        // mass at c_max
        let mut fm = DensityField::from_fn(grid, crange, |_, c| if c == 20 { 1.0 } else { 0.0 });
        fm.normalize().unwrap();
        let p = params(0.1, 0.0);
        let r = evaluate_rates(&fm, &p);
        assert!(gamma_derivative(&fm, &r, &p).unwrap() < 0.0);
    }

    #[test]
    fn conservation_of_gamma_without_tail() {
        // beta = 0, equal rates, law with negligible mass at c_max
        let p = params(10.0, 0.0);
        let rho = StationaryDegreeLaw::new(30.0, 10.0, 250).unwrap().normalized();
        let grid = OpinionGrid::new(10).unwrap();
        let crange = ConnectivityRange::new(250).unwrap();
        let g = vec![1.0; 11];
        let mut f = DensityField::product(grid, crange, &g, &rho).unwrap();
        f.normalize().unwrap();
        let r = evaluate_rates(&f, &p);
        assert!(gamma_derivative(&f, &r, &p).unwrap().abs() < 1e-8);
    }

    #[test]
    fn stationary_law_is_annihilated() {
        let p = params(0.1, 0.0);
        let rho = StationaryDegreeLaw::new(30.0, 0.1, 250).unwrap().values();
        let l = apply_linear_operator(&rho, &p, 30.0).unwrap();
        let worst = l.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn detailed_balance_law_matches_closed_form() {
        let p = params(0.1, 0.0);
        let db = stationary_rho(&p, 30.0, 250).unwrap();
        let closed = StationaryDegreeLaw::new(30.0, 0.1, 250).unwrap().normalized();
        let l1: f64 = db.iter().zip(&closed).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 < 1e-12, "{l1}");
    }

    #[test]
    fn explicit_step_keeps_fixed_point() {
        let p = ModelParams { gamma_mode: GammaMode::Pinned(30.0), ..params(0.1, 0.0) };
        let rho = stationary_rho(&p, 30.0, 250).unwrap();
        let dt = explicit_rho_bound(&p, 30.0, 250).unwrap();
        let next = step_rho_explicit(&rho, &p, dt).unwrap();
        let worst = rho.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-12);
    }

    #[test]
    fn explicit_step_rejects_large_dt() {
        let p = params(0.1, 0.0);
        let mut rho = vec![0.0; 251];
        rho[30] = 1.0;
        let bound = explicit_rho_bound(&p, 30.0, 250).unwrap();
        let err = step_rho_explicit(&rho, &p, 1.01 * bound).unwrap_err();
        assert!(matches!(err, Error::TimeStepTooLarge { admissible, .. } if admissible == bound));
    }

    #[test]
    fn explicit_step_positive_and_conservative_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let c_max = rng.random_range(1..60);
            let alpha = rng.random_range(0.01..5.0);
            let beta = rng.random_range(0.0..5.0);
            let p = ModelParams {
                rates: RateMode::Constant {
                    v_r: rng.random_range(0.1..3.0),
                    v_a: rng.random_range(0.1..3.0),
                },
                ..params(alpha, beta)
            };
            let mut rho: Vec<f64> = (0..=c_max).map(|_| rng.random::<f64>().powi(3)).collect();
            let s: f64 = rho.iter().sum();
            rho.iter_mut().for_each(|v| *v /= s);
            let gamma = mean_of(&rho);
            let dt = explicit_rho_bound(&p, gamma, c_max).unwrap() * rng.random_range(0.1..1.0);
            let next = step_rho_explicit(&rho, &p, dt).unwrap();
            assert!(next.iter().all(|&v| v >= 0.0));
            assert!((next.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn implicit_rho_step_solves_backward_euler() {
        let p = ModelParams { gamma_mode: GammaMode::Pinned(30.0), ..params(0.1, 0.5) };
        let mut rho = vec![0.0; 61];
        rho[10] = 0.5;
        rho[40] = 0.5;
        for dt in [1e-3, 1.0, 1e3] {
            let next = step_rho_implicit(&rho, &p, dt).unwrap();
            let l = apply_linear_operator(&next, &p, 30.0).unwrap();
            let resid = (0..rho.len()).map(|c| (next[c] + dt * l[c] - rho[c]).abs()).fold(0.0, f64::max);
            assert!(resid < 1e-13 * (1.0 + dt), "dt={dt} resid={resid}");
            assert!(next.iter().all(|v| *v >= 0.0));
            assert!((next.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        let fixed = stationary_rho(&p, 30.0, 60).unwrap();
        let again = step_rho_implicit(&fixed, &p, 50.0).unwrap();
        assert!(fixed.iter().zip(&again).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn degenerate_prefactors() {
        let p = params(0.1, 0.0);
        assert!(prefactors(&p, 1.0).is_ok());
        assert!(matches!(prefactors(&p, 0.0), Err(Error::DegenerateConnectivity(_))));
        let p = ModelParams { gamma_mode: GammaMode::Pinned(0.0), ..params(0.1, 0.0) };
        let f = random_field(0, 4, 3);
        let r = evaluate_rates(&f, &p);
        assert!(apply_network_operator(&f, &r, &p).is_err());
    }
}
