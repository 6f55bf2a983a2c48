//! Closed-form stationary states: the degree law and the opinion profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ConnectivityRange, DensityField, OpinionGrid};
use crate::kernel::{Diffusion, OpinionWeight};

fn check_law(gamma: f64, alpha: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma", "must be positive"));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid("alpha", "must be positive"));
    }
    Ok(())
}

/// log rho_inf(c) for c = 0..=c_max, by cumulative sums of the ratio
/// rho(c+1)/rho(c) = gamma/(gamma+alpha) * (alpha+c)/(c+1).
fn log_rho_inf(c_max: usize, gamma: f64, alpha: f64) -> Vec<f64> {
    let log_ratio = (gamma / (gamma + alpha)).ln();
    let mut out = Vec::with_capacity(c_max + 1);
    let mut acc = alpha * (alpha / (alpha + gamma)).ln();
    out.push(acc);
    for c in 0..c_max {
        acc += log_ratio + ((alpha + c as f64) / (c as f64 + 1.0)).ln();
        out.push(acc);
    }
    out
}

/// Stationary degree law rho_inf(c; gamma, alpha), untruncated value at a single c.
pub fn rho_inf(c: usize, gamma: f64, alpha: f64) -> Result<f64> {
    check_law(gamma, alpha)?;
    Ok(log_rho_inf(c, gamma, alpha)[c].exp())
}

/// Poisson law e^(-gamma) gamma^c / c!.
pub fn rho_inf_poisson(c: usize, gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma", "must be positive"));
    }
    let log_fact: f64 = (1..=c).map(|k| (k as f64).ln()).sum();
    Ok((-gamma + c as f64 * gamma.ln() - log_fact).exp())
}

/// Truncated power law (alpha/gamma)^alpha * alpha / c, defined for c >= 1.
pub fn rho_inf_powerlaw(c: usize, gamma: f64, alpha: f64) -> Result<f64> {
    check_law(gamma, alpha)?;
    if c == 0 {
        return Err(Error::OutOfDomain("power-law approximation is undefined at c = 0".into()));
    }
    Ok((alpha / gamma).powf(alpha) * alpha / c as f64)
}

/// The stationary degree law with parameters (gamma, alpha) on {0..c_max}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryDegreeLaw {
    pub gamma: f64,
    pub alpha: f64,
    pub c_max: usize,
}

impl StationaryDegreeLaw {
    pub fn new(gamma: f64, alpha: f64, c_max: usize) -> Result<Self> {
        check_law(gamma, alpha)?;
        Ok(Self { gamma, alpha, c_max })
    }

    /// Untruncated values rho_inf(0..=c_max); they sum to 1 - deficit.
    pub fn values(&self) -> Vec<f64> {
        log_rho_inf(self.c_max, self.gamma, self.alpha)
            .into_iter()
            .map(f64::exp)
            .collect()
    }

    /// Mass of the law beyond c_max.
    pub fn truncation_deficit(&self) -> f64 {
        1.0 - self.values().iter().sum::<f64>()
    }

    /// Values rescaled to sum to one on {0..c_max}.
    pub fn normalized(&self) -> Vec<f64> {
        let mut v = self.values();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        v
    }
}

/// Which closed form of the stationary opinion profile to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileVariant {
    /// H = 1, D = 1 - w^2.
    Case1,
    /// H = 1 - w^2, D = 1 - w^2.
    Case2,
    /// Quadrature of the integral form for a w-only opinion weight and diffusion.
    Generic { h: OpinionWeight, diffusion: Diffusion },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryOpinionProfile {
    pub kappa: f64,
    pub mbar: f64,
    pub sigma2: f64,
    pub variant: ProfileVariant,
}

/// kappa = sum_c Kbar(c) rho(c).
pub fn kappa(kbar: impl Fn(usize) -> f64, rho: &[f64]) -> f64 {
    rho.iter().enumerate().map(|(c, r)| kbar(c) * r).sum()
}

// 5-point Gauss-Legendre on [-1, 1].
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    half * GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(|(x, wt)| wt * f(mid + half * x))
        .sum::<f64>()
}

/// Stationary opinion profile on the grid, normalized to unit discrete mass.
pub fn g_inf(profile: &StationaryOpinionProfile, grid: &OpinionGrid) -> Result<Vec<f64>> {
    let StationaryOpinionProfile { kappa, mbar, sigma2, variant } = *profile;
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::invalid("sigma2", "stationary profiles need positive noise"));
    }
    if !(mbar > -1.0 && mbar < 1.0) {
        return Err(Error::invalid("mbar", "mean opinion must lie in (-1, 1)"));
    }
    if !kappa.is_finite() {
        return Err(Error::invalid("kappa", "must be finite"));
    }
    let n = grid.n();
    let mut log_g = vec![f64::NEG_INFINITY; n + 1];
    let mut boundary = [0.0f64; 2];
    match variant {
        ProfileVariant::Case1 => {
            let a = mbar * kappa / (2.0 * sigma2);
            for (i, lg) in log_g.iter_mut().enumerate().take(n).skip(1) {
                let w = grid.node(i);
                *lg = (a - 2.0) * (1.0 + w).ln() + (-a - 2.0) * (1.0 - w).ln()
                    - kappa * (1.0 - mbar * w) / (sigma2 * (1.0 - w * w));
            }
            if kappa <= 0.0 {
                return Err(Error::NonNormalizable(
                    "case 1 needs a positive kappa for the exponential factor to decay".into(),
                ));
            }
        }
        ProfileVariant::Case2 => {
            let e_minus = -2.0 + (1.0 - mbar) * kappa / sigma2;
            let e_plus = -2.0 + (1.0 + mbar) * kappa / sigma2;
            if e_minus <= -1.0 || e_plus <= -1.0 {
                return Err(Error::NonNormalizable(format!(
                    "exponents ({e_minus}, {e_plus}) make the profile non-integrable"
                )));
            }
            for (i, lg) in log_g.iter_mut().enumerate().take(n).skip(1) {
                let w = grid.node(i);
                *lg = e_minus * (1.0 - w).ln() + e_plus * (1.0 + w).ln();
            }
            // finite limits only when the vanishing factor has exponent zero
            if e_plus == 0.0 {
                boundary[0] = 2f64.powf(e_minus);
            }
            if e_minus == 0.0 {
                boundary[1] = 2f64.powf(e_plus);
            }
        }
        ProfileVariant::Generic { h, diffusion } => {
            let hbar = match h {
                OpinionWeight::Unity => |_: f64| 1.0,
                OpinionWeight::Local => |w: f64| 1.0 - w * w,
                OpinionWeight::BoundedConfidence { .. } => {
                    return Err(Error::Unsupported(
                        "closed stationary profiles need an opinion weight depending on w only".into(),
                    ))
                }
            };
            let integrand = |v: f64| {
                let d = diffusion.d(v, 0);
                hbar(v) * (mbar - v) / (d * d)
            };
            let scale = 2.0 * kappa / sigma2;
            let anchor = n / 2;
            let mut phi = vec![0.0; n + 1];
            for i in (anchor + 1)..=n {
                phi[i] = phi[i - 1] + gauss_legendre(grid.node(i - 1), grid.node(i), integrand);
            }
            for i in (0..anchor).rev() {
                phi[i] = phi[i + 1] - gauss_legendre(grid.node(i), grid.node(i + 1), integrand);
            }
            for i in 0..=n {
                let d = diffusion.d(grid.node(i), 0);
                if d != 0.0 && phi[i].is_finite() {
                    log_g[i] = scale * phi[i] - 2.0 * d.abs().ln();
                }
            }
        }
    }
    let shift = log_g
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::NonNormalizable("profile vanishes on the grid".into()));
    }
    let mut g: Vec<f64> = log_g.iter().map(|&l| (l - shift).exp()).collect();
    if boundary[0] != 0.0 {
        g[0] = (boundary[0].ln() - shift).exp();
    }
    if boundary[1] != 0.0 {
        g[n] = (boundary[1].ln() - shift).exp();
    }
    let mass = grid.dw() * g.iter().sum::<f64>();
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::NonNormalizable("profile has no finite positive mass".into()));
    }
    g.iter_mut().for_each(|v| *v /= mass);
    Ok(g)
}

/// f_inf(w, c) = g_inf(w) rho_inf(c), normalized to unit mass.
pub fn f_inf_product(
    grid: OpinionGrid,
    crange: ConnectivityRange,
    g: &[f64],
    rho: &[f64],
) -> Result<DensityField> {
    let mut f = DensityField::product(grid, crange, g, rho)?;
    f.normalize()?;
    Ok(f)
}
