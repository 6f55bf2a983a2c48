//! Initial data of the reference experiments. Every builder returns a field of unit discrete mass.

use crate::error::{Error, Result};
use crate::grid::{ConnectivityRange, DensityField, OpinionGrid};

fn gaussian(w: f64, center: f64, var: f64) -> f64 {
    (-(w - center).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn check_var(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, "variance must be positive"))
    }
}

fn check_rho(rho: &[f64], crange: &ConnectivityRange) -> Result<()> {
    if rho.len() != crange.len() {
        return Err(Error::ShapeMismatch {
            expected: crange.len().to_string(),
            found: rho.len().to_string(),
        });
    }
    Ok(())
}

/// Sum of two Gaussians of variance `var` centered at -1/2 and 1/2.
pub fn bimodal_opinion(grid: &OpinionGrid, var: f64) -> Result<Vec<f64>> {
    check_var("sigma_f2", var)?;
    Ok(grid
        .nodes()
        .iter()
        .map(|&w| 0.5 * (gaussian(w, -0.5, var) + gaussian(w, 0.5, var)))
        .collect())
}

/// g0(w) rho(c), opinions bimodal around -1/2 and 1/2.
pub fn test1(grid: OpinionGrid, crange: ConnectivityRange, rho: &[f64], sigma_f2: f64) -> Result<DensityField> {
    check_rho(rho, &crange)?;
    let g = bimodal_opinion(&grid, sigma_f2)?;
    let mut f = DensityField::product(grid, crange, &g, rho)?;
    f.normalize()?;
    Ok(f)
}

/// Parabolic degree profile max{c (2 gamma0 - c), 0} on {0..c_max}, summing to one.
pub fn parabolic_degrees(crange: &ConnectivityRange, gamma0: f64) -> Result<Vec<f64>> {
    if !(gamma0.is_finite() && gamma0 > 0.0) {
        return Err(Error::invalid("gamma0", "must be positive"));
    }
    let mut p: Vec<f64> = (0..crange.len())
        .map(|c| {
            let c = c as f64;
            (c * (2.0 * gamma0 - c)).max(0.0)
        })
        .collect();
    let s: f64 = p.iter().sum();
    if s <= 0.0 {
        return Err(Error::ZeroMass);
    }
    p.iter_mut().for_each(|v| *v /= s);
    Ok(p)
}

/// 2/3 p0(c) g+(w) + 1/3 p0(c - c0) g-(w), with g+ centered at -1/2 and g- at 1/2.
pub fn test2(
    grid: OpinionGrid,
    crange: ConnectivityRange,
    gamma0: f64,
    sigma_f2: f64,
    c0: usize,
) -> Result<DensityField> {
    check_var("sigma_f2", sigma_f2)?;
    let p0 = parabolic_degrees(&crange, gamma0)?;
    let shifted = |c: usize| if c >= c0 { p0[c - c0] } else { 0.0 };
    let mut f = DensityField::from_fn(grid, crange, |w, c| {
        2.0 / 3.0 * p0[c] * gaussian(w, -0.5, sigma_f2) + 1.0 / 3.0 * shifted(c) * gaussian(w, 0.5, sigma_f2)
    });
    f.normalize()?;
    Ok(f)
}

/// Followers near -1/2 with 0 <= c <= 20, leaders near 3/4 with 60 <= c <= 80, both weighted by rho.
pub fn test3(
    grid: OpinionGrid,
    crange: ConnectivityRange,
    rho: &[f64],
    sigma_f2: f64,
    sigma_l2: f64,
) -> Result<DensityField> {
    check_rho(rho, &crange)?;
    check_var("sigma_f2", sigma_f2)?;
    check_var("sigma_l2", sigma_l2)?;
    let mut f = DensityField::from_fn(grid, crange, |w, c| match c {
        0..=20 => rho[c] * (-(w + 0.5).powi(2) / (2.0 * sigma_f2)).exp(),
        60..=80 => rho[c] * (-(w - 0.75).powi(2) / (2.0 * sigma_l2)).exp(),
        _ => 0.0,
    });
    f.normalize()?;
    Ok(f)
}

/// Opinions uniform on [-1, 1], degrees distributed as rho.
pub fn uniform(grid: OpinionGrid, crange: ConnectivityRange, rho: &[f64]) -> Result<DensityField> {
    check_rho(rho, &crange)?;
    let g = vec![0.5; grid.len()];
    let mut f = DensityField::product(grid, crange, &g, rho)?;
    f.normalize()?;
    Ok(f)
}

/// All mass at the node nearest to w and at connectivity c.
pub fn dirac(grid: OpinionGrid, crange: ConnectivityRange, w: f64, c: usize) -> Result<DensityField> {
    if !(-1.0..=1.0).contains(&w) {
        return Err(Error::invalid("w", "must lie in [-1, 1]"));
    }
    if c > crange.c_max() {
        return Err(Error::invalid("c", "exceeds c_max"));
    }
    let i = ((w + 1.0) / grid.dw()).round() as usize;
    let mut f = DensityField::zeros(grid, crange);
    f.values_mut()[[i.min(grid.n()), c]] = 1.0 / grid.dw();
    Ok(f)
}
