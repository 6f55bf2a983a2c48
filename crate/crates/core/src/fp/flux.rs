//! Chang-Cooper type flux with solution-dependent weights.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::drift::DriftField;
use crate::grid::{DensityField, OpinionGrid};
use crate::kernel::Diffusion;

/// Open quadrature rule for the cell integral of drift over diffusion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Single evaluation at the half point, second order.
    #[default]
    Midpoint,
    /// Open three-point rule on quarter points, fourth order.
    Milne,
}

impl Quadrature {
    /// Integral of `f` over [a, a + dw].
    pub fn integrate(&self, a: f64, dw: f64, f: impl Fn(f64) -> f64) -> f64 {
        match self {
            Quadrature::Midpoint => dw * f(a + 0.5 * dw),
            Quadrature::Milne => {
                let h = 0.25 * dw;
                4.0 * h / 3.0 * (2.0 * f(a + h) - f(a + 2.0 * h) + 2.0 * f(a + 3.0 * h))
            }
        }
    }

    /// Offsets of the evaluation points, as fractions of dw.
    pub fn points(&self) -> &'static [f64] {
        match self {
            Quadrature::Midpoint => &[0.5],
            Quadrature::Milne => &[0.25, 0.5, 0.75],
        }
    }
}

/// x / (e^x - 1), with value 1 at x = 0.
#[inline]
pub fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - 0.5 * x
    } else {
        x / x.exp_m1()
    }
}

/// Chang-Cooper weight delta = 1/lambda + 1/(1 - e^lambda).
pub fn weight(lambda: f64) -> f64 {
    if lambda.is_nan() {
        return 0.5;
    }
    if lambda == f64::INFINITY {
        return 0.0;
    }
    if lambda == f64::NEG_INFINITY {
        return 1.0;
    }
    if lambda.abs() < 1e-4 {
        return 0.5 - lambda / 12.0 + lambda.powi(3) / 720.0;
    }
    let d = 1.0 / lambda - 1.0 / lambda.exp_m1();
    d.clamp(0.0, 1.0)
}

/// Per half point quantities of the scheme; arrays are indexed `[i, c]` for the half point
/// between nodes i and i + 1, i = 0..N-1.
#[derive(Clone, Debug)]
pub struct FluxAssembly {
    /// Rule-consistent drift D^2_{i+1/2}/dw * int (sigma^2 D' D - P[f]) / D^2.
    pub b: Array2<f64>,
    /// sigma^2 D^2_{i+1/2} / 2.
    pub c: Vec<f64>,
    pub lambda: Array2<f64>,
    pub delta: Array2<f64>,
    p: Array2<f64>,
    q: Array2<f64>,
    pub dw: f64,
    pub sigma2: f64,
}

/// Checks that D vanishes at no evaluation point of the rule.
pub fn check_diffusion(diffusion: &Diffusion, grid: &OpinionGrid, rule: Quadrature, c_max: usize) -> Result<()> {
    for i in 0..grid.n() {
        for &t in rule.points() {
            let w = grid.node(i) + t * grid.dw();
            for c in 0..=c_max {
                if diffusion.d(w, c) == 0.0 {
                    return Err(Error::DegenerateDiffusion);
                }
            }
        }
    }
    Ok(())
}

pub fn assemble(
    drift: &DriftField,
    grid: &OpinionGrid,
    c_max: usize,
    diffusion: &Diffusion,
    sigma2: f64,
    rule: Quadrature,
) -> FluxAssembly {
    let n = grid.n();
    let dw = grid.dw();
    let nc = c_max + 1;
    let mut b = Array2::zeros((n, nc));
    let mut lambda = Array2::zeros((n, nc));
    let mut delta = Array2::zeros((n, nc));
    let mut p = Array2::zeros((n, nc));
    let mut q = Array2::zeros((n, nc));
    let cdiff: Vec<f64> = (0..n)
        .map(|i| {
            let dmid = diffusion.d(grid.half_point(i), 0);
            0.5 * sigma2 * dmid * dmid
        })
        .collect();
    for c in 0..nc {
        if c > 0 && drift.same_column(c - 1, c) {
            for arr in [&mut b, &mut lambda, &mut delta, &mut p, &mut q] {
                for i in 0..n {
                    arr[[i, c]] = arr[[i, c - 1]];
                }
            }
            continue;
        }
        for i in 0..n {
            let integrand = |w: f64| {
                let d = diffusion.d(w, c);
                (sigma2 * diffusion.d_prime(w, c) * d - drift.eval(w, c)) / (d * d)
            };
            let integral = rule.integrate(grid.node(i), dw, integrand);
            let dmid = diffusion.d(grid.half_point(i), c);
            let bb = dmid * dmid * integral / dw;
            b[[i, c]] = bb;
            let l = if sigma2 > 0.0 {
                2.0 * integral / sigma2
            } else if bb > 0.0 {
                f64::INFINITY
            } else if bb < 0.0 {
                f64::NEG_INFINITY
            } else {
                0.0
            };
            lambda[[i, c]] = l;
            let d = weight(l);
            delta[[i, c]] = d;
            let (pi, qi) = if sigma2 > 0.0 {
                let k = cdiff[i] / dw;
                (k * bernoulli(-l), k * bernoulli(l))
            } else {
                ((1.0 - d) * bb, -d * bb)
            };
            p[[i, c]] = pi;
            q[[i, c]] = qi;
        }
    }
    FluxAssembly { b, c: cdiff, lambda, delta, p, q, dw, sigma2 }
}

impl FluxAssembly {
    /// Coefficients (p, q) with F_{i+1/2} = p f_{i+1} - q f_i, both nonnegative when sigma2 > 0.
    #[inline]
    pub fn coefficients(&self, i: usize, c: usize) -> (f64, f64) {
        (self.p[[i, c]], self.q[[i, c]])
    }

    /// Same flux written with the weights: [(1 - delta) B + C/dw] f_{i+1} + [delta B - C/dw] f_i.
    pub fn flux_weighted_form(&self, field: &DensityField, i: usize, c: usize) -> f64 {
        let b = self.b[[i, c]];
        let d = self.delta[[i, c]];
        let k = self.c[i] / self.dw;
        ((1.0 - d) * b + k) * field.get(i + 1, c) + (d * b - k) * field.get(i, c)
    }

    /// Interior fluxes, shape (N, c_max + 1).
    pub fn fluxes(&self, field: &DensityField) -> Array2<f64> {
        let (n, nc) = self.b.dim();
        let f = field.values();
        Array2::from_shape_fn((n, nc), |(i, c)| self.p[[i, c]] * f[[i + 1, c]] - self.q[[i, c]] * f[[i, c]])
    }

    /// nu = max_i of the loss rate of node i; the explicit step is positive for dt <= dw/nu.
    pub fn nu(&self) -> f64 {
        let (n, nc) = self.b.dim();
        let mut worst: f64 = 0.0;
        for i in 0..=n {
            for c in 0..nc {
                let mut loss = 0.0;
                if i < n {
                    loss += self.q[[i, c]];
                }
                if i > 0 {
                    loss += self.p[[i - 1, c]];
                }
                worst = worst.max(loss);
            }
        }
        worst
    }

    /// Largest dt for which the explicit opinion step keeps every coefficient nonnegative.
    pub fn opinion_bound(&self) -> f64 {
        let nu = self.nu();
        if nu > 0.0 {
            self.dw / nu
        } else {
            f64::INFINITY
        }
    }
}

/// The uniform bound dt <= dw / (2 (2 + sigma^2 M + sigma^2/(2 dw))), valid when |P| <= 1 and |D| <= 1.
pub fn uniform_opinion_bound(dw: f64, sigma2: f64, max_abs_d_prime: f64) -> f64 {
    0.5 * dw / (2.0 + sigma2 * max_abs_d_prime + sigma2 / (2.0 * dw))
}
