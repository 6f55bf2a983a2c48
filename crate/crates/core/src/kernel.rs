//! Compromise function P = H K and local diffusion D.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ConnectivityRange, OpinionGrid};

/// Confidence radius of the bounded-confidence weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Confidence {
    Constant { delta: f64 },
    /// Delta(c) = d0 * c / c_max.
    Linear { d0: f64 },
}

/// Opinion part H of the compromise function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OpinionWeight {
    Unity,
    /// H(w, w_*) = 1 - w^2.
    Local,
    /// H = 1 when |w - w_*| <= Delta(c), 0 otherwise.
    BoundedConfidence { confidence: Confidence },
}

/// Connectivity part K of the compromise function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConnectivityWeight {
    Unity,
    /// K = (c/c_max)^(-a) (c_*/c_max)^b, with c replaced by max(c, 1).
    /// With `clamp` the value is capped at 1.
    Power { a: f64, b: f64, clamp: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionKernel {
    pub h: OpinionWeight,
    pub k: ConnectivityWeight,
}

impl InteractionKernel {
    pub const UNITY: Self = Self {
        h: OpinionWeight::Unity,
        k: ConnectivityWeight::Unity,
    };

    pub fn validate(&self) -> Result<()> {
        if let OpinionWeight::BoundedConfidence { confidence } = self.h {
            let v = match confidence {
                Confidence::Constant { delta } => delta,
                Confidence::Linear { d0 } => d0,
            };
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid("delta", "confidence radius must be finite and nonnegative"));
            }
        }
        if let ConnectivityWeight::Power { a, b, .. } = self.k {
            if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
                return Err(Error::invalid("a/b", "power kernel exponents must be positive"));
            }
        }
        Ok(())
    }

    /// Confidence radius Delta(c), if the opinion weight is of bounded-confidence type.
    pub fn radius(&self, c: usize, c_max: usize) -> Option<f64> {
        match self.h {
            OpinionWeight::BoundedConfidence { confidence } => Some(match confidence {
                Confidence::Constant { delta } => delta,
                Confidence::Linear { d0 } => d0 * c as f64 / c_max as f64,
            }),
            _ => None,
        }
    }

    pub fn h(&self, w: f64, w_star: f64, c: usize, c_max: usize) -> f64 {
        match self.h {
            OpinionWeight::Unity => 1.0,
            OpinionWeight::Local => 1.0 - w * w,
            OpinionWeight::BoundedConfidence { .. } => {
                let delta = self.radius(c, c_max).unwrap();
                if (w_star - w).abs() <= delta {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn k(&self, c: usize, c_star: usize, c_max: usize) -> f64 {
        match self.k {
            ConnectivityWeight::Unity => 1.0,
            ConnectivityWeight::Power { a, b, clamp } => {
                let v = power_left(c, c_max, a) * power_right(c_star, c_max, b);
                if clamp {
                    v.min(1.0)
                } else {
                    v
                }
            }
        }
    }

    pub fn eval(&self, w: f64, w_star: f64, c: usize, c_star: usize, c_max: usize) -> f64 {
        self.h(w, w_star, c, c_max) * self.k(c, c_star, c_max)
    }
}

pub(crate) fn power_left(c: usize, c_max: usize, a: f64) -> f64 {
    (c.max(1) as f64 / c_max as f64).powf(-a)
}

pub(crate) fn power_right(c_star: usize, c_max: usize, b: f64) -> f64 {
    (c_star as f64 / c_max as f64).powf(b)
}

/// Local relevance of the diffusion, D(w, c).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Diffusion {
    /// D = 1 - w^2.
    Quadratic,
    Constant { value: f64 },
}

impl Diffusion {
    pub fn d(&self, w: f64, _c: usize) -> f64 {
        match *self {
            Diffusion::Quadratic => 1.0 - w * w,
            Diffusion::Constant { value } => value,
        }
    }

    pub fn d_prime(&self, w: f64, _c: usize) -> f64 {
        match *self {
            Diffusion::Quadratic => -2.0 * w,
            Diffusion::Constant { .. } => 0.0,
        }
    }

    /// Upper bound of |D'| on [-1, 1].
    pub fn max_abs_d_prime(&self) -> f64 {
        match *self {
            Diffusion::Quadratic => 2.0,
            Diffusion::Constant { .. } => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        match *self {
            Diffusion::Quadratic => 1.0,
            Diffusion::Constant { value } => value.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Diffusion::Constant { value } = *self {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid("diffusion", "constant diffusion must be positive"));
            }
        }
        Ok(())
    }
}

/// Largest admissible noise amplitude d so that |xi| < d keeps the binary rule inside [-1, 1].
///
/// The minimum of (1 - w)/D(w, c) is taken over interior nodes where D does not vanish.
pub fn noise_bound(d: &Diffusion, grid: &OpinionGrid, crange: &ConnectivityRange) -> Result<f64> {
    let mut best = f64::INFINITY;
    for c in 0..crange.len() {
        for i in 1..grid.n() {
            let w = grid.node(i);
            let dv = d.d(w, c);
            if dv != 0.0 {
                best = best.min((1.0 - w) / dv.abs());
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::DegenerateDiffusion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const C_MAX: usize = 250;

    fn builtins() -> Vec<InteractionKernel> {
        let hs = [
            OpinionWeight::Unity,
            OpinionWeight::Local,
            OpinionWeight::BoundedConfidence { confidence: Confidence::Constant { delta: 0.25 } },
            OpinionWeight::BoundedConfidence { confidence: Confidence::Linear { d0: 1.01 } },
        ];
        let ks = [
            ConnectivityWeight::Unity,
            ConnectivityWeight::Power { a: 3.0, b: 3.0, clamp: true },
        ];
        hs.iter()
            .flat_map(|&h| ks.iter().map(move |&k| InteractionKernel { h, k }))
            .collect()
    }

    proptest! {
        #[test]
        fn builtin_kernels_lie_in_unit_interval(
            w in -1.0f64..=1.0, ws in -1.0f64..=1.0, c in 0usize..=C_MAX, cs in 0usize..=C_MAX
        ) {
            for kernel in builtins() {
                let p = kernel.eval(w, ws, c, cs, C_MAX);
                prop_assert!((0.0..=1.0).contains(&p), "{kernel:?} gave {p}");
            }
        }
    }

    #[test]
    fn unclamped_power_kernel_exceeds_one() {
        let k = InteractionKernel {
            h: OpinionWeight::Unity,
            k: ConnectivityWeight::Power { a: 3.0, b: 3.0, clamp: false },
        };
        assert!(k.eval(0.0, 0.0, 1, 80, C_MAX) > 1.0);
        // c = 0 is evaluated as c = 1
        assert_eq!(k.k(0, 80, C_MAX), k.k(1, 80, C_MAX));
        assert_eq!(k.k(10, 0, C_MAX), 0.0);
    }

    #[test]
    fn linear_confidence_grows_with_c() {
        let k = InteractionKernel {
            h: OpinionWeight::BoundedConfidence { confidence: Confidence::Linear { d0: 1.01 } },
            k: ConnectivityWeight::Unity,
        };
        assert_eq!(k.radius(0, C_MAX), Some(0.0));
        assert!((k.radius(C_MAX, C_MAX).unwrap() - 1.01).abs() < 1e-15);
        assert_eq!(k.h(0.0, 0.0, 0, C_MAX), 1.0);
        assert_eq!(k.h(0.0, 0.5, 100, C_MAX), 0.0);
        assert_eq!(k.h(0.0, 0.5, 200, C_MAX), 1.0);
    }

    #[test]
    fn noise_bound_quadratic_diffusion() {
        let grid = OpinionGrid::new(80).unwrap();
        let crange = ConnectivityRange::new(3).unwrap();
        let d = noise_bound(&Diffusion::Quadratic, &grid, &crange).unwrap();
        // min of 1/(1+w) over interior nodes, attained at w = 1 - dw
        assert!((d - 1.0 / (2.0 - grid.dw())).abs() < 1e-14);
        assert!((d - 0.5).abs() < grid.dw());
    }

    #[test]
    fn noise_bound_constant_diffusion() {
        let grid = OpinionGrid::new(40).unwrap();
        let crange = ConnectivityRange::new(3).unwrap();
        let d = noise_bound(&Diffusion::Constant { value: 1.0 }, &grid, &crange).unwrap();
        assert!((d - grid.dw()).abs() < 1e-14);
    }

    #[test]
    fn noise_bound_zero_diffusion_is_degenerate() {
        let grid = OpinionGrid::new(40).unwrap();
        let crange = ConnectivityRange::new(3).unwrap();
        let r = noise_bound(&Diffusion::Constant { value: 0.0 }, &grid, &crange);
        assert!(matches!(r, Err(Error::DegenerateDiffusion)));
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let d = Diffusion::Quadratic;
        for &w in &[-0.7, 0.0, 0.3, 0.9] {
            let h = 1e-6;
            let fd = (d.d(w + h, 0) - d.d(w - h, 0)) / (2.0 * h);
            assert!((fd - d.d_prime(w, 0)).abs() < 1e-8);
        }
    }
}
