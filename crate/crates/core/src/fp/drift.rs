//! Nonlocal drift P[f](w, c) = sum_{c_*} int P(w, w_*; c, c_*) (w_* - w) f(w_*, c_*) dw_*.
//!
//! The w_*-integral uses the dw-weighted node quadrature. For the built-in kernels the
//! c_*-sum collapses to one weighted profile per connectivity class, and the integral
//! over w_* reduces to differences of prefix sums, so each evaluation is O(1).

use ndarray::{Array2, Axis};

use crate::grid::{DensityField, OpinionGrid};
use crate::kernel::{power_left, power_right, ConnectivityWeight, InteractionKernel, OpinionWeight};

/// Kernel data that does not depend on the density.
#[derive(Clone, Debug)]
pub struct DriftOperator {
    kernel: InteractionKernel,
    c_max: usize,
    left: Vec<f64>,
    right: Vec<f64>,
    // K(c, c_*) transposed, only for the clamped power weight
    k_t: Option<Array2<f64>>,
}

impl DriftOperator {
    pub fn new(kernel: InteractionKernel, c_max: usize) -> Self {
        let (left, right, k_t) = match kernel.k {
            ConnectivityWeight::Unity => (vec![1.0; c_max + 1], vec![1.0; c_max + 1], None),
            ConnectivityWeight::Power { a, b, clamp } => {
                let left: Vec<f64> = (0..=c_max).map(|c| power_left(c, c_max, a)).collect();
                let right: Vec<f64> = (0..=c_max).map(|c| power_right(c, c_max, b)).collect();
                let k_t = clamp.then(|| {
                    Array2::from_shape_fn((c_max + 1, c_max + 1), |(cs, c)| {
                        (left[c] * right[cs]).min(1.0)
                    })
                });
                (left, right, k_t)
            }
        };
        Self { kernel, c_max, left, right, k_t }
    }

    pub fn kernel(&self) -> &InteractionKernel {
        &self.kernel
    }

    /// Freezes P[f] for the given density.
    pub fn evaluate(&self, field: &DensityField) -> DriftField {
        let grid = *field.grid();
        let values = field.values();
        let nc = self.c_max + 1;
        let (profiles, index, scale) = match (&self.kernel.k, &self.k_t) {
            (ConnectivityWeight::Unity, _) => {
                let g = field.marginal_g();
                (vec![Profile::new(&grid, &g)], vec![0; nc], vec![1.0; nc])
            }
            (ConnectivityWeight::Power { .. }, None) => {
                let weighted: Vec<f64> = values
                    .axis_iter(Axis(0))
                    .map(|row| row.iter().zip(&self.right).map(|(f, k)| f * k).sum())
                    .collect();
                (vec![Profile::new(&grid, &weighted)], vec![0; nc], self.left.clone())
            }
            (ConnectivityWeight::Power { .. }, Some(k_t)) => {
                // column c of f K^T is sum_{c_*} K(c, c_*) f(., c_*)
                let weighted = values.dot(k_t);
                let profiles = weighted
                    .axis_iter(Axis(1))
                    .map(|col| Profile::new(&grid, &col.to_vec()))
                    .collect();
                (profiles, (0..nc).collect(), vec![1.0; nc])
            }
        };
        let radius = (0..nc).map(|c| self.kernel.radius(c, self.c_max).unwrap_or(0.0)).collect();
        DriftField {
            grid,
            h: self.kernel.h,
            profiles,
            index,
            scale,
            radius,
        }
    }
}

#[derive(Clone, Debug)]
struct Profile {
    // s0[j] = dw sum_{k<j} F_k, s1[j] = dw sum_{k<j} w_k F_k
    s0: Vec<f64>,
    s1: Vec<f64>,
}

impl Profile {
    fn new(grid: &OpinionGrid, weights: &[f64]) -> Self {
        let dw = grid.dw();
        let mut s0 = Vec::with_capacity(weights.len() + 1);
        let mut s1 = Vec::with_capacity(weights.len() + 1);
        let (mut a0, mut a1) = (0.0, 0.0);
        s0.push(0.0);
        s1.push(0.0);
        for (j, &v) in weights.iter().enumerate() {
            a0 += dw * v;
            a1 += dw * grid.node(j) * v;
            s0.push(a0);
            s1.push(a1);
        }
        Self { s0, s1 }
    }

    /// int over nodes lo..=hi of (w_* - w) F(w_*).
    #[inline]
    fn moment(&self, lo: usize, hi: usize, w: f64) -> f64 {
        (self.s1[hi + 1] - self.s1[lo]) - w * (self.s0[hi + 1] - self.s0[lo])
    }
}

/// P[f] frozen at one density, evaluable at arbitrary w.
#[derive(Clone, Debug)]
pub struct DriftField {
    grid: OpinionGrid,
    h: OpinionWeight,
    profiles: Vec<Profile>,
    index: Vec<usize>,
    scale: Vec<f64>,
    radius: Vec<f64>,
}

impl DriftField {
    /// Whether columns a and b of P[f] coincide as functions of w.
    pub fn same_column(&self, a: usize, b: usize) -> bool {
        self.index[a] == self.index[b] && self.scale[a] == self.scale[b] && self.radius[a] == self.radius[b]
    }

    pub fn eval(&self, w: f64, c: usize) -> f64 {
        let p = &self.profiles[self.index[c]];
        let n = self.grid.n();
        let base = match self.h {
            OpinionWeight::Unity => p.moment(0, n, w),
            OpinionWeight::Local => (1.0 - w * w) * p.moment(0, n, w),
            OpinionWeight::BoundedConfidence { .. } => match self.window(w, self.radius[c]) {
                Some((lo, hi)) => p.moment(lo, hi, w),
                None => 0.0,
            },
        };
        self.scale[c] * base
    }

    /// Node range {j : |w_j - w| <= delta}, using the same comparison as the kernel.
    fn window(&self, w: f64, delta: f64) -> Option<(usize, usize)> {
        let n = self.grid.n() as isize;
        let dw = self.grid.dw();
        let inside = |j: isize| (self.grid.node(j as usize) - w).abs() <= delta;
        let mut lo = (((w - delta + 1.0) / dw).ceil() as isize).clamp(0, n);
        while lo > 0 && inside(lo - 1) {
            lo -= 1;
        }
        while lo <= n && !inside(lo) && self.grid.node(lo as usize) < w {
            lo += 1;
        }
        let mut hi = (((w + delta + 1.0) / dw).floor() as isize).clamp(0, n);
        while hi < n && inside(hi + 1) {
            hi += 1;
        }
        while hi >= 0 && !inside(hi) && self.grid.node(hi as usize) > w {
            hi -= 1;
        }
        if lo > n || hi < 0 || lo > hi || !inside(lo) {
            return None;
        }
        Some((lo as usize, hi as usize))
    }
}
