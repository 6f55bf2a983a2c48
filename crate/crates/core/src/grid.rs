//! Opinion grid, connectivity range and the density field f(w, c).

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Uniform grid of N subintervals on [-1, 1] with nodes w_i = -1 + i*dw, i = 0..=N.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpinionGrid {
    n: usize,
    dw: f64,
}

impl OpinionGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", "the opinion grid needs at least 2 subintervals"));
        }
        Ok(Self {
            n,
            dw: 2.0 / n as f64,
        })
    }

    /// Number of subintervals N. There are N + 1 nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dw(&self) -> f64 {
        self.dw
    }

    /// Node w_i. Computed as (2i - N)/N so that the grid is exactly symmetric
    /// and the end points are exactly -1 and +1.
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        (2.0 * i as f64 - self.n as f64) / self.n as f64
    }

    /// Half point w_{i+1/2} between nodes i and i + 1.
    #[inline]
    pub fn half_point(&self, i: usize) -> f64 {
        (2.0 * i as f64 + 1.0 - self.n as f64) / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.node(i)).collect()
    }
}

/// Connectivity values c in {0, 1, ..., c_max}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConnectivityRange {
    c_max: usize,
}

impl ConnectivityRange {
    pub fn new(c_max: usize) -> Result<Self> {
        if c_max < 1 {
            return Err(Error::invalid("c_max", "must be at least 1"));
        }
        Ok(Self { c_max })
    }

    pub fn c_max(&self) -> usize {
        self.c_max
    }

    /// Number of connectivity values, c_max + 1.
    pub fn len(&self) -> usize {
        self.c_max + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Cell averages f_i(c) on the opinion grid times the connectivity range.
///
/// Values are stored as an `(N + 1) x (c_max + 1)` matrix indexed `[i, c]`.
/// All quadratures use the uniform weight `dw` on every node, boundary nodes
/// included, so that the discrete flux telescoping conserves mass exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    grid: OpinionGrid,
    crange: ConnectivityRange,
    values: Array2<f64>,
}

impl DensityField {
    pub fn zeros(grid: OpinionGrid, crange: ConnectivityRange) -> Self {
        Self {
            grid,
            crange,
            values: Array2::zeros((grid.len(), crange.len())),
        }
    }

    pub fn from_fn(
        grid: OpinionGrid,
        crange: ConnectivityRange,
        mut f: impl FnMut(f64, usize) -> f64,
    ) -> Self {
        let values = Array2::from_shape_fn((grid.len(), crange.len()), |(i, c)| f(grid.node(i), c));
        Self {
            grid,
            crange,
            values,
        }
    }

    /// Wraps an existing matrix; rejects wrong shapes, negative or non-finite entries.
    pub fn from_values(
        grid: OpinionGrid,
        crange: ConnectivityRange,
        values: Array2<f64>,
    ) -> Result<Self> {
        let expected = (grid.len(), crange.len());
        if values.dim() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected:?}"),
                found: format!("{:?}", values.dim()),
            });
        }
        for ((i, c), &v) in values.indexed_iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NegativeDensity {
                    value: v,
                    node: i,
                    connectivity: c,
                });
            }
        }
        Ok(Self {
            grid,
            crange,
            values,
        })
    }

    /// Outer product g(w_i) * rho(c).
    pub fn product(
        grid: OpinionGrid,
        crange: ConnectivityRange,
        g: &[f64],
        rho: &[f64],
    ) -> Result<Self> {
        if g.len() != grid.len() || rho.len() != crange.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("({}, {})", grid.len(), crange.len()),
                found: format!("({}, {})", g.len(), rho.len()),
            });
        }
        let values = Array2::from_shape_fn((grid.len(), crange.len()), |(i, c)| g[i] * rho[c]);
        Self::from_values(grid, crange, values)
    }

    pub fn grid(&self) -> &OpinionGrid {
        &self.grid
    }

    pub fn crange(&self) -> &ConnectivityRange {
        &self.crange
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, i: usize, c: usize) -> f64 {
        self.values[[i, c]]
    }

    /// Total mass dw * sum_i sum_c f_i(c).
    pub fn mass(&self) -> f64 {
        self.grid.dw * self.values.sum()
    }

    /// Rescales to unit mass.
    pub fn normalize(&mut self) -> Result<()> {
        let mass = self.mass();
        if mass <= 0.0 || !mass.is_finite() {
            return Err(Error::ZeroMass);
        }
        self.values.mapv_inplace(|v| v / mass);
        Ok(())
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Degree distribution rho(c) = dw * sum_i f_i(c).
    pub fn marginal_rho(&self) -> Vec<f64> {
        let dw = self.grid.dw;
        self.values
            .axis_iter(Axis(1))
            .map(|col| dw * col.sum())
            .collect()
    }

    /// Opinion distribution g_i = sum_c f_i(c).
    pub fn marginal_g(&self) -> Vec<f64> {
        self.values.axis_iter(Axis(0)).map(|row| row.sum()).collect()
    }

    /// Mean density of connectivity gamma = sum_c c * rho(c).
    pub fn gamma(&self) -> f64 {
        self.marginal_rho()
            .iter()
            .enumerate()
            .map(|(c, r)| c as f64 * r)
            .sum()
    }

    /// gamma_f(w_i) = sum_c c * f_i(c).
    pub fn gamma_f(&self) -> Vec<f64> {
        self.values
            .axis_iter(Axis(0))
            .map(|row| row.iter().enumerate().map(|(c, v)| c as f64 * v).sum())
            .collect()
    }

    /// Overall mean opinion dw * sum_i w_i g_i.
    pub fn mean_opinion(&self) -> f64 {
        let g = self.marginal_g();
        self.grid.dw
            * g.iter()
                .enumerate()
                .map(|(i, gi)| self.grid.node(i) * gi)
                .sum::<f64>()
    }
}
