//! Moments, the closed moment system, error norms and cluster counting.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::DensityField;
use crate::network::{apply_linear_operator, explicit_rho_bound};
use crate::params::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRecord {
    pub t: f64,
    pub rho: Vec<f64>,
    /// m_w(c) = integral of w f(w, c).
    pub m_w: Vec<f64>,
    /// E_w(c) = integral of w^2 f(w, c).
    pub e_w: Vec<f64>,
    pub gamma: f64,
    /// Sum over c of m_w.
    pub total_mean: f64,
    pub mass: f64,
}

impl MomentRecord {
    fn from_parts(t: f64, rho: Vec<f64>, m_w: Vec<f64>, e_w: Vec<f64>) -> Self {
        let gamma = rho.iter().enumerate().map(|(c, r)| c as f64 * r).sum();
        let total_mean = m_w.iter().sum();
        let mass = rho.iter().sum();
        Self { t, rho, m_w, e_w, gamma, total_mean, mass }
    }

    /// Sum E_w - (sum m_w)^2.
    pub fn variance(&self) -> f64 {
        self.e_w.iter().sum::<f64>() - self.total_mean * self.total_mean
    }
}

pub fn compute_moments(field: &DensityField, t: f64) -> MomentRecord {
    let grid = field.grid();
    let dw = grid.dw();
    let nc = field.crange().len();
    let mut m = vec![0.0; nc];
    let mut e = vec![0.0; nc];
    for ((i, c), v) in field.values().indexed_iter() {
        let w = grid.node(i);
        m[c] += dw * w * v;
        e[c] += dw * w * w * v;
    }
    MomentRecord::from_parts(t, field.marginal_rho(), m, e)
}

/// Integrates the moment system of the binary rule w' = w + eta (w_* - w) with constant rates:
///
/// d rho/dt = -L[rho],
/// d m/dt = -L[m] + lambda eta (rho M - m),
/// d E/dt = -L[E] + lambda [-2 eta (E - m M) + eta^2 (E - 2 m M + rho S)],
///
/// where M = sum m and S = sum E. Records every step.
pub fn solve_moment_system(
    rho0: &[f64],
    m0: &[f64],
    e0: &[f64],
    params: &ModelParams,
    t_end: f64,
) -> Result<Vec<MomentRecord>> {
    params.validate()?;
    if !params.rates.is_constant() {
        return Err(Error::Unsupported("the moment system needs constant rates".into()));
    }
    let n = rho0.len();
    for (name, v) in [("m0", m0), ("e0", e0)] {
        if v.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n.to_string(),
                found: format!("{} ({name})", v.len()),
            });
        }
    }
    if n < 2 {
        return Err(Error::invalid("c_max", "must be at least 1"));
    }
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::invalid("t_end", "must be finite and nonnegative"));
    }
    let (eta, lam) = (params.eta, params.lambda_freq);
    let mut rec = MomentRecord::from_parts(0.0, rho0.to_vec(), m0.to_vec(), e0.to_vec());
    let mut out = vec![rec.clone()];
    let mut step = 0;
    while rec.t < t_end {
        let gamma = params.effective_gamma(rec.gamma);
        let bound = explicit_rho_bound(params, gamma, n - 1)?.min(1.0 / (2.0 * eta * lam));
        let dt = (0.9 * bound).min(t_end - rec.t);
        let advance = || -> Result<MomentRecord> {
            let lr = apply_linear_operator(&rec.rho, params, gamma)?;
            let lm = apply_linear_operator(&rec.m_w, params, gamma)?;
            let le = apply_linear_operator(&rec.e_w, params, gamma)?;
            let (mm, ss) = (rec.total_mean, rec.e_w.iter().sum::<f64>());
            let mut rho = Vec::with_capacity(n);
            let mut m = Vec::with_capacity(n);
            let mut e = Vec::with_capacity(n);
            for c in 0..n {
                let (r, mc, ec) = (rec.rho[c], rec.m_w[c], rec.e_w[c]);
                rho.push(r - dt * lr[c]);
                m.push(mc + dt * (-lm[c] + lam * eta * (r * mm - mc)));
                let inter = -2.0 * eta * (ec - mc * mm) + eta * eta * (ec - 2.0 * mc * mm + r * ss);
                e.push(ec + dt * (-le[c] + lam * inter));
            }
            let t = if t_end - rec.t <= dt { t_end } else { rec.t + dt };
            Ok(MomentRecord::from_parts(t, rho, m, e))
        };
        step += 1;
        rec = advance().map_err(|e| e.at_step(step, rec.t))?;
        out.push(rec.clone());
    }
    Ok(out)
}

/// sum |num - reference| / sum |reference|.
pub fn l1_relative_error(num: &[f64], reference: &[f64]) -> Result<f64> {
    if num.len() != reference.len() {
        return Err(Error::ShapeMismatch {
            expected: reference.len().to_string(),
            found: num.len().to_string(),
        });
    }
    let denom: f64 = reference.iter().map(|v| v.abs()).sum();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::ZeroReference);
    }
    Ok(num.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum::<f64>() / denom)
}

/// Same on the whole field.
pub fn l1_relative_error_field(num: &DensityField, reference: &DensityField) -> Result<f64> {
    if num.values().dim() != reference.values().dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", reference.values().dim()),
            found: format!("{:?}", num.values().dim()),
        });
    }
    l1_relative_error(
        num.values().as_slice().expect("standard layout"),
        reference.values().as_slice().expect("standard layout"),
    )
}

/// Least-squares slope of ln rho(c) against ln c over `range`, skipping empty entries.
pub fn loglog_slope(rho: &[f64], range: std::ops::RangeInclusive<usize>) -> Result<f64> {
    let pts: Vec<(f64, f64)> = range
        .filter(|&c| c > 0 && c < rho.len() && rho[c] > 0.0)
        .map(|c| ((c as f64).ln(), rho[c].ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::invalid("range", "needs two positive entries with c >= 1"));
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    Ok(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterOptions {
    /// Peaks below threshold * max(g) are ignored.
    pub threshold: f64,
    /// 3-point moving average before peak detection.
    pub smooth: bool,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self { threshold: 0.1, smooth: true }
    }
}

/// Number of local maxima of g above `threshold * max(g)`, after 3-point smoothing.
pub fn count_clusters(g: &[f64], threshold: f64) -> usize {
    count_clusters_with(g, ClusterOptions { threshold, ..Default::default() })
}

/// A maximum is a maximal run of equal values strictly above both neighbouring values
/// (a missing neighbour at the ends counts as lower).
pub fn count_clusters_with(g: &[f64], opts: ClusterOptions) -> usize {
    let n = g.len();
    if n == 0 {
        return 0;
    }
    let s: Vec<f64> = if opts.smooth && n >= 3 {
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(n - 1);
                g[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect()
    } else {
        g.to_vec()
    };
    let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return 0;
    }
    let level = opts.threshold * top;
    let mut count = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && s[j + 1] == s[i] {
            j += 1;
        }
        let left_lower = i == 0 || s[i - 1] < s[i];
        let right_lower = j == n - 1 || s[j + 1] < s[i];
        if left_lower && right_lower && s[i] > level {
            count += 1;
        }
        i = j + 1;
    }
    count
}
