//! Scalar model parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Characteristic rates of the removal and adding processes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateMode {
    /// V_r, V_a independent of f and w. The network operator is then linear.
    Constant { v_r: f64, v_a: f64 },
    /// V_r = U_r (gamma + beta) / (gamma_f + beta g), V_a = U_a (gamma + alpha) / (gamma_f + alpha g).
    DensityDependent { u_r: f64, u_a: f64 },
}

impl RateMode {
    pub fn is_constant(&self) -> bool {
        matches!(self, RateMode::Constant { .. })
    }
}

/// How the mean connectivity gamma entering the network prefactors is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum GammaMode {
    /// Recomputed from the current density at every evaluation.
    Evolving,
    /// Held at a fixed value.
    Pinned(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub rates: RateMode,
    pub gamma_mode: GammaMode,
    pub sigma2: f64,
    /// Quasi-invariant scaling parameter, used by the particle solver only.
    pub epsilon: f64,
    /// Compromise rate of the unscaled binary rule.
    pub eta: f64,
    /// Interaction frequency.
    pub lambda_freq: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.0,
            rates: RateMode::Constant { v_r: 1.0, v_a: 1.0 },
            gamma_mode: GammaMode::Evolving,
            sigma2: 0.05,
            epsilon: 0.01,
            eta: 0.25,
            lambda_freq: 1.0,
        }
    }
}

fn finite(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must be finite, got {v}")))
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if finite("alpha", self.alpha)? <= 0.0 {
            return Err(Error::invalid("alpha", "must be positive"));
        }
        if finite("beta", self.beta)? < 0.0 {
            return Err(Error::invalid("beta", "must be nonnegative"));
        }
        let (r, a) = match self.rates {
            RateMode::Constant { v_r, v_a } => (("v_r", v_r), ("v_a", v_a)),
            RateMode::DensityDependent { u_r, u_a } => (("u_r", u_r), ("u_a", u_a)),
        };
        for (name, v) in [r, a] {
            if finite(name, v)? < 0.0 {
                return Err(Error::invalid(name, "rates must be nonnegative"));
            }
        }
        if let GammaMode::Pinned(g) = self.gamma_mode {
            if finite("gamma", g)? < 0.0 {
                return Err(Error::invalid("gamma", "pinned mean connectivity must be nonnegative"));
            }
        }
        if finite("sigma2", self.sigma2)? < 0.0 {
            return Err(Error::invalid("sigma2", "must be nonnegative"));
        }
        if finite("epsilon", self.epsilon)? <= 0.0 {
            return Err(Error::invalid("epsilon", "must be positive"));
        }
        let eta = finite("eta", self.eta)?;
        if !(eta > 0.0 && eta < 0.5) {
            return Err(Error::invalid("eta", format!("must lie in (0, 1/2), got {eta}")));
        }
        if finite("lambda_freq", self.lambda_freq)? <= 0.0 {
            return Err(Error::invalid("lambda_freq", "must be positive"));
        }
        Ok(())
    }

    /// Mean connectivity used by the network prefactors, given the value measured on the state.
    pub fn effective_gamma(&self, measured: f64) -> f64 {
        match self.gamma_mode {
            GammaMode::Evolving => measured,
            GammaMode::Pinned(g) => g,
        }
    }
}
