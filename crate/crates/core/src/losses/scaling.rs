use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sir::ModelParams;

/// Count scales `C`, `C_H` and the model constants the scaled equations use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstants {
    /// Case-count scale: `I = C · I_s`.
    pub c: f64,
    /// Hospitalization scale: `Δ_H = C_H · Δ_H,s`.
    pub c_h: f64,
    pub model: ModelParams,
}

impl ScalingConstants {
    pub fn new(c: f64, c_h: f64, model: ModelParams) -> Result<Self> {
        if !(c > 0.0 && c.is_finite() && c_h > 0.0 && c_h.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "scales must be positive, got C = {c}, C_H = {c_h}"
            )));
        }
        model.validate()?;
        Ok(ScalingConstants { c, c_h, model })
    }

    /// `(tf − t0)`.
    pub fn span(&self) -> f64 {
        self.model.span()
    }

    /// `C1 = (tf − t0)·C/N`.
    pub fn c1(&self) -> f64 {
        self.span() * self.c / self.model.n
    }

    /// `C2 = (tf − t0)·δ`.
    pub fn c2(&self) -> f64 {
        self.span() * self.model.delta
    }

    /// Population in scaled units, `N / C`.
    pub fn n_scaled(&self) -> f64 {
        self.model.n / self.c
    }

    pub fn to_scaled_time(&self, t: f64) -> f64 {
        (t - self.model.t0) / self.span()
    }

    pub fn to_days(&self, t_s: f64) -> f64 {
        self.model.t0 + t_s * self.span()
    }
}

/// Multipliers for the data, residual and initial-condition terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub omega_d: f64,
    pub omega_s: f64,
    pub omega_i: f64,
    pub omega_r: f64,
    pub omega_s0: f64,
    pub omega_i0: f64,
    pub omega_r0: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            omega_d: 1.0,
            omega_s: 1.0,
            omega_i: 1.0,
            omega_r: 1.0,
            omega_s0: 1.0,
            omega_i0: 1.0,
            omega_r0: 1.0,
        }
    }
}

impl LossWeights {
    pub const NAMES: [&'static str; 7] = [
        "omega_D", "omega_S", "omega_I", "omega_R", "omega_S0", "omega_I0", "omega_R0",
    ];

    pub fn as_array(&self) -> [f64; 7] {
        [
            self.omega_d,
            self.omega_s,
            self.omega_i,
            self.omega_r,
            self.omega_s0,
            self.omega_i0,
            self.omega_r0,
        ]
    }

    pub fn from_array(w: [f64; 7]) -> Self {
        LossWeights {
            omega_d: w[0],
            omega_s: w[1],
            omega_i: w[2],
            omega_r: w[3],
            omega_s0: w[4],
            omega_i0: w[5],
            omega_r0: w[6],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|w| *w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "loss weights must be nonnegative: {self:?}"
            )))
        }
    }
}
