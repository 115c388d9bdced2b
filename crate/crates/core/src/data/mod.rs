//! Observations: synthetic generation, scaling, subsampling and ingestion of
//! surveillance tables.

mod noise;
mod surveillance;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::ScalingConstants;
use crate::sir::ModelParams;

pub use noise::{gen_gaussian_obs, gen_poisson_obs, poisson};
pub use surveillance::{load_surveillance_csv, load_surveillance_reader, SurveillanceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cadence {
    Daily,
    Weekly,
}

/// What the infection column counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfectionSeries {
    /// Currently infected I(t).
    Prevalence,
    /// Daily new infections Δ_I(t).
    Incidence,
}

/// Unscaled observations on a day grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub times_days: Vec<f64>,
    pub infections: Vec<f64>,
    pub hospitalizations: Option<Vec<f64>>,
    pub kind: InfectionSeries,
}

/// Observations in the dimensionless training variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub times_days: Vec<f64>,
    pub times_scaled: Vec<f64>,
    /// Ĩ_s or Δ̃_I,s, depending on `kind`.
    pub infections_scaled: Vec<f64>,
    /// Δ̃_H,s.
    pub hospitalizations_scaled: Option<Vec<f64>>,
    pub kind: InfectionSeries,
    pub scales: ScalingConstants,
    pub cadence: Cadence,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.times_scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_scaled.is_empty()
    }

    /// Infection counts back in individuals.
    pub fn infections_raw(&self) -> Vec<f64> {
        self.infections_scaled
            .iter()
            .map(|v| v * self.scales.c)
            .collect()
    }

    pub fn hospitalizations_raw(&self) -> Option<Vec<f64>> {
        self.hospitalizations_scaled
            .as_ref()
            .map(|h| h.iter().map(|v| v * self.scales.c_h).collect())
    }

    /// Keeps the points with `times_days ≤ t_end`; time scaling is unchanged.
    pub fn truncate(&self, t_end: f64) -> ObservationSet {
        let keep = self.times_days.partition_point(|t| *t <= t_end);
        let cut = |v: &[f64]| v[..keep].to_vec();
        ObservationSet {
            times_days: cut(&self.times_days),
            times_scaled: cut(&self.times_scaled),
            infections_scaled: cut(&self.infections_scaled),
            hospitalizations_scaled: self.hospitalizations_scaled.as_deref().map(cut),
            kind: self.kind,
            scales: self.scales,
            cadence: self.cadence,
        }
    }

    /// Same observations with `C` and `C_H` reset to the maxima of the
    /// infection and hospitalization series it holds. Time scaling is kept.
    pub fn rescaled_to_maxima(&self) -> Result<ObservationSet> {
        let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
        let k_i = max(&self.infections_scaled);
        let k_h = self.hospitalizations_scaled.as_deref().map_or(1.0, max);
        if !(k_i > 0.0 && k_h > 0.0) {
            return Err(Error::InvalidParams(
                "window holds no positive counts".into(),
            ));
        }
        let scales = ScalingConstants::new(
            self.scales.c * k_i,
            self.scales.c_h * k_h,
            self.scales.model,
        )?;
        Ok(ObservationSet {
            infections_scaled: self.infections_scaled.iter().map(|v| v / k_i).collect(),
            hospitalizations_scaled: self
                .hospitalizations_scaled
                .as_ref()
                .map(|h| h.iter().map(|v| v / k_h).collect()),
            scales,
            ..self.clone()
        })
    }

    /// Writes `t_days,observed_I|observed_dI[,observed_dH]` in unscaled counts.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let inf_col = match self.kind {
            InfectionSeries::Prevalence => "observed_I",
            InfectionSeries::Incidence => "observed_dI",
        };
        let mut header = vec!["t_days", inf_col];
        let hosp = self.hospitalizations_raw();
        if hosp.is_some() {
            header.push("observed_dH");
        }
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        let inf = self.infections_raw();
        for k in 0..self.len() {
            let mut row = vec![self.times_days[k].to_string(), inf[k].to_string()];
            if let Some(h) = &hosp {
                row.push(h[k].to_string());
            }
            w.write_record(&row).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Maps days to `t_s = (t − t0)/(tf − t0)` and divides infections by `C`
/// and hospitalizations by `C_H`.
pub fn scale_time_and_counts(
    raw: &RawSeries,
    params: ModelParams,
    c: f64,
    c_h: f64,
    cadence: Cadence,
) -> Result<ObservationSet> {
    let scales = ScalingConstants::new(c, c_h, params)?;
    let n = raw.times_days.len();
    if raw.infections.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: raw.infections.len(),
        });
    }
    if let Some(h) = &raw.hospitalizations {
        if h.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: h.len(),
            });
        }
    }
    for &t in &raw.times_days {
        if !(t >= params.t0 && t <= params.tf) {
            return Err(Error::OutOfWindow {
                t,
                t0: params.t0,
                tf: params.tf,
            });
        }
    }
    if raw.times_days.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("observation times must increase".into()));
    }
    let check = |v: &[f64]| -> Result<()> {
        match v.iter().position(|x| !(*x >= 0.0 && x.is_finite())) {
            Some(row) => Err(Error::NegativeCount { row, value: v[row] }),
            None => Ok(()),
        }
    };
    check(&raw.infections)?;
    if let Some(h) = &raw.hospitalizations {
        check(h)?;
    }
    Ok(ObservationSet {
        times_days: raw.times_days.clone(),
        times_scaled: raw
            .times_days
            .iter()
            .map(|t| scales.to_scaled_time(*t))
            .collect(),
        infections_scaled: raw.infections.iter().map(|v| v / c).collect(),
        hospitalizations_scaled: raw
            .hospitalizations
            .as_ref()
            .map(|h| h.iter().map(|v| v / c_h).collect()),
        kind: raw.kind,
        scales,
        cadence,
    })
}

/// Every 7th point starting with the first.
pub fn subsample_weekly(daily: &ObservationSet) -> Result<ObservationSet> {
    if daily.cadence != Cadence::Daily {
        return Err(Error::WrongCadence("expected daily observations".into()));
    }
    let pick = |v: &[f64]| v.iter().step_by(7).copied().collect::<Vec<f64>>();
    Ok(ObservationSet {
        times_days: pick(&daily.times_days),
        times_scaled: pick(&daily.times_scaled),
        infections_scaled: pick(&daily.infections_scaled),
        hospitalizations_scaled: daily.hospitalizations_scaled.as_deref().map(pick),
        kind: daily.kind,
        scales: daily.scales,
        cadence: Cadence::Weekly,
    })
}

/// Integer days `t0, t0 + 1, …, tf − 1`.
pub fn daily_grid(params: &ModelParams) -> Vec<f64> {
    let n = params.span().round() as usize;
    (0..n).map(|k| params.t0 + k as f64).collect()
}
