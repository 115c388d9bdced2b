use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{hosp_rhs, integrate_rk4, uniform_grid, HospThird, ModelParams};
use super::rate::RateFunction;
use crate::error::{Error, Result};

/// Fixed step used for every reference trajectory, in days.
pub const RK4_STEP: f64 = 0.1;

/// How infections are driven: by a transmission rate or directly by R_t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transmission {
    Beta(RateFunction),
    Rt(RateFunction),
}

impl Transmission {
    pub fn rate(&self) -> &RateFunction {
        match self {
            Transmission::Beta(f) | Transmission::Rt(f) => f,
        }
    }
}

/// Compartment values on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicTrajectory {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// One row per grid point, columns ordered like `labels`.
    pub states: Vec<Vec<f64>>,
    pub population: f64,
}

impl EpidemicTrajectory {
    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        let idx = self.labels.iter().position(|l| l == label)?;
        Some(self.states.iter().map(|row| row[idx]).collect())
    }

    /// Values of `label` at arbitrary times inside the grid, by linear
    /// interpolation (exact at grid nodes).
    pub fn sample(&self, label: &str, times: &[f64]) -> Result<Vec<f64>> {
        let col = self
            .column(label)
            .ok_or_else(|| Error::MissingColumn(label.to_string()))?;
        let t0 = self.times[0];
        let tf = *self.times.last().unwrap();
        let h = if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            1.0
        };
        times
            .iter()
            .map(|&t| {
                if t < t0 - 1e-9 || t > tf + 1e-9 {
                    return Err(Error::OutOfWindow { t, t0, tf });
                }
                let pos = (t - t0) / h;
                let k = pos.round();
                if (pos - k).abs() < 1e-7 {
                    return Ok(col[(k as usize).min(col.len() - 1)]);
                }
                let lo = (pos.floor() as usize).min(col.len() - 2);
                let w = pos - lo as f64;
                Ok(col[lo] * (1.0 - w) + col[lo + 1] * w)
            })
            .collect()
    }

    /// Largest `|S + I + R − N|` over the grid, if the trajectory has S, I, R.
    pub fn conservation_defect(&self) -> Option<f64> {
        let s = self.column("S")?;
        let i = self.column("I")?;
        let r = self.column("R")?;
        Some(
            s.iter()
                .zip(&i)
                .zip(&r)
                .map(|((s, i), r)| (s + i + r - self.population).abs())
                .fold(0.0, f64::max),
        )
    }

    /// Writes `t_days,<label>...`, one row per grid point.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header = vec!["t_days".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for (t, row) in self.times.iter().zip(&self.states) {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Integrates the full SIR model from `S = N − I0, I = I0, R = 0`.
///
/// With a `sigma` function the cumulative hospitalizations `Sigma_H`
/// (`dΣ_H/dt = δσI`) and cumulative infections `Sigma_I` are tracked too.
pub fn simulate_sir(
    params: &ModelParams,
    transmission: &Transmission,
    sigma: Option<&RateFunction>,
    step: f64,
) -> Result<EpidemicTrajectory> {
    params.validate()?;
    transmission.rate().validate(params.t0, params.tf)?;
    if let Some(s) = sigma {
        s.validate_fraction(params.t0, params.tf)?;
    }
    let p = *params;
    let grid = uniform_grid(p.t0, p.tf, step);
    let rhs = |t: f64, y: &[f64; 5]| {
        let [s, i, _, _, _] = *y;
        let infection = match transmission {
            Transmission::Beta(f) => f.eval(t) * i * s / p.n,
            Transmission::Rt(f) => p.delta * f.eval(t) * i,
        };
        let removal = p.delta * i;
        let hosp = sigma.map_or(0.0, |f| p.delta * f.eval(t) * i);
        [-infection, infection - removal, removal, hosp, infection]
    };
    let states = integrate_rk4(rhs, [p.n - p.i0, p.i0, 0.0, 0.0, 0.0], &grid, p.n)?;
    let keep = if sigma.is_some() { 5 } else { 3 };
    let labels = ["S", "I", "R", "Sigma_H", "Sigma_I"][..keep]
        .iter()
        .map(|s| s.to_string())
        .collect();
    Ok(EpidemicTrajectory {
        times: grid,
        labels,
        states: states.into_iter().map(|y| y[..keep].to_vec()).collect(),
        population: p.n,
    })
}

/// Integrates the hospitalization system `(Σ_H, I, S)` or `(Σ_H, I, Σ_I)`.
pub fn simulate_hosp(
    params: &ModelParams,
    rt: &RateFunction,
    sigma: &RateFunction,
    third: HospThird,
    step: f64,
) -> Result<EpidemicTrajectory> {
    params.validate()?;
    rt.validate(params.t0, params.tf)?;
    sigma.validate_fraction(params.t0, params.tf)?;
    let p = *params;
    let grid = uniform_grid(p.t0, p.tf, step);
    let rhs = |t: f64, y: &[f64; 3]| hosp_rhs(*y, rt.eval(t), sigma.eval(t), &p, third);
    let (third_label, third_init) = match third {
        HospThird::Susceptible => ("S", p.n - p.i0),
        HospThird::CumulativeInfections => ("Sigma_I", 0.0),
    };
    let states = integrate_rk4(rhs, [0.0, p.i0, third_init], &grid, p.n)?;
    Ok(EpidemicTrajectory {
        times: grid,
        labels: vec!["Sigma_H".into(), "I".into(), third_label.into()],
        states: states.into_iter().map(|y| y.to_vec()).collect(),
        population: p.n,
    })
}
