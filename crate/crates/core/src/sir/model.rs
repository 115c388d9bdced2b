use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Population-level constants shared by every model variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Population size N.
    pub n: f64,
    /// Removal rate δ in 1/day.
    pub delta: f64,
    /// Initially infected individuals.
    pub i0: f64,
    pub t0: f64,
    pub tf: f64,
}

impl ModelParams {
    /// N = 56e6, δ = 0.2 (D = 5 days), I0 = 1 on a 90-day window.
    pub fn italy() -> Self {
        ModelParams {
            n: 56e6,
            delta: 0.2,
            i0: 1.0,
            t0: 0.0,
            tf: 90.0,
        }
    }

    pub fn with_window(mut self, t0: f64, tf: f64) -> Self {
        self.t0 = t0;
        self.tf = tf;
        self
    }

    pub fn span(&self) -> f64 {
        self.tf - self.t0
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n > 0.0
            && self.delta > 0.0
            && self.i0 > 0.0
            && self.i0 < self.n
            && self.tf > self.t0
            && [self.n, self.delta, self.i0, self.t0, self.tf]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("{self:?}")))
        }
    }
}

/// Right-hand side of the SIR system for state `(S, I, R)`.
pub fn sir_rhs(state: [f64; 3], beta: f64, params: &ModelParams) -> [f64; 3] {
    let [s, i, _] = state;
    let infection = beta * i * s / params.n;
    let removal = params.delta * i;
    [-infection, infection - removal, removal]
}

/// `dI/dt = δ (R_t − 1) I`.
pub fn reduced_rhs(i: f64, rt: f64, params: &ModelParams) -> f64 {
    params.delta * (rt - 1.0) * i
}

/// Which quantity occupies the third slot of the hospitalization system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HospThird {
    /// Susceptibles: `dS/dt = −R_t δ I`.
    Susceptible,
    /// Cumulative infections: `dΣ_I/dt = δ R_t I`.
    CumulativeInfections,
}

/// Right-hand side for `(Σ_H, I, S)` or `(Σ_H, I, Σ_I)`.
pub fn hosp_rhs(
    state: [f64; 3],
    rt: f64,
    sigma: f64,
    params: &ModelParams,
    third: HospThird,
) -> [f64; 3] {
    let i = state[1];
    let d = params.delta;
    let last = match third {
        HospThird::Susceptible => -rt * d * i,
        HospThird::CumulativeInfections => d * rt * i,
    };
    [d * sigma * i, d * (rt - 1.0) * i, last]
}

/// `R_t = β/δ · S/N`.
pub fn effective_r(beta: f64, delta: f64, s: f64, n: f64) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::DivisionByZero("removal rate δ"));
    }
    if n == 0.0 {
        return Err(Error::DivisionByZero("population N"));
    }
    Ok(beta / delta * s / n)
}

/// Classic fourth-order Runge–Kutta on a uniform grid.
///
/// `rhs(t, y)` returns dy/dt. `bound` is the magnitude (typically N) above
/// which `10 · bound` signals a diverging integration.
pub fn integrate_rk4<const D: usize, F>(
    rhs: F,
    y0: [f64; D],
    grid: &[f64],
    bound: f64,
) -> Result<Vec<[f64; D]>>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    check_uniform(grid)?;
    let mut out = Vec::with_capacity(grid.len());
    let mut y = y0;
    check_state(&y, grid[0], bound)?;
    out.push(y);
    for pair in grid.windows(2) {
        let (t, h) = (pair[0], pair[1] - pair[0]);
        let k1 = rhs(t, &y);
        let k2 = rhs(t + 0.5 * h, &axpy(&y, 0.5 * h, &k1));
        let k3 = rhs(t + 0.5 * h, &axpy(&y, 0.5 * h, &k2));
        let k4 = rhs(t + h, &axpy(&y, h, &k3));
        for d in 0..D {
            y[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        check_state(&y, pair[1], bound)?;
        out.push(y);
    }
    Ok(out)
}

fn axpy<const D: usize>(y: &[f64; D], a: f64, k: &[f64; D]) -> [f64; D] {
    std::array::from_fn(|d| y[d] + a * k[d])
}

fn check_state<const D: usize>(y: &[f64; D], t: f64, bound: f64) -> Result<()> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { t });
    }
    if y.iter().any(|v| v.abs() > 10.0 * bound) {
        return Err(Error::StepTooLarge { t });
    }
    Ok(())
}

fn check_uniform(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    if grid.len() < 2 {
        return Ok(());
    }
    let h = grid[1] - grid[0];
    if h <= 0.0 {
        return Err(Error::InvalidGrid("grid not strictly increasing".into()));
    }
    for pair in grid.windows(2) {
        let step = pair[1] - pair[0];
        if step <= 0.0 {
            return Err(Error::InvalidGrid("grid not strictly increasing".into()));
        }
        if (step - h).abs() > 1e-9 * h.max(pair[1].abs()) {
            return Err(Error::InvalidGrid(format!(
                "non-uniform step {step} (expected {h})"
            )));
        }
    }
    Ok(())
}

/// `n_steps + 1` points from `t0` to `tf` inclusive.
pub fn uniform_grid(t0: f64, tf: f64, step: f64) -> Vec<f64> {
    let n_steps = ((tf - t0) / step).round() as usize;
    let h = (tf - t0) / n_steps as f64;
    (0..=n_steps).map(|k| t0 + h * k as f64).collect()
}
