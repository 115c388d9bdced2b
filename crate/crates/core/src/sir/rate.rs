use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A time-dependent coefficient: β(t), R_t(t) or σ(t).
///
/// Piecewise-linear tables interpolate linearly between knots and hold the
/// end values constant outside the knot range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateFunction {
    Constant {
        value: f64,
    },
    PiecewiseLinear {
        /// `(t_days, value)` pairs with strictly increasing `t_days`.
        knots: Vec<(f64, f64)>,
    },
    /// `b0 + a1·exp(−(t−t1)²/w1²) + a2·exp(−(t−t2)²/w2²)`.
    TwoWave {
        b0: f64,
        a1: f64,
        t1: f64,
        w1: f64,
        a2: f64,
        t2: f64,
        w2: f64,
    },
}

impl RateFunction {
    pub fn constant(value: f64) -> Self {
        RateFunction::Constant { value }
    }

    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidRate("empty knot table".into()));
        }
        for pair in knots.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::InvalidRate(format!(
                    "knot times not strictly increasing at t = {}",
                    pair[1].0
                )));
            }
        }
        if let Some(&(t, v)) = knots.iter().find(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidRate(format!("non-finite knot ({t}, {v})")));
        }
        Ok(RateFunction::PiecewiseLinear { knots })
    }

    /// Default transmission rate producing two infection waves.
    pub fn two_wave_default() -> Self {
        RateFunction::TwoWave {
            b0: 0.1,
            a1: 0.52,
            t1: 15.0,
            w1: 22.0,
            a2: 0.22,
            t2: 72.0,
            w2: 10.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            RateFunction::Constant { value } => *value,
            RateFunction::PiecewiseLinear { knots } => interpolate(knots, t),
            RateFunction::TwoWave {
                b0,
                a1,
                t1,
                w1,
                a2,
                t2,
                w2,
            } => {
                let g1 = (-(t - t1).powi(2) / (w1 * w1)).exp();
                let g2 = (-(t - t2).powi(2) / (w2 * w2)).exp();
                b0 + a1 * g1 + a2 * g2
            }
        }
    }

    /// Checks the function is finite and nonnegative on `[t0, tf]`.
    pub fn validate(&self, t0: f64, tf: f64) -> Result<()> {
        self.check_range(t0, tf, 0.0, f64::INFINITY)
    }

    /// Like [`validate`](Self::validate) but additionally requires values in `[0, 1]`.
    pub fn validate_fraction(&self, t0: f64, tf: f64) -> Result<()> {
        self.check_range(t0, tf, 0.0, 1.0)
    }

    fn check_range(&self, t0: f64, tf: f64, lo: f64, hi: f64) -> Result<()> {
        let mut probes: Vec<f64> = (0..=1000)
            .map(|k| t0 + (tf - t0) * k as f64 / 1000.0)
            .collect();
        if let RateFunction::PiecewiseLinear { knots } = self {
            probes.extend(knots.iter().map(|k| k.0).filter(|t| (t0..=tf).contains(t)));
        }
        for t in probes {
            let v = self.eval(t);
            if !v.is_finite() || v < lo || v > hi {
                return Err(Error::InvalidRate(format!(
                    "value {v} at t = {t} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Reads a two-column `t_days,value` CSV with a header row.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_csv_reader(rdr: impl std::io::Read) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(rdr);
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        let headers = reader.headers().map_err(csv_err)?.clone();
        let t_col = column_index(&headers, "t_days")?;
        let v_col = column_index(&headers, "value")?;
        let mut knots = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let t = parse_field(&record, t_col)?;
            let v = parse_field(&record, v_col)?;
            knots.push((t, v));
        }
        Self::piecewise_linear(knots)
    }

    /// Returns a copy whose values on `[t_start, t_end]` are pinned to `value`.
    ///
    /// Only defined for piecewise-linear tables; the knot grid is kept and a
    /// knot is inserted at `t_end` so the clamp is exact up to that time.
    pub fn clamp_interval(&self, t_start: f64, t_end: f64, value: f64) -> Result<Self> {
        let RateFunction::PiecewiseLinear { knots } = self else {
            return Err(Error::InvalidRate(
                "only piecewise-linear tables can be clamped".into(),
            ));
        };
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(knots.len() + 2);
        out.push((t_start, value));
        out.push((t_end, value));
        out.extend(knots.iter().copied().filter(|&(t, _)| t > t_end));
        let mut before: Vec<(f64, f64)> = knots
            .iter()
            .copied()
            .filter(|&(t, _)| t < t_start)
            .collect();
        before.extend(out);
        Self::piecewise_linear(before)
    }
}

fn interpolate(knots: &[(f64, f64)], t: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if t <= first.0 {
        return first.1;
    }
    if t >= last.0 {
        return last.1;
    }
    // first index with knot time > t; guaranteed in 1..len
    let hi = knots.partition_point(|k| k.0 <= t);
    let (ta, va) = knots[hi - 1];
    let (tb, vb) = knots[hi];
    va + (vb - va) * (t - ta) / (tb - ta)
}

pub(crate) fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

pub(crate) fn parse_field(record: &csv::StringRecord, idx: usize) -> Result<f64> {
    let raw = record
        .get(idx)
        .ok_or_else(|| Error::Parse(format!("short row {record:?}")))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("`{raw}`: {e}")))
}
