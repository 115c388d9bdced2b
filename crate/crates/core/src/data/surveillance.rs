use std::path::Path;

use chrono::NaiveDate;

use super::{scale_time_and_counts, Cadence, InfectionSeries, ObservationSet, RawSeries};
use crate::error::{Error, Result};
use crate::sir::{column_index, ModelParams};

/// One row of `date,new_cases,new_hospitalizations`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurveillanceRow {
    pub date: NaiveDate,
    pub new_cases: f64,
    pub new_hospitalizations: f64,
}

fn read_rows(rdr: impl std::io::Read) -> Result<Vec<SurveillanceRow>> {
    let mut reader = csv::Reader::from_reader(rdr);
    let csv_err = |e: csv::Error| Error::Parse(e.to_string());
    let headers = reader.headers().map_err(csv_err)?.clone();
    let d = column_index(&headers, "date")?;
    let c = column_index(&headers, "new_cases")?;
    let h = column_index(&headers, "new_hospitalizations")?;
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let field = |k: usize| record.get(k).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(field(d), "%Y-%m-%d")
            .map_err(|e| Error::Parse(format!("row {row}: date `{}`: {e}", field(d))))?;
        let number = |k: usize| -> Result<f64> {
            let v: f64 = field(k)
                .parse()
                .map_err(|e| Error::Parse(format!("row {row}: `{}`: {e}", field(k))))?;
            if v < 0.0 || !v.is_finite() {
                return Err(Error::NegativeCount { row, value: v });
            }
            Ok(v)
        };
        rows.push(SurveillanceRow {
            date,
            new_cases: number(c)?,
            new_hospitalizations: number(h)?,
        });
    }
    for pair in rows.windows(2) {
        if pair[1].date.signed_duration_since(pair[0].date).num_days() != 1 {
            return Err(Error::NonContiguousDates(format!(
                "{} followed by {}",
                pair[0].date, pair[1].date
            )));
        }
    }
    Ok(rows)
}

/// Loads daily new cases and hospitalizations, multiplies cases by the
/// reporting ratio `alpha_r`, and scales by the window maxima.
///
/// Day 0 is the first row of the file. Rows with day index in
/// `[params.t0, params.tf)` are kept; `C` is the largest corrected case
/// count and `C_H` the largest hospitalization count in that window.
pub fn load_surveillance_csv(
    path: impl AsRef<Path>,
    alpha_r: f64,
    params: ModelParams,
) -> Result<(ObservationSet, NaiveDate)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_surveillance_reader(file, alpha_r, params)
}

/// As [`load_surveillance_csv`], reading from any byte source.
pub fn load_surveillance_reader(
    rdr: impl std::io::Read,
    alpha_r: f64,
    params: ModelParams,
) -> Result<(ObservationSet, NaiveDate)> {
    let rows = read_rows(rdr)?;
    let first = rows
        .first()
        .ok_or_else(|| Error::Parse("surveillance table has no data rows".into()))?
        .date;
    let mut raw = RawSeries {
        times_days: Vec::new(),
        infections: Vec::new(),
        hospitalizations: Some(Vec::new()),
        kind: InfectionSeries::Incidence,
    };
    for (k, row) in rows.iter().enumerate() {
        let t = k as f64;
        if t >= params.t0 && t < params.tf {
            raw.times_days.push(t);
            raw.infections.push(alpha_r * row.new_cases);
            raw.hospitalizations
                .as_mut()
                .unwrap()
                .push(row.new_hospitalizations);
        }
    }
    let c = raw.infections.iter().cloned().fold(0.0, f64::max);
    let c_h = raw
        .hospitalizations
        .as_ref()
        .unwrap()
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    let obs = scale_time_and_counts(&raw, params, c, c_h, Cadence::Daily)?;
    Ok((obs, first))
}
