//! Error metrics, multi-run statistics and forecasting by extrapolation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::Role;
use crate::scenario::{generate, Dataset, ScenarioSpec, Source};
use crate::trainer::{extend_training, train_window, TrainedModel};

/// `‖ŷ − y‖₂ / ‖y‖₂`.
pub fn relative_l2(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: reference.len(),
        });
    }
    let norm = reference.iter().map(|y| y * y).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroReferenceNorm);
    }
    let diff = predicted
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}

/// [`relative_l2`] restricted to the last `last_k` grid points.
pub fn windowed_error(predicted: &[f64], reference: &[f64], last_k: usize) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: reference.len(),
        });
    }
    if last_k == 0 || last_k > reference.len() {
        return Err(Error::EmptyWindow);
    }
    let from = reference.len() - last_k;
    relative_l2(&predicted[from..], &reference[from..])
}

/// Named series on a common day grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub times_days: Vec<f64>,
    pub values: BTreeMap<String, Vec<f64>>,
}

impl Series {
    pub fn get(&self, quantity: &str) -> Option<&[f64]> {
        self.values.get(quantity).map(Vec::as_slice)
    }

    /// Keeps grid points with `t_from ≤ t ≤ t_to`.
    pub fn restrict(&self, t_from: f64, t_to: f64) -> Series {
        let keep: Vec<usize> = (0..self.times_days.len())
            .filter(|&k| self.times_days[k] >= t_from && self.times_days[k] <= t_to)
            .collect();
        Series {
            times_days: keep.iter().map(|&k| self.times_days[k]).collect(),
            values: self
                .values
                .iter()
                .map(|(q, v)| (q.clone(), keep.iter().map(|&k| v[k]).collect()))
                .collect(),
        }
    }

    /// Writes `t_days,<quantity>...`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header = vec!["t_days".to_string()];
        header.extend(self.values.keys().cloned());
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for (k, t) in self.times_days.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.values.values().map(|v| v[k].to_string()));
            w.write_record(&row).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a `t_days,<quantity>...` table; every other column is a series.
    pub fn read_csv(rdr: impl std::io::Read) -> Result<Series> {
        let mut reader = csv::Reader::from_reader(rdr);
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        let headers = reader.headers().map_err(csv_err)?.clone();
        let t_col = headers
            .iter()
            .position(|h| h.trim() == "t_days")
            .ok_or_else(|| Error::MissingColumn("t_days".into()))?;
        let names: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
        let mut times = Vec::new();
        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            for (k, raw) in record.iter().enumerate() {
                let v: f64 = raw
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("`{raw}`: {e}")))?;
                if k == t_col {
                    times.push(v);
                } else {
                    values.entry(names[k].clone()).or_default().push(v);
                }
            }
        }
        Ok(Series {
            times_days: times,
            values,
        })
    }
}

/// Every quantity the trained model can produce, unscaled, at `times_days`.
///
/// Keys: `S`, `I`, `R`, `beta`, `Rt`, `sigma`, `dH`, `dI`, depending on the
/// model variant.
pub fn predict(model: &TrainedModel, times_days: &[f64]) -> Series {
    let sc = &model.scales;
    let ts: Vec<f64> = times_days.iter().map(|&t| sc.to_scaled_time(t)).collect();
    let scale = |v: Vec<f64>, k: f64| v.into_iter().map(|x| x * k).collect::<Vec<_>>();
    let net = |role: Role| {
        model
            .network(role)
            .map(|n| n.forward_batch(&ts).values().to_vec())
    };
    let mut values = BTreeMap::new();
    if let Some(s) = net(Role::Susceptible) {
        values.insert("S".to_string(), scale(s, sc.c));
    }
    if let Some(i) = model.infected_scaled(&ts) {
        values.insert("I".to_string(), scale(i, sc.c));
    }
    if let (Some(s), Some(i)) = (values.get("S"), values.get("I")) {
        let r = s.iter().zip(i).map(|(s, i)| sc.model.n - s - i).collect();
        values.insert("R".to_string(), r);
    }
    if let Some(b) = net(Role::Beta) {
        values.insert("beta".to_string(), b);
    }
    if let Some(rt) = model.rt(&ts) {
        values.insert("Rt".to_string(), rt);
    }
    if let Some(s) = net(Role::Sigma) {
        values.insert("sigma".to_string(), s);
    }
    if let Some(h) = net(Role::DeltaH) {
        values.insert("dH".to_string(), scale(h, sc.c_h));
    }
    if let Some(d) = model.new_infections_scaled(&ts) {
        values.insert("dI".to_string(), scale(d, sc.c));
    }
    Series {
        times_days: times_days.to_vec(),
        values,
    }
}

/// In-window fit and daily extrapolation beyond the training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBundle {
    pub t0_days: f64,
    /// Last day of the training window.
    pub t_end_days: f64,
    pub horizon_days: usize,
    /// Daily values on `[t0, t_end]`.
    pub train: Series,
    /// Daily values on `t_end + 1 ..= t_end + horizon`.
    pub forecast: Series,
}

impl ForecastBundle {
    /// Long format `t_days,quantity,value,kind` with kind `train` or `forecast`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["t_days", "quantity", "value", "kind"])
            .map_err(|e| Error::csv(path, e))?;
        for (series, kind) in [(&self.train, "train"), (&self.forecast, "forecast")] {
            for (q, vals) in &series.values {
                for (t, v) in series.times_days.iter().zip(vals) {
                    w.write_record([t.to_string(), q.clone(), v.to_string(), kind.to_string()])
                        .map_err(|e| Error::csv(path, e))?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Evaluates the networks daily over the training window and for
/// `horizon_days` days past its end.
pub fn forecast(model: &TrainedModel, horizon_days: usize) -> ForecastBundle {
    let sc = &model.scales;
    let t0 = sc.model.t0;
    let t_end = sc.to_days(model.t_end_scaled).round();
    let train_days: Vec<f64> = (0..)
        .map(|k| t0 + k as f64)
        .take_while(|t| *t <= t_end)
        .collect();
    let ahead: Vec<f64> = (1..=horizon_days).map(|k| t_end + k as f64).collect();
    ForecastBundle {
        t0_days: t0,
        t_end_days: t_end,
        horizon_days,
        train: predict(model, &train_days),
        forecast: predict(model, &ahead),
    }
}

/// Errors of one trained model against reference series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub scenario: String,
    pub strategy: String,
    pub seed: u64,
    pub n_data: usize,
    pub wall_time_s: f64,
    pub phase_wall_time_s: BTreeMap<String, f64>,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    /// Trained constant β̂, when β is a scalar.
    pub beta_hat: Option<f64>,
    /// Trained constant σ̂, when σ is a scalar.
    pub sigma_hat: Option<f64>,
    /// Relative L2 errors keyed `<quantity>`, `<quantity>_last70d` and
    /// `<quantity>_last100d`.
    pub errors: BTreeMap<String, f64>,
}

impl ErrorReport {
    pub fn error(&self, key: &str) -> Option<f64> {
        self.errors.get(key).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Window lengths, in grid points, of the windowed error variants.
pub const ERROR_WINDOWS: [usize; 2] = [70, 100];

/// Compares the model with every reference quantity it also predicts, on
/// the reference grid.
pub fn evaluate(
    model: &TrainedModel,
    reference: Option<&Series>,
    scenario: &str,
    n_data: usize,
) -> Result<ErrorReport> {
    let mut errors = BTreeMap::new();
    if let Some(reference) = reference {
        let pred = predict(model, &reference.times_days);
        for (q, y) in &reference.values {
            let Some(yhat) = pred.get(q) else { continue };
            match relative_l2(yhat, y) {
                Ok(e) => {
                    errors.insert(q.clone(), e);
                }
                Err(Error::ZeroReferenceNorm) => continue,
                Err(e) => return Err(e),
            }
            for k in ERROR_WINDOWS {
                if k <= y.len() {
                    if let Ok(e) = windowed_error(yhat, y, k) {
                        errors.insert(format!("{q}_last{k}d"), e);
                    }
                }
            }
        }
    }
    let constant = |role: Role| match model.network(role) {
        Some(n @ crate::net::Network::Constant { .. }) => Some(n.forward(0.0)),
        _ => None,
    };
    let phase_wall_time_s = model
        .history
        .iter()
        .map(|h| {
            (
                h.phase.clone(),
                model.phase_wall_time(&h.phase).unwrap_or(0.0),
            )
        })
        .collect();
    Ok(ErrorReport {
        scenario: scenario.to_string(),
        strategy: model.strategy.name().to_string(),
        seed: model.config.seed,
        n_data,
        wall_time_s: model.wall_time_s,
        phase_wall_time_s,
        epochs: model.epochs_run(),
        final_loss: model
            .history
            .last()
            .and_then(|h| h.rows.last())
            .map(|r| r.total),
        beta_hat: constant(Role::Beta),
        sigma_hat: constant(Role::Sigma),
        errors,
    })
}

/// Per-point mean and sample standard deviation over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Needs at least two runs of equal length.
pub fn mean_std(runs: &[&[f64]]) -> Result<Bands> {
    if runs.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 runs for a standard deviation, got {}",
            runs.len()
        )));
    }
    let n = runs[0].len();
    if let Some(r) = runs.iter().find(|r| r.len() != n) {
        return Err(Error::LengthMismatch {
            left: n,
            right: r.len(),
        });
    }
    let m = runs.len() as f64;
    let mean: Vec<f64> = (0..n)
        .map(|k| runs.iter().map(|r| r[k]).sum::<f64>() / m)
        .collect();
    let std = (0..n)
        .map(|k| {
            let ss: f64 = runs.iter().map(|r| (r[k] - mean[k]).powi(2)).sum();
            (ss / (m - 1.0)).sqrt()
        })
        .collect();
    Ok(Bands { mean, std })
}

/// Outcome of repeated runs of one scenario with seeds `base_seed + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRunStats {
    pub seeds: Vec<u64>,
    pub times_days: Vec<f64>,
    pub bands: BTreeMap<String, Bands>,
    pub reports: Vec<ErrorReport>,
}

impl MultiRunStats {
    /// Long format `t_days,quantity,mean,std`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["t_days", "quantity", "mean", "std"])
            .map_err(|e| Error::csv(path, e))?;
        for (q, b) in &self.bands {
            for (k, t) in self.times_days.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    q.clone(),
                    b.mean[k].to_string(),
                    b.std[k].to_string(),
                ])
                .map_err(|e| Error::csv(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Trains `n_runs` independently seeded copies of `spec`. The training seed
/// of run `k` is `base_seed + k`; the observations are generated once.
pub fn multi_run_stats(
    spec: &ScenarioSpec,
    n_runs: usize,
    base_seed: u64,
) -> Result<MultiRunStats> {
    if n_runs < 2 {
        return Err(Error::Config(format!(
            "n_runs must be at least 2, got {n_runs}"
        )));
    }
    let data = generate(spec)?;
    let grid = data.eval_grid();
    let mut seeds = Vec::with_capacity(n_runs);
    let mut preds = Vec::with_capacity(n_runs);
    let mut reports = Vec::with_capacity(n_runs);
    for k in 0..n_runs {
        let seed = base_seed + k as u64;
        let mut config = spec.train.clone();
        config.seed = seed;
        let model = crate::trainer::train(&config, &data.observations)?;
        reports.push(evaluate(
            &model,
            data.reference.as_ref(),
            &spec.name,
            data.observations.len(),
        )?);
        preds.push(predict(&model, &grid));
        seeds.push(seed);
    }
    let mut bands = BTreeMap::new();
    for q in preds[0].values.keys() {
        let runs: Vec<&[f64]> = preds.iter().map(|p| p.values[q].as_slice()).collect();
        bands.insert(q.clone(), mean_std(&runs)?);
    }
    Ok(MultiRunStats {
        seeds,
        times_days: grid,
        bands,
        reports,
    })
}

/// One training window of the sequential protocol.
#[derive(Debug, Clone)]
pub struct WindowResult {
    pub window_days: f64,
    pub model: TrainedModel,
    pub forecast: ForecastBundle,
    /// Relative error of each forecast quantity against the reference over
    /// the horizon, when a reference covers it.
    pub horizon_errors: BTreeMap<String, f64>,
}

/// Trains on `[t0, t0 + windows[0]]`, then extends training window by window,
/// each time continuing from the previous parameters and optimizer state,
/// and forecasts `horizon_days` past every window.
pub fn sequential_window_protocol(
    spec: &ScenarioSpec,
    windows: &[f64],
    horizon_days: usize,
) -> Result<Vec<WindowResult>> {
    let data = generate(spec)?;
    run_windows(spec, &data, windows, horizon_days)
}

/// [`sequential_window_protocol`] on already generated data.
pub fn run_windows(
    spec: &ScenarioSpec,
    data: &Dataset,
    windows: &[f64],
    horizon_days: usize,
) -> Result<Vec<WindowResult>> {
    if windows.is_empty() {
        return Err(Error::Config("no training windows".into()));
    }
    if windows.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("training windows must increase".into()));
    }
    let obs = &data.observations;
    let t0 = spec.params.t0;
    let last_needed = t0 + windows[windows.len() - 1] + horizon_days as f64;
    let last_day = obs.times_days.last().copied().unwrap_or(t0);
    if last_needed > last_day.max(spec.params.tf) {
        return Err(Error::Config(format!(
            "data end at day {last_day}, protocol needs day {last_needed}"
        )));
    }
    let mut out: Vec<WindowResult> = Vec::with_capacity(windows.len());
    let mut model: Option<TrainedModel> = None;
    for &w in windows {
        let t_end = t0 + w;
        // Surveillance counts are scaled by their maxima; a window only
        // knows the maxima of the data it holds.
        let window_obs = match spec.source {
            Source::Surveillance { .. } => obs.truncate(t_end).rescaled_to_maxima()?,
            _ => obs.truncate(t_end),
        };
        let t_end_scaled = obs.scales.to_scaled_time(t_end);
        let trained = match model.take() {
            None => train_window(&spec.train, &window_obs, t_end_scaled)?,
            Some(prev) => extend_training(prev, &window_obs, t_end_scaled)?,
        };
        let bundle = forecast(&trained, horizon_days);
        let mut horizon_errors = BTreeMap::new();
        if let (Some(reference), Some(first), Some(last)) = (
            data.reference.as_ref(),
            bundle.forecast.times_days.first(),
            bundle.forecast.times_days.last(),
        ) {
            let reference = reference.restrict(*first, *last);
            let pred = predict(&trained, &reference.times_days);
            for (q, y) in &reference.values {
                if let Some(yhat) = pred.get(q) {
                    if let Ok(e) = relative_l2(yhat, y) {
                        horizon_errors.insert(q.clone(), e);
                    }
                }
            }
        }
        out.push(WindowResult {
            window_days: w,
            model: trained.clone(),
            forecast: bundle,
            horizon_errors,
        });
        model = Some(trained);
    }
    Ok(out)
}
