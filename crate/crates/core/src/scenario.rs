//! Scenario descriptions, the seven built-in cases, data preparation and
//! end-to-end runs.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{
    daily_grid, gen_gaussian_obs, gen_poisson_obs, load_surveillance_reader, scale_time_and_counts,
    subsample_weekly, Cadence, InfectionSeries, ObservationSet, RawSeries,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, forecast, predict, ErrorReport, Series};
use crate::losses::Role;
use crate::sir::{simulate_sir, ModelParams, RateFunction, Transmission, RK4_STEP};
use crate::trainer::{train, Approach, ModelVariant, NetSpec, Strategy, TrainConfig, TrainedModel};

/// Stand-in daily surveillance table, `date,new_cases,new_hospitalizations`.
pub const BUNDLED_SURVEILLANCE: &str = include_str!("../fixtures/surveillance.csv");
/// Generating R_t, σ, I, Δ_I and Δ_H behind [`BUNDLED_SURVEILLANCE`].
pub const BUNDLED_SURVEILLANCE_REFERENCE: &str =
    include_str!("../fixtures/surveillance_reference.csv");
/// Reference R_t table, `t_days,value`.
pub const BUNDLED_RT: &str = include_str!("../fixtures/rt_reference.csv");

/// Reporting ratio applied to surveillance case counts.
pub const DEFAULT_ALPHA_R: f64 = 6.0;
/// R_t held over the first days of the R_t-driven case.
const EARLY_RT: f64 = 3.012;
const EARLY_DAYS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    None,
    Poisson,
    /// `mean + cv·mean·z`, rounded and clamped at zero.
    Gaussian {
        cv: f64,
    },
}

impl Noise {
    fn apply(self, means: &[f64], seed: u64) -> Result<Vec<f64>> {
        match self {
            Noise::None => Ok(means.to_vec()),
            Noise::Poisson => gen_poisson_obs(means, seed),
            Noise::Gaussian { cv } => Ok(gen_gaussian_obs(means, cv, seed)),
        }
    }
}

/// Where the observations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// RK4 trajectory of the SIR model sampled daily and noised.
    Synthetic {
        transmission: Transmission,
        /// Hospitalized fraction; needed by the hospitalization variants.
        sigma: Option<RateFunction>,
        infection_noise: Noise,
        hospitalization_noise: Noise,
        noise_seed: u64,
        cadence: Cadence,
        c: f64,
        c_h: f64,
    },
    /// Daily surveillance table. Without `path` the bundled stand-in table
    /// and its reference are used.
    Surveillance {
        path: Option<PathBuf>,
        alpha_r: f64,
        /// `t_days,<quantity>...` reference series (e.g. `Rt`).
        reference: Option<PathBuf>,
    },
}

/// Everything needed to reproduce one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    /// Built-in case number, 1 to 7, if the spec derives from one.
    pub case_id: Option<u32>,
    pub params: ModelParams,
    pub source: Source,
    pub train: TrainConfig,
}

fn base_synthetic(transmission: Transmission) -> Source {
    Source::Synthetic {
        transmission,
        sigma: None,
        infection_noise: Noise::Poisson,
        hospitalization_noise: Noise::Poisson,
        noise_seed: 1,
        cadence: Cadence::Daily,
        c: 1e5,
        c_h: 1e3,
    }
}

/// R_t table used by the R_t-driven case, with the early days held fixed.
pub fn case_rt_table() -> Result<RateFunction> {
    RateFunction::from_csv_reader(BUNDLED_RT.as_bytes())?.clamp_interval(0.0, EARLY_DAYS, EARLY_RT)
}

impl ScenarioSpec {
    /// Built-in case `id` in 1..=7, trained with the split approach.
    ///
    /// 1: constant β, Poisson noise. 2: two-wave β. 3: SIR driven by a
    /// reference R_t. 4: reduced model, 40% Gaussian noise, 120 days.
    /// 5: hospitalizations with time-varying σ, 120 days. 6 and 7:
    /// surveillance data with a constant and a time-varying σ.
    pub fn case(id: u32) -> Result<ScenarioSpec> {
        let mut train = TrainConfig::default();
        let italy = ModelParams::italy();
        let (variant, params, source) = match id {
            1 => {
                train
                    .architectures
                    .insert(Role::Beta, NetSpec::Constant { init: 0.5 });
                let s = base_synthetic(Transmission::Beta(RateFunction::constant(0.6)));
                (ModelVariant::Full, italy, s)
            }
            2 => {
                let s = base_synthetic(Transmission::Beta(RateFunction::two_wave_default()));
                (ModelVariant::Full, italy, s)
            }
            3 => {
                let s = base_synthetic(Transmission::Rt(case_rt_table()?));
                (ModelVariant::Full, italy, s)
            }
            4 => {
                let mut s = base_synthetic(Transmission::Beta(RateFunction::two_wave_default()));
                if let Source::Synthetic {
                    infection_noise, ..
                } = &mut s
                {
                    *infection_noise = Noise::Gaussian { cv: 0.4 };
                }
                (ModelVariant::Reduced, italy.with_window(0.0, 120.0), s)
            }
            5 => {
                let mut s = base_synthetic(Transmission::Beta(RateFunction::two_wave_default()));
                if let Source::Synthetic {
                    infection_noise,
                    sigma,
                    ..
                } = &mut s
                {
                    *infection_noise = Noise::Gaussian { cv: 0.4 };
                    *sigma = Some(RateFunction::piecewise_linear(vec![
                        (0.0, 0.15),
                        (30.0, 0.15),
                        (70.0, 0.05),
                        (120.0, 0.05),
                    ])?);
                }
                (ModelVariant::Hosp, italy.with_window(0.0, 120.0), s)
            }
            6 | 7 => {
                if id == 6 {
                    train
                        .architectures
                        .insert(Role::Sigma, NetSpec::Constant { init: 0.1 });
                }
                let s = Source::Surveillance {
                    path: None,
                    alpha_r: DEFAULT_ALPHA_R,
                    reference: None,
                };
                (ModelVariant::HospI, italy, s)
            }
            other => return Err(Error::Config(format!("unknown case {other}"))),
        };
        train.strategy = Strategy::new(variant, Approach::Split);
        Ok(ScenarioSpec {
            name: format!("case{id}"),
            case_id: Some(id),
            params,
            source,
            train,
        })
    }

    pub fn with_approach(mut self, approach: Approach) -> Self {
        self.train.strategy = Strategy::new(self.train.strategy.variant(), approach);
        self
    }

    /// Switches synthetic data to one value per week.
    pub fn weekly(mut self) -> Result<Self> {
        match &mut self.source {
            Source::Synthetic { cadence, .. } => {
                *cadence = Cadence::Weekly;
                self.name.push_str("_weekly");
                Ok(self)
            }
            Source::Surveillance { .. } => Err(Error::Config(
                "weekly subsampling applies to synthetic data only".into(),
            )),
        }
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self.source, Source::Synthetic { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(id) = self.case_id {
            if !(1..=7).contains(&id) {
                return Err(Error::Config(format!("unknown case {id}")));
            }
        }
        self.params.validate()?;
        self.train.validate()?;
        let variant = self.train.strategy.variant();
        match &self.source {
            Source::Synthetic {
                transmission,
                sigma,
                c,
                c_h,
                infection_noise,
                hospitalization_noise,
                ..
            } => {
                if !(*c > 0.0 && *c_h > 0.0) {
                    return Err(Error::Config("scales c and c_h must be positive".into()));
                }
                transmission
                    .rate()
                    .validate(self.params.t0, self.params.tf)?;
                let needs_sigma = matches!(variant, ModelVariant::Hosp | ModelVariant::HospI);
                match sigma {
                    Some(s) => s.validate_fraction(self.params.t0, self.params.tf)?,
                    None if needs_sigma => {
                        return Err(Error::Config(format!(
                            "{} needs a sigma function to generate hospitalizations",
                            self.train.strategy
                        )))
                    }
                    None => {}
                }
                for n in [infection_noise, hospitalization_noise] {
                    if let Noise::Gaussian { cv } = n {
                        if !(*cv >= 0.0 && cv.is_finite()) {
                            return Err(Error::Config(format!("invalid noise cv {cv}")));
                        }
                    }
                }
            }
            Source::Surveillance { alpha_r, .. } => {
                if variant != ModelVariant::HospI {
                    return Err(Error::Config(format!(
                        "surveillance data carry new cases; {} cannot use them",
                        self.train.strategy
                    )));
                }
                if !(*alpha_r > 0.0 && alpha_r.is_finite()) {
                    return Err(Error::Config(format!("invalid reporting ratio {alpha_r}")));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScenarioSpec =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ScenarioSpec = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes") + "\n"
    }
}

/// Observations and, when known, the series they were generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub observations: ObservationSet,
    /// Daily reference series over the window.
    pub reference: Option<Series>,
    /// Calendar date of day 0 for surveillance data.
    pub start_date: Option<NaiveDate>,
}

impl Dataset {
    /// Days on which errors are measured: the reference grid, else the data.
    pub fn eval_grid(&self) -> Vec<f64> {
        match &self.reference {
            Some(r) => r.times_days.clone(),
            None => self.observations.times_days.clone(),
        }
    }

    /// Writes `observations.csv`, its JSON provenance sidecar and, when
    /// present, `reference.csv`.
    pub fn export(&self, dir: impl AsRef<Path>, spec: &ScenarioSpec) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.observations.write_csv(dir.join("observations.csv"))?;
        let sidecar = Provenance {
            scenario: spec.clone(),
            noise_seed: match &spec.source {
                Source::Synthetic { noise_seed, .. } => Some(*noise_seed),
                Source::Surveillance { .. } => None,
            },
            n_data: self.observations.len(),
            c: self.observations.scales.c,
            c_h: self.observations.scales.c_h,
            start_date: self.start_date.map(|d| d.to_string()),
        };
        let path = dir.join("observations.json");
        let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        if let Some(r) = &self.reference {
            r.write_csv(dir.join("reference.csv"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct Provenance {
    scenario: ScenarioSpec,
    noise_seed: Option<u64>,
    n_data: usize,
    c: f64,
    c_h: f64,
    start_date: Option<String>,
}

/// Generates synthetic observations or loads surveillance data for `spec`.
pub fn generate(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    match &spec.source {
        Source::Synthetic { .. } => generate_synthetic(spec),
        Source::Surveillance {
            path,
            alpha_r,
            reference,
        } => {
            let (obs, start) = match path {
                Some(p) => {
                    let f = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
                    load_surveillance_reader(f, *alpha_r, spec.params)?
                }
                None => load_surveillance_reader(
                    BUNDLED_SURVEILLANCE.as_bytes(),
                    *alpha_r,
                    spec.params,
                )?,
            };
            let reference = match (path, reference) {
                (_, Some(r)) => {
                    let f = std::fs::File::open(r).map_err(|e| Error::io(r, e))?;
                    Some(Series::read_csv(f)?)
                }
                (None, None) => Some(Series::read_csv(BUNDLED_SURVEILLANCE_REFERENCE.as_bytes())?),
                (Some(_), None) => None,
            };
            let reference = reference.map(|r| r.restrict(spec.params.t0, spec.params.tf - 1.0));
            Ok(Dataset {
                observations: obs,
                reference,
                start_date: Some(start),
            })
        }
    }
}

fn generate_synthetic(spec: &ScenarioSpec) -> Result<Dataset> {
    let Source::Synthetic {
        transmission,
        sigma,
        infection_noise,
        hospitalization_noise,
        noise_seed,
        cadence,
        c,
        c_h,
    } = &spec.source
    else {
        unreachable!("caller checked the source")
    };
    let p = spec.params;
    let traj = simulate_sir(&p, transmission, sigma.as_ref(), RK4_STEP)?;
    let days = daily_grid(&p);
    let s = traj.sample("S", &days)?;
    let i = traj.sample("I", &days)?;
    let r = traj.sample("R", &days)?;
    let (beta, rt): (Vec<f64>, Vec<f64>) = days
        .iter()
        .zip(&s)
        .map(|(&t, &s)| match transmission {
            Transmission::Beta(f) => (f.eval(t), f.eval(t) * s / (p.delta * p.n)),
            Transmission::Rt(f) => (f.eval(t) * p.delta * p.n / s, f.eval(t)),
        })
        .unzip();
    let d_i: Vec<f64> = rt.iter().zip(&i).map(|(r, i)| p.delta * r * i).collect();
    let mut reference = Series {
        times_days: days.clone(),
        values: [
            ("S", s),
            ("I", i.clone()),
            ("R", r),
            ("beta", beta),
            ("Rt", rt),
            ("dI", d_i.clone()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect(),
    };
    let d_h = sigma.as_ref().map(|f| {
        days.iter()
            .zip(&i)
            .map(|(&t, i)| p.delta * f.eval(t) * i)
            .collect::<Vec<f64>>()
    });
    if let (Some(f), Some(h)) = (sigma, &d_h) {
        reference
            .values
            .insert("sigma".into(), days.iter().map(|&t| f.eval(t)).collect());
        reference.values.insert("dH".into(), h.clone());
    }

    let variant = spec.train.strategy.variant();
    let (kind, infection_means) = match variant {
        ModelVariant::HospI => (InfectionSeries::Incidence, &d_i),
        _ => (InfectionSeries::Prevalence, &i),
    };
    let infections = infection_noise.apply(infection_means, *noise_seed)?;
    let hospitalizations = match (&d_h, variant) {
        (Some(h), ModelVariant::Hosp | ModelVariant::HospI) => {
            Some(hospitalization_noise.apply(h, noise_seed.wrapping_add(1))?)
        }
        _ => None,
    };
    let raw = RawSeries {
        times_days: days,
        infections,
        hospitalizations,
        kind,
    };
    let mut obs = scale_time_and_counts(&raw, p, *c, *c_h, Cadence::Daily)?;
    if *cadence == Cadence::Weekly {
        obs = subsample_weekly(&obs)?;
    }
    Ok(Dataset {
        observations: obs,
        reference: Some(reference),
        start_date: None,
    })
}

/// Result of [`run_scenario`].
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub spec: ScenarioSpec,
    pub data: Dataset,
    pub model: TrainedModel,
    pub report: ErrorReport,
}

/// Forecast horizon written with every run, in days.
pub const RUN_FORECAST_DAYS: usize = 15;

impl ScenarioRun {
    /// Writes the spec, the data, the trained model, the report, predicted
    /// trajectories next to the reference and a forecast past the window.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_text(&dir.join("spec.json"), &self.spec.to_json())?;
        self.data.export(dir.join("data"), &self.spec)?;
        self.model.save(dir.join("model"))?;
        write_text(&dir.join("report.json"), &self.report.to_json())?;
        trajectory_table(&self.model, &self.data).write_csv(dir.join("trajectories.csv"))?;
        forecast(&self.model, RUN_FORECAST_DAYS).write_csv(dir.join("forecast.csv"))
    }
}

/// Predicted quantities next to their references on the evaluation grid,
/// in columns `<quantity>` and `<quantity>_ref`.
pub fn trajectory_table(model: &TrainedModel, data: &Dataset) -> Series {
    let grid = data.eval_grid();
    let mut out = predict(model, &grid);
    if let Some(r) = &data.reference {
        for (q, v) in &r.values {
            out.values.insert(format!("{q}_ref"), v.clone());
        }
    }
    out
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Generates or loads the data, trains with `spec.train` and evaluates.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioRun> {
    let data = generate(spec)?;
    let model = train(&spec.train, &data.observations)?;
    let report = evaluate(
        &model,
        data.reference.as_ref(),
        &spec.name,
        data.observations.len(),
    )?;
    Ok(ScenarioRun {
        spec: spec.clone(),
        data,
        model,
        report,
    })
}
