use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use epipinn::evaluation::{self, evaluate, multi_run_stats, ErrorReport, Series};
use epipinn::losses::Role;
use epipinn::scenario::{generate, run_scenario, Dataset, ScenarioRun, ScenarioSpec};
use epipinn::trainer::{Approach, NetSpec, TrainedModel};

#[derive(Parser)]
#[command(
    name = "epipinn",
    version,
    about = "Physics-informed neural networks for SIR-family epidemic models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one of the built-in cases 1 to 7.
    RunCase {
        case: u32,
        #[command(flatten)]
        run: RunArgs,
        /// One value per week instead of daily data (synthetic cases).
        #[arg(long)]
        weekly: bool,
    },
    /// Train a scenario described by a JSON file.
    RunSpec {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train a case once per architecture and tabulate error, time and size.
    Sweep {
        case: u32,
        /// Hidden-layer counts.
        #[arg(long, value_delimiter = ',', default_values_t = [4, 10])]
        depths: Vec<usize>,
        /// Neurons per hidden layer.
        #[arg(long, value_delimiter = ',', default_values_t = [5, 25, 50, 100])]
        widths: Vec<usize>,
        #[arg(long, value_enum, default_value_t = StrategyArg::Split)]
        strategy: StrategyArg,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train on growing windows and forecast past each one.
    Forecast {
        /// Built-in case; ignored with --spec.
        #[arg(default_value_t = 7)]
        case: u32,
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Window lengths in days.
        #[arg(long, value_delimiter = ',', default_values_t = [15.0, 30.0, 45.0, 60.0])]
        windows: Vec<f64>,
        #[arg(long, default_value_t = 15)]
        horizon: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write the synthetic observations of a case or spec.
    GenData {
        /// Built-in case; ignored with --spec.
        case: Option<u32>,
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Seed of the observation noise.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        weekly: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Recompute `report.json` of a finished run from its artifacts.
    Report {
        run_dir: PathBuf,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Multiplies every epoch count, for quick runs.
    #[arg(long, default_value_t = 1.0)]
    epochs_scale: f64,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, value_enum, default_value_t = StrategyArg::Both)]
    strategy: StrategyArg,
    /// Independent training runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Joint,
    Split,
    Both,
}

impl StrategyArg {
    fn approaches(self) -> Vec<Approach> {
        match self {
            StrategyArg::Joint => vec![Approach::Joint],
            StrategyArg::Split => vec![Approach::Split],
            StrategyArg::Both => vec![Approach::Split, Approach::Joint],
        }
    }
}

/// Exit status for a failed command.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<epipinn::Error>() {
        Some(e) if e.is_divergence() => 3,
        Some(
            epipinn::Error::Config(_)
            | epipinn::Error::InvalidParams(_)
            | epipinn::Error::InvalidRate(_)
            | epipinn::Error::InvalidArchitecture(_)
            | epipinn::Error::Parse(_)
            | epipinn::Error::Json { .. }
            | epipinn::Error::MissingColumn(_)
            | epipinn::Error::NonContiguousDates(_)
            | epipinn::Error::NegativeCount { .. }
            | epipinn::Error::OutOfWindow { .. }
            | epipinn::Error::WrongCadence(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain, skipping causes already quoted by the message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::RunCase { case, run, weekly } => {
            let mut spec = ScenarioSpec::case(case)?;
            if weekly {
                spec = spec.weekly()?;
            }
            run_spec(spec, &run)
        }
        Command::RunSpec { spec, run } => run_spec(ScenarioSpec::load(&spec)?, &run),
        Command::Sweep {
            case,
            depths,
            widths,
            strategy,
            common,
        } => sweep(case, &depths, &widths, strategy, &common),
        Command::Forecast {
            case,
            spec,
            windows,
            horizon,
            common,
        } => {
            let spec = match spec {
                Some(p) => ScenarioSpec::load(p)?,
                None => ScenarioSpec::case(case)?,
            };
            forecast_protocol(spec, &windows, horizon, &common)
        }
        Command::GenData {
            case,
            spec,
            seed,
            weekly,
            out,
        } => {
            let mut spec = match (spec, case) {
                (Some(p), _) => ScenarioSpec::load(p)?,
                (None, Some(id)) => ScenarioSpec::case(id)?,
                (None, None) => {
                    return Err(epipinn::Error::Config("give a case id or --spec".into()).into())
                }
            };
            if weekly {
                spec = spec.weekly()?;
            }
            gen_data(spec, seed, &out)
        }
        Command::Report { run_dir, out } => {
            let text = regenerate_report(&run_dir)?.to_json();
            match out {
                Some(p) => {
                    std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
                }
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn apply_common(spec: &mut ScenarioSpec, common: &CommonArgs) -> Result<()> {
    if let Some(seed) = common.seed {
        spec.train.seed = seed;
    }
    let f = common.epochs_scale;
    if !(f > 0.0 && f.is_finite()) {
        return Err(
            epipinn::Error::Config(format!("--epochs-scale must be positive, got {f}")).into(),
        );
    }
    if f != 1.0 {
        let t = &mut spec.train;
        for e in [
            &mut t.epochs_joint,
            &mut t.epochs_data,
            &mut t.epochs_data_small,
            &mut t.epochs_physics,
        ] {
            *e = ((*e as f64 * f).round() as usize).max(1);
        }
        if let Some(e) = &mut t.epochs_extension {
            *e = ((*e as f64 * f).round() as usize).max(1);
        }
    }
    spec.validate()?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    scenario: String,
    strategy: String,
    spec_sha256: String,
    seed: u64,
    library_version: &'static str,
    wall_time_s: f64,
    phase_wall_time_s: BTreeMap<String, f64>,
    artifacts: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn list_files(dir: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(rel) = path.strip_prefix(dir) {
                out.push(rel.to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn write_manifest(
    dir: &Path,
    command: &str,
    spec: &ScenarioSpec,
    model: &TrainedModel,
) -> Result<()> {
    let mut artifacts = list_files(dir)?;
    artifacts.retain(|a| a != "manifest.json");
    let report_phases = model
        .history
        .iter()
        .map(|h| {
            (
                h.phase.clone(),
                model.phase_wall_time(&h.phase).unwrap_or(0.0),
            )
        })
        .collect();
    let manifest = Manifest {
        command: command.to_string(),
        scenario: spec.name.clone(),
        strategy: spec.train.strategy.name().to_string(),
        spec_sha256: sha256_hex(spec.to_json().as_bytes()),
        seed: spec.train.seed,
        library_version: env!("CARGO_PKG_VERSION"),
        wall_time_s: model.wall_time_s,
        phase_wall_time_s: report_phases,
        artifacts,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

/// One tidy CSV per modelled quantity: `t_days,predicted,reference,observed`.
fn write_panels(dir: &Path, run: &ScenarioRun) -> Result<()> {
    let panels = dir.join("panels");
    std::fs::create_dir_all(&panels)?;
    let grid = run.data.eval_grid();
    let pred = evaluation::predict(&run.model, &grid);
    let obs = &run.data.observations;
    let observed_key = match obs.kind {
        epipinn::data::InfectionSeries::Prevalence => "I",
        epipinn::data::InfectionSeries::Incidence => "dI",
    };
    let mut observed: BTreeMap<&str, BTreeMap<u64, f64>> = BTreeMap::new();
    let day_key = |t: f64| t.to_bits();
    observed.insert(
        observed_key,
        obs.times_days
            .iter()
            .map(|t| day_key(*t))
            .zip(obs.infections_raw())
            .collect(),
    );
    if let Some(h) = obs.hospitalizations_raw() {
        observed.insert(
            "dH",
            obs.times_days.iter().map(|t| day_key(*t)).zip(h).collect(),
        );
    }
    for (q, values) in &pred.values {
        let path = panels.join(format!("{q}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["t_days", "predicted", "reference", "observed"])?;
        let reference = run.data.reference.as_ref().and_then(|r| r.get(q));
        for (k, t) in grid.iter().enumerate() {
            let r = reference.map(|r| r[k].to_string()).unwrap_or_default();
            let o = observed
                .get(q.as_str())
                .and_then(|m| m.get(&day_key(*t)))
                .map(|v| v.to_string())
                .unwrap_or_default();
            w.write_record([t.to_string(), values[k].to_string(), r, o])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn run_spec(base: ScenarioSpec, args: &RunArgs) -> Result<()> {
    let mut base = base;
    apply_common(&mut base, &args.common)?;
    let root = args.common.out.join(&base.name);
    let mut summary: Vec<ErrorReport> = Vec::new();
    for approach in args.strategy.approaches() {
        let spec = base.clone().with_approach(approach);
        let dir = root.join(spec.train.strategy.name());
        if args.runs > 1 {
            let stats = multi_run_stats(&spec, args.runs, spec.train.seed)?;
            std::fs::create_dir_all(&dir)?;
            stats.write_csv(dir.join("bands.csv"))?;
            write_json(&dir.join("runs.json"), &stats.reports)?;
            for r in &stats.reports {
                eprintln!("{}", one_line(r));
            }
            summary.extend(stats.reports);
            continue;
        }
        eprintln!("training {} with {}", spec.name, spec.train.strategy);
        let run = run_scenario(&spec)?;
        run.export(&dir)?;
        write_panels(&dir, &run)?;
        write_manifest(&dir, &format!("run {}", spec.name), &spec, &run.model)?;
        eprintln!("{}", one_line(&run.report));
        summary.push(run.report);
    }
    std::fs::create_dir_all(&root)?;
    write_summary(&root.join("summary.csv"), &summary)?;
    println!("{}", root.display());
    Ok(())
}

fn one_line(r: &ErrorReport) -> String {
    let mut s = format!(
        "{} {} seed {}: {:.1} s",
        r.scenario, r.strategy, r.seed, r.wall_time_s
    );
    if let Some(b) = r.beta_hat {
        s.push_str(&format!(", beta_hat {b:.5}"));
    }
    for (k, v) in &r.errors {
        if !k.contains("_last")
            || k.starts_with("Rt")
            || k.starts_with("beta")
            || k.starts_with("sigma")
        {
            s.push_str(&format!(", {k} {v:.3e}"));
        }
    }
    s
}

/// `scenario,strategy,seed,wall_time_s,beta_hat,sigma_hat,<error>...`.
fn write_summary(path: &Path, reports: &[ErrorReport]) -> Result<()> {
    let keys: std::collections::BTreeSet<&String> =
        reports.iter().flat_map(|r| r.errors.keys()).collect();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "scenario",
        "strategy",
        "seed",
        "wall_time_s",
        "beta_hat",
        "sigma_hat",
    ];
    header.extend(keys.iter().map(|k| k.as_str()));
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        let mut row = vec![
            r.scenario.clone(),
            r.strategy.clone(),
            r.seed.to_string(),
            r.wall_time_s.to_string(),
            opt(r.beta_hat),
            opt(r.sigma_hat),
        ];
        row.extend(keys.iter().map(|k| opt(r.error(k))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn sweep(
    case: u32,
    depths: &[usize],
    widths: &[usize],
    strategy: StrategyArg,
    common: &CommonArgs,
) -> Result<()> {
    if depths.is_empty() || widths.is_empty() {
        return Err(epipinn::Error::Config("empty architecture grid".into()).into());
    }
    let approach = match strategy {
        StrategyArg::Joint => Approach::Joint,
        StrategyArg::Split => Approach::Split,
        StrategyArg::Both => {
            return Err(
                epipinn::Error::Config("sweep takes --strategy joint or split".into()).into(),
            )
        }
    };
    let mut base = ScenarioSpec::case(case)?.with_approach(approach);
    apply_common(&mut base, common)?;
    let data = generate(&base)?;
    let dir = common.out.join(format!("{}_sweep", base.name));
    std::fs::create_dir_all(&dir)?;
    let mut rows = Vec::new();
    for &depth in depths {
        for &width in widths {
            let mut spec = base.clone();
            let dense = NetSpec::Dense { depth, width };
            for role in spec.train.strategy.roles() {
                let keep = *role == Role::Sigma
                    || matches!(spec.train.architecture(*role), NetSpec::Constant { .. });
                if !keep {
                    spec.train.architectures.insert(*role, dense);
                }
            }
            eprintln!("{} {depth}x{width}", spec.name);
            let model = epipinn::trainer::train(&spec.train, &data.observations)?;
            let report = evaluate(
                &model,
                data.reference.as_ref(),
                &spec.name,
                data.observations.len(),
            )?;
            let params: usize = model.networks.values().map(|n| n.num_params()).sum();
            rows.push((depth, width, params, report));
        }
    }
    let keys: std::collections::BTreeSet<String> = rows
        .iter()
        .flat_map(|r| r.3.errors.keys().cloned())
        .collect();
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    let mut header = vec![
        "depth".to_string(),
        "width".into(),
        "params".into(),
        "wall_time_s".into(),
    ];
    header.extend(keys.iter().map(|k| format!("error_{k}")));
    w.write_record(&header)?;
    for (depth, width, params, report) in &rows {
        let mut row = vec![
            depth.to_string(),
            width.to_string(),
            params.to_string(),
            report.wall_time_s.to_string(),
        ];
        row.extend(
            keys.iter()
                .map(|k| report.error(k).map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    println!("{}", dir.join("sweep.csv").display());
    Ok(())
}

#[derive(Serialize)]
struct WindowSummary {
    window_days: f64,
    wall_time_s: f64,
    horizon_errors: BTreeMap<String, f64>,
}

fn forecast_protocol(
    mut spec: ScenarioSpec,
    windows: &[f64],
    horizon: usize,
    common: &CommonArgs,
) -> Result<()> {
    apply_common(&mut spec, common)?;
    let started = Instant::now();
    let results = evaluation::sequential_window_protocol(&spec, windows, horizon)?;
    let dir = common.out.join(format!("{}_forecast", spec.name));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("spec.json"), spec.to_json())?;
    let mut summary = Vec::new();
    for r in &results {
        let tag = format!("window_{}", r.window_days);
        r.forecast
            .write_csv(dir.join(format!("{tag}_forecast.csv")))?;
        r.model.save(dir.join(&tag))?;
        eprintln!("window [0, {}]: {:?}", r.window_days, r.horizon_errors);
        summary.push(WindowSummary {
            window_days: r.window_days,
            wall_time_s: r.model.wall_time_s,
            horizon_errors: r.horizon_errors.clone(),
        });
    }
    write_json(&dir.join("windows.json"), &summary)?;
    if let Some(last) = results.last() {
        write_manifest(&dir, "forecast", &spec, &last.model)?;
    }
    eprintln!("{:.1} s", started.elapsed().as_secs_f64());
    println!("{}", dir.display());
    Ok(())
}

fn gen_data(mut spec: ScenarioSpec, seed: Option<u64>, out: &Path) -> Result<()> {
    match &mut spec.source {
        epipinn::scenario::Source::Synthetic { noise_seed, .. } => {
            if let Some(s) = seed {
                *noise_seed = s;
            }
        }
        epipinn::scenario::Source::Surveillance { .. } => {
            return Err(epipinn::Error::Config(format!(
                "{} uses surveillance data, which cannot be generated",
                spec.name
            ))
            .into())
        }
    }
    let data: Dataset = generate(&spec)?;
    let dir = out.join(format!("{}_data", spec.name));
    data.export(&dir, &spec)?;
    println!("{}", dir.display());
    Ok(())
}

/// Rebuilds the report of a `run-case`/`run-spec` output directory.
fn regenerate_report(dir: &Path) -> Result<ErrorReport> {
    let spec = ScenarioSpec::load(dir.join("spec.json"))?;
    let model = TrainedModel::load(dir.join("model"))?;
    let reference_path = dir.join("data").join("reference.csv");
    let reference = if reference_path.exists() {
        let f = std::fs::File::open(&reference_path)
            .with_context(|| format!("opening {}", reference_path.display()))?;
        Some(Series::read_csv(f)?)
    } else {
        None
    };
    let obs_path = dir.join("data").join("observations.csv");
    let n_data = csv::Reader::from_path(&obs_path)
        .with_context(|| format!("opening {}", obs_path.display()))?
        .records()
        .count();
    Ok(evaluate(&model, reference.as_ref(), &spec.name, n_data)?)
}
