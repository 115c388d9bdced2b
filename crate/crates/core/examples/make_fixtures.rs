//! Regenerates the bundled stand-in tables under `fixtures/`.
//!
//! `cargo run -p epipinn --example make_fixtures`

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use epipinn::data::gen_poisson_obs;
use epipinn::sir::{simulate_hosp, HospThird, ModelParams, RateFunction, RK4_STEP};

const SEED: u64 = 20200221;
const ALPHA_R: f64 = 6.0;
const I0: f64 = 5.0;

/// Effective reproduction number shaped like the first Italian wave: fast
/// early spread, a lockdown drop through one, and a slow recession.
const RT_KNOTS: [(f64, f64); 14] = [
    (0.0, 3.2),
    (8.0, 3.1),
    (15.0, 2.9),
    (20.0, 2.5),
    (24.0, 1.9),
    (28.0, 1.4),
    (32.0, 1.1),
    (36.0, 0.95),
    (42.0, 0.82),
    (50.0, 0.74),
    (60.0, 0.68),
    (70.0, 0.66),
    (80.0, 0.7),
    (89.0, 0.74),
];

/// Hospitalized fraction decreasing as testing widens.
const SIGMA_KNOTS: [(f64, f64); 5] = [
    (0.0, 0.22),
    (15.0, 0.18),
    (35.0, 0.09),
    (60.0, 0.05),
    (89.0, 0.035),
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    fs::create_dir_all(&dir)?;

    let mut rt_csv = String::from("t_days,value\n");
    for (t, v) in RT_KNOTS {
        rt_csv.push_str(&format!("{t},{v}\n"));
    }
    fs::write(dir.join("rt_reference.csv"), rt_csv)?;

    let params = ModelParams {
        i0: I0,
        ..ModelParams::italy()
    };
    let rt = RateFunction::piecewise_linear(RT_KNOTS.to_vec())?;
    let sigma = RateFunction::piecewise_linear(SIGMA_KNOTS.to_vec())?;
    let traj = simulate_hosp(
        &params,
        &rt,
        &sigma,
        HospThird::CumulativeInfections,
        RK4_STEP,
    )?;
    let days: Vec<f64> = (0..90).map(f64::from).collect();
    let i = traj.sample("I", &days)?;
    let delta = params.delta;
    let d_i: Vec<f64> = days
        .iter()
        .zip(&i)
        .map(|(&t, i)| delta * rt.eval(t) * i)
        .collect();
    let d_h: Vec<f64> = days
        .iter()
        .zip(&i)
        .map(|(&t, i)| delta * sigma.eval(t) * i)
        .collect();
    let reported: Vec<f64> = d_i.iter().map(|v| v / ALPHA_R).collect();
    let cases = gen_poisson_obs(&reported, SEED)?;
    let hosp = gen_poisson_obs(&d_h, SEED + 1)?;

    let start = NaiveDate::from_ymd_opt(2020, 2, 21).unwrap();
    let mut obs = String::from("date,new_cases,new_hospitalizations\n");
    let mut reference = String::from("t_days,Rt,sigma,I,dI,dH\n");
    for (k, &t) in days.iter().enumerate() {
        let date = start + chrono::Days::new(k as u64);
        obs.push_str(&format!("{date},{},{}\n", cases[k], hosp[k]));
        reference.push_str(&format!(
            "{t},{},{},{},{},{}\n",
            rt.eval(t),
            sigma.eval(t),
            i[k],
            d_i[k],
            d_h[k]
        ));
    }
    fs::write(dir.join("surveillance.csv"), obs)?;
    fs::write(dir.join("surveillance_reference.csv"), reference)?;
    println!("wrote fixtures to {}", dir.display());
    Ok(())
}
