//! Exact property checks shared by the property tests and the acceptance run.
//!
//! Each check returns a one-line summary on success and the first violation
//! otherwise.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use epipinn::data::{gen_gaussian_obs, gen_poisson_obs};
use epipinn::evaluation::relative_l2;
use epipinn::losses::{
    full_sir, loss_joint_full, reduced, split_hosp, FullSirColumns, LossWeights, Role,
    ScalingConstants,
};
use epipinn::net::{adam_step, AdamState, Network, OutputConstraint};
use epipinn::scenario::{generate, ScenarioSpec};
use epipinn::sir::{
    integrate_rk4, simulate_hosp, simulate_sir, HospThird, ModelParams, RateFunction, Transmission,
};
use epipinn::trainer::{batch_loss, train, Approach, Phase, Points, Strategy, TrainConfig};

pub type Check = Result<String, String>;

/// `|a − b| ≤ abs` or `≤ rel · max(|a|, |b|)`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    let d = (a - b).abs();
    d <= abs || d <= rel * a.abs().max(b.abs())
}

/// Dense networks of random shape and perturbed Glorot weights.
pub fn random_net(rng: &mut ChaCha8Rng) -> Network {
    let depth = rng.random_range(1..=4);
    let width = rng.random_range(1..=12);
    let constraint = if rng.random::<bool>() {
        OutputConstraint::Square
    } else {
        OutputConstraint::None
    };
    let mut net = Network::dense_with(depth, width, constraint, rng.random()).unwrap();
    let noise = Normal::new(0.0, 0.3).unwrap();
    for p in net.params_mut() {
        *p += noise.sample(rng);
    }
    net
}

/// Parameter gradients of `u` and `u'`, and `u'` itself, against central
/// differences over `n_nets` random networks.
pub fn gradient_checks(n_nets: usize, seed: u64) -> Check {
    const REL: f64 = 1e-5;
    const ABS: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0usize;
    for n in 0..n_nets {
        let mut net = random_net(&mut rng);
        for _ in 0..3 {
            let t: f64 = rng.random_range(-0.2..1.2);
            let (_, du, gv, gd) = net.value_and_grads(t);
            let h = 1e-5;
            let fd_t = (net.forward(t + h) - net.forward(t - h)) / (2.0 * h);
            if !close(du, fd_t, REL, ABS) {
                return Err(format!("net {n}: dinput {du} vs fd {fd_t} at t = {t}"));
            }
            if gv != net.grad_params(t, 1.0) {
                return Err(format!(
                    "net {n}: grad_params disagrees with value_and_grads"
                ));
            }
            for k in 0..net.num_params() {
                let orig = net.params()[k];
                let hp = 1e-6 * (1.0 + orig.abs());
                net.params_mut()[k] = orig + hp;
                let (u_up, d_up) = (net.forward(t), net.dinput(t));
                net.params_mut()[k] = orig - hp;
                let (u_dn, d_dn) = (net.forward(t), net.dinput(t));
                net.params_mut()[k] = orig;
                let fd_v = (u_up - u_dn) / (2.0 * hp);
                let fd_d = (d_up - d_dn) / (2.0 * hp);
                if !close(gv[k], fd_v, REL, ABS) {
                    return Err(format!("net {n} param {k}: du/dθ {} vs fd {fd_v}", gv[k]));
                }
                if !close(gd[k], fd_d, REL, ABS) {
                    return Err(format!("net {n} param {k}: du'/dθ {} vs fd {fd_d}", gd[k]));
                }
                compared += 2;
            }
        }
    }
    Ok(format!(
        "{compared} partials over {n_nets} nets within rel 1e-5 / abs 1e-6"
    ))
}

/// Ratio of RK4 errors at steps h and h/2 on `y' = y·cos t`, `y = exp(sin t)`.
pub fn rk4_order_factor() -> f64 {
    let err = |h: f64| {
        let n = (4.0 / h).round() as usize;
        let grid: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        let ys = integrate_rk4(|t, y: &[f64; 1]| [y[0] * t.cos()], [1.0], &grid, 1e3).unwrap();
        (ys[n][0] - 4f64.sin().exp()).abs()
    };
    err(0.2) / err(0.1)
}

pub fn rk4_order() -> Check {
    let f = rk4_order_factor();
    if (12.0..=20.0).contains(&f) {
        Ok(format!("error ratio {f:.3} for halved step"))
    } else {
        Err(format!("error ratio {f} outside [12, 20]"))
    }
}

/// Largest `|S + I + R − N| / N` over several transmission functions.
pub fn conservation() -> Check {
    let p = ModelParams::italy();
    let rates = [
        RateFunction::constant(0.6),
        RateFunction::two_wave_default(),
        RateFunction::piecewise_linear(vec![(0.0, 0.9), (20.0, 0.2), (90.0, 0.3)]).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for r in rates {
        let traj =
            simulate_sir(&p, &Transmission::Beta(r), None, 0.1).map_err(|e| e.to_string())?;
        worst = worst.max(traj.conservation_defect().unwrap() / p.n);
    }
    if worst <= 1e-9 {
        Ok(format!("max |S+I+R-N|/N = {worst:.2e}"))
    } else {
        Err(format!("conservation defect {worst:.3e} N"))
    }
}

pub fn relative_l2_identities() -> Check {
    let x = [1.0, -2.0, 3.5, 0.25];
    let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let e0 = relative_l2(&x, &x).unwrap();
    let e1 = relative_l2(&doubled, &x).unwrap();
    let y = [1.5, -1.0, 3.0, 0.0];
    let a = relative_l2(&y, &x).unwrap();
    let ys: Vec<f64> = y.iter().map(|v| 7.3 * v).collect();
    let xs: Vec<f64> = x.iter().map(|v| 7.3 * v).collect();
    let b = relative_l2(&ys, &xs).unwrap();
    if e0 == 0.0 && (e1 - 1.0).abs() <= 1e-15 && close(a, b, 1e-14, 0.0) {
        Ok("0 for equal, 1 for doubled, scale invariant".into())
    } else {
        Err(format!("equal {e0}, doubled {e1}, scaled {a} vs {b}"))
    }
}

/// One Adam step from zero moments moves each parameter by `lr·g/(|g|+ε)`.
pub fn adam_first_step() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 64;
    let p0: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let g: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let lr = 1e-3;
    let mut p = p0.clone();
    let mut state = AdamState::new(n);
    adam_step(&mut p, &g, &mut state, lr).map_err(|e| e.to_string())?;
    for k in 0..n {
        let want = -lr * g[k] / (g[k].abs() + state.epsilon);
        let got = p[k] - p0[k];
        if !close(got, want, 1e-6, 0.0) {
            return Err(format!("param {k}: step {got} vs {want}"));
        }
    }
    Ok(format!("{n} first steps within rel 1e-6"))
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Sample mean and variance of 10^5 draws within five standard errors.
pub fn noise_moments() -> Check {
    let n = 100_000;
    let nf = n as f64;
    for (k, lambda) in [0.8, 9.0, 30.0, 400.0, 2e4].into_iter().enumerate() {
        let xs = gen_poisson_obs(&vec![lambda; n], 100 + k as u64).map_err(|e| e.to_string())?;
        let (m, v) = moments(&xs);
        let se_m = (lambda / nf).sqrt();
        let se_v = ((lambda + 2.0 * lambda * lambda) / nf).sqrt();
        if (m - lambda).abs() > 5.0 * se_m || (v - lambda).abs() > 5.0 * se_v {
            return Err(format!("Poisson({lambda}): mean {m}, variance {v}"));
        }
    }
    for (k, (mean, cv)) in [(1000.0, 0.1), (5e4, 0.4)].into_iter().enumerate() {
        let xs = gen_gaussian_obs(&vec![mean; n], cv, 200 + k as u64);
        let (m, v) = moments(&xs);
        // rounding to integers adds 1/12 to the variance
        let var = (cv * mean).powi(2) + 1.0 / 12.0;
        let se_m = (var / nf).sqrt();
        let se_v = var * (2.0 / nf).sqrt();
        if (m - mean).abs() > 5.0 * se_m || (v - var).abs() > 5.0 * se_v {
            return Err(format!("Gaussian({mean}, cv {cv}): mean {m}, variance {v}"));
        }
    }
    Ok("Poisson and Gaussian moments within 5 SE at 1e5 draws".into())
}

/// The batch loss equals the weighted sum of its terms and the closed-form
/// joint loss evaluated on the same networks and points.
pub fn loss_additivity() -> Check {
    let spec = ScenarioSpec::case(2)
        .unwrap()
        .with_approach(Approach::Joint);
    let config = spec.train.clone();
    let data = generate(&spec).map_err(|e| e.to_string())?;
    let obs = &data.observations;
    let sc = obs.scales;
    let colloc: Vec<f64> = (0..50).map(|k| (k as f64 + 0.3) / 50.0).collect();
    let points = Points::new(Some(obs), &colloc, true);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let nets: BTreeMap<Role, Network> = Strategy::FullJoint
        .roles()
        .iter()
        .map(|&r| {
            let mut net = config
                .architecture(r)
                .build(config.output_constraint(), config.net_seed(r))
                .unwrap();
            for p in net.params_mut() {
                *p += rng.random_range(-0.1..0.1);
            }
            (r, net)
        })
        .collect();
    let w = LossWeights::from_array([1.3, 0.7, 2.1, 0.4, 1.9, 0.6, 1.1]);
    let weights = Strategy::FullJoint.initial_weights(&w);
    let phase = Phase {
        name: "joint".into(),
        terms: Strategy::FullJoint.physics_terms(),
        weights: weights.clone(),
        trainable: Strategy::FullJoint.roles().to_vec(),
        points: &points,
        frozen: BTreeMap::new(),
        batch: points.len(),
        epochs: 1,
        ntk: None,
        penalty: None,
        divergence_factor: f64::INFINITY,
    };
    let batch: Vec<usize> = (0..points.len()).collect();
    let out = batch_loss(&nets, &phase, &weights, &batch, &sc, false).map_err(|e| e.to_string())?;
    let summed: f64 = out.terms.iter().zip(&weights).map(|(l, w)| l * w).sum();

    let s = nets[&Role::Susceptible].forward_batch(&colloc);
    let i = nets[&Role::Infected].forward_batch(&colloc);
    let beta = nets[&Role::Beta].forward_batch(&colloc);
    let i_data = nets[&Role::Infected].forward_batch(&obs.times_scaled);
    let cols = FullSirColumns {
        s: s.values(),
        ds: s.derivs(),
        i: i.values(),
        di: i.derivs(),
        beta: beta.values(),
    };
    let closed = loss_joint_full(
        i_data.values(),
        &obs.infections_scaled,
        cols,
        nets[&Role::Susceptible].forward(0.0),
        nets[&Role::Infected].forward(0.0),
        &w,
        &sc,
    )
    .map_err(|e| e.to_string())?;
    if close(out.total, summed, 1e-12, 0.0) && close(out.total, closed, 1e-12, 0.0) {
        Ok(format!(
            "total {:.6e} = Σ w·terms = closed form to rel 1e-12",
            out.total
        ))
    } else {
        Err(format!(
            "total {} vs Σ w·terms {summed} vs closed form {closed}",
            out.total
        ))
    }
}

/// Fourth-order central difference of `f` sampled with spacing `h` at index `k`.
fn central(f: &[f64], k: usize, h: f64) -> f64 {
    (-f[k + 2] + 8.0 * f[k + 1] - 8.0 * f[k - 1] + f[k - 2]) / (12.0 * h)
}

/// Scaled residuals of RK4 trajectories vanish, relative to the size of the
/// terms they balance.
pub fn residual_roots() -> Check {
    const TOL: f64 = 1e-6;
    let step = 0.01;
    let stride = 10; // derivative stencil spacing 0.1 days
    let h = step * stride as f64;
    let p = ModelParams::italy();
    let mut worst: f64 = 0.0;

    // full SIR driven by a smooth β
    let beta = RateFunction::two_wave_default();
    let traj = simulate_sir(&p, &Transmission::Beta(beta.clone()), None, step)
        .map_err(|e| e.to_string())?;
    let c = 1e5;
    let sc = ScalingConstants::new(c, 1.0, p).unwrap();
    let span = sc.span();
    let pick = |v: Vec<f64>| -> Vec<f64> { v.into_iter().step_by(stride).collect() };
    let times = pick(traj.times.clone());
    let s = pick(traj.column("S").unwrap());
    let i = pick(traj.column("I").unwrap());
    for k in 2..times.len() - 2 {
        let (ss, is) = (s[k] / c, i[k] / c);
        let ds = central(&s, k, h) * span / c;
        let di = central(&i, k, h) * span / c;
        let b = beta.eval(times[k]);
        let r = full_sir(ss, ds, is, di, b, &sc);
        let scale = ds.abs() + di.abs() + (b * is * ss * sc.c1()).abs() + (is * sc.c2()).abs();
        for v in r {
            worst = worst.max(v.abs() / scale);
        }
    }

    // reduced model driven by a smooth R_t
    let rt = RateFunction::TwoWave {
        b0: 0.7,
        a1: 2.3,
        t1: 10.0,
        w1: 25.0,
        a2: 0.6,
        t2: 65.0,
        w2: 12.0,
    };
    let traj =
        simulate_sir(&p, &Transmission::Rt(rt.clone()), None, step).map_err(|e| e.to_string())?;
    let i = pick(traj.column("I").unwrap());
    for k in 2..times.len() - 2 {
        let is = i[k] / c;
        let di = central(&i, k, h) * span / c;
        let r_t = rt.eval(times[k]);
        let r = reduced(is, di, r_t, &sc);
        let scale = di.abs() + ((r_t - 1.0) * is * p.delta * span).abs();
        worst = worst.max(r.abs() / scale);
    }

    // hospitalization model through Δ_H = δσI
    let sigma = RateFunction::TwoWave {
        b0: 0.04,
        a1: 0.12,
        t1: 20.0,
        w1: 30.0,
        a2: 0.0,
        t2: 0.0,
        w2: 1.0,
    };
    let p5 = ModelParams { i0: 5.0, ..p };
    let traj = simulate_hosp(&p5, &rt, &sigma, HospThird::CumulativeInfections, step)
        .map_err(|e| e.to_string())?;
    let c_h = 100.0;
    let sc = ScalingConstants::new(c, c_h, p5).unwrap();
    let i = pick(traj.column("I").unwrap());
    let dh: Vec<f64> = times
        .iter()
        .zip(&i)
        .map(|(t, i)| p5.delta * sigma.eval(*t) * i)
        .collect();
    let sig: Vec<f64> = times.iter().map(|t| sigma.eval(*t)).collect();
    for k in 2..times.len() - 2 {
        let dhs = dh[k] / c_h;
        let ddhs = central(&dh, k, h) * span / c_h;
        let dsig = central(&sig, k, h) * span;
        let r_t = rt.eval(times[k]);
        let r = split_hosp(dhs, ddhs, sig[k], dsig, r_t, &sc);
        let q = dhs / sig[k];
        let dq = (ddhs * sig[k] - dhs * dsig) / (sig[k] * sig[k]);
        let scale = (c_h / c) * ((dq / p5.delta).abs() + ((r_t - 1.0) * q * span).abs());
        worst = worst.max(r.abs() / scale);
    }

    if worst <= TOL {
        Ok(format!("max normalized residual {worst:.2e}"))
    } else {
        Err(format!("normalized residual {worst:.3e} above {TOL:e}"))
    }
}

fn tiny_config(case: u32) -> (TrainConfig, epipinn::data::ObservationSet) {
    let spec = ScenarioSpec::case(case).unwrap();
    let data = generate(&spec).unwrap();
    let mut c = spec.train;
    c.epochs_data = 30;
    c.epochs_data_small = 30;
    c.epochs_physics = 4;
    c.epochs_joint = 4;
    c.n_collocation = 300;
    (c, data.observations)
}

/// The data network is bit-identical however long the physics phase runs,
/// while the physics networks move.
pub fn freeze_bit_exact() -> Check {
    for case in [2, 5] {
        let (mut c, obs) = tiny_config(case);
        let data_role = c.strategy.data_role();
        c.epochs_physics = 1;
        let short = train(&c, &obs).map_err(|e| e.to_string())?;
        c.epochs_physics = 12;
        let long = train(&c, &obs).map_err(|e| e.to_string())?;
        let a = short.networks[&data_role].params();
        let b = long.networks[&data_role].params();
        if a.iter().zip(b).any(|(x, y)| x.to_bits() != y.to_bits()) {
            return Err(format!(
                "case {case}: {data_role:?} changed during the physics phase"
            ));
        }
        let moved = c
            .strategy
            .roles()
            .iter()
            .filter(|r| **r != data_role)
            .any(|r| short.networks[r] != long.networks[r]);
        if !moved {
            return Err(format!("case {case}: physics networks did not train"));
        }
    }
    Ok("data networks bit-identical across physics phases of 1 and 12 epochs".into())
}

/// Training twice with one seed reproduces every parameter and loss bit for
/// bit; another seed does not.
pub fn seed_determinism() -> Check {
    for case in [1, 4, 7] {
        for approach in [Approach::Split, Approach::Joint] {
            let (c, obs) = tiny_config(case);
            let strategy = Strategy::new(c.strategy.variant(), approach);
            let c = c.with_strategy(strategy);
            let a = train(&c, &obs).map_err(|e| e.to_string())?;
            let b = train(&c, &obs).map_err(|e| e.to_string())?;
            if a.networks != b.networks || a.history.len() != b.history.len() {
                return Err(format!("case {case} {approach:?}: repeated run differs"));
            }
            for (x, y) in a.history.iter().zip(&b.history) {
                if x.rows != y.rows {
                    return Err(format!("case {case} {approach:?}: loss history differs"));
                }
            }
            let mut other = c.clone();
            other.seed += 1;
            let d = train(&other, &obs).map_err(|e| e.to_string())?;
            if d.networks == a.networks {
                return Err(format!("case {case} {approach:?}: seed has no effect"));
            }
        }
    }
    Ok("six strategies reproduce bit for bit per seed".into())
}

/// Every check of the property suite, in order.
pub fn property_suite() -> Vec<(&'static str, Check)> {
    vec![
        ("gradients", gradient_checks(100, 42)),
        ("rk4 order", rk4_order()),
        ("conservation", conservation()),
        ("relative_l2", relative_l2_identities()),
        ("adam first step", adam_first_step()),
        ("noise moments", noise_moments()),
        ("loss additivity", loss_additivity()),
        ("residual roots", residual_roots()),
        ("split freeze", freeze_bit_exact()),
        ("seed determinism", seed_determinism()),
    ]
}
