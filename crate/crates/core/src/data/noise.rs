//! Count-noise generators for synthetic observations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Means above this use a rounded normal with matched moments.
const NORMAL_ABOVE: f64 = 1e7;
/// Means below this use sequential inversion.
const INVERSION_BELOW: f64 = 30.0;

/// One Poisson draw with mean `lambda ≥ 0`.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        0.0
    } else if lambda < INVERSION_BELOW {
        poisson_inversion(rng, lambda)
    } else if lambda <= NORMAL_ABOVE {
        poisson_ptrs(rng, lambda)
    } else {
        let z: f64 = StandardNormal.sample(rng);
        (lambda + lambda.sqrt() * z).round().max(0.0)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> f64 {
    let u: f64 = rng.random();
    let mut k = 0u32;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
        // Guards against the cdf stalling below u through rounding.
        if p == 0.0 && k as f64 > lambda {
            break;
        }
    }
    k as f64
}

/// Transformed rejection with squeeze (Hörmann's PTRS).
fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> f64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k;
        }
    }
}

/// Independent Poisson draws with the given means, deterministic in `seed`.
pub fn gen_poisson_obs(means: &[f64], seed: u64) -> Result<Vec<f64>> {
    if let Some(&m) = means.iter().find(|m| !(**m >= 0.0)) {
        return Err(Error::NegativeMean(m));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(means.iter().map(|&m| poisson(&mut rng, m)).collect())
}

/// `mean + N(0, (cv·mean)²)`, rounded to the nearest integer and clamped at 0.
pub fn gen_gaussian_obs(means: &[f64], cv: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    means
        .iter()
        .map(|&m| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (m + cv * m * z).round().max(0.0)
        })
        .collect()
}
