//! Pointwise residuals of the scaled model equations.
//!
//! Every function is generic over [`Num`] so the same expression yields loss
//! values (`f64`) and slot partials ([`Dual`](super::Dual)) for training.

use super::dual::Num;
use super::scaling::ScalingConstants;
use crate::error::{Error, Result};

/// Smallest σ̂ accepted before dividing by it.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Scaled full-SIR residuals `[r_S, r_I, r_R]`, with `R̂_s = N/C − Î_s − Ŝ_s`.
pub fn full_sir<T: Num>(s: T, ds: T, i: T, di: T, beta: T, sc: &ScalingConstants) -> [T; 3] {
    let infection = beta * i * s * sc.c1();
    let removal = i * sc.c2();
    let dr = -(di + ds);
    [ds + infection, di - infection + removal, dr - removal]
}

/// Initial-condition misfits `[e_S0, e_I0, e_R0]` at `t_s = 0`.
pub fn initial<T: Num>(s0: T, i0: T, sc: &ScalingConstants) -> [T; 3] {
    let m = &sc.model;
    let r0 = -(s0 + i0) + sc.n_scaled();
    [s0 - (m.n - m.i0) / sc.c, i0 - m.i0 / sc.c, r0]
}

/// `dÎ_s/dt_s − δ(tf − t0)(R̂_t − 1)Î_s`.
pub fn reduced<T: Num>(i: T, di: T, rt: T, sc: &ScalingConstants) -> T {
    di - (rt - 1.0) * i * (sc.model.delta * sc.span())
}

/// `Δ̂_H,s − δCσ̂Î_s/C_H`.
pub fn hosp_link<T: Num>(dh: T, i: T, sigma: T, sc: &ScalingConstants) -> T {
    dh - sigma * i * (sc.model.delta * sc.c / sc.c_h)
}

/// `Δ̂_I,s − δR̂_tÎ_s`.
pub fn flow_link<T: Num>(flow: T, i: T, rt: T, sc: &ScalingConstants) -> T {
    flow - rt * i * sc.model.delta
}

/// Î_s recovered from hospitalizations: `C_H Δ̂_H,s / (δCσ̂)`.
pub fn i_from_h<T: Num>(dh: T, sigma: T, sc: &ScalingConstants) -> T {
    dh / sigma * (sc.c_h / (sc.model.delta * sc.c))
}

/// Δ̂_I,s recovered from hospitalizations: `C_H R̂_t Δ̂_H,s / (Cσ̂)`.
pub fn delta_i_from_h<T: Num>(dh: T, rt: T, sigma: T, sc: &ScalingConstants) -> T {
    rt * dh / sigma * (sc.c_h / sc.c)
}

/// Reduced-model residual with Î_s eliminated through the hospitalization link:
/// `(C_H/C)[(1/δ)·d(Δ̂_H,s/σ̂)/dt_s − (tf − t0)(R̂_t − 1)·Δ̂_H,s/σ̂]`.
///
/// The quotient derivative uses the exact input derivatives of both networks.
pub fn split_hosp<T: Num>(dh: T, ddh: T, sigma: T, dsigma: T, rt: T, sc: &ScalingConstants) -> T {
    let q = dh / sigma;
    let dq = (ddh * sigma - dh * dsigma) / (sigma * sigma);
    (dq / sc.model.delta - (rt - 1.0) * q * sc.span()) * (sc.c_h / sc.c)
}

pub fn check_sigma(sigma: f64, t_s: f64) -> Result<()> {
    if sigma < SIGMA_FLOOR || !sigma.is_finite() {
        Err(Error::SigmaUnderflow { value: sigma, t_s })
    } else {
        Ok(())
    }
}
