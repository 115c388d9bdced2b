//! Per-point loss terms, used by the trainer to build mini-batch losses.

use serde::{Deserialize, Serialize};

use super::dual::{deriv_slot, value_slot, Dual, Role};
use super::residual::{self, check_sigma};
use super::scaling::ScalingConstants;
use crate::error::Result;

/// Where a term is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Data,
    Collocation,
    /// The single point `t_s = 0`.
    Initial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    /// `Î_s − Ĩ_s` at a data point.
    DataI,
    /// `Δ̂_H,s − Δ̃_H,s`.
    DataH,
    /// `Δ̂_I,s − Δ̃_I,s`.
    DataFlow,
    OdeS,
    OdeI,
    OdeR,
    InitS,
    InitI,
    InitR,
    /// Reduced equation `dÎ_s/dt_s − δ(tf−t0)(R̂_t−1)Î_s`.
    Reduced,
    /// `Δ̂_H,s − δCσ̂Î_s/C_H`.
    HospLink,
    /// `Δ̂_I,s − δR̂_tÎ_s`.
    FlowLink,
    /// Infections recovered from Δ̂_H,s/σ̂ against the infection data.
    DataIFromH,
    /// New infections recovered from Δ̂_H,s, R̂_t, σ̂ against the data.
    DataFlowFromH,
    /// Reduced equation rewritten in Δ̂_H,s/σ̂.
    SplitHosp,
}

impl Term {
    pub fn kind(self) -> PointKind {
        use Term::*;
        match self {
            DataI | DataH | DataFlow | DataIFromH | DataFlowFromH => PointKind::Data,
            OdeS | OdeI | OdeR | Reduced | HospLink | FlowLink | SplitHosp => {
                PointKind::Collocation
            }
            InitS | InitI | InitR => PointKind::Initial,
        }
    }

    pub fn name(self) -> &'static str {
        use Term::*;
        match self {
            DataI => "L_D",
            DataH => "L_H",
            DataFlow => "L_I",
            OdeS => "L_S",
            OdeI => "L_I_ode",
            OdeR => "L_R",
            InitS => "L_S0",
            InitI => "L_I0",
            InitR => "L_R0",
            Reduced => "L_reduced",
            HospLink => "L_H_link",
            FlowLink => "L_I_link",
            DataIFromH => "L_D_from_H",
            DataFlowFromH => "L_I_from_H",
            SplitHosp => "L_split_ode",
        }
    }

    /// Roles whose value or derivative enter the residual.
    pub fn roles(self) -> &'static [Role] {
        use Role::*;
        use Term::*;
        match self {
            DataI => &[Infected],
            DataH => &[DeltaH],
            DataFlow => &[DeltaI],
            OdeS | OdeI | OdeR => &[Susceptible, Infected, Beta],
            InitS | InitI | InitR => &[Susceptible, Infected],
            Reduced => &[Infected, Rt],
            HospLink => &[DeltaH, Infected, Sigma],
            FlowLink => &[DeltaI, Infected, Rt],
            DataIFromH => &[DeltaH, Sigma],
            DataFlowFromH => &[DeltaH, Rt, Sigma],
            SplitHosp => &[DeltaH, Sigma, Rt],
        }
    }
}

/// Network outputs at one point, as duals seeded on their own slot when
/// the role is being trained and as constants otherwise.
#[derive(Debug, Clone, Copy)]
pub struct PointValues {
    pub value: [Dual; 7],
    pub deriv: [Dual; 7],
}

impl PointValues {
    pub fn new() -> Self {
        PointValues {
            value: [Dual::constant(0.0); 7],
            deriv: [Dual::constant(0.0); 7],
        }
    }

    pub fn set(&mut self, role: Role, value: f64, deriv: f64, trainable: bool) {
        let k = role.index();
        if trainable {
            self.value[k] = Dual::seeded(value, value_slot(role));
            self.deriv[k] = Dual::seeded(deriv, deriv_slot(role));
        } else {
            self.value[k] = Dual::constant(value);
            self.deriv[k] = Dual::constant(deriv);
        }
    }

    fn v(&self, role: Role) -> Dual {
        self.value[role.index()]
    }

    fn d(&self, role: Role) -> Dual {
        self.deriv[role.index()]
    }
}

impl Default for PointValues {
    fn default() -> Self {
        Self::new()
    }
}

/// Observed (scaled) values at a data point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Observed {
    /// Ĩ_s for prevalence data or Δ̃_I,s for daily new infections.
    pub infections: f64,
    pub hospitalizations: Option<f64>,
}

/// Residual of `term` at one point. The squared value is the pointwise
/// contribution to the corresponding mean-squared loss.
pub fn residual_at(
    term: Term,
    p: &PointValues,
    obs: &Observed,
    t_s: f64,
    sc: &ScalingConstants,
) -> Result<Dual> {
    use Role::*;
    use Term::*;
    let hosp = || obs.hospitalizations.unwrap_or(f64::NAN);
    Ok(match term {
        DataI => p.v(Infected) - obs.infections,
        DataH => p.v(DeltaH) - hosp(),
        DataFlow => p.v(DeltaI) - obs.infections,
        OdeS | OdeI | OdeR => {
            let r = residual::full_sir(
                p.v(Susceptible),
                p.d(Susceptible),
                p.v(Infected),
                p.d(Infected),
                p.v(Beta),
                sc,
            );
            r[match term {
                OdeS => 0,
                OdeI => 1,
                _ => 2,
            }]
        }
        InitS | InitI | InitR => {
            let r = residual::initial(p.v(Susceptible), p.v(Infected), sc);
            r[match term {
                InitS => 0,
                InitI => 1,
                _ => 2,
            }]
        }
        Reduced => residual::reduced(p.v(Infected), p.d(Infected), p.v(Rt), sc),
        HospLink => residual::hosp_link(p.v(DeltaH), p.v(Infected), p.v(Sigma), sc),
        FlowLink => residual::flow_link(p.v(DeltaI), p.v(Infected), p.v(Rt), sc),
        DataIFromH => {
            check_sigma(p.v(Sigma).v, t_s)?;
            residual::i_from_h(p.v(DeltaH), p.v(Sigma), sc) - obs.infections
        }
        DataFlowFromH => {
            check_sigma(p.v(Sigma).v, t_s)?;
            residual::delta_i_from_h(p.v(DeltaH), p.v(Rt), p.v(Sigma), sc) - obs.infections
        }
        SplitHosp => {
            check_sigma(p.v(Sigma).v, t_s)?;
            residual::split_hosp(
                p.v(DeltaH),
                p.d(DeltaH),
                p.v(Sigma),
                p.d(Sigma),
                p.v(Rt),
                sc,
            )
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sir::ModelParams;

    #[test]
    fn dual_partials_match_finite_differences() {
        let sc =
            ScalingConstants::new(1e5, 1e3, ModelParams::italy().with_window(0.0, 120.0)).unwrap();
        let base = [
            (Role::DeltaH, 0.4, 0.3),
            (Role::Sigma, 0.08, -0.02),
            (Role::Rt, 1.3, 0.0),
        ];
        let build = |bump: Option<(usize, f64)>| {
            let mut p = PointValues::new();
            for (k, (role, v, d)) in base.iter().enumerate() {
                let (mut v, mut d) = (*v, *d);
                if let Some((slot, h)) = bump {
                    if slot == value_slot(base[k].0) {
                        v += h;
                    }
                    if slot == deriv_slot(base[k].0) {
                        d += h;
                    }
                }
                p.set(*role, v, d, true);
            }
            p
        };
        let obs = Observed {
            infections: 0.7,
            hospitalizations: None,
        };
        for term in [Term::SplitHosp, Term::DataIFromH, Term::DataFlowFromH] {
            let r = residual_at(term, &build(None), &obs, 0.5, &sc).unwrap();
            for (role, _, _) in base {
                for slot in [value_slot(role), deriv_slot(role)] {
                    let h = 1e-6;
                    let up = residual_at(term, &build(Some((slot, h))), &obs, 0.5, &sc).unwrap();
                    let dn = residual_at(term, &build(Some((slot, -h))), &obs, 0.5, &sc).unwrap();
                    let fd = (up.v - dn.v) / (2.0 * h);
                    let tol = 1e-6 * (1.0 + fd.abs());
                    assert!(
                        (r.g[slot] - fd).abs() < tol,
                        "{term:?} slot {slot}: {} vs {fd}",
                        r.g[slot]
                    );
                }
            }
        }
    }

    #[test]
    fn frozen_roles_carry_no_partials() {
        let sc = ScalingConstants::new(1e5, 1e3, ModelParams::italy()).unwrap();
        let mut p = PointValues::new();
        p.set(Role::Infected, 0.5, 0.2, false);
        p.set(Role::Rt, 3.0, 0.0, true);
        let r = residual_at(Term::Reduced, &p, &Observed::default(), 0.1, &sc).unwrap();
        assert!((r.v * r.v - 316.84).abs() < 1e-9);
        assert_eq!(r.g[value_slot(Role::Infected)], 0.0);
        assert_eq!(r.g[deriv_slot(Role::Infected)], 0.0);
        assert!((r.g[value_slot(Role::Rt)] + 0.5 * 18.0).abs() < 1e-12);
    }

    #[test]
    fn kinds_partition_terms() {
        assert_eq!(Term::DataH.kind(), PointKind::Data);
        assert_eq!(Term::SplitHosp.kind(), PointKind::Collocation);
        assert_eq!(Term::InitR.kind(), PointKind::Initial);
    }
}
