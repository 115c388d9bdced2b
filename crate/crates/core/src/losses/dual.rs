use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// The functions a model can approximate with a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Scaled susceptibles Ŝ_s.
    Susceptible,
    /// Scaled infected Î_s.
    Infected,
    /// Transmission rate β̂.
    Beta,
    /// Effective reproduction number R̂_t.
    Rt,
    /// Hospitalized fraction σ̂.
    Sigma,
    /// Scaled daily hospitalizations Δ̂_H,s.
    DeltaH,
    /// Scaled daily new infections Δ̂_I,s.
    DeltaI,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::Susceptible,
        Role::Infected,
        Role::Beta,
        Role::Rt,
        Role::Sigma,
        Role::DeltaH,
        Role::DeltaI,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Susceptible => "S",
            Role::Infected => "I",
            Role::Beta => "beta",
            Role::Rt => "Rt",
            Role::Sigma => "sigma",
            Role::DeltaH => "dH",
            Role::DeltaI => "dI",
        }
    }
}

/// Gradient slots: value and time-derivative of each role.
pub const SLOTS: usize = 2 * Role::ALL.len();

pub fn value_slot(role: Role) -> usize {
    2 * role.index()
}

pub fn deriv_slot(role: Role) -> usize {
    2 * role.index() + 1
}

/// Forward-mode dual number carrying partials w.r.t. every slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub g: [f64; SLOTS],
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Dual { v, g: [0.0; SLOTS] }
    }

    pub fn seeded(v: f64, slot: usize) -> Self {
        let mut g = [0.0; SLOTS];
        g[slot] = 1.0;
        Dual { v, g }
    }

    fn map2(self, rhs: Dual, v: f64, da: f64, db: f64) -> Dual {
        let mut g = [0.0; SLOTS];
        for k in 0..SLOTS {
            g[k] = da * self.g[k] + db * rhs.g[k];
        }
        Dual { v, g }
    }

    fn scale(self, v: f64, d: f64) -> Dual {
        let mut g = self.g;
        for x in &mut g {
            *x *= d;
        }
        Dual { v, g }
    }
}

/// Arithmetic shared by `f64` and [`Dual`] so each residual is written once.
pub trait Num:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(self) -> f64;
}

impl Num for f64 {
    fn value(self) -> f64 {
        self
    }
}

impl Num for Dual {
    fn value(self) -> f64 {
        self.v
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        self.map2(rhs, self.v + rhs.v, 1.0, 1.0)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        self.map2(rhs, self.v - rhs.v, 1.0, -1.0)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        self.map2(rhs, self.v * rhs.v, rhs.v, self.v)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let q = self.v / rhs.v;
        self.map2(rhs, q, 1.0 / rhs.v, -q / rhs.v)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        self.scale(-self.v, -1.0)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(mut self, rhs: f64) -> Dual {
        self.v += rhs;
        self
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(mut self, rhs: f64) -> Dual {
        self.v -= rhs;
        self
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, rhs: f64) -> Dual {
        self.scale(self.v * rhs, rhs)
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    fn div(self, rhs: f64) -> Dual {
        self.scale(self.v / rhs, 1.0 / rhs)
    }
}
