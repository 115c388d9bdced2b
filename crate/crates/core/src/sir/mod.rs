//! Reference SIR-family models: right-hand sides, a fixed-step RK4
//! integrator and the β / δ / R_t relations.

mod model;
mod rate;
mod trajectory;

pub use model::{
    effective_r, hosp_rhs, integrate_rk4, reduced_rhs, sir_rhs, uniform_grid, HospThird,
    ModelParams,
};
pub(crate) use rate::column_index;
pub use rate::RateFunction;
pub use trajectory::{simulate_hosp, simulate_sir, EpidemicTrajectory, Transmission, RK4_STEP};
