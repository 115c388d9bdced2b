//! Loss functionals for every model variant, their pointwise residuals and
//! the trace-based weight balancing.

mod dual;
mod functional;
mod ntk;
mod residual;
mod scaling;
mod terms;

pub use dual::{deriv_slot, value_slot, Dual, Num, Role, SLOTS};
pub use functional::*;
pub use ntk::{adapt_loss_weights, adapt_weights_ntk, smooth, trace_estimate};
pub use residual::{
    check_sigma, delta_i_from_h as delta_i_from_h_generic, flow_link, full_sir, hosp_link,
    i_from_h as i_from_h_generic, initial, reduced, split_hosp, SIGMA_FLOOR,
};
pub use scaling::{LossWeights, ScalingConstants};
pub use terms::{residual_at, Observed, PointKind, PointValues, Term};
