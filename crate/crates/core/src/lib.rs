//! Physics-informed neural networks for SIR-family epidemic inverse problems.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod net;
pub mod scenario;
pub mod sir;
pub mod trainer;

pub use error::{Error, Result};
