pub mod cli;
pub mod constants;
pub mod counting_sim;
pub mod dispersion;
pub mod error;
pub mod filters;
mod interp;
pub mod material_optics;
pub mod mode_solver;
pub mod noise_stats;
pub mod sfwm;

pub use error::{Error, Result};
