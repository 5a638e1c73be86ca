//! Euler schemes for the local-time diffusions, their coupled pairs and
//! the excited Brownian motion.

mod bm;
mod coupled;
mod ray_knight;

pub use bm::{bm_csv, sample_at_exponential_time, simulate_excited_bm, BmPath, BmSpec, OccupationBins, BLOWUP_RADIUS};
pub use coupled::{simulate_coupled_pair, CoupledPaths};
pub use ray_knight::{
    inverse_local_time, path_csv, simulate_ray_knight, simulate_ray_knight_probed, DiffusionPath, RayKnightSpec,
    Regime,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical blowup at step {step} (state {x})")]
    Blowup { step: u64, x: f64 },
    #[error("profile not absorbed inside the window (integral so far {integral_so_far})")]
    Censored { integral_so_far: f64 },
}
