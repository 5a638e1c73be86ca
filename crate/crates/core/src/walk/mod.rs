//! Exact simulation of the excited random walk and of its local-time
//! observables.

mod profile;
mod run;
mod scaled;
mod sites;

#[cfg(test)]
pub(crate) mod enumerate;

pub use profile::{
    downcrossing_counts, lattice_anchor, lattice_floor, local_time_profile, occupation_identity_check, profile_csv,
    DowncrossingCounts, LocalTimeProfile, OccupationCheck,
};
pub use run::{multi_level_downcrossings, simulate_walk, simulate_walk_seeded, StopRule, WalkOptions, WalkRun, DEFAULT_CAP};
pub use scaled::{
    sample_at_geometric_time, sample_stopping_time, scaled_process_at, scaled_process_sample, stopping_times_csv,
    StoppingTimeSample,
};
pub use sites::SiteCounts;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WalkError {
    #[error("run censored at cap {cap}; increase the cap")]
    Censored { cap: u64 },
    #[error("wrong stopping rule: {0}")]
    WrongStopRule(String),
    #[error("windowed runs do not measure time")]
    Windowed,
    #[error("domain error: {0}")]
    Domain(String),
}
