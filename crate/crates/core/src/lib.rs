//! Multi-excited random walks, excited Brownian motion and their
//! local-time diffusions.

pub mod env;
pub mod seed;
pub mod walk;
pub mod stats;
pub mod chains;
pub mod operators;
pub mod sde;
pub mod cli;
