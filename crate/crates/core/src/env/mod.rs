//! Drift fields, scaled cookie environments and recurrence classification.

mod environment;
mod field;
pub mod quadrature;
mod recurrence;

pub use environment::{probability_to_threshold, step_probability, CookieEnvironment, SiteColumn, FAIR_THRESHOLD};
pub use field::{DriftField, DriftSpec, FieldFn, FieldShapeSpec, PiecewiseLinear, ANTIDERIVATIVE_TOL};
pub use recurrence::{
    classify_recurrence, classify_recurrence_with_horizon, Classification, RecurrenceMethod, RecurrenceReport,
    DEFAULT_LIMINF_HORIZON,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid drift field: {0}")]
    InvalidField(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("scale too small: sup|phi| = {bound} needs n >= {min_n}, got n = {n}")]
    ScaleTooSmall { bound: f64, n: u32, min_n: u64 },
    #[error("unsupported recurrence criterion: {0}")]
    Unsupported(String),
}
