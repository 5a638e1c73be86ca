//! Scaled observables: `X^(n)(t)`, geometric-time marginals and stopping
//! times.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::Geometric;
use serde::Serialize;

use super::profile::lattice_floor;
use super::run::{simulate_walk, StopRule, WalkOptions, Walker};
use super::WalkError;
use crate::env::CookieEnvironment;
use crate::seed::SimRng;

fn scale(env: &CookieEnvironment) -> (f64, f64) {
    let n = f64::from(env.n());
    (2.0 * n, 4.0 * n * n)
}

/// `X([4n^2 t]) / 2n` from a fresh walk.
pub fn scaled_process_sample(env: &CookieEnvironment, t: f64, rng: &mut SimRng) -> Result<f64, WalkError> {
    let v = scaled_process_at(env, &[t], rng)?;
    Ok(v[0])
}

/// `X^(n)` at several nondecreasing times along one walk.
pub fn scaled_process_at(env: &CookieEnvironment, times: &[f64], rng: &mut SimRng) -> Result<Vec<f64>, WalkError> {
    let (two_n, four_n2) = scale(env);
    let mut w = Walker::new(env);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= 0.0) {
            return Err(WalkError::Domain(format!("time must be nonnegative, got {t}")));
        }
        let target = lattice_floor(four_n2 * t) as u64;
        if target < w.steps {
            return Err(WalkError::Domain("times must be nondecreasing".into()));
        }
        w.run_steps(target - w.steps, rng);
        out.push(w.x as f64 / two_n);
    }
    Ok(out)
}

/// Runs the walk for a geometric number of steps with success parameter
/// `1 - exp(-u / 4n^2)` (support `{0, 1, ...}`) and returns `X(theta) / 2n`.
pub fn sample_at_geometric_time(env: &CookieEnvironment, u: f64, rng: &mut SimRng) -> Result<f64, WalkError> {
    if !(u > 0.0) {
        return Err(WalkError::Domain(format!("rate must be positive, got {u}")));
    }
    let (two_n, four_n2) = scale(env);
    let q = -(-u / four_n2).exp_m1();
    let theta = rng.sample(Geometric::new(q).map_err(|e| WalkError::Domain(e.to_string()))?);
    let mut w = Walker::new(env);
    w.run_steps(theta, rng);
    Ok(w.x as f64 / two_n)
}

/// A stopping-time draw, raw and scaled by `4n^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StoppingTimeSample {
    pub raw: u64,
    pub scaled: f64,
    pub censored: bool,
    pub cap: u64,
}

/// Draws `tau_{[2na]}([nv])` (or the upcrossing analogue) at scale `n`.
pub fn sample_stopping_time(
    env: &CookieEnvironment,
    rule: StopRule,
    cap: u64,
    rng: &mut SimRng,
) -> Result<StoppingTimeSample, WalkError> {
    if matches!(rule, StopRule::FixedHorizon(_)) {
        return Err(WalkError::WrongStopRule("stopping times need a crossing rule".into()));
    }
    let (_, four_n2) = scale(env);
    let run = simulate_walk(env, rule, &WalkOptions::with_cap(cap), rng);
    Ok(StoppingTimeSample { raw: run.steps, scaled: run.steps as f64 / four_n2, censored: run.censored, cap })
}

/// CSV with columns `raw,scaled,censored`.
pub fn stopping_times_csv(samples: &[StoppingTimeSample]) -> String {
    let mut out = String::from("raw,scaled,censored\n");
    for s in samples {
        let _ = writeln!(out, "{},{},{}", s.raw, s.scaled, s.censored);
    }
    out
}
