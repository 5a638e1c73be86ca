//! Galton-Watson process with geometric offspring and its extinction
//! probability.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::Serialize;

use super::ChainError;
use crate::seed::SimRng;

/// Below this distance from 1 the mean is treated as critical.
pub const CRITICAL_TOL: f64 = 1e-9;

/// Offspring law `P(G = j) = (1 - p) p^j`, `j >= 0`, with mean
/// `m = p / (1 - p)`; `s = (1 - m(1 - p)) / p` is the other fixed point of
/// the Mobius-form generating function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GwParams {
    pub p: f64,
    pub m: f64,
    pub s: f64,
}

impl GwParams {
    pub fn new(p: f64) -> Result<Self, ChainError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(ChainError::Domain(format!("p must lie in (0, 1), got {p}")));
        }
        let m = p / (1.0 - p);
        let s = (1.0 - m * (1.0 - p)) / p;
        Ok(Self { p, m, s })
    }

    pub fn is_critical(&self) -> bool {
        (self.m - 1.0).abs() < CRITICAL_TOL
    }

    /// `f_k(0)`: probability that one ancestor's line is extinct by
    /// generation `k`.
    pub fn extinct_by(&self, k: u64) -> f64 {
        if self.is_critical() {
            let k = k as f64;
            return k / (k + 1.0);
        }
        let mk = self.m.powf(k as f64);
        if mk.is_infinite() {
            return self.s.min(1.0);
        }
        1.0 - mk * (1.0 - self.s) / (mk - self.s)
    }
}

/// `f_k(0)^initial`.
pub fn gw_extinction_prob(params: &GwParams, k: u64, initial: u64) -> Result<f64, ChainError> {
    if k < 1 || initial < 1 {
        return Err(ChainError::Domain(format!("need k >= 1 and initial >= 1, got k = {k}, initial = {initial}")));
    }
    Ok(params.extinct_by(k).powf(initial as f64))
}

/// Simulates the process from `initial` ancestors; true when it dies out
/// within `k` generations. The sum of `z` geometric offspring counts is
/// negative binomial, drawn as a gamma-mixed Poisson, so each generation
/// costs two draws.
pub fn gw_simulate_extinct(params: &GwParams, k: u64, initial: u64, rng: &mut SimRng) -> Result<bool, ChainError> {
    let mut z = initial;
    for _ in 0..k {
        if z == 0 {
            return Ok(true);
        }
        let err = |e: String| ChainError::Domain(e);
        let rate = Gamma::new(z as f64, params.m).map_err(|e| err(e.to_string()))?.sample(rng);
        if rate == 0.0 {
            return Ok(true);
        }
        z = Poisson::new(rate).map_err(|e| err(e.to_string()))?.sample(rng) as u64;
        if z > 1 << 40 {
            return Ok(false);
        }
    }
    Ok(z == 0)
}

/// Direct simulation without the negative-binomial shortcut.
pub fn gw_simulate_extinct_direct(params: &GwParams, k: u64, initial: u64, rng: &mut SimRng) -> bool {
    let mut z = initial;
    for _ in 0..k {
        if z == 0 {
            return true;
        }
        let mut next = 0u64;
        for _ in 0..z {
            while rng.random::<f64>() < params.p {
                next += 1;
            }
        }
        z = next;
    }
    z == 0
}
