//! Kernel calculus for `Q_eps`, `Q_0` and `R~_eps` on lattice functions,
//! with certified truncation of the infinite series.

mod kernel;
mod lattice;

pub use kernel::{
    apply_q, apply_q0_power, apply_q_certified, apply_q_power, apply_q_power_table, apply_r, apply_r_tilde,
    apply_r_tilde_definition, apply_r_tilde_rearranged, Certified, KernelContext, PowerTable, DEFAULT_L_MAX,
    DEFAULT_TOLERANCE,
};
pub use lattice::{GrowthBound, KnownForm, LatticeFunction};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::env::{CookieEnvironment, DriftField, EnvError};
use crate::seed::rng_from_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("truncation bound {bound:e} still above tolerance at L_max = {l_max}")]
    Truncation { bound: f64, l_max: usize },
    #[error("excitation sequence needed up to index {needed} but only {available} entries are known")]
    ContextTooShort { needed: u64, available: u64 },
    #[error("definition form {definition} and rearranged form {rearranged} disagree")]
    FormMismatch { definition: f64, rearranged: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// `a_l = 2^{1-l}`.
pub fn coefficient_a(l: u32) -> Result<f64, OperatorError> {
    if l < 1 {
        return Err(OperatorError::Domain("coefficients are indexed from 1".into()));
    }
    Ok(0.5f64.powi(l as i32 - 1))
}

/// `a_l = -l 2^{-l} + sum_{j > l} j 2^{-j}`, summed until the certified tail
/// is below `1e-17`.
pub fn coefficient_a_series(l: u32) -> Result<f64, OperatorError> {
    series_coefficient(l, 1)
}

/// `b_l = -l^2 2^{-l} + sum_{i > l} i^2 2^{-i}`, by series summation.
pub fn coefficient_b(l: u32) -> Result<f64, OperatorError> {
    series_coefficient(l, 2)
}

fn series_coefficient(l: u32, power: i32) -> Result<f64, OperatorError> {
    if l < 1 {
        return Err(OperatorError::Domain("coefficients are indexed from 1".into()));
    }
    let mut coef = [0.0; 4];
    coef[power as usize] = 1.0;
    let mut acc = kernel::Sum::default();
    acc.add(-f64::from(l).powi(power) * 0.5f64.powi(l as i32));
    let mut j = u64::from(l) + 1;
    loop {
        acc.add((j as f64).powi(power) * 0.5f64.powi(j as i32));
        j += 1;
        if kernel::poly_geom_tail(&coef, 0.5, j) < 1e-17 {
            break;
        }
    }
    Ok(acc.value())
}

/// One row of the drift expansion check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftExpansion {
    pub n: u32,
    pub m: usize,
    /// `Q_{eps_n}^m u(0) - Q_0^m u(0)`.
    pub lhs: f64,
    /// `h(m/n) = int_0^{m/n} phi`.
    pub rhs: f64,
    pub gap: f64,
    pub truncation_bound: f64,
}

/// Compares `Q_{eps_n}^m u(0) - 2m` with `h(m/n)` for a homogeneous field.
pub fn drift_expansion_check(field: &DriftField, n: u32, m: usize) -> Result<DriftExpansion, OperatorError> {
    if !field.is_homogeneous() {
        return Err(OperatorError::Domain("drift expansion needs a space-homogeneous field".into()));
    }
    let env = CookieEnvironment::new(field.clone(), n)?;
    let ctx = KernelContext::from_env(&env, 0, (m + 2) * DEFAULT_L_MAX)?;
    let q = apply_q_power(&ctx, &LatticeFunction::identity(), m, 0)?;
    let lhs = q.value - 2.0 * m as f64;
    let rhs = field.antiderivative(0.0, m as f64 / f64::from(n))?;
    Ok(DriftExpansion { n, m, lhs, rhs, gap: (lhs - rhs).abs(), truncation_bound: q.bound })
}

/// CSV with columns `n,m,lhs,rhs,gap`.
pub fn drift_csv(rows: &[DriftExpansion]) -> String {
    let mut out = String::from("n,m,lhs,rhs,gap\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.n, r.m, r.lhs, r.rhs, r.gap));
    }
    out
}

/// One exact identity with the largest residual seen over its grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub cases: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn check(name: &str, residuals: impl IntoIterator<Item = f64>, tolerance: f64) -> IdentityCheck {
    let (mut cases, mut max_residual) = (0, 0.0f64);
    for r in residuals {
        cases += 1;
        max_residual = if r.is_nan() { f64::INFINITY } else { max_residual.max(r) };
    }
    IdentityCheck { name: name.into(), cases, max_residual, tolerance, passed: max_residual <= tolerance }
}

/// Random excitation sequence with `|eps| <= 1/2` and a zero tail.
pub fn random_context(seed: u64, len: usize) -> KernelContext {
    let mut rng = rng_from_seed(seed);
    let eps = (0..len).map(|_| rng.random_range(-0.5..=0.5)).collect();
    KernelContext::new(eps, 0.0).expect("bounded excitations")
}

/// Random lattice function with an affine tail.
pub fn random_function(seed: u64, window: usize) -> LatticeFunction {
    let mut rng = rng_from_seed(seed);
    let values = (0..window).map(|_| rng.random_range(-5.0..5.0)).collect();
    LatticeFunction::affine(values, rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0))
}

/// The exact operator identities, each over its grid of cases.
pub fn identity_suite(seed: u64, tolerance: f64) -> Result<Vec<IdentityCheck>, OperatorError> {
    let one = LatticeFunction::one();
    let u = LatticeFunction::identity();
    let u2 = LatticeFunction::square();
    let contexts: Vec<KernelContext> = (0..100).map(|i| random_context(seed.wrapping_add(i), 120)).collect();
    let mut out = Vec::new();

    let mut res = Vec::new();
    for ctx in &contexts {
        for r in [0, 3, 17, 60] {
            res.push((apply_q(ctx, &one, r)? - 1.0).abs());
        }
    }
    out.push(check("Q_eps 1 = 1", res, tolerance));

    let mut res = Vec::new();
    for ctx in &contexts {
        for r in [0, 3, 17, 60] {
            res.push(apply_r_tilde_definition(ctx, &one, r)?.value.abs());
            res.push(apply_r_tilde_rearranged(ctx, &one, r)?.value.abs());
        }
    }
    out.push(check("R~_eps 1 = 0", res, tolerance));

    let mut res = Vec::new();
    for (i, ctx) in contexts.iter().enumerate() {
        let hs = [u.clone(), u2.clone(), random_function(seed ^ 0x5eed ^ i as u64, 40)];
        for h in &hs {
            for r in [0, 5, 30] {
                let a = apply_r_tilde_definition(ctx, h, r)?.value;
                let b = apply_r_tilde_rearranged(ctx, h, r)?.value;
                res.push((a - b).abs());
            }
        }
    }
    out.push(check("R~_eps definition = rearranged form", res, tolerance));

    let res: Result<Vec<f64>, _> =
        (1..=30).map(|l| Ok::<_, OperatorError>((coefficient_a_series(l)? - coefficient_a(l)?).abs())).collect();
    out.push(check("a_l series = 2^(1-l), l <= 30", res?, tolerance));

    out.push(check("b_1 = 5", [(coefficient_b(1)? - 5.0).abs()], tolerance));

    let table = apply_q_power_table(&KernelContext::zero(), &u2, 50, 50)?;
    let mut res = Vec::new();
    for i in 0..=50 {
        for r in 0..=50u64 {
            let closed = apply_q0_power(&u2, i, r)?;
            res.push((table.at(i, r as usize) - closed).abs());
        }
    }
    out.push(check("Q_0^i u^2 = u^2 + 4iu + 4i^2 + 2i, i, r <= 50", res, tolerance));

    let table = apply_q_power_table(&KernelContext::zero(), &u, 200, 0)?;
    let res = (0..=200).map(|m| (table.at(m, 0) - 2.0 * m as f64).abs());
    out.push(check("Q_0^m u(0) = 2m, m <= 200", res, tolerance));
    Ok(out)
}

#[cfg(test)]
mod tests;
