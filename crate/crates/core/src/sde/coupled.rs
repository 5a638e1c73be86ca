use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::ray_knight::{h, Regime, RayKnightSpec};
use super::{DiffusionPath, SdeError};
use crate::env::DriftField;
use crate::seed::SimRng;

/// Two profiles from the same anchor, `v <= v'`, on `[a, x_max]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledPaths {
    pub lower: DiffusionPath,
    pub upper: DiffusionPath,
    /// First grid point where the two profiles meet.
    pub coalesced_at: Option<f64>,
}

/// Integrates the pair through `Lambda` and the gap `D = Lambda' - Lambda`:
///
/// `dLambda = 2 sqrt(Lambda) dB + 2(1_{[a,0]} + h(Lambda)) dx`,
/// `dD = 2 sqrt(D) dB~ + 2(h(Lambda + D) - h(Lambda)) dx`,
///
/// with independent `B`, `B~`, both full-truncation Euler. `D` is absorbed
/// at 0, after which the pair moves as one; `Lambda' >= Lambda` holds at
/// every grid point by construction. `Lambda` follows the same regimes as
/// in [`simulate_ray_knight_probed`](super::simulate_ray_knight_probed).
/// Restricted to space-homogeneous fields.
pub fn simulate_coupled_pair(
    field: &DriftField,
    a: f64,
    v: f64,
    v2: f64,
    dx: f64,
    x_max: f64,
    rng: &mut SimRng,
) -> Result<CoupledPaths, SdeError> {
    if !field.is_homogeneous() {
        return Err(SdeError::Domain("coupled pairs are restricted to space-homogeneous fields".into()));
    }
    if !(v <= v2) {
        return Err(SdeError::Domain(format!("need v <= v', got {v} and {v2}")));
    }
    RayKnightSpec::new(a, v, dx, x_max).validate()?;

    let central_k = if a < 0.0 { ((-a) / dx).round().max(1.0) as u64 } else { 0 };
    let central_h = if central_k > 0 { -a / central_k as f64 } else { 0.0 };
    let right_k = ((x_max / dx) + 1e-12).floor() as u64;

    let (mut lam, mut d) = (v, v2 - v);
    let mut grid = vec![a];
    let mut lo = vec![lam];
    let mut hi = vec![lam + d];
    let mut coalesced_at = (d <= 0.0).then_some(a);
    let mut w_plus = if a >= 0.0 && lam <= 0.0 { Some(0.0) } else { None };
    let mut w_plus_upper = if a >= 0.0 && lam + d <= 0.0 { Some(0.0) } else { None };
    let mut clamps = 0;
    let (mut int_lo, mut int_hi) = (0.0, 0.0);
    let total = central_k + right_k;
    for i in 0..total {
        let central = i < central_k;
        let (x, step) = if central {
            (a + i as f64 * central_h, central_h)
        } else {
            ((i - central_k) as f64 * dx, dx)
        };
        let nx = if central {
            if i + 1 == central_k {
                0.0
            } else {
                a + (i + 1) as f64 * central_h
            }
        } else {
            (i + 1 - central_k) as f64 * dx
        };
        let sq = step.sqrt();
        let base = if central { 2.0 } else { 0.0 };
        let l = lam.max(0.0);
        let dd = d.max(0.0);
        let (z1, z2): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
        let absorbed = w_plus.is_some();
        let mut nl = if absorbed { 0.0 } else { lam + 2.0 * l.sqrt() * sq * z1 + (base + 2.0 * h(field, x, l)) * step };
        let mut nd = if coalesced_at.is_some() {
            0.0
        } else {
            d + 2.0 * dd.sqrt() * sq * z2 + 2.0 * (h(field, x, l + dd) - h(field, x, l)) * step
        };
        if !nl.is_finite() || !nd.is_finite() {
            return Err(SdeError::Blowup { step: i, x });
        }
        if central && nl < 0.0 {
            clamps += 1;
            nl = 0.0;
        }
        if !central && !absorbed && nl <= 0.0 {
            nl = 0.0;
            w_plus = Some(nx);
        }
        if coalesced_at.is_none() && nd <= 0.0 {
            nd = 0.0;
            coalesced_at = Some(nx);
        }
        if !central && w_plus_upper.is_none() && nl + nd <= 0.0 {
            w_plus_upper = Some(nx);
        }
        int_lo += 0.5 * step * (l + nl);
        int_hi += 0.5 * step * (l + dd + nl + nd);
        lam = nl;
        d = nd;
        grid.push(nx);
        lo.push(lam);
        hi.push(lam + d);
        if w_plus_upper.is_some() {
            break;
        }
    }
    let mut regimes = Vec::new();
    if a < 0.0 {
        regimes.push((Regime::Central, a, 0.0));
    }
    regimes.push((Regime::Right, 0.0, *grid.last().unwrap_or(&0.0)));
    let path = |v: f64, values: Vec<f64>, w_plus, integral| DiffusionPath {
        a,
        v,
        dx,
        grid: grid.clone(),
        values,
        w_plus,
        w_minus: Some(a),
        clamps,
        integral,
        probes: Vec::new(),
        regimes: regimes.clone(),
    };
    Ok(CoupledPaths {
        lower: path(v, lo, w_plus, int_lo),
        upper: path(v2, hi, w_plus_upper, int_hi),
        coalesced_at,
    })
}
