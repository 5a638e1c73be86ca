use serde::Serialize;

use super::lattice::{GrowthBound, LatticeFunction};
use super::OperatorError;
use crate::env::CookieEnvironment;

pub const DEFAULT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_L_MAX: usize = 400;

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// `sum_{l >= k} p(l) rho^l` for a polynomial `p` of degree at most 3 with
/// nonnegative coefficients `coef[d]` on `l^d`.
pub(crate) fn poly_geom_tail(coef: &[f64; 4], rho: f64, k: u64) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    let q = 1.0 - rho;
    // s[d] = sum_{j >= 0} j^d rho^j
    let s = [
        1.0 / q,
        rho / (q * q),
        rho * (1.0 + rho) / (q * q * q),
        rho * (1.0 + 4.0 * rho + rho * rho) / (q * q * q * q),
    ];
    let binom = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
    let kf = k as f64;
    let mut total = 0.0;
    // (k + j)^d = sum_e binom(d, e) k^(d-e) j^e
    for d in 0..4 {
        if coef[d] == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for e in 0..=d {
            inner += binom[d][e] * kf.powi((d - e) as i32) * s[e];
        }
        total += coef[d] * inner;
    }
    total * rho.powf(kf)
}

/// The excitation sequence `(eps_i, i >= 1)` with its truncation settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelContext {
    eps: Vec<f64>,
    tail: f64,
    tail_exact: bool,
    sup: f64,
    pub tolerance: f64,
    pub l_max: usize,
}

impl KernelContext {
    /// `eps[i - 1] = eps_i`; `eps_i = tail` for `i > eps.len()`.
    pub fn new(eps: Vec<f64>, tail: f64) -> Result<Self, OperatorError> {
        Self::build(eps, tail, true)
    }

    fn build(eps: Vec<f64>, tail: f64, tail_exact: bool) -> Result<Self, OperatorError> {
        let mut sup = tail.abs();
        for &e in &eps {
            if !e.is_finite() {
                return Err(OperatorError::Domain("non-finite excitation".into()));
            }
            sup = sup.max(e.abs());
        }
        if !(sup <= 0.5) {
            return Err(OperatorError::Domain(format!("excitations must satisfy |eps| <= 1/2, got {sup}")));
        }
        Ok(Self { eps, tail, tail_exact, sup, tolerance: DEFAULT_TOLERANCE, l_max: DEFAULT_L_MAX })
    }

    pub fn zero() -> Self {
        Self::build(Vec::new(), 0.0, true).expect("zero context")
    }

    pub fn constant(c: f64) -> Result<Self, OperatorError> {
        Self::new(Vec::new(), c)
    }

    /// The column of `env` at `site`, tabulated for visits `1..=len`. The
    /// tail is exact when the column is fair or constant from some visit on
    /// `<= len`; otherwise indices beyond `len` are rejected.
    pub fn from_env(env: &CookieEnvironment, site: i64, len: usize) -> Result<Self, OperatorError> {
        let len = match env.fair_from(site) {
            Some(f) => len.min(f.saturating_sub(1) as usize),
            None => len,
        };
        let eps: Vec<f64> = (1..=len as u64).map(|i| env.eps(i, site)).collect();
        let next = env.eps(len as u64 + 1, site);
        let exact = env.fair_from(site).is_some() || env.field().tail_start().is_some_and(|t| {
            // the local profile is constant past `t`, i.e. from visit 2n t on
            (2.0 * f64::from(env.n()) * t).ceil() <= len as f64
        });
        Self::build(eps, next, exact)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_l_max(mut self, l_max: usize) -> Self {
        self.l_max = l_max;
        self
    }

    pub fn sup(&self) -> f64 {
        self.sup
    }

    /// Bound on `P(xi > l)` and on the kernel weight at lag `l`: `rho^l`.
    pub fn rho(&self) -> f64 {
        (1.0 + self.sup) / 2.0
    }

    /// Largest index that may be read, if the tail is not exact.
    pub fn horizon(&self) -> Option<u64> {
        (!self.tail_exact).then_some(self.eps.len() as u64)
    }

    #[inline]
    pub fn eps(&self, i: u64) -> f64 {
        debug_assert!(i >= 1);
        self.eps.get(i as usize - 1).copied().unwrap_or(self.tail)
    }

    fn check_horizon(&self, last: u64) -> Result<(), OperatorError> {
        match self.horizon() {
            Some(h) if last > h => Err(OperatorError::ContextTooShort { needed: last, available: h }),
            _ => Ok(()),
        }
    }

    /// Smallest `L <= l_max` with `sum_{l > L} rho^l B(r_hi + l) <= tol`.
    pub(crate) fn lags_for(&self, bound: &GrowthBound, r_hi: u64, rho: f64, tol: f64) -> Result<usize, OperatorError> {
        let r = r_hi as f64;
        // B(r + l) = (c0 + c1 r + c2 r^2) + (c1 + 2 c2 r) l + c2 l^2
        let coef = [bound.c0 + bound.c1 * r + bound.c2 * r * r, bound.c1 + 2.0 * bound.c2 * r, bound.c2, 0.0];
        let mut last = f64::INFINITY;
        for l in 1..=self.l_max {
            last = poly_geom_tail(&coef, rho, l as u64 + 1);
            if last <= tol {
                return Ok(l);
            }
        }
        Err(OperatorError::Truncation { bound: last, l_max: self.l_max })
    }
}

/// A truncated series value with its certified truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certified {
    pub value: f64,
    pub bound: f64,
    pub lags: usize,
}

#[inline]
fn kernel_sum(ctx: &KernelContext, f: impl Fn(u64) -> f64, r: u64, lags: usize) -> f64 {
    let mut acc = Sum::default();
    let mut survive = 1.0;
    for l in 1..=lags as u64 {
        let e = ctx.eps(r + l);
        acc.add(f(r + l) * survive * (1.0 - e) * 0.5);
        survive *= (1.0 + e) * 0.5;
    }
    acc.value()
}

/// `Q_eps f(r) = sum_{l >= 1} f(r + l) 2^{-l} (1 + eps_{r+1})...(1 + eps_{r+l-1})(1 - eps_{r+l})`.
pub fn apply_q_certified(ctx: &KernelContext, f: &LatticeFunction, r: u64) -> Result<Certified, OperatorError> {
    let lags = ctx.lags_for(&f.growth_bound(), r, ctx.rho(), ctx.tolerance)?;
    ctx.check_horizon(r + lags as u64)?;
    let value = kernel_sum(ctx, |s| f.eval(s), r, lags);
    let b = f.growth_bound();
    let rr = r as f64;
    let coef = [b.c0 + b.c1 * rr + b.c2 * rr * rr, b.c1 + 2.0 * b.c2 * rr, b.c2, 0.0];
    Ok(Certified { value, bound: poly_geom_tail(&coef, ctx.rho(), lags as u64 + 1), lags })
}

pub fn apply_q(ctx: &KernelContext, f: &LatticeFunction, r: u64) -> Result<f64, OperatorError> {
    apply_q_certified(ctx, f, r).map(|c| c.value)
}

/// `R_eps f = Q_eps f - Q_0 f`.
pub fn apply_r(ctx: &KernelContext, f: &LatticeFunction, r: u64) -> Result<f64, OperatorError> {
    Ok(apply_q(ctx, f, r)? - apply_q(&KernelContext::zero().with_tolerance(ctx.tolerance), f, r)?)
}

/// `Q^k f(r)` for all `k <= m` and `r <= r_hi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerTable {
    /// `values[k][r]`.
    pub values: Vec<Vec<f64>>,
    /// Certified bound on the accumulated truncation error of row `k`.
    pub bounds: Vec<f64>,
    pub lags: usize,
}

impl PowerTable {
    pub fn at(&self, k: usize, r: usize) -> f64 {
        self.values[k][r]
    }
}

/// Iterates `Q_eps` `m` times on a shrinking window: row `k` is known on
/// `0..=r_hi + (m - k) L`, so row `k + 1` only reads explicitly computed
/// values up to lag `L`, and the lags past `L` are bounded through the
/// growth bound of row `k`.
///
/// Since the weights are nonnegative with total mass at most 1, an error
/// of `d` in row `k` gives at most `d` in row `k + 1`; the row bounds add
/// up. Growth bounds propagate through `E xi <= 1/(1 - rho)` and
/// `E xi^2 <= (1 + rho)/(1 - rho)^2`. The per-step tolerance is
/// `tolerance / m`.
pub fn apply_q_power_table(
    ctx: &KernelContext,
    f: &LatticeFunction,
    m: usize,
    r_hi: u64,
) -> Result<PowerTable, OperatorError> {
    let rho = ctx.rho();
    let mu1 = 1.0 / (1.0 - rho);
    let mu2 = (1.0 + rho) / ((1.0 - rho) * (1.0 - rho));
    let mut bounds_g = vec![f.growth_bound()];
    for k in 0..m {
        let b = bounds_g[k];
        bounds_g.push(GrowthBound {
            c0: b.c0 + b.c1 * mu1 + b.c2 * mu2,
            c1: b.c1 + 2.0 * b.c2 * mu1,
            c2: b.c2,
        });
    }
    let step_tol = ctx.tolerance / m.max(1) as f64;
    // one L for all rows, sized for the largest window and growth bound
    let mut lags = ctx.lags_for(&bounds_g[m], r_hi, rho, step_tol)?;
    loop {
        let r_top = r_hi + (m as u64) * lags as u64;
        let need = ctx.lags_for(&bounds_g[m], r_top, rho, step_tol)?;
        if need <= lags {
            break;
        }
        lags = need;
    }
    let r_top = r_hi + (m as u64) * lags as u64;
    ctx.check_horizon(r_top + lags as u64)?;

    let mut row: Vec<f64> = (0..=r_top).map(|r| f.eval(r)).collect();
    let keep = r_hi as usize + 1;
    let mut values = vec![row[..keep].to_vec()];
    let mut bounds = vec![0.0];
    let mut acc_bound = 0.0;
    for k in 0..m {
        let width = r_top - (k as u64 + 1) * lags as u64;
        let g = &bounds_g[k];
        let last = width as f64;
        let coef = [g.c0 + g.c1 * last + g.c2 * last * last, g.c1 + 2.0 * g.c2 * last, g.c2, 0.0];
        acc_bound += poly_geom_tail(&coef, rho, lags as u64 + 1);
        let prev = &row;
        let next: Vec<f64> = (0..=width).map(|r| kernel_sum(ctx, |s| prev[s as usize], r, lags)).collect();
        row = next;
        values.push(row[..keep].to_vec());
        bounds.push(acc_bound);
    }
    Ok(PowerTable { values, bounds, lags })
}

/// `Q_eps^m f(r)` with its certified bound.
pub fn apply_q_power(ctx: &KernelContext, f: &LatticeFunction, m: usize, r: u64) -> Result<Certified, OperatorError> {
    let t = apply_q_power_table(ctx, f, m, r)?;
    Ok(Certified { value: t.values[m][r as usize], bound: t.bounds[m], lags: t.lags })
}

/// `Q_0^m f(r)`. For `1`, `u` and `u^2` the closed forms
/// `c`, `r + 2m` and `r^2 + 4mr + 4m^2 + 2m` are used; other operands are
/// iterated.
pub fn apply_q0_power(f: &LatticeFunction, m: usize, r: u64) -> Result<f64, OperatorError> {
    use super::lattice::KnownForm;
    let (x, mm) = (r as f64, m as f64);
    Ok(match f.known() {
        Some(KnownForm::Constant) => f.eval(0),
        Some(KnownForm::Identity) => x + 2.0 * mm,
        Some(KnownForm::Square) => x * x + 4.0 * mm * x + 4.0 * mm * mm + 2.0 * mm,
        None => apply_q_power(&KernelContext::zero(), f, m, r)?.value,
    })
}

/// `R~_eps f(r)` by its definition,
/// `sum_l f(r + l) 2^{-l} (sum_{i < l} eps_{r+i} - eps_{r+l})`.
pub fn apply_r_tilde_definition(ctx: &KernelContext, h: &LatticeFunction, r: u64) -> Result<Certified, OperatorError> {
    let b = h.growth_bound();
    let e = ctx.sup;
    let rr = r as f64;
    // |weight| <= l e 2^{-l}
    let coef = [0.0, e * (b.c0 + b.c1 * rr + b.c2 * rr * rr), e * (b.c1 + 2.0 * b.c2 * rr), e * b.c2];
    let lags = lags_for_coef(ctx, &coef, 0.5)?;
    ctx.check_horizon(r + lags as u64)?;
    let mut acc = Sum::default();
    let mut partial = 0.0;
    let mut pow = 1.0;
    for l in 1..=lags as u64 {
        pow *= 0.5;
        let eps_l = ctx.eps(r + l);
        acc.add(h.eval(r + l) * pow * (partial - eps_l));
        partial += eps_l;
    }
    Ok(Certified { value: acc.value(), bound: poly_geom_tail(&coef, 0.5, lags as u64 + 1), lags })
}

/// `R~_eps h(r)` in the rearranged form
/// `-sum_l eps_{r+l} (h(r + l) 2^{-l} - sum_{i > l} h(r + i) 2^{-i})`.
pub fn apply_r_tilde_rearranged(ctx: &KernelContext, h: &LatticeFunction, r: u64) -> Result<Certified, OperatorError> {
    let b = h.growth_bound();
    let e = ctx.sup;
    let rr = r as f64;
    let base = [b.c0 + b.c1 * rr + b.c2 * rr * rr, b.c1 + 2.0 * b.c2 * rr, b.c2, 0.0];
    // outer terms past L: e (|h| 2^{-l} + inner tail); the inner tails are
    // dominated by sum_{i > L} i B(r + i) 2^{-i}; each of the L kept outer
    // terms misses at most e sum_{i > L} B(r + i) 2^{-i}
    let shifted = [0.0, base[0], base[1], base[2]];
    let bound_at = |l: usize| {
        let k = l as u64 + 1;
        e * (poly_geom_tail(&base, 0.5, k) + poly_geom_tail(&shifted, 0.5, k) + l as f64 * poly_geom_tail(&base, 0.5, k))
    };
    let mut lags = 0;
    for l in 1..=ctx.l_max {
        if bound_at(l) <= ctx.tolerance {
            lags = l;
            break;
        }
    }
    if lags == 0 {
        return Err(OperatorError::Truncation { bound: bound_at(ctx.l_max), l_max: ctx.l_max });
    }
    ctx.check_horizon(r + lags as u64)?;
    let terms: Vec<f64> = (1..=lags as u64).map(|l| h.eval(r + l) * 0.5f64.powi(l as i32)).collect();
    // suffix[l] = sum_{i > l} terms, truncated at L
    let mut suffix = vec![0.0; lags + 1];
    for l in (0..lags).rev() {
        suffix[l] = suffix[l + 1] + terms[l];
    }
    let mut acc = Sum::default();
    for l in 1..=lags {
        acc.add(-ctx.eps(r + l as u64) * (terms[l - 1] - suffix[l]));
    }
    Ok(Certified { value: acc.value(), bound: bound_at(lags), lags })
}

/// Both forms, checked against each other; returns the rearranged value.
pub fn apply_r_tilde(ctx: &KernelContext, h: &LatticeFunction, r: u64) -> Result<f64, OperatorError> {
    let a = apply_r_tilde_definition(ctx, h, r)?;
    let b = apply_r_tilde_rearranged(ctx, h, r)?;
    let slack = a.bound + b.bound + 2.0 * ctx.tolerance + 1e-12 * a.value.abs().max(1.0);
    if (a.value - b.value).abs() > slack {
        return Err(OperatorError::FormMismatch { definition: a.value, rearranged: b.value });
    }
    Ok(b.value)
}

fn lags_for_coef(ctx: &KernelContext, coef: &[f64; 4], rho: f64) -> Result<usize, OperatorError> {
    let mut last = f64::INFINITY;
    for l in 1..=ctx.l_max {
        last = poly_geom_tail(coef, rho, l as u64 + 1);
        if last <= ctx.tolerance {
            return Ok(l);
        }
    }
    Err(OperatorError::Truncation { bound: last, l_max: ctx.l_max })
}
