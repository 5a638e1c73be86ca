//! Scaled cookie environments `eps(i, x) = phi(x/2n, i/2n) / 2n`.

use std::sync::Arc;

use super::{DriftField, EnvError};

/// Threshold of a fair coin: `2^63`, so that `u < FAIR_THRESHOLD` has
/// probability exactly one half for a uniform `u64`.
pub const FAIR_THRESHOLD: u64 = 1 << 63;

/// Largest visit index tabulated for fields whose local-time tail is known.
const MAX_TABULATED: f64 = 1.0e7;

/// Converts an up-step probability into a `u64` threshold: a step is up
/// when a uniform `u64` is strictly below the threshold.
#[inline]
pub fn probability_to_threshold(p: f64) -> u64 {
    // `as` saturates, which only matters for p within 2^-64 of 1
    (p * 18_446_744_073_709_551_616.0) as u64
}

#[derive(Debug)]
struct Column {
    /// `eps[i - 1]` for visits `1..=eps.len()`.
    eps: Vec<f64>,
    thr: Vec<u64>,
    tail_eps: f64,
    tail_thr: u64,
    /// First visit index from which every value is zero, if any.
    fair_from: Option<u64>,
}

impl Column {
    #[inline]
    fn eps(&self, visit: u64) -> f64 {
        match self.eps.get(visit as usize - 1) {
            Some(&e) => e,
            None => self.tail_eps,
        }
    }

    #[inline]
    fn threshold(&self, visit: u64) -> u64 {
        match self.thr.get(visit as usize - 1) {
            Some(&t) => t,
            None => self.tail_thr,
        }
    }
}

#[derive(Debug)]
struct Inner {
    n: u32,
    two_n: f64,
    field: DriftField,
    column: Option<Column>,
    /// Inclusive site range inside the support radius, `None` when unbounded.
    support_sites: Option<(i64, i64)>,
}

/// Per-site, per-visit excitations of the walk at scale `n`.
///
/// Cheap to clone and safe to share across threads.
#[derive(Debug, Clone)]
pub struct CookieEnvironment {
    inner: Arc<Inner>,
}

impl CookieEnvironment {
    /// Builds `eps_n` from `field`. Requires `sup|phi| < 2n`.
    pub fn new(field: DriftField, n: u32) -> Result<Self, EnvError> {
        if n == 0 {
            return Err(EnvError::Domain("scale n must be a positive integer".into()));
        }
        let bound = field.bound();
        if !bound.is_finite() {
            return Err(EnvError::InvalidField("drift field must be bounded".into()));
        }
        let two_n = 2.0 * f64::from(n);
        if bound >= two_n {
            return Err(EnvError::ScaleTooSmall { bound, n, min_n: (bound / 2.0).floor() as u64 + 1 });
        }
        let column = if field.is_homogeneous_in_support() { tabulate(&field, two_n) } else { None };
        let support_sites = field.support_radius().map(|r| support_sites(&field, r, two_n));
        Ok(Self { inner: Arc::new(Inner { n, two_n, field, column, support_sites }) })
    }

    pub fn n(&self) -> u32 {
        self.inner.n
    }

    pub fn field(&self) -> &DriftField {
        &self.inner.field
    }

    /// True when `eps(i, x)` does not depend on `x`.
    pub fn is_homogeneous(&self) -> bool {
        self.inner.field.is_homogeneous()
    }

    /// Environment built from `-phi` at the same scale.
    pub fn negated(&self) -> Self {
        Self::new(self.inner.field.negated(), self.inner.n).expect("negation preserves the bound")
    }

    #[inline]
    fn site_in_support(&self, site: i64) -> bool {
        match self.inner.support_sites {
            Some((lo, hi)) => site >= lo && site <= hi,
            None => true,
        }
    }

    /// `eps(visit, site)`; `visit >= 1`.
    #[inline]
    pub fn eps(&self, visit: u64, site: i64) -> f64 {
        debug_assert!(visit >= 1);
        let inner = &*self.inner;
        if let Some(col) = &inner.column {
            if !self.site_in_support(site) {
                return 0.0;
            }
            return col.eps(visit);
        }
        inner.field.eval(site as f64 / inner.two_n, visit as f64 / inner.two_n) / inner.two_n
    }

    /// Probability of an up-step on the `visit`-th visit to `site`.
    #[inline]
    pub fn p(&self, visit: u64, site: i64) -> f64 {
        0.5 * (1.0 + self.eps(visit, site))
    }

    /// `u64` threshold of [`p`](Self::p).
    #[inline]
    pub fn up_threshold(&self, visit: u64, site: i64) -> u64 {
        let inner = &*self.inner;
        if let Some(col) = &inner.column {
            if !self.site_in_support(site) {
                return FAIR_THRESHOLD;
            }
            return col.threshold(visit);
        }
        probability_to_threshold(self.p(visit, site))
    }

    /// First visit index from which every excitation at `site` vanishes.
    pub fn fair_from(&self, site: i64) -> Option<u64> {
        let inner = &*self.inner;
        if !self.site_in_support(site) || inner.field.is_zero() {
            return Some(1);
        }
        if let Some(col) = &inner.column {
            return col.fair_from;
        }
        let x = site as f64 / inner.two_n;
        match inner.field.tail_start() {
            Some(t) if inner.field.eval(x, t + 1.0) == 0.0 && inner.field.has_compact_local_support() => {
                Some(first_visit_at_or_after(t, inner.two_n))
            }
            _ => None,
        }
    }

    /// Per-visit view of the environment at one site.
    pub fn column(&self, site: i64) -> SiteColumn<'_> {
        SiteColumn { env: self, site, fair_from: self.fair_from(site) }
    }
}

/// Sites `k` with `|k / two_n| < r`, as an inclusive range.
fn support_sites(field: &DriftField, r: f64, two_n: f64) -> (i64, i64) {
    let inside = |k: i64| field.in_support(k as f64 / two_n);
    let mut hi = (r * two_n).floor() as i64;
    while hi >= 0 && !inside(hi) {
        hi -= 1;
    }
    while inside(hi + 1) {
        hi += 1;
    }
    let mut lo = -(r * two_n).floor() as i64;
    while lo <= 0 && !inside(lo) {
        lo += 1;
    }
    while inside(lo - 1) {
        lo -= 1;
    }
    (lo, hi)
}

/// Smallest visit index `i >= 1` with `i / two_n >= t`.
fn first_visit_at_or_after(t: f64, two_n: f64) -> u64 {
    let i = (t * two_n).ceil().max(1.0) as u64;
    // guard against rounding in the product
    if (i as f64) / two_n < t {
        i + 1
    } else {
        i
    }
}

fn tabulate(field: &DriftField, two_n: f64) -> Option<Column> {
    let t = field.tail_start()?;
    let last = first_visit_at_or_after(t, two_n);
    if last as f64 > MAX_TABULATED {
        return None;
    }
    let eps: Vec<f64> = (1..last).map(|i| field.eval_local(i as f64 / two_n) / two_n).collect();
    let tail_eps = field.eval_local(last as f64 / two_n) / two_n;
    let thr = eps.iter().map(|e| probability_to_threshold(0.5 * (1.0 + e))).collect();
    let fair_from = if tail_eps == 0.0 {
        let nz = eps.iter().rposition(|&e| e != 0.0);
        Some(nz.map_or(1, |j| j as u64 + 2))
    } else {
        None
    };
    Some(Column { eps, thr, tail_eps, tail_thr: probability_to_threshold(0.5 * (1.0 + tail_eps)), fair_from })
}

/// The excitation sequence `(eps_i, i >= 1)` at a single site.
#[derive(Debug, Clone, Copy)]
pub struct SiteColumn<'a> {
    env: &'a CookieEnvironment,
    site: i64,
    fair_from: Option<u64>,
}

impl SiteColumn<'_> {
    pub fn site(&self) -> i64 {
        self.site
    }

    #[inline]
    pub fn eps(&self, visit: u64) -> f64 {
        self.env.eps(visit, self.site)
    }

    #[inline]
    pub fn up_threshold(&self, visit: u64) -> u64 {
        self.env.up_threshold(visit, self.site)
    }

    /// First visit index from which the column is identically zero.
    pub fn fair_from(&self) -> Option<u64> {
        self.fair_from
    }
}

/// Probability of a `+1` step on the `visit`-th visit to `site`.
pub fn step_probability(env: &CookieEnvironment, site: i64, visit: i64) -> Result<f64, EnvError> {
    if visit < 1 {
        return Err(EnvError::Domain(format!("visit index must be >= 1, got {visit}")));
    }
    Ok(env.p(visit as u64, site))
}
