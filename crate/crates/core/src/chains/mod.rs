//! The auxiliary chains `W`, `V` and `V~`, the three-piece construction of
//! the downcrossing profile, and the Galton-Watson extinction oracle.

mod gw;

pub use gw::{gw_extinction_prob, gw_simulate_extinct, gw_simulate_extinct_direct, GwParams, CRITICAL_TOL};

use rand::RngCore;
use serde::Serialize;
use thiserror::Error;

use crate::env::CookieEnvironment;
use crate::seed::SimRng;
use crate::stats::{moment_summary, MomentSummary, StatsError};
use crate::walk::{lattice_anchor, DowncrossingCounts, LocalTimeProfile};

/// Runaway guard on the number of Bernoulli trials.
pub const TRIAL_GUARD: u64 = 1_000_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("chain exceeded {0} Bernoulli trials (transient regime or runaway)")]
    Runaway(u64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// The per-visit excitation sequence at one site.
#[derive(Debug, Clone, Copy)]
pub struct ChainColumn<'a> {
    env: &'a CookieEnvironment,
    site: i64,
    fair_from: u64,
}

impl<'a> ChainColumn<'a> {
    pub fn new(env: &'a CookieEnvironment, site: i64) -> Self {
        let fair_from = env.fair_from(site).unwrap_or(u64::MAX);
        Self { env, site, fair_from }
    }

    pub fn eps(&self, visit: u64) -> f64 {
        self.env.eps(visit, self.site)
    }

    #[inline]
    fn threshold(&self, visit: u64) -> u64 {
        self.env.up_threshold(visit, self.site)
    }
}

/// `W(m)`: index of the trial carrying the `m`-th down event, trial `j`
/// being down with probability `1 - p_j`. `W(0) = 0`.
pub fn sample_w<R: RngCore>(col: &ChainColumn<'_>, m: u64, rng: &mut R) -> Result<u64, ChainError> {
    let mut budget = TRIAL_GUARD;
    sample_w_budgeted(col, m, rng, &mut budget)
}

fn sample_w_budgeted<R: RngCore>(
    col: &ChainColumn<'_>,
    m: u64,
    rng: &mut R,
    budget: &mut u64,
) -> Result<u64, ChainError> {
    if m == 0 {
        return Ok(0);
    }
    let mut downs = 0;
    let mut j = 0u64;
    while j + 1 < col.fair_from {
        j += 1;
        if rng.next_u64() >= col.threshold(j) {
            downs += 1;
            if downs == m {
                return spend(budget, j);
            }
        }
        if j >= *budget {
            return Err(ChainError::Runaway(TRIAL_GUARD));
        }
    }
    // fair trials: 64 at a time, a set bit being a down event
    let mut need = m - downs;
    loop {
        let word = rng.next_u64();
        let c = u64::from(word.count_ones());
        if c < need {
            need -= c;
            j += 64;
            if j >= *budget {
                return Err(ChainError::Runaway(TRIAL_GUARD));
            }
            continue;
        }
        let mut w = word;
        for _ in 1..need {
            w &= w - 1;
        }
        return spend(budget, j + u64::from(w.trailing_zeros()) + 1);
    }
}

fn spend(budget: &mut u64, trials: u64) -> Result<u64, ChainError> {
    if trials > *budget {
        return Err(ChainError::Runaway(TRIAL_GUARD));
    }
    *budget -= trials;
    Ok(trials)
}

/// One step of `V`: `W(m) - m + 1`.
pub fn sample_v_step<R: RngCore>(col: &ChainColumn<'_>, m: u64, rng: &mut R) -> Result<u64, ChainError> {
    Ok(sample_w(col, m, rng)? - m + 1)
}

/// One step of `V~`: `W(m) - m`. Absorbed at 0.
pub fn sample_vtilde_step<R: RngCore>(col: &ChainColumn<'_>, m: u64, rng: &mut R) -> Result<u64, ChainError> {
    Ok(sample_w(col, m, rng)? - m)
}

/// Environment together with its negation, as needed by the left part of
/// the profile construction.
#[derive(Debug, Clone)]
pub struct ChainSampler {
    env: CookieEnvironment,
    negated: CookieEnvironment,
}

impl ChainSampler {
    pub fn new(env: &CookieEnvironment) -> Self {
        Self { env: env.clone(), negated: env.negated() }
    }

    pub fn env(&self) -> &CookieEnvironment {
        &self.env
    }

    /// Draws a profile equal in law to the walk-derived `Lambda^(n)_{a,v}`,
    /// for `a <= 0`.
    ///
    /// With `A = [2na]` and `w = [nv]`, each site `k - 1` contributes the
    /// up-steps taken there before its last down-step, read off its own
    /// column:
    ///
    /// * `S(A) = w`.
    /// * Central part: `S(A+1) = W_{A}(w+1) - (w+1) + 1`, because the
    ///   stopping down-step at `A` is the `(w+1)`-th; then
    ///   `S(k) = W_{k-1}(S(k-1)) - S(k-1) + 1` up to `k = 0`.
    /// * Right part: `S(k) = W_{k-1}(S(k-1)) - S(k-1)` for `k >= 1`, with
    ///   `W_0(w+1) - (w+1)` when `A = 0`; absorbed at 0.
    /// * Left part, independent: `S(k) = W^-_k(S(k+1)) - S(k+1)` for
    ///   `k < A`, where `W^-` uses the negated column (its down events are
    ///   the original up-steps); the first step starts from `w`.
    ///
    /// `window = Some((lo, hi))` stops the outer chains at sites `lo` and
    /// `hi` even if they have not been absorbed.
    pub fn profile(
        &self,
        a: f64,
        v: f64,
        window: Option<(i64, i64)>,
        rng: &mut SimRng,
    ) -> Result<LocalTimeProfile, ChainError> {
        let n = self.env.n();
        let (ka, kv) = lattice_anchor(a, v, n);
        if ka > 0 {
            return Err(ChainError::Domain(format!("anchor must satisfy [2na] <= 0, got {ka}")));
        }
        if v < 0.0 {
            return Err(ChainError::Domain(format!("level must be nonnegative, got {v}")));
        }
        let (wlo, whi) = window.unwrap_or((i64::MIN, i64::MAX));
        let mut budget = TRIAL_GUARD;
        let col = |k: i64| ChainColumn::new(&self.env, k);
        let neg = |k: i64| ChainColumn::new(&self.negated, k);

        // central and right parts, sites ka..=hi
        let mut right = vec![kv];
        let mut prev = kv;
        let mut k = ka + 1;
        while k <= whi {
            let start = if k == ka + 1 { kv + 1 } else { prev };
            let w = sample_w_budgeted(&col(k - 1), start, rng, &mut budget)?;
            let s = if k <= 0 { w - start + 1 } else { w - start };
            right.push(s);
            prev = s;
            if k >= 0 && s == 0 {
                break;
            }
            k += 1;
        }

        // left part, sites below ka
        let mut left = Vec::new();
        let mut prev = kv;
        let mut k = ka - 1;
        while k >= wlo && prev > 0 {
            let s = sample_w_budgeted(&neg(k), prev, rng, &mut budget)? - prev;
            left.push(s);
            prev = s;
            k -= 1;
        }

        let lo = ka - left.len() as i64;
        let mut counts: Vec<u64> = left.into_iter().rev().collect();
        counts.extend(right);
        Ok(LocalTimeProfile::from_counts(n, ka, kv, DowncrossingCounts { lo, counts }))
    }
}

/// Convenience wrapper building a [`ChainSampler`] for one draw.
pub fn profile_via_chains(
    env: &CookieEnvironment,
    a: f64,
    v: f64,
    window: Option<(i64, i64)>,
    rng: &mut SimRng,
) -> Result<LocalTimeProfile, ChainError> {
    ChainSampler::new(env).profile(a, v, window, rng)
}

/// Monte Carlo moments of `W(m)`: the increment drift `E[W(m)] - 2m` and
/// the variance `Var[W(m)]`, with 99% half-widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncrementMoments {
    pub m: u64,
    pub reps: usize,
    pub mean_shift: f64,
    pub mean_shift_ci: f64,
    pub variance: f64,
    pub variance_ci: f64,
}

pub fn increment_moments_mc(
    col: &ChainColumn<'_>,
    m: u64,
    reps: usize,
    rng: &mut SimRng,
) -> Result<IncrementMoments, ChainError> {
    if reps < 1000 {
        return Err(ChainError::Domain(format!("need at least 1000 replicates, got {reps}")));
    }
    let mut xs = Vec::with_capacity(reps);
    for _ in 0..reps {
        xs.push(sample_w(col, m, rng)? as f64);
    }
    let MomentSummary { mean, variance, mean_ci, variance_ci, .. } = moment_summary(&xs)?;
    Ok(IncrementMoments {
        m,
        reps,
        mean_shift: mean - 2.0 * m as f64,
        mean_shift_ci: mean_ci,
        variance,
        variance_ci,
    })
}

/// CSV with columns `m,mean_shift,mean_shift_ci,variance,variance_ci`.
pub fn moments_csv(rows: &[IncrementMoments]) -> String {
    let mut out = String::from("m,mean_shift,mean_shift_ci,variance,variance_ci\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.m, r.mean_shift, r.mean_shift_ci, r.variance, r.variance_ci));
    }
    out
}
