//! Downcrossing counts, local-time profiles and the occupation identity.

use std::fmt::Write as _;

use serde::Serialize;

use super::run::{StopRule, WalkRun};
use super::WalkError;

/// `[z]`: floor toward minus infinity, used for every bracketed quantity.
#[inline]
pub fn lattice_floor(z: f64) -> i64 {
    z.floor() as i64
}

/// Lattice anchor `[2na]` and level `[nv]`.
pub fn lattice_anchor(a: f64, v: f64, n: u32) -> (i64, u64) {
    let n = f64::from(n);
    (lattice_floor(2.0 * n * a), lattice_floor(n * v).max(0) as u64)
}

/// `S(k)` for `k` in a finite window; zero outside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DowncrossingCounts {
    pub lo: i64,
    pub counts: Vec<u64>,
}

impl DowncrossingCounts {
    pub fn get(&self, k: i64) -> u64 {
        if k < self.lo {
            return 0;
        }
        self.counts.get((k - self.lo) as usize).copied().unwrap_or(0)
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.counts.len() as i64 - 1
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts.iter().enumerate().map(move |(j, &s)| (self.lo + j as i64, s))
    }
}

fn require_downcross(run: &WalkRun, a: i64, v: u64) -> Result<(), WalkError> {
    match run.stop {
        StopRule::Downcross { a: ra, v: rv } if ra == a && rv == v => {}
        other => {
            return Err(WalkError::WrongStopRule(format!(
                "expected a downcrossing run with a = {a}, v = {v}, got {other:?}"
            )))
        }
    }
    if run.censored {
        return Err(WalkError::Censored { cap: run.cap });
    }
    Ok(())
}

/// `S(k)`: number of `k -> k-1` steps strictly before the stopping time.
pub fn downcrossing_counts(run: &WalkRun, a: i64, v: u64) -> Result<DowncrossingCounts, WalkError> {
    require_downcross(run, a, v)?;
    let (lo, hi) = run.counts.visited_range();
    let counts = (lo..=hi).map(|k| run.counts.downs(k)).collect();
    Ok(DowncrossingCounts { lo, counts })
}

/// `Lambda(x) = S([2nx]) / n` on the grid `x = k / 2n`, with the edges
/// `w- = sup{k <= 0 : S(k) = 0} / 2n` and `w+ = inf{k >= [2na] : S(k) = 0} / 2n`.
///
/// The two edges are anchored differently (at 0 and at the anchor); with a
/// zero level the right edge is the anchor itself even if `S` is positive
/// above it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalTimeProfile {
    pub n: u32,
    /// Lattice anchor `[2na]`.
    pub anchor: i64,
    /// Lattice level `[nv]`.
    pub level: u64,
    pub counts: DowncrossingCounts,
    /// Grid index of `w-`.
    pub left_edge: i64,
    /// Grid index of `w+`.
    pub right_edge: i64,
}

impl LocalTimeProfile {
    /// Builds a profile from downcrossing counts, computing both edges.
    pub fn from_counts(n: u32, anchor: i64, level: u64, counts: DowncrossingCounts) -> Self {
        let mut left = 0;
        while counts.get(left) != 0 {
            left -= 1;
        }
        let mut right = anchor;
        while counts.get(right) != 0 {
            right += 1;
        }
        Self { n, anchor, level, counts, left_edge: left, right_edge: right }
    }

    #[inline]
    fn two_n(&self) -> f64 {
        2.0 * f64::from(self.n)
    }

    /// `S(k)`.
    pub fn s(&self, k: i64) -> u64 {
        self.counts.get(k)
    }

    /// `Lambda(x) = S([2nx]) / n`.
    pub fn lambda(&self, x: f64) -> f64 {
        self.s(lattice_floor(self.two_n() * x)) as f64 / f64::from(self.n)
    }

    pub fn left_edge_x(&self) -> f64 {
        self.left_edge as f64 / self.two_n()
    }

    pub fn right_edge_x(&self) -> f64 {
        self.right_edge as f64 / self.two_n()
    }

    /// Scaled occupation `sum_k S(k) / (2n^2)`, the Riemann sum of
    /// `int Lambda`.
    pub fn integral(&self) -> f64 {
        let n = f64::from(self.n);
        self.counts.total() as f64 / (2.0 * n * n)
    }

    /// `(k, x, S, Lambda)` rows over the stored window.
    pub fn rows(&self) -> impl Iterator<Item = (i64, f64, u64, f64)> + '_ {
        let n = f64::from(self.n);
        let two_n = self.two_n();
        self.counts.iter().map(move |(k, s)| (k, k as f64 / two_n, s, s as f64 / n))
    }

    /// Checks the anchor value and the absorption invariants.
    ///
    /// With a zero level both edges sit on the anchor, so absorption is
    /// checked from the first zero strictly above the anchor instead.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.s(self.anchor) != self.level {
            return Err(format!("S(anchor) = {} but level = {}", self.s(self.anchor), self.level));
        }
        let right = if self.level > 0 {
            self.right_edge
        } else {
            let mut k = self.anchor + 1;
            while self.s(k) != 0 {
                k += 1;
            }
            k
        };
        for (k, s) in self.counts.iter() {
            if s != 0 && (k >= right || k <= self.left_edge) {
                return Err(format!("S({k}) = {s} outside the edges [{}, {right}]", self.left_edge));
            }
        }
        Ok(())
    }
}

/// Profile `Lambda^(n)_{a,v}` of a run stopped at `tau_{[2na]}([nv])`.
pub fn local_time_profile(run: &WalkRun, a: f64, v: f64, n: u32) -> Result<LocalTimeProfile, WalkError> {
    let (ka, kv) = lattice_anchor(a, v, n);
    let counts = downcrossing_counts(run, ka, kv)?;
    Ok(LocalTimeProfile::from_counts(n, ka, kv, counts))
}

/// Both sides of `tau = [2na] + 2 sum_k S(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OccupationCheck {
    pub tau: u64,
    pub rhs: i64,
    pub passed: bool,
}

/// Verifies the occupation identity in integer arithmetic.
///
/// At the stopping time the walk sits on the anchor after `#up + #down`
/// steps with `#up - #down` equal to the anchor, so `tau = a + 2 #down`,
/// and `#down` is exactly `sum_k S(k)` because `S` counts every downstep
/// taken before `tau`. The same form holds for the upcrossing rule.
pub fn occupation_identity_check(run: &WalkRun) -> Result<OccupationCheck, WalkError> {
    let a = match run.stop {
        StopRule::Downcross { a, .. } | StopRule::Upcross { a, .. } => a,
        StopRule::FixedHorizon(_) => {
            return Err(WalkError::WrongStopRule("occupation identity needs a stopping-time rule".into()))
        }
    };
    if run.censored {
        return Err(WalkError::Censored { cap: run.cap });
    }
    if run.window.is_some() {
        return Err(WalkError::Windowed);
    }
    let rhs = a + 2 * run.counts.total_downs() as i64;
    Ok(OccupationCheck { tau: run.steps, rhs, passed: rhs >= 0 && rhs as u64 == run.steps })
}

/// CSV with columns `k,x,S,Lambda`.
pub fn profile_csv(profile: &LocalTimeProfile) -> String {
    let mut out = String::from("k,x,S,Lambda\n");
    for (k, x, s, l) in profile.rows() {
        let _ = writeln!(out, "{k},{x},{s},{l}");
    }
    out
}
