//! The walk itself: step rule, stopping rules and censoring.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::sites::SiteCounts;
use super::{DowncrossingCounts, WalkError};
use crate::env::CookieEnvironment;
use crate::seed::{rng_from_seed, SimRng};

/// Default censoring cap for the stopping-time rules.
pub const DEFAULT_CAP: u64 = 100_000_000;

/// When a run ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Run exactly `T` steps.
    FixedHorizon(u64),
    /// Stop at the time of the `(v+1)`-th step `a -> a-1`.
    Downcross { a: i64, v: u64 },
    /// Stop at the time of the `(v+1)`-th step `a -> a+1`.
    Upcross { a: i64, v: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkOptions {
    /// Maximum number of steps; a stopping rule not met by then censors.
    pub cap: u64,
    pub record_path: bool,
    /// Inclusive site window `[lo, hi]`. Excursions above `hi` and below
    /// `lo` are collapsed: the walk is put straight back on the boundary
    /// site, which receives a new visit. The law of the counts inside the
    /// window is unchanged whenever those excursions return, but `steps`
    /// no longer measures time.
    pub window: Option<(i64, i64)>,
}

impl Default for WalkOptions {
    fn default() -> Self {
        Self { cap: DEFAULT_CAP, record_path: false, window: None }
    }
}

impl WalkOptions {
    pub fn with_cap(cap: u64) -> Self {
        Self { cap, ..Self::default() }
    }

    pub fn recording(mut self) -> Self {
        self.record_path = true;
        self
    }

    pub fn windowed(mut self, lo: i64, hi: i64) -> Self {
        self.window = Some((lo, hi));
        self
    }
}

/// Outcome of one walk.
#[derive(Debug, Clone)]
pub struct WalkRun {
    pub stop: StopRule,
    /// Number of steps taken; equals the stopping time when the rule fired.
    pub steps: u64,
    /// Position at the end of the run.
    pub position: i64,
    /// Set when the cap was hit before the rule fired.
    pub censored: bool,
    pub cap: u64,
    pub counts: SiteCounts,
    /// `X(0..=steps)` when recording was requested.
    pub path: Option<Vec<i64>>,
    pub seed: Option<u64>,
    pub window: Option<(i64, i64)>,
    /// Number of excursions removed by the window.
    pub collapsed: u64,
}

impl WalkRun {
    /// Number of visits to `site` up to the end of the run.
    pub fn visits(&self, site: i64) -> u64 {
        self.counts.visits(site)
    }
}

/// Incremental walker used by every sampler in this module.
pub(crate) struct Walker<'a> {
    env: &'a CookieEnvironment,
    pub(crate) counts: SiteCounts,
    pub(crate) x: i64,
    slot: usize,
    pub(crate) steps: u64,
}

impl<'a> Walker<'a> {
    pub(crate) fn new(env: &'a CookieEnvironment) -> Self {
        let mut counts = SiteCounts::new();
        let slot = counts.slot(0);
        counts.add_visit_at(slot, 0);
        Self { env, counts, x: 0, slot, steps: 0 }
    }

    #[inline]
    fn current_visit(&self) -> u64 {
        self.counts.visits_at(self.slot)
    }

    /// Draws the direction of the next step from the current site.
    #[inline]
    pub(crate) fn draw_up<R: RngCore>(&self, rng: &mut R) -> bool {
        rng.next_u64() < self.env.up_threshold(self.current_visit(), self.x)
    }

    #[inline]
    fn move_to(&mut self, y: i64) {
        self.x = y;
        self.slot = self.counts.slot(y);
        self.counts.add_visit_at(self.slot, y);
        self.steps += 1;
    }

    #[inline]
    pub(crate) fn step_up(&mut self) {
        self.move_to(self.x + 1);
    }

    #[inline]
    pub(crate) fn step_down(&mut self) {
        self.counts.add_down_at(self.slot);
        self.move_to(self.x - 1);
    }

    /// Records a collapsed excursion: the boundary site gets a new visit.
    #[inline]
    fn bounce(&mut self, down: bool) {
        if down {
            self.counts.add_down_at(self.slot);
        }
        self.counts.add_visit_at(self.slot, self.x);
        self.steps += 2;
    }

    /// Takes `k` free steps.
    pub(crate) fn run_steps<R: RngCore>(&mut self, k: u64, rng: &mut R) {
        for _ in 0..k {
            if self.draw_up(rng) {
                self.step_up();
            } else {
                self.step_down();
            }
        }
    }

    /// Moves in direction `up`, bouncing at the window edges; true on a
    /// bounce.
    #[inline]
    fn advance(&mut self, up: bool, wlo: i64, whi: i64) -> bool {
        if up {
            if self.x == whi {
                self.bounce(false);
                return true;
            }
            self.step_up();
        } else {
            if self.x == wlo {
                self.bounce(true);
                return true;
            }
            self.step_down();
        }
        false
    }

    fn ups_here(&self) -> u64 {
        // departures so far exclude the current visit
        self.current_visit() - 1 - self.counts.downs_at(self.slot)
    }
}

/// Runs the walk in `env` until `stop` fires or the cap is reached.
pub fn simulate_walk(env: &CookieEnvironment, stop: StopRule, opts: &WalkOptions, rng: &mut SimRng) -> WalkRun {
    let mut w = Walker::new(env);
    let (wlo, whi) = opts.window.unwrap_or((i64::MIN, i64::MAX));
    let mut path = opts.record_path.then(|| vec![0i64]);
    let mut collapsed = 0;
    let limit = match stop {
        StopRule::FixedHorizon(t) => t.min(opts.cap),
        _ => opts.cap,
    };
    let mut fired = false;
    while w.steps < limit {
        let up = w.draw_up(rng);
        match stop {
            StopRule::Downcross { a, v } if !up && w.x == a && w.counts.downs_at(w.slot) == v => {
                fired = true;
                break;
            }
            StopRule::Upcross { a, v } if up && w.x == a && w.ups_here() == v => {
                fired = true;
                break;
            }
            _ => {}
        }
        collapsed += u64::from(w.advance(up, wlo, whi));
        if let Some(p) = path.as_mut() {
            p.push(w.x);
        }
    }
    let censored = match stop {
        StopRule::FixedHorizon(t) => w.steps < t,
        _ => !fired,
    };
    WalkRun {
        stop,
        steps: w.steps,
        position: w.x,
        censored,
        cap: opts.cap,
        counts: w.counts,
        path,
        seed: None,
        window: opts.window,
        collapsed,
    }
}

/// Downcrossing counts at `tau_a(v)` for each of the increasing levels
/// `levels`, all read off one run. Windowing is as in [`simulate_walk`].
pub fn multi_level_downcrossings(
    env: &CookieEnvironment,
    a: i64,
    levels: &[u64],
    opts: &WalkOptions,
    rng: &mut SimRng,
) -> Result<Vec<DowncrossingCounts>, WalkError> {
    if levels.windows(2).any(|w| w[0] > w[1]) {
        return Err(WalkError::Domain("levels must be nondecreasing".into()));
    }
    let mut w = Walker::new(env);
    let (wlo, whi) = opts.window.unwrap_or((i64::MIN, i64::MAX));
    let mut out = Vec::with_capacity(levels.len());
    let snapshot = |w: &Walker<'_>| {
        let (lo, hi) = w.counts.visited_range();
        DowncrossingCounts { lo, counts: (lo..=hi).map(|k| w.counts.downs(k)).collect() }
    };
    while out.len() < levels.len() {
        if w.steps >= opts.cap {
            return Err(WalkError::Censored { cap: opts.cap });
        }
        let up = w.draw_up(rng);
        if !up && w.x == a {
            let here = w.counts.downs_at(w.slot);
            while out.len() < levels.len() && levels[out.len()] == here {
                out.push(snapshot(&w));
            }
            if out.len() == levels.len() {
                break;
            }
        }
        w.advance(up, wlo, whi);
    }
    Ok(out)
}

/// Same as [`simulate_walk`] with a fresh generator built from `seed`,
/// which is recorded in the run.
pub fn simulate_walk_seeded(env: &CookieEnvironment, stop: StopRule, opts: &WalkOptions, seed: u64) -> WalkRun {
    let mut rng = rng_from_seed(seed);
    let mut run = simulate_walk(env, stop, opts, &mut rng);
    run.seed = Some(seed);
    run
}
