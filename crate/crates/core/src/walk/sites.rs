//! Per-site visit and downstep counters on a growable dense lattice window.

/// Visit and downstep counts per site.
///
/// Storage is a contiguous window that doubles in the needed direction, so
/// transient runs never overflow and recurrent runs stay cache friendly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteCounts {
    origin: i64,
    visits: Vec<u64>,
    downs: Vec<u64>,
    lo: i64,
    hi: i64,
}

impl Default for SiteCounts {
    fn default() -> Self {
        Self::new()
    }
}

impl SiteCounts {
    pub fn new() -> Self {
        Self::with_span(-64, 64)
    }

    /// Preallocates sites `lo..hi`.
    pub fn with_span(lo: i64, hi: i64) -> Self {
        let len = (hi - lo).max(1) as usize;
        Self { origin: lo, visits: vec![0; len], downs: vec![0; len], lo: 0, hi: 0 }
    }

    /// Storage slot of `site`, growing the window if needed.
    #[inline]
    pub(crate) fn slot(&mut self, site: i64) -> usize {
        let off = site - self.origin;
        if off < 0 || off as usize >= self.visits.len() {
            self.grow_to(site);
        }
        (site - self.origin) as usize
    }

    #[cold]
    fn grow_to(&mut self, site: i64) {
        let len = self.visits.len() as i64;
        if site < self.origin {
            let extra = (self.origin - site).max(len) as usize;
            let mut v = vec![0; extra];
            v.extend_from_slice(&self.visits);
            self.visits = v;
            let mut d = vec![0; extra];
            d.extend_from_slice(&self.downs);
            self.downs = d;
            self.origin -= extra as i64;
        } else {
            let need = (site - self.origin + 1).max(2 * len) as usize;
            self.visits.resize(need, 0);
            self.downs.resize(need, 0);
        }
    }

    #[inline]
    pub(crate) fn add_visit_at(&mut self, slot: usize, site: i64) {
        self.visits[slot] += 1;
        if site < self.lo {
            self.lo = site;
        } else if site > self.hi {
            self.hi = site;
        }
    }

    #[inline]
    pub(crate) fn visits_at(&self, slot: usize) -> u64 {
        self.visits[slot]
    }

    #[inline]
    pub(crate) fn downs_at(&self, slot: usize) -> u64 {
        self.downs[slot]
    }

    #[inline]
    pub(crate) fn add_down_at(&mut self, slot: usize) {
        self.downs[slot] += 1;
    }

    fn get(&self, v: &[u64], site: i64) -> u64 {
        let off = site - self.origin;
        if off < 0 {
            return 0;
        }
        v.get(off as usize).copied().unwrap_or(0)
    }

    /// Number of visits to `site` (time 0 counts as a visit to 0).
    pub fn visits(&self, site: i64) -> u64 {
        self.get(&self.visits, site)
    }

    /// Number of `site -> site - 1` steps taken.
    pub fn downs(&self, site: i64) -> u64 {
        self.get(&self.downs, site)
    }

    /// Smallest and largest visited sites.
    pub fn visited_range(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    /// `(site, visits, downs)` over the visited range.
    pub fn iter(&self) -> impl Iterator<Item = (i64, u64, u64)> + '_ {
        (self.lo..=self.hi).map(move |k| (k, self.visits(k), self.downs(k)))
    }

    pub fn total_visits(&self) -> u64 {
        self.visits.iter().sum()
    }

    pub fn total_downs(&self) -> u64 {
        self.downs.iter().sum()
    }
}
