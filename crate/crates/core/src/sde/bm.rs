use rand_distr::{Distribution, Exp, StandardNormal};
use serde::Serialize;

use super::SdeError;
use crate::env::DriftField;
use crate::seed::SimRng;

/// Positions beyond this are treated as a blowup.
pub const BLOWUP_RADIUS: f64 = 1e6;

/// Occupation time per spatial bin `round(y / delta)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationBins {
    pub delta: f64,
    lo: i64,
    time: Vec<f64>,
}

impl OccupationBins {
    pub fn new(delta: f64) -> Self {
        Self { delta, lo: 0, time: vec![0.0] }
    }

    #[inline]
    pub fn bin(&self, y: f64) -> i64 {
        (y / self.delta).round() as i64
    }

    #[inline]
    fn slot(&mut self, b: i64) -> usize {
        if b < self.lo {
            let grow = ((self.lo - b) as usize).max(self.time.len());
            let mut t = vec![0.0; grow];
            t.append(&mut self.time);
            self.time = t;
            self.lo -= grow as i64;
        }
        let i = (b - self.lo) as usize;
        if i >= self.time.len() {
            let new_len = (i + 1).max(2 * self.time.len());
            self.time.resize(new_len, 0.0);
        }
        i
    }

    /// Mollified local time `time in bin / delta` at `y`.
    pub fn local_time(&self, y: f64) -> f64 {
        let b = self.bin(y);
        if b < self.lo {
            return 0.0;
        }
        self.time.get((b - self.lo) as usize).map_or(0.0, |t| t / self.delta)
    }

    /// `sum over bins of L^ delta`, the total elapsed time.
    pub fn total_mass(&self) -> f64 {
        self.time.iter().sum()
    }

    /// Nonzero bins as `(bin center, local time)`.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.time
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > 0.0)
            .map(|(i, &t)| ((self.lo + i as i64) as f64 * self.delta, t / self.delta))
    }
}

/// Settings for the excited Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BmSpec {
    pub t_end: f64,
    pub dt: f64,
    pub delta: f64,
    pub record: bool,
}

impl BmSpec {
    pub fn new(t_end: f64, dt: f64, delta: f64) -> Self {
        Self { t_end, dt, delta, record: true }
    }

    pub fn streaming(mut self) -> Self {
        self.record = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BmPath {
    pub dt: f64,
    pub t_end: f64,
    /// `Y(k dt)`, then `Y(t_end)`, when recorded.
    pub positions: Vec<f64>,
    pub final_position: f64,
    pub bins: OccupationBins,
}

/// Euler-Maruyama for `dY = dB + phi(Y, L) dt` where `L` is the mollified
/// local time at the current position: the time already spent in the bin
/// of `Y`, divided by `delta`. The drift is evaluated before the current
/// step is added to the bin. A last partial step reaches `t_end` exactly.
pub fn simulate_excited_bm(field: &DriftField, spec: &BmSpec, rng: &mut SimRng) -> Result<BmPath, SdeError> {
    let BmSpec { t_end, dt, delta, record } = *spec;
    if !(dt > 0.0 && delta > 0.0 && t_end >= 0.0) || !t_end.is_finite() {
        return Err(SdeError::Domain(format!("need dt > 0, delta > 0, T >= 0; got {dt}, {delta}, {t_end}")));
    }
    let full = (t_end / dt).floor() as u64;
    let rest = t_end - full as f64 * dt;
    let mut bins = OccupationBins::new(delta);
    let mut y = 0.0;
    let mut positions = if record { Vec::with_capacity(full as usize + 2) } else { Vec::new() };
    if record {
        positions.push(y);
    }
    let zero = field.is_zero();
    let step = |y: f64, h: f64, bins: &mut OccupationBins, rng: &mut SimRng| {
        let b = bins.bin(y);
        let i = bins.slot(b);
        let drift = if zero { 0.0 } else { field.eval(y, bins.time[i] / delta) };
        bins.time[i] += h;
        let z: f64 = StandardNormal.sample(rng);
        y + drift * h + h.sqrt() * z
    };
    for k in 0..full {
        y = step(y, dt, &mut bins, rng);
        if !(y.abs() < BLOWUP_RADIUS) {
            return Err(SdeError::Blowup { step: k, x: y });
        }
        if record {
            positions.push(y);
        }
    }
    if rest > 1e-12 * dt {
        y = step(y, rest, &mut bins, rng);
        if !(y.abs() < BLOWUP_RADIUS) {
            return Err(SdeError::Blowup { step: full, x: y });
        }
        if record {
            positions.push(y);
        }
    }
    Ok(BmPath { dt, t_end, positions, final_position: y, bins })
}

/// `Y(gamma)` for `gamma` exponential with the given rate, from a fresh
/// path run to `gamma`.
pub fn sample_at_exponential_time(
    field: &DriftField,
    rate: f64,
    dt: f64,
    delta: f64,
    rng: &mut SimRng,
) -> Result<f64, SdeError> {
    let exp = Exp::new(rate).map_err(|e| SdeError::Domain(format!("rate must be positive: {e}")))?;
    if !(rate > 0.0) {
        return Err(SdeError::Domain(format!("rate must be positive, got {rate}")));
    }
    let gamma = exp.sample(rng);
    Ok(simulate_excited_bm(field, &BmSpec::new(gamma, dt, delta).streaming(), rng)?.final_position)
}

/// CSV with columns `t,Y`.
pub fn bm_csv(path: &BmPath) -> String {
    let mut out = String::from("t,Y\n");
    let n = path.positions.len();
    for (k, y) in path.positions.iter().enumerate() {
        let t = if k + 1 == n { path.t_end } else { k as f64 * path.dt };
        out.push_str(&format!("{t},{y}\n"));
    }
    out
}
