use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SdeError;
use crate::env::DriftField;
use crate::seed::SimRng;

/// Integration settings for one local-time profile `Lambda_{a,v}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayKnightSpec {
    pub a: f64,
    pub v: f64,
    pub dx: f64,
    /// Right end of the integration window.
    pub x_max: f64,
    /// Left end of the window; the left part is skipped when `x_min >= a`.
    pub x_min: f64,
    /// Keep every grid value (otherwise only edges, probes and integral).
    pub record: bool,
}

impl RayKnightSpec {
    pub fn new(a: f64, v: f64, dx: f64, x_max: f64) -> Self {
        Self { a, v, dx, x_max, x_min: a - x_max.max(1.0) * 2.0, record: true }
    }

    pub fn right_only(mut self) -> Self {
        self.x_min = self.a;
        self
    }

    pub fn with_x_min(mut self, x_min: f64) -> Self {
        self.x_min = x_min;
        self
    }

    pub fn streaming(mut self) -> Self {
        self.record = false;
        self
    }

    pub(crate) fn validate(&self) -> Result<(), SdeError> {
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(SdeError::Domain(format!("dx must be positive, got {}", self.dx)));
        }
        if !(self.x_max > 0.0) || self.x_max < self.a.max(0.0) {
            return Err(SdeError::Domain(format!("x_max must be positive and >= max(a, 0), got {}", self.x_max)));
        }
        if self.a > 0.0 {
            return Err(SdeError::Domain(format!("anchor must satisfy a <= 0, got {}", self.a)));
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return Err(SdeError::Domain(format!("level must be nonnegative, got {}", self.v)));
        }
        Ok(())
    }
}

/// Which equation governs a stretch of the profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// Below the anchor: drift `-2h`, absorbing.
    Left,
    /// Between the anchor and 0: drift `2(1 + h)`, floored at 0.
    Central,
    /// Above 0: drift `2h`, absorbing.
    Right,
}

/// A sampled profile. `grid`/`values` run from the left end to the right
/// end when recorded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionPath {
    pub a: f64,
    pub v: f64,
    pub dx: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Absorption coordinate above 0, if reached inside the window.
    pub w_plus: Option<f64>,
    /// Absorption coordinate of the left part, if reached inside the window.
    pub w_minus: Option<f64>,
    /// Number of central-regime steps floored at 0.
    pub clamps: u64,
    /// Trapezoidal integral of the profile over the integrated window.
    pub integral: f64,
    /// Values at the requested probe points, in request order.
    pub probes: Vec<f64>,
    /// Segments `(regime, from, to)` that were integrated.
    pub regimes: Vec<(Regime, f64, f64)>,
}

impl DiffusionPath {
    /// Linear interpolation of the recorded profile; 0 outside the support.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        if self.grid.is_empty() {
            return None;
        }
        if x < self.grid[0] || x > *self.grid.last()? {
            return Some(0.0);
        }
        let i = self.grid.partition_point(|&g| g <= x);
        if i == 0 {
            return Some(self.values[0]);
        }
        if i == self.grid.len() {
            return Some(*self.values.last()?);
        }
        let (x0, x1) = (self.grid[i - 1], self.grid[i]);
        let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
        Some(self.values[i - 1] + t * (self.values[i] - self.values[i - 1]))
    }

    /// Both edges were reached inside the window.
    pub fn is_absorbed(&self) -> bool {
        self.w_plus.is_some() && self.w_minus.is_some()
    }
}

/// `h(x, lambda)`, short-circuiting the zero field.
#[inline]
pub(crate) fn h(field: &DriftField, x: f64, lambda: f64) -> f64 {
    if field.is_zero() {
        0.0
    } else {
        field.antiderivative_unchecked(x, lambda)
    }
}

/// State of one full-truncation Euler integration along the grid.
pub(crate) struct Stepper {
    pub(crate) lambda: f64,
    pub(crate) sqrt_dx: f64,
}

impl Stepper {
    /// `lambda + 2 sqrt(lambda+) sqrt(dx) N + drift(lambda+) dx`.
    #[inline]
    pub(crate) fn step(&mut self, drift: f64, dx: f64, z: f64) -> f64 {
        let l = self.lambda.max(0.0);
        2.0 * l.sqrt() * self.sqrt_dx * z + drift * dx
    }
}

struct Recorder {
    on: bool,
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl Recorder {
    fn push(&mut self, x: f64, v: f64) {
        if self.on {
            self.grid.push(x);
            self.values.push(v);
        }
    }
}

fn probe(probes: &[f64], out: &mut [f64], x0: f64, x1: f64, v0: f64, v1: f64) {
    // each probe is read on the first segment containing it
    for (p, o) in probes.iter().zip(out.iter_mut()) {
        if o.is_nan() && *p >= x0.min(x1) && *p <= x0.max(x1) {
            let t = if x1 != x0 { (p - x0) / (x1 - x0) } else { 0.0 };
            *o = v0 + t * (v1 - v0);
        }
    }
}

fn finite(v: f64, step: u64, x: f64) -> Result<f64, SdeError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SdeError::Blowup { step, x })
    }
}

/// Integrates `Lambda_{a,v}` by full-truncation Euler:
///
/// * central regime `[a, 0]`: drift `2(1 + h(x, Lambda))`, noise
///   `2 sqrt(Lambda)`, floored at 0 (each floor counted in `clamps`);
/// * right regime `[0, x_max]`: drift `2h(x, Lambda)`, absorbed at the
///   first nonpositive value;
/// * left part `Lambda(a - y)`, `y >= 0`, from `v` with drift `-2h` and its
///   own noise, absorbed likewise, down to `x_min`.
///
/// The central stretch uses `K = round(|a|/dx)` steps of size `|a|/K` so
/// that 0 is a grid point. `probes` are read by linear interpolation and
/// are 0 past absorption or NaN outside the window.
pub fn simulate_ray_knight_probed(
    field: &DriftField,
    spec: &RayKnightSpec,
    probes: &[f64],
    rng: &mut SimRng,
) -> Result<DiffusionPath, SdeError> {
    spec.validate()?;
    let RayKnightSpec { a, v, dx, x_max, x_min, record } = *spec;
    let mut probe_out = vec![f64::NAN; probes.len()];
    let mut regimes = Vec::new();
    let mut clamps = 0;
    let mut integral = 0.0;
    let mut step_no = 0u64;

    // left part, integrated outward and reversed when recorded
    let mut left = Recorder { on: record, grid: Vec::new(), values: Vec::new() };
    let mut w_minus = None;
    if x_min < a {
        let mut st = Stepper { lambda: v, sqrt_dx: dx.sqrt() };
        let mut x = a;
        if v <= 0.0 {
            w_minus = Some(a);
        }
        while w_minus.is_none() && x - dx >= x_min - 1e-12 * dx {
            let l = st.lambda.max(0.0);
            let z: f64 = StandardNormal.sample(rng);
            let next = finite(st.lambda + st.step(-2.0 * h(field, x, l), dx, z), step_no, x)?;
            step_no += 1;
            let nx = x - dx;
            let nv = next.max(0.0);
            integral += 0.5 * dx * (st.lambda.max(0.0) + nv);
            probe(probes, &mut probe_out, x, nx, st.lambda.max(0.0), nv);
            left.push(nx, nv);
            st.lambda = next;
            x = nx;
            if next <= 0.0 {
                w_minus = Some(nx);
            }
        }
        regimes.push((Regime::Left, x, a));
    } else {
        w_minus = Some(a);
    }

    let mut right = Recorder { on: record, grid: vec![], values: vec![] };
    right.push(a, v);
    let mut st = Stepper { lambda: v, sqrt_dx: dx.sqrt() };
    // central regime
    if a < 0.0 {
        let k = ((-a) / dx).round().max(1.0) as u64;
        let h0 = -a / k as f64;
        st.sqrt_dx = h0.sqrt();
        let mut x = a;
        for i in 0..k {
            let l = st.lambda.max(0.0);
            let z: f64 = StandardNormal.sample(rng);
            let mut next = finite(st.lambda + st.step(2.0 * (1.0 + h(field, x, l)), h0, z), step_no, x)?;
            step_no += 1;
            if next < 0.0 {
                clamps += 1;
                next = 0.0;
            }
            let nx = if i + 1 == k { 0.0 } else { a + (i + 1) as f64 * h0 };
            integral += 0.5 * h0 * (l + next);
            probe(probes, &mut probe_out, x, nx, l, next);
            right.push(nx, next);
            st.lambda = next;
            x = nx;
        }
        regimes.push((Regime::Central, a, 0.0));
    }

    // right regime
    st.sqrt_dx = dx.sqrt();
    let mut w_plus = if st.lambda <= 0.0 { Some(0.0) } else { None };
    let mut x = 0.0;
    let mut k = 0u64;
    while w_plus.is_none() && x + dx <= x_max + 1e-12 * dx {
        let l = st.lambda.max(0.0);
        let z: f64 = StandardNormal.sample(rng);
        let next = finite(st.lambda + st.step(2.0 * h(field, x, l), dx, z), step_no, x)?;
        step_no += 1;
        k += 1;
        let nx = k as f64 * dx;
        let nv = next.max(0.0);
        integral += 0.5 * dx * (l + nv);
        probe(probes, &mut probe_out, x, nx, l, nv);
        right.push(nx, nv);
        st.lambda = next;
        x = nx;
        if next <= 0.0 {
            w_plus = Some(nx);
        }
    }
    regimes.push((Regime::Right, 0.0, x));

    // probes beyond absorption read 0, probes outside the window NaN
    for (p, o) in probes.iter().zip(probe_out.iter_mut()) {
        if o.is_nan() {
            let past_right = w_plus.is_some_and(|w| *p >= w) && *p <= x_max;
            let past_left = w_minus.is_some_and(|w| *p <= w) && *p >= x_min;
            if past_right || past_left || (*p == a) {
                *o = if *p == a { v } else { 0.0 };
            }
        }
    }

    let mut grid: Vec<f64> = left.grid.into_iter().rev().collect();
    let mut values: Vec<f64> = left.values.into_iter().rev().collect();
    grid.extend(right.grid);
    values.extend(right.values);
    Ok(DiffusionPath { a, v, dx, grid, values, w_plus, w_minus, clamps, integral, probes: probe_out, regimes })
}

/// Recorded profile over `[a - 2 max(x_max, 1), x_max]`.
pub fn simulate_ray_knight(
    field: &DriftField,
    a: f64,
    v: f64,
    dx: f64,
    x_max: f64,
    rng: &mut SimRng,
) -> Result<DiffusionPath, SdeError> {
    simulate_ray_knight_probed(field, &RayKnightSpec::new(a, v, dx, x_max), &[], rng)
}

/// `tau_a(v) = int Lambda`, from a path whose both edges were absorbed.
pub fn inverse_local_time(path: &DiffusionPath) -> Result<f64, SdeError> {
    if !path.is_absorbed() {
        return Err(SdeError::Censored { integral_so_far: path.integral });
    }
    Ok(path.integral)
}

/// CSV with columns `x,Lambda`.
pub fn path_csv(path: &DiffusionPath) -> String {
    let mut out = String::from("x,Lambda\n");
    for (x, l) in path.grid.iter().zip(&path.values) {
        out.push_str(&format!("{x},{l}\n"));
    }
    out
}
