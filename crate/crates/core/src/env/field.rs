//! Drift fields `phi(x, l)` and their local-time antiderivatives.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::quadrature::adaptive_simpson_split;
use super::EnvError;

/// Absolute tolerance used when an antiderivative has to be integrated.
pub const ANTIDERIVATIVE_TOL: f64 = 1e-10;

/// Piecewise-linear table with constant extension beyond the end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, EnvError> {
        if knots.is_empty() {
            return Err(EnvError::InvalidField("piecewise-linear table needs at least one knot".into()));
        }
        if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(EnvError::InvalidField("table knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(EnvError::InvalidField("table abscissae must be strictly increasing".into()));
        }
        let (xs, ys) = knots.into_iter().unzip();
        Ok(Self { xs, ys })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn first_x(&self) -> f64 {
        self.xs[0]
    }

    pub fn last_x(&self) -> f64 {
        *self.xs.last().expect("nonempty")
    }

    pub fn last_y(&self) -> f64 {
        *self.ys.last().expect("nonempty")
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.xs.len();
        if t <= self.xs[0] {
            return self.ys[0];
        }
        if t >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        // first knot strictly greater than t
        let j = self.xs.partition_point(|&x| x <= t);
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        let (y0, y1) = (self.ys[j - 1], self.ys[j]);
        y0 + (y1 - y0) * (t - x0) / (x1 - x0)
    }

    /// Exact integral of the table over `[0, t]` for `t >= 0`.
    pub fn integral_from_zero(&self, t: f64) -> f64 {
        self.integral_to(t) - self.integral_to(0.0)
    }

    // Integral over (-inf, t] relative to the first knot, with the constant
    // left extension folded in.
    fn integral_to(&self, t: f64) -> f64 {
        let x0 = self.xs[0];
        if t <= x0 {
            return self.ys[0] * (t - x0);
        }
        let mut acc = 0.0;
        for j in 1..self.xs.len() {
            let (a, b) = (self.xs[j - 1], self.xs[j]);
            if t <= a {
                return acc;
            }
            let hi = t.min(b);
            let ya = self.ys[j - 1];
            let yh = ya + (self.ys[j] - ya) * (hi - a) / (b - a);
            acc += 0.5 * (ya + yh) * (hi - a);
            if t <= b {
                return acc;
            }
        }
        acc + self.last_y() * (t - self.last_x())
    }

    pub fn sup_abs(&self) -> f64 {
        self.ys.iter().fold(0.0, |m, y| m.max(y.abs()))
    }

    pub fn max_slope(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.ys.iter().all(|&y| y >= 0.0)
    }
}

impl TryFrom<Vec<(f64, f64)>> for PiecewiseLinear {
    type Error = EnvError;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<PiecewiseLinear> for Vec<(f64, f64)> {
    fn from(p: PiecewiseLinear) -> Self {
        p.xs.into_iter().zip(p.ys).collect()
    }
}

/// User-supplied evaluator `phi(x, l)`.
pub type FieldFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Constant(f64),
    /// `value` on `[lo, hi)` in the local-time variable, zero elsewhere.
    Indicator { value: f64, lo: f64, hi: f64 },
    Table(PiecewiseLinear),
    /// `space(x) * local(l)`.
    Product { space: PiecewiseLinear, local: PiecewiseLinear },
    Custom { f: FieldFn, homogeneous: bool, nonnegative: bool, tail_start: Option<f64> },
}

/// A bounded drift field `phi(x, l)` of position and local time.
///
/// Cheap to clone; the evaluator is shared.
#[derive(Clone)]
pub struct DriftField {
    shape: Shape,
    support_radius: Option<f64>,
    bound: f64,
    lipschitz: f64,
}

impl fmt::Debug for DriftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.shape {
            Shape::Constant(c) => format!("constant({c})"),
            Shape::Indicator { value, lo, hi } => format!("indicator({value} on [{lo},{hi}))"),
            Shape::Table(_) => "piecewise-linear".to_string(),
            Shape::Product { .. } => "product".to_string(),
            Shape::Custom { .. } => "custom".to_string(),
        };
        f.debug_struct("DriftField")
            .field("kind", &kind)
            .field("support_radius", &self.support_radius)
            .field("bound", &self.bound)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl DriftField {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self { shape: Shape::Constant(c), support_radius: None, bound: c.abs(), lipschitz: 0.0 }
    }

    /// `value * 1[lo <= l < hi]`. The jump makes the field non-Lipschitz;
    /// `lipschitz()` reports infinity.
    pub fn indicator(value: f64, lo: f64, hi: f64) -> Result<Self, EnvError> {
        if !(lo < hi) || !value.is_finite() || lo < 0.0 {
            return Err(EnvError::InvalidField(format!(
                "indicator needs finite value and 0 <= lo < hi, got value={value}, lo={lo}, hi={hi}"
            )));
        }
        let lipschitz = if value == 0.0 { 0.0 } else { f64::INFINITY };
        Ok(Self {
            shape: Shape::Indicator { value, lo, hi },
            support_radius: None,
            bound: value.abs(),
            lipschitz,
        })
    }

    pub fn piecewise_linear(table: PiecewiseLinear) -> Self {
        let bound = table.sup_abs();
        let lipschitz = table.max_slope();
        Self { shape: Shape::Table(table), support_radius: None, bound, lipschitz }
    }

    /// Non-homogeneous product field `space(x) * local(l)`.
    pub fn product(space: PiecewiseLinear, local: PiecewiseLinear) -> Self {
        let bound = space.sup_abs() * local.sup_abs();
        let lipschitz = space.sup_abs() * local.max_slope();
        Self { shape: Shape::Product { space, local }, support_radius: None, bound, lipschitz }
    }

    /// Arbitrary evaluator. `bound` and `lipschitz` are taken on trust and
    /// checked only by sampling in tests; `tail_start`, when known, is a
    /// local time beyond which the field no longer changes in `l`.
    pub fn custom(
        f: FieldFn,
        bound: f64,
        lipschitz: f64,
        homogeneous: bool,
        nonnegative: bool,
        tail_start: Option<f64>,
    ) -> Self {
        Self {
            shape: Shape::Custom { f, homogeneous, nonnegative, tail_start },
            support_radius: None,
            bound,
            lipschitz,
        }
    }

    /// Restricts the field to `|x| < radius` (zero outside).
    pub fn with_support_radius(mut self, radius: f64) -> Result<Self, EnvError> {
        if !(radius > 0.0) {
            return Err(EnvError::InvalidField(format!("support radius must be positive, got {radius}")));
        }
        self.support_radius = Some(radius);
        Ok(self)
    }

    pub fn support_radius(&self) -> Option<f64> {
        self.support_radius
    }

    /// `M = sup |phi|`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Lipschitz constant in the local-time argument.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn is_homogeneous(&self) -> bool {
        if self.support_radius.is_some() {
            return false;
        }
        match &self.shape {
            Shape::Product { .. } => false,
            Shape::Custom { homogeneous, .. } => *homogeneous,
            _ => true,
        }
    }

    /// True when `phi(x, l)` does not depend on `x` inside the support
    /// radius (the radius itself is ignored).
    pub fn is_homogeneous_in_support(&self) -> bool {
        match &self.shape {
            Shape::Product { .. } => false,
            Shape::Custom { homogeneous, .. } => *homogeneous,
            _ => true,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.bound == 0.0
    }

    pub fn is_nonnegative(&self) -> bool {
        match &self.shape {
            Shape::Constant(c) => *c >= 0.0,
            Shape::Indicator { value, .. } => *value >= 0.0,
            Shape::Table(t) => t.is_nonnegative(),
            Shape::Product { space, local } => {
                (space.is_nonnegative() && local.is_nonnegative())
                    || (space.knots().all(|(_, y)| y <= 0.0) && local.knots().all(|(_, y)| y <= 0.0))
            }
            Shape::Custom { nonnegative, .. } => *nonnegative,
        }
    }

    /// Local time beyond which `phi(x, .)` is constant, if known.
    pub fn tail_start(&self) -> Option<f64> {
        match &self.shape {
            Shape::Constant(_) => Some(0.0),
            Shape::Indicator { hi, .. } => Some(*hi),
            Shape::Table(t) => Some(t.last_x().max(0.0)),
            Shape::Product { local, .. } => Some(local.last_x().max(0.0)),
            Shape::Custom { tail_start, .. } => *tail_start,
        }
    }

    /// Value of the field beyond `tail_start` for a homogeneous field.
    fn tail_value(&self) -> Option<f64> {
        match &self.shape {
            Shape::Constant(c) => Some(*c),
            Shape::Indicator { .. } => Some(0.0),
            Shape::Table(t) => Some(t.last_y()),
            Shape::Custom { f, tail_start: Some(t), .. } => Some(f(0.0, *t)),
            _ => None,
        }
    }

    /// True when `phi(x, .)` vanishes for large local time at every `x`.
    pub fn has_compact_local_support(&self) -> bool {
        match &self.shape {
            Shape::Product { local, .. } => local.last_y() == 0.0,
            _ => self.tail_value() == Some(0.0),
        }
    }

    #[inline]
    pub fn in_support(&self, x: f64) -> bool {
        match self.support_radius {
            Some(r) => x.abs() < r,
            None => true,
        }
    }

    /// Evaluates `phi(x, l)`.
    #[inline]
    pub fn eval(&self, x: f64, l: f64) -> f64 {
        if !self.in_support(x) {
            return 0.0;
        }
        self.eval_unrestricted(x, l)
    }

    #[inline]
    fn eval_unrestricted(&self, x: f64, l: f64) -> f64 {
        match &self.shape {
            Shape::Constant(c) => *c,
            Shape::Indicator { value, lo, hi } => {
                if l >= *lo && l < *hi {
                    *value
                } else {
                    0.0
                }
            }
            Shape::Table(t) => t.eval(l),
            Shape::Product { space, local } => space.eval(x) * local.eval(l),
            Shape::Custom { f, .. } => f(x, l),
        }
    }

    /// Evaluates the homogeneous part `phi(l)`; for x-dependent fields this
    /// is `phi(0, l)`.
    #[inline]
    pub fn eval_local(&self, l: f64) -> f64 {
        self.eval(0.0, l)
    }

    /// `h(x, lambda) = int_0^lambda phi(x, mu) dmu`, closed form when the
    /// shape allows it, adaptive quadrature otherwise.
    pub fn antiderivative(&self, x: f64, lambda: f64) -> Result<f64, EnvError> {
        if !(lambda >= 0.0) {
            return Err(EnvError::Domain(format!("antiderivative needs lambda >= 0, got {lambda}")));
        }
        Ok(self.antiderivative_unchecked(x, lambda))
    }

    /// Same as [`antiderivative`](Self::antiderivative) without the domain
    /// check; negative `lambda` is treated as zero. Used in inner SDE loops.
    #[inline]
    pub fn antiderivative_unchecked(&self, x: f64, lambda: f64) -> f64 {
        let lambda = lambda.max(0.0);
        if !self.in_support(x) {
            return 0.0;
        }
        match &self.shape {
            Shape::Constant(c) => c * lambda,
            Shape::Indicator { value, lo, hi } => value * (lambda.min(*hi) - lo).max(0.0),
            Shape::Table(t) => t.integral_from_zero(lambda),
            Shape::Product { space, local } => space.eval(x) * local.integral_from_zero(lambda),
            Shape::Custom { .. } => self.antiderivative_by_quadrature(x, lambda),
        }
    }

    /// Adaptive-Simpson evaluation of `h(x, lambda)` regardless of shape.
    pub fn antiderivative_by_quadrature(&self, x: f64, lambda: f64) -> f64 {
        let breaks = self.local_breakpoints();
        adaptive_simpson_split(&|l| self.eval(x, l), 0.0, lambda, &breaks, ANTIDERIVATIVE_TOL)
    }

    /// Local-time abscissae where the field has kinks or jumps.
    pub fn local_breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Indicator { lo, hi, .. } => vec![*lo, *hi],
            Shape::Table(t) => t.knots().map(|(x, _)| x).collect(),
            Shape::Product { local, .. } => local.knots().map(|(x, _)| x).collect(),
            Shape::Custom { tail_start: Some(t), .. } => vec![*t],
            _ => Vec::new(),
        }
    }

    /// `delta = int_0^inf phi(l) dl` for a homogeneous field. Infinite when
    /// the tail value is nonzero; `None` when the tail is unknown.
    pub fn total_drift(&self) -> Option<f64> {
        self.total_drift_at(0.0)
    }

    /// `delta^x(phi) = int_0^inf phi(x, l) dl`.
    pub fn total_drift_at(&self, x: f64) -> Option<f64> {
        let t = self.tail_start()?;
        let tail = if !self.in_support(x) {
            0.0
        } else {
            match &self.shape {
                Shape::Product { space, local } => space.eval(x) * local.last_y(),
                _ => self.tail_value()?,
            }
        };
        if tail != 0.0 {
            return Some(tail.signum() * f64::INFINITY);
        }
        Some(self.antiderivative_unchecked(x, t))
    }

    /// Field with every value negated.
    pub fn negated(&self) -> Self {
        let shape = match &self.shape {
            Shape::Constant(c) => Shape::Constant(-c),
            Shape::Indicator { value, lo, hi } => Shape::Indicator { value: -value, lo: *lo, hi: *hi },
            Shape::Table(t) => Shape::Table(PiecewiseLinear {
                xs: t.xs.clone(),
                ys: t.ys.iter().map(|y| -y).collect(),
            }),
            Shape::Product { space, local } => Shape::Product {
                space: PiecewiseLinear { xs: space.xs.clone(), ys: space.ys.iter().map(|y| -y).collect() },
                local: local.clone(),
            },
            Shape::Custom { f, homogeneous, nonnegative: _, tail_start } => {
                let g = f.clone();
                Shape::Custom {
                    f: Arc::new(move |x, l| -g(x, l)),
                    homogeneous: *homogeneous,
                    nonnegative: false,
                    tail_start: *tail_start,
                }
            }
        };
        Self { shape, ..self.clone() }
    }
}

/// Serializable description of a drift field, as found in experiment
/// configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldShapeSpec {
    Constant { value: f64 },
    Indicator {
        #[serde(default = "one")]
        value: f64,
        #[serde(default)]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
    },
    PiecewiseLinear { knots: PiecewiseLinear },
    Product { space: PiecewiseLinear, local: PiecewiseLinear },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    #[serde(flatten)]
    pub shape: FieldShapeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_radius: Option<f64>,
}

impl DriftSpec {
    pub fn constant(value: f64) -> Self {
        Self { shape: FieldShapeSpec::Constant { value }, support_radius: None }
    }

    pub fn indicator(value: f64, lo: f64, hi: f64) -> Self {
        Self { shape: FieldShapeSpec::Indicator { value, lo, hi }, support_radius: None }
    }

    pub fn build(&self) -> Result<DriftField, EnvError> {
        let field = match &self.shape {
            FieldShapeSpec::Constant { value } => DriftField::constant(*value),
            FieldShapeSpec::Indicator { value, lo, hi } => DriftField::indicator(*value, *lo, *hi)?,
            FieldShapeSpec::PiecewiseLinear { knots } => DriftField::piecewise_linear(knots.clone()),
            FieldShapeSpec::Product { space, local } => DriftField::product(space.clone(), local.clone()),
        };
        match self.support_radius {
            Some(r) => field.with_support_radius(r),
            None => Ok(field),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tent() -> DriftField {
        DriftField::piecewise_linear(PiecewiseLinear::new(vec![(0.0, 0.0), (1.0, 2.0), (3.0, 0.0)]).unwrap())
    }

    #[test]
    fn constant_antiderivative() {
        let f = DriftField::constant(0.7);
        assert!((f.antiderivative(0.0, 2.0).unwrap() - 1.4).abs() < 1e-15);
        assert_eq!(DriftField::zero().antiderivative(5.0, 11.0).unwrap(), 0.0);
    }

    #[test]
    fn indicator_antiderivative_by_hand() {
        let f = DriftField::indicator(1.0, 0.0, 1.0).unwrap();
        assert_eq!(f.antiderivative(0.0, 3.0).unwrap(), 1.0);
        assert_eq!(f.antiderivative(0.0, 0.25).unwrap(), 0.25);
        assert!((f.antiderivative_by_quadrature(0.0, 3.0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn negative_lambda_is_a_domain_error() {
        let f = DriftField::constant(1.0);
        assert!(matches!(f.antiderivative(0.0, -0.1), Err(EnvError::Domain(_))));
    }

    #[test]
    fn table_integral_matches_quadrature() {
        let f = tent();
        for &l in &[0.0, 0.5, 1.0, 2.2, 3.0, 7.5] {
            let exact = f.antiderivative(0.0, l).unwrap();
            let quad = f.antiderivative_by_quadrature(0.0, l);
            assert!((exact - quad).abs() < 1e-9, "l={l}: {exact} vs {quad}");
        }
        assert_eq!(f.total_drift(), Some(3.0));
    }

    #[test]
    fn table_with_leading_knot_after_zero() {
        let t = PiecewiseLinear::new(vec![(0.5, 1.0), (1.5, 0.0)]).unwrap();
        let f = DriftField::piecewise_linear(t);
        // constant 1 on [0, 0.5], then a ramp down to zero at 1.5
        assert!((f.antiderivative(0.0, 2.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn custom_fields_use_quadrature() {
        let f = DriftField::custom(Arc::new(|_, l: f64| (-l).exp()), 1.0, 1.0, true, true, None);
        let h = f.antiderivative(0.0, 2.0).unwrap();
        assert!((h - (1.0 - (-2f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn support_radius_restricts() {
        let f = DriftField::constant(1.0).with_support_radius(0.5).unwrap();
        assert_eq!(f.eval(0.49, 3.0), 1.0);
        assert_eq!(f.eval(-0.5, 3.0), 0.0);
        assert!(!f.is_homogeneous());
    }

    #[test]
    fn spec_round_trip() {
        let json = r#"{"kind":"indicator","value":1.0,"lo":0.0,"hi":1.0}"#;
        let spec: DriftSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec, DriftSpec::indicator(1.0, 0.0, 1.0));
        let json = r#"{"kind":"piecewise-linear","knots":[[0,1],[2,0]],"support_radius":3}"#;
        let spec: DriftSpec = serde_json::from_str(json).unwrap();
        let f = spec.build().unwrap();
        assert_eq!(f.support_radius(), Some(3.0));
        assert!(serde_json::from_str::<DriftSpec>(r#"{"kind":"piecewise-linear","knots":[[1,0],[0,1]]}"#).is_err());
    }

    proptest! {
        #[test]
        fn bound_and_lipschitz_hold_on_samples(
            y0 in -3.0..3.0f64, y1 in -3.0..3.0f64, y2 in -3.0..3.0f64,
            l in 0.0..5.0f64, dl in 0.0..1.0f64, x in -2.0..2.0f64,
        ) {
            let t = PiecewiseLinear::new(vec![(0.0, y0), (1.0, y1), (2.5, y2)]).unwrap();
            let f = DriftField::piecewise_linear(t.clone());
            prop_assert!(f.eval(x, l).abs() <= f.bound() + 1e-12);
            prop_assert!((f.eval(x, l) - f.eval(x, l + dl)).abs() <= f.lipschitz() * dl + 1e-12);
            let g = DriftField::product(t.clone(), t);
            prop_assert!(g.eval(x, l).abs() <= g.bound() + 1e-12);
            prop_assert!((g.eval(x, l) - g.eval(x, l + dl)).abs() <= g.lipschitz() * dl + 1e-12);
        }

        #[test]
        fn antiderivative_is_bounded_and_monotone_for_nonnegative(
            y0 in 0.0..3.0f64, y1 in 0.0..3.0f64, l in 0.0..6.0f64, dl in 0.0..2.0f64,
        ) {
            let f = DriftField::piecewise_linear(PiecewiseLinear::new(vec![(0.0, y0), (1.5, y1), (3.0, 0.0)]).unwrap());
            let h = f.antiderivative(0.0, l).unwrap();
            prop_assert!(h.abs() <= f.bound() * l + 1e-12);
            prop_assert!(f.antiderivative(0.0, l + dl).unwrap() >= h - 1e-12);
        }
    }
}
