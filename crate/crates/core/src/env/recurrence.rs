//! Recurrence classification through the integrals `C1+` and `C1-`.

use serde::Serialize;

use super::quadrature::{adaptive_simpson, adaptive_simpson_split};
use super::{DriftField, EnvError};

/// Default horizon for the non-homogeneous averaged-drift criterion.
pub const DEFAULT_LIMINF_HORIZON: f64 = 1.0e4;

/// Largest abscissa of the tail-exponent grid.
const TAIL_GRID_END: f64 = 1.0e6;
/// Steps per unit of `ln x` on the geometric grid.
const STEPS_PER_LOG_UNIT: usize = 400;
/// Exponents inside this band are reported as undetermined.
const UNDETERMINED_BAND: (f64, f64) = (-1.05, -0.95);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Recurrent,
    Transient,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecurrenceMethod {
    AnalyticShortcut,
    QuadratureHeuristic,
}

/// Estimate of one of the integrals `C1+-`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct C1Estimate {
    /// Numeric value, `inf` when divergent.
    pub value: f64,
    /// `Some(true)` divergent, `Some(false)` convergent, `None` undetermined.
    pub divergent: Option<bool>,
    /// Power-law exponent of the integrand at large `x`, when estimated.
    pub tail_exponent: Option<f64>,
}

impl C1Estimate {
    fn divergent(tail_exponent: Option<f64>) -> Self {
        Self { value: f64::INFINITY, divergent: Some(true), tail_exponent }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceReport {
    pub classification: Classification,
    pub c1_plus: C1Estimate,
    pub c1_minus: C1Estimate,
    /// `delta = int_0^inf phi`, homogeneous fields only.
    pub total_drift: Option<f64>,
    pub method: RecurrenceMethod,
    pub detail: String,
}

/// Classifies `field` with the default averaged-drift horizon.
pub fn classify_recurrence(field: &DriftField) -> Result<RecurrenceReport, EnvError> {
    classify_recurrence_with_horizon(field, DEFAULT_LIMINF_HORIZON)
}

/// Classifies `field`.
///
/// Homogeneous fields that are nonnegative or have compact local support
/// use `delta in [-1, 1]`. Other homogeneous fields estimate the tail
/// exponent of the `C1` integrands numerically. Nonnegative
/// non-homogeneous fields use the averaged-drift sufficient condition on
/// `[0, horizon]`; signed non-homogeneous fields are unsupported.
pub fn classify_recurrence_with_horizon(field: &DriftField, horizon: f64) -> Result<RecurrenceReport, EnvError> {
    if field.is_zero() {
        return Ok(RecurrenceReport {
            classification: Classification::Recurrent,
            c1_plus: C1Estimate::divergent(Some(0.0)),
            c1_minus: C1Estimate::divergent(Some(0.0)),
            total_drift: Some(0.0),
            method: RecurrenceMethod::AnalyticShortcut,
            detail: "zero field".into(),
        });
    }
    if !field.is_homogeneous() {
        if !field.is_nonnegative() {
            return Err(EnvError::Unsupported(
                "signed non-homogeneous fields have no constructive criterion".into(),
            ));
        }
        return averaged_drift_criterion(field, horizon);
    }
    if field.is_nonnegative() || field.has_compact_local_support() {
        if let Some(delta) = field.total_drift() {
            return Ok(shortcut(field, delta));
        }
    }
    Ok(heuristic(field))
}

fn classify(plus: &C1Estimate, minus: &C1Estimate) -> Classification {
    match (plus.divergent, minus.divergent) {
        (Some(true), Some(true)) => Classification::Recurrent,
        (Some(false), _) | (_, Some(false)) => Classification::Transient,
        _ => Classification::Undetermined,
    }
}

fn shortcut(field: &DriftField, delta: f64) -> RecurrenceReport {
    // integrand of C1+- behaves like x^(-+delta)
    let side = |sign: f64| {
        if -sign * delta >= -1.0 {
            C1Estimate::divergent(Some(-sign * delta))
        } else {
            let mut est = c1_numeric(field, sign);
            est.divergent = Some(false);
            if delta.is_finite() {
                est.tail_exponent = Some(-sign * delta);
            }
            est
        }
    };
    let c1_plus = side(1.0);
    let c1_minus = side(-1.0);
    let classification = classify(&c1_plus, &c1_minus);
    RecurrenceReport {
        classification,
        c1_plus,
        c1_minus,
        total_drift: Some(delta),
        method: RecurrenceMethod::AnalyticShortcut,
        detail: format!("delta = {delta}"),
    }
}

fn heuristic(field: &DriftField) -> RecurrenceReport {
    let c1_plus = c1_numeric(field, 1.0);
    let c1_minus = c1_numeric(field, -1.0);
    let classification = classify(&c1_plus, &c1_minus);
    RecurrenceReport {
        classification,
        c1_plus,
        c1_minus,
        total_drift: field.total_drift(),
        method: RecurrenceMethod::QuadratureHeuristic,
        detail: "tail exponent of exp(-+int h(z)/z dz) on a geometric grid up to 1e6".into(),
    }
}

/// Numeric estimate of `C1+` (`sign = 1`) or `C1-` (`sign = -1`).
fn c1_numeric(field: &DriftField, sign: f64) -> C1Estimate {
    let h = |z: f64| field.antiderivative_unchecked(0.0, z);
    // h(z)/z extends continuously to phi(0) at z = 0
    let ratio = |z: f64| if z == 0.0 { field.eval_local(0.0) } else { h(z) / z };
    let breaks = field.local_breakpoints();

    // exponent E(x) = -sign * int_0^x h(z)/z dz, first on [0, 1] uniformly
    let unit_steps = 200;
    let mut value = 0.0;
    let mut e_prev = 0.0;
    let mut g_prev = 1.0;
    for k in 1..=unit_steps {
        let (x0, x1) = ((k - 1) as f64 / unit_steps as f64, k as f64 / unit_steps as f64);
        let e = e_prev - sign * adaptive_simpson_split(&ratio, x0, x1, &breaks, 1e-12);
        let g = e.exp();
        value += 0.5 * (g_prev + g) * (x1 - x0);
        e_prev = e;
        g_prev = g;
    }

    // then on a geometric grid in s = ln x, where dx = e^s ds
    let s_end = TAIL_GRID_END.ln();
    let steps = (s_end * STEPS_PER_LOG_UNIT as f64).ceil() as usize;
    let ds = s_end / steps as f64;
    let h_of_s = |s: f64| h(s.exp());
    let decade_start = s_end - std::f64::consts::LN_10;
    let mut e_at_decade = None;
    for k in 1..=steps {
        let (s0, s1) = ((k - 1) as f64 * ds, k as f64 * ds);
        let e = e_prev - sign * adaptive_simpson(&h_of_s, s0, s1, 1e-12);
        let g = e.exp() * s1.exp();
        value += 0.5 * (g_prev + g) * ds;
        if e_at_decade.is_none() && s1 >= decade_start {
            e_at_decade = Some((s1, e));
        }
        e_prev = e;
        g_prev = g;
    }
    let (s_dec, e_dec) = e_at_decade.expect("grid covers the last decade");
    let exponent = (e_prev - e_dec) / (s_end - s_dec);

    if exponent >= UNDETERMINED_BAND.1 {
        C1Estimate::divergent(Some(exponent))
    } else if exponent > UNDETERMINED_BAND.0 {
        C1Estimate { value, divergent: None, tail_exponent: Some(exponent) }
    } else {
        // power-law tail beyond the grid: int_X^inf g(X) (x/X)^p dx
        let tail = e_prev.exp() * TAIL_GRID_END / (-(exponent + 1.0));
        C1Estimate { value: value + tail, divergent: Some(false), tail_exponent: Some(exponent) }
    }
}

fn averaged_drift_criterion(field: &DriftField, horizon: f64) -> Result<RecurrenceReport, EnvError> {
    if !(horizon > 1.0) {
        return Err(EnvError::Domain(format!("averaged-drift horizon must exceed 1, got {horizon}")));
    }
    let delta_x = |x: f64| field.total_drift_at(x);
    if delta_x(0.0).is_none() {
        return Err(EnvError::Unsupported("field does not expose its local-time tail".into()));
    }
    let d = |x: f64| delta_x(x).unwrap_or(f64::INFINITY);
    let mut breaks: Vec<f64> = Vec::new();
    if let Some(r) = field.support_radius() {
        breaks.push(r);
    }
    // (1/z) int_0^z delta^x dx on a geometric grid over [1, horizon]
    let points = 200;
    let mut integral = adaptive_simpson_split(&d, 0.0, 1.0, &breaks, 1e-9);
    let mut z_prev = 1.0;
    let mut liminf = f64::INFINITY;
    let tail_from = horizon / 10.0;
    for k in 1..=points {
        let z = horizon.powf(k as f64 / points as f64);
        integral += adaptive_simpson_split(&d, z_prev, z, &breaks, 1e-9);
        z_prev = z;
        if z >= tail_from {
            liminf = liminf.min(integral / z);
        }
    }
    let recurrent = liminf < 1.0;
    let (classification, plus, minus) = if recurrent {
        (Classification::Recurrent, C1Estimate::divergent(None), C1Estimate::divergent(None))
    } else {
        let und = C1Estimate { value: f64::NAN, divergent: None, tail_exponent: None };
        (Classification::Undetermined, und, und)
    };
    Ok(RecurrenceReport {
        classification,
        c1_plus: plus,
        c1_minus: minus,
        total_drift: None,
        method: RecurrenceMethod::QuadratureHeuristic,
        detail: format!("averaged drift over [{tail_from}, {horizon}] has minimum {liminf}"),
    })
}
