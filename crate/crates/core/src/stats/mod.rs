//! Empirical distributions, Kolmogorov-Smirnov distances, moment summaries
//! and convergence reports.

use serde::Serialize;
use thiserror::Error;

/// Two-sided standard normal quantile at 99%.
pub const Z99: f64 = 2.575_829_303_548_901;
/// Asymptotic two-sample KS coefficient at level 1%.
pub const KS_C99: f64 = 1.627_624_132_2;
/// Noise allowance for monotone-decay verdicts.
pub const DEFAULT_ALLOWANCE: f64 = 0.01;
/// Largest censored fraction an experiment may carry.
pub const MAX_CENSORED_FRACTION: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("sample contains {0} censored values; resolve censoring upstream")]
    Censored(usize),
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("censored fraction {fraction} exceeds {limit}")]
    TooMuchCensoring { fraction: f64, limit: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Sorted sample with a count of censored observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    censored: usize,
}

impl EmpiricalDistribution {
    pub fn new(values: Vec<f64>) -> Result<Self, StatsError> {
        Self::with_censored(values, 0)
    }

    /// `values` are the uncensored observations; `censored` more were cut
    /// off above every value.
    pub fn with_censored(mut values: Vec<f64>, censored: usize) -> Result<Self, StatsError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values, censored })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of uncensored values.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn censored(&self) -> usize {
        self.censored
    }

    pub fn total(&self) -> usize {
        self.values.len() + self.censored
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.censored as f64 / self.total() as f64
        }
    }

    /// Right-continuous CDF over the uncensored mass.
    pub fn cdf(&self, x: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.partition_point(|&v| v <= x) as f64 / self.values.len() as f64
    }

    /// Fraction of all observations, censored included, that are `<= x`.
    fn cdf_total(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v <= x) as f64 / self.total() as f64
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Empirical `q`-quantile (lower), `q` in `[0, 1]`.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.values.len();
        let i = ((q * n as f64).ceil() as usize).clamp(1, n);
        self.values[i - 1]
    }
}

/// Sup-norm distance between two empirical CDFs.
pub fn ks_two_sample(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Empty);
    }
    if a.censored > 0 || b.censored > 0 {
        return Err(StatsError::Censored(a.censored + b.censored));
    }
    Ok(sup_distance(&a.values, &b.values, a.values.len() as f64, b.values.len() as f64, f64::INFINITY))
}

// sup over t < cut of |#a<=t / na - #b<=t / nb|, merging the sorted arrays
fn sup_distance(a: &[f64], b: &[f64], na: f64, nb: f64, cut: f64) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        if t >= cut {
            break;
        }
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Sup-norm distance between an empirical CDF and a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(a: &EmpiricalDistribution, cdf: F) -> Result<f64, StatsError> {
    if a.is_empty() {
        return Err(StatsError::Empty);
    }
    if a.censored > 0 {
        return Err(StatsError::Censored(a.censored));
    }
    let n = a.values.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in a.values.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    Ok(d)
}

/// Bounds on the KS distance between two samples censored above a common
/// threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CensoredKs {
    /// Sup over the uncensored range; a lower bound on the full distance.
    pub lower: f64,
    /// Largest value the full distance can take given the censored mass.
    pub upper: f64,
    pub censored_a: f64,
    pub censored_b: f64,
}

/// KS bounds for samples censored above `threshold` (every uncensored value
/// must lie below it).
pub fn ks_censored_bounds(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    threshold: f64,
) -> Result<CensoredKs, StatsError> {
    if a.total() == 0 || b.total() == 0 {
        return Err(StatsError::Empty);
    }
    if a.values.last().is_some_and(|&x| x >= threshold) || b.values.last().is_some_and(|&x| x >= threshold) {
        return Err(StatsError::Invalid("uncensored values must lie below the threshold".into()));
    }
    let lower = sup_distance(&a.values, &b.values, a.total() as f64, b.total() as f64, threshold);
    let (ca, cb) = (a.censored_fraction(), b.censored_fraction());
    // above the threshold both CDFs climb to 1 from their value at the cut
    let gap_at_cut = (a.cdf_total(threshold) - b.cdf_total(threshold)).abs();
    let upper = lower.max(gap_at_cut).max(ca).max(cb);
    Ok(CensoredKs { lower: lower.max(gap_at_cut), upper, censored_a: ca, censored_b: cb })
}

/// Critical two-sample KS distance at level 1% for sizes `na`, `nb`.
pub fn ks_critical_99(na: usize, nb: usize) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    KS_C99 * ((na + nb) / (na * nb)).sqrt()
}

/// Mean and unbiased variance with 99% normal-approximation half-widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSummary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub mean_ci: f64,
    pub variance_ci: f64,
}

impl MomentSummary {
    pub fn mean_contains(&self, x: f64) -> bool {
        (self.mean - x).abs() <= self.mean_ci
    }

    pub fn variance_contains(&self, x: f64) -> bool {
        (self.variance - x).abs() <= self.variance_ci
    }
}

pub fn moment_summary(sample: &[f64]) -> Result<MomentSummary, StatsError> {
    let n = sample.len();
    if n < 2 {
        return Err(StatsError::TooFew { need: 2, got: n });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in sample {
        let d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    let variance = m2 / (nf - 1.0);
    let m4 = m4 / nf;
    let s4 = (m2 / nf) * (m2 / nf);
    // large-sample variance of the sample variance: (mu4 - sigma^4) / n
    let var_of_var = ((m4 - s4) / nf).max(0.0);
    Ok(MomentSummary {
        count: n,
        mean,
        variance,
        mean_ci: Z99 * (variance / nf).sqrt(),
        variance_ci: Z99 * var_of_var.sqrt(),
    })
}

/// Proportion estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub std_error: f64,
}

pub fn proportion(successes: u64, trials: u64) -> Result<Proportion, StatsError> {
    if trials == 0 {
        return Err(StatsError::Empty);
    }
    let p = successes as f64 / trials as f64;
    Ok(Proportion { successes, trials, estimate: p, std_error: (p * (1.0 - p) / trials as f64).sqrt() })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// One point of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub n: u32,
    pub ks: f64,
    /// 99% critical distance at this sample size.
    pub ci_half_width: f64,
    pub censored_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub points: Vec<ConvergencePoint>,
    pub allowance: f64,
    pub verdict: Verdict,
}

/// Verdict on a sequence of KS distances at increasing `n`.
///
/// Consistent when every step is nonincreasing up to `allowance` and the
/// distance at the largest `n` has either dropped by more than the
/// allowance or sits inside the 99% noise band. A flat sequence above the
/// noise band is inconsistent.
pub fn convergence_verdict(points: &[ConvergencePoint], allowance: f64) -> Verdict {
    let steps_ok = points.windows(2).all(|w| w[1].ks <= w[0].ks + allowance);
    let (first, last) = (points[0], points[points.len() - 1]);
    let settled = last.ks <= first.ks - allowance || last.ks <= last.ci_half_width;
    if steps_ok && settled {
        Verdict::Consistent
    } else {
        Verdict::Inconsistent
    }
}

/// Runs `experiment` at every `n` and reports the KS decay.
///
/// `experiment(n, reps)` returns the two samples to compare at scale `n`.
pub fn convergence_report<F>(n_list: &[u32], reps: usize, mut experiment: F) -> Result<ConvergenceReport, StatsError>
where
    F: FnMut(u32, usize) -> Result<(EmpiricalDistribution, EmpiricalDistribution), StatsError>,
{
    if n_list.is_empty() {
        return Err(StatsError::Empty);
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(StatsError::Invalid("n_list must be strictly increasing".into()));
    }
    if reps < 1000 {
        return Err(StatsError::TooFew { need: 1000, got: reps });
    }
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let (a, b) = experiment(n, reps)?;
        let fraction = a.censored_fraction().max(b.censored_fraction());
        if fraction > MAX_CENSORED_FRACTION {
            return Err(StatsError::TooMuchCensoring { fraction, limit: MAX_CENSORED_FRACTION });
        }
        let a = EmpiricalDistribution::new(a.values)?;
        let b = EmpiricalDistribution::new(b.values)?;
        let ks = ks_two_sample(&a, &b)?;
        points.push(ConvergencePoint { n, ks, ci_half_width: ks_critical_99(a.len(), b.len()), censored_fraction: fraction });
    }
    let verdict = convergence_verdict(&points, DEFAULT_ALLOWANCE);
    Ok(ConvergenceReport { points, allowance: DEFAULT_ALLOWANCE, verdict })
}

/// CSV with columns `n,ks,ci_half_width,censored_fraction`.
pub fn convergence_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from("n,ks,ci_half_width,censored_fraction\n");
    for p in &report.points {
        out.push_str(&format!("{},{},{},{}\n", p.n, p.ks, p.ci_half_width, p.censored_fraction));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ed(v: &[f64]) -> EmpiricalDistribution {
        EmpiricalDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_two_sample(&ed(&[1.0, 2.0, 3.0]), &ed(&[1.0, 2.0, 3.0])).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&ed(&[0.0, 1.0]), &ed(&[5.0, 6.0])).unwrap(), 1.0);
        assert_eq!(ks_two_sample(&ed(&[0.0, 1.0]), &ed(&[0.5])).unwrap(), 0.5);
        assert!(matches!(ks_two_sample(&ed(&[]), &ed(&[1.0])), Err(StatsError::Empty)));
        let c = EmpiricalDistribution::with_censored(vec![1.0], 1).unwrap();
        assert!(matches!(ks_two_sample(&c, &ed(&[1.0])), Err(StatsError::Censored(1))));
    }

    #[test]
    fn ties_are_handled() {
        // CDFs: a jumps to 1 at 0; b is 1/2 at 0 and 1 at 1
        assert_eq!(ks_two_sample(&ed(&[0.0, 0.0]), &ed(&[0.0, 1.0])).unwrap(), 0.5);
    }

    #[test]
    fn cdf_is_right_continuous() {
        let d = ed(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(d.cdf(0.5), 0.0);
        assert_eq!(d.cdf(2.0), 0.75);
        assert_eq!(d.cdf(10.0), 1.0);
        assert_eq!(d.quantile(0.5), 2.0);
    }

    #[test]
    fn moment_examples() {
        let m = moment_summary(&[3.0, 3.0, 3.0]).unwrap();
        assert_eq!(m.variance, 0.0);
        let m = moment_summary(&[-1.0, 1.0]).unwrap();
        assert_eq!(m.mean, 0.0);
        assert_eq!(m.variance, 2.0);
        assert!(matches!(moment_summary(&[1.0]), Err(StatsError::TooFew { .. })));
    }

    #[test]
    fn normal_sample_moments() {
        let mut rng = rng_from_seed(2024);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let m = moment_summary(&xs).unwrap();
        assert!(m.mean_contains(0.0));
        assert!(m.variance_contains(1.0));
        let d = ed(&xs);
        assert!(ks_one_sample(&d, normal_cdf).unwrap() < 0.01);
    }

    #[test]
    fn ci_coverage_on_gaussian_self_test() {
        let mut rng = rng_from_seed(99);
        let trials = 400;
        let (mut mean_hits, mut var_hits) = (0, 0);
        for _ in 0..trials {
            let xs: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
            let m = moment_summary(&xs).unwrap();
            mean_hits += m.mean_contains(0.0) as u32;
            var_hits += m.variance_contains(1.0) as u32;
        }
        assert!(mean_hits as f64 / trials as f64 >= 0.95);
        assert!(var_hits as f64 / trials as f64 >= 0.95);
    }

    #[test]
    fn censored_bounds_bracket_truth() {
        let a = ed(&[0.1, 0.2, 0.3, 0.9, 1.5]);
        let b = ed(&[0.15, 0.25, 0.35, 2.0, 3.0]);
        let truth = ks_two_sample(&a, &b).unwrap();
        let ac = EmpiricalDistribution::with_censored(vec![0.1, 0.2, 0.3, 0.9], 1).unwrap();
        let bc = EmpiricalDistribution::with_censored(vec![0.15, 0.25, 0.35], 2).unwrap();
        let k = ks_censored_bounds(&ac, &bc, 1.0).unwrap();
        assert!(k.lower <= truth + 1e-15 && truth <= k.upper + 1e-15, "{k:?} vs {truth}");
    }

    #[test]
    fn verdicts() {
        let pt = |n, ks| ConvergencePoint { n, ks, ci_half_width: 0.023, censored_fraction: 0.0 };
        assert_eq!(convergence_verdict(&[pt(25, 0.2), pt(100, 0.1), pt(400, 0.05)], 0.01), Verdict::Consistent);
        assert_eq!(convergence_verdict(&[pt(25, 0.2), pt(100, 0.2), pt(400, 0.2)], 0.01), Verdict::Inconsistent);
        assert_eq!(convergence_verdict(&[pt(25, 0.02), pt(100, 0.022), pt(400, 0.015)], 0.01), Verdict::Consistent);
        assert_eq!(convergence_verdict(&[pt(25, 0.05), pt(100, 0.2), pt(400, 0.01)], 0.01), Verdict::Inconsistent);
    }

    #[test]
    fn synthetic_constant_experiment_is_inconsistent() {
        let report = convergence_report(&[25, 100, 400], 1000, |_, reps| {
            let a: Vec<f64> = (0..reps).map(|i| i as f64).collect();
            let b: Vec<f64> = (0..reps).map(|i| i as f64 + 300.0).collect();
            Ok((ed(&a), ed(&b)))
        })
        .unwrap();
        assert_eq!(report.verdict, Verdict::Inconsistent);
        assert!(convergence_report(&[100, 25], 1000, |_, _| unreachable!()).is_err());
    }

    proptest! {
        #[test]
        fn ks_symmetric_and_bounded(
            a in proptest::collection::vec(-5.0..5.0f64, 1..40),
            b in proptest::collection::vec(-5.0..5.0f64, 1..40),
        ) {
            let (a, b) = (ed(&a), ed(&b));
            let d1 = ks_two_sample(&a, &b).unwrap();
            let d2 = ks_two_sample(&b, &a).unwrap();
            prop_assert_eq!(d1, d2);
            prop_assert!((0.0..=1.0).contains(&d1));
        }
    }
}
