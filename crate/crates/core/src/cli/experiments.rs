use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use super::{CliError, Experiment, ExperimentConfig, Runner};
use crate::chains::{gw_extinction_prob, gw_simulate_extinct, sample_w, ChainColumn, ChainSampler, GwParams};
use crate::env::{classify_recurrence, CookieEnvironment, DriftField};
use crate::operators::{drift_expansion_check, identity_suite};
use crate::sde::{
    inverse_local_time, sample_at_exponential_time, simulate_coupled_pair, simulate_excited_bm,
    simulate_ray_knight_probed, BmSpec, CoupledPaths, RayKnightSpec, SdeError,
};
use crate::stats::{
    convergence_verdict, ks_censored_bounds, ks_critical_99, ks_one_sample, ks_two_sample, moment_summary,
    normal_cdf, proportion, ConvergencePoint, EmpiricalDistribution, DEFAULT_ALLOWANCE, MAX_CENSORED_FRACTION,
};
use crate::walk::{
    lattice_anchor, lattice_floor, local_time_profile, multi_level_downcrossings, occupation_identity_check,
    sample_at_geometric_time, scaled_process_sample, simulate_walk, StopRule, WalkError, WalkOptions,
};

const IDENTITY_TOLERANCE: f64 = 1e-10;
const GAP_AT_100: f64 = 0.5;
const SLOPE_RANGE: (f64, f64) = (-0.8, -0.2);
const KS_CHAINS_WALK: f64 = 0.03;
const KS_RAY_KNIGHT: f64 = 0.05;
const KS_TAU: f64 = 0.05;
const LAPLACE_TOLERANCE: f64 = 0.02;
const KS_PROCESS_NORMAL: f64 = 0.03;
const KS_PROCESS_BM: f64 = 0.06;
const KS_EXP_TIME: f64 = 0.06;
const SIGMAS: f64 = 3.0;
const CRITICAL_EXACT: f64 = 1e-12;

/// One acceptance check of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// The condition `value` must satisfy, e.g. `<= 0.03`.
    pub condition: String,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, condition: format!("<= {}", Num(bound)), passed: value <= bound }
    }

    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value, condition: format!("in [{}, {}]", Num(lo), Num(hi)), passed: lo <= value && value <= hi }
    }

    pub fn zero(name: impl Into<String>, count: usize) -> Self {
        Self { name: name.into(), value: count as f64, condition: "== 0".into(), passed: count == 0 }
    }
}

/// What an experiment produced: the CSV table, its checks and free-form
/// details for the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub csv: String,
    pub checks: Vec<Check>,
    pub details: Value,
}

impl ExperimentOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name_prefix: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name.starts_with(name_prefix))
    }
}

/// Runs the configured experiment without writing any file.
pub fn execute(cfg: &ExperimentConfig, runner: &Runner) -> Result<ExperimentOutput, CliError> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::VerifyOperators => verify_operators(cfg),
        Experiment::DriftSweep => drift_sweep(cfg, runner),
        Experiment::ChainsVsWalk => chains_vs_walk(cfg, runner),
        Experiment::RayKnightCompare => ray_knight_compare(cfg, runner),
        Experiment::TauCompare => tau_compare(cfg, runner),
        Experiment::ExpTimeCompare => exp_time_compare(cfg, runner),
        Experiment::ProcessCompare => process_compare(cfg, runner),
        Experiment::CoupledPair => coupled_pair(cfg, runner),
        Experiment::GwCheck => gw_check(cfg, runner),
        Experiment::Recurrence => recurrence(cfg),
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn label<T: Serialize>(t: &T) -> String {
    match serde_json::to_value(t) {
        Ok(Value::String(s)) => s,
        Ok(v) => v.to_string(),
        Err(_) => String::new(),
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub struct Num(pub f64);

impl std::fmt::Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let x = self.0;
        if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&x.abs()) {
            write!(f, "{x}")
        } else {
            write!(f, "{x:e}")
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |x| Num(x).to_string())
}

fn env_at(field: &DriftField, n: u32) -> Result<CookieEnvironment, CliError> {
    Ok(CookieEnvironment::new(field.clone(), n)?)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Two-sample KS distance and its 99% critical distance.
fn ks_pair(a: &[f64], b: &[f64]) -> Result<(f64, f64), CliError> {
    let (ea, eb) = (EmpiricalDistribution::new(a.to_vec())?, EmpiricalDistribution::new(b.to_vec())?);
    Ok((ks_two_sample(&ea, &eb)?, ks_critical_99(a.len(), b.len())))
}

fn site(n: u32, x: f64) -> i64 {
    lattice_floor(2.0 * f64::from(n) * x)
}

fn verify_operators(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let tol = cfg.threshold.unwrap_or(IDENTITY_TOLERANCE);
    let suite = identity_suite(cfg.seed, tol)?;
    let mut csv = String::from("identity,cases,max_residual,tolerance,passed\n");
    let mut checks = Vec::new();
    for c in &suite {
        let _ = writeln!(csv, "{},{},{},{},{}", quote(&c.name), c.cases, Num(c.max_residual), Num(c.tolerance), c.passed);
        checks.push(Check::at_most(c.name.clone(), c.max_residual, tol));
    }
    let worst = suite.iter().map(|c| c.max_residual).fold(0.0, f64::max);
    Ok(ExperimentOutput { csv, checks, details: json!({ "max_residual": worst }) })
}

/// Least-squares slope of `log y` against `log x`.
pub(crate) fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || ys.iter().any(|&y| !(y > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn drift_sweep(cfg: &ExperimentConfig, runner: &Runner) -> Result<ExperimentOutput, CliError> {
    let field = cfg.field.build()?;
    let mut csv = String::from(
        "n,m,lhs,rhs,gap,truncation_bound,mc_reps,mc_mean_shift,mc_variance,mc_variance_ci,variance_band\n",
    );
    let mut checks = Vec::new();
    let (mut ns, mut gaps) = (Vec::new(), Vec::new());
    for &n in &cfg.n_list {
        let m = ((cfg.m_over_n * f64::from(n)).round() as usize).max(1);
        let d = drift_expansion_check(&field, n, m)?;
        let env = env_at(&field, n)?;
        let col = ChainColumn::new(&env, 0);
        let ws = runner.try_replicates(&format!("w/n={n}"), cfg.reps, |rng| sample_w(&col, m as u64, rng).map(|w| w as f64))?;
        let s = moment_summary(&ws)?;
        let band = s.variance_ci + 3.0 * f64::from(n).sqrt();
        let target = 2.0 * m as f64;
        let _ = writeln!(
            csv,
            "{n},{m},{},{},{},{},{},{},{},{},{}",
            Num(d.lhs),
            Num(d.rhs),
            Num(d.gap),
            Num(d.truncation_bound),
            cfg.reps,
            Num(s.mean - target),
            Num(s.variance),
            Num(s.variance_ci),
            Num(band)
        );
        checks.push(Check::within(
            format!("Var W(m) in 2m +- (CI + 3 sqrt n), n = {n}, m = {m}"),
            s.variance,
            target - band,
            target + band,
        ));
        if n == 100 {
            checks.push(Check::at_most("drift gap at n = 100", d.gap, GAP_AT_100));
        }
        ns.push(f64::from(n));
        gaps.push(d.gap);
    }
    let slope = log_log_slope(&ns, &gaps);
    if let Some(s) = slope {
        checks.push(Check::within("log-log slope of the drift gap", s, SLOPE_RANGE.0, SLOPE_RANGE.1));
    }
    Ok(ExperimentOutput { csv, checks, details: json!({ "slope": slope }) })
}

/// One walk profile read at the evaluation points.
struct WalkDraw {
    values: Option<Vec<f64>>,
    invariants_ok: bool,
    occupation_ok: Option<bool>,
}

fn walk_profile_draw(
    env: &CookieEnvironment,
    cfg: &ExperimentConfig,
    window: Option<(i64, i64)>,
    rng: &mut crate::seed::SimRng,
) -> Result<WalkDraw, WalkError> {
    let n = env.n();
    let (ka, kv) = lattice_anchor(cfg.a, cfg.v, n);
    let opts = WalkOptions { cap: cfg.cap, record_path: false, window };
    let run = simulate_walk(env, StopRule::Downcross { a: ka, v: kv }, &opts, rng);
    if run.censored {
        return Ok(WalkDraw { values: None, invariants_ok: true, occupation_ok: None });
    }
    let occupation_ok = match window {
        None => Some(occupation_identity_check(&run)?.passed),
        Some(_) => None,
    };
    let p = local_time_profile(&run, cfg.a, cfg.v, n)?;
    Ok(WalkDraw {
        values: Some(cfg.x_eval.iter().map(|&x| p.lambda(x)).collect()),
        invariants_ok: p.check_invariants().is_ok(),
        occupation_ok,
    })
}

/// Chain window covering the anchor and every evaluation point, so the
/// outer chains stop as soon as nothing further is needed.
fn chain_window(cfg: &ExperimentConfig, n: u32) -> (i64, i64) {
    let (ka, _) = lattice_anchor(cfg.a, cfg.v, n);
    let sites: Vec<i64> = cfg.x_eval.iter().map(|&x| site(n, x)).collect();
    let lo = sites.iter().copied().min().unwrap_or(ka).min(ka);
    let hi = sites.iter().copied().max().unwrap_or(ka);
    (lo, hi)
}

/// Chain profiles at scale `n`: values at `x_eval` and invariant failures.
fn chain_draws(
    cfg: &ExperimentConfig,
    runner: &Runner,
    env: &CookieEnvironment,
    stream: &str,
) -> Result<(Vec<Vec<f64>>, usize), CliError> {
    let sampler = ChainSampler::new(env);
    let window = chain_window(cfg, env.n());
    let draws = runner.try_replicates(stream, cfg.lattice_reps(), |rng| {
        sampler.profile(cfg.a, cfg.v, Some(window), rng).map(|p| {
            let ok = p.check_invariants().is_ok();
            (cfg.x_eval.iter().map(|&x| p.lambda(x)).collect::<Vec<_>>(), ok)
        })
    })?;
    let failures = draws.iter().filter(|d| !d.1).count();
    Ok((draws.into_iter().map(|d| d.0).collect(), failures))
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

fn verdicts(cfg: &ExperimentConfig, points: &[Vec<ConvergencePoint>]) -> Value {
    let per_x: Vec<Value> = cfg
        .x_eval
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let pts: Vec<ConvergencePoint> = points.iter().map(|p| p[j]).collect();
            json!({ "x": x, "verdict": convergence_verdict(&pts, DEFAULT_ALLOWANCE), "points": pts })
        })
        .collect();
    Value::Array(per_x)
}

fn chains_vs_walk(cfg: &ExperimentConfig, runner: &Runner) -> Result<ExperimentOutput, CliError> {
    let field = cfg.field.build()?;
    let threshold = cfg.threshold.unwrap_or(KS_CHAINS_WALK);
    let mut csv = String::from("n,x,ks,ci_half_width,walk_mean,chains_mean,walk_censored\n");
    let mut checks = Vec::new();
    let mut points = Vec::new();
    let (mut invariant_failures, mut occupation_failures, mut occupation_runs) = (0, 0, 0);
    let last = *cfg.n_list.last().expect("validated");
    for &n in &cfg.n_list {
        let env = env_at(&field, n)?;
        let window = cfg.walk_window.map(|[lo, hi]| (site(n, lo), site(n, hi)));
        let walks = runner.try_replicates(&format!("walk/n={n}"), cfg.lattice_reps(), |rng| {
            walk_profile_draw(&env, cfg, window, rng)
        })?;
        let censored = walks.iter().filter(|w| w.values.is_none()).count();
        invariant_failures += walks.iter().filter(|w| !w.invariants_ok).count();
        occupation_runs += walks.iter().filter(|w| w.occupation_ok.is_some()).count();
        occupation_failures += walks.iter().filter(|w| w.occupation_ok == Some(false)).count();
        let walk_rows: Vec<Vec<f64>> = walks.into_iter().filter_map(|w| w.values).collect();
        let (chain_rows, failures) = chain_draws(cfg, runner, &env, &format!("chains/n={n}"))?;
        invariant_failures += failures;
        let fraction = censored as f64 / cfg.lattice_reps() as f64;
        checks.push(Check::at_most(format!("walk censored fraction, n = {n}"), fraction, MAX_CENSORED_FRACTION));
        let mut pts = Vec::new();
        for (j, &x) in cfg.x_eval.iter().enumerate() {
            let (a, b) = (column(&walk_rows, j), column(&chain_rows, j));
            let (ks, crit) = ks_pair(&a, &b)?;
            let _ = writeln!(csv, "{n},{},{},{},{},{},{censored}", Num(x), Num(ks), Num(crit), Num(mean(&a)), Num(mean(&b)));
            if n == last {
                checks.push(Check::at_most(format!("KS(walk, chains) at x = {x}, n = {n}"), ks, threshold));
            }
            pts.push(ConvergencePoint { n, ks, ci_half_width: crit, censored_fraction: fraction });
        }
        points.push(pts);
    }
    checks.push(Check::zero("profile invariant failures", invariant_failures));
    checks.push(Check::zero("occupation identity failures", occupation_failures));
    Ok(ExperimentOutput {
        csv,
        checks,
        details: json!({
            "verdicts": verdicts(cfg, &points),
            "occupation_runs": occupation_runs,
            "walk_window_sites": cfg.walk_window.map(|[lo, hi]| cfg.n_list.iter().map(|&n| (site(n, lo), site(n, hi))).collect::<Vec<_>>()),
        }),
    })
}

fn ray_knight_compare(cfg: &ExperimentConfig, runner: &Runner) -> Result<ExperimentOutput, CliError> {
    let field = cfg.field.build()?;
    let threshold = cfg.threshold.unwrap_or(KS_RAY_KNIGHT);
    let x_hi = cfg.x_eval.iter().copied().fold(0.0, f64::max);
    let x_lo = cfg.x_eval.iter().copied().fold(cfg.a, f64::min);
    let spec = RayKnightSpec { x_min: x_lo, record: false, ..RayKnightSpec::new(cfg.a, cfg.v, cfg.dx, x_hi + cfg.dx) };
    let sde = runner.try_replicates("sde", cfg.reps, |rng| {
        simulate_ray_knight_probed(&field, &spec, &cfg.x_eval, rng).map(|p| p.probes)
    })?;
    if sde.iter().flatten().any(|v| v.is_nan()) {
        return Err(CliError::Execution("an evaluation point fell outside the diffusion window".into()));
    }
    let mut csv = String::from("n,x,ks,ci_half_width,lattice_mean,sde_mean\n");
    let mut checks = Vec::new();
    let mut points: Vec<Vec<ConvergencePoint>> = Vec::new();
    let mut invariant_failures = 0;
    for &n in &cfg.n_list {
        let env = env_at(&field, n)?;
        let (rows, failures) = chain_draws(cfg, runner, &env, &format!("chains/n={n}"))?;
        invariant_failures += failures;
        let mut pts = Vec::new();
        for (j, &x) in cfg.x_eval.iter().enumerate() {
            let (a, b) = (column(&rows, j), column(&sde, j));
            let (ks, crit) = ks_pair(&a, &b)?;
            let _ = writeln!(csv, "{n},{},{},{},{},{}", Num(x), Num(ks), Num(crit), Num(mean(&a)), Num(mean(&b)));
            pts.push(ConvergencePoint { n, ks, ci_half_width: crit, censored_fraction: 0.0 });
        }
        points.push(pts);
    }
    let last = points.last().expect("validated");
    for (j, &x) in cfg.x_eval.iter().enumerate() {
        let n = last[j].n;
        checks.push(Check::at_most(format!("KS(chains, SDE) at x = {x}, n = {n}"), last[j].ks, threshold));
        if points.len() > 1 {
            let worst_rise = points.windows(2).map(|w| w[1][j].ks - w[0][j].ks).fold(f64::NEG_INFINITY, f64::max);
            checks.push(Check::at_most(format!("largest KS increase over n at x = {x}"), worst_rise, DEFAULT_ALLOWANCE));
        }
    }
    checks.push(Check::zero("profile invariant failures", invariant_failures));
    Ok(ExperimentOutput { csv, checks, details: json!({ "verdicts": verdicts(cfg, &points) }) })
}

fn tau_compare(cfg: &ExperimentConfig, runner: &Runner) -> Result<ExperimentOutput, CliError> {
    let field = cfg.field.build()?;
    let threshold = cfg.threshold.unwrap_or(KS_TAU);
    let cut = cfg.tau_cap;

    // SDE side: tau = int Lambda, censored when unresolved or >= cut
    let spec = RayKnightSpec::new(cfg.a, cfg.v, cfg.dx, cfg.x_max).with_x_min(cfg.a - cfg.x_max).streaming();
    let sde = runner.try_replicates("sde", cfg.reps, |rng| {
        simulate_ray_knight_probed(&field, &spec, &[], rng).map(|p| match inverse_local_time(&p) {
            Ok(t) => (Some(t), false),
            Err(SdeError::Censored { integral_so_far }) => (None, integral_so_far < cut),
            Err(_) => (None, false),
        })
    })?;
    let sde_unresolved = sde.iter().filter(|s| s.1).count();
    let sde_values: Vec<f64> = sde.iter().filter_map(|s| s.0).filter(|&t| t < cut).collect();
    let sde_censored = cfg.reps - sde_values.len();
    let sde_dist = EmpiricalDistribution::with_censored(sde_values, sde_censored)?;

    let mut csv = String::from(
        "n,ks_lower,ks_upper,walk_censored_fraction,sde_censored_fraction,sde_unresolved,occupation_failures\n",
    );
    let mut checks = Vec::new();
    let (mut occupation_failures, mut occupation_runs) = (0, 0);
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let env = env_at(&field, n)?;
        let (ka, kv) = lattice_anchor(cfg.a, cfg.v, n);
        let four_n2 = 4.0 * f64::from(n) * f64::from(n);
        let cap = (cut * four_n2).ceil() as u64;
        let opts = WalkOptions::with_cap(cap);
        let walks = runner.try_replicates(&format!("walk/n={n}"), cfg.lattice_reps(), |rng| {
            let run = simulate_walk(&env, StopRule::Downcross { a: ka, v: kv }, &opts, rng);
            if run.censored {
                return Ok::<_, WalkError>((None, true));
            }
            let ok = occupation_identity_check(&run)?.passed;
            Ok((Some(run.steps as f64 / four_n2), ok))
        })?;
        let failures = walks.iter().filter(|w| !w.1).count();
        occupation_failures += failures;
        occupation_runs += walks.iter().filter(|w| w.0.is_some()).count();
        let values: Vec<f64> = walks.iter().filter_map(|w| w.0).filter(|&t| t < cut).collect();
        let censored = walks.len() - values.len();
        let walk_dist = EmpiricalDistribution::with_censored(values, censored)?;
        let b = ks_censored_bounds(&walk_dist, &sde_dist, cut)?;
        let _ = writeln!(
            csv,
            "{n},{},{},{},{},{sde_unresolved},{failures}",
            Num(b.lower),
            Num(b.upper),
            Num(b.censored_a),
            Num(b.censored_b)
        );
        rows.push((n, b));
    }
    let (n, b) = *rows.last().expect("validated");
    checks.push(Check::at_most(format!("KS(tau walk, int Lambda) upper bound, n = {n}"), b.upper, threshold));
    checks.push(Check::zero("occupation identity failures", occupation_failures));

    // zero-field cross-check, a = 0, v = 1: E exp(-tau) = exp(-sqrt 2)
    let w = cfg.laplace_window;
    let zero_spec = RayKnightSpec::new(0.0, 1.0, cfg.dx, w).with_x_min(-w).streaming();
    let zero = DriftField::zero();
    let laplace = runner.try_replicates("laplace", cfg.reps, |rng| {
        simulate_ray_knight_probed(&zero, &zero_spec, &[], rng).map(|p| match inverse_local_time(&p) {
            Ok(t) => ((-t).exp(), (-t).exp()),
            Err(_) => (0.0, (-p.integral).exp()),
        })
    })?;
    let lo = mean(&laplace.iter().map(|l| l.0).collect::<Vec<_>>());
    let hi = mean(&laplace.iter().map(|l| l.1).collect::<Vec<_>>());
    let target = (-std::f64::consts::SQRT_2).exp();
    let err = (lo - target).abs().max((hi - target).abs());
    checks.push(Check::at_most("zero field |E exp(-tau) - exp(-sqrt 2)|", err, LAPLACE_TOLERANCE));
    Ok(ExperimentOutput {
        csv,
        checks,
        details: json!({
            "tau_cap": cut,
            "occupation_runs": occupation_runs,
            "bounds": rows.iter().map(|(n, b)| json!({ "n": n, "bounds": b })).collect::<Vec<_>>(),
            "laplace": { "lower": lo, "upper": hi, "target": target },
        }),
    })
}

fn exp_time_compare(cfg: &ExperimentConfig, runner: &Runner) -> Result<ExperimentOutput, CliError> {
    let field = cfg.field.build()?;
    let threshold = cfg.threshold.unwrap_or(KS_EXP_TIME);
    let bm = runner.try_replicates("bm", cfg.reps, |rng| {
        sample_at_exponential_time(&field, cfg.rate, cfg.dt, cfg.delta, rng)
    })?;
    let mut csv = String::from("n,ks,ci_half_width,walk_mean,bm_mean\n");
    let mut last = (0, 0.0);
    for &n in &cfg.n_list {
        let env = env_at(&field, n)?;
        let walk = runner.try_replicates(&format!("walk/n={n}"), cfg.lattice_reps(), |rng| {
            sample_at_geometric_time(&env, cfg.rate, rng)
        })?;
        let (ks, crit) = ks_pair(&walk, &bm)?;
        let _ = writeln!(csv, "{n},{},{},{},{}", Num(ks), Num(crit), Num(mean(&walk)), Num(mean(&bm)));
        last = (n, ks);
    }
    let checks = vec![Check::at_most(format!("KS(geometric-time walk, exponential-time BM), n = {}", last.0), last.1, threshold)];
    let mut details = json!({});
    if field.is_zero() {
        let s = (2.0 * cfg.rate).sqrt();
        let cdf = |x: f64| if x < 0.0 { 0.5 * (s * x).exp() } else { 1.0 - 0.5 * (-s * x).exp() };
        let d = ks_one_sample(&EmpiricalDistribution::new(bm)?, cdf)?;
        details = json!({ "bm_vs_laplace_ks": d });
    }
    Ok(ExperimentOutput { csv, checks, details })
}

fn process_compare(cfg: &ExperimentConfig, runner: &Runner) -> Result<ExperimentOutput, CliError> {
    let field = cfg.field.build()?;
    let t = cfg.t_eval;
    let zero = field.is_zero();
    let threshold = cfg.threshold.unwrap_or(if zero { KS_PROCESS_NORMAL } else { KS_PROCESS_BM });
    let reference = if zero {
        None
    } else {
        let spec = BmSpec::new(t, cfg.dt, cfg.delta).streaming();
        Some(runner.try_replicates("bm", cfg.reps, |rng| simulate_excited_bm(&field, &spec, rng).map(|p| p.final_position))?)
    };
    let mut csv = String::from("n,t,ks,reference,walk_mean,walk_variance,reference_mean\n");
    let mut last = (0, 0.0);
    for &n in &cfg.n_list {
        let env = env_at(&field, n)?;
        let walk = runner.try_replicates(&format!("walk/n={n}"), cfg.lattice_reps(), |rng| scaled_process_sample(&env, t, rng))?;
        let s = moment_summary(&walk)?;
        let (ks, name, ref_mean) = match &reference {
            None => {
                let d = ks_one_sample(&EmpiricalDistribution::new(walk.clone())?, |x| normal_cdf(x / t.sqrt()))?;
                (d, "normal", 0.0)
            }
            Some(bm) => (ks_pair(&walk, bm)?.0, "excited-bm", mean(bm)),
        };
        let _ = writeln!(csv, "{n},{},{},{name},{},{},{}", Num(t), Num(ks), Num(s.mean), Num(s.variance), Num(ref_mean));
        last = (n, ks);
    }
    let against = if zero { "N(0, t)" } else { "Y(t)" };
    let checks = vec![Check::at_most(format!("KS(X^(n)(t), {against}), n = {}", last.0), last.1, threshold)];
    Ok(ExperimentOutput { csv, checks, details: json!({ "t": t, "reference": against }) })
}

/// Ordering violations, separations after coalescence, and whether the
/// pair met by `x`.
fn pair_summary(c: &CoupledPaths, x: f64) -> (usize, usize, bool) {
    let lo = &c.lower.values;
    let hi = &c.upper.values;
    let violations = lo.iter().zip(hi).filter(|(l, h)| l > h).count();
    let separations = match c.coalesced_at {
        Some(w) => c.lower.grid.iter().zip(lo.iter().zip(hi)).filter(|(g, (l, h))| **g >= w && l != h).count(),
        None => 0,
    };
    (violations, separations, c.coalesced_at.is_some_and(|w| w <= x + 1e-9))
}

fn coupled_pair(cfg: &ExperimentConfig, runner: &Runner) -> Result<ExperimentOutput, CliError> {
    let field = cfg.field.build()?;
    let x = cfg.x_eval[0];
    if x > cfg.x_max || x < 0.0 {
        return Err(CliError::Execution(format!("coalescence point {x} must lie in [0, x_max]")));
    }
    let pairs = runner.try_replicates("sde", cfg.reps, |rng| {
        simulate_coupled_pair(&field, cfg.a, cfg.v, cfg.v2, cfg.dx, cfg.x_max, rng).map(|c| pair_summary(&c, x))
    })?;
    let violations: usize = pairs.iter().map(|p| p.0).sum();
    let separations: usize = pairs.iter().map(|p| p.1).sum();
    let sde = proportion(pairs.iter().filter(|p| p.2).count() as u64, pairs.len() as u64)?;
    let closed = (field.is_zero() && cfg.a == 0.0).then(|| (-(cfg.v2 - cfg.v) / (2.0 * x)).exp());

    let mut csv = String::from("n,x,p_lattice,se_lattice,p_sde,se_sde,closed_form,z\n");
    let mut last_z = 0.0;
    for &n in &cfg.n_list {
        let env = env_at(&field, n)?;
        let (ka, kv) = lattice_anchor(cfg.a, cfg.v, n);
        let (_, kv2) = lattice_anchor(cfg.a, cfg.v2, n);
        let k = site(n, x).max(ka);
        let opts = WalkOptions { cap: cfg.cap, record_path: false, window: Some((ka.min(0) - 1, k)) };
        let met = runner.try_replicates(&format!("lattice/n={n}"), cfg.lattice_reps(), |rng| {
            multi_level_downcrossings(&env, ka, &[kv, kv2], &opts, rng).map(|c| c[0].get(k) == c[1].get(k))
        })?;
        let lat = proportion(met.iter().filter(|&&m| m).count() as u64, met.len() as u64)?;
        let se = lat.std_error.hypot(sde.std_error);
        let diff = sde.estimate - lat.estimate;
        let z = if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
        let _ = writeln!(
            csv,
            "{n},{},{},{},{},{},{},{}",
            Num(x),
            Num(lat.estimate),
            Num(lat.std_error),
            Num(sde.estimate),
            Num(sde.std_error),
            opt(closed),
            Num(z)
        );
        last_z = z;
    }
    let n = *cfg.n_list.last().expect("validated");
    let checks = vec![
        Check::zero("ordering violations", violations),
        Check::zero("separations after coalescence", separations),
        Check::at_most(format!("|z| of SDE vs lattice coalescence by x = {x}, n = {n}"), last_z.abs(), SIGMAS),
    ];
    Ok(ExperimentOutput {
        csv,
        checks,
        details: json!({ "paths": pairs.len(), "p_sde": sde, "closed_form": closed }),
    })
}

fn gw_check(cfg: &ExperimentConfig, runner: &Runner) -> Result<ExperimentOutput, CliError> {
    let params = GwParams::new(cfg.gw_p)?;
    let (k_max, initial) = (cfg.gw_k, cfg.gw_initial);
    let hits = runner.try_replicates("gw", cfg.reps, |rng| gw_simulate_extinct(&params, k_max, initial, rng))?;
    let sim = proportion(hits.iter().filter(|&&h| h).count() as u64, hits.len() as u64)?;
    let mut csv = String::from("k,closed_form,critical_reference,simulated,std_error\n");
    let mut worst_critical: f64 = 0.0;
    let mut closed_at_max = 0.0;
    for k in 1..=k_max {
        let closed = gw_extinction_prob(&params, k, initial)?;
        let reference = params.is_critical().then(|| (k as f64 / (k as f64 + 1.0)).powf(initial as f64));
        if let Some(r) = reference {
            worst_critical = worst_critical.max((closed - r).abs());
        }
        let (s, e) = if k == k_max { (Some(sim.estimate), Some(sim.std_error)) } else { (None, None) };
        let _ = writeln!(csv, "{k},{},{},{},{}", Num(closed), opt(reference), opt(s), opt(e));
        closed_at_max = closed;
    }
    // binomial sigma of the simulation under the closed-form probability
    let sigma = (closed_at_max * (1.0 - closed_at_max) / cfg.reps as f64).sqrt();
    let diff = (sim.estimate - closed_at_max).abs();
    let z = if sigma > 0.0 { diff / sigma } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
    let mut checks = vec![Check::at_most(format!("closed form vs simulation at k = {k_max}, sigmas"), z, SIGMAS)];
    if params.is_critical() {
        checks.push(Check::at_most("critical closed form vs (k/(k+1))^initial", worst_critical, CRITICAL_EXACT));
    }
    Ok(ExperimentOutput { csv, checks, details: json!({ "params": params, "simulated": sim }) })
}

fn recurrence(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let field = cfg.field.build()?;
    let r = classify_recurrence(&field)?;
    let mut csv = String::from("classification,method,c1_plus,c1_minus,c1_plus_exponent,c1_minus_exponent,total_drift,detail\n");
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{}",
        label(&r.classification),
        label(&r.method),
        Num(r.c1_plus.value),
        Num(r.c1_minus.value),
        opt(r.c1_plus.tail_exponent),
        opt(r.c1_minus.tail_exponent),
        opt(r.total_drift),
        quote(&r.detail)
    );
    Ok(ExperimentOutput { csv, checks: Vec::new(), details: serde_json::to_value(&r).unwrap_or(Value::Null) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_laws() {
        let xs = [25.0, 100.0, 400.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() + 0.5).abs() < 1e-12);
        assert!(log_log_slope(&xs[..1], &ys[..1]).is_none());
        assert!(log_log_slope(&xs, &[1.0, 0.0, 1.0]).is_none());
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(quote("plain"), "plain");
        assert_eq!(quote("a, b"), "\"a, b\"");
        assert_eq!(quote("say \"x\", y"), "\"say \"\"x\"\", y\"");
    }

    #[test]
    fn number_format() {
        assert_eq!(Num(0.0).to_string(), "0");
        assert_eq!(Num(1e-10).to_string(), "1e-10");
        assert_eq!(Num(-2.5e-7).to_string(), "-2.5e-7");
        assert_eq!(Num(0.125).to_string(), "0.125");
        assert_eq!(Num(f64::INFINITY).to_string(), "inf");
        assert_eq!(Num(3e20).to_string(), "3e20");
    }

    #[test]
    fn checks() {
        assert!(Check::at_most("x", 0.1, 0.1).passed);
        assert!(!Check::at_most("x", f64::NAN, 0.1).passed);
        assert!(Check::within("s", -0.5, -0.8, -0.2).passed);
        assert!(!Check::within("s", -1.0, -0.8, -0.2).passed);
        assert!(!Check::zero("c", 1).passed);
    }
}
