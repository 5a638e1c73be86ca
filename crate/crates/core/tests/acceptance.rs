//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 2 and 7 are known not to hold at desk scale (see the README);
//! they are evaluated and reported like the others but do not fail the
//! target. Any other FAIL, or an execution error, does.

use std::process::ExitCode;
use std::time::Instant;

use cookiewalk::cli::{execute, run, Check, Experiment, ExperimentConfig, ExperimentOutput, Num, Runner};
use cookiewalk::env::{DriftField, DriftSpec};
use cookiewalk::sde::{simulate_ray_knight, DiffusionPath};
use cookiewalk::seed::replicate_rng;

const KNOWN_RED: [u32; 2] = [2, 7];
const SEED: u64 = 20_251_014;

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn preset(e: Experiment) -> ExperimentConfig {
    ExperimentConfig { seed: SEED, ..ExperimentConfig::preset(e) }
}

fn exec(cfg: &ExperimentConfig) -> ExperimentOutput {
    let runner = Runner::new(cfg.experiment, cfg.seed, threads()).expect("pool");
    match execute(cfg, &runner) {
        Ok(o) => o,
        Err(e) => panic!("{} failed to run: {e}", cfg.experiment),
    }
}

struct Verdict {
    passed: bool,
    detail: String,
}

fn describe(checks: &[&Check]) -> String {
    checks.iter().map(|c| format!("{} = {} ({})", c.name, Num(c.value), c.condition)).collect::<Vec<_>>().join("; ")
}

fn all_of(checks: &[&Check]) -> Verdict {
    Verdict { passed: checks.iter().all(|c| c.passed), detail: describe(checks) }
}

fn get<'a>(o: &'a ExperimentOutput, prefix: &str) -> &'a Check {
    o.check(prefix).unwrap_or_else(|| panic!("no check `{prefix}` in {:?}", o.checks))
}

fn timed(limit: f64, f: impl FnOnce() -> Verdict) -> Verdict {
    let t = Instant::now();
    let mut v = f();
    let s = t.elapsed().as_secs_f64();
    v.detail.push_str(&format!("; runtime {s:.1}s (< {limit}s)"));
    v.passed &= s < limit;
    v
}

fn operator_identities() -> Verdict {
    timed(10.0, || {
        let o = exec(&preset(Experiment::VerifyOperators));
        all_of(&o.checks.iter().collect::<Vec<_>>())
    })
}

fn drift_expansion() -> Verdict {
    timed(60.0, || {
        let cfg = ExperimentConfig {
            field: DriftSpec::constant(1.0),
            n_list: vec![25, 100, 400],
            reps: 2000,
            ..preset(Experiment::DriftSweep)
        };
        let (a, b) = (exec(&cfg), exec(&cfg));
        let rows = |o: &ExperimentOutput| o.csv.lines().map(|l| l.split(',').take(6).collect::<Vec<_>>().join(",")).collect::<Vec<_>>();
        let deterministic = rows(&a) == rows(&b);
        let mut v = all_of(&[get(&a, "drift gap at n = 100"), get(&a, "log-log slope")]);
        v.passed &= deterministic;
        v.detail.push_str(&format!("; deterministic {deterministic}"));
        v
    })
}

fn variance_expansion() -> Verdict {
    timed(60.0, || {
        let cfg = ExperimentConfig { n_list: vec![50], reps: 100_000, ..preset(Experiment::DriftSweep) };
        let o = exec(&cfg);
        all_of(&[get(&o, "Var W(m)")])
    })
}

fn chains_vs_walk() -> (Verdict, ExperimentOutput) {
    let o = exec(&preset(Experiment::ChainsVsWalk));
    (all_of(&[get(&o, "KS(walk, chains)"), get(&o, "walk censored")]), o)
}

fn galton_watson() -> Verdict {
    let critical = ExperimentConfig { gw_p: 0.5, gw_k: 50, gw_initial: 1, ..preset(Experiment::GwCheck) };
    let c = exec(&critical);
    let subcritical = ExperimentConfig { gw_p: 0.52, gw_k: 50, gw_initial: 20, reps: 10_000, ..preset(Experiment::GwCheck) };
    let s = exec(&subcritical);
    all_of(&[get(&c, "critical closed form"), get(&s, "closed form vs simulation")])
}

fn ray_knight() -> (Verdict, ExperimentOutput) {
    let o = exec(&preset(Experiment::RayKnightCompare));
    (all_of(&[get(&o, "KS(chains, SDE)"), get(&o, "largest KS increase")]), o)
}

fn inverse_local_time() -> (Verdict, ExperimentOutput) {
    let o = exec(&preset(Experiment::TauCompare));
    (all_of(&[get(&o, "KS(tau walk"), get(&o, "zero field")]), o)
}

fn scaled_process() -> Verdict {
    let zero = ExperimentConfig { field: DriftSpec::constant(0.0), ..preset(Experiment::ProcessCompare) };
    let a = exec(&zero);
    let b = exec(&preset(Experiment::ProcessCompare));
    let c = exec(&preset(Experiment::ExpTimeCompare));
    all_of(&[get(&a, "KS(X^(n)(t)"), get(&b, "KS(X^(n)(t)"), get(&c, "KS(geometric-time")])
}

fn coupled_pair() -> Verdict {
    let o = exec(&preset(Experiment::CoupledPair));
    all_of(&o.checks.iter().collect::<Vec<_>>())
}

/// Anchor, nonnegativity and absorption on recorded diffusion profiles.
fn path_invariants(p: &DiffusionPath) -> bool {
    let anchored = p.value_at(p.a) == Some(p.v);
    let nonnegative = p.values.iter().all(|&v| v >= 0.0);
    let right = p.w_plus.is_none_or(|w| p.grid.iter().zip(&p.values).all(|(x, v)| *x < w || *v == 0.0));
    let left = p.w_minus.is_none_or(|w| p.grid.iter().zip(&p.values).all(|(x, v)| *x > w || *x >= p.a || *v == 0.0));
    anchored && nonnegative && right && left
}

fn exact_identities(outputs: &[(&str, &ExperimentOutput)]) -> Verdict {
    // unwindowed walks, so that every uncensored run has a checkable time
    let cfg = ExperimentConfig {
        n_list: vec![5, 10],
        a: -0.5,
        x_eval: vec![0.0],
        walk_window: None,
        cap: 2_000_000,
        reps: 2000,
        ..preset(Experiment::ChainsVsWalk)
    };
    let extra = exec(&cfg);
    let field = DriftField::indicator(1.0, 0.0, 1.0).expect("field");
    let bad_paths = (0..1000u64)
        .filter(|&i| {
            let mut rng = replicate_rng(SEED, 10, i);
            let p = simulate_ray_knight(&field, -0.5, 1.0, 1e-3, 2.0, &mut rng).expect("path");
            !path_invariants(&p)
        })
        .count();
    let mut checks: Vec<Check> = Vec::new();
    let mut checked_runs = 0;
    for (name, o) in outputs.iter().copied().chain(std::iter::once(("unwindowed walks", &extra))) {
        for c in o.checks.iter().filter(|c| c.name.contains("identity failures") || c.name.contains("invariant failures")) {
            checks.push(Check { name: format!("{name}: {}", c.name), ..c.clone() });
        }
        checked_runs += o.details.get("occupation_runs").and_then(|v| v.as_u64()).unwrap_or(0);
    }
    checks.push(Check::zero("diffusion path invariant failures (1000 paths)", bad_paths));
    let mut v = all_of(&checks.iter().collect::<Vec<_>>());
    v.passed &= checked_runs > 0;
    v.detail.push_str(&format!("; occupation identity checked on {checked_runs} uncensored unwindowed walk runs"));
    v
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let small = |e: Experiment| {
        let mut c = ExperimentConfig {
            n_list: vec![5, 10],
            reps: 1000,
            dx: 1e-2,
            dt: 1e-2,
            x_max: 2.0,
            laplace_window: 20.0,
            lattice_reps: None,
            ..preset(e)
        };
        if e == Experiment::DriftSweep {
            c.n_list = vec![10, 20];
        }
        if e == Experiment::ChainsVsWalk {
            c.walk_window = Some([-1.0, 0.0]);
        }
        c
    };
    let mut mismatches = Vec::new();
    for e in Experiment::ALL {
        let mut csvs = Vec::new();
        for (k, t) in [1usize, 3, 1].into_iter().enumerate() {
            let cfg = ExperimentConfig { out_dir: dir.path().join(format!("{e}-{k}")), ..small(e) };
            if let Err(err) = run(&cfg, t) {
                panic!("{e} failed to run: {err}");
            }
            csvs.push(std::fs::read(cfg.out_dir.join("results.csv")).expect("results.csv"));
        }
        if csvs.windows(2).any(|w| w[0] != w[1]) {
            mismatches.push(e.name());
        }
    }
    Verdict {
        passed: mismatches.is_empty(),
        detail: format!("{} experiments at 1, 3 and again 1 threads; mismatches {mismatches:?}", Experiment::ALL.len()),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let report = |id: u32, name: &'static str, v: Verdict, results: &mut Vec<(u32, &str, Verdict)>| {
        let tag = if v.passed { "PASS" } else { "FAIL" };
        let note = if !v.passed && KNOWN_RED.contains(&id) { " [known, not met at desk scale]" } else { "" };
        println!("{tag} criterion {id:>2} {name}{note}: {}", v.detail);
        results.push((id, name, v));
    };
    report(1, "operator identity suite", operator_identities(), &mut results);
    report(2, "drift expansion", drift_expansion(), &mut results);
    report(3, "variance expansion", variance_expansion(), &mut results);
    let (v4, o4) = chains_vs_walk();
    report(4, "chains vs walk in law", v4, &mut results);
    report(5, "Galton-Watson extinction", galton_watson(), &mut results);
    let (v6, o6) = ray_knight();
    report(6, "lattice profile vs diffusion", v6, &mut results);
    let (v7, o7) = inverse_local_time();
    report(7, "inverse local time", v7, &mut results);
    report(8, "scaled process and random-time marginals", scaled_process(), &mut results);
    report(9, "coupled pair", coupled_pair(), &mut results);
    report(10, "exact identities on simulated runs", exact_identities(&[("chains-vs-walk", &o4), ("ray-knight-compare", &o6), ("tau-compare", &o7)]), &mut results);
    report(11, "determinism across thread counts", determinism(), &mut results);

    let unexpected: Vec<u32> = results.iter().filter(|(id, _, v)| !v.passed && !KNOWN_RED.contains(id)).map(|r| r.0).collect();
    let passed = results.iter().filter(|r| r.2.passed).count();
    println!("{passed}/{} criteria passed in {:.0}s", results.len(), start.elapsed().as_secs_f64());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
