//! Exhaustive enumeration of short walk paths, used as an exact oracle.

use std::collections::BTreeMap;

use crate::env::CookieEnvironment;

/// A complete path that reaches the downcrossing rule within the length
/// limit, with its probability and downcrossing counts.
#[derive(Debug, Clone)]
pub(crate) struct EnumeratedPath {
    pub prob: f64,
    pub tau: u64,
    pub positions: Vec<i64>,
    pub downs: BTreeMap<i64, u64>,
}

/// Every decision sequence of at most `max_len` steps that reaches
/// `tau_a(v)`. Probabilities are exact products of the step rule.
pub(crate) fn downcross_paths(env: &CookieEnvironment, a: i64, v: u64, max_len: usize) -> Vec<EnumeratedPath> {
    let mut out = Vec::new();
    let mut visits = BTreeMap::new();
    visits.insert(0i64, 1u64);
    let mut state = State { positions: vec![0], visits, downs: BTreeMap::new(), prob: 1.0 };
    recurse(env, a, v, max_len, &mut state, &mut out);
    out
}

struct State {
    positions: Vec<i64>,
    visits: BTreeMap<i64, u64>,
    downs: BTreeMap<i64, u64>,
    prob: f64,
}

fn recurse(env: &CookieEnvironment, a: i64, v: u64, max_len: usize, s: &mut State, out: &mut Vec<EnumeratedPath>) {
    let x = *s.positions.last().unwrap();
    let visit = s.visits[&x];
    let p = env.p(visit, x);
    let downs_here = s.downs.get(&x).copied().unwrap_or(0);
    // a down-step here that is the (v+1)-th from a ends the path at time len-1
    if x == a && downs_here == v {
        out.push(EnumeratedPath {
            prob: s.prob * (1.0 - p),
            tau: s.positions.len() as u64 - 1,
            positions: s.positions.clone(),
            downs: s.downs.iter().filter(|(_, &c)| c > 0).map(|(&k, &c)| (k, c)).collect(),
        });
    }
    if s.positions.len() > max_len {
        return;
    }
    for (dir, q) in [(1i64, p), (-1i64, 1.0 - p)] {
        if dir == -1 && x == a && downs_here == v {
            continue;
        }
        let y = x + dir;
        let saved = s.prob;
        s.prob *= q;
        if dir == -1 {
            *s.downs.entry(x).or_insert(0) += 1;
        }
        *s.visits.entry(y).or_insert(0) += 1;
        s.positions.push(y);
        recurse(env, a, v, max_len, s, out);
        s.positions.pop();
        *s.visits.get_mut(&y).unwrap() -= 1;
        if dir == -1 {
            *s.downs.get_mut(&x).unwrap() -= 1;
        }
        s.prob = saved;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::DriftField;
    use crate::walk::{occupation_identity_check, simulate_walk, StopRule, WalkOptions};
    use std::sync::Arc;

    fn wavy_env() -> CookieEnvironment {
        let f = DriftField::custom(
            Arc::new(|x: f64, l: f64| 1.2 * (3.0 * x + 2.0 * l + 0.7).sin()),
            1.2,
            2.4,
            false,
            false,
            None,
        );
        CookieEnvironment::new(f, 1).unwrap()
    }

    #[test]
    fn occupation_identity_on_every_enumerated_path() {
        let env = wavy_env();
        let mut count = 0;
        for a in -2..=2 {
            for v in 0..=2 {
                for path in downcross_paths(&env, a, v, 12) {
                    let total: u64 = path.downs.values().sum();
                    assert_eq!(path.tau as i64, a + 2 * total as i64, "a={a} v={v} {:?}", path.positions);
                    assert_eq!(path.downs.get(&a).copied().unwrap_or(0), v);
                    count += 1;
                }
            }
        }
        assert!(count > 1000);
    }

    #[test]
    fn immediate_downcross_has_tau_zero() {
        let env = wavy_env();
        let paths = downcross_paths(&env, 0, 0, 0);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].tau, 0);
        assert!(paths[0].downs.is_empty());
        assert!((paths[0].prob - (1.0 - env.p(1, 0))).abs() < 1e-15);
    }

    #[test]
    fn hand_path_counts() {
        // 0,-1,0,1,0 followed by the second down-step from 0 (a = 0, v = 1)
        let env = CookieEnvironment::new(DriftField::zero(), 1).unwrap();
        let paths = downcross_paths(&env, 0, 1, 6);
        let p = paths.iter().find(|p| p.positions == [0, -1, 0, 1, 0]).expect("path enumerated");
        assert_eq!(p.tau, 4);
        assert_eq!(p.downs.get(&0), Some(&1));
        assert_eq!(p.downs.get(&1), Some(&1));
        assert!((p.prob - 1.0 / 32.0).abs() < 1e-15);
        // 0,1,0,1,0 has not yet stepped down from 0, so it cannot stop there
        assert!(paths.iter().all(|p| p.positions != [0, 1, 0, 1, 0]));
    }

    #[test]
    fn simulated_runs_match_enumerated_tau_law() {
        let field = DriftField::custom(
            Arc::new(|x: f64, l: f64| 1.2 * (3.0 * x + 2.0 * l + 0.7).sin()),
            1.2,
            2.4,
            false,
            false,
            None,
        )
        .with_support_radius(2.0)
        .unwrap();
        let env = CookieEnvironment::new(field, 1).unwrap();
        let paths = downcross_paths(&env, -1, 1, 10);
        let mut exact = BTreeMap::new();
        for p in &paths {
            *exact.entry(p.tau).or_insert(0.0) += p.prob;
        }
        let reps = 50_000;
        let mut hist = BTreeMap::new();
        let mut rng = crate::seed::rng_from_seed(42);
        for _ in 0..reps {
            let run = simulate_walk(&env, StopRule::Downcross { a: -1, v: 1 }, &WalkOptions::with_cap(100_000), &mut rng);
            if run.censored {
                continue;
            }
            assert!(occupation_identity_check(&run).unwrap().passed);
            *hist.entry(run.steps).or_insert(0u32) += 1;
        }
        for (tau, p) in exact {
            let f = hist.get(&tau).copied().unwrap_or(0) as f64 / reps as f64;
            let sigma = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((f - p).abs() < 4.5 * sigma + 1e-9, "tau={tau}: {f} vs {p}");
        }
    }
}
