use proptest::prelude::*;

use super::*;
use crate::chains::{sample_w, ChainColumn};
use crate::stats::moment_summary;

fn ctx_from(eps: Vec<f64>) -> KernelContext {
    KernelContext::new(eps, 0.0).unwrap()
}

#[test]
fn kernel_examples() {
    let z = KernelContext::zero();
    let u = LatticeFunction::identity();
    let u2 = LatticeFunction::square();
    assert!((apply_q(&z, &LatticeFunction::one(), 4).unwrap() - 1.0).abs() < 1e-12);
    assert!((apply_q(&z, &u, 0).unwrap() - 2.0).abs() < 1e-12);
    assert!((apply_q(&z, &u2, 0).unwrap() - 6.0).abs() < 1e-12);
    let c = random_context(1, 50);
    assert!((apply_q(&c, &LatticeFunction::one(), 9).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn constant_excitation_has_geometric_closed_form() {
    // with eps = c the increments are geometric with mean 2 / (1 - c)
    for &c in &[-0.4, -0.1, 0.05, 0.3, 0.5] {
        let ctx = KernelContext::constant(c).unwrap();
        let q = apply_q_power(&ctx, &LatticeFunction::identity(), 30, 0).unwrap();
        let exact = 30.0 * 2.0 / (1.0 - c);
        assert!((q.value - exact).abs() < 1e-10, "c={c}: {} vs {exact}", q.value);
        assert!(q.bound <= 1e-12);
    }
}

#[test]
fn q0_power_examples() {
    let u = LatticeFunction::identity();
    let u2 = LatticeFunction::square();
    let f = random_function(3, 10);
    assert_eq!(apply_q0_power(&f, 0, 4).unwrap(), f.eval(4));
    assert_eq!(apply_q0_power(&u, 7, 0).unwrap(), 14.0);
    assert_eq!(apply_q0_power(&u2, 3, 0).unwrap(), 42.0);
    // closed forms against the kernel iteration at small powers
    let z = KernelContext::zero();
    for m in 0..6 {
        for r in 0..5 {
            let it_u = apply_q_power(&z, &u, m, r).unwrap().value;
            let it_u2 = apply_q_power(&z, &u2, m, r).unwrap().value;
            assert!((it_u - apply_q0_power(&u, m, r).unwrap()).abs() < 1e-11);
            assert!((it_u2 - apply_q0_power(&u2, m, r).unwrap()).abs() < 1e-10);
        }
    }
}

#[test]
fn r_tilde_examples() {
    let one = LatticeFunction::one();
    let ctx = random_context(4, 80);
    assert!(apply_r_tilde(&ctx, &one, 0).unwrap().abs() < 1e-12);
    for &c in &[0.1, -0.25, 0.5] {
        let ctx = KernelContext::constant(c).unwrap();
        let def = apply_r_tilde_definition(&ctx, &LatticeFunction::identity(), 0).unwrap().value;
        let rea = apply_r_tilde_rearranged(&ctx, &LatticeFunction::identity(), 0).unwrap().value;
        assert!((def - 2.0 * c).abs() < 1e-12, "{def}");
        assert!((rea - 2.0 * c).abs() < 1e-12, "{rea}");
    }
}

#[test]
fn r_tilde_is_first_order_part_of_r() {
    // R_eps - R~_eps is quadratic in the excitation size
    let base = random_context(5, 60);
    let u = LatticeFunction::identity();
    let mut prev = None;
    for k in 0..4 {
        let scale = 0.5f64.powi(k);
        let eps: Vec<f64> = (1..=60).map(|i| base.eps(i) * scale).collect();
        let ctx = ctx_from(eps);
        let diff = (apply_r(&ctx, &u, 2).unwrap() - apply_r_tilde(&ctx, &u, 2).unwrap()).abs();
        if let Some(p) = prev {
            let ratio: f64 = diff / p;
            assert!(ratio < 0.3, "ratio {ratio}");
        }
        prev = Some(diff);
    }
}

#[test]
fn coefficients() {
    assert_eq!(coefficient_a(1).unwrap(), 1.0);
    assert_eq!(coefficient_a(2).unwrap(), 0.5);
    assert_eq!(coefficient_a(3).unwrap(), 0.25);
    assert!((coefficient_b(1).unwrap() - 5.0).abs() < 1e-14);
    for l in 1..=30 {
        assert!((coefficient_a_series(l).unwrap() - coefficient_a(l).unwrap()).abs() < 1e-12);
        // sum_{i > l} i^2 2^{-i} = 2^{-l} (l^2 + 4l + 6)
        let closed = 0.5f64.powi(l as i32) * (4.0 * l as f64 + 6.0);
        assert!((coefficient_b(l).unwrap() - closed).abs() < 1e-12);
    }
    assert!(coefficient_a(0).is_err());
    assert!(coefficient_b(0).is_err());
}

#[test]
fn drift_expansion_examples() {
    let zero = drift_expansion_check(&DriftField::zero(), 50, 50).unwrap();
    assert_eq!(zero.lhs.abs() + zero.rhs.abs(), zero.gap);
    assert!(zero.gap < 1e-10);
    let one = drift_expansion_check(&DriftField::constant(1.0), 100, 100).unwrap();
    // eps = 1/200 everywhere: lhs = 2m c / (1 - c)
    let c = 1.0 / 200.0;
    assert!((one.lhs - 200.0 * c / (1.0 - c)).abs() < 1e-9, "{one:?}");
    assert!((one.rhs - 1.0).abs() < 1e-12);
    assert!(one.gap <= 0.5);
    let ind = DriftField::indicator(1.0, 0.0, 1.0).unwrap();
    assert!(drift_expansion_check(&ind, 20, 20).unwrap().gap < 0.5);
    let space = DriftField::custom(std::sync::Arc::new(|x: f64, _| x), 1.0, 1.0, false, false, None);
    assert!(drift_expansion_check(&space, 20, 20).is_err());
}

#[test]
fn truncation_is_certified() {
    let ctx = random_context(6, 200);
    let f = random_function(7, 30);
    let loose = apply_q_certified(&ctx.clone().with_tolerance(1e-4), &f, 3).unwrap();
    let tight = apply_q_certified(&ctx.clone().with_tolerance(1e-15), &f, 3).unwrap();
    assert!((loose.value - tight.value).abs() <= loose.bound + tight.bound);
    assert!(loose.lags < tight.lags);
    assert!(matches!(
        apply_q(&ctx.with_l_max(3), &LatticeFunction::square(), 0),
        Err(OperatorError::Truncation { .. })
    ));
}

#[test]
fn short_context_is_rejected() {
    let f = DriftField::custom(std::sync::Arc::new(|_, l: f64| 0.5 * l.sin()), 0.5, 0.5, true, false, None);
    let env = CookieEnvironment::new(f, 5).unwrap();
    let ctx = KernelContext::from_env(&env, 0, 10).unwrap();
    assert!(matches!(apply_q(&ctx, &LatticeFunction::identity(), 0), Err(OperatorError::ContextTooShort { .. })));
    assert!(KernelContext::new(vec![0.6], 0.0).is_err());
}

#[test]
fn kernel_mean_matches_sampled_w() {
    let env = CookieEnvironment::new(DriftField::indicator(1.5, 0.0, 2.0).unwrap(), 5).unwrap();
    let ctx = KernelContext::from_env(&env, 0, 1000).unwrap();
    let col = ChainColumn::new(&env, 0);
    let mut rng = crate::seed::rng_from_seed(8);
    for m in [1usize, 4, 12] {
        let q = apply_q_power(&ctx, &LatticeFunction::identity(), m, 0).unwrap().value;
        let xs: Vec<f64> = (0..40_000).map(|_| sample_w(&col, m as u64, &mut rng).unwrap() as f64).collect();
        let s = moment_summary(&xs).unwrap();
        let sigma = (s.variance / xs.len() as f64).sqrt();
        assert!((s.mean - q).abs() < 4.0 * sigma, "m={m}: MC {} kernel {q}", s.mean);
    }
}

#[test]
fn identity_suite_passes() {
    for c in identity_suite(0, 1e-10).unwrap() {
        assert!(c.passed, "{c:?}");
        assert!(c.cases > 0);
    }
}

#[test]
fn drift_csv_layout() {
    let row = drift_expansion_check(&DriftField::zero(), 4, 4).unwrap();
    let csv = drift_csv(&[row]);
    assert!(csv.starts_with("n,m,lhs,rhs,gap\n4,4,"));
}

fn eps_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.5..=0.5f64, 1..60)
}

fn window_vals() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, 0..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn normalization(eps in eps_vec(), r in 0u64..40) {
        let ctx = ctx_from(eps);
        prop_assert!((apply_q(&ctx, &LatticeFunction::one(), r).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn linearity(eps in eps_vec(), fv in window_vals(), gv in window_vals(),
                 a in -3.0..3.0f64, b in -3.0..3.0f64, r in 0u64..20) {
        let ctx = ctx_from(eps);
        let f = LatticeFunction::affine(fv, 1.0, 0.5);
        let g = LatticeFunction::affine(gv, -2.0, 0.25);
        let h = LatticeFunction::combine(a, &f, b, &g);
        let lhs = apply_q(&ctx, &h, r).unwrap();
        let rhs = a * apply_q(&ctx, &f, r).unwrap() + b * apply_q(&ctx, &g, r).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10);
    }

    #[test]
    fn monotonicity(eps in eps_vec(), fv in window_vals(), bump in prop::collection::vec(0.0..5.0f64, 30),
                    r in 0u64..20) {
        let ctx = ctx_from(eps);
        let f = LatticeFunction::affine(fv.clone(), 0.0, 1.0);
        let gv: Vec<f64> = (0..fv.len().max(30)).map(|i| f.eval(i as u64) + bump[i.min(29)]).collect();
        let g = LatticeFunction::affine(gv, 0.5, 1.0);
        prop_assert!(apply_q(&ctx, &f, r).unwrap() <= apply_q(&ctx, &g, r).unwrap() + 1e-12);
    }

    #[test]
    fn r_tilde_forms_agree(eps in eps_vec(), fv in window_vals(), al in -2.0..2.0f64,
                           be in -1.0..1.0f64, r in 0u64..20) {
        let ctx = ctx_from(eps);
        let h = LatticeFunction::affine(fv, al, be);
        let a = apply_r_tilde_definition(&ctx, &h, r).unwrap().value;
        let b = apply_r_tilde_rearranged(&ctx, &h, r).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-10, "{} vs {}", a, b);
    }

    #[test]
    fn variance_identity(i in 0usize..12, r in 0u64..30) {
        let u2 = LatticeFunction::square();
        let it = apply_q_power(&KernelContext::zero(), &u2, i, r).unwrap().value;
        prop_assert!((it - apply_q0_power(&u2, i, r).unwrap()).abs() <= 1e-10);
    }
}
