use closure14_core::rational::{int, rat, Rational};
use closure14_core::scalar_field::{ScalarFn, SVar, Value};
use proptest::prelude::*;

fn term(max_log: u32) -> impl Strategy<Value = ScalarFn> {
    (-6i64..=6, 1i64..=4, 0u32..4, -3i32..=3, 0u32..=max_log)
        .prop_map(|(n, d, a, b, l)| ScalarFn::term(rat(n, d), a, b, l))
}

fn func(with_log: bool) -> impl Strategy<Value = ScalarFn> {
    prop::collection::vec(term(u32::from(with_log)), 0..5)
        .prop_map(|ts| ts.iter().fold(ScalarFn::zero(), |acc, t| acc.add(t)))
}

fn point() -> impl Strategy<Value = (Rational, Rational)> {
    (-5i64..=5, 1i64..=5, 1i64..=6, 1i64..=5).prop_map(|(a, b, c, d)| (rat(a, b), rat(c, d)))
}

fn exact(v: Value) -> Rational {
    v.exact().cloned().expect("exact value")
}

proptest! {
    #[test]
    fn text_round_trip(f in func(true)) {
        let back: ScalarFn = f.to_string().parse().unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn ring_laws(f in func(true), g in func(true), h in func(true)) {
        prop_assert_eq!(f.add(&g), g.add(&f));
        prop_assert_eq!(f.mul(&g), g.mul(&f));
        prop_assert_eq!(f.mul(&g.add(&h)), f.mul(&g).add(&f.mul(&h)));
        prop_assert!(f.sub(&f).is_zero());
    }

    #[test]
    fn leibniz_and_mixed_partials(f in func(true), g in func(true)) {
        for v in [SVar::Mu, SVar::Lam] {
            prop_assert_eq!(f.mul(&g).diff(v), f.diff(v).mul(&g).add(&f.mul(&g.diff(v))));
        }
        prop_assert_eq!(f.diff(SVar::Mu).diff(SVar::Lam), f.diff(SVar::Lam).diff(SVar::Mu));
    }

    #[test]
    fn integration_inverts_differentiation(f in func(true)) {
        prop_assert_eq!(f.integrate(SVar::Mu).diff(SVar::Mu), f.clone());
        prop_assert_eq!(f.integrate(SVar::Lam).diff(SVar::Lam), f);
    }

    #[test]
    fn evaluation_is_a_homomorphism(f in func(false), g in func(false), (mu, lam) in point()) {
        let (x, y) = (exact(f.eval(&mu, &lam).unwrap()), exact(g.eval(&mu, &lam).unwrap()));
        prop_assert_eq!(exact(f.mul(&g).eval(&mu, &lam).unwrap()), &x * &y);
        prop_assert_eq!(exact(f.add(&g).eval(&mu, &lam).unwrap()), x + y);
    }

    #[test]
    fn logs_are_exact_at_unit_lambda(f in func(true), mu in -4i64..4) {
        let v = f.eval(&int(mu), &int(1)).unwrap();
        prop_assert!(v.exact().is_some());
    }

    #[test]
    fn derivative_matches_finite_difference(f in func(true), (mu, lam) in point()) {
        let (m, l) = (closure14_core::rational::to_f64(&mu), closure14_core::rational::to_f64(&lam));
        let h = 1e-5;
        let fd_mu = (f.eval_f64(m + h, l) - f.eval_f64(m - h, l)) / (2.0 * h);
        let fd_lam = (f.eval_f64(m, l + h * l) - f.eval_f64(m, l - h * l)) / (2.0 * h * l);
        let an_mu = f.diff(SVar::Mu).eval_f64(m, l);
        let an_lam = f.diff(SVar::Lam).eval_f64(m, l);
        prop_assert!((fd_mu - an_mu).abs() <= 1e-5 * (1.0 + an_mu.abs()), "{} vs {}", fd_mu, an_mu);
        prop_assert!((fd_lam - an_lam).abs() <= 1e-4 * (1.0 + an_lam.abs()), "{} vs {}", fd_lam, an_lam);
    }
}

#[test]
fn negative_power_at_zero_lambda_errors() {
    let f = ScalarFn::lam_pow(-1);
    assert!(f.eval(&int(1), &int(0)).is_err());
    assert_eq!(ScalarFn::zero().eval(&int(3), &int(0)).unwrap(), Value::Exact(int(0)));
}
