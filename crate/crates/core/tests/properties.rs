use proptest::prelude::*;
use strongcons::crm::INNER_TOL;
use strongcons::sampling::{measurable_vector, nonneg_perturbation, trial_rng};
use strongcons::{
    cond_expectation, cond_law_equal, make_cert_equiv, FiniteProbSpace, OuterMap, RandomVariable, RandomVector,
    SigmaAlgebra, SpaceRef, Utility,
};

fn space_strategy() -> impl Strategy<Value = SpaceRef> {
    prop::collection::vec(0.05f64..1.0, 2..12).prop_map(|w| {
        let total: f64 = w.iter().sum();
        FiniteProbSpace::shared(w.iter().map(|x| x / total).collect()).unwrap()
    })
}

/// Space with three random partitions given by block labels.
fn space_and_partitions() -> impl Strategy<Value = (SpaceRef, [SigmaAlgebra; 3], Vec<f64>)> {
    space_strategy().prop_flat_map(|s| {
        let n = s.len();
        let labels = prop::collection::vec(0usize..4, n);
        (Just(s), labels.clone(), labels.clone(), labels, prop::collection::vec(-10.0f64..10.0, n)).prop_map(
            |(s, a, b, c, f)| {
                let alg = |l: &Vec<usize>| SigmaAlgebra::from_labels(&s, l).unwrap();
                let algs = [alg(&a), alg(&b), alg(&c)];
                (s, algs, f)
            },
        )
    })
}

proptest! {
    #[test]
    fn refinement_is_a_partial_order((_s, [a, b, c], _f) in space_and_partitions()) {
        prop_assert!(a.refines(&a).unwrap());
        if a.refines(&b).unwrap() && b.refines(&a).unwrap() {
            prop_assert_eq!(&a, &b);
        }
        if a.refines(&b).unwrap() && b.refines(&c).unwrap() {
            prop_assert!(a.refines(&c).unwrap());
        }
        let j = a.join(&b).unwrap();
        prop_assert!(j.refines(&a).unwrap() && j.refines(&b).unwrap());
        let m = a.meet(&b).unwrap();
        prop_assert!(a.refines(&m).unwrap() && b.refines(&m).unwrap());
    }

    #[test]
    fn conditional_expectation_laws((s, [a, b, _], f) in space_and_partitions(), k in -3.0f64..3.0, c in -5.0f64..5.0) {
        let fine = a.join(&b).unwrap();
        let x = RandomVariable::new(&s, f).unwrap();
        let tower = cond_expectation(&cond_expectation(&x, &fine).unwrap(), &a).unwrap();
        prop_assert!(tower.max_abs_diff(&cond_expectation(&x, &a).unwrap()) < 1e-12);

        let y = x.map(|v| v * v - 1.0);
        let lhs = cond_expectation(&x.zip_with(&y, |p, q| k * p + q).unwrap(), &b).unwrap();
        let (ex, ey) = (cond_expectation(&x, &b).unwrap(), cond_expectation(&y, &b).unwrap());
        let rhs = ex.zip_with(&ey, |p, q| k * p + q).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);

        let konst = RandomVariable::constant(&s, c);
        prop_assert!(cond_expectation(&konst, &a).unwrap().max_abs_diff(&konst) < 1e-12);
        prop_assert!((cond_expectation(&x, &a).unwrap().expectation() - x.expectation()).abs() < 1e-10);
        prop_assert!(cond_expectation(&x, &a).unwrap().is_measurable(&a).unwrap());
    }

    #[test]
    fn diagonal_inverse_round_trips(t in -50.0f64..50.0, a in 0.2f64..5.0, b in -3.0f64..3.0, beta in 0.1f64..2.0) {
        let lin = Utility::linear(a, b, vec![0.25, 0.75]).unwrap();
        prop_assert!((lin.diag_inverse(lin.diag(t), INNER_TOL).unwrap() - t).abs() < 1e-9);
        let exp = Utility::exponential(a, 0.0, beta, vec![0.5, 0.5]).unwrap();
        prop_assert!((exp.diag_inverse(exp.diag(t), INNER_TOL).unwrap() - t).abs() < 1e-9);
    }

    #[test]
    fn shifted_exponential_round_trips(t in -50.0f64..5.0, a in 0.2f64..5.0, b in -3.0f64..3.0, beta in 0.1f64..2.0) {
        // beyond beta*t ~ 37 the tail drops below one ulp of b
        let exp = Utility::exponential(a, b, beta, vec![0.5, 0.5]).unwrap();
        prop_assert!((exp.diag_inverse(exp.diag(t), INNER_TOL).unwrap() - t).abs() < 1e-9);
    }

    #[test]
    fn bisection_matches_closed_form(t in -5.0f64..5.0, beta in 0.1f64..2.0, b in -2.0f64..2.0) {
        let u = Utility::exponential(1.0, b, beta, vec![1.0]).unwrap();
        let y = u.diag(t);
        let closed = u.diag_inverse(y, INNER_TOL).unwrap();
        let bisect = u.diag_inverse_bisect(y, 0.0).unwrap();
        prop_assert!((closed - bisect).abs() < 1e-10, "closed {closed} bisect {bisect}");
    }

    #[test]
    fn equal_conditional_laws_give_equal_conditional_means(f in prop::collection::vec(-5.0f64..5.0, 12), seed in 0u64..1000) {
        let s = FiniteProbSpace::uniform(6).unwrap();
        let g = SigmaAlgebra::new(&s, vec![vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let x = RandomVector::from_flat(&s, 2, f).unwrap();
        let shift = (seed % 3) as usize;
        let perm: Vec<usize> = (0..6).map(|k| (k / 3) * 3 + (k % 3 + shift) % 3).collect();
        let y = x.permute_rows(&perm);
        prop_assert!(cond_law_equal(&x, &y, &g).unwrap());
        for j in 0..2 {
            let (ex, ey) = (cond_expectation(&x.coordinate(j), &g).unwrap(), cond_expectation(&y.coordinate(j), &g).unwrap());
            prop_assert!(ex.max_abs_diff(&ey) < 1e-12);
        }
    }
}

#[test]
fn certainty_equivalent_is_isotone_on_a_thousand_pairs() {
    let s = FiniteProbSpace::shared(vec![0.1, 0.15, 0.2, 0.25, 0.3]).unwrap();
    let t = SigmaAlgebra::discrete(&s);
    let g = SigmaAlgebra::new(&s, vec![vec![0, 1], vec![2, 3, 4]]).unwrap();
    let u = Utility::exponential(1.0, 0.0, 1.3, vec![0.6, 0.4]).unwrap();
    let rho = make_cert_equiv(u, OuterMap::Negation, &t, &g).unwrap();
    for k in 0..1000 {
        let mut rng = trial_rng(11, k);
        let y = measurable_vector(&mut rng, &t, 2, -3.0, 3.0);
        let d = nonneg_perturbation(&mut rng, &t, 2, 0.3, true);
        let x = y.zip_with(&d, |a, b| a + b).unwrap();
        let (rx, ry) = (rho.eval(&x).unwrap(), rho.eval(&y).unwrap());
        assert!(rx.values().iter().zip(ry.values()).all(|(p, q)| p <= &(q + 1e-12)), "pair {k}");
    }
}

#[test]
fn cash_equivalents_always_invert() {
    let s = FiniteProbSpace::uniform(8).unwrap();
    let t = SigmaAlgebra::discrete(&s);
    let g = SigmaAlgebra::new(&s, vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]).unwrap();
    let u = Utility::exponential(2.0, 1.0, 0.8, vec![0.2, 0.3, 0.5]).unwrap();
    let rho = make_cert_equiv(u, OuterMap::AffineNeg { a: 3.0, c: -1.0 }, &t, &g).unwrap();
    for k in 0..100 {
        let mut rng = trial_rng(5, k);
        let x = measurable_vector(&mut rng, &t, 3, -4.0, 4.0);
        let v = rho.eval(&x).unwrap();
        let alpha = rho.f_rho_inverse(&v, INNER_TOL).unwrap();
        assert!(rho.f_rho(&alpha).unwrap().max_abs_diff(&v) < 1e-10);
    }
}
