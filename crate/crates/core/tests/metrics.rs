//! Correlation metrics against a brute-force oracle, plus their invariances.

mod common;

use coae::eval::{plcc, srcc};
use common::{oracle_pearson, oracle_ranks, random_pair};
use coae::rng::Rng;
use proptest::prelude::*;

#[test]
fn matches_brute_force_oracle_on_200_pairs() {
    let mut rng = Rng::new(2024);
    for i in 0..200 {
        let (a, b) = random_pair(&mut rng, i % 2 == 0);
        let s = srcc(&a, &b).unwrap();
        let p = plcc(&a, &b).unwrap();
        let so = oracle_pearson(&oracle_ranks(&a), &oracle_ranks(&b));
        let po = oracle_pearson(&a, &b);
        assert!((s - so).abs() < 1e-12, "pair {i}: srcc {s} vs oracle {so}");
        assert!((p - po).abs() < 1e-12, "pair {i}: plcc {p} vs oracle {po}");
    }
}

#[test]
fn integer_cases_are_exactly_invariant() {
    let mut rng = Rng::new(7);
    for _ in 0..100 {
        let (a, b) = random_pair(&mut rng, true);
        let s = srcc(&a, &b).unwrap();
        let cube: Vec<f64> = a.iter().map(|x| x * x * x + x).collect();
        let exp: Vec<f64> = a.iter().map(|x| x.exp()).collect();
        assert_eq!(srcc(&cube, &b).unwrap(), s);
        assert_eq!(srcc(&exp, &b).unwrap(), s);
        assert_eq!(srcc(&b, &a).unwrap(), s);

        let p = plcc(&a, &b).unwrap();
        let scaled: Vec<f64> = a.iter().map(|x| 4.0 * x).collect();
        let halved: Vec<f64> = b.iter().map(|y| 0.5 * y).collect();
        assert_eq!(plcc(&scaled, &halved).unwrap(), p);
        assert_eq!(plcc(&b, &a).unwrap(), p);
        let shifted: Vec<f64> = a.iter().map(|x| 3.0 * x + 11.0).collect();
        assert!((plcc(&shifted, &b).unwrap() - p).abs() < 1e-12);
    }
}

#[test]
fn independent_long_vectors_are_uncorrelated() {
    let mut rng = Rng::new(99);
    for _ in 0..3 {
        let a: Vec<f64> = (0..1000).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..1000).map(|_| rng.uniform()).collect();
        assert!(srcc(&a, &b).unwrap().abs() < 0.1);
        assert!(plcc(&a, &b).unwrap().abs() < 0.1);
    }
}

proptest! {
    #[test]
    fn bounded_and_symmetric(
        pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..60),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let (Ok(s), Ok(t)) = (srcc(&a, &b), srcc(&b, &a)) {
            prop_assert!((-1.0..=1.0).contains(&s));
            prop_assert_eq!(s, t);
        }
        if let (Ok(p), Ok(q)) = (plcc(&a, &b), plcc(&b, &a)) {
            prop_assert!((-1.0..=1.0).contains(&p));
            prop_assert_eq!(p, q);
        }
    }

    #[test]
    fn srcc_ignores_increasing_transforms(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(s) = srcc(&a, &b) {
            let exp: Vec<f64> = a.iter().map(|x| x.exp()).collect();
            let cube: Vec<f64> = a.iter().map(|x| x.powi(3)).collect();
            prop_assert_eq!(srcc(&exp, &b).unwrap(), s);
            prop_assert_eq!(srcc(&cube, &b).unwrap(), s);
        }
    }

    #[test]
    fn plcc_ignores_positive_affine_maps(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40),
        scale in 0.1f64..10.0,
        shift in -10.0f64..10.0,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(p) = plcc(&a, &b) {
            let t: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
            let u: Vec<f64> = b.iter().map(|y| y / scale - shift).collect();
            prop_assert!((plcc(&t, &u).unwrap() - p).abs() < 1e-9);
        }
    }
}
