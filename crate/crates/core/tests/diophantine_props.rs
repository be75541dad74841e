use dirlab_core::diophantine::{
    bad_approx_score, di_sigma_scan, dirichlet_solution, dynamical_di_indicator, liouville_pair,
    rational_pair, sigma_improved_at, DiVerdict,
};
use dirlab_core::flows::WeightVector;
use dirlab_core::real::{plastic_number, real};
use dirlab_core::Real;
use proptest::prelude::*;

fn plastic_vector() -> [Real; 2] {
    let z = plastic_number();
    [z, z * z]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dirichlet_always_has_a_solution(v1 in 0.0f64..1.0, v2 in 0.0f64..1.0, v3 in 0.0f64..1.0, q in 1.0f64..3000.0, three in any::<bool>()) {
        let v: Vec<Real> = if three { vec![real(v1), real(v2), real(v3)] } else { vec![real(v1), real(v2)] };
        let sol = dirichlet_solution(&v, q).unwrap();
        prop_assert!(sol.q >= 1 && sol.q as f64 <= q);
        prop_assert!(sol.defect < q.powf(-1.0 / v.len() as f64));
    }

    #[test]
    fn improvement_is_monotone_in_sigma(v1 in 0.0f64..1.0, v2 in 0.0f64..1.0, s1 in 0.05f64..0.95, s2 in 0.05f64..0.95) {
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let v = [real(v1), real(v2)];
        let r = WeightVector::equal();
        let weak = di_sigma_scan(v, hi, r, 10.0, 1e3, 12).unwrap();
        let strong = di_sigma_scan(v, lo, r, 10.0, 1e3, 12).unwrap();
        prop_assert!(weak.failures.iter().all(|q| strong.failures.contains(q)));
        for q in [20.0, 200.0] {
            if sigma_improved_at(v, lo, r, q) {
                prop_assert!(sigma_improved_at(v, hi, r, q));
            }
        }
    }

    #[test]
    fn score_ignores_integer_shifts(v1 in 0.0f64..1.0, v2 in 0.0f64..1.0, k1 in -5i32..5, k2 in -5i32..5) {
        let r = WeightVector::new(2.0 / 3.0, 1.0 / 3.0).unwrap();
        let v = [real(v1), real(v2)];
        let shifted = [v[0] + Real::from(k1), v[1] + Real::from(k2)];
        let a = bad_approx_score(v, r, 500).unwrap();
        let b = bad_approx_score(shifted, r, 500).unwrap();
        prop_assert!((a.score - b.score).abs() <= 1e-9 * a.score.max(1e-12));
    }
}

#[test]
fn rationals_are_improved_and_scored_zero() {
    let v = rational_pair([1, 2], 7);
    let r = WeightVector::equal();
    assert!(bad_approx_score(v, r, 100).unwrap().score < 1e-25);
    assert!(di_sigma_scan(v, 0.5, r, 20.0, 1e4, 20).unwrap().improvement_compatible());
    assert_eq!(dynamical_di_indicator(v, r, 30.0).unwrap().verdict, DiVerdict::ImprovementEvidence);
}

#[test]
fn plastic_vector_regression() {
    let score = bad_approx_score(plastic_vector(), WeightVector::equal(), 100_000).unwrap();
    assert!((score.score - 0.10425813556).abs() < 1e-10);
    assert_eq!(score.argmin_q, 73396);
}

#[test]
fn liouville_regression() {
    let score = bad_approx_score(liouville_pair(4), WeightVector::equal(), 100_000).unwrap();
    assert_eq!(score.argmin_q, 9109);
    assert!((score.score - 7.4e-3).abs() < 1e-4);
}

#[test]
fn invalid_scan_parameters_are_rejected() {
    let v = plastic_vector();
    let r = WeightVector::equal();
    assert!(di_sigma_scan(v, 1.0, r, 10.0, 100.0, 5).is_err());
    assert!(di_sigma_scan(v, 0.5, r, 100.0, 10.0, 5).is_err());
    assert!(dirichlet_solution(&[], 10.0).is_err());
    assert!(dirichlet_solution(&v, 0.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn score_is_nonincreasing_in_q_max(v1 in 0.0f64..1.0, v2 in 0.0f64..1.0, q in 1u64..400, extra in 0u64..400) {
        let v = [real(v1), real(v2)];
        let r = WeightVector::equal();
        let a = bad_approx_score(v, r, q).unwrap();
        let b = bad_approx_score(v, r, q + extra).unwrap();
        prop_assert!(b.score <= a.score && a.score >= 0.0);
    }
}
