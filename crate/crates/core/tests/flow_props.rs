use dirlab_core::flows::{
    conjugated_shift, evolve, flow_matrix, systole_series, u_matrix, TrajectoryConfig, WeightVector,
};
use dirlab_core::lattice::sampling::random_test_lattice;
use dirlab_core::lattice::systole;
use dirlab_core::real::real;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn weights(r1: f64) -> WeightVector {
    WeightVector::new(r1, 1.0 - r1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_is_a_one_parameter_group(r1 in 0.05f64..0.95, t in -5.0f64..5.0, s in -5.0f64..5.0) {
        let r = weights(r1);
        let lhs = flow_matrix(r, t).mul(&flow_matrix(r, s));
        let rhs = flow_matrix(r, t + s);
        let scale = rhs.max_abs();
        prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-13 * scale);
        prop_assert!((flow_matrix(r, t).det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flow_conjugates_unipotents(r1 in 0.05f64..0.95, t in 0.0f64..4.0, v1 in -1.0f64..1.0, v2 in -1.0f64..1.0) {
        let r = weights(r1);
        let f = flow_matrix(r, t);
        let lhs = f.mul(&u_matrix([v1, v2]));
        let rhs = u_matrix(conjugated_shift([v1, v2], r, t)).mul(&f);
        prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-12 * lhs.max_abs());
    }

    #[test]
    fn evolution_composes(seed in any::<u64>(), r1 in 0.1f64..0.9, t1 in 0.0f64..3.0, t2 in 0.0f64..3.0) {
        let r = weights(r1);
        let lattice = random_test_lattice(3, &mut ChaCha8Rng::seed_from_u64(seed));
        let direct = evolve(&lattice, r, t1 + t2).unwrap();
        let stepwise = evolve(&evolve(&lattice, r, t1).unwrap(), r, t2).unwrap();
        let (a, b) = (systole(&direct).unwrap(), systole(&stepwise).unwrap());
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn weights_are_validated() {
    assert!(WeightVector::new(0.5, 0.6).is_err());
    assert!(WeightVector::new(0.0, 1.0).is_err());
    assert!(WeightVector::new(2.0 / 3.0, 1.0 / 3.0).is_ok());
}

#[test]
fn rational_vector_trajectory_decays() {
    let cfg = TrajectoryConfig::with_default_sampling(20.0).unwrap();
    let series = systole_series([real(0.5), real(0.25)], WeightVector::equal(), &cfg).unwrap();
    assert!(series.max_from(15.0) < 0.05);
}

#[test]
fn series_starts_in_the_standard_lattice() {
    let cfg = TrajectoryConfig::with_default_sampling(1.0).unwrap();
    let series = systole_series([real(0.3), real(0.7)], WeightVector::equal(), &cfg).unwrap();
    assert!(!series.is_empty());
    assert!(series.max() <= 1.0 + 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn renormalization_step_does_not_matter(seed in any::<u64>(), t in 0.0f64..20.0) {
        use dirlab_core::flows::evolve_with_step;
        let r = WeightVector::equal();
        let lattice = random_test_lattice(3, &mut ChaCha8Rng::seed_from_u64(seed));
        let coarse = systole(&evolve_with_step(&lattice, r, t, 0.5).unwrap()).unwrap();
        let fine = systole(&evolve_with_step(&lattice, r, t, 0.25).unwrap()).unwrap();
        prop_assert!((coarse - fine).abs() < 1e-6, "{coarse} vs {fine}");
    }
}
