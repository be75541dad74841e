use dirlab_core::equidist::{
    check_nondegenerate, curve_equidist_experiment, line_equidist_experiment, pairwise_sum, siegel_value,
    CircleArc, CurveSpec, Density, Observable, PolynomialCurve, Sampling, ESCAPE_EPS,
};
use dirlab_core::flows::{LineSpec, Trajectory, WeightVector, DEFAULT_RENORM_STEP};
use dirlab_core::real::{real, sqrt_real};
use dirlab_core::{Error, Lattice};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Haar average of the Siegel transform estimated from random late-time orbit points.
fn orbit_siegel_average(radius: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::new();
    for _ in 0..100 {
        // Double-double coordinates, so the start point is not a short dyadic rational.
        let mut coord = || real(rng.random_range(0.0..1.0)) + real(rng.random_range(0.0..1.0) * 1e-17);
        let v = [coord(), coord()];
        let mut times: Vec<f64> = (0..100).map(|_| rng.random_range(20.0..40.0)).collect();
        times.sort_by(f64::total_cmp);
        let mut traj = Trajectory::horospherical(v, WeightVector::equal(), DEFAULT_RENORM_STEP).unwrap();
        for t in times {
            traj.advance_to(t).unwrap();
            values.push(siegel_value(&traj.lattice(), radius).unwrap());
        }
    }
    pairwise_sum(&values) / values.len() as f64
}

#[test]
fn siegel_transform_matches_its_haar_mean() {
    for radius in [0.5f64, 0.75] {
        let target = (2.0 * radius).powi(3);
        let avg = orbit_siegel_average(radius, 11);
        assert!((avg - target).abs() / target < 0.1, "R = {radius}: {avg} vs {target}");
    }
}

#[test]
fn siegel_counts_on_the_standard_lattice() {
    let z3 = Lattice::standard(3).unwrap();
    assert_eq!(siegel_value(&z3, 1.0).unwrap(), 0.0);
    let squeezed = Lattice::new(dirlab_core::Mat::diagonal(&[0.3, 1.0, 1.0 / 0.3])).unwrap();
    // ±e1 and ±2e1 and ±3e1 have sup-norm below 1.
    assert_eq!(siegel_value(&squeezed, 1.0).unwrap(), 6.0);
    assert!(siegel_value(&z3, 1.5).is_err());
}

fn plastic_line() -> LineSpec {
    LineSpec::through_plastic_pair((0.0, 1.0)).unwrap()
}

fn siegel_half() -> Observable {
    Observable::siegel_ball(0.75).unwrap()
}

#[test]
fn doubling_the_grid_stays_within_the_error_estimate() {
    let x0 = Lattice::standard(3).unwrap();
    let run = |k: usize| {
        let grid = Sampling::new(25 * k, 8.0, 200 * k).unwrap();
        line_equidist_experiment(&plastic_line(), &x0, &Density::uniform(), WeightVector::equal(), siegel_half(), grid).unwrap()
    };
    let (coarse, fine) = (run(1), run(2));
    let change = (fine.average - coarse.average).abs();
    assert!(change < coarse.quadrature_error, "change {change} vs estimate {}", coarse.quadrature_error);
    for r in [&coarse, &fine] {
        assert!(r.min_sample >= 0.0 && r.average <= r.max_sample);
        assert_eq!(r.max_sample % 2.0, 0.0);
    }
}

#[test]
fn mirrored_intervals_agree() {
    let x0 = Lattice::standard(3).unwrap();
    let grid = Sampling::new(32, 6.0, 120).unwrap();
    let run = |interval| {
        let line = LineSpec::new(0.0, 0.0, interval).unwrap();
        line_equidist_experiment(&line, &x0, &Density::uniform(), WeightVector::equal(), siegel_half(), grid).unwrap()
    };
    let (left, right) = (run((-1.0, 0.0)), run((0.0, 1.0)));
    let tol = left.quadrature_error + right.quadrature_error;
    assert!((left.average - right.average).abs() <= tol, "{} vs {}", left.average, right.average);
}

#[test]
fn mass_escapes_along_a_rational_line() {
    let x0 = Lattice::standard(3).unwrap();
    let line = LineSpec::new(0.0, 0.0, (-0.01, 0.01)).unwrap();
    let escape_at = |t_max: f64| {
        let grid = Sampling::new(50, t_max, (20.0 * t_max) as usize).unwrap();
        let obs = Observable::SystoleIndicator { eps: 0.01 };
        let report = line_equidist_experiment(&line, &x0, &Density::uniform(), WeightVector::equal(), obs, grid).unwrap();
        assert!(report.escape.is_monotone());
        report.escape.fraction_below(0.01).unwrap()
    };
    let early = escape_at(4.0);
    let late = escape_at(16.0);
    assert_eq!(early, 0.0);
    assert!(late > 0.02 && late > early, "escape {early} -> {late}");
}

#[test]
fn plastic_line_report_is_complete() {
    let x0 = Lattice::standard(3).unwrap();
    let grid = Sampling::new(40, 10.0, 300).unwrap();
    let report = line_equidist_experiment(&plastic_line(), &x0, &Density::uniform(), WeightVector::equal(), siegel_half(), grid).unwrap();
    assert_eq!(report.partial.len(), 10);
    assert_eq!(report.partial.last().unwrap().average, report.average);
    assert_eq!(report.haar_target, Some(3.375));
    assert_eq!(report.escape.eps, ESCAPE_EPS.to_vec());
    assert!(report.hypothesis_holds(0.3));
    let csv = report.partial_csv();
    assert!(csv.starts_with("T_partial,average,target,rel_error\n"));
    assert_eq!(csv.lines().count(), 11);
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["observable"]["kind"], "siegel_ball");
}

#[test]
fn parabola_shift_keeps_nondegeneracy() {
    let grid = Sampling::new(20, 8.0, 80).unwrap();
    let obs = siegel_half();
    for shift in [real(0.0), sqrt_real(2.0)] {
        let spec = CurveSpec::new(PolynomialCurve::parabola(shift), (0.0, 1.0)).unwrap();
        let report = curve_equidist_experiment(&spec, WeightVector::equal(), obs, grid).unwrap();
        assert_eq!(report.wronskian_range, Some((2.0, 2.0)));
        assert!(report.twisted_average.is_some());
        assert!(report.average.is_finite() && report.average > 0.0);
    }
    let weighted = CurveSpec::new(PolynomialCurve::parabola(real(0.0)), (0.0, 1.0)).unwrap();
    let r = WeightVector::new(2.0 / 3.0, 1.0 / 3.0).unwrap();
    let report = curve_equidist_experiment(&weighted, r, obs, grid).unwrap();
    assert!(report.twisted_average.is_none());
}

#[test]
fn straight_curve_is_rejected() {
    let spec = CurveSpec::new(PolynomialCurve::line(3.0), (0.0, 1.0)).unwrap();
    let grid = Sampling::new(8, 2.0, 10).unwrap();
    let err = curve_equidist_experiment(&spec, WeightVector::equal(), siegel_half(), grid).unwrap_err();
    assert!(matches!(err, Error::DegenerateCurve { .. }));
}

#[test]
fn circle_wronskian_is_one() {
    let s: Vec<f64> = (0..10).map(|k| 0.1 * k as f64).collect();
    let (lo, hi) = check_nondegenerate(&CircleArc, &s).unwrap();
    assert!((lo - 1.0).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn escape_profile_grows_with_eps(a in -2.0f64..2.0, b in -1.0f64..1.0, t_max in 1.0f64..6.0) {
        let x0 = Lattice::standard(3).unwrap();
        let line = LineSpec::new(a, b, (0.0, 0.5)).unwrap();
        let grid = Sampling::new(6, t_max, 30).unwrap();
        let obs = Observable::SystoleMoment { k: 1.0 };
        let report = line_equidist_experiment(&line, &x0, &Density::uniform(), WeightVector::equal(), obs, grid).unwrap();
        prop_assert!(report.escape.is_monotone());
        prop_assert!(report.escape.fraction.iter().all(|f| (0.0..=1.0).contains(f)));
        prop_assert!(report.max_sample <= 1.0 + 1e-12);
    }

    #[test]
    fn density_weights_are_normalized(n in 1usize..50, lo in -3.0f64..0.0, len in 0.1f64..3.0) {
        let grid = Sampling::new(n, 1.0, 1).unwrap();
        let s = grid.s_values((lo, lo + len));
        prop_assert!(s.iter().all(|&x| x > lo && x < lo + len));
        let w = dirlab_core::equidist::grid_weights(&Density::new(|x: f64| 1.0 + x * x), &s).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
