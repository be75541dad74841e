//! Seeded consistency suites shared by `dirlab selftest` and the acceptance run.

use std::fmt;

use dirlab_core::counterexample::{
    adjoint, block_algebra_basis, q_log_derivative_closed, q_log_derivative_fd, q_projection, PElement,
    FD_STEP, FD_TOL,
};
use dirlab_core::flows::{conjugated_shift, flow_matrix, u_matrix, WeightVector};
use dirlab_core::lattice::oracle::brute_force_systole;
use dirlab_core::lattice::sampling::{random_hajos_lattice, random_test_lattice};
use dirlab_core::lattice::{hajos_witness, systole};
use dirlab_core::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::CliError;

/// Box size above which the brute-force oracle refuses to run.
pub const ORACLE_BUDGET: f64 = 5e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Svp,
    Hajos,
    Conjugation,
    Relations,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Svp, Suite::Hajos, Suite::Conjugation, Suite::Relations];

    pub fn parse(name: &str) -> Result<Vec<Suite>, CliError> {
        match name {
            "all" => Ok(Self::ALL.to_vec()),
            "svp" => Ok(vec![Suite::Svp]),
            "hajos" => Ok(vec![Suite::Hajos]),
            "conjugation" => Ok(vec![Suite::Conjugation]),
            "relations" => Ok(vec![Suite::Relations]),
            other => Err(CliError::Usage(format!(
                "unknown suite `{other}` (all, svp, hajos, conjugation, relations)"
            ))),
        }
    }

    pub fn default_cases(self) -> usize {
        match self {
            Suite::Relations => 100,
            _ => 1000,
        }
    }

    pub fn run(self, cases: usize, seed: u64) -> SuiteResult {
        match self {
            Suite::Svp => svp_suite(cases, seed),
            Suite::Hajos => hajos_suite(cases, seed),
            Suite::Conjugation => conjugation_suite(cases, seed),
            Suite::Relations => relations_suite(cases, seed),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Svp => "svp",
            Suite::Hajos => "hajos",
            Suite::Conjugation => "conjugation",
            Suite::Relations => "relations",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub cases: usize,
    pub failures: usize,
    /// Worst observed deviation, in the suite's own units.
    pub worst: f64,
    pub first_failure: Option<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn row(&self) -> String {
        format!(
            "{:<12} {:>6} {:>6}  {:<4}  worst {:.3e}{}",
            self.suite.to_string(),
            self.cases,
            self.failures,
            if self.passed() { "PASS" } else { "FAIL" },
            self.worst,
            self.first_failure
                .as_deref()
                .map(|m| format!("  first: {m}"))
                .unwrap_or_default()
        )
    }
}

struct Tally {
    suite: Suite,
    cases: usize,
    failures: usize,
    worst: f64,
    first_failure: Option<String>,
}

impl Tally {
    fn new(suite: Suite) -> Self {
        Tally {
            suite,
            cases: 0,
            failures: 0,
            worst: 0.0,
            first_failure: None,
        }
    }

    fn record(&mut self, ok: bool, deviation: f64, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if deviation.is_finite() {
            self.worst = self.worst.max(deviation);
        }
        if !ok {
            self.failures += 1;
            self.first_failure.get_or_insert_with(describe);
        }
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            suite: self.suite,
            cases: self.cases,
            failures: self.failures,
            worst: self.worst,
            first_failure: self.first_failure,
        }
    }
}

/// Enumeration against the coefficient-box oracle: `cases` 3x3 lattices and
/// `cases / 5` 4x4 lattices.
pub fn svp_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(Suite::Svp);
    for (dim, count) in [(3, cases), (4, cases / 5)] {
        for k in 0..count {
            let lattice = random_test_lattice(dim, &mut rng);
            match (systole(&lattice), brute_force_systole(&lattice, ORACLE_BUDGET)) {
                (Ok(fast), Ok(slow)) => {
                    let diff = (fast - slow).abs();
                    tally.record(diff <= 1e-9, diff, || format!("dim {dim} case {k}: {fast} vs {slow}"));
                }
                (a, b) => tally.record(false, f64::NAN, || format!("dim {dim} case {k}: {a:?} / {b:?}")),
            }
        }
    }
    tally.finish()
}

/// Witnesses for permuted-unitriangular lattices, and none for lattices
/// with systole below 1 - 1e-6. Each half has `cases` lattices.
pub fn hajos_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(Suite::Hajos);
    for k in 0..cases {
        let lattice = random_hajos_lattice(3, &mut rng);
        let sys = systole(&lattice).unwrap_or(f64::NAN);
        let witness = hajos_witness(&lattice);
        let residual = match &witness {
            Ok(Some(w)) if w.is_permuted_unitriangular(1e-9) => w.residual(lattice.basis()),
            _ => f64::INFINITY,
        };
        tally.record(sys >= 1.0 - 1e-9 && residual <= 1e-9, residual, || {
            format!("unipotent case {k}: systole {sys}, witness {witness:?}")
        });
    }
    let mut checked = 0;
    while checked < cases {
        let lattice = random_test_lattice(3, &mut rng);
        let Ok(sys) = systole(&lattice) else {
            tally.record(false, f64::NAN, || "systole failed".into());
            checked += 1;
            continue;
        };
        if sys >= 1.0 - 1e-6 {
            continue;
        }
        checked += 1;
        let witness = hajos_witness(&lattice);
        tally.record(matches!(witness, Ok(None)), 0.0, || {
            format!("generic lattice with systole {sys}: {witness:?}")
        });
    }
    tally.finish()
}

/// f_t u(v) = u(v') f_t elementwise to relative 1e-9.
pub fn conjugation_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(Suite::Conjugation);
    for k in 0..cases {
        let r1 = rng.random_range(0.05..0.95);
        let r = WeightVector::new(r1, 1.0 - r1).expect("weights sum to one");
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let t = rng.random_range(0.0..10.0);
        let f = flow_matrix(r, t);
        let lhs = f.mul(&u_matrix(v));
        let rhs = u_matrix(conjugated_shift(v, r, t)).mul(&f);
        let dev = elementwise_relative(&lhs, &rhs);
        tally.record(dev <= 1e-9, dev, || format!("case {k}: v {v:?}, t {t}, r1 {r1}"));
    }
    tally.finish()
}

fn elementwise_relative(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Finite-difference derivative of q(s) against the closed form for
/// `cases` random bottom rows, and the adjoint block pattern for 20 random
/// elements of the block algebra.
pub fn relations_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(Suite::Relations);
    for k in 0..cases {
        let [x, y, z] = [0; 3].map(|_| rng.random_range(-3.0..3.0));
        let p = PElement::standard(x, y, z);
        let dev = match (q_log_derivative_fd(&p, FD_STEP), q_log_derivative_closed(&p)) {
            (Ok(fd), Ok(closed)) => fd.sub(&closed).max_abs() / closed.max_abs().max(f64::MIN_POSITIVE),
            _ => f64::INFINITY,
        };
        tally.record(dev <= FD_TOL, dev, || format!("derivative case {k}: ({x}, {y}, {z})"));
    }
    let q = q_projection(&PElement::standard(1.0, 1.0, 1.0)).matrix();
    let basis = block_algebra_basis();
    for k in 0..20 {
        let x = basis.iter().fold(Mat::zeros(4), |acc, b| {
            let c: f64 = rng.random_range(-2.0..2.0);
            acc.sub(&b.scale(-c))
        });
        let dev = match adjoint(&q, &x) {
            Ok(ad) => adjoint_pattern_deviation(&x, &ad),
            Err(_) => f64::INFINITY,
        };
        tally.record(dev <= 1e-9, dev, || format!("adjoint case {k}"));
    }
    tally.finish()
}

/// Deviation from the block pattern of Ad(diag(A, 1)) for the standard
/// upper block A: zero lower-left 2x2 block, and entries -a-b+e, -c-d+e in
/// the third column.
fn adjoint_pattern_deviation(x: &Mat<f64>, ad: &Mat<f64>) -> f64 {
    let (a, b, c, d, e) = (x[(0, 0)], x[(0, 1)], x[(1, 0)], x[(1, 1)], x[(2, 2)]);
    let zeros = [(2, 0), (2, 1), (3, 0), (3, 1)].map(|ij| ad[ij].abs());
    let third = [(ad[(0, 2)] - (-a - b + e)).abs(), (ad[(1, 2)] - (-c - d + e)).abs()];
    zeros.into_iter().chain(third).fold(0.0, f64::max)
}
