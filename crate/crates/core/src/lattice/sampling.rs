//! Seeded random lattices from the triangular-diagonal family.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::matrix::Mat;

use super::hajos::{permutation_matrix, Permutation};
use super::Lattice;

/// Random element of U⁺_σ with off-diagonal entries uniform in [-2, 2].
pub fn random_permuted_unipotent<R: Rng>(n: usize, rng: &mut R) -> (Permutation, Mat<f64>) {
    let mut images: Vec<usize> = (0..n).collect();
    images.shuffle(rng);
    let sigma = Permutation(images);
    let upper = Mat::from_fn(n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Less => rng.random_range(-2.0..=2.0),
        std::cmp::Ordering::Greater => 0.0,
    });
    let p = permutation_matrix(&sigma);
    (sigma.clone(), p.mul(&upper).mul(&p.transpose()))
}

/// Exponents a_i uniform in [-1, 1] with sum zero (rejection on the last one).
pub fn random_log_diagonal<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut a: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let last = -a.iter().sum::<f64>();
        if last.abs() <= 1.0 {
            a.push(last);
            return a;
        }
    }
}

/// Lattice U_σ · diag(e^{a_1}, .., e^{a_n}) · ℤⁿ.
pub fn random_test_lattice<R: Rng>(n: usize, rng: &mut R) -> Lattice {
    let (_, u) = random_permuted_unipotent(n, rng);
    let a = random_log_diagonal(n, rng);
    let d: Vec<f64> = a.iter().map(|x| x.exp()).collect();
    Lattice::normalized(u.mul(&Mat::diagonal(&d))).expect("nonsingular by construction")
}

/// Lattice U_σ · ℤⁿ, a member of K_1.
pub fn random_hajos_lattice<R: Rng>(n: usize, rng: &mut R) -> Lattice {
    let (_, u) = random_permuted_unipotent(n, rng);
    Lattice::new(u).expect("unipotent matrices are unimodular")
}
