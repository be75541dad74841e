//! Permuted-unitriangular factorizations of lattices in K_1.
//!
//! For a permutation σ write P for the matrix with P e_i = e_σ(i). The group
//! U⁺_σ = P U⁺ P⁻¹ is generated by E_σ(i)σ(j), i < j. Given a basis B we look
//! for a unimodular M with Pᵀ B M P upper unitriangular, which is the same as
//! B ∈ U⁺_σ · GL_n(ℤ).

use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::Mat;

use super::enumerate::systole;
use super::Lattice;

const INTEGRALITY_TOL: f64 = 1e-5;
const RESIDUAL_TOL: f64 = 1e-6;
/// Systole threshold above which a lattice is treated as a member of K_1.
pub const K1_THRESHOLD: f64 = 1.0 - 1e-6;

/// A permutation of {0, .., n-1}, stored as its image list.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation(pub Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    /// Position of each value, i.e. the inverse permutation.
    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &s) in self.0.iter().enumerate() {
            inv[s] = i;
        }
        Permutation(inv)
    }
}

impl fmt::Display for Permutation {
    /// One-based image list, e.g. `(3,2,1,4)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// All permutations of {0, .., n-1} in lexicographic order.
pub fn permutations(n: usize) -> Vec<Permutation> {
    let mut current: Vec<usize> = (0..n).collect();
    let mut out = vec![Permutation(current.clone())];
    loop {
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| current[i] < current[i + 1]) else {
            return out;
        };
        let j = (i + 1..n).rev().find(|&j| current[j] > current[i]).unwrap();
        current.swap(i, j);
        current[i + 1..].reverse();
        out.push(Permutation(current.clone()));
    }
}

/// P with P e_i = e_σ(i).
pub fn permutation_matrix(sigma: &Permutation) -> Mat<f64> {
    let n = sigma.len();
    Mat::from_fn(n, |r, c| if r == sigma.apply(c) { 1.0 } else { 0.0 })
}

fn permutation_matrix_int(sigma: &Permutation) -> Mat<i64> {
    let n = sigma.len();
    Mat::from_fn(n, |r, c| i64::from(r == sigma.apply(c)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HajosWitness {
    pub sigma: Permutation,
    /// Element of U⁺_σ.
    pub unipotent: Mat<f64>,
    /// Unimodular integer matrix with `unipotent * integral_part = basis`.
    pub integral_part: Mat<i64>,
}

impl HajosWitness {
    /// Max-entry distance between `unipotent * integral_part` and `basis`.
    pub fn residual(&self, basis: &Mat<f64>) -> f64 {
        self.unipotent.mul_int(&self.integral_part).sub(basis).max_abs()
    }

    /// Whether Pᵀ · unipotent · P is upper unitriangular to within `tol`.
    pub fn is_permuted_unitriangular(&self, tol: f64) -> bool {
        let p = permutation_matrix(&self.sigma);
        let n = p.transpose().mul(&self.unipotent).mul(&p);
        let dim = n.dim();
        (0..dim).all(|i| {
            (0..dim).all(|j| {
                let target = if i == j { Some(1.0) } else if i > j { Some(0.0) } else { None };
                target.is_none_or(|t| (n[(i, j)] - t).abs() <= tol)
            })
        })
    }
}

/// Column operations on a float matrix mirrored on an integer transform.
struct Columns {
    work: Mat<f64>,
    trans: Mat<i64>,
}

impl Columns {
    fn sub(&mut self, target: usize, source: usize, q: i64) {
        let n = self.work.dim();
        for i in 0..n {
            let s = self.work[(i, source)];
            self.work[(i, target)] -= q as f64 * s;
            let t = self.trans[(i, source)];
            self.trans[(i, target)] -= q * t;
        }
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.work.swap_columns(a, b);
        self.trans.swap_columns(a, b);
    }

    fn negate(&mut self, j: usize) {
        let n = self.work.dim();
        for i in 0..n {
            self.work[(i, j)] = -self.work[(i, j)];
            self.trans[(i, j)] = -self.trans[(i, j)];
        }
    }

    /// Euclid on row `row` over columns 0..=row, leaving gcd at (row, row).
    fn clear_row(&mut self, row: usize) -> Option<()> {
        let mut ints = Vec::with_capacity(row + 1);
        for j in 0..=row {
            let v = self.work[(row, j)];
            let r = v.round();
            if (v - r).abs() > INTEGRALITY_TOL || r.abs() > 1e12 {
                return None;
            }
            ints.push(r as i64);
        }
        loop {
            let pivot = (0..=row)
                .filter(|&j| ints[j] != 0)
                .min_by_key(|&j| (ints[j].unsigned_abs(), std::cmp::Reverse(j)))?;
            if pivot != row {
                ints.swap(pivot, row);
                self.swap(pivot, row);
            }
            let p = ints[row];
            let mut done = true;
            for j in 0..row {
                if ints[j] != 0 {
                    let q = ints[j].div_euclid(p);
                    ints[j] -= q * p;
                    self.sub(j, row, q);
                    done &= ints[j] == 0;
                }
            }
            if done {
                break;
            }
        }
        if ints[row].abs() != 1 {
            return None;
        }
        if ints[row] < 0 {
            self.negate(row);
        }
        for j in 0..row {
            self.work[(row, j)] = 0.0;
        }
        self.work[(row, row)] = 1.0;
        Some(())
    }
}

fn factor_for(basis: &Mat<f64>, sigma: &Permutation) -> Option<HajosWitness> {
    let n = basis.dim();
    let p = permutation_matrix(sigma);
    let mut cols = Columns {
        work: p.transpose().mul(basis),
        trans: Mat::identity_int(n),
    };
    for row in (0..n).rev() {
        cols.clear_row(row)?;
    }
    // Size-reduce the strictly upper entries into (-1/2, 1/2].
    for j in 1..n {
        for i in (0..j).rev() {
            let x = cols.work[(i, j)];
            let k = (x - 0.5 - 1e-9).ceil() as i64;
            if k != 0 {
                cols.sub(j, i, k);
            }
        }
    }
    // work = Pᵀ B M' is unitriangular; B = P work Pᵀ · (P M'⁻¹).
    let unipotent = p.mul(&cols.work).mul(&p.transpose());
    let m_inv = cols.trans.inverse_unimodular()?;
    let integral_part = permutation_matrix_int(sigma).mul_int(&m_inv);
    let witness = HajosWitness {
        sigma: sigma.clone(),
        unipotent,
        integral_part,
    };
    (witness.residual(basis) <= RESIDUAL_TOL).then_some(witness)
}

/// Factorization of a lattice in K_1 as U⁺_σ times an integer matrix.
///
/// Returns `Ok(None)` when the systole is below 1 - 1e-6. Permutations are
/// tried in lexicographic order and the first success is returned.
pub fn hajos_witness(lattice: &Lattice) -> Result<Option<HajosWitness>> {
    let sys = systole(lattice)?;
    if sys < K1_THRESHOLD {
        return Ok(None);
    }
    permutations(lattice.dim())
        .iter()
        .find_map(|sigma| factor_for(lattice.basis(), sigma))
        .map(Some)
        .ok_or(Error::WitnessNotFound { systole: sys })
}
