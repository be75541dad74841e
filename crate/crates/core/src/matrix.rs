//! Small dense square matrices.
//!
//! Lattice bases here are at most 4x4, so a flat row-major `Vec` beats any
//! general-purpose linear algebra container. The same type carries `f64`,
//! double-double (`Real`) and `i64` entries.

use std::ops::{Index, IndexMut};

use num_traits::Float;
use serde::{Serialize, Serializer};

use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Copy> Mat<T> {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Mat { n, data }
    }

    /// Builds a matrix from rows; returns `None` unless the rows form a square.
    pub fn from_rows(rows: &[Vec<T>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(Mat {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, col: &[T]) {
        for (i, &v) in col.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    pub fn swap_columns(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.n {
            self.data.swap(i * self.n + a, i * self.n + b);
        }
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Mat<U> {
        Mat {
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Reorders columns so that column `j` of the result is column `order[j]` of `self`.
    pub fn permute_columns(&self, order: &[usize]) -> Self {
        Mat::from_fn(self.n, |i, j| self[(i, order[j])])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

/// Serialized as a list of rows.
impl<T: Copy + Serialize> Serialize for Mat<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

impl<T: Float> Mat<T> {
    pub fn zeros(n: usize) -> Self {
        Mat::from_fn(n, |_, _| T::zero())
    }

    pub fn identity(n: usize) -> Self {
        Mat::from_fn(n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn diagonal(d: &[T]) -> Self {
        Mat::from_fn(d.len(), |i, j| if i == j { d[i] } else { T::zero() })
    }

    pub fn mul(&self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        let n = self.n;
        Mat::from_fn(n, |i, j| {
            (0..n).fold(T::zero(), |acc, k| acc + self[(i, k)] * rhs[(k, j)])
        })
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| (0..self.n).fold(T::zero(), |acc, k| acc + self[(i, k)] * v[k]))
            .collect()
    }

    pub fn scale(&self, c: T) -> Mat<T> {
        self.map(|v| v * c)
    }

    pub fn sub(&self, rhs: &Mat<T>) -> Mat<T> {
        Mat::from_fn(self.n, |i, j| self[(i, j)] - rhs[(i, j)])
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    /// Gaussian elimination with partial pivoting; returns the permutation
    /// sign-adjusted LU factors packed in place plus the row order.
    fn lu(&self) -> Option<(Mat<T>, Vec<usize>, bool)> {
        let n = self.n;
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut odd = false;
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if a[(i, k)].abs() > a[(p, k)].abs() {
                    p = i;
                }
            }
            if a[(p, k)] == T::zero() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                odd = !odd;
            }
            for i in k + 1..n {
                let f = a[(i, k)] / a[(k, k)];
                a[(i, k)] = f;
                for j in k + 1..n {
                    let v = a[(k, j)];
                    a[(i, j)] = a[(i, j)] - f * v;
                }
            }
        }
        Some((a, perm, odd))
    }

    pub fn det(&self) -> T {
        match self.lu() {
            None => T::zero(),
            Some((a, _, odd)) => {
                let d = (0..self.n).fold(T::one(), |acc, i| acc * a[(i, i)]);
                if odd {
                    -d
                } else {
                    d
                }
            }
        }
    }

    fn lu_solve(a: &Mat<T>, perm: &[usize], b: &[T]) -> Vec<T> {
        let n = a.n;
        let mut y: Vec<T> = perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                y[i] = y[i] - a[(i, k)] * y[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] = y[i] - a[(i, k)] * y[k];
            }
            y[i] = y[i] / a[(i, i)];
        }
        y
    }

    /// Solves `self * x = b`, with two steps of residual refinement.
    ///
    /// The refinement matters for double-double entries, where the
    /// elimination's divisions are only f64-accurate.
    pub fn solve(&self, b: &[T]) -> Option<Vec<T>> {
        let (a, perm, _) = self.lu()?;
        let mut x = Self::lu_solve(&a, &perm, b);
        for _ in 0..2 {
            let ax = self.mul_vec(&x);
            let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
            let dx = Self::lu_solve(&a, &perm, &r);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi = *xi + di;
            }
        }
        Some(x)
    }

    pub fn inverse(&self) -> Option<Mat<T>> {
        let n = self.n;
        let mut inv = Mat::zeros(n);
        for j in 0..n {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            let col = self.solve(&e)?;
            inv.set_column(j, &col);
        }
        Some(inv)
    }
}

impl Mat<Real> {
    pub fn to_f64(&self) -> Mat<f64> {
        self.map(|v| v.hi() + v.lo())
    }
}

impl Mat<f64> {
    pub fn to_real(&self) -> Mat<Real> {
        self.map(Real::from)
    }

    /// Right-multiplication by an integer matrix, exact up to the entries' own rounding.
    pub fn mul_int(&self, rhs: &Mat<i64>) -> Mat<f64> {
        self.mul(&rhs.to_f64())
    }
}

impl Mat<i64> {
    pub fn identity_int(n: usize) -> Self {
        Mat::from_fn(n, |i, j| i64::from(i == j))
    }

    pub fn mul_int(&self, rhs: &Mat<i64>) -> Mat<i64> {
        let n = self.n;
        Mat::from_fn(n, |i, j| (0..n).map(|k| self[(i, k)] * rhs[(k, j)]).sum())
    }

    pub fn to_f64(&self) -> Mat<f64> {
        self.map(|v| v as f64)
    }

    pub fn to_real(&self) -> Mat<Real> {
        self.map(|v| Real::from(v as f64))
    }

    /// Exact determinant by cofactor expansion (n <= 4).
    pub fn det_exact(&self) -> i128 {
        let m = self.map(i128::from);
        det_cofactor(&m.rows())
    }

    /// Exact inverse of a unimodular matrix; `None` if |det| != 1.
    pub fn inverse_unimodular(&self) -> Option<Mat<i64>> {
        let n = self.n;
        let det = self.det_exact();
        if det.abs() != 1 {
            return None;
        }
        let rows = self.map(i128::from).rows();
        let mut inv = Mat::from_fn(n, |_, _| 0i64);
        for i in 0..n {
            for j in 0..n {
                let minor: Vec<Vec<i128>> = rows
                    .iter()
                    .enumerate()
                    .filter(|&(r, _)| r != j)
                    .map(|(_, row)| {
                        row.iter()
                            .enumerate()
                            .filter(|&(c, _)| c != i)
                            .map(|(_, &v)| v)
                            .collect()
                    })
                    .collect();
                let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
                let v = sign * det_cofactor(&minor) * det;
                inv[(i, j)] = i64::try_from(v).ok()?;
            }
        }
        Some(inv)
    }
}

fn det_cofactor(rows: &[Vec<i128>]) -> i128 {
    let n = rows.len();
    match n {
        0 => 1,
        1 => rows[0][0],
        2 => rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0],
        _ => (0..n)
            .map(|c| {
                let minor: Vec<Vec<i128>> = rows[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|&(k, _)| k != c)
                            .map(|(_, &v)| v)
                            .collect()
                    })
                    .collect();
                let sign = if c % 2 == 0 { 1 } else { -1 };
                sign * rows[0][c] * det_cofactor(&minor)
            })
            .sum(),
    }
}

/// Sup-norm of a vector.
pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_and_inverse() {
        let m = Mat::from_rows(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 4.0],
        ])
        .unwrap();
        assert!((m.det() - 18.0).abs() < 1e-12);
        let inv = m.inverse().unwrap();
        let id = m.mul(&inv);
        assert!(id.sub(&Mat::identity(3)).max_abs() < 1e-14);
    }

    #[test]
    fn unimodular_inverse_is_exact() {
        let m = Mat::from_rows(&[vec![1i64, 2, 3], vec![0, 1, 4], vec![5, 6, 0]]).unwrap();
        assert_eq!(m.det_exact(), 1);
        let inv = m.inverse_unimodular().unwrap();
        assert_eq!(m.mul_int(&inv), Mat::identity_int(3));
    }

    #[test]
    fn double_double_inverse_is_refined() {
        let m = Mat::from_rows(&[
            vec![3.0, 1.0, 0.0],
            vec![1.0, 7.0, 2.0],
            vec![0.0, 2.0, 11.0],
        ])
        .unwrap()
        .to_real();
        let inv = m.inverse().unwrap();
        let err = m.mul(&inv).sub(&Mat::identity(3)).max_abs();
        assert!(crate::real::to_f64(err) < 1e-30);
    }

    #[test]
    fn permutation_parity_in_det() {
        let p = Mat::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(p.det(), -1.0);
    }
}
