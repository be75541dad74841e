use num_traits::Float;

use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::real::to_f64;

pub const LLL_DELTA: f64 = 0.99;
const MAX_SWAPS: usize = 100_000;

struct Gso<T> {
    mu: Mat<T>,
    norms: Vec<T>,
}

fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn gram_schmidt<T: Float>(cols: &[Vec<T>]) -> Result<Gso<T>> {
    let n = cols.len();
    let mut star: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut mu = Mat::zeros(n);
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = cols[i].clone();
        for j in 0..i {
            let m = dot(&cols[i], &star[j]) / norms[j];
            mu[(i, j)] = m;
            for (vk, &sk) in v.iter_mut().zip(&star[j]) {
                *vk = *vk - m * sk;
            }
        }
        let nv = dot(&v, &v);
        let scale = dot(&cols[i], &cols[i]);
        if !(nv > T::from(1e-28).unwrap() * scale) || nv == T::zero() {
            return Err(Error::SingularBasis {
                det: nv.to_f64().unwrap_or(0.0).sqrt(),
            });
        }
        norms.push(nv);
        star.push(v);
    }
    Ok(Gso { mu, norms })
}

fn columns<T: Copy>(b: &Mat<T>) -> Vec<Vec<T>> {
    (0..b.dim()).map(|j| b.column(j)).collect()
}

fn round_to_i64<T: Float>(x: T) -> Result<i64> {
    let r = x.round();
    r.to_i64().ok_or(Error::EnumerationOverflow {
        candidates: r.to_f64().unwrap_or(f64::INFINITY),
    })
}

fn sub_multiple<T: Float>(cols: &mut [Vec<T>], trans: &mut [Vec<i64>], k: usize, j: usize, q: i64) {
    let qf = T::from(q).unwrap();
    for i in 0..cols[k].len() {
        let v = cols[j][i];
        cols[k][i] = cols[k][i] - qf * v;
        trans[k][i] -= q * trans[j][i];
    }
}

/// LLL reduction of the columns of `basis`. Returns the reduced basis and
/// the integer matrix `t` with `reduced = basis * t`.
pub fn lll<T: Float>(basis: &Mat<T>, delta: f64) -> Result<(Mat<T>, Mat<i64>)> {
    let n = basis.dim();
    let mut cols = columns(basis);
    let mut trans: Vec<Vec<i64>> = (0..n)
        .map(|j| (0..n).map(|i| i64::from(i == j)).collect())
        .collect();
    let delta = T::from(delta).unwrap();
    let half = T::from(0.5).unwrap();
    let mut k = 1;
    let mut swaps = 0;
    while k < n {
        for j in (0..k).rev() {
            let g = gram_schmidt(&cols)?;
            let m = g.mu[(k, j)];
            if m.abs() > half {
                let q = round_to_i64(m)?;
                sub_multiple(&mut cols, &mut trans, k, j, q);
            }
        }
        let g = gram_schmidt(&cols)?;
        let m = g.mu[(k, k - 1)];
        if g.norms[k] >= (delta - m * m) * g.norms[k - 1] {
            k += 1;
        } else {
            cols.swap(k, k - 1);
            trans.swap(k, k - 1);
            k = (k - 1).max(1);
            swaps += 1;
            if swaps > MAX_SWAPS {
                return Err(Error::SingularBasis { det: 0.0 });
            }
        }
    }
    let mut out = Mat::zeros(n);
    let mut t = Mat::from_fn(n, |_, _| 0i64);
    for j in 0..n {
        out.set_column(j, &cols[j]);
        t.set_column(j, &trans[j]);
    }
    Ok((out, t))
}

/// LLL followed by sorting columns by Euclidean length and size-reducing
/// again. The returned basis is recomputed as `basis * t` in double-double.
pub fn reduce_with_transform(basis: &Mat<f64>) -> Result<(Mat<f64>, Mat<i64>)> {
    let n = basis.dim();
    let (_, mut t) = lll(basis, LLL_DELTA)?;
    let exact = |t: &Mat<i64>| basis.to_real().mul(&t.to_real()).map(to_f64);
    for _ in 0..8 {
        let b = exact(&t);
        let cols = columns(&b);
        let mut order: Vec<usize> = (0..n).collect();
        let lens: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
        order.sort_by(|&a, &b| lens[a].total_cmp(&lens[b]).then(a.cmp(&b)));
        let mut cols: Vec<Vec<f64>> = order.iter().map(|&j| cols[j].clone()).collect();
        let mut trans: Vec<Vec<i64>> = order.iter().map(|&j| t.column(j)).collect();
        let mut changed = order.iter().enumerate().any(|(i, &j)| i != j);
        for k in 1..n {
            for j in (0..k).rev() {
                let g = gram_schmidt(&cols)?;
                let m = g.mu[(k, j)];
                if m.abs() > 0.5 + 1e-12 {
                    let q = round_to_i64(m)?;
                    sub_multiple(&mut cols, &mut trans, k, j, q);
                    changed = true;
                }
            }
        }
        for (j, c) in trans.iter().enumerate() {
            t.set_column(j, c);
        }
        if !changed {
            break;
        }
    }
    Ok((exact(&t), t))
}
