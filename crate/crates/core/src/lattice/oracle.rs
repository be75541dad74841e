//! Brute-force reference for the sup-norm minimum.
//!
//! Shares nothing with the main enumerator: the basis is only tidied by
//! pairwise Gauss steps, then every coefficient vector in the full Cramer
//! box is evaluated.

use crate::error::{Error, Result};
use crate::matrix::{sup_norm, Mat};

use super::Lattice;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn pairwise_reduce(basis: &Mat<f64>) -> Mat<f64> {
    let n = basis.dim();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| basis.column(j)).collect();
    for _ in 0..200 {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum::<f64>() / norm2(&cols[j])).round();
                if q == 0.0 {
                    continue;
                }
                let cand: Vec<f64> = cols[i].iter().zip(&cols[j]).map(|(a, b)| a - q * b).collect();
                if norm2(&cand) < norm2(&cols[i]) * (1.0 - 1e-12) {
                    cols[i] = cand;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = Mat::zeros(n);
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Minimal sup-norm over all nonzero vectors in the Cramer box.
pub fn brute_force_systole(lattice: &Lattice, max_candidates: f64) -> Result<f64> {
    let b = pairwise_reduce(lattice.basis());
    let n = b.dim();
    let radius = (0..n)
        .map(|j| sup_norm(&b.column(j)))
        .fold(f64::INFINITY, f64::min);
    let inv = b.inverse().ok_or(Error::SingularBasis { det: 0.0 })?;
    let bounds: Vec<i64> = (0..n)
        .map(|i| ((0..n).map(|j| inv[(i, j)].abs()).sum::<f64>() * radius * (1.0 + 1e-9)).floor() as i64)
        .collect();
    let volume: f64 = bounds.iter().map(|&k| (2 * k + 1) as f64).product();
    if volume > max_candidates {
        return Err(Error::EnumerationOverflow { candidates: volume });
    }
    let mut best = radius;
    let mut c: Vec<i64> = bounds.iter().map(|&k| -k).collect();
    loop {
        if c.iter().any(|&v| v != 0) {
            let x: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| b[(i, j)] * c[j] as f64).sum())
                .collect();
            best = best.min(sup_norm(&x));
        }
        let mut k = 0;
        loop {
            if k == n {
                return Ok(best);
            }
            if c[k] < bounds[k] {
                c[k] += 1;
                break;
            }
            c[k] = -bounds[k];
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_hand_values() {
        let d = Lattice::new(Mat::diagonal(&[2.0, 1.0, 0.5])).unwrap();
        assert_eq!(brute_force_systole(&d, 1e7).unwrap(), 0.5);
        assert_eq!(brute_force_systole(&Lattice::standard(4).unwrap(), 1e7).unwrap(), 1.0);
    }
}
