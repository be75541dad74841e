//! Unimodular lattices in dimension 3 and 4.
//!
//! A [`Lattice`] is stored through a basis whose columns generate it. Bases
//! handed to the enumeration routines are first LLL-reduced, so the
//! working entries stay moderate even when the input is badly skewed.

mod enumerate;
mod hajos;
pub mod oracle;
mod reduce;
pub mod sampling;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::real::{to_f64, Real};

pub use enumerate::{cube_points, in_k_eps, shortest_vector, systole, ShortVector};
pub use hajos::{hajos_witness, permutation_matrix, permutations, HajosWitness, Permutation};
pub use reduce::{lll, reduce_with_transform, LLL_DELTA};

/// Tolerance on |det| when a basis is accepted and silently rescaled.
pub const DET_TOLERANCE: f64 = 1e-6;
const UNIT_DET_SLACK: f64 = 1e-13;
const SINGULAR_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    dim: usize,
    basis: Mat<f64>,
    log_scale: f64,
}

fn check_shape(rows: usize, cols: usize) -> Result<()> {
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if rows != 3 && rows != 4 {
        return Err(Error::UnsupportedDimension(rows));
    }
    Ok(())
}

impl Lattice {
    /// Accepts a basis with |det| within 1e-6 of 1 and rescales it to covolume exactly 1.
    pub fn new(basis: Mat<f64>) -> Result<Self> {
        let n = basis.dim();
        check_shape(n, n)?;
        let det = basis.det();
        if !det.is_finite() || det.abs() < SINGULAR_FLOOR {
            return Err(Error::SingularBasis { det: det.abs() });
        }
        if (det.abs() - 1.0).abs() > DET_TOLERANCE {
            return Err(Error::DeterminantMismatch { det });
        }
        Ok(Self::rescaled(basis, det))
    }

    /// Rescales any nonsingular basis to covolume 1.
    pub fn normalized(basis: Mat<f64>) -> Result<Self> {
        let n = basis.dim();
        check_shape(n, n)?;
        let det = basis.det();
        if !det.is_finite() || det.abs() < SINGULAR_FLOOR {
            return Err(Error::SingularBasis { det: det.abs() });
        }
        Ok(Self::rescaled(basis, det))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let basis = Mat::from_rows(rows).ok_or(Error::NotSquare {
            rows: rows.len(),
            cols,
        })?;
        Self::new(basis)
    }

    fn rescaled(basis: Mat<f64>, det: f64) -> Self {
        let n = basis.dim();
        // Below this the determinant itself is not known more precisely.
        let basis = if (det.abs() - 1.0).abs() <= UNIT_DET_SLACK {
            basis
        } else {
            basis.scale(det.abs().powf(-1.0 / n as f64))
        };
        Lattice {
            dim: n,
            basis,
            log_scale: 0.0,
        }
    }

    /// Wraps a basis already known to be unimodular (e.g. a reduced trajectory snapshot).
    pub(crate) fn from_trusted(basis: Mat<f64>, log_scale: f64) -> Self {
        Lattice {
            dim: basis.dim(),
            basis,
            log_scale,
        }
    }

    pub fn standard(n: usize) -> Result<Self> {
        check_shape(n, n)?;
        Ok(Self::from_trusted(Mat::identity(n), 0.0))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &Mat<f64> {
        &self.basis
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Left action g·L of a matrix on the lattice.
    pub fn transform(&self, g: &Mat<f64>) -> Result<Self> {
        Self::new(g.mul(&self.basis))
    }

    /// Left action computed in double-double, for matrices with large entries.
    pub fn transform_real(&self, g: &Mat<Real>) -> Result<Self> {
        let b = g.mul(&self.basis.to_real());
        Self::new(b.map(to_f64))
    }

    /// Same lattice with an LLL-reduced, length-sorted basis.
    pub fn reduce(&self) -> Result<Self> {
        let (b, _) = reduce_with_transform(&self.basis)?;
        Ok(Self::from_trusted(b, self.log_scale))
    }

    pub fn to_json(&self) -> String {
        let doc = LatticeDoc {
            dim: self.dim,
            basis: self.basis.rows(),
        };
        serde_json::to_string(&doc).expect("lattice serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LatticeDoc = serde_json::from_str(text).map_err(|e| Error::Json(e.to_string()))?;
        if doc.basis.len() != doc.dim {
            return Err(Error::Json(format!(
                "dim is {} but basis has {} rows",
                doc.dim,
                doc.basis.len()
            )));
        }
        Self::from_rows(&doc.basis)
    }
}

impl Serialize for Lattice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LatticeDoc {
            dim: self.dim,
            basis: self.basis.rows(),
        }
        .serialize(s)
    }
}

#[derive(Serialize, Deserialize)]
struct LatticeDoc {
    dim: usize,
    basis: Vec<Vec<f64>>,
}

/// Shorthand for `reduce` on a lattice.
pub fn reduce_basis(lattice: &Lattice) -> Result<Lattice> {
    lattice.reduce()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_unimodular_and_rejects_det_two() {
        assert!(Lattice::new(Mat::identity(3)).is_ok());
        let l = Lattice::new(Mat::diagonal(&[2.0, 1.0, 0.5])).unwrap();
        assert!((l.basis().det() - 1.0).abs() < 1e-15);
        assert!(matches!(
            Lattice::new(Mat::diagonal(&[2.0, 1.0, 1.0])),
            Err(Error::DeterminantMismatch { .. })
        ));
    }

    #[test]
    fn singular_and_bad_shapes() {
        assert!(matches!(
            Lattice::new(Mat::diagonal(&[1.0, 1.0, 0.0])),
            Err(Error::SingularBasis { .. })
        ));
        assert!(matches!(
            Lattice::standard(2),
            Err(Error::UnsupportedDimension(2))
        ));
        assert!(matches!(
            Lattice::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn near_unimodular_is_rescaled() {
        let l = Lattice::new(Mat::diagonal(&[1.0 + 5e-7, 1.0, 1.0])).unwrap();
        assert!((l.basis().det() - 1.0).abs() < 1e-12);
        let m = Lattice::normalized(Mat::diagonal(&[2.0, 2.0, 2.0])).unwrap();
        assert!((m.basis()[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let l = Lattice::new(Mat::diagonal(&[2.0, 1.0, 0.5])).unwrap();
        let text = l.to_json();
        assert!(text.contains("\"dim\":3"));
        let back = Lattice::from_json(&text).unwrap();
        assert_eq!(back, l);
        assert!(matches!(
            Lattice::from_json("{\"dim\":4,\"basis\":[[1]]}"),
            Err(Error::Json(_))
        ));
    }
}
