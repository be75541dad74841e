//! Sup-norm enumeration.
//!
//! Coefficients are searched depth first on an LLL-reduced basis. Each
//! level is pruned twice: by the Euclidean Fincke-Pohst ellipsoid of radius
//! sqrt(n)·R, which contains the sup-norm cube of radius R, and by the box
//! |c_i| <= ||row_i(B^-1)||_1 · R obtained from x = B c.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::matrix::{sup_norm, Mat};
use crate::real::{to_f64, Real};

use super::reduce::reduce_with_transform;
use super::Lattice;

/// Upper limit on the coefficient box volume before enumeration is refused.
pub const MAX_CANDIDATES: f64 = 1e9;
const REL_TIE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ShortVector {
    /// Coordinates with respect to the lattice's own basis.
    pub coeffs: Vec<i64>,
    pub point: Vec<f64>,
    pub norm: f64,
}

impl ShortVector {
    fn from_coeffs(basis: &Mat<f64>, coeffs: Vec<i64>) -> Self {
        let c: Vec<Real> = coeffs.iter().map(|&v| Real::from(v)).collect();
        let point: Vec<f64> = basis.to_real().mul_vec(&c).into_iter().map(to_f64).collect();
        let norm = sup_norm(&point);
        ShortVector {
            coeffs,
            point,
            norm,
        }
    }
}

fn canonical_sign(mut c: Vec<i64>) -> Vec<i64> {
    if c.iter().find(|&&v| v != 0).is_some_and(|&v| v < 0) {
        c.iter_mut().for_each(|v| *v = -*v);
    }
    c
}

/// Tie-break order: smaller l1 norm, then earlier leading coordinate, then lexicographic.
fn tie_key(a: &[i64], b: &[i64]) -> Ordering {
    let l1 = |c: &[i64]| c.iter().map(|v| v.unsigned_abs()).sum::<u64>();
    let lead = |c: &[i64]| c.iter().position(|&v| v != 0).unwrap_or(c.len());
    l1(a)
        .cmp(&l1(b))
        .then_with(|| lead(a).cmp(&lead(b)))
        .then_with(|| a.cmp(b))
}

struct Enumerator {
    basis: Mat<f64>,
    transform: Mat<i64>,
    mu: Mat<f64>,
    gs_norms: Vec<f64>,
    inv_row_l1: Vec<f64>,
}

impl Enumerator {
    fn new(lattice: &Lattice) -> Result<Self> {
        let (basis, transform) = reduce_with_transform(lattice.basis())?;
        let n = basis.dim();
        let inv = basis.inverse().ok_or(Error::SingularBasis { det: 0.0 })?;
        let inv_row_l1 = (0..n)
            .map(|i| (0..n).map(|j| inv[(i, j)].abs()).sum())
            .collect();
        let mut mu = Mat::zeros(n);
        let mut gs_norms = Vec::with_capacity(n);
        let mut star: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let bi = basis.column(i);
            let mut v = bi.clone();
            for j in 0..i {
                let m: f64 = bi.iter().zip(&star[j]).map(|(a, b)| a * b).sum::<f64>() / gs_norms[j];
                mu[(i, j)] = m;
                for (vk, sk) in v.iter_mut().zip(&star[j]) {
                    *vk -= m * sk;
                }
            }
            gs_norms.push(v.iter().map(|x| x * x).sum());
            star.push(v);
        }
        Ok(Enumerator {
            basis,
            transform,
            mu,
            gs_norms,
            inv_row_l1,
        })
    }

    fn box_bounds(&self, radius: f64) -> Result<Vec<i64>> {
        let r = radius * (1.0 + 1e-9);
        let bounds: Vec<f64> = self.inv_row_l1.iter().map(|l| (l * r).floor()).collect();
        let volume: f64 = bounds.iter().map(|b| 2.0 * b + 1.0).product();
        if !volume.is_finite() || volume > MAX_CANDIDATES {
            return Err(Error::EnumerationOverflow { candidates: volume });
        }
        Ok(bounds.into_iter().map(|b| b as i64).collect())
    }

    fn point(&self, c: &[i64]) -> Vec<f64> {
        let n = c.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.basis[(i, j)] * c[j] as f64).sum())
            .collect()
    }

    fn to_original(&self, c: &[i64]) -> Vec<i64> {
        let n = c.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.transform[(i, j)] * c[j]).sum())
            .collect()
    }

    /// Visits one representative of each ±c with x = Bc inside the
    /// pruning region. `visit` may shrink the radius by returning a new one.
    fn search(&self, radius: f64, visit: &mut dyn FnMut(&[i64], &[f64]) -> Option<f64>) -> Result<()> {
        let n = self.basis.dim();
        let bounds = self.box_bounds(radius)?;
        let mut state = SearchState {
            radius,
            bounds,
            coeffs: vec![0; n],
        };
        self.descend(n - 1, 0.0, true, &mut state, visit);
        Ok(())
    }

    fn descend(
        &self,
        level: usize,
        partial: f64,
        zero_above: bool,
        st: &mut SearchState,
        visit: &mut dyn FnMut(&[i64], &[f64]) -> Option<f64>,
    ) {
        let n = self.basis.dim();
        let budget = n as f64 * st.radius * st.radius * (1.0 + 1e-9) - partial;
        if budget < 0.0 {
            return;
        }
        let center: f64 = -(level + 1..n)
            .map(|j| self.mu[(j, level)] * st.coeffs[j] as f64)
            .sum::<f64>();
        let width = (budget / self.gs_norms[level]).sqrt();
        let cap = st.bounds[level];
        let mut lo = ((center - width).ceil() as i64).max(-cap);
        let hi = ((center + width).floor() as i64).min(cap);
        if zero_above {
            lo = lo.max(0);
        }
        for c in lo..=hi {
            st.coeffs[level] = c;
            let d = c as f64 - center;
            let next = partial + d * d * self.gs_norms[level];
            if level == 0 {
                if zero_above && c == 0 {
                    continue;
                }
                let x = self.point(&st.coeffs);
                if let Some(r) = visit(&st.coeffs, &x) {
                    if r < st.radius {
                        st.radius = r;
                        if let Ok(b) = self.box_bounds(r) {
                            st.bounds = b;
                        }
                    }
                }
            } else {
                self.descend(level - 1, next, zero_above && c == 0, st, visit);
            }
        }
        st.coeffs[level] = 0;
    }
}

struct SearchState {
    radius: f64,
    bounds: Vec<i64>,
    coeffs: Vec<i64>,
}

/// A nonzero lattice vector of minimal sup-norm.
///
/// Among vectors of equal norm (relative 1e-12) the sign-normalized
/// coefficient vector with the smallest l1 norm wins, then the one with the
/// earliest nonzero entry, then the lexicographically smallest.
pub fn shortest_vector(lattice: &Lattice) -> Result<ShortVector> {
    let en = Enumerator::new(lattice)?;
    let n = lattice.dim();
    let start = (0..n)
        .map(|j| sup_norm(&en.basis.column(j)))
        .fold(f64::INFINITY, f64::min);
    let mut found: Vec<(f64, Vec<i64>)> = Vec::new();
    let mut best = start;
    en.search(start * (1.0 + REL_TIE), &mut |c, x| {
        let norm = sup_norm(x);
        if norm > best * (1.0 + REL_TIE) {
            return None;
        }
        if norm < best {
            best = norm;
            found.retain(|(m, _)| *m <= best * (1.0 + REL_TIE));
        }
        found.push((norm, c.to_vec()));
        Some(best * (1.0 + REL_TIE))
    })?;
    let candidates: Vec<ShortVector> = found
        .iter()
        .map(|(_, c)| ShortVector::from_coeffs(lattice.basis(), canonical_sign(en.to_original(c))))
        .collect();
    let min_norm = candidates
        .iter()
        .map(|v| v.norm)
        .fold(f64::INFINITY, f64::min);
    candidates
        .into_iter()
        .filter(|v| v.norm <= min_norm * (1.0 + REL_TIE))
        .min_by(|a, b| tie_key(&a.coeffs, &b.coeffs))
        .ok_or(Error::SingularBasis { det: 0.0 })
}

/// Sup-norm of a shortest nonzero vector.
pub fn systole(lattice: &Lattice) -> Result<f64> {
    Ok(shortest_vector(lattice)?.norm)
}

/// Nonzero lattice points in the open cube of radius `radius`, one per ±pair.
pub fn cube_points(lattice: &Lattice, radius: f64) -> Result<Vec<ShortVector>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidInput(format!("cube radius must be positive, got {radius}")));
    }
    let en = Enumerator::new(lattice)?;
    let mut inside: Vec<Vec<i64>> = Vec::new();
    let cut = radius * (1.0 - REL_TIE);
    en.search(radius, &mut |c, x| {
        if sup_norm(x) < cut {
            inside.push(c.to_vec());
        }
        None
    })?;
    let mut points: Vec<ShortVector> = inside
        .iter()
        .map(|c| ShortVector::from_coeffs(lattice.basis(), canonical_sign(en.to_original(c))))
        .filter(|v| v.norm < cut)
        .collect();
    points.sort_by(|a, b| a.norm.total_cmp(&b.norm).then_with(|| tie_key(&a.coeffs, &b.coeffs)));
    Ok(points)
}

/// Membership in K_eps: systole at least eps - 1e-9.
pub fn in_k_eps(lattice: &Lattice, eps: f64) -> Result<bool> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1], got {eps}")));
    }
    Ok(systole(lattice)? >= eps - 1e-9)
}
