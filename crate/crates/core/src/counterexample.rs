//! A segment in ℝ³ through a badly approximable vector whose points all
//! show Dirichlet-improvement evidence, built in SL₄.

use std::fmt;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::{SystoleSeries, Trajectory, TrajectoryConfig};
use crate::lattice::{permutations, systole, Lattice, Permutation};
use crate::matrix::Mat;
use crate::real::{div, real, sqrt_real, to_f64, Real};

/// Exponents of the Dirichlet flow on X₄.
pub const DIRICHLET_EXPONENTS: [f64; 4] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, -1.0];

/// Exponents of diag(e^{3t}, e^{t}, e^{-t}, e^{-3t}).
pub const AUXILIARY_EXPONENTS: [f64; 4] = [3.0, 1.0, -1.0, -3.0];

pub const DET_TOL: f64 = 1e-9;
pub const MINOR_FLOOR: f64 = 1e-12;
pub const TAU_DENOMINATOR_FLOOR: f64 = 1e-3;
pub const MAX_HALF_WIDTH: f64 = 0.5;
pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-6;
pub const RANK_TOL: f64 = 1e-8;
pub const IMPROVEMENT_CEILING: f64 = 1.0 - 0.02;

/// 4x4 matrix with zero (1,4), (2,4), (3,4) entries and determinant 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PElement(Mat<f64>);

impl PElement {
    pub fn new(m: Mat<f64>) -> Result<Self> {
        if m.dim() != 4 {
            return Err(Error::UnsupportedDimension(m.dim()));
        }
        if (0..3).any(|i| m[(i, 3)] != 0.0) {
            return Err(Error::InvalidInput("entries (1,4), (2,4), (3,4) must vanish".into()));
        }
        let det = m.det();
        if (det - 1.0).abs() > DET_TOL {
            return Err(Error::DeterminantMismatch { det });
        }
        Ok(PElement(m))
    }

    /// Upper block [[1,0,1],[0,1,1],[0,0,1]] and bottom row (x, y, z, 1).
    pub fn standard(x: f64, y: f64, z: f64) -> Self {
        let mut m = Mat::identity(4);
        m[(0, 2)] = 1.0;
        m[(1, 2)] = 1.0;
        m[(3, 0)] = x;
        m[(3, 1)] = y;
        m[(3, 2)] = z;
        PElement(m)
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.0
    }

    pub fn upper_block(&self) -> Mat<f64> {
        Mat::from_fn(3, |i, j| self.0[(i, j)])
    }

    pub fn bottom_row(&self) -> [f64; 3] {
        [self.0[(3, 0)], self.0[(3, 1)], self.0[(3, 2)]]
    }

    pub fn corner(&self) -> f64 {
        self.0[(3, 3)]
    }
}

/// Block matrix diag(A, d) with det(A)·d = 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QElement {
    pub block: Mat<f64>,
    pub corner: f64,
}

impl QElement {
    pub fn new(block: Mat<f64>, corner: f64) -> Result<Self> {
        if block.dim() != 3 {
            return Err(Error::UnsupportedDimension(block.dim()));
        }
        let det = block.det() * corner;
        if (det - 1.0).abs() > DET_TOL {
            return Err(Error::DeterminantMismatch { det });
        }
        Ok(QElement { block, corner })
    }

    pub fn matrix(&self) -> Mat<f64> {
        embed_block(&self.block, self.corner)
    }
}

fn embed_block(block: &Mat<f64>, corner: f64) -> Mat<f64> {
    Mat::from_fn(4, |i, j| match (i, j) {
        (3, 3) => corner,
        (3, _) | (_, 3) => 0.0,
        _ => block[(i, j)],
    })
}

/// Drops the (4,1), (4,2), (4,3) entries.
pub fn q_projection(p: &PElement) -> QElement {
    QElement {
        block: p.upper_block(),
        corner: p.corner(),
    }
}

/// diag(e^{λt}) m diag(e^{-λt}).
pub fn conjugate_by_flow(m: &Mat<f64>, exponents: &[f64], t: f64) -> Mat<f64> {
    Mat::from_fn(m.dim(), |i, j| ((exponents[i] - exponents[j]) * t).exp() * m[(i, j)])
}

/// Identity with fourth column (v, 1).
pub fn u4_matrix<T: num_traits::Float>(v: [T; 3]) -> Mat<T> {
    let mut m = Mat::identity(4);
    for (i, &vi) in v.iter().enumerate() {
        m[(i, 3)] = vi;
    }
    m
}

/// exp(s E₃₄).
pub fn shear(s: f64) -> Mat<f64> {
    u4_matrix([0.0, 0.0, s])
}

/// Solution of u_s p = p(s)⁻¹ u(ũ).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Factorization {
    pub p_of_s: PElement,
    pub u_tilde: [f64; 3],
    /// Determinant of the top-left 3x3 block of u_s p.
    pub minor: f64,
}

impl Factorization {
    pub fn residual(&self, p: &PElement, s: f64) -> f64 {
        let lhs = shear(s).mul(p.matrix());
        let inv = self.p_of_s.matrix().inverse().expect("p(s) is invertible");
        lhs.sub(&inv.mul(&u4_matrix(self.u_tilde))).max_abs()
    }
}

pub fn solve_factorization(p: &PElement, s: f64) -> Result<Factorization> {
    let m = shear(s).mul(p.matrix());
    let block = Mat::from_fn(3, |i, j| m[(i, j)]);
    let minor = block.det();
    if minor.abs() < MINOR_FLOOR {
        return Err(Error::FactorizationSingular { s, minor });
    }
    let rhs = [m[(0, 3)], m[(1, 3)], m[(2, 3)]];
    let sol = block
        .solve(&rhs)
        .ok_or(Error::FactorizationSingular { s, minor })?;
    let u_tilde = [sol[0], sol[1], sol[2]];
    let u_inv = u4_matrix([-u_tilde[0], -u_tilde[1], -u_tilde[2]]);
    let mut r = m.mul(&u_inv);
    for i in 0..3 {
        r[(i, 3)] = 0.0;
    }
    let p_of_s = r.inverse().ok_or(Error::FactorizationSingular { s, minor })?;
    let mut p_of_s = p_of_s;
    for i in 0..3 {
        p_of_s[(i, 3)] = 0.0;
    }
    Ok(Factorization {
        p_of_s: PElement::new(p_of_s)?,
        u_tilde,
        minor,
    })
}

/// q(s) = q(p(s)).
pub fn q_of_s(p: &PElement, s: f64) -> Result<QElement> {
    Ok(q_projection(&solve_factorization(p, s)?.p_of_s))
}

/// Ratio of polynomials with coefficients in increasing degree.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RationalFunction {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

fn poly(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
}

fn poly_real(coeffs: &[f64], s: Real) -> Real {
    coeffs.iter().rev().fold(real(0.0), |acc, &c| acc * s + real(c))
}

impl RationalFunction {
    pub fn eval(&self, s: f64) -> f64 {
        poly(&self.numerator, s) / poly(&self.denominator, s)
    }

    pub fn eval_real(&self, s: Real) -> Real {
        div(poly_real(&self.numerator, s), poly_real(&self.denominator, s))
    }

    pub fn denominator_at(&self, s: f64) -> f64 {
        poly(&self.denominator, s)
    }
}

/// ũ(s) = u(τ(s) w) on the symmetric interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentParameters {
    pub w: [f64; 3],
    pub tau: RationalFunction,
    pub interval: (f64, f64),
}

/// w = p₄₄ A⁻¹e₃ and τ(s) = s / (1 + c s), c = r·A⁻¹e₃, for p with upper
/// block A and bottom row (r, p₄₄).
pub fn segment_parameters(p: &PElement) -> Result<SegmentParameters> {
    let a = p.upper_block();
    let col = a
        .solve(&[0.0, 0.0, 1.0])
        .ok_or_else(|| Error::DegenerateSegment("singular upper block".into()))?;
    let w = [col[0], col[1], col[2]].map(|c| p.corner() * c);
    if w.iter().all(|&c| c == 0.0) {
        return Err(Error::DegenerateSegment("w = 0".into()));
    }
    let r = p.bottom_row();
    let c: f64 = r.iter().zip(&col).map(|(a, b)| a * b).sum();
    let half = if c == 0.0 {
        MAX_HALF_WIDTH
    } else {
        // Pulled in by a few ulps so the floor also holds after rounding.
        MAX_HALF_WIDTH.min((1.0 - TAU_DENOMINATOR_FLOOR) / c.abs() * (1.0 - 1e-12))
    };
    if !(half > 0.0) {
        return Err(Error::DegenerateSegment("empty parameter interval".into()));
    }
    Ok(SegmentParameters {
        w,
        tau: RationalFunction {
            numerator: vec![0.0, 1.0],
            denominator: vec![1.0, c],
        },
        interval: (-half, half),
    })
}

/// Frame used for the adjoint image of the block algebra.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum AdjointFrame {
    /// Conjugation by q(p), the form of the hand computation.
    #[default]
    Displayed,
    /// Conjugation by q(p(0)) = q(p⁻¹).
    Solved,
}

fn frame_matrix(p: &PElement, frame: AdjointFrame) -> Result<Mat<f64>> {
    let q = q_projection(p).matrix();
    match frame {
        AdjointFrame::Displayed => Ok(q),
        AdjointFrame::Solved => q
            .inverse()
            .ok_or_else(|| Error::InvalidInput("q(p) is singular".into())),
    }
}

/// q′(0)q(0)⁻¹ from central differences at steps h and 2h, combined by
/// one Richardson step so the truncation error is O(h⁴).
pub fn q_log_derivative_fd(p: &PElement, h: f64) -> Result<Mat<f64>> {
    let central = |step: f64| -> Result<Mat<f64>> {
        let plus = q_of_s(p, step)?.matrix();
        let minus = q_of_s(p, -step)?.matrix();
        Ok(plus.sub(&minus).scale(1.0 / (2.0 * step)))
    };
    let fine = central(h)?;
    let coarse = central(2.0 * h)?;
    let derivative = fine.scale(4.0 / 3.0).sub(&coarse.scale(1.0 / 3.0));
    let q0 = q_of_s(p, 0.0)?.matrix();
    let inv = q0
        .inverse()
        .ok_or_else(|| Error::InvalidInput("q(0) is singular".into()))?;
    Ok(derivative.mul(&inv))
}

/// q′(0)q(0)⁻¹ = diag(-(A⁻¹e₃) r, r·A⁻¹e₃).
pub fn q_log_derivative_closed(p: &PElement) -> Result<Mat<f64>> {
    let col = p
        .upper_block()
        .solve(&[0.0, 0.0, 1.0])
        .ok_or_else(|| Error::InvalidInput("singular upper block".into()))?;
    let r = p.bottom_row();
    let c: f64 = r.iter().zip(&col).map(|(a, b)| a * b).sum();
    let block = Mat::from_fn(3, |i, j| -col[i] * r[j]);
    Ok(embed_block(&block, c))
}

/// Finite-difference derivative, checked against the closed form.
pub fn q_log_derivative(p: &PElement) -> Result<Mat<f64>> {
    let fd = q_log_derivative_fd(p, FD_STEP)?;
    let closed = q_log_derivative_closed(p)?;
    let scale = closed.max_abs().max(1.0);
    let relative = fd.sub(&closed).max_abs() / scale;
    if relative > FD_TOL {
        return Err(Error::DerivativeMismatch { relative });
    }
    Ok(fd)
}

fn unit(i: usize, j: usize) -> Mat<f64> {
    let mut m = Mat::zeros(4);
    m[(i, j)] = 1.0;
    m
}

/// Basis E_{σ(i)σ(j)}, i < j.
pub fn upper_algebra_basis(sigma: &Permutation) -> Vec<Mat<f64>> {
    let mut out = Vec::with_capacity(6);
    for i in 0..4 {
        for j in i + 1..4 {
            out.push(unit(sigma.apply(i), sigma.apply(j)));
        }
    }
    out
}

/// Trace-zero block-diagonal 2+2 algebra.
pub fn block_algebra_basis() -> Vec<Mat<f64>> {
    let mut out = vec![unit(0, 1), unit(1, 0), unit(2, 3), unit(3, 2)];
    for k in 0..3 {
        out.push(unit(k, k).sub(&unit(3, 3)));
    }
    out
}

pub fn adjoint(g: &Mat<f64>, x: &Mat<f64>) -> Result<Mat<f64>> {
    let inv = g
        .inverse()
        .ok_or_else(|| Error::InvalidInput("singular conjugating matrix".into()))?;
    Ok(g.mul(x).mul(&inv))
}

/// Outcome of the rank comparison for one permutation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MembershipReport {
    pub sigma: String,
    pub span_rank: usize,
    pub augmented_rank: usize,
    /// Smallest singular value kept by the augmented rank count, relative to the largest.
    pub smallest_retained: f64,
    pub outside: bool,
}

fn unit_columns(mats: &[Mat<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(16, mats.len(), |k, c| {
        let m = &mats[c];
        let norm = m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        m[(k / 4, k % 4)] / norm
    })
}

fn singular_rank(m: DMatrix<f64>) -> (usize, f64, f64) {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let rel: Vec<f64> = sv.iter().map(|v| v / max).collect();
    let rank = rel.iter().filter(|&&v| v > RANK_TOL).count();
    let smallest = rel.iter().cloned().filter(|&v| v > RANK_TOL).fold(f64::INFINITY, f64::min);
    let largest_dropped = rel.iter().cloned().filter(|&v| v <= RANK_TOL).fold(0.0, f64::max);
    (rank, smallest, largest_dropped)
}

/// Whether q′(0)q(0)⁻¹ lies outside u⁺_σ + Ad(frame)(h).
pub fn membership_report(p: &PElement, sigma: &Permutation, frame: AdjointFrame) -> Result<MembershipReport> {
    let g = frame_matrix(p, frame)?;
    let mut span = upper_algebra_basis(sigma);
    for x in block_algebra_basis() {
        span.push(adjoint(&g, &x)?);
    }
    let target = q_log_derivative(p)?;
    let (span_rank, _, _) = singular_rank(unit_columns(&span));
    if target.max_abs() == 0.0 {
        return Ok(MembershipReport {
            sigma: sigma.to_string(),
            span_rank,
            augmented_rank: span_rank,
            smallest_retained: f64::NAN,
            outside: false,
        });
    }
    span.push(target);
    let (augmented_rank, smallest, dropped) = singular_rank(unit_columns(&span));
    let ambiguous = [smallest, dropped]
        .into_iter()
        .find(|&v| v > RANK_TOL / 10.0 && v < 10.0 * RANK_TOL);
    if let Some(value) = ambiguous {
        return Err(Error::RankTestUnstable {
            sigma: sigma.to_string(),
            value,
            threshold: RANK_TOL,
        });
    }
    Ok(MembershipReport {
        sigma: sigma.to_string(),
        span_rank,
        augmented_rank,
        smallest_retained: smallest,
        outside: augmented_rank > span_rank,
    })
}

pub fn relation_membership_test(p: &PElement, sigma: &Permutation) -> Result<bool> {
    Ok(membership_report(p, sigma, AdjointFrame::Displayed)?.outside)
}

/// Linear relations on (x, y, z) derived by hand for the standard p.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HandRelation {
    XZero,
    YZero,
    XPlusYPlusTwoZ,
}

impl HandRelation {
    pub fn value(&self, [x, y, z]: [f64; 3]) -> f64 {
        match self {
            HandRelation::XZero => x,
            HandRelation::YZero => y,
            HandRelation::XPlusYPlusTwoZ => x + y + 2.0 * z,
        }
    }
}

impl fmt::Display for HandRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HandRelation::XZero => "x = 0",
            HandRelation::YZero => "y = 0",
            HandRelation::XPlusYPlusTwoZ => "x + y + 2z = 0",
        })
    }
}

fn contains(basis_of: &Permutation, i: usize, j: usize) -> bool {
    // E_ij lies in u⁺_σ iff σ⁻¹(i) < σ⁻¹(j).
    let inv = basis_of.inverse();
    inv.apply(i) < inv.apply(j)
}

/// The relations whose vanishing puts the derivative inside the sum for σ.
pub fn predicted_relations(sigma: &Permutation) -> Vec<HandRelation> {
    let mut out = Vec::new();
    if !contains(sigma, 2, 0) {
        out.push(HandRelation::XZero);
    }
    if !contains(sigma, 2, 1) {
        out.push(HandRelation::YZero);
    }
    let first = !contains(sigma, 0, 1) && !contains(sigma, 0, 2);
    let second = !contains(sigma, 1, 0) && !contains(sigma, 1, 2);
    if first || second {
        out.push(HandRelation::XPlusYPlusTwoZ);
    }
    out
}

/// Rank test for every σ; errors with the failing σ and the relations it predicts.
pub fn check_admissible(xyz: [f64; 3]) -> Result<()> {
    let p = PElement::standard(xyz[0], xyz[1], xyz[2]);
    for sigma in permutations(4) {
        if !relation_membership_test(&p, &sigma)? {
            let vanishing: Vec<String> = predicted_relations(&sigma)
                .into_iter()
                .filter(|r| r.value(xyz).abs() < RANK_TOL)
                .map(|r| r.to_string())
                .collect();
            let reason = if vanishing.is_empty() {
                format!("derivative inside the span for sigma = {sigma}")
            } else {
                format!("{} (sigma = {sigma})", vanishing.join(", "))
            };
            return Err(Error::Inadmissible {
                x: xyz[0],
                y: xyz[1],
                z: xyz[2],
                reason,
            });
        }
    }
    Ok(())
}

pub fn is_admissible(xyz: [f64; 3]) -> Result<bool> {
    match check_admissible(xyz) {
        Ok(()) => Ok(true),
        Err(Error::Inadmissible { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// First admissible integer triple in [-3, 3]³, in a seeded order.
pub fn find_admissible_xyz(seed: u64) -> Result<[i64; 3]> {
    let mut triples: Vec<[i64; 3]> = (-3..=3)
        .flat_map(|x| (-3..=3).flat_map(move |y| (-3..=3).map(move |z| [x, y, z])))
        .collect();
    triples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for t in triples {
        if is_admissible(t.map(|c| c as f64))? {
            return Ok(t);
        }
    }
    Err(Error::SearchExhausted)
}

/// Minkowski embedding of the integral basis {1, √2, √3, (√2+√6)/2} of
/// ℚ(√2, √3), scaled to covolume 1. Rows are the embeddings with sign
/// patterns (+,+), (+,-), (-,+), (-,-) on (√2, √3).
pub fn quartic_base_basis() -> Mat<Real> {
    let r2 = sqrt_real(2.0);
    let r3 = sqrt_real(3.0);
    let scale = div(real(1.0), crate::real::sqrt_real(48.0).sqrt());
    let signs = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
    let mut m = Mat::from_fn(4, |i, j| {
        let (a, b) = signs[i];
        let s2 = r2 * real(a);
        let s3 = r3 * real(b);
        let v = match j {
            0 => real(1.0),
            1 => s2,
            2 => s3,
            _ => div(s2 + s2 * s3, real(2.0)),
        };
        v * scale
    });
    if to_f64(m.det()) < 0.0 {
        for i in 0..4 {
            m[(i, 0)] = -m[(i, 0)];
        }
    }
    m
}

pub fn quartic_base_lattice() -> Result<Lattice> {
    Lattice::new(quartic_base_basis().to_f64())
}

/// Unit directions of the full diagonal group: all nonzero (a, b, c) in
/// {-1, 0, 1}³, completed to trace zero and normalized.
pub fn diagonal_directions() -> Vec<[f64; 4]> {
    let mut out = Vec::new();
    for a in -1..=1 {
        for b in -1..=1 {
            for c in -1..=1 {
                if (a, b, c) == (0, 0, 0) {
                    continue;
                }
                let d = [a as f64, b as f64, c as f64, -(a + b + c) as f64];
                let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                out.push(d.map(|v| v / norm));
            }
        }
    }
    out
}

/// Smallest systole of diag(e^{t d}) x over the direction grid, t ∈ [0, t_max].
pub fn diagonal_orbit_min_systole(basis: &Mat<Real>, t_max: f64, t_step: f64) -> Result<f64> {
    let steps = (t_max / t_step).ceil() as usize;
    let mins = diagonal_directions()
        .par_iter()
        .map(|d| {
            let mut traj = Trajectory::new(basis.clone(), d, 0.5)?;
            let mut m = traj.systole()?;
            for k in 1..=steps {
                traj.advance_to((k as f64 * t_step).min(t_max))?;
                m = m.min(traj.systole()?);
            }
            Ok(m)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mins.into_iter().fold(f64::INFINITY, f64::min))
}

/// Rational 4x4 matrix with exact determinant 1: entries numerator/denominator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RationalMatrix {
    pub numerators: Vec<Vec<i128>>,
    pub denominators: Vec<Vec<i128>>,
}

impl RationalMatrix {
    /// Entries rounded to multiples of 1/den, with the entry of largest
    /// cofactor re-solved so the determinant is exactly 1.
    pub fn approximate(m: &Mat<f64>, den: i64) -> Result<Self> {
        let n = m.dim();
        let ints = Mat::from_fn(n, |i, j| (m[(i, j)] * den as f64).round() as i64);
        let target = (den as i128).pow(n as u32);
        let mut best: Option<(usize, usize, i128)> = None;
        for i in 0..n {
            for j in 0..n {
                let c = cofactor(&ints, i, j);
                if best.map_or(true, |(_, _, b)| c.abs() > b.abs()) {
                    best = Some((i, j, c));
                }
            }
        }
        let (bi, bj, c) = best.filter(|b| b.2 != 0).ok_or(Error::SingularBasis { det: 0.0 })?;
        let rest = ints.det_exact() - ints[(bi, bj)] as i128 * c;
        let mut numerators = vec![vec![0i128; n]; n];
        let mut denominators = vec![vec![den as i128; n]; n];
        for i in 0..n {
            for j in 0..n {
                numerators[i][j] = ints[(i, j)] as i128;
            }
        }
        let (num, d) = reduce_fraction(target - rest, c * den as i128);
        numerators[bi][bj] = num;
        denominators[bi][bj] = d;
        Ok(RationalMatrix {
            numerators,
            denominators,
        })
    }

    pub fn to_real(&self) -> Mat<Real> {
        let n = self.numerators.len();
        Mat::from_fn(n, |i, j| {
            div(
                real(self.numerators[i][j] as f64),
                real(self.denominators[i][j] as f64),
            )
        })
    }

    /// Determinant as an exact fraction. Each row is cleared by its own
    /// denominator lcm, which keeps the integers well inside i128.
    pub fn det(&self) -> (i128, i128) {
        let n = self.numerators.len();
        let row_lcm: Vec<i128> = self
            .denominators
            .iter()
            .map(|row| row.iter().fold(1i128, |acc, &d| lcm(acc, d)))
            .collect();
        let ints = Mat::from_fn(n, |i, j| {
            (self.numerators[i][j] * (row_lcm[i] / self.denominators[i][j])) as i64
        });
        reduce_fraction(ints.det_exact(), row_lcm.iter().product())
    }
}

fn cofactor(m: &Mat<i64>, i: usize, j: usize) -> i128 {
    let n = m.dim();
    let minor = Mat::from_fn(n - 1, |a, b| {
        m[(if a < i { a } else { a + 1 }, if b < j { b } else { b + 1 })]
    });
    let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
    sign * minor.det_exact()
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: i128, b: i128) -> i128 {
    a / gcd(a, b) * b
}

fn reduce_fraction(num: i128, den: i128) -> (i128, i128) {
    let g = gcd(num, den).max(1);
    let s = if den < 0 { -1 } else { 1 };
    (s * num / g, s * den / g)
}

/// Everything needed to trace the segment ℓ(s) = v₀ + τ(s) w.
#[derive(Clone, Debug, Serialize)]
pub struct SegmentConstruction {
    pub requested_xyz: [f64; 3],
    pub p: PElement,
    #[serde(skip)]
    pub g: Mat<Real>,
    pub rational_factor: RationalMatrix,
    pub base_point: Lattice,
    #[serde(serialize_with = "serialize_reals")]
    pub v0: [Real; 3],
    pub w: [f64; 3],
    pub tau: RationalFunction,
    pub interval: (f64, f64),
}

fn serialize_reals<S: serde::Serializer>(v: &[Real; 3], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(3))?;
    for x in v {
        seq.serialize_element(&[x.hi(), x.lo()])?;
    }
    seq.end()
}

/// Default anchor target (√2 - 1, √3 - 1, √5 - 2).
pub fn default_anchor_target() -> [f64; 3] {
    [2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0, 5f64.sqrt() - 2.0]
}

/// Denominator of the rational factor.
pub const RATIONAL_DENOMINATOR: i64 = 1000;

impl SegmentConstruction {
    /// g = g₀R with g₀ the quartic basis and R ∈ SL₄(ℚ) close to
    /// g₀⁻¹ p(x,y,z) u(target), then g = p′u(v₀) with p′ ∈ P.
    pub fn build(xyz: [f64; 3], target: [f64; 3]) -> Result<Self> {
        let g0 = quartic_base_basis();
        let approx = PElement::standard(xyz[0], xyz[1], xyz[2])
            .matrix()
            .mul(&u4_matrix(target));
        let g0_inv = g0
            .to_f64()
            .inverse()
            .ok_or(Error::SingularBasis { det: 0.0 })?;
        let rational_factor = RationalMatrix::approximate(&g0_inv.mul(&approx), RATIONAL_DENOMINATOR)?;
        let g = g0.mul(&rational_factor.to_real());
        let block = Mat::from_fn(3, |i, j| g[(i, j)]);
        let sol = block
            .solve(&[g[(0, 3)], g[(1, 3)], g[(2, 3)]])
            .ok_or(Error::SingularBasis { det: 0.0 })?;
        let v0 = [sol[0], sol[1], sol[2]];
        let corner = g[(3, 3)] - (0..3).fold(real(0.0), |acc, k| acc + g[(3, k)] * v0[k]);
        let p = PElement::new(Mat::from_fn(4, |i, j| match (i, j) {
            (3, 3) => to_f64(corner),
            (_, 3) => 0.0,
            _ => to_f64(g[(i, j)]),
        }))?;
        let params = segment_parameters(&p)?;
        Ok(SegmentConstruction {
            requested_xyz: xyz,
            base_point: Lattice::new(g.to_f64())?,
            p,
            g,
            rational_factor,
            v0,
            w: params.w,
            tau: params.tau,
            interval: params.interval,
        })
    }

    /// ℓ(s) = v₀ + τ(s) w in double-double.
    pub fn point(&self, s: f64) -> [Real; 3] {
        let tau = self.tau.eval_real(real(s));
        [0, 1, 2].map(|i| self.v0[i] + tau * real(self.w[i]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("construction serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SegmentVerdict {
    ImprovementEvidence,
    NoEvidence,
}

impl fmt::Display for SegmentVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SegmentVerdict::ImprovementEvidence => "improvement evidence",
            SegmentVerdict::NoEvidence => "no evidence",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentRow {
    pub s: f64,
    pub min_systole: f64,
    pub max_systole: f64,
    pub max_tail_systole: f64,
    pub verdict: SegmentVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerdictTable {
    pub t_max: f64,
    pub rows: Vec<SegmentRow>,
}

impl VerdictTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,min_systole,max_tail_systole,verdict\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.11e},{:.11e},{:.11e},{}\n",
                r.s, r.min_systole, r.max_tail_systole, r.verdict
            ));
        }
        out
    }

    pub fn row(&self, s: f64) -> Option<&SegmentRow> {
        self.rows.iter().find(|r| r.s == s)
    }
}

/// Systole series of f_t u(ℓ(s)) ℤ⁴ under the Dirichlet flow.
pub fn segment_series(construction: &SegmentConstruction, s: f64, cfg: &TrajectoryConfig) -> Result<SystoleSeries> {
    let mut traj = Trajectory::new(u4_matrix(construction.point(s)), &DIRICHLET_EXPONENTS, cfg.renorm_step)?;
    let mut ts = Vec::with_capacity(cfg.t_samples + 1);
    let mut values = Vec::with_capacity(cfg.t_samples + 1);
    for t in cfg.times() {
        traj.advance_to(t)?;
        ts.push(t);
        values.push(traj.systole()?);
    }
    Ok(SystoleSeries::from_samples(ts, values))
}

pub fn verify_segment(construction: &SegmentConstruction, s_grid: &[f64], t_max: f64) -> Result<VerdictTable> {
    let (lo, hi) = construction.interval;
    if let Some(&s) = s_grid.iter().find(|&&s| s < lo || s > hi) {
        return Err(Error::InvalidInput(format!(
            "s = {s} lies outside the parameter interval [{lo}, {hi}]"
        )));
    }
    let cfg = TrajectoryConfig::with_default_sampling(t_max)?;
    let rows = s_grid
        .par_iter()
        .map(|&s| {
            let series = segment_series(construction, s, &cfg)?;
            let tail = series.max_from(t_max / 2.0);
            Ok(SegmentRow {
                s,
                min_systole: series.min(),
                max_systole: series.max(),
                max_tail_systole: tail,
                verdict: if tail <= IMPROVEMENT_CEILING {
                    SegmentVerdict::ImprovementEvidence
                } else {
                    SegmentVerdict::NoEvidence
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerdictTable { t_max, rows })
}

/// Smallest systole of the orbit starting at `basis`, used for diagnostics.
pub fn lattice_systole(basis: &Mat<Real>) -> Result<f64> {
    systole(&Lattice::new(basis.to_f64())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(one_based: [usize; 4]) -> Permutation {
        Permutation(one_based.iter().map(|i| i - 1).collect())
    }

    #[test]
    fn projection_hand_values() {
        let id = PElement::new(Mat::identity(4)).unwrap();
        assert_eq!(q_projection(&id).matrix(), Mat::identity(4));
        let p = PElement::standard(2.0, -1.0, 0.5);
        let q = q_projection(&p);
        assert_eq!(q.block, p.upper_block());
        assert_eq!(q.corner, 1.0);
    }

    #[test]
    fn projection_is_the_dirichlet_limit() {
        let p = PElement::standard(1.0, 2.0, 3.0);
        let conj = conjugate_by_flow(p.matrix(), &DIRICHLET_EXPONENTS, 10.0);
        assert!(conj.sub(&q_projection(&p).matrix()).max_abs() < 1e-5);
        // The auxiliary flow expands the upper block instead.
        let aux = conjugate_by_flow(p.matrix(), &AUXILIARY_EXPONENTS, 10.0);
        assert!(aux.max_abs() > 1e6);
    }

    #[test]
    fn p_element_validation() {
        let mut m = Mat::identity(4);
        m[(0, 3)] = 1.0;
        assert!(PElement::new(m).is_err());
        assert!(matches!(
            PElement::new(Mat::diagonal(&[2.0, 1.0, 1.0, 1.0])),
            Err(Error::DeterminantMismatch { .. })
        ));
    }

    #[test]
    fn factorization_at_zero_inverts_p() {
        let p = PElement::standard(1.0, 1.0, 1.0);
        let f = solve_factorization(&p, 0.0).unwrap();
        assert_eq!(f.u_tilde, [0.0, 0.0, 0.0]);
        let inv = p.matrix().inverse().unwrap();
        assert!(f.p_of_s.matrix().sub(&inv).max_abs() < 1e-14);
    }

    #[test]
    fn factorization_matches_segment_parameters() {
        let p = PElement::standard(1.0, 1.0, 1.0);
        let params = segment_parameters(&p).unwrap();
        assert_eq!(params.w, [-1.0, -1.0, 1.0]);
        let f = solve_factorization(&p, 0.01).unwrap();
        let tau = params.tau.eval(0.01);
        for i in 0..3 {
            assert!((f.u_tilde[i] - tau * params.w[i]).abs() < 1e-15);
        }
        assert!(f.residual(&p, 0.01) < 1e-12);
        // τ(s) = s / (1 + (z - x - y) s)
        assert_eq!(params.tau.denominator, vec![1.0, -1.0]);
    }

    #[test]
    fn zero_bottom_row_still_gives_a_segment() {
        let params = segment_parameters(&PElement::standard(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(params.interval, (-0.5, 0.5));
        assert_eq!(params.tau.eval(0.0), 0.0);
        assert!(params.tau.eval(0.3) != params.tau.eval(0.1));
    }

    #[test]
    fn interval_keeps_denominator_away_from_zero() {
        let params = segment_parameters(&PElement::standard(3.0, 3.0, -3.0)).unwrap();
        let (lo, hi) = params.interval;
        assert!(hi < 0.5 && lo == -hi);
        for s in [lo, 0.0, hi] {
            assert!(params.tau.denominator_at(s).abs() >= TAU_DENOMINATOR_FLOOR * (1.0 - 1e-12));
        }
    }

    #[test]
    fn closed_form_log_derivative_matches_hand_matrix() {
        let (x, y, z) = (0.3, -1.2, 2.0);
        let closed = q_log_derivative_closed(&PElement::standard(x, y, z)).unwrap();
        let rows = [[x, y, z, 0.0], [x, y, z, 0.0], [-x, -y, -z, 0.0], [0.0, 0.0, 0.0, z - x - y]];
        for i in 0..4 {
            for j in 0..4 {
                assert!((closed[(i, j)] - rows[i][j]).abs() < 1e-15);
            }
        }
        assert!(q_log_derivative(&PElement::standard(x, y, z)).is_ok());
    }

    #[test]
    fn hand_predictions_for_named_permutations() {
        let id = perm([1, 2, 3, 4]);
        assert_eq!(predicted_relations(&id), vec![HandRelation::XZero, HandRelation::YZero]);
        assert_eq!(predicted_relations(&perm([3, 2, 1, 4])), vec![HandRelation::XPlusYPlusTwoZ]);
        assert_eq!(predicted_relations(&perm([4, 3, 2, 1])), vec![HandRelation::XPlusYPlusTwoZ]);
        assert_eq!(predicted_relations(&perm([2, 1, 3, 4])), vec![HandRelation::XZero, HandRelation::YZero]);
    }

    #[test]
    fn standard_triple_is_admissible() {
        let p = PElement::standard(1.0, 1.0, 1.0);
        for sigma in permutations(4) {
            assert!(relation_membership_test(&p, &sigma).unwrap(), "sigma {sigma}");
        }
    }

    #[test]
    fn relation_triple_is_caught() {
        let p = PElement::standard(1.0, 1.0, -1.0);
        assert!(!relation_membership_test(&p, &perm([3, 2, 1, 4])).unwrap());
        let err = check_admissible([1.0, 1.0, -1.0]).unwrap_err();
        assert!(err.to_string().contains("x + y + 2z = 0"));
        assert!(!is_admissible([0.0, 0.0, 0.0]).unwrap());
    }

    #[test]
    fn rational_factor_has_unit_determinant() {
        let m = Mat::from_fn(4, |i, j| ((i * 7 + j * 3) as f64).sin() + if i == j { 2.0 } else { 0.0 });
        let scale = m.det().abs().powf(-0.25);
        let m = m.scale(scale);
        let m = if m.det() < 0.0 { m.permute_columns(&[1, 0, 2, 3]) } else { m };
        let r = RationalMatrix::approximate(&m, 1000).unwrap();
        assert_eq!(r.det(), (1, 1));
        assert!(r.to_real().to_f64().sub(&m).max_abs() < 0.05);
    }

    #[test]
    fn quartic_lattice_has_unit_covolume() {
        let b = quartic_base_basis();
        assert!((to_f64(b.det()) - 1.0).abs() < 1e-28);
        assert!(quartic_base_lattice().unwrap().dim() == 4);
        assert!(lattice_systole(&b).unwrap() > 0.0);
    }
}
