//! Diagonal flows, horospherical embeddings and renormalized trajectories.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{reduce_with_transform, systole, Lattice};
use crate::matrix::Mat;
use crate::real::{real, Real};

const WEIGHT_TOL: f64 = 1e-12;

/// Weights (r1, r2) with r1, r2 > 0 and r1 + r2 = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightVector {
    r1: f64,
    r2: f64,
}

impl WeightVector {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        if !(r1 > 0.0 && r2 > 0.0) || (r1 + r2 - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidInput(format!(
                "weights must be positive and sum to 1, got ({r1}, {r2})"
            )));
        }
        Ok(WeightVector { r1, r2 })
    }

    pub fn equal() -> Self {
        WeightVector { r1: 0.5, r2: 0.5 }
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn r2(&self) -> f64 {
        self.r2
    }

    pub fn min(&self) -> f64 {
        self.r1.min(self.r2)
    }

    pub fn is_equal(&self) -> bool {
        (self.r1 - self.r2).abs() <= WEIGHT_TOL
    }

    /// Diagonal exponents (r1, r2, -1) of the flow.
    pub fn exponents(&self) -> [f64; 3] {
        [self.r1, self.r2, -1.0]
    }
}

/// diag(e^{r1 t}, e^{r2 t}, e^{-t}).
pub fn flow_matrix(r: WeightVector, t: f64) -> Mat<f64> {
    Mat::diagonal(&r.exponents().map(|e| (e * t).exp()))
}

/// Upper unitriangular matrix with third column (v1, v2, 1) and zero (1,2) entry.
pub fn u_matrix(v: [f64; 2]) -> Mat<f64> {
    u_matrix_real([real(v[0]), real(v[1])]).to_f64()
}

pub fn u_matrix_real(v: [Real; 2]) -> Mat<Real> {
    let mut m = Mat::identity(3);
    m[(0, 2)] = v[0];
    m[(1, 2)] = v[1];
    m
}

/// The v' with f_t u(v) = u(v') f_t.
pub fn conjugated_shift(v: [f64; 2], r: WeightVector, t: f64) -> [f64; 2] {
    [((r.r1 + 1.0) * t).exp() * v[0], ((r.r2 + 1.0) * t).exp() * v[1]]
}

/// The line s -> (s, a s + b) restricted to an interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineSpec {
    pub a: f64,
    pub b: f64,
    /// Low word of the intercept; zero unless the line came from a double-double value.
    #[serde(skip)]
    pub b_tail: f64,
    pub interval: (f64, f64),
}

impl LineSpec {
    pub fn new(a: f64, b: f64, interval: (f64, f64)) -> Result<Self> {
        if !(interval.0 < interval.1) {
            return Err(Error::InvalidInput(format!(
                "empty interval [{}, {}]",
                interval.0, interval.1
            )));
        }
        Ok(LineSpec {
            a,
            b,
            b_tail: 0.0,
            interval,
        })
    }

    /// The line of slope 1 through (ζ, ζ²), ζ the real root of x³ - x - 1.
    pub fn through_plastic_pair(interval: (f64, f64)) -> Result<Self> {
        let z = crate::real::plastic_number();
        let b = z * z - z;
        let mut line = Self::new(1.0, b.hi(), interval)?;
        line.b_tail = b.lo();
        Ok(line)
    }

    pub fn intercept_real(&self) -> Real {
        real(self.b) + real(self.b_tail)
    }

    /// (s, a s + b) with the second coordinate formed in double-double.
    pub fn point_real(&self, s: Real) -> [Real; 2] {
        line_point_real(real(self.a), self.intercept_real(), s)
    }
}

pub fn line_point(line: &LineSpec, s: f64) -> [f64; 2] {
    [s, line.a * s + line.b]
}

/// Same point with the intercept kept in double-double.
pub fn line_point_real(a: Real, b: Real, s: Real) -> [Real; 2] {
    [s, a * s + b]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryConfig {
    pub t_max: f64,
    pub t_samples: usize,
    pub renorm_step: f64,
}

pub const DEFAULT_RENORM_STEP: f64 = 0.5;

impl TrajectoryConfig {
    pub fn new(t_max: f64, t_samples: usize, renorm_step: f64) -> Result<Self> {
        if !(t_max >= 0.0) || !t_max.is_finite() {
            return Err(Error::InvalidInput(format!("horizon must be >= 0, got {t_max}")));
        }
        if t_samples == 0 {
            return Err(Error::InvalidInput("t_samples must be positive".into()));
        }
        if !(renorm_step > 0.0 && renorm_step <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "renorm_step must lie in (0, 1], got {renorm_step}"
            )));
        }
        Ok(TrajectoryConfig {
            t_max,
            t_samples,
            renorm_step,
        })
    }

    /// Spacing at most 0.1 and at most 2% of the horizon.
    pub fn with_default_sampling(t_max: f64) -> Result<Self> {
        let samples = ((t_max / 0.1).ceil() as usize).max(50);
        Self::new(t_max, samples, DEFAULT_RENORM_STEP)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.t_samples).map(move |k| k as f64 * self.t_max / self.t_samples as f64)
    }
}

/// A lattice moving under a diagonal flow, kept in double-double and
/// re-reduced at least every `renorm_step` units of time.
#[derive(Clone, Debug)]
pub struct Trajectory {
    basis: Mat<Real>,
    exponents: Vec<f64>,
    time: f64,
    renorm_step: f64,
}

impl Trajectory {
    pub fn new(basis: Mat<Real>, exponents: &[f64], renorm_step: f64) -> Result<Self> {
        if exponents.len() != basis.dim() {
            return Err(Error::InvalidInput(format!(
                "{} flow exponents for a rank-{} lattice",
                exponents.len(),
                basis.dim()
            )));
        }
        if exponents.iter().sum::<f64>().abs() > 1e-12 {
            return Err(Error::InvalidInput("flow exponents must sum to 0".into()));
        }
        if !(renorm_step > 0.0 && renorm_step <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "renorm_step must lie in (0, 1], got {renorm_step}"
            )));
        }
        let mut traj = Trajectory {
            basis,
            exponents: exponents.to_vec(),
            time: 0.0,
            renorm_step,
        };
        traj.renormalize()?;
        Ok(traj)
    }

    /// Trajectory of u(v)ℤ³ under f_t^(r).
    pub fn horospherical(v: [Real; 2], r: WeightVector, renorm_step: f64) -> Result<Self> {
        Self::new(u_matrix_real(v), &r.exponents(), renorm_step)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    fn renormalize(&mut self) -> Result<()> {
        let (_, t) = reduce_with_transform(&self.basis.to_f64())?;
        self.basis = self.basis.mul(&t.to_real());
        Ok(())
    }

    fn step(&mut self, dt: f64) -> Result<()> {
        let n = self.basis.dim();
        for (i, &e) in self.exponents.iter().enumerate() {
            let f = real((e * dt).exp());
            for j in 0..n {
                self.basis[(i, j)] *= f;
            }
        }
        self.time += dt;
        self.renormalize()
    }

    /// Moves forward to time `t` (>= current time).
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.time - 1e-12 {
            return Err(Error::InvalidInput(format!(
                "cannot move backwards from t = {} to t = {t}",
                self.time
            )));
        }
        while t - self.time > 1e-15 {
            let dt = (t - self.time).min(self.renorm_step);
            let target = if dt < self.renorm_step { t } else { self.time + dt };
            self.step(target - self.time)?;
            self.time = target;
        }
        Ok(())
    }

    pub fn basis(&self) -> &Mat<Real> {
        &self.basis
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::from_trusted(self.basis.to_f64(), 0.0)
    }

    pub fn systole(&self) -> Result<f64> {
        systole(&self.lattice())
    }
}

/// f_t^(r) L, computed incrementally.
pub fn evolve(lattice: &Lattice, r: WeightVector, t: f64) -> Result<Lattice> {
    evolve_with_step(lattice, r, t, DEFAULT_RENORM_STEP)
}

pub fn evolve_with_step(lattice: &Lattice, r: WeightVector, t: f64, renorm_step: f64) -> Result<Lattice> {
    if lattice.dim() != 3 {
        return Err(Error::UnsupportedDimension(lattice.dim()));
    }
    evolve_diagonal(lattice, &r.exponents(), t, renorm_step)
}

/// diag(e^{λ_1 t}, .., e^{λ_n t}) L for exponents summing to zero.
pub fn evolve_diagonal(lattice: &Lattice, exponents: &[f64], t: f64, renorm_step: f64) -> Result<Lattice> {
    if t < 0.0 {
        return Err(Error::InvalidInput(format!("only forward times are supported, got {t}")));
    }
    if t == 0.0 {
        return Ok(lattice.clone());
    }
    let mut traj = Trajectory::new(lattice.basis().to_real(), exponents, renorm_step)?;
    traj.advance_to(t)?;
    Ok(traj.lattice())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystoleSeries {
    pub t: Vec<f64>,
    pub systole: Vec<f64>,
    pub log_systole: Vec<f64>,
    pub running_max: Vec<f64>,
    pub running_min: Vec<f64>,
}

impl SystoleSeries {
    pub fn from_samples(t: Vec<f64>, systole: Vec<f64>) -> Self {
        let log_systole = systole.iter().map(|s| s.ln()).collect();
        let running_max = systole
            .iter()
            .scan(f64::NEG_INFINITY, |m, &s| {
                *m = m.max(s);
                Some(*m)
            })
            .collect();
        let running_min = systole
            .iter()
            .scan(f64::INFINITY, |m, &s| {
                *m = m.min(s);
                Some(*m)
            })
            .collect();
        SystoleSeries {
            t,
            systole,
            log_systole,
            running_max,
            running_min,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.running_min.last().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.running_max.last().copied().unwrap_or(f64::NAN)
    }

    /// Max systole over samples with t >= from.
    pub fn max_from(&self, from: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.systole)
            .filter(|(t, _)| **t >= from - 1e-12)
            .map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Max over the last `fraction` of the samples (at least one sample).
    pub fn tail_max(&self, fraction: f64) -> f64 {
        let n = self.len();
        let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
        self.systole[n - k..].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,systole,log_systole\n");
        for ((t, s), l) in self.t.iter().zip(&self.systole).zip(&self.log_systole) {
            let _ = writeln!(out, "{t:.11e},{s:.11e},{l:.11e}");
        }
        out
    }
}

/// Systole of f_t^(r) u(v) ℤ³ at the configured sample times.
pub fn systole_series(v: [Real; 2], r: WeightVector, cfg: &TrajectoryConfig) -> Result<SystoleSeries> {
    let mut traj = Trajectory::horospherical(v, r, cfg.renorm_step)?;
    let mut ts = Vec::with_capacity(cfg.t_samples + 1);
    let mut values = Vec::with_capacity(cfg.t_samples + 1);
    for t in cfg.times() {
        traj.advance_to(t)?;
        ts.push(t);
        values.push(traj.systole()?);
    }
    Ok(SystoleSeries::from_samples(ts, values))
}
