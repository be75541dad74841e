//! Double averages of observables along translated lines and curves.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::{u_matrix_real, LineSpec, Trajectory, WeightVector, DEFAULT_RENORM_STEP};
use crate::lattice::{cube_points, systole, Lattice};
use crate::matrix::Mat;
use crate::real::{div, plastic_number, real, to_f64, Real};

/// Thresholds of the mass-escape profile.
pub const ESCAPE_EPS: [f64; 3] = [0.01, 0.05, 0.1];

/// Smallest |W(s)| accepted as nondegenerate.
pub const WRONSKIAN_FLOOR: f64 = 1e-9;

/// Smallest |φ₁′(s)| for which the curve frame is defined.
pub const FRAME_FLOOR: f64 = 1e-9;

const PARTIAL_CHECKPOINTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// Number of nonzero lattice points in the open sup-norm cube of radius R.
    SiegelBall { radius: f64 },
    /// 1 if the systole is below eps.
    SystoleIndicator { eps: f64 },
    /// systole^k.
    SystoleMoment { k: f64 },
}

impl Observable {
    pub fn siegel_ball(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "siegel_ball radius must lie in (0, 1], got {radius}"
            )));
        }
        Ok(Observable::SiegelBall { radius })
    }

    /// Expectation under the Haar probability measure on X_n, when known.
    pub fn haar_value(&self, dim: usize) -> Option<f64> {
        match *self {
            Observable::SiegelBall { radius } => Some((2.0 * radius).powi(dim as i32)),
            _ => None,
        }
    }

    /// Value at a lattice whose systole is already known.
    pub fn evaluate_with_systole(&self, lattice: &Lattice, sys: f64) -> Result<f64> {
        match *self {
            Observable::SiegelBall { radius } => {
                if sys >= radius {
                    Ok(0.0)
                } else {
                    Ok(2.0 * cube_points(lattice, radius)?.len() as f64)
                }
            }
            Observable::SystoleIndicator { eps } => Ok(if sys < eps { 1.0 } else { 0.0 }),
            Observable::SystoleMoment { k } => Ok(sys.powf(k)),
        }
    }

    pub fn evaluate(&self, lattice: &Lattice) -> Result<f64> {
        self.evaluate_with_systole(lattice, systole(lattice)?)
    }
}

/// Count of nonzero lattice points with sup-norm below R (both signs).
pub fn siegel_value(lattice: &Lattice, radius: f64) -> Result<f64> {
    Observable::siegel_ball(radius)?.evaluate(lattice)
}

/// A C² planar curve with exact derivatives.
pub trait PlanarCurve: Send + Sync {
    fn value(&self, s: Real) -> [Real; 2];
    fn first(&self, s: f64) -> [f64; 2];
    fn second(&self, s: f64) -> [f64; 2];
    fn name(&self) -> String;
}

/// s -> (Σ x_k s^k, Σ y_k s^k).
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialCurve {
    pub x: Vec<Real>,
    pub y: Vec<Real>,
}

impl PolynomialCurve {
    pub fn new(x: Vec<Real>, y: Vec<Real>) -> Self {
        PolynomialCurve { x, y }
    }

    pub fn from_f64(x: &[f64], y: &[f64]) -> Self {
        Self::new(x.iter().map(|&c| real(c)).collect(), y.iter().map(|&c| real(c)).collect())
    }

    /// (s, s² + shift).
    pub fn parabola(shift: Real) -> Self {
        Self::new(vec![real(0.0), real(1.0)], vec![shift, real(0.0), real(1.0)])
    }

    /// (s, slope·s).
    pub fn line(slope: f64) -> Self {
        Self::from_f64(&[0.0, 1.0], &[0.0, slope])
    }
}

fn horner(coeffs: &[Real], s: Real) -> Real {
    coeffs.iter().rev().fold(real(0.0), |acc, &c| acc * s + c)
}

fn derivative(coeffs: &[Real]) -> Vec<Real> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| c * real(k as f64))
        .collect()
}

impl PlanarCurve for PolynomialCurve {
    fn value(&self, s: Real) -> [Real; 2] {
        [horner(&self.x, s), horner(&self.y, s)]
    }

    fn first(&self, s: f64) -> [f64; 2] {
        let f = |c: &[Real]| to_f64(horner(&derivative(c), real(s)));
        [f(&self.x), f(&self.y)]
    }

    fn second(&self, s: f64) -> [f64; 2] {
        let f = |c: &[Real]| to_f64(horner(&derivative(&derivative(c)), real(s)));
        [f(&self.x), f(&self.y)]
    }

    fn name(&self) -> String {
        let fmt = |c: &[Real]| {
            c.iter()
                .map(|v| to_f64(*v).to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!("polynomial x=[{}] y=[{}]", fmt(&self.x), fmt(&self.y))
    }
}

/// s -> (cos s, sin s).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CircleArc;

impl PlanarCurve for CircleArc {
    fn value(&self, s: Real) -> [Real; 2] {
        let s = to_f64(s);
        [real(s.cos()), real(s.sin())]
    }

    fn first(&self, s: f64) -> [f64; 2] {
        [-s.sin(), s.cos()]
    }

    fn second(&self, s: f64) -> [f64; 2] {
        [-s.cos(), -s.sin()]
    }

    fn name(&self) -> String {
        "circle".into()
    }
}

/// Weight function of the measure ν, normalized on the sample grid.
#[derive(Clone)]
pub struct Density(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl Density {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Density(Arc::new(f))
    }

    pub fn uniform() -> Self {
        Self::new(|_| 1.0)
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.0)(s)
    }
}

impl std::fmt::Debug for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Density(..)")
    }
}

#[derive(Clone)]
pub struct CurveSpec {
    pub curve: Arc<dyn PlanarCurve>,
    pub interval: (f64, f64),
    pub density: Density,
}

impl CurveSpec {
    pub fn new(curve: impl PlanarCurve + 'static, interval: (f64, f64)) -> Result<Self> {
        if !(interval.0 < interval.1) {
            return Err(Error::InvalidInput(format!(
                "empty interval [{}, {}]",
                interval.0, interval.1
            )));
        }
        Ok(CurveSpec {
            curve: Arc::new(curve),
            interval,
            density: Density::uniform(),
        })
    }

    pub fn with_density(mut self, density: Density) -> Self {
        self.density = density;
        self
    }
}

/// det(φ′(s), φ″(s)).
pub fn wronskian(curve: &dyn PlanarCurve, s: f64) -> f64 {
    let d1 = curve.first(s);
    let d2 = curve.second(s);
    d1[0] * d2[1] - d1[1] * d2[0]
}

/// M(s) = [[α, 0], [β, 1/α]] with α = 1/φ₁′(s), β = -φ₂′(s), so that
/// det M = 1 and M φ′(s) = e₁.
pub fn frame_block(curve: &dyn PlanarCurve, s: f64) -> Result<[[f64; 2]; 2]> {
    let d = curve.first(s);
    if d[0].abs() < FRAME_FLOOR {
        return Err(Error::FrameSingular { s, derivative: d[0] });
    }
    Ok([[1.0 / d[0], 0.0], [-d[1], d[0]]])
}

/// z(s) = diag(M(s), 1).
pub fn curve_frame(curve: &dyn PlanarCurve, s: f64) -> Result<Mat<f64>> {
    let m = frame_block(curve, s)?;
    let mut z = Mat::identity(3);
    for i in 0..2 {
        for j in 0..2 {
            z[(i, j)] = m[i][j];
        }
    }
    Ok(z)
}

/// Offset of the s-nodes inside their cells: ζ - 1, ζ the plastic number.
///
/// Midpoints of a uniform grid are rationals with small denominators, and
/// the fibers over them diverge. A quadratic offset is no better for curves:
/// (s, s²) then lies on a rational line. Cubic nodes avoid both.
pub fn node_offset() -> Real {
    plastic_number() - real(1.0)
}

/// Sample counts and horizon: shifted rectangle rule in s, left endpoints in t.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sampling {
    pub s_samples: usize,
    pub t_max: f64,
    pub t_samples: usize,
}

impl Sampling {
    pub fn new(s_samples: usize, t_max: f64, t_samples: usize) -> Result<Self> {
        if s_samples == 0 || t_samples == 0 {
            return Err(Error::InvalidInput("grid sizes must be positive".into()));
        }
        if !(t_max >= 0.0) || !t_max.is_finite() {
            return Err(Error::InvalidInput(format!("horizon must be finite and >= 0, got {t_max}")));
        }
        Ok(Sampling {
            s_samples,
            t_max,
            t_samples,
        })
    }

    /// Nodes lo + (i + θ)h in double-double.
    pub fn s_nodes(&self, interval: (f64, f64)) -> Vec<Real> {
        let (lo, hi) = (real(interval.0), real(interval.1));
        let h = div(hi - lo, real(self.s_samples as f64));
        let theta = node_offset();
        (0..self.s_samples)
            .map(|i| lo + (real(i as f64) + theta) * h)
            .collect()
    }

    pub fn s_values(&self, interval: (f64, f64)) -> Vec<f64> {
        self.s_nodes(interval).into_iter().map(to_f64).collect()
    }

    pub fn t_values(&self) -> Vec<f64> {
        (0..self.t_samples)
            .map(|k| k as f64 * self.t_max / self.t_samples as f64)
            .collect()
    }
}

/// Observable and systole along one fiber s, at every t of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberSamples {
    pub values: Vec<f64>,
    pub systoles: Vec<f64>,
}

fn sample_fiber(start: Mat<Real>, exponents: &[f64], times: &[f64], obs: Observable) -> Result<FiberSamples> {
    let mut traj = Trajectory::new(start, exponents, DEFAULT_RENORM_STEP)?;
    let mut values = Vec::with_capacity(times.len());
    let mut systoles = Vec::with_capacity(times.len());
    for &t in times {
        traj.advance_to(t)?;
        let lattice = traj.lattice();
        let sys = systole(&lattice)?;
        values.push(obs.evaluate_with_systole(&lattice, sys)?);
        systoles.push(sys);
    }
    Ok(FiberSamples { values, systoles })
}

/// Sum in a fixed binary tree so the result does not depend on scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartialAverage {
    pub t_partial: f64,
    pub average: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeProfile {
    pub eps: Vec<f64>,
    pub fraction: Vec<f64>,
}

impl EscapeProfile {
    pub fn fraction_below(&self, eps: f64) -> Option<f64> {
        self.eps.iter().position(|&e| e == eps).map(|i| self.fraction[i])
    }

    pub fn is_monotone(&self) -> bool {
        self.fraction.windows(2).all(|w| w[0] <= w[1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquidistReport {
    pub label: String,
    pub weights: WeightVector,
    pub observable: Observable,
    pub interval: (f64, f64),
    pub sampling: Sampling,
    pub partial: Vec<PartialAverage>,
    pub average: f64,
    pub haar_target: Option<f64>,
    pub rel_error: Option<f64>,
    pub quadrature_error: f64,
    pub escape: EscapeProfile,
    /// min over t of max over s of the systole.
    pub hypothesis_systole: f64,
    pub min_sample: f64,
    pub max_sample: f64,
    pub wronskian_range: Option<(f64, f64)>,
    pub twisted_average: Option<f64>,
}

impl EquidistReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn partial_csv(&self) -> String {
        let mut out = String::from("T_partial,average,target,rel_error\n");
        for p in &self.partial {
            let (target, rel) = match self.haar_target {
                Some(h) => (format!("{h:.11e}"), format!("{:.11e}", relative_error(p.average, h))),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(out, "{:.11e},{:.11e},{},{}", p.t_partial, p.average, target, rel);
        }
        out
    }

    /// Whether the run stayed inside a compact set on the whole grid, in the
    /// sense of the line hypothesis: at every time some fiber has systole >= eps.
    pub fn hypothesis_holds(&self, eps: f64) -> bool {
        self.hypothesis_systole >= eps
    }
}

fn relative_error(value: f64, target: f64) -> f64 {
    (value - target).abs() / target.abs()
}

/// Density weights on the s-grid, renormalized to sum 1.
pub fn grid_weights(density: &Density, s_values: &[f64]) -> Result<Vec<f64>> {
    let raw: Vec<f64> = s_values.iter().map(|&s| density.eval(s)).collect();
    if raw.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("density must be finite and nonnegative".into()));
    }
    let total = pairwise_sum(&raw);
    if total <= 0.0 {
        return Err(Error::InvalidInput("density vanishes on the sample grid".into()));
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Fraction (ν-weighted) of grid samples with systole below each eps.
pub fn mass_escape_profile(fibers: &[FiberSamples], weights: &[f64], eps: &[f64]) -> EscapeProfile {
    let fraction = eps
        .iter()
        .map(|&e| {
            let per_fiber: Vec<f64> = fibers
                .iter()
                .zip(weights)
                .map(|(f, w)| {
                    let hits = f.systoles.iter().filter(|&&x| x < e).count();
                    w * hits as f64 / f.systoles.len() as f64
                })
                .collect();
            pairwise_sum(&per_fiber)
        })
        .collect();
    EscapeProfile {
        eps: eps.to_vec(),
        fraction,
    }
}

fn weighted_average(fibers: &[FiberSamples], weights: &[f64], upto: usize) -> f64 {
    let per_fiber: Vec<f64> = fibers
        .iter()
        .zip(weights)
        .map(|(f, w)| w * pairwise_sum(&f.values[..upto]) / upto as f64)
        .collect();
    pairwise_sum(&per_fiber)
}

fn weighted_std_error(means: &[f64], weights: &[f64]) -> f64 {
    let mean = pairwise_sum(&means.iter().zip(weights).map(|(m, w)| m * w).collect::<Vec<_>>());
    let var = pairwise_sum(
        &means
            .iter()
            .zip(weights)
            .map(|(m, w)| w * (m - mean) * (m - mean))
            .collect::<Vec<_>>(),
    );
    let w2: f64 = weights.iter().map(|w| w * w).sum();
    (var * w2).sqrt()
}

/// Three standard errors, from the spread across fibers and across ten
/// consecutive blocks of time.
fn quadrature_error(fibers: &[FiberSamples], weights: &[f64]) -> f64 {
    let n_t = fibers[0].values.len();
    let fiber_means: Vec<f64> = fibers.iter().map(|f| pairwise_sum(&f.values) / n_t as f64).collect();
    let across_s = weighted_std_error(&fiber_means, weights);
    let blocks = PARTIAL_CHECKPOINTS.min(n_t);
    let across_t = if blocks < 2 {
        0.0
    } else {
        let block_means: Vec<f64> = (0..blocks)
            .map(|b| {
                let (lo, hi) = (b * n_t / blocks, (b + 1) * n_t / blocks);
                let per_fiber: Vec<f64> = fibers
                    .iter()
                    .zip(weights)
                    .map(|(f, w)| w * pairwise_sum(&f.values[lo..hi]) / (hi - lo) as f64)
                    .collect();
                pairwise_sum(&per_fiber)
            })
            .collect();
        let uniform = vec![1.0 / blocks as f64; blocks];
        weighted_std_error(&block_means, &uniform)
    };
    3.0 * across_s.max(across_t)
}

fn hypothesis_systole(fibers: &[FiberSamples]) -> f64 {
    let n_t = fibers[0].systoles.len();
    (0..n_t)
        .map(|k| fibers.iter().map(|f| f.systoles[k]).fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min)
}

struct Summary {
    fibers: Vec<FiberSamples>,
    weights: Vec<f64>,
}

fn run_fibers(
    interval: (f64, f64),
    grid: &Sampling,
    density: &Density,
    r: WeightVector,
    obs: Observable,
    start: impl Fn(Real) -> Result<Mat<Real>> + Sync,
) -> Result<Summary> {
    let nodes = grid.s_nodes(interval);
    let s_values: Vec<f64> = nodes.iter().map(|&s| to_f64(s)).collect();
    let weights = grid_weights(density, &s_values)?;
    let times = grid.t_values();
    let exponents = r.exponents();
    let fibers = nodes
        .par_iter()
        .map(|&s| sample_fiber(start(s)?, &exponents, &times, obs))
        .collect::<Result<Vec<_>>>()?;
    Ok(Summary { fibers, weights })
}

fn build_report(
    label: String,
    r: WeightVector,
    obs: Observable,
    interval: (f64, f64),
    grid: Sampling,
    dim: usize,
    summary: &Summary,
) -> EquidistReport {
    let Summary { fibers, weights } = summary;
    let n_t = grid.t_samples;
    let checkpoints = PARTIAL_CHECKPOINTS.min(n_t);
    let partial = (1..=checkpoints)
        .map(|c| {
            let upto = c * n_t / checkpoints;
            PartialAverage {
                t_partial: grid.t_max * upto as f64 / n_t as f64,
                average: weighted_average(fibers, weights, upto),
            }
        })
        .collect::<Vec<_>>();
    let average = partial.last().map(|p| p.average).unwrap_or(0.0);
    let haar_target = obs.haar_value(dim);
    let all = fibers.iter().flat_map(|f| f.values.iter().copied());
    let (min_sample, max_sample) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    EquidistReport {
        label,
        weights: r,
        observable: obs,
        interval,
        sampling: grid,
        partial,
        average,
        haar_target,
        rel_error: haar_target.map(|h| relative_error(average, h)),
        quadrature_error: quadrature_error(fibers, weights),
        escape: mass_escape_profile(fibers, weights, &ESCAPE_EPS),
        hypothesis_systole: hypothesis_systole(fibers),
        min_sample,
        max_sample,
        wronskian_range: None,
        twisted_average: None,
    }
}

/// Average of obs over f_t^(r) u(s, a s + b) x0 on the (s, t) grid.
pub fn line_equidist_experiment(
    line: &LineSpec,
    x0: &Lattice,
    density: &Density,
    r: WeightVector,
    obs: Observable,
    grid: Sampling,
) -> Result<EquidistReport> {
    if x0.dim() != 3 {
        return Err(Error::UnsupportedDimension(x0.dim()));
    }
    let base = x0.basis().to_real();
    let summary = run_fibers(line.interval, &grid, density, r, obs, |s| {
        Ok(u_matrix_real(line.point_real(s)).mul(&base))
    })?;
    let label = format!("line a={} b={}", line.a, line.b);
    Ok(build_report(label, r, obs, line.interval, grid, 3, &summary))
}

/// Smallest and largest Wronskian over the s-grid; fails at the first
/// sample where it vanishes.
pub fn check_nondegenerate(curve: &dyn PlanarCurve, s_values: &[f64]) -> Result<(f64, f64)> {
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    for &s in s_values {
        let w = wronskian(curve, s);
        if !(w.abs() >= WRONSKIAN_FLOOR) {
            return Err(Error::DegenerateCurve { s, wronskian: w });
        }
        range = (range.0.min(w), range.1.max(w));
    }
    Ok(range)
}

/// Average of obs over f_t^(r) ū(φ(s)) ℤ³. For equal weights the average
/// over z(s) ū(φ(s)) ℤ³ is computed as well.
pub fn curve_equidist_experiment(
    spec: &CurveSpec,
    r: WeightVector,
    obs: Observable,
    grid: Sampling,
) -> Result<EquidistReport> {
    let curve = spec.curve.as_ref();
    let range = check_nondegenerate(curve, &grid.s_values(spec.interval))?;
    let summary = run_fibers(spec.interval, &grid, &spec.density, r, obs, |s| {
        Ok(u_matrix_real(curve.value(s)))
    })?;
    let label = format!("curve {}", curve.name());
    let mut report = build_report(label, r, obs, spec.interval, grid, 3, &summary);
    report.wronskian_range = Some(range);
    if r.is_equal() {
        let twisted = run_fibers(spec.interval, &grid, &spec.density, r, obs, |s| {
            Ok(curve_frame(curve, to_f64(s))?.to_real().mul(&u_matrix_real(curve.value(s))))
        })?;
        report.twisted_average = Some(weighted_average(&twisted.fibers, &twisted.weights, grid.t_samples));
    }
    Ok(report)
}
