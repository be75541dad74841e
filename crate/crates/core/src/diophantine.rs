//! Arithmetic side: Dirichlet solutions, σ-improvement scans, weighted
//! bad-approximability scores and their dynamical counterparts.

use std::fmt;

use num_traits::Float;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::{systole_series, SystoleSeries, TrajectoryConfig, WeightVector};
use crate::real::{div, real, round_half_toward_zero_real, to_f64, Real};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirichletSolution {
    pub q: u64,
    pub p: Vec<i64>,
    /// Sup-norm of q·v - p.
    pub defect: f64,
}

fn nearest(qv: Real) -> (i64, Real) {
    let p = round_half_toward_zero_real(qv);
    (to_f64(p) as i64, (qv - p).abs())
}

/// Smallest q in [1, Q] with ||q v - p|| < Q^{-1/n}, p the nearest integer vector.
pub fn dirichlet_solution(v: &[Real], q_bound: f64) -> Result<DirichletSolution> {
    if v.is_empty() {
        return Err(Error::InvalidInput("empty vector".into()));
    }
    if !(q_bound >= 1.0) || !q_bound.is_finite() {
        return Err(Error::InvalidInput(format!("Q must be >= 1, got {q_bound}")));
    }
    let target = q_bound.powf(-1.0 / v.len() as f64);
    for q in 1..=(q_bound.floor() as u64) {
        let qr = Real::from(q);
        let (p, defects): (Vec<i64>, Vec<Real>) = v.iter().map(|&x| nearest(qr * x)).unzip();
        let defect = defects.iter().map(|&d| to_f64(d)).fold(0.0, f64::max);
        if defect < target {
            return Ok(DirichletSolution { q, p, defect });
        }
    }
    Err(Error::NoSolution { q_bound })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiScanReport {
    pub v: [f64; 2],
    pub sigma: f64,
    pub r: [f64; 2],
    /// Q values on the grid with no σ-improved solution.
    pub failures: Vec<f64>,
    pub verdict: String,
}

impl DiScanReport {
    pub fn improvement_compatible(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Geometric grid of `steps` points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (steps - 1) as f64;
    (0..steps).map(|k| lo * (ratio * k as f64).exp()).collect()
}

/// Whether some 1 <= q < σQ has |q v_i - p_i| < σ Q^{-r_i} for both i.
pub fn sigma_improved_at(v: [Real; 2], sigma: f64, r: WeightVector, q_bound: f64) -> bool {
    let bounds = [sigma * q_bound.powf(-r.r1()), sigma * q_bound.powf(-r.r2())];
    let q_top = sigma * q_bound;
    (1..)
        .take_while(|&q| (q as f64) < q_top)
        .any(|q: u64| {
            let qr = Real::from(q);
            v.iter()
                .zip(bounds)
                .all(|(&x, b)| to_f64(nearest(qr * x).1) < b)
        })
}

pub fn di_sigma_scan(
    v: [Real; 2],
    sigma: f64,
    r: WeightVector,
    q_lo: f64,
    q_hi: f64,
    q_steps: usize,
) -> Result<DiScanReport> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidInput(format!("sigma must lie in (0, 1), got {sigma}")));
    }
    if !(q_lo >= 1.0 && q_hi > q_lo) || q_steps == 0 {
        return Err(Error::InvalidInput(format!(
            "need 1 <= Q_lo < Q_hi and at least one step, got [{q_lo}, {q_hi}] x {q_steps}"
        )));
    }
    let failures: Vec<f64> = geometric_grid(q_lo, q_hi, q_steps)
        .into_par_iter()
        .filter(|&q| !sigma_improved_at(v, sigma, r, q))
        .collect();
    let verdict = match failures.first() {
        None => "improvement-compatible on range".to_string(),
        Some(q) => format!("improvement refuted at Q={q}"),
    };
    Ok(DiScanReport {
        v: [to_f64(v[0]), to_f64(v[1])],
        sigma,
        r: [r.r1(), r.r2()],
        failures,
        verdict,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BadApproxScore {
    pub q_max: u64,
    pub score: f64,
    pub argmin_q: u64,
}

fn weighted_power(d: f64, inv_r: f64) -> f64 {
    let k = inv_r.round();
    if (inv_r - k).abs() < 1e-12 && k <= 64.0 {
        d.powi(k as i32)
    } else {
        d.powf(inv_r)
    }
}

/// min over 1 <= q <= q_max of q · max_i |q v_i - p_i|^{1/r_i}.
pub fn bad_approx_score(v: [Real; 2], r: WeightVector, q_max: u64) -> Result<BadApproxScore> {
    if q_max == 0 {
        return Err(Error::InvalidInput("q_max must be >= 1".into()));
    }
    let inv = [1.0 / r.r1(), 1.0 / r.r2()];
    let mut best = BadApproxScore {
        q_max,
        score: f64::INFINITY,
        argmin_q: 0,
    };
    for q in 1..=q_max {
        let qr = Real::from(q);
        let worst = v
            .iter()
            .zip(inv)
            .map(|(&x, e)| weighted_power(to_f64(nearest(qr * x).1), e))
            .fold(0.0, f64::max);
        let value = q as f64 * worst;
        if value < best.score {
            best.score = value;
            best.argmin_q = q;
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DiVerdict {
    NoImprovementEvidence,
    ImprovementEvidence,
    Inconclusive,
}

impl fmt::Display for DiVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiVerdict::NoImprovementEvidence => "no-improvement evidence",
            DiVerdict::ImprovementEvidence => "improvement evidence",
            DiVerdict::Inconclusive => "inconclusive",
        })
    }
}

/// Distance below 1 that still counts as reaching K_1.
pub const K1_MARGIN: f64 = 0.02;
/// Distance below 1 that the half-horizon maximum must clear for improvement evidence.
pub const IMPROVEMENT_MARGIN: f64 = 0.05;
pub const TAIL_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiIndicator {
    /// Max systole over the last 20% of samples.
    pub limsup_estimate: f64,
    /// Max systole over [T/2, T].
    pub half_horizon_max: f64,
    pub min_systole: f64,
    pub verdict: DiVerdict,
}

pub fn classify_series(series: &SystoleSeries, t_max: f64) -> DiIndicator {
    let limsup_estimate = series.tail_max(TAIL_FRACTION);
    let half_horizon_max = series.max_from(t_max / 2.0);
    let verdict = if limsup_estimate >= 1.0 - K1_MARGIN {
        DiVerdict::NoImprovementEvidence
    } else if half_horizon_max <= 1.0 - IMPROVEMENT_MARGIN {
        DiVerdict::ImprovementEvidence
    } else {
        DiVerdict::Inconclusive
    };
    DiIndicator {
        limsup_estimate,
        half_horizon_max,
        min_systole: series.min(),
        verdict,
    }
}

/// Dynamical DI test on the trajectory of u(v)ℤ³ up to time `t_max`.
pub fn dynamical_di_indicator(v: [Real; 2], r: WeightVector, t_max: f64) -> Result<DiIndicator> {
    if !(t_max > 0.0) {
        return Err(Error::InvalidInput(format!("T must be positive, got {t_max}")));
    }
    let cfg = TrajectoryConfig::with_default_sampling(t_max)?;
    Ok(classify_series(&systole_series(v, r, &cfg)?, t_max))
}

/// Calibration thresholds for the Dani cross-check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DaniThresholds {
    pub score_bounded: f64,
    pub systole_bounded: f64,
    pub score_divergent: f64,
    pub systole_divergent: f64,
}

impl Default for DaniThresholds {
    fn default() -> Self {
        DaniThresholds {
            score_bounded: 1e-2,
            systole_bounded: 1e-2,
            score_divergent: 1e-6,
            systole_divergent: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DaniReport {
    pub score: BadApproxScore,
    pub min_systole: f64,
    /// score > θ_a implies min systole > θ_d.
    pub bounded_side_consistent: bool,
    /// score < θ_a' implies min systole < θ_d'.
    pub divergent_side_consistent: bool,
}

impl DaniReport {
    pub fn consistent(&self) -> bool {
        self.bounded_side_consistent && self.divergent_side_consistent
    }
}

pub fn dani_cross_check(v: [Real; 2], r: WeightVector, q_max: u64, t_max: f64) -> Result<DaniReport> {
    dani_cross_check_with(v, r, q_max, t_max, DaniThresholds::default())
}

pub fn dani_cross_check_with(
    v: [Real; 2],
    r: WeightVector,
    q_max: u64,
    t_max: f64,
    th: DaniThresholds,
) -> Result<DaniReport> {
    let score = bad_approx_score(v, r, q_max)?;
    let cfg = TrajectoryConfig::with_default_sampling(t_max)?;
    let min_systole = systole_series(v, r, &cfg)?.min();
    Ok(DaniReport {
        score,
        min_systole,
        bounded_side_consistent: score.score <= th.score_bounded || min_systole > th.systole_bounded,
        divergent_side_consistent: score.score >= th.score_divergent || min_systole < th.systole_divergent,
    })
}

/// (Σ_{k<=K} 10^{-k!}, Σ_{k<=K} 10^{-2·k!}) in double-double.
pub fn liouville_pair(terms: u32) -> [Real; 2] {
    let ten = real(10.0);
    let mut out = [real(0.0), real(0.0)];
    let mut fact: i32 = 1;
    for k in 1..=terms as i32 {
        fact *= k;
        out[0] += div(real(1.0), ten.powi(fact));
        out[1] += div(real(1.0), ten.powi(2 * fact));
    }
    out
}

/// A rational pair a/b in double-double.
pub fn rational_pair(num: [i64; 2], den: i64) -> [Real; 2] {
    let d = Real::from(den);
    [div(Real::from(num[0]), d), div(Real::from(num[1]), d)]
}
