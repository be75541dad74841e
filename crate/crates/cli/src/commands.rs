use std::path::{Path, PathBuf};

use dirlab_core::counterexample::{
    check_admissible, default_anchor_target, find_admissible_xyz, verify_segment, SegmentConstruction,
    VerdictTable,
};
use dirlab_core::diophantine::{classify_series, DiIndicator};
use dirlab_core::equidist::{
    curve_equidist_experiment, line_equidist_experiment, CircleArc, CurveSpec, Density, EquidistReport,
    Observable, PolynomialCurve, Sampling,
};
use dirlab_core::flows::{systole_series, LineSpec, TrajectoryConfig, DEFAULT_RENORM_STEP};
use dirlab_core::real::{real, sqrt_real, to_f64};
use dirlab_core::{Lattice, Mat};
use serde::{Deserialize, Serialize};

use crate::args::{
    parse_f64_list, parse_fixed, parse_vector, parse_weights, CounterexampleArgs, EquidistArgs, SelftestArgs,
    SystoleArgs,
};
use crate::error::{CliError, Context, EXIT_OK, EXIT_SELFTEST};
use crate::manifest::{OutputDir, RunManifest};
use crate::selftest::{Suite, SuiteResult};

pub const DEFAULT_OUT: &str = "out";
pub const DEFAULT_S_GRID: [f64; 5] = [-0.1, -0.05, 0.0, 0.05, 0.1];

/// What a finished command leaves behind.
#[derive(Debug)]
pub struct Outcome {
    /// Human-readable summary printed to stdout.
    pub summary: String,
    pub manifest: Option<RunManifest>,
    pub out_dir: Option<PathBuf>,
    pub exit_code: i32,
}

fn out_dir(flag: Option<&PathBuf>) -> PathBuf {
    flag.cloned().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn echo<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

#[derive(Serialize)]
struct SystoleSummary {
    v: [f64; 2],
    weights: [f64; 2],
    t_max: f64,
    samples: usize,
    min: f64,
    max: f64,
    tail_max: f64,
    indicator: DiIndicator,
}

pub fn systole(args: &SystoleArgs, threads: usize) -> Result<Outcome, CliError> {
    let v_text = args
        .v
        .as_deref()
        .ok_or_else(|| CliError::Usage("systole needs --v v1,v2".into()))?;
    let v = parse_vector(v_text)?;
    let r = parse_weights(args.weights.as_deref())?;
    let t_max = args.t_max.unwrap_or(30.0);
    let cfg = match args.samples {
        Some(n) => TrajectoryConfig::new(t_max, n, DEFAULT_RENORM_STEP),
        None => TrajectoryConfig::with_default_sampling(t_max),
    }
    .during("trajectory configuration")?;
    let series = systole_series(v, r, &cfg).during("systole_series")?;
    let indicator = classify_series(&series, t_max);
    let summary = SystoleSummary {
        v: v.map(to_f64),
        weights: [r.r1(), r.r2()],
        t_max,
        samples: cfg.t_samples,
        min: series.min(),
        max: series.max(),
        tail_max: indicator.limsup_estimate,
        indicator: indicator.clone(),
    };
    let dir = out_dir(args.out.as_ref());
    let mut out = OutputDir::create(&dir)?;
    out.write("systole_series.csv", &series.to_csv())?;
    out.write("systole_summary.json", &to_json(&summary))?;
    let manifest = out.finish("systole", echo(args), threads)?;
    Ok(Outcome {
        summary: format!(
            "systole: min {:.6} max {:.6} tail max {:.6} ({})",
            summary.min, summary.max, summary.tail_max, indicator.verdict
        ),
        manifest: Some(manifest),
        out_dir: Some(dir),
        exit_code: EXIT_OK,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("summary serializes")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveFile {
    x: Vec<f64>,
    y: Vec<f64>,
}

fn load_curve(path: &Path) -> Result<PolynomialCurve, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let file: CurveFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("curve file {}: {e}", path.display())))?;
    if file.x.is_empty() || file.y.is_empty() {
        return Err(CliError::Usage("curve file needs nonempty x and y coefficient lists".into()));
    }
    Ok(PolynomialCurve::from_f64(&file.x, &file.y))
}

fn curve_spec(args: &EquidistArgs, interval: (f64, f64)) -> Result<CurveSpec, CliError> {
    let name = args.curve.as_deref().unwrap_or("parabola");
    let spec = match name {
        "parabola" => CurveSpec::new(PolynomialCurve::parabola(real(0.0)), interval),
        "parabola-shifted" => CurveSpec::new(PolynomialCurve::parabola(sqrt_real(2.0)), interval),
        "circle" => CurveSpec::new(CircleArc, interval),
        "line" => CurveSpec::new(PolynomialCurve::line(3.0), interval),
        "file" => {
            let path = args
                .curve_file
                .as_deref()
                .ok_or_else(|| CliError::Usage("--curve file needs --curve-file PATH".into()))?;
            CurveSpec::new(load_curve(path)?, interval)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown curve `{other}` (parabola, parabola-shifted, circle, line, file)"
            )))
        }
    };
    spec.map_err(|e| CliError::Usage(format!("--interval: {e}")))
}

fn line_spec(text: Option<&str>, interval: (f64, f64)) -> Result<LineSpec, CliError> {
    let spec = match text.unwrap_or("plastic") {
        "plastic" => LineSpec::through_plastic_pair(interval),
        other => {
            let [a, b] = parse_fixed::<2>("line", other)?;
            LineSpec::new(a, b, interval)
        }
    };
    spec.map_err(|e| CliError::Usage(format!("--line: {e}")))
}

pub fn equidist(args: &EquidistArgs, threads: usize) -> Result<Outcome, CliError> {
    let interval = match args.interval.as_deref() {
        Some(text) => {
            let [lo, hi] = parse_fixed::<2>("interval", text)?;
            (lo, hi)
        }
        None => (0.0, 1.0),
    };
    let r = parse_weights(args.weights.as_deref())?;
    let obs = Observable::siegel_ball(args.radius.unwrap_or(0.75))
        .map_err(|e| CliError::Usage(format!("--radius: {e}")))?;
    let grid = Sampling::new(
        args.s_samples.unwrap_or(200),
        args.t_max.unwrap_or(25.0),
        args.t_samples.unwrap_or(2500),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let report = match args.mode.as_deref().unwrap_or("line") {
        "line" => {
            let line = line_spec(args.line.as_deref(), interval)?;
            let x0 = Lattice::new(Mat::identity(3)).expect("identity is unimodular");
            line_equidist_experiment(&line, &x0, &Density::uniform(), r, obs, grid)
                .during("line equidistribution")?
        }
        "curve" => {
            let spec = curve_spec(args, interval)?;
            curve_equidist_experiment(&spec, r, obs, grid).during("curve equidistribution")?
        }
        other => return Err(CliError::Usage(format!("unknown mode `{other}` (line, curve)"))),
    };
    let dir = out_dir(args.out.as_ref());
    let mut out = OutputDir::create(&dir)?;
    out.write("equidist_report.json", &report.to_json())?;
    out.write("partial_averages.csv", &report.partial_csv())?;
    let manifest = out.finish("equidist", echo(args), threads)?;
    if let Some(eps) = args.abort_on_hypothesis_failure {
        if !report.hypothesis_holds(eps) {
            return Err(CliError::HypothesisFailed {
                eps,
                systole: report.hypothesis_systole,
            });
        }
    }
    Ok(Outcome {
        summary: equidist_summary(&report),
        manifest: Some(manifest),
        out_dir: Some(dir),
        exit_code: EXIT_OK,
    })
}

fn equidist_summary(report: &EquidistReport) -> String {
    let mut text = format!(
        "{}: average {:.6} +- {:.3e}",
        report.label, report.average, report.quadrature_error
    );
    if let (Some(target), Some(rel)) = (report.haar_target, report.rel_error) {
        text.push_str(&format!(", target {target}, relative error {rel:.4}"));
    }
    if let Some((lo, hi)) = report.wronskian_range {
        text.push_str(&format!(", Wronskian in [{lo}, {hi}]"));
    }
    text
}

#[derive(Serialize)]
struct CounterexampleEcho<'a> {
    #[serde(flatten)]
    args: &'a CounterexampleArgs,
    xyz_used: [f64; 3],
}

pub fn counterexample(args: &CounterexampleArgs, threads: usize) -> Result<Outcome, CliError> {
    let xyz = match (args.search.unwrap_or(false), args.xyz.as_deref()) {
        (true, Some(_)) => return Err(CliError::Usage("give either --xyz or --search, not both".into())),
        (true, None) => find_admissible_xyz(args.seed.unwrap_or(0))
            .during("find_admissible_xyz")?
            .map(|v| v as f64),
        (false, Some(text)) => parse_fixed::<3>("xyz", text)?,
        (false, None) => return Err(CliError::Usage("counterexample needs --xyz x,y,z or --search".into())),
    };
    check_admissible(xyz).during("relation_membership_test")?;
    let s_grid = match args.s_grid.as_deref() {
        Some(text) => parse_f64_list("s-grid", text)?,
        None => DEFAULT_S_GRID.to_vec(),
    };
    let t_max = args.t_max.unwrap_or(30.0);
    let construction =
        SegmentConstruction::build(xyz, default_anchor_target()).during("segment construction")?;
    let table = verify_segment(&construction, &s_grid, t_max).during("verify_segment")?;
    let dir = out_dir(args.out.as_ref());
    let mut out = OutputDir::create(&dir)?;
    out.write("construction.json", &construction.to_json())?;
    out.write("verdicts.csv", &table.to_csv())?;
    let config = echo(&CounterexampleEcho { args, xyz_used: xyz });
    let manifest = out.finish("counterexample", config, threads)?;
    Ok(Outcome {
        summary: verdict_summary(xyz, &table),
        manifest: Some(manifest),
        out_dir: Some(dir),
        exit_code: EXIT_OK,
    })
}

fn verdict_summary(xyz: [f64; 3], table: &VerdictTable) -> String {
    let mut text = format!("(x, y, z) = ({}, {}, {})\n", xyz[0], xyz[1], xyz[2]);
    for row in &table.rows {
        text.push_str(&format!(
            "s = {:>6}: min systole {:.6}, max tail systole {:.6}, {}\n",
            row.s, row.min_systole, row.max_tail_systole, row.verdict
        ));
    }
    text
}

pub fn selftest(args: &SelftestArgs) -> Result<(Outcome, Vec<SuiteResult>), CliError> {
    let suites = Suite::parse(args.suite.as_deref().unwrap_or("all"))?;
    let seed = args.seed.unwrap_or(0);
    let results: Vec<SuiteResult> = suites
        .iter()
        .map(|s| s.run(args.cases.unwrap_or_else(|| s.default_cases()), seed))
        .collect();
    let mut summary = format!("{:<12} {:>6} {:>6}  status\n", "suite", "cases", "failed");
    for r in &results {
        summary.push_str(&r.row());
        summary.push('\n');
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        summary.push_str(&format!("{}\n", CliError::SelftestFailed { failed }));
    }
    let outcome = Outcome {
        summary,
        manifest: None,
        out_dir: None,
        exit_code: if failed == 0 { EXIT_OK } else { EXIT_SELFTEST },
    };
    Ok((outcome, results))
}
