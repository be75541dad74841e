//! Acceptance run: one `PASS`/`FAIL` line per criterion.
//!
//! Usage: `cargo test -p dirlab-cli --release --test acceptance -- [--strict] [ids..]`.
//! Criteria marked as expected failures are reported as `FAIL` but only make
//! the run exit nonzero under `--strict`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use dirlab_cli::manifest::RunManifest;
use dirlab_cli::selftest::{conjugation_suite, hajos_suite, svp_suite, SuiteResult};
use dirlab_core::counterexample::{
    default_anchor_target, predicted_relations, relation_membership_test, solve_factorization, PElement,
    SegmentConstruction,
};
use dirlab_core::diophantine::{
    bad_approx_score, dynamical_di_indicator, rational_pair, DiVerdict,
};
use dirlab_core::flows::{systole_series, TrajectoryConfig, WeightVector};
use dirlab_core::lattice::permutations;
use dirlab_core::real::{plastic_number, real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2024;
const C0: f64 = 0.235570;
const PLASTIC_SCORE: f64 = 0.10425813556;
const PLASTIC_MIN_SYSTOLE: f64 = 0.44349;
/// Double-double residuals of order 1e-32, squared, are what "score 0" looks like.
const RATIONAL_SCORE_ZERO: f64 = 1e-25;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

/// Output checksums kept for the determinism criterion.
#[derive(Default)]
struct Context {
    scratch: PathBuf,
    line_manifest: Option<RunManifest>,
    segment_manifest: Option<RunManifest>,
}

impl Context {
    fn dir(&self, name: &str) -> String {
        self.scratch.join(name).to_string_lossy().into_owned()
    }
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    /// Seconds allowed; exceeding it fails the criterion.
    budget: Option<f64>,
    expected_failure: bool,
    check: fn(&mut Context) -> Verdict,
}

fn suite_verdict(result: SuiteResult) -> Verdict {
    Verdict::new(
        result.passed(),
        format!(
            "{} cases, {} failures, worst {:.2e}{}",
            result.cases,
            result.failures,
            result.worst,
            result.first_failure.map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

fn report(dir: &str, file: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(Path::new(dir).join(file)).expect("report written");
    serde_json::from_str(&text).expect("report parses")
}

fn run_cli(argv: &[&str]) -> Result<RunManifest, String> {
    let mut full = vec!["dirlab"];
    full.extend_from_slice(argv);
    let outcome = dirlab_cli::run_from(full).map_err(|e| e.to_string())?;
    outcome.manifest.ok_or_else(|| "no manifest".to_string())
}

fn equidist_args<'a>(extra: &[&'a str], weights: &'a str, threads: &'a str, out: &'a str) -> Vec<&'a str> {
    let mut argv = vec![
        "equidist", "--weights", weights, "--T", "25", "--radius", "0.75", "--s-samples", "200", "--t-samples",
        "2500", "--interval", "0,1", "--threads", threads, "--out", out,
    ];
    argv.extend_from_slice(extra);
    argv
}

fn within_target(value: &serde_json::Value) -> (bool, String) {
    let avg = value["average"].as_f64().unwrap_or(f64::NAN);
    let rel = value["rel_error"].as_f64().unwrap_or(f64::NAN);
    (rel < 0.15, format!("average {avg:.4} vs 3.375, relative error {rel:.4}"))
}

fn svp(_: &mut Context) -> Verdict {
    suite_verdict(svp_suite(1000, SEED))
}

fn hajos(_: &mut Context) -> Verdict {
    suite_verdict(hajos_suite(1000, SEED))
}

fn conjugation(_: &mut Context) -> Verdict {
    suite_verdict(conjugation_suite(1000, SEED))
}

fn line_equidist(ctx: &mut Context) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for (weights, tag) in [("0.5,0.5", "r=(1/2,1/2)"), ("2/3,1/3", "r=(2/3,1/3)")] {
        let out = ctx.dir(&format!("line-{}", tag.len() + weights.len()));
        let argv = equidist_args(&["--mode", "line", "--line", "plastic"], weights, "1", &out);
        let started = Instant::now();
        match run_cli(&argv) {
            Ok(manifest) => {
                let (ok, text) = within_target(&report(&out, "equidist_report.json"));
                let secs = started.elapsed().as_secs_f64();
                pass &= ok && secs < 600.0;
                details.push(format!("{tag}: {text} in {secs:.0} s"));
                if weights == "0.5,0.5" {
                    ctx.line_manifest = Some(manifest);
                }
            }
            Err(e) => {
                pass = false;
                details.push(format!("{tag}: {e}"));
            }
        }
    }
    Verdict::new(pass, details.join("; "))
}

fn curve_equidist(ctx: &mut Context) -> Verdict {
    let out = ctx.dir("parabola");
    let argv = equidist_args(&["--mode", "curve", "--curve", "parabola"], "0.5,0.5", "1", &out);
    match run_cli(&argv) {
        Ok(_) => {
            let value = report(&out, "equidist_report.json");
            let (ok, text) = within_target(&value);
            let constant = (0..2).all(|k| (value["wronskian_range"][k].as_f64().unwrap_or(f64::NAN) - 2.0).abs() < 1e-9);
            Verdict::new(ok && constant, format!("{text}, Wronskian {}", value["wronskian_range"]))
        }
        Err(e) => Verdict::new(false, e),
    }
}

fn generic_points(_: &mut Context) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut hits = 0;
    let mut best = 0.0f64;
    for _ in 0..100 {
        let v = [real(rng.random_range(0.0..1.0)), real(rng.random_range(0.0..1.0))];
        match dynamical_di_indicator(v, WeightVector::equal(), 30.0) {
            Ok(ind) => {
                best = best.max(ind.limsup_estimate);
                hits += usize::from(ind.verdict == DiVerdict::NoImprovementEvidence);
            }
            Err(e) => return Verdict::new(false, e.to_string()),
        }
    }
    Verdict::new(
        hits >= 90,
        format!("{hits}/100 with no-improvement evidence (need 90), largest window maximum {best:.3}"),
    )
}

fn rational_points(_: &mut Context) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let cfg = TrajectoryConfig::with_default_sampling(30.0).expect("valid horizon");
    let mut hits = 0;
    let mut worst_tail = 0.0f64;
    for _ in 0..20 {
        let den = rng.random_range(1..=10);
        let num = [rng.random_range(0..den), rng.random_range(0..den)];
        let v = rational_pair(num, den);
        let indicator = dynamical_di_indicator(v, WeightVector::equal(), 30.0);
        let series = systole_series(v, WeightVector::equal(), &cfg);
        if let (Ok(ind), Ok(series)) = (indicator, series) {
            let last = *series.systole.last().expect("nonempty series");
            worst_tail = worst_tail.max(ind.half_horizon_max);
            let decays = last < 1e-9;
            hits += usize::from(ind.verdict == DiVerdict::ImprovementEvidence && ind.half_horizon_max < 0.95 && decays);
        }
    }
    Verdict::new(hits == 20, format!("{hits}/20 with improvement evidence, largest tail systole {worst_tail:.2e}"))
}

fn dani(_: &mut Context) -> Verdict {
    let r = WeightVector::equal();
    let cfg = TrajectoryConfig::with_default_sampling(30.0).expect("valid horizon");
    let z = plastic_number();
    let plastic = [z, z * z];
    let rational = rational_pair([3, 2], 6);
    let run = || -> dirlab_core::Result<(f64, f64, f64, f64)> {
        let s1 = bad_approx_score(plastic, r, 100_000)?.score;
        let m1 = systole_series(plastic, r, &cfg)?.min();
        let s2 = bad_approx_score(rational, r, 100_000)?.score;
        let last = *systole_series(rational, r, &cfg)?.systole.last().expect("nonempty series");
        Ok((s1, m1, s2, last))
    };
    match run() {
        Ok((s1, m1, s2, last)) => {
            let pass = (s1 - PLASTIC_SCORE).abs() < 1e-10
                && (m1 - PLASTIC_MIN_SYSTOLE).abs() < 1e-5
                && s2 < RATIONAL_SCORE_ZERO
                && last < 1e-9;
            Verdict::new(
                pass,
                format!("plastic: score {s1:.11}, min systole {m1:.5}; (1/2,1/3): score {s2:.1e}, systole at T=30 {last:.2e}"),
            )
        }
        Err(e) => Verdict::new(false, e.to_string()),
    }
}

/// Permutations the rank test puts inside, and those where every predicted
/// hand relation vanishes.
fn inside_sets(xyz: [f64; 3]) -> dirlab_core::Result<(Vec<String>, Vec<String>)> {
    let p = PElement::standard(xyz[0], xyz[1], xyz[2]);
    let mut inside = Vec::new();
    let mut predicted = Vec::new();
    for sigma in permutations(4) {
        if !relation_membership_test(&p, &sigma)? {
            inside.push(sigma.to_string());
        }
        let rels = predicted_relations(&sigma);
        if !rels.is_empty() && rels.iter().all(|r| r.value(xyz).abs() < 1e-8) {
            predicted.push(sigma.to_string());
        }
    }
    Ok((inside, predicted))
}

fn segment(ctx: &mut Context) -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for xyz in [[1.0, 1.0, 1.0], [1.0, 1.0, -1.0], [0.0, 5.0, 7.0], [0.0, 2.0, -1.0]] {
        match inside_sets(xyz) {
            Ok((inside, predicted)) => {
                let ok = inside == predicted && (xyz != [1.0, 1.0, 1.0] || inside.is_empty());
                pass &= ok;
                notes.push(format!("{xyz:?} inside for {} sigma", inside.len()));
            }
            Err(e) => return Verdict::new(false, e.to_string()),
        }
    }
    let out = ctx.dir("segment-1");
    let argv = [
        "counterexample", "--xyz", "1,1,1", "--s-grid", "-0.1,-0.05,0,0.05,0.1", "--T", "30", "--threads", "1",
        "--out", &out,
    ];
    let manifest = match run_cli(&argv) {
        Ok(m) => m,
        Err(e) => return Verdict::new(false, e),
    };
    let construction = match SegmentConstruction::build([1.0, 1.0, 1.0], default_anchor_target()) {
        Ok(c) => c,
        Err(e) => return Verdict::new(false, e.to_string()),
    };
    let (lo, hi) = construction.interval;
    let worst = (0..=100)
        .map(|k| {
            let s = lo + (hi - lo) * k as f64 / 100.0;
            solve_factorization(&construction.p, s).map_or(f64::INFINITY, |f| f.residual(&construction.p, s))
        })
        .fold(0.0, f64::max);
    pass &= worst <= 1e-10;
    let csv = std::fs::read_to_string(Path::new(&out).join("verdicts.csv")).unwrap_or_default();
    let rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
    let mut tails = Vec::new();
    for row in &rows {
        let s: f64 = row[0].parse().unwrap_or(f64::NAN);
        let min: f64 = row[1].parse().unwrap_or(f64::NAN);
        let tail: f64 = row[2].parse().unwrap_or(f64::NAN);
        if s == 0.0 {
            pass &= min >= C0 - 1e-6;
            notes.push(format!("s=0 min systole {min:.6}"));
        } else {
            pass &= tail <= 0.98;
            tails.push(format!("{tail:.4}"));
        }
    }
    pass &= rows.len() == 5;
    notes.push(format!("tail maxima [{}]", tails.join(", ")));
    notes.push(format!("residual {worst:.1e}"));
    ctx.segment_manifest = Some(manifest);
    Verdict::new(pass, notes.join(", "))
}

fn same_outputs(a: &RunManifest, b: &RunManifest) -> bool {
    let key = |m: &RunManifest| {
        m.outputs
            .iter()
            .map(|o| (o.file.clone(), o.sha256.clone()))
            .collect::<Vec<_>>()
    };
    key(a) == key(b)
}

fn determinism(ctx: &mut Context) -> Verdict {
    let (Some(line), Some(seg)) = (ctx.line_manifest.clone(), ctx.segment_manifest.clone()) else {
        return Verdict::new(false, "criteria 4 and 8 must run first");
    };
    let out = ctx.dir("line-rerun");
    let argv = equidist_args(&["--mode", "line", "--line", "plastic"], "0.5,0.5", "4", &out);
    let line_again = match run_cli(&argv) {
        Ok(m) => m,
        Err(e) => return Verdict::new(false, e),
    };
    let out = ctx.dir("segment-4");
    let argv = [
        "counterexample", "--xyz", "1,1,1", "--s-grid", "-0.1,-0.05,0,0.05,0.1", "--T", "30", "--threads", "4",
        "--out", &out,
    ];
    let seg_again = match run_cli(&argv) {
        Ok(m) => m,
        Err(e) => return Verdict::new(false, e),
    };
    let ok_line = same_outputs(&line, &line_again);
    let ok_seg = same_outputs(&seg, &seg_again);
    Verdict::new(
        ok_line && ok_seg,
        format!("1 vs 4 threads: line outputs identical {ok_line}, segment outputs identical {ok_seg}"),
    )
}

fn criteria() -> Vec<Criterion> {
    let c = |id, name, budget, check| Criterion {
        id,
        name,
        budget,
        expected_failure: false,
        check,
    };
    vec![
        c("1", "SVP oracle equivalence", Some(60.0), svp as fn(&mut Context) -> Verdict),
        c("2", "Hajos round trip", Some(120.0), hajos),
        c("3", "conjugation identity", None, conjugation),
        c("4", "line equidistribution", Some(1200.0), line_equidist),
        c("5", "curve equidistribution", Some(600.0), curve_equidist),
        Criterion {
            id: "6a",
            name: "DI dichotomy, generic points",
            budget: None,
            expected_failure: true,
            check: generic_points,
        },
        c("6b", "DI dichotomy, rational points", None, rational_points),
        c("7", "Dani cross-check", None, dani),
        c("8", "counterexample pipeline", Some(300.0), segment),
        c("9", "determinism across thread counts", None, determinism),
    ]
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let strict = args.iter().any(|a| a == "--strict");
    let wanted: Vec<&str> = args.iter().filter(|a| !a.starts_with('-')).map(String::as_str).collect();
    let scratch = tempfile::tempdir().expect("scratch directory");
    let mut ctx = Context {
        scratch: scratch.path().to_path_buf(),
        ..Context::default()
    };
    let (mut passed, mut failed, mut expected) = (0, 0, 0);
    for criterion in criteria() {
        let selected = wanted.is_empty()
            || wanted
                .iter()
                .any(|w| *w == criterion.id || (criterion.id.starts_with(w) && w.len() == 1));
        let needed = criterion.id == "4" || criterion.id == "8";
        let determinism_wanted = wanted.is_empty() || wanted.contains(&"9");
        if !selected && !(needed && determinism_wanted) {
            continue;
        }
        let started = Instant::now();
        let verdict = (criterion.check)(&mut ctx);
        let secs = started.elapsed().as_secs_f64();
        let over_budget = criterion.budget.is_some_and(|b| secs > b);
        let pass = verdict.pass && !over_budget;
        let note = match (pass, criterion.expected_failure) {
            (false, true) => "  [expected failure, see notes/decisions.md]",
            _ if over_budget => "  [over time budget]",
            _ => "",
        };
        println!(
            "{} {:<3} {}: {} ({secs:.1} s){note}",
            if pass { "PASS" } else { "FAIL" },
            criterion.id,
            criterion.name,
            verdict.detail
        );
        match (pass, criterion.expected_failure && !strict) {
            (true, _) => passed += 1,
            (false, true) => expected += 1,
            (false, false) => failed += 1,
        }
    }
    println!("{passed} passed, {failed} failed, {expected} expected failure(s)");
    if failed > 0 {
        std::process::exit(1);
    }
}
