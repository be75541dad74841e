//! Command-line flags, JSON configuration files and value parsing.
//!
//! Every subcommand's flags double as the keys of its JSON config file
//! (kebab-case, `T` for the horizon). A flag given on the command line
//! overrides the same key from `--config`. List values such as `--v 0,0`
//! are written as the same strings in the config file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dirlab_core::diophantine::liouville_pair;
use dirlab_core::flows::WeightVector;
use dirlab_core::real::{div, plastic_number, real, to_f64};
use dirlab_core::Real;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const THREADS_ENV: &str = "DIRLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dirlab", version, about = "Lattice flow experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Systole series of u(v)Z^3 under a weighted diagonal flow.
    Systole(SystoleArgs),
    /// Averages of an observable along a line or curve pushed by the flow.
    Equidist(EquidistArgs),
    /// Segment construction in dimension 4 and its verdict table.
    Counterexample(CounterexampleArgs),
    /// Built-in consistency suites.
    Selftest(SelftestArgs),
}

/// Fields taken from the config file wherever the flag is absent.
pub trait Merge: Sized {
    fn merge(self, fallback: Self) -> Self;
}

macro_rules! mergeable {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl Merge for $ty {
            fn merge(self, fallback: Self) -> Self {
                $ty {
                    config: self.config,
                    $($field: self.$field.or(fallback.$field),)*
                }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SystoleArgs {
    /// Start vector "v1,v2"; entries may be decimals or fractions p/q, or
    /// one of the names `plastic`, `liouville`.
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<String>,
    /// Flow weights "r1,r2" (default 0.5,0.5).
    #[arg(long)]
    pub weights: Option<String>,
    /// Horizon (default 30).
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_max: Option<f64>,
    /// Number of time steps (default: spacing 0.1).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, a positive integer or `auto`.
    #[arg(long)]
    pub threads: Option<String>,
    /// Output directory (default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with default values for the flags above.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
mergeable!(SystoleArgs { v, weights, t_max, samples, seed, threads, out });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EquidistArgs {
    /// `line` or `curve` (default line).
    #[arg(long)]
    pub mode: Option<String>,
    /// Line "a,b" for s -> (s, a s + b), or `plastic` for the line through
    /// the plastic pair (default).
    #[arg(long, allow_hyphen_values = true)]
    pub line: Option<String>,
    /// parabola, parabola-shifted, circle, line or file (default parabola).
    #[arg(long)]
    pub curve: Option<String>,
    /// Polynomial curve for `--curve file`: JSON {"x": [..], "y": [..]}.
    #[arg(long)]
    pub curve_file: Option<PathBuf>,
    /// Parameter interval "lo,hi" (default 0,1).
    #[arg(long, allow_hyphen_values = true)]
    pub interval: Option<String>,
    #[arg(long)]
    pub weights: Option<String>,
    /// Horizon (default 25).
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_max: Option<f64>,
    /// Siegel cube radius (default 0.75).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Default 200.
    #[arg(long)]
    pub s_samples: Option<usize>,
    /// Default 2500.
    #[arg(long)]
    pub t_samples: Option<usize>,
    /// Fail when some sampled time has every fiber below this systole.
    #[arg(long)]
    pub abort_on_hypothesis_failure: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
mergeable!(EquidistArgs {
    mode,
    line,
    curve,
    curve_file,
    interval,
    weights,
    t_max,
    radius,
    s_samples,
    t_samples,
    abort_on_hypothesis_failure,
    seed,
    threads,
    out,
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CounterexampleArgs {
    /// Bottom-row parameters "x,y,z".
    #[arg(long, allow_hyphen_values = true)]
    pub xyz: Option<String>,
    /// Pick (x, y, z) by the seeded search instead of --xyz.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub search: Option<bool>,
    /// Parameters s to verify (default -0.1,-0.05,0,0.05,0.1).
    #[arg(long, allow_hyphen_values = true)]
    pub s_grid: Option<String>,
    /// Horizon (default 30).
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
mergeable!(CounterexampleArgs { xyz, search, s_grid, t_max, seed, threads, out });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SelftestArgs {
    /// all, svp, hajos, conjugation or relations (default all).
    #[arg(long)]
    pub suite: Option<String>,
    /// Cases per suite (defaults: 1000, 1000, 1000, 100).
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Merge for SelftestArgs {
    fn merge(self, fallback: Self) -> Self {
        SelftestArgs {
            config: self.config,
            suite: self.suite.or(fallback.suite),
            cases: self.cases.or(fallback.cases),
            seed: self.seed.or(fallback.seed),
            threads: self.threads.or(fallback.threads),
        }
    }
}

/// Reads the config file named by `--config`, if any, under the flags.
pub fn resolve<T>(flags: T, config: Option<&Path>) -> Result<T, CliError>
where
    T: Merge + Default + for<'de> Deserialize<'de>,
{
    let Some(path) = config else {
        return Ok(flags);
    };
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let file: T = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    Ok(flags.merge(file))
}

/// Thread count from the flag, then DIRLAB_THREADS, then all cores.
pub fn thread_count(flag: Option<&str>) -> Result<usize, CliError> {
    let env = std::env::var(THREADS_ENV).ok();
    let raw = flag.map(str::to_string).or(env);
    match raw.as_deref().map(str::trim) {
        None | Some("auto") => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        Some(text) => match text.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Usage(format!(
                "threads must be a positive integer or `auto`, got `{text}`"
            ))),
        },
    }
}

pub fn parse_f64_list(flag: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|part| {
            parse_real(part.trim())
                .map(to_f64)
                .ok_or_else(|| CliError::Usage(format!("--{flag}: `{part}` is not a finite number")))
        })
        .collect()
}

pub fn parse_fixed<const N: usize>(flag: &str, text: &str) -> Result<[f64; N], CliError> {
    let values = parse_f64_list(flag, text)?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| CliError::Usage(format!("--{flag} expects {N} values, got {}", v.len())))
}

pub fn parse_weights(text: Option<&str>) -> Result<WeightVector, CliError> {
    let Some(text) = text else {
        return Ok(WeightVector::equal());
    };
    let [r1, r2] = parse_fixed::<2>("weights", text)?;
    WeightVector::new(r1, r2).map_err(|e| CliError::Usage(format!("--weights: {e}")))
}

fn parse_real(text: &str) -> Option<Real> {
    match text.split_once('/') {
        Some((num, den)) => {
            let num: i64 = num.trim().parse().ok()?;
            let den: i64 = den.trim().parse().ok()?;
            (den != 0).then(|| div(Real::from(num), Real::from(den)))
        }
        None => text.parse::<f64>().ok().filter(|x| x.is_finite()).map(real),
    }
}

/// A start vector: two entries, or a named vector.
pub fn parse_vector(text: &str) -> Result<[Real; 2], CliError> {
    match text.trim() {
        "plastic" => {
            let z = plastic_number();
            Ok([z, z * z])
        }
        "liouville" => Ok(liouville_pair(4)),
        other => {
            let parts: Vec<&str> = other.split(',').map(str::trim).collect();
            let values: Option<Vec<Real>> = parts.iter().map(|p| parse_real(p)).collect();
            match values.as_deref() {
                Some(&[a, b]) => Ok([a, b]),
                _ => Err(CliError::Usage(format!(
                    "--v expects two numbers or fractions (or plastic, liouville), got `{text}`"
                ))),
            }
        }
    }
}
