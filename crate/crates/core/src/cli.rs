//! The `tedfam` command-line tool.
//!
//! Every command writes into an explicit output directory and leaves a
//! `manifest.txt` there recording the command, its flags, the seed and the
//! SHA-256 of every input.
//!
//! Exit codes: `0` success, `2` I/O or parse failure, `3` invalid arguments,
//! dimensions or degenerate input, `4` numerical failure.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use crate::baseline;
use crate::error::{Error, Result};
use crate::estimator::{self, FitOptions};
use crate::io::{self, RunManifest};
use crate::metrics::{self, EvalInputs, MetricSet};
use crate::simulate::{self, Scenario, ScenarioConfig};
use crate::types::{LoadingPair, MatrixSeries};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "TEDFAM_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "tedfam",
    version,
    about = "Tensor-decomposition matrix factor models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate loadings, scores and signals from a series file.
    Fit(FitArgs),
    /// Generate a simulated dataset with its ground truth.
    Simulate(SimulateArgs),
    /// Compare reconstructed signals with observations and truth.
    Evaluate(EvaluateArgs),
    /// Estimate the numbers of row and column factors.
    EstimateRank(RankArgs),
}

/// A factor count or `auto`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankChoice {
    Fixed(usize),
    Auto,
}

impl FromStr for RankChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(RankChoice::Auto);
        }
        s.parse()
            .map(RankChoice::Fixed)
            .map_err(|_| format!("expected a positive integer or 'auto', got '{s}'"))
    }
}

impl fmt::Display for RankChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankChoice::Fixed(k) => write!(f, "{k}"),
            RankChoice::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub k1: RankChoice,
    #[arg(long)]
    pub k2: RankChoice,
    /// Upper bound for `auto` ranks (default min(20, p/2, p-1) per mode).
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Fit the raw series instead of subtracting the per-entry time mean.
    #[arg(long)]
    pub no_center: bool,
    /// Also write varimax-rotated loadings.
    #[arg(long)]
    pub varimax: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: Scenario,
    #[arg(long)]
    pub t: usize,
    #[arg(long)]
    pub p1: usize,
    #[arg(long)]
    pub p2: usize,
    #[arg(long, default_value_t = 3)]
    pub k1: usize,
    #[arg(long, default_value_t = 3)]
    pub k2: usize,
    /// AR coefficient of the core factors.
    #[arg(long, allow_negative_numbers = true)]
    pub phi: Option<f64>,
    /// AR coefficient of the row factors (scenarios I and III only).
    #[arg(long, allow_negative_numbers = true)]
    pub psi: Option<f64>,
    /// AR coefficient of the column factors (scenarios I and III only).
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub seed: u64,
    /// Emit the noiseless signal as the observations.
    #[arg(long)]
    pub no_noise: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub observations: PathBuf,
    #[arg(long)]
    pub truth_signal: Option<PathBuf>,
    /// Directory with `truth_R.csv` and `truth_C.csv`, as written by `simulate`.
    #[arg(long)]
    pub truth_dir: Option<PathBuf>,
    /// `LABEL=PATH` of a reconstructed signal; repeatable.
    #[arg(long = "signal", required = true)]
    pub signals: Vec<String>,
    /// `LABEL=DIR` of a `fit` output whose `R.csv`/`C.csv` belong to LABEL.
    #[arg(long = "loadings")]
    pub loadings: Vec<String>,
    /// Comma-separated subset of dist,rmse_signal,rmse_x,psnr,corr.
    #[arg(long, default_value = "dist,rmse_signal,rmse_x,psnr")]
    pub metrics: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub k_max: usize,
    #[arg(long)]
    pub no_center: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Parse { .. } => EXIT_IO,
        Error::Validation(_) | Error::Dimension(_) | Error::Degenerate(_) => EXIT_INVALID,
        Error::Numerical(_) => EXIT_NUMERICAL,
    }
}

/// Parse `args` (including the program name), run the command and return the
/// process exit code. Diagnostics go to stderr, summaries to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return EXIT_INVALID;
    }
    let outcome = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::EstimateRank(a) => cmd_estimate_rank(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got '{raw}'"))?;
    // A pool may already exist when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn spectra_csv(row: &[f64], col: &[f64]) -> String {
    let mut out = String::from("mode,index,eigenvalue\n");
    for (mode, values) in [("row", row), ("column", col)] {
        for (j, v) in values.iter().enumerate() {
            out.push_str(&format!("{mode},{},{}\n", j + 1, io::csv_number(*v)));
        }
    }
    out
}

fn add_mean(series: MatrixSeries, mean: Option<&Array2<f64>>) -> Result<MatrixSeries> {
    match mean {
        Some(m) => series.map_obs(|x| &x + m),
        None => Ok(series),
    }
}

/// `30·v` truncated toward zero, for compact display of loadings.
fn display_x30(m: &Array2<f64>) -> Array2<f64> {
    m.mapv(|v| (30.0 * v).trunc() + 0.0)
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let series = io::read_series(&a.input)?;
    let center = !a.no_center;
    let (k1, k2) = match (a.k1, a.k2) {
        (RankChoice::Fixed(k1), RankChoice::Fixed(k2)) => (k1, k2),
        (c1, c2) => {
            let sel = estimator::select_ranks(&series, a.k_max, a.k_max, center)?;
            let pick = |c, auto| match c {
                RankChoice::Fixed(k) => k,
                RankChoice::Auto => auto,
            };
            (pick(c1, sel.k1), pick(c2, sel.k2))
        }
    };
    let opts = FitOptions {
        center,
        materialize_signal: true,
    };
    let fit = estimator::fit_with(&series, k1, k2, &opts)?;
    let work = if center {
        series.centered()
    } else {
        series.clone()
    };
    let bilinear = baseline::bilinear_signal(&work, &fit.loadings)?;
    let signal = fit.signal.clone().expect("signal requested");

    prepare_out(&a.out)?;
    let l = &fit.loadings;
    io::write_matrix_csv(&a.out.join("R.csv"), l.r.view())?;
    io::write_matrix_csv(&a.out.join("C.csv"), l.c.view())?;
    io::write_blocks_csv(&a.out.join("Z.csv"), fit.scores.z.view())?;
    io::write_blocks_csv(&a.out.join("E.csv"), fit.scores.e.view())?;
    io::write_blocks_csv(&a.out.join("F.csv"), fit.scores.f.view())?;
    io::write_series(
        &a.out.join("signal.mser"),
        &add_mean(signal, fit.mean.as_ref())?,
    )?;
    io::write_series(
        &a.out.join("signal_bilinear.mser"),
        &add_mean(bilinear, fit.mean.as_ref())?,
    )?;
    io::write_text(
        &a.out.join("spectra.csv"),
        &spectra_csv(
            fit.all_eigvals_row.as_slice().unwrap(),
            fit.all_eigvals_col.as_slice().unwrap(),
        ),
    )?;
    if let Some(mean) = &fit.mean {
        io::write_matrix_csv(&a.out.join("mean.csv"), mean.view())?;
    }
    if a.varimax {
        for (name, m) in [("R", &l.r), ("C", &l.c)] {
            let rot = metrics::varimax(m.view())?.rotated;
            io::write_matrix_csv(&a.out.join(format!("{name}_varimax.csv")), rot.view())?;
            io::write_matrix_csv(
                &a.out.join(format!("{name}_varimax_x30.csv")),
                display_x30(&rot).view(),
            )?;
        }
    }

    let mut manifest = RunManifest::new("fit");
    manifest
        .flag("k1", a.k1)
        .flag("k2", a.k2)
        .flag("k1_selected", k1)
        .flag("k2_selected", k2)
        .flag("center", center)
        .flag("varimax", a.varimax)
        .flag(
            "k_max",
            a.k_max.map_or("default".to_string(), |k| k.to_string()),
        );
    manifest.input("input", &a.input)?;
    manifest.write(&a.out)?;
    println!("k1={k1} k2={k2}");
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    if !a.scenario.has_mode_factors() && (a.psi.is_some() || a.gamma.is_some()) {
        return Err(Error::Validation(format!(
            "scenario {} has no row or column factors; --psi and --gamma do not apply",
            a.scenario
        )));
    }
    let (dphi, dpsi, dgamma) = a.scenario.default_ar();
    let mut config = ScenarioConfig::new(a.scenario, a.t, a.p1, a.p2, a.seed)
        .with_factors(a.k1, a.k2)
        .with_ar(
            a.phi.unwrap_or(dphi),
            a.psi.unwrap_or(dpsi),
            a.gamma.unwrap_or(dgamma),
        );
    if a.no_noise {
        config = config.without_noise();
    }
    let data = simulate::generate_scenario(&config)?;

    prepare_out(&a.out)?;
    io::write_series(&a.out.join("observations.mser"), &data.observations)?;
    io::write_series(&a.out.join("truth_signal.mser"), &data.truth_signal)?;
    io::write_matrix_csv(&a.out.join("truth_R.csv"), data.truth_r.view())?;
    io::write_matrix_csv(&a.out.join("truth_C.csv"), data.truth_c.view())?;
    let tf = &data.truth_factors;
    io::write_blocks_csv(&a.out.join("truth_Z.csv"), tf.z.view())?;
    io::write_blocks_csv(&a.out.join("truth_E.csv"), tf.e.view())?;
    io::write_blocks_csv(&a.out.join("truth_F.csv"), tf.f.view())?;

    let mut manifest = RunManifest::new("simulate");
    manifest.seed = Some(a.seed);
    manifest
        .flag("scenario", a.scenario)
        .flag("t", a.t)
        .flag("p1", a.p1)
        .flag("p2", a.p2)
        .flag("k1", a.k1)
        .flag("k2", a.k2)
        .flag("phi", config.phi)
        .flag("psi", config.psi)
        .flag("gamma", config.gamma)
        .flag("noise", config.noise);
    manifest.write(&a.out)?;
    Ok(())
}

fn split_labeled(entry: &str) -> Result<(String, PathBuf)> {
    match entry.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => {
            if label.contains(',') {
                return Err(Error::Validation(format!(
                    "label '{label}' may not contain ','"
                )));
            }
            Ok((label.to_string(), PathBuf::from(path)))
        }
        _ => Err(Error::Validation(format!(
            "expected LABEL=PATH, got '{entry}'"
        ))),
    }
}

fn parse_metric_set(list: &str) -> Result<MetricSet> {
    let mut set = MetricSet {
        distance: false,
        rmse_signal: false,
        rmse_x: false,
        psnr: false,
        correlation: false,
    };
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "dist" => set.distance = true,
            "rmse_signal" => set.rmse_signal = true,
            "rmse_x" => set.rmse_x = true,
            "psnr" => set.psnr = true,
            "corr" => set.correlation = true,
            other => return Err(Error::Validation(format!("unknown metric '{other}'"))),
        }
    }
    Ok(set)
}

fn read_loadings(dir: &Path, r_name: &str, c_name: &str) -> Result<LoadingPair> {
    let r = io::read_matrix_csv(&dir.join(r_name))?;
    let c = io::read_matrix_csv(&dir.join(c_name))?;
    LoadingPair::from_matrices(r, c)
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let which = parse_metric_set(&a.metrics)?;
    let observations = io::read_series(&a.observations)?;
    let truth_signal = a.truth_signal.as_deref().map(io::read_series).transpose()?;
    let truth_loadings = a
        .truth_dir
        .as_deref()
        .map(|d| read_loadings(d, "truth_R.csv", "truth_C.csv"))
        .transpose()?;

    let mut loadings = Vec::new();
    for entry in &a.loadings {
        let (label, dir) = split_labeled(entry)?;
        loadings.push((label, read_loadings(&dir, "R.csv", "C.csv")?));
    }

    let mut manifest = RunManifest::new("evaluate");
    manifest.flag("metrics", &a.metrics);
    manifest.input("observations", &a.observations)?;
    if let Some(p) = &a.truth_signal {
        manifest.input("truth_signal", p)?;
    }
    if let Some(d) = &a.truth_dir {
        manifest.input("truth_R", &d.join("truth_R.csv"))?;
        manifest.input("truth_C", &d.join("truth_C.csv"))?;
    }
    for entry in &a.loadings {
        let (label, dir) = split_labeled(entry)?;
        manifest.input(&format!("loadings.{label}.R"), &dir.join("R.csv"))?;
        manifest.input(&format!("loadings.{label}.C"), &dir.join("C.csv"))?;
    }

    let mut report_csv = String::from("method,metric,value\n");
    let mut psnr_csv = String::from("method,t,psnr\n");
    for entry in &a.signals {
        let (label, path) = split_labeled(entry)?;
        let signal = io::read_series(&path)?;
        manifest.input(&format!("signal.{label}"), &path)?;
        let inputs = EvalInputs {
            observations: &observations,
            signal: &signal,
            truth_signal: truth_signal.as_ref(),
            loadings: loadings.iter().find(|(l, _)| *l == label).map(|(_, lp)| lp),
            truth_loadings: truth_loadings.as_ref(),
        };
        let report = metrics::evaluate(&label, inputs, which)?;
        for (name, value) in &report.metrics {
            let shown = if value.is_infinite() {
                "inf".to_string()
            } else {
                io::csv_number(*value)
            };
            report_csv.push_str(&format!("{label},{name},{shown}\n"));
        }
        for (t, v) in report.per_observation_psnr.iter().enumerate() {
            let shown = match v {
                metrics::Psnr::Infinite => "inf".to_string(),
                metrics::Psnr::Finite(x) => io::csv_number(*x),
            };
            psnr_csv.push_str(&format!("{label},{t},{shown}\n"));
        }
    }

    prepare_out(&a.out)?;
    io::write_text(&a.out.join("report.csv"), &report_csv)?;
    if which.psnr {
        io::write_text(&a.out.join("psnr.csv"), &psnr_csv)?;
    }
    manifest.write(&a.out)?;
    print!("{report_csv}");
    Ok(())
}

pub fn cmd_estimate_rank(a: &RankArgs) -> Result<()> {
    let series = io::read_series(&a.input)?;
    let center = !a.no_center;
    let sel = estimator::select_ranks(&series, Some(a.k_max), Some(a.k_max), center)?;
    let row = sel.spectrum_row.as_slice().expect("contiguous");
    let col = sel.spectrum_col.as_slice().expect("contiguous");

    prepare_out(&a.out)?;
    io::write_text(
        &a.out.join("rank.txt"),
        &format!("k1={}\nk2={}\n", sel.k1, sel.k2),
    )?;
    io::write_text(&a.out.join("spectra.csv"), &spectra_csv(row, col))?;
    let mut manifest = RunManifest::new("estimate-rank");
    manifest.flag("k_max", a.k_max).flag("center", center);
    manifest.input("input", &a.input)?;
    manifest.write(&a.out)?;

    let join = |v: &[f64]| {
        v.iter()
            .map(|x| io::csv_number(*x))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("k1={}", sel.k1);
    println!("k2={}", sel.k2);
    println!("row_spectrum={}", join(row));
    println!("column_spectrum={}", join(col));
    Ok(())
}
