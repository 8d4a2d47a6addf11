//! `copdep` command-line interface.
//!
//! Exit codes: 0 success, 1 other failure, 2 malformed CSV, 3 tie policy
//! violation, 4 null-table build/load failure, 5 bad generator or experiment
//! spec, 64 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bandwidth::{self, BandwidthLadder, DEFAULT_MC_PAIRS};
use crate::csv_io;
use crate::datagen::{self, Generator, GeneratorSpec};
use crate::error::Error;
use crate::multiscale::{self, TestReport};
use crate::nulldist::{self, DEFAULT_REPLICATES};
use crate::powerlab::{self, ExperimentSpec};
use crate::ranks::{self, TiePolicy};
use crate::rng::{self, Domain};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "copdep", version, about = "Copula-based kernel tests of mutual independence")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test mutual independence of the columns of a CSV file.
    Test(TestArgs),
    /// Build and save a null table.
    Nulltable(NulltableArgs),
    /// Draw a data set from a named generator.
    Gen(GenArgs),
    /// Run a size/power experiment described by a JSON spec.
    Power(PowerArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Ties {
    Error,
    Random,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    pub csv: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    pub b: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Ties::Error)]
    pub ties: Ties,
    /// Null table file; loaded if present, otherwise built and written.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Directory of cached tables named `n{n}_d{d}_b{b}_seed{seed}.npt`.
    #[arg(long, conflicts_with = "table")]
    pub cache_dir: Option<PathBuf>,
    /// Report JSON path (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// p-value profile CSV path (default: `<out>.profile.csv` next to the report).
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Zero-based columns to ignore.
    #[arg(long, value_delimiter = ',')]
    pub drop_columns: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_MC_PAIRS)]
    pub mc_pairs: usize,
}

#[derive(Debug, Args)]
pub struct NulltableArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    pub b: usize,
    #[arg(long)]
    pub seed: u64,
    /// Output file (default: `nulltables/n{n}_d{d}_b{b}_seed{seed}.npt`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MC_PAIRS)]
    pub mc_pairs: usize,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Generator name, optionally with a parameter: `normal2d:0.5`, `aug8:circle`.
    #[arg(long)]
    pub name: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Result JSON path (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Result CSV path (default: `<out>` with a `.csv` extension).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, err: impl std::fmt::Display) -> Self {
        Self {
            code,
            message: err.to_string(),
        }
    }
}

fn classify(err: Error) -> CliError {
    let code = match &err {
        Error::MalformedCsv { .. } => 2,
        Error::TiesPresent { .. } => 3,
        Error::CorruptTable(_) | Error::VersionMismatch { .. } | Error::TableMismatch(_) => 4,
        Error::UnknownGenerator(_) | Error::InvalidParam(_) | Error::CsvTooSmall { .. } => 5,
        _ => 1,
    };
    CliError::new(code, err)
}

fn table_stage(err: Error) -> CliError {
    CliError::new(4, err)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::new(1, format!("{}: {e}", path.display()))
}

#[derive(Debug, Serialize)]
struct SigmaRow {
    sigma: f64,
    statistic: f64,
    p_value: f64,
}

#[derive(Debug, Serialize)]
struct Decisions {
    t_max: bool,
    t_sum: bool,
    fdr: bool,
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    schema_version: u32,
    input: String,
    n: usize,
    d: usize,
    alpha: f64,
    b: usize,
    seed: u64,
    ties: Ties,
    ladder: &'a BandwidthLadder,
    per_sigma: Vec<SigmaRow>,
    t_max: f64,
    p_t_max: f64,
    t_sum: f64,
    p_t_sum: f64,
    decisions: Decisions,
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|q| !q.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
            fs::write(p, bytes).map_err(io_err(p))
        }
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::new(1, e)),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Profile CSV: `sigma,statistic,p_value`, largest bandwidth first.
pub fn profile_csv(report: &TestReport) -> String {
    let mut out = String::from("sigma,statistic,p_value\n");
    let profile = multiscale::pvalue_profile(report);
    for (sigma, p) in profile {
        let stat = report
            .per_sigma
            .iter()
            .find(|r| r.sigma.get() == sigma)
            .map_or(f64::NAN, |r| r.statistic);
        out.push_str(&format!("{sigma},{stat},{p}\n"));
    }
    out
}

fn cmd_test(args: &TestArgs) -> Result<(), CliError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::new(64, format!("--alpha {} is outside (0, 1)", args.alpha)));
    }
    let data = csv_io::read_matrix(&args.csv).map_err(classify)?.data;
    let data = if args.drop_columns.is_empty() {
        data
    } else {
        data.drop_columns(&args.drop_columns)
            .map_err(|e| CliError::new(2, e))?
    };
    let policy = match args.ties {
        Ties::Error => TiePolicy::Error,
        Ties::Random => TiePolicy::Random {
            seed: rng::derive_seed(args.seed, Domain::TieBreak, 0),
        },
    };
    let y = ranks::normalized_ranks(&data, policy).map_err(classify)?;
    let (n, d) = (y.n(), y.d());

    let ladder = bandwidth::build_ladder(n, d, args.mc_pairs, args.seed).map_err(classify)?;
    let table_path = args
        .table
        .clone()
        .or_else(|| args.cache_dir.as_ref().map(|dir| nulldist::cache_path(dir, n, d, args.b, args.seed)));
    let table = match &table_path {
        Some(path) => nulldist::load_or_build(path, n, d, &ladder, args.b, args.seed),
        None => nulldist::build_null_table(n, d, &ladder, args.b, args.seed),
    }
    .map_err(table_stage)?;

    let report = multiscale::aggregate(&y, &ladder, &table, args.alpha).map_err(classify)?;
    let file = ReportFile {
        schema_version: REPORT_SCHEMA_VERSION,
        input: args.csv.display().to_string(),
        n,
        d,
        alpha: args.alpha,
        b: args.b,
        seed: args.seed,
        ties: args.ties,
        ladder: &ladder,
        per_sigma: report
            .per_sigma
            .iter()
            .map(|r| SigmaRow {
                sigma: r.sigma.get(),
                statistic: r.statistic,
                p_value: r.p_value.p,
            })
            .collect(),
        t_max: report.t_max,
        p_t_max: report.p_t_max.p,
        t_sum: report.t_sum,
        p_t_sum: report.p_t_sum.p,
        decisions: Decisions {
            t_max: report.t_max_reject,
            t_sum: report.t_sum_reject,
            fdr: report.fdr_reject,
        },
    };
    let mut json = serde_json::to_vec_pretty(&file).map_err(|e| CliError::new(1, e))?;
    json.push(b'\n');
    write_output(args.out.as_deref(), &json)?;

    let profile_path = args
        .profile
        .clone()
        .or_else(|| args.out.as_ref().map(|o| sibling(o, ".profile.csv")));
    if let Some(p) = profile_path {
        write_output(Some(&p), profile_csv(&report).as_bytes())?;
    }
    Ok(())
}

fn cmd_nulltable(args: &NulltableArgs) -> Result<(), CliError> {
    let ladder = bandwidth::build_ladder(args.n, args.d, args.mc_pairs, args.seed).map_err(table_stage)?;
    let table = nulldist::build_null_table(args.n, args.d, &ladder, args.b, args.seed).map_err(table_stage)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| nulldist::cache_path(Path::new("nulltables"), args.n, args.d, args.b, args.seed));
    nulldist::save_table(&table, &out).map_err(table_stage)?;
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let generator: Generator = args.name.parse().map_err(classify)?;
    let data = datagen::generate(&GeneratorSpec {
        generator,
        n: args.n,
        seed: args.seed,
    })
    .map_err(classify)?;
    let mut buf = Vec::new();
    csv_io::write_matrix(&data, &mut buf).map_err(classify)?;
    write_output(args.out.as_deref(), &buf)
}

fn cmd_power(args: &PowerArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.spec).map_err(io_err(&args.spec))?;
    let spec: ExperimentSpec =
        serde_json::from_str(&text).map_err(|e| CliError::new(5, format!("{}: {e}", args.spec.display())))?;
    let result = powerlab::run_experiment(&spec).map_err(classify)?;
    eprintln!(
        "calibration {:.2}s, replicates {:.2}s",
        result.runtime.calibration_secs, result.runtime.replicates_secs
    );
    let mut json = serde_json::to_vec_pretty(&result).map_err(|e| CliError::new(1, e))?;
    json.push(b'\n');
    write_output(args.out.as_deref(), &json)?;
    let csv_path = args.csv.clone().or_else(|| args.out.as_ref().map(|o| o.with_extension("csv")));
    match csv_path {
        Some(p) => write_output(Some(&p), result.to_csv().as_bytes()),
        None => Ok(()),
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let body = || match &cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Nulltable(a) => cmd_nulltable(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Power(a) => cmd_power(a),
    };
    match cli.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::new(1, e))?
            .install(body),
        None => body(),
    }
}

/// Parses `args`, runs, reports failures on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 64 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("copdep: {}", e.message);
            e.code
        }
    }
}
