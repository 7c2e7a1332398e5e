//! Command implementations behind the `debias` binary.
//!
//! Each `cmd_*` function does the work and returns a value; [`run`] handles
//! output and maps failures to the exit-code contract: 0 success, 1 I/O,
//! 2 data or model error, 3 verification failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use debias::dgp::{generate, SchemeSpec};
use debias::estimators::{ConstantName, EstimatorOptions};
use debias::randomization::{
    dump_header, dump_record, exact_distribution_with_dump, monte_carlo_distribution_with_dump,
    CiSpec, DistributionSummary, EngineConfig, EstimatorKind, Evaluation,
};
use debias::report::{estimate_report, EstimateReport};
use debias::variance::{DfMode, StudentDf, VarianceFlavor, VarianceOptions};
use debias::verify::{run_verify, VerifyOptions, VerifyReport};
use debias::{AssignmentSpace, Error};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "debias",
    version,
    about = "Debiased regression adjustment for randomized experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze one observed dataset from CSV.
    Estimate(EstimateArgs),
    /// Randomization distribution of every estimator for a simulation scheme.
    Simulate(SimulateArgs),
    /// Write a generated simulation population as CSV.
    DumpDgp(DumpDgpArgs),
    /// Check the closed-form identities against exhaustive enumeration.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudentDfArg {
    /// `n - 1`
    NMinusOne,
    /// `n` minus the number of regression coefficients.
    ResidualRank,
}

impl From<StudentDfArg> for StudentDf {
    fn from(v: StudentDfArg) -> Self {
        match v {
            StudentDfArg::NMinusOne => StudentDf::NMinusOne,
            StudentDfArg::ResidualRank => StudentDf::ResidualRank,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// CSV file with a header row.
    #[arg(long, short, env = "DEBIAS_INPUT")]
    pub input: PathBuf,
    #[arg(long, default_value = "y", env = "DEBIAS_Y")]
    pub y: String,
    #[arg(long, default_value = "t", env = "DEBIAS_T")]
    pub t: String,
    /// Covariate columns; defaults to every column other than the outcome and treatment.
    #[arg(long, value_delimiter = ',', env = "DEBIAS_Z")]
    pub z: Vec<String>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "bc-hc2",
        env = "DEBIAS_FLAVORS"
    )]
    pub flavors: Vec<VarianceFlavor>,
    #[arg(long, default_value_t = 0.95, env = "DEBIAS_LEVEL")]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = StudentDfArg::NMinusOne, env = "DEBIAS_STUDENT_DF")]
    pub student_df: StudentDfArg,
    /// Output path; stdout when absent.
    #[arg(long, short, env = "DEBIAS_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, env = "DEBIAS_SCHEME")]
    pub scheme: u8,
    #[arg(long, env = "DEBIAS_VARIANT")]
    pub variant: u8,
    #[arg(long, default_value_t = 24, env = "DEBIAS_N")]
    pub n: usize,
    /// Treated units; defaults to `n / 3`.
    #[arg(long, env = "DEBIAS_N_TREATED")]
    pub n_treated: Option<usize>,
    #[arg(long, value_enum, default_value_t = Mode::Exact, env = "DEBIAS_MODE")]
    pub mode: Mode,
    /// Monte Carlo draws (mc mode only).
    #[arg(long, env = "DEBIAS_REPS")]
    pub reps: Option<u64>,
    /// Monte Carlo seed (mc mode only).
    #[arg(long, env = "DEBIAS_SEED")]
    pub seed: Option<u64>,
    /// Summary output path. The text table goes to stdout either way.
    #[arg(long, short, env = "DEBIAS_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json, env = "DEBIAS_FORMAT")]
    pub format: Format,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "hc2,bc-hc2",
        env = "DEBIAS_FLAVORS"
    )]
    pub flavors: Vec<VarianceFlavor>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "t,satterthwaite",
        env = "DEBIAS_CI"
    )]
    pub ci: Vec<DfMode>,
    #[arg(long, default_value_t = 0.95, env = "DEBIAS_LEVEL")]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = StudentDfArg::NMinusOne, env = "DEBIAS_STUDENT_DF")]
    pub student_df: StudentDfArg,
    /// Worker threads; 1 forces the serial path. Defaults to available parallelism.
    #[arg(long, env = "DEBIAS_THREADS")]
    pub threads: Option<usize>,
    /// Largest assignment space exact mode will enumerate.
    #[arg(long, default_value_t = 10_000_000, env = "DEBIAS_BUDGET")]
    pub budget: u64,
    /// Drop assignments with singular fits instead of aborting.
    #[arg(long, env = "DEBIAS_SKIP_SINGULAR")]
    pub skip_singular: bool,
    /// Per-assignment CSV of estimates and interval endpoints.
    #[arg(long, env = "DEBIAS_DUMP")]
    pub dump: Option<PathBuf>,
    /// Suppress the text table.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DumpDgpArgs {
    #[arg(long, env = "DEBIAS_SCHEME")]
    pub scheme: u8,
    #[arg(long, env = "DEBIAS_VARIANT")]
    pub variant: u8,
    #[arg(long, default_value_t = 24, env = "DEBIAS_N")]
    pub n: usize,
    #[arg(long, short, env = "DEBIAS_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, value_delimiter = ',', default_value = "8,10,12")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub tables: usize,
    #[arg(long, default_value_t = 20)]
    pub triples: usize,
    #[arg(long, default_value_t = 20240601, env = "DEBIAS_SEED")]
    pub seed: u64,
    /// Test hook: scale one constant, e.g. `C_{A,NI}=1.01`.
    #[arg(long, hide = true, value_parser = parse_injection)]
    pub inject: Option<(ConstantName, f64)>,
    #[arg(long, short, env = "DEBIAS_OUT")]
    pub out: Option<PathBuf>,
}

fn parse_injection(s: &str) -> Result<(ConstantName, f64), String> {
    let (name, factor) = s
        .rsplit_once('=')
        .ok_or_else(|| format!("expected NAME=FACTOR, got {s:?}"))?;
    let name = ConstantName::ALL
        .into_iter()
        .find(|c| c.label().eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| format!("unknown constant {name:?}"))?;
    let factor = factor
        .trim()
        .parse::<f64>()
        .map_err(|e| format!("bad factor {factor:?}: {e}"))?;
    Ok((name, factor))
}

/// A failed command with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_io() { EXIT_IO } else { EXIT_DATA };
        let mut message = e.to_string();
        if matches!(e, Error::BudgetExceeded { .. }) {
            message.push_str(" (try --mode mc --reps N --seed S)");
        }
        Self { code, message }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Column names of a CSV header, for defaulting the covariate list.
fn header_columns(path: &Path) -> CliResult<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(Error::from)?;
    Ok(reader
        .headers()
        .map_err(Error::from)?
        .iter()
        .map(str::to_string)
        .collect())
}

pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<EstimateReport> {
    let z = if args.z.is_empty() {
        header_columns(&args.input)?
            .into_iter()
            .filter(|c| *c != args.y && *c != args.t)
            .collect()
    } else {
        args.z.clone()
    };
    let data = debias::design::ingest_csv(&args.input, &args.y, &args.t, &z)?;
    let var_opts = VarianceOptions {
        level: args.level,
        student_df: args.student_df.into(),
        ..VarianceOptions::default()
    };
    Ok(estimate_report(
        &data,
        &args.flavors,
        EstimatorOptions::default(),
        &var_opts,
    )?)
}

/// Resolves the simulation arguments into a table, space and engine configuration.
pub fn simulate_setup(
    args: &SimulateArgs,
) -> CliResult<(debias::PotentialOutcomeTable, AssignmentSpace, EngineConfig)> {
    match args.mode {
        Mode::Exact if args.reps.is_some() || args.seed.is_some() => {
            return Err(CliError::usage("--reps and --seed apply to --mode mc only"));
        }
        Mode::Mc if args.reps.is_none() || args.seed.is_none() => {
            return Err(CliError::usage("--mode mc requires --reps and --seed"));
        }
        _ => {}
    }
    if args.flavors.is_empty() || args.ci.is_empty() {
        return Err(CliError::usage(
            "at least one flavor and one CI mode are required",
        ));
    }
    let spec = SchemeSpec::new(args.scheme, args.variant, args.n)?;
    let table = generate(&spec)?.table;
    let space = AssignmentSpace::new(args.n, args.n_treated.unwrap_or(args.n / 3))?;
    let cfg = EngineConfig {
        variance: VarianceOptions {
            level: args.level,
            student_df: args.student_df.into(),
            ..VarianceOptions::default()
        },
        cis: CiSpec::grid(&args.flavors, &args.ci),
        budget: args.budget,
        skip_singular: args.skip_singular,
        threads: args.threads,
        ..EngineConfig::default()
    };
    Ok((table, space, cfg))
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<DistributionSummary> {
    let (table, space, cfg) = simulate_setup(args)?;
    let mut writer = match &args.dump {
        Some(path) => {
            let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
            w.write_record(dump_header(&cfg)).map_err(Error::from)?;
            Some(w)
        }
        None => None,
    };
    let mut write_row = |id: u64, ev: &Evaluation| -> debias::Result<()> {
        if let Some(w) = writer.as_mut() {
            w.write_record(dump_record(id, ev))?;
        }
        Ok(())
    };
    let sink: Option<&mut debias::randomization::DumpSink<'_>> = if args.dump.is_some() {
        Some(&mut write_row)
    } else {
        None
    };
    let summary = match args.mode {
        Mode::Exact => exact_distribution_with_dump(&table, &space, &cfg, sink)?,
        Mode::Mc => monte_carlo_distribution_with_dump(
            &table,
            &space,
            args.seed.unwrap_or_default(),
            args.reps.unwrap_or_default(),
            &cfg,
            sink,
        )?,
    };
    if let Some(mut w) = writer {
        w.flush()?;
    }
    Ok(summary)
}

pub fn cmd_dump_dgp(args: &DumpDgpArgs) -> CliResult<String> {
    let pop = generate(&SchemeSpec::new(args.scheme, args.variant, args.n)?)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    pop.write_to(&mut w)?;
    let bytes = w.into_inner().map_err(|e| CliError {
        code: EXIT_IO,
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn cmd_verify(args: &VerifyArgs) -> CliResult<VerifyReport> {
    let opts = VerifyOptions {
        sizes: args.sizes.clone(),
        tables_per_size: args.tables,
        triples: args.triples,
        seed: args.seed,
        inject: args.inject,
    };
    Ok(run_verify(&opts)?)
}

fn column_header() -> String {
    format!(
        "{:<40}{:>12}{:>12}{:>12}{:>12}{:>12}\n{:<40}{:>12}{:>12}{:>12}{:>12}{:>12}\n",
        "",
        "Unadjusted",
        "OLS",
        "OLS",
        "Debiased",
        "Debiased",
        "",
        "",
        "Non-Int.",
        "Interacted",
        "Non-Int.",
        "Interacted"
    )
}

fn flavor_title(f: VarianceFlavor) -> &'static str {
    match f {
        VarianceFlavor::Hc2 => "HC2",
        VarianceFlavor::Hc3 => "HC3",
        VarianceFlavor::BcHc2 => "BC-HC2",
        VarianceFlavor::BcHc3 => "BC-HC3",
    }
}

fn mode_title(m: DfMode) -> &'static str {
    match m {
        DfMode::Z => "Normal",
        DfMode::T => "Student-t",
        DfMode::Satterthwaite => "Satterthwaite",
    }
}

/// Three-decimal text rendering laid out like a published simulation table.
///
/// BC rows are shown for the debiased columns only; for the OLS columns they
/// coincide with the plain rows.
pub fn render_table(title: &str, s: &DistributionSummary, cis: &[CiSpec]) -> String {
    let mut out = column_header();
    let _ = writeln!(out, "{title}, N = {}, N_A = {}", s.n, s.n_treated);
    let cell = |v: f64| format!("{v:>12.3}");
    let mut line = |label: &str, f: &dyn Fn(EstimatorKind) -> Option<f64>| {
        let mut row = format!("{label:<40}");
        for kind in EstimatorKind::ALL {
            match f(kind) {
                Some(v) => row.push_str(&cell(v)),
                None => row.push_str(&format!("{:>12}", "")),
            }
        }
        out.push_str(row.trim_end());
        out.push('\n');
    };
    line("Bias", &|k| Some(s.estimator(k).bias));
    line("SD", &|k| Some(s.estimator(k).sd));
    line("RMSE", &|k| Some(s.estimator(k).rmse));
    for spec in cis {
        let label = format!(
            "CI Coverage ({}, {})",
            flavor_title(spec.flavor),
            mode_title(spec.mode)
        );
        line(&label, &|k| {
            let debiased = matches!(k, EstimatorKind::DebiasedNi | EstimatorKind::DebiasedI);
            if spec.flavor.is_bias_corrected() && !debiased {
                return None;
            }
            s.interval(k, spec.flavor, spec.mode).map(|c| c.coverage)
        });
    }
    if s.skipped > 0 {
        let _ = writeln!(out, "({} singular assignments skipped)", s.skipped);
    }
    out
}

/// Long-form CSV of a summary: one `(estimator, flavor, mode, statistic, value)` row each.
pub fn summary_csv(s: &DistributionSummary) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut put = |rec: [String; 5]| w.write_record(rec).map_err(Error::from);
    put(["estimator", "flavor", "mode", "statistic", "value"].map(String::from))?;
    for e in &s.estimators {
        for (stat, v) in [
            ("mean", e.mean),
            ("bias", e.bias),
            ("sd", e.sd),
            ("rmse", e.rmse),
        ] {
            put([
                e.estimator.label().into(),
                String::new(),
                String::new(),
                stat.into(),
                v.to_string(),
            ])?;
        }
    }
    for c in &s.intervals {
        for (stat, v) in [
            ("coverage", c.coverage),
            ("mean_width", c.mean_width),
            ("median_width", c.median_width),
        ] {
            put([
                c.estimator.label().into(),
                c.flavor.label().into(),
                c.mode.label().into(),
                stat.into(),
                v.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError {
        code: EXIT_IO,
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn emit(out: &Option<PathBuf>, body: &str) -> CliResult<()> {
    match out {
        Some(p) if p.as_os_str() != "-" => std::fs::write(p, body)?,
        _ => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(Error::from)?;
    s.push('\n');
    Ok(s)
}

fn execute(cli: &Cli) -> CliResult<i32> {
    match &cli.command {
        Command::Estimate(a) => {
            let report = cmd_estimate(a)?;
            emit(&a.out, &json(&report)?)?;
        }
        Command::Simulate(a) => {
            let summary = cmd_simulate(a)?;
            if let Some(path) = &a.out {
                let body = match a.format {
                    Format::Json => json(&summary)?,
                    Format::Csv => summary_csv(&summary)?,
                };
                emit(&Some(path.clone()), &body)?;
            }
            if !a.quiet && a.out.as_deref().is_none_or(|p| p.as_os_str() != "-") {
                let spec = SchemeSpec::new(a.scheme, a.variant, a.n)?;
                let cis = CiSpec::grid(&a.flavors, &a.ci);
                print!("{}", render_table(&spec.name(), &summary, &cis));
            }
        }
        Command::DumpDgp(a) => emit(&a.out, &cmd_dump_dgp(a)?)?,
        Command::Verify(a) => {
            let report = cmd_verify(a)?;
            if let Some(path) = &a.out {
                emit(&Some(path.clone()), &json(&report)?)?;
            }
            for c in &report.checks {
                println!(
                    "{} {} (residual {:.3e}, tolerance {:.1e})",
                    if c.passed { "ok  " } else { "FAIL" },
                    c.name,
                    c.residual,
                    c.tolerance
                );
            }
            if let Some(first) = report.first_failure() {
                eprintln!(
                    "verification failed: {} (residual {:.3e})",
                    first.name, first.residual
                );
                return Ok(EXIT_VERIFY);
            }
            println!("all {} checks passed", report.checks.len());
        }
    }
    Ok(EXIT_OK)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
