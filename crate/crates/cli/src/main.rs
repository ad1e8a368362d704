//! `iht`: dimension tests on CSV data, simulation studies, and report
//! rendering.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 numerical
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use iht::simulation::{preset, run_study, Study};
use iht::{build_report, load_dataset, IhtError, Reference, Report};

#[derive(Parser, Debug)]
#[command(name = "iht", version, about = "Invariant IHT dimension tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every test T_0..T_{p-1} on a CSV dataset and estimate the dimension.
    Test(TestArgs),
    /// Run a simulation study from a preset table or a TOML config.
    Simulate(SimulateArgs),
    /// Render a saved report.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DecisionRef {
    Chisq,
    Weighted,
}

impl From<DecisionRef> for Reference {
    fn from(r: DecisionRef) -> Self {
        match r {
            DecisionRef::Chisq => Reference::Chisq,
            DecisionRef::Weighted => Reference::Weighted,
        }
    }
}

#[derive(clap::Args, Debug)]
struct TestArgs {
    /// CSV file with a header row.
    input: PathBuf,
    /// Name of the response column; every other column is a predictor.
    #[arg(long, short)]
    response: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Reference distribution that drives the reported estimate.
    #[arg(long, value_enum, default_value_t = DecisionRef::Weighted)]
    reference: DecisionRef,
    /// Predictors to replace by their natural logarithm.
    #[arg(long, value_delimiter = ',')]
    log_columns: Vec<String>,
    /// Field delimiter: a single character, or `tab`.
    #[arg(long, default_value = ",")]
    delimiter: String,
    /// Directory for report.json, table.txt and diagnostics.csv.
    #[arg(long, env = "IHT_OUT_DIR")]
    out: Option<PathBuf>,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["table", "config"]))]
struct SimulateArgs {
    /// Preset grid, 1 to 7.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=7))]
    table: Option<u8>,
    /// TOML study file with `name`, `kind` and `[[run]]` entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replications per configuration; overrides the config file.
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for `<name>.csv` and `<name>.json`.
    #[arg(long, env = "IHT_OUT_DIR")]
    out: Option<PathBuf>,
    /// Print JSON instead of CSV on stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
    Diagnostics,
}

#[derive(clap::Args, Debug)]
struct ReportArgs {
    /// A report.json written by `iht test`.
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    format: ReportFormat,
}

const DEFAULT_PRESET_REPS: usize = 1000;
const DEFAULT_SEED: u64 = 42;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<IhtError> for Failure {
    fn from(e: IhtError) -> Self {
        let msg = e.to_string();
        if e.is_numeric() {
            return Failure::Numeric(msg);
        }
        let inner = match &e {
            IhtError::Sequential { source, .. } => source.as_ref(),
            other => other,
        };
        match inner {
            IhtError::InvalidArgument(_) | IhtError::OutOfRange { .. } => Failure::Usage(msg),
            _ => Failure::Data(msg),
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

fn parse_delimiter(s: &str) -> Result<u8, Failure> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(Failure::Usage(format!(
            "delimiter must be one ASCII character or 'tab', got '{s}'"
        ))),
    }
}

fn cmd_test(args: TestArgs) -> Result<(), Failure> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Failure::Usage(format!(
            "--alpha must lie in (0, 1), got {}",
            args.alpha
        )));
    }
    let delimiter = parse_delimiter(&args.delimiter)?;
    let mut d = load_dataset(&args.input, &args.response, delimiter)?;
    d.log_transform(&args.log_columns)?;
    let report = build_report(&d, args.alpha, &args.log_columns)?;

    if let Some(dir) = &args.out {
        write_file(dir, "report.json", &report.to_json())?;
        write_file(dir, "table.txt", &report.table())?;
        write_file(dir, "diagnostics.csv", &report.diagnostics_csv())?;
    }
    if args.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.summary());
        let reference: Reference = args.reference.into();
        let k = match reference {
            Reference::Chisq => report.k_hat_chisq,
            _ => report.k_hat_weighted,
        };
        println!("estimated dimension: {k} ({reference} reference)");
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut study = match (args.table, &args.config) {
        (Some(t), _) => preset(t, DEFAULT_PRESET_REPS, DEFAULT_SEED)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
            Study::from_toml(&text)?
        }
        (None, None) => unreachable!("clap requires --table or --config"),
    };
    if let Some(reps) = args.reps {
        if reps == 0 {
            return Err(Failure::Usage("--reps must be at least 1".into()));
        }
        study = study.with_reps(reps);
    }
    if let Some(seed) = args.seed {
        study = study.with_seed(seed);
    }
    let output = run_study(&study)?;
    let mut csv = Vec::new();
    output.write_csv(&mut csv)?;
    let csv = String::from_utf8(csv).expect("csv output is utf-8");
    let json = output.to_json();
    if let Some(dir) = &args.out {
        write_file(dir, &format!("{}.csv", output.name), &csv)?;
        write_file(dir, &format!("{}.json", output.name), &json)?;
    }
    if args.json {
        println!("{json}");
    } else {
        print!("{csv}");
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", args.input.display())))?;
    let report = Report::from_json(&text)?;
    match args.format {
        ReportFormat::Table => print!("{}", report.summary()),
        ReportFormat::Json => println!("{}", report.to_json()),
        ReportFormat::Diagnostics => print!("{}", report.diagnostics_csv()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
