//! `survfair` subcommands: `audit`, `experiment`, `synth` and `report`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 partial failure.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use survfair::biasing::BiasMethod;
use survfair::data::{generate_synthetic, load_csv, write_csv, CsvSchema, SurvivalDataset, SynthConfig};
use survfair::experiment::{build_report, parse_grid, read_sweep_csv, sigma_sweep_partial, write_sweep_csv, SweepConfig, SweepResult};
use survfair::fairness::{audit_dataset, write_fairness_csv, AuditProtocol};
use survfair::metrics::{parse_measures, Measure};
use survfair::rsf::RsfParams;
use survfair::seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "survfair", version, about = "Fairness auditing for survival models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a random survival forest and report per-group losses and gaps.
    Audit(AuditArgs),
    /// Sweep the bias proportion over datasets and test for a trend.
    Experiment(ExperimentArgs),
    /// Write a synthetic dataset as CSV.
    Synth(SynthArgs),
    /// Rebuild the statistics report from a stored sweep CSV.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ColumnArgs {
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "status")]
    pub status_col: String,
    #[arg(long, default_value = "group")]
    pub group_col: String,
}

impl ColumnArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            time_col: self.time_col.clone(),
            status_col: self.status_col.clone(),
            group_col: Some(self.group_col.clone()),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LearnerArgs {
    /// Trees per forest.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Features tried per split (default: ceil(sqrt(p))).
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub min_node_size: usize,
}

impl LearnerArgs {
    fn params(&self) -> RsfParams {
        RsfParams {
            tree_count: self.trees,
            mtry: self.mtry,
            min_node_size: self.min_node_size,
            ..RsfParams::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Protocol {
    Holdout,
    Kfold,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub columns: ColumnArgs,
    /// Comma-separated measure names (default: all eight).
    #[arg(long, value_delimiter = ',')]
    pub measures: Vec<String>,
    #[arg(long, value_enum, default_value_t = Protocol::Kfold)]
    pub protocol: Protocol,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    /// Held-out fraction for the holdout protocol.
    #[arg(long, default_value_t = 0.3)]
    pub test_fraction: f64,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Report CSV path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the fitted forest as JSON (holdout protocol only).
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Dataset CSV files (repeat the flag or separate with commas).
    #[arg(long, value_delimiter = ',')]
    pub input: Vec<PathBuf>,
    /// Also generate this many synthetic datasets.
    #[arg(long, default_value_t = 0)]
    pub synth: usize,
    /// Synthetic dataset size.
    #[arg(long, default_value_t = 600)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    #[arg(long, default_value_t = 0.3)]
    pub censoring: f64,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[arg(long, value_delimiter = ',')]
    pub measures: Vec<String>,
    /// Bias methods, comma-separated (default: both).
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<String>,
    /// Bias proportions as lo:hi:step.
    #[arg(long, default_value = "0:0.9:0.1")]
    pub grid: String,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory for sweep.csv, report.txt and report.jsonl.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub censoring: Option<f64>,
    /// Number of group labels.
    #[arg(long)]
    pub groups: Option<usize>,
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Sweep CSV written by `experiment`.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for report.txt and report.jsonl (default: print the
    /// text report).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Partial(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Partial(_) => EXIT_PARTIAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Partial(m) => m,
        }
    }
}

impl From<survfair::Error> for CliError {
    fn from(e: survfair::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

pub fn execute(command: Command) -> CliResult {
    match command {
        Command::Audit(a) => with_jobs(a.jobs, || cmd_audit(&a)),
        Command::Experiment(a) => with_jobs(a.jobs, || cmd_experiment(&a)),
        Command::Synth(a) => cmd_synth(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn with_jobs(jobs: Option<usize>, f: impl FnOnce() -> CliResult + Send) -> CliResult {
    match jobs {
        None => f(),
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {j} workers: {e}")))?
            .install(f),
    }
}

fn measures_of(names: &[String]) -> CliResult<Vec<Measure>> {
    if names.is_empty() {
        return Ok(Measure::ALL.to_vec());
    }
    parse_measures(names).map_err(|e| CliError::Usage(e.to_string()))
}

fn methods_of(names: &[String]) -> CliResult<Vec<BiasMethod>> {
    if names.is_empty() {
        return Ok(vec![BiasMethod::Permutation, BiasMethod::Undersampling]);
    }
    let mut out: Vec<BiasMethod> = Vec::new();
    for n in names {
        let m: BiasMethod = n.parse().map_err(|e: survfair::Error| CliError::Usage(e.to_string()))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn check_learner(l: &LearnerArgs) -> CliResult {
    if l.trees == 0 {
        return Err(CliError::Usage("--trees must be at least 1".into()));
    }
    if l.min_node_size == 0 {
        return Err(CliError::Usage("--min-node-size must be at least 1".into()));
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult {
    match out {
        Some(p) => write_file(p, bytes),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Data(format!("cannot write to stdout: {e}"))),
    }
}

pub fn cmd_audit(a: &AuditArgs) -> CliResult {
    let measures = measures_of(&a.measures)?;
    check_learner(&a.learner)?;
    let protocol = match a.protocol {
        Protocol::Holdout => AuditProtocol::Holdout { test_fraction: a.test_fraction },
        Protocol::Kfold => AuditProtocol::KFold { k: a.folds },
    };
    if a.model_out.is_some() && a.protocol != Protocol::Holdout {
        return Err(CliError::Usage("--model-out requires --protocol holdout".into()));
    }
    let data = load_csv(&a.input, &a.columns.schema())?;
    let column = &a.columns.group_col;
    if data.group().is_none() {
        return Err(CliError::Data(format!("group column `{column}` not found in {}", a.input.display())));
    }
    let found = data.group_labels().len();
    if found != 2 {
        return Err(CliError::Data(format!("expected exactly 2 groups in column `{column}`, found {found}")));
    }

    let (model, rows) = audit_dataset(&data, &measures, &a.learner.params(), protocol, a.seed)?;
    let mut buf = Vec::new();
    write_fairness_csv(&rows, &mut buf)?;
    emit(a.out.as_deref(), &buf)?;
    if let (Some(path), Some(model)) = (&a.model_out, model) {
        write_file(path, model.to_json()?.as_bytes())?;
    }

    let failed: Vec<String> = rows
        .iter()
        .filter_map(|(m, r)| r.as_ref().err().map(|e| format!("{m}: {e}")))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial(format!("{} measure(s) failed:\n  {}", failed.len(), failed.join("\n  "))))
    }
}

fn dataset_name(path: &Path, taken: &[(String, SurvivalDataset)]) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    if taken.iter().any(|(n, _)| *n == stem) {
        path.display().to_string()
    } else {
        stem
    }
}

pub fn cmd_experiment(a: &ExperimentArgs) -> CliResult {
    let measures = measures_of(&a.measures)?;
    let methods = methods_of(&a.method)?;
    let grid = parse_grid(&a.grid).map_err(|e| CliError::Usage(e.to_string()))?;
    check_learner(&a.learner)?;
    if a.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    if a.folds < 2 {
        return Err(CliError::Usage("--folds must be at least 2".into()));
    }
    if a.input.is_empty() && a.synth == 0 {
        return Err(CliError::Usage("give --input files and/or --synth k".into()));
    }

    let mut datasets: Vec<(String, SurvivalDataset)> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    let schema = a.columns.schema();
    for path in &a.input {
        match load_csv(path, &schema) {
            Ok(ds) => {
                let name = dataset_name(path, &datasets);
                datasets.push((name, ds));
            }
            Err(e) => failures.push(format!("{}: {e}", path.display())),
        }
    }
    if a.synth > 0 {
        let mut cfg = SynthConfig::strong_signal(a.n, a.p);
        cfg.target_censoring = a.censoring;
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        for k in 0..a.synth {
            let ds = generate_synthetic(&cfg, seed::derive(a.seed, &[u64::MAX, k as u64]))?;
            datasets.push((format!("synth{k}"), ds));
        }
    }

    let config = SweepConfig {
        grid,
        measures,
        learner: a.learner.params(),
        repetitions: a.reps,
        folds: a.folds,
        seed: a.seed,
    };
    let (sweep, sweep_failures) = sigma_sweep_partial(&datasets, &methods, &config)?;
    failures.extend(
        sweep_failures
            .iter()
            .map(|f| format!("{} ({}): {}", f.dataset, f.method, f.error)),
    );

    fs::create_dir_all(&a.out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", a.out.display())))?;
    let mut buf = Vec::new();
    write_sweep_csv(&sweep, &mut buf)?;
    write_file(&a.out.join("sweep.csv"), &buf)?;

    let report_result = if sweep.rows.is_empty() {
        Err(CliError::Data("no dataset produced results".into()))
    } else {
        write_report(&sweep, &a.out)
    };
    match (failures.is_empty(), report_result) {
        (true, r) => r,
        (false, r) => {
            let mut msg = format!("{} dataset(s) failed:\n  {}", failures.len(), failures.join("\n  "));
            if let Err(e) = r {
                msg.push_str(&format!("\nreport: {}", e.message()));
            }
            Err(CliError::Partial(msg))
        }
    }
}

fn write_report(sweep: &SweepResult, out: &Path) -> CliResult {
    let report = build_report(sweep)?;
    write_file(&out.join("report.txt"), report.to_text().as_bytes())?;
    write_file(&out.join("report.jsonl"), report.to_jsonl()?.as_bytes())
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
            SynthConfig::from_kv_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::strong_signal(a.n.unwrap_or(1000), a.p.unwrap_or(5)),
    };
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(p) = a.p {
        if p != cfg.p {
            cfg.effect_weights = SynthConfig::strong_signal(cfg.n, p).effect_weights;
            cfg.p = p;
        }
    }
    if let Some(c) = a.censoring {
        cfg.target_censoring = c;
    }
    if let Some(g) = a.groups {
        cfg.group_count = g;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ds = generate_synthetic(&cfg, a.seed)?;
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf, &CsvSchema::default())?;
    emit(a.out.as_deref(), &buf)
}

pub fn cmd_report(a: &ReportArgs) -> CliResult {
    let file = fs::File::open(&a.input)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", a.input.display())))?;
    let sweep = read_sweep_csv(file).map_err(|e| CliError::Data(format!("{}: {e}", a.input.display())))?;
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
            write_report(&sweep, dir)
        }
        None => emit(None, build_report(&sweep)?.to_text().as_bytes()),
    }
}
