mod cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

/// Structured N:M decomposition experiments.
#[derive(Debug, Parser)]
#[command(name = "tasd", version, about)]
struct Cli {
    /// Emit structured JSON logs on stderr.
    #[arg(long, global = true)]
    json_logs: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded random sparse matrix.
    Gen(GenArgs),
    /// Decompose a matrix into N:M terms plus a residual.
    Decompose(DecomposeArgs),
    /// Run one of the synthetic sweeps and write its CSV.
    Analyze(AnalyzeArgs),
    /// Search per-layer configurations for a workload.
    Search(SearchArgs),
    /// Cost a workload under an assignment on the accelerator model.
    Simulate(SimulateArgs),
    /// Print the patterns a hardware spec can express.
    Patterns(PatternsArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Probability that an entry is non-zero, in [0, 1].
    #[arg(long)]
    density: f64,
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    /// Input matrix (TASD1, or CSV when the extension is .csv).
    #[arg(long = "in")]
    input: PathBuf,
    /// Series such as "4:8+1:8".
    #[arg(long)]
    config: String,
    #[arg(long)]
    out_dir: PathBuf,
    /// Metrics JSON path; defaults to <out-dir>/metrics.json.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    /// Dropped non-zeros / magnitude over density, distribution and config.
    #[value(name = "appendixA")]
    DroppedNonzeros,
    /// Relative matmul error over A sparsity and config.
    MatmulError,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum)]
    sweep: SweepKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Matrices per grid cell.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SearchMode {
    Network,
    Greedy,
    Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BuiltinOracle {
    RetainedMagnitude,
    OutputError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Statistic {
    Mean,
    P99,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    workload: PathBuf,
    /// Hardware spec JSON, or a preset name (vegeta-m8, stc-m4).
    #[arg(long, default_value = "vegeta-m8")]
    hw: String,
    #[arg(long, value_enum)]
    mode: SearchMode,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.99)]
    rho: f64,
    /// Fraction of baseline quality that must be kept.
    #[arg(long, default_value_t = 0.99)]
    threshold: f64,
    /// External quality command; receives a manifest path as its last argument.
    #[arg(long)]
    oracle: Option<String>,
    /// Built-in oracle used when --oracle is absent.
    #[arg(long, value_enum, default_value_t = BuiltinOracle::RetainedMagnitude)]
    builtin_oracle: BuiltinOracle,
    #[arg(long, value_enum, default_value_t = Statistic::P99)]
    statistic: Statistic,
    /// Select activations by pseudo-density instead of measured sparsity.
    #[arg(long)]
    non_relu: bool,
    /// Keep trying later pairs after one fails the quality gate.
    #[arg(long)]
    skip_and_continue: bool,
    /// Cost network-mode candidates by total MACs instead of modeled cycles.
    #[arg(long)]
    mac_cost: bool,
    /// Assignment JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Search log JSON.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long, default_value = "vegeta-m8")]
    hw: String,
    /// Assignment JSON; every layer runs dense when omitted.
    #[arg(long)]
    assignment: Option<PathBuf>,
    /// Gate MAC energy by each layer's mean activation sparsity, when known.
    #[arg(long)]
    gate_inputs: bool,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PatternsArgs {
    #[arg(long, default_value = "vegeta-m8")]
    hw: String,
}

/// Bad command-line values that clap cannot catch on its own.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn init_logging(json: bool) {
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn"));
    let builder = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr);
    if json {
        builder.json().init();
    } else {
        builder.init();
    }
}

fn init_threads() -> Result<(), UsageError> {
    let Ok(raw) = std::env::var("TASD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        UsageError(format!(
            "TASD_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| UsageError(e.to_string()))
}

/// The error chain joined with ": ", skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.json_logs);
    let result = init_threads()
        .map_err(anyhow::Error::from)
        .and_then(|_| match cli.command {
            Command::Gen(a) => cmd::gen(a),
            Command::Decompose(a) => cmd::decompose(a),
            Command::Analyze(a) => cmd::analyze(a),
            Command::Search(a) => cmd::search(a),
            Command::Simulate(a) => cmd::simulate(a),
            Command::Patterns(a) => cmd::patterns(a),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            if e.is::<UsageError>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
