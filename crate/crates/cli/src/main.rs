use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "iscore", version, about = "Rank missing-value imputations without the complete data")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "ISCORE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic (complete, masked) dataset pair.
    Simulate(SimulateArgs),
    /// Impute a masked CSV with a built-in method.
    Impute(ImputeArgs),
    /// Score an imputed CSV against its masked source.
    Score(ScoreArgs),
    /// Run a repeated benchmark from a TOML config.
    Benchmark(BenchmarkArgs),
    /// Re-run a benchmark for several numbers of draws and compare rankings.
    SweepN(SweepArgs),
}

/// Scoring settings shared by several commands; each overrides the config.
#[derive(Args, Clone, Debug, Default)]
pub struct ScoringFlags {
    #[arg(long)]
    pub seed: Option<u64>,

    /// Imputations drawn per scored cell.
    #[arg(short = 'N', long = "n-draws")]
    pub n_draws: Option<usize>,

    /// Columns with fewer missing or observed rows are skipped.
    #[arg(long)]
    pub min_rows: Option<usize>,

    /// Weight columns by |missing|·|observed|/n² (the default).
    #[arg(long, overrides_with = "unweighted")]
    pub weighted: bool,

    /// Plain mean over columns.
    #[arg(long, overrides_with = "weighted")]
    pub unweighted: bool,
}

impl ScoringFlags {
    pub fn weighted(&self) -> Option<bool> {
        match (self.weighted, self.unweighted) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GeneratorKind {
    Uniform,
    GaussMixture,
    NonlinearMixture,
    StrictPropriety,
    /// MCAR amputation of the complete CSV given with --from.
    Mcar,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Generator to run; ignored when --spec is given.
    #[arg(value_enum)]
    pub kind: Option<GeneratorKind>,

    /// Generator spec or manifest file (TOML or JSON).
    #[arg(long)]
    pub spec: Option<PathBuf>,

    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long)]
    pub n_per_pattern: Option<usize>,

    /// Copula correlation for the uniform generator.
    #[arg(long)]
    pub rho: Option<f64>,

    /// Complete CSV to amputate (mcar).
    #[arg(long)]
    pub from: Option<PathBuf>,

    /// Overall missing fraction (mcar).
    #[arg(long)]
    pub prop: Option<f64>,

    /// Columns kept complete (mcar).
    #[arg(long, default_value_t = 0)]
    pub always_observed: usize,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ImputeArgs {
    #[arg(long)]
    pub masked: PathBuf,

    /// Method, e.g. `fcs_gaussian` or `knn:k=3`.
    #[arg(long)]
    pub method: String,

    /// Number of completed datasets to write.
    #[arg(short = 'k', long, default_value_t = 1)]
    pub replicates: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output directory for imputed_<r>.csv files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub masked: PathBuf,

    #[arg(long)]
    pub imputed: PathBuf,

    /// Built-in method that produces the repeated imputations.
    #[arg(long, conflicts_with = "draws")]
    pub refit: Option<String>,

    /// Directory of externally produced draws, `<dir>/<column>/*.csv`, each
    /// a completion of the exported training table of that column.
    #[arg(long)]
    pub draws: Option<PathBuf>,

    /// Write each column's masked training table to `<dir>/<column>/table.csv`.
    #[arg(long)]
    pub export_tables: Option<PathBuf>,

    /// Also compute the energy-I-Score* (needs --refit).
    #[arg(long)]
    pub star: bool,

    #[arg(long)]
    pub test_fraction: Option<f64>,

    #[arg(long)]
    pub pattern_draws: Option<usize>,

    #[command(flatten)]
    pub flags: ScoringFlags,

    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Print the JSON report instead of the table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub config: PathBuf,

    #[command(flatten)]
    pub flags: ScoringFlags,

    /// Also compute the energy-I-Score*.
    #[arg(long)]
    pub star: bool,

    #[arg(long)]
    pub repetitions: Option<usize>,

    /// Output directory; defaults to the config's `out` or `bench-out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,

    /// Comma-separated draw counts; defaults to 5,10,...,100.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Vec<usize>,

    /// Draw count whose per-repetition winners are the reference.
    #[arg(long, default_value_t = 50)]
    pub reference: usize,

    #[command(flatten)]
    pub flags: ScoringFlags,

    #[arg(long)]
    pub repetitions: Option<usize>,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Impute(a) => commands::impute(a),
        Command::Score(a) => commands::score(a),
        Command::Benchmark(a) => commands::benchmark(a),
        Command::SweepN(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let iscore::Error::ObservedMismatch { cells } = &e {
                for (i, j) in cells {
                    eprintln!("  row {} column {}", i + 1, j + 1);
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
