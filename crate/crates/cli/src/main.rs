//! `maldbn`: generate corpora, encode, train, evaluate, benchmark, report.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 unknown algorithm,
//! 3 data/model incompatibility, 4 missing input.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "maldbn", version, about = "DBN malware detector and benchmark harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and its ground-truth sidecar
    Gen(GenArgs),
    /// Encode a corpus into the binary feature matrix
    Encode(EncodeArgs),
    /// Fit one algorithm on a labeled corpus
    Train(TrainArgs),
    /// Score a saved model on a labeled corpus
    Eval(EvalArgs),
    /// Run every algorithm over a ten-corpus suite
    Bench(BenchArgs),
    /// Rebuild the CSV files from a saved report.json
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Full-size networks and epoch counts
    Default,
    /// Small RBM and few epochs, for CI
    Quick,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// JSON file with GenSpec fields; flags override it
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Emit the ten-corpus sweep of benign counts 500..=5000
    #[arg(long)]
    pub suite: bool,
    #[arg(long)]
    pub n_malicious: Option<usize>,
    #[arg(long)]
    pub n_benign: Option<usize>,
    #[arg(long)]
    pub n_features: Option<usize>,
    #[arg(long)]
    pub n_zones: Option<usize>,
    #[arg(long)]
    pub rule_arity: Option<usize>,
    #[arg(long)]
    pub zone_conditioned: Option<bool>,
    #[arg(long)]
    pub label_noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rule_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Encode against this model's vocabulary instead of the corpus' own
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub algo: String,
    /// JSON file with AlgorithmConfig fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "default")]
    pub profile: Profile,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Directory for the DBN curve CSVs; defaults to the model's directory
    #[arg(long)]
    pub curves_out: Option<PathBuf>,
    /// Derive every training seed from this value
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Also write the metrics JSON here
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, value_enum, default_value = "default")]
    pub profile: Profile,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated subset of algorithms
    #[arg(long, value_delimiter = ',')]
    pub algos: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
