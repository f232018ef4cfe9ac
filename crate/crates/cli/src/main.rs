//! `bnsat`: learn Bayesian network structure by weighted MAX-SAT.
//!
//! Each stage reads and writes plain text artifacts; `pipeline` runs every
//! stage in one go and writes the same files.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use bnsat::encoder::{CycleMode, EncodingMode};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "bnsat", version, about = "Bayesian network structure learning by weighted MAX-SAT")]
struct Cli {
    /// Cap on worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More logging on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward-sample a dataset from a BIF network.
    Sample(SampleArgs),
    /// Exact log BDeu scores for every parent set up to a cap.
    Score(ScoreArgs),
    /// Drop parent sets dominated by a better-scoring subset.
    Prune(PruneArgs),
    /// Compile a score table into weighted CNF plus an atom map.
    Encode(EncodeArgs),
    /// Run the local search solver on a weighted CNF.
    Solve(SolveArgs),
    /// Turn a solver assignment back into a network.
    Decode(DecodeArgs),
    /// Model averaging over the structures visited during search.
    Bma(BmaArgs),
    /// Every stage from a BIF file to a learned network.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// BIF file, or `builtin:asia` / `builtin:toy3`.
    #[arg(long)]
    pub bif: String,
    #[arg(long)]
    pub rows: u64,
    /// Master seed; the sampling seed is derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Count-table output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Also write the network as JSON.
    #[arg(long)]
    pub network_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Count table or CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Take CSV value labels and arities from this BIF file.
    #[arg(long)]
    pub schema: Option<String>,
    /// Parent-set size cap [default: 3, or n - 1 if smaller]
    #[arg(long)]
    pub max_parents: Option<usize>,
    /// Equivalent sample size.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum Tie {
    Strict,
    NonStrict,
}

#[derive(Args, Debug)]
pub struct PruneArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Whether an equally scoring subset also dominates.
    #[arg(long, value_enum, default_value_t = Tie::Strict)]
    pub tie: Tie,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct EncodingArgs {
    /// ancestor or order
    #[arg(long, default_value = "order")]
    pub encoding: EncodingMode,
    /// none, hard, or soft:W
    #[arg(long, default_value = "none")]
    pub cycle: CycleMode,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Score table, usually pruned.
    #[arg(long)]
    pub scores: PathBuf,
    #[command(flatten)]
    pub encoding: EncodingArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub atoms: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum, PartialEq, Eq)]
pub enum Profile {
    /// noise 50/100, cutoff 100,000, 100 tries
    Baseline,
    /// noise 10/100, cutoff 10,000,000, no random hard-clause breaks
    Long,
}

#[derive(Args, Debug, Clone)]
pub struct SearchArgs {
    #[arg(long, value_enum, default_value_t = Profile::Baseline)]
    pub profile: Profile,
    #[arg(long)]
    pub tries: Option<usize>,
    #[arg(long)]
    pub cutoff: Option<u64>,
    /// `N/D`, or `N` meaning N/100.
    #[arg(long)]
    pub noise: Option<String>,
    /// Whether a random-walk step may break a satisfied hard clause.
    #[arg(long)]
    pub allow_hard_break: Option<bool>,
    /// random, allfalse, or a file with one 0/1 per atom.
    #[arg(long, default_value = "random")]
    pub init: String,
    /// Master seed; stage seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    pub wcnf: PathBuf,
    /// Atom map; when given its digests are checked against the wcnf.
    #[arg(long)]
    pub atoms: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Stop once an assignment this cheap is found; exit 5 if none is.
    #[arg(long)]
    pub target_cost: Option<u64>,
    /// Best assignment output.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-try statistics as JSON.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[arg(long)]
    pub assignment: PathBuf,
    #[arg(long)]
    pub atoms: PathBuf,
    /// Learned network output (JSON, structure only).
    #[arg(long)]
    pub out: PathBuf,
    /// Accept assignments with several families per child, keeping the best.
    #[arg(long)]
    pub lenient: bool,
    /// Reference network to compare against; needs --data and --scores.
    #[arg(long, requires_all = ["data", "scores"])]
    pub compare: Option<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// The score table that was encoded.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Write the comparison table here as well.
    #[arg(long, requires = "compare")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BmaArgs {
    #[arg(long)]
    pub wcnf: PathBuf,
    #[arg(long)]
    pub atoms: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = bnsat::bma::DEFAULT_KEEP_TOP)]
    pub keep_top: usize,
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub posteriors: PathBuf,
    /// Records of a second run to measure divergence against.
    #[arg(long)]
    pub against: Option<PathBuf>,
    /// Two-column scatter of both runs' posteriors.
    #[arg(long, requires = "against")]
    pub scatter: Option<PathBuf>,
    #[arg(long, default_value_t = bnsat::bma::DEFAULT_DIVERGENCE_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetArg {
    Cost(u64),
    /// the rounded cost of the true network projected onto the score table
    Truth,
}

impl std::str::FromStr for TargetArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "truth" => Ok(TargetArg::Truth),
            _ => s.parse().map(TargetArg::Cost).map_err(|_| format!("expected a cost or `truth`, got `{s}`")),
        }
    }
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// BIF file, or `builtin:asia` / `builtin:toy3`.
    #[arg(long)]
    pub bif: String,
    #[arg(long)]
    pub rows: u64,
    /// Parent-set size cap [default: 3, or n - 1 if smaller]
    #[arg(long)]
    pub max_parents: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = Tie::Strict)]
    pub tie: Tie,
    #[command(flatten)]
    pub encoding: EncodingArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// A cost, or `truth` for the true network's rounded cost.
    #[arg(long)]
    pub target_cost: Option<TargetArg>,
    /// Also harvest structures for model averaging.
    #[arg(long)]
    pub bma: bool,
    #[arg(long, default_value_t = bnsat::bma::DEFAULT_KEEP_TOP)]
    pub keep_top: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Sample(a) => commands::sample(a),
        Command::Score(a) => commands::score(a),
        Command::Prune(a) => commands::prune(a),
        Command::Encode(a) => commands::encode(a),
        Command::Solve(a) => commands::solve(a),
        Command::Decode(a) => commands::decode(a),
        Command::Bma(a) => commands::bma(a),
        Command::Pipeline(a) => commands::pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
