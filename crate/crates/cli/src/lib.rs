//! Batch front end for acceptance-density scoring.
//!
//! Every subcommand reads a JSON [`RunConfig`] (optional) and applies flag
//! overrides on top. Reports are single JSON documents carrying a
//! `schema_version`; tables also go to CSV when `--csv` is given.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{BandwidthChoice, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_INTERNAL: i32 = 70;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(acceptance::Error),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "data error: {e}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<acceptance::Error> for CliError {
    fn from(e: acceptance::Error) -> Self {
        CliError::Data(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "acceptance", version, about = "Score responses by local acceptance density and evaluate against preference pairs")]
pub struct Cli {
    /// JSON run config; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it [default: all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Report destination [default: stdout]; for forge, the pseudo-pair file
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and check corpora, pair files and pools; print counts
    Validate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pools: PoolArgs,
    },
    /// Pairwise accuracy with bootstrap intervals for each method
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        scoring: ScoringArgs,
        /// Comma-separated: random, knn_majority, global_density, local_density [default: all]
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
    },
    /// Accuracy per score_ratio bin and its rank correlation with agreement
    Bins {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        scoring: ScoringArgs,
        /// Scorer to bin [default: local_density]
        #[arg(long)]
        method: Option<String>,
        /// Equal-count bins per scope [default: 8]
        #[arg(long)]
        bins: Option<usize>,
        /// Permutations per p-value [default: 10000]
        #[arg(long)]
        permutations: Option<usize>,
        /// Also write the bin table as CSV
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Local-density accuracy across neighborhood sizes, per community
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        scoring: ScoringArgs,
        /// Comma-separated ascending k values [default: 50,100,150,250,400]
        #[arg(long, value_delimiter = ',')]
        k_values: Option<Vec<usize>>,
        /// Also write the curves as CSV
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Accuracy on nested subsets of the training contexts
    Efficiency {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        scoring: ScoringArgs,
        /// Comma-separated ascending context counts [default: 1/16, 1/8, 1/4, 1/2 and all of the train corpus]
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Also write the curve as CSV
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Rank candidate pools by density and write pseudo-preference pairs to --out
    Forge {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pools: PoolArgs,
        #[command(flatten)]
        scoring: ScoringArgs,
        /// Gap below which pairs get SMALL_GAP [default: 0]
        #[arg(long)]
        min_gap: Option<f64>,
        /// Leave-one-out percentile for the UNINFORMATIVE check [default: 5]
        #[arg(long)]
        threshold_percentile: Option<f64>,
        /// top-bottom: one pair per pool; adjacent: every consecutive rank [default: top-bottom]
        #[arg(long, value_parser = parse_pair_mode)]
        mode: Option<acceptance::PairMode>,
        /// Write per-pool diagnostics as JSON
        #[arg(long, value_name = "PATH")]
        diagnostics: Option<PathBuf>,
    },
    /// Write the clustered synthetic benchmark, pools and a run config
    Synth {
        /// Output directory
        #[arg(long)]
        dir: PathBuf,
        /// Number of clusters [default: 20]
        #[arg(long)]
        clusters: Option<usize>,
        /// Training contexts per cluster [default: 420]
        #[arg(long)]
        contexts_per_cluster: Option<usize>,
        /// Embedding dimension [default: 16]
        #[arg(long)]
        dim: Option<usize>,
        /// Test pairs [default: 500]
        #[arg(long)]
        test_pairs: Option<usize>,
        /// Agreement-graded pairs written to agreement/ [default: 2000]
        #[arg(long)]
        agreement_pairs: Option<usize>,
        /// Mixed candidate pools [default: 500]
        #[arg(long)]
        pools: Option<usize>,
    },
}

#[derive(Debug, Args, Default, Clone)]
pub struct DataArgs {
    /// Reference corpus: manifest.json or its directory
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    /// Corpus the pair rows index [default: the train corpus]
    #[arg(long, value_name = "PATH")]
    pub test: Option<PathBuf>,
    /// Labeled pairs (pairs.ndjson)
    #[arg(long, value_name = "PATH")]
    pub pairs: Option<PathBuf>,
    /// Labeled pairs over the train corpus for the kNN baseline
    #[arg(long, value_name = "PATH")]
    pub train_pairs: Option<PathBuf>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct PoolArgs {
    /// Candidate pools (pools.ndjson)
    #[arg(long, value_name = "PATH")]
    pub pools: Option<PathBuf>,
    /// Corpus holding pool context and candidate embeddings
    #[arg(long, value_name = "PATH")]
    pub pool_corpus: Option<PathBuf>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct ScoringArgs {
    /// Nearest contexts per neighborhood [default: 150]
    #[arg(long)]
    pub k: Option<usize>,
    /// Kernel bandwidth rule [default: local]
    #[arg(long, value_enum)]
    pub bandwidth: Option<BandwidthChoice>,
    /// Global reference subset size [default: 1000]
    #[arg(long)]
    pub global_subset_size: Option<usize>,
    /// Bootstrap resamples [default: 1000]
    #[arg(long)]
    pub bootstrap_n: Option<usize>,
    /// Score ties as losses instead of half wins
    #[arg(long)]
    pub strict: bool,
    /// L2-normalize all embeddings before scoring
    #[arg(long)]
    pub normalize: bool,
}

fn parse_pair_mode(s: &str) -> Result<acceptance::PairMode, String> {
    match s {
        "top-bottom" | "top_bottom" => Ok(acceptance::PairMode::TopBottom),
        "adjacent" => Ok(acceptance::PairMode::Adjacent),
        other => Err(format!("unknown pair mode {other:?}; expected top-bottom or adjacent")),
    }
}

/// Runs a parsed command line, inside a dedicated pool when `--threads` is
/// given.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        #[cfg(feature = "parallel")]
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?
            .install(|| commands::dispatch(&cli)),
        _ => commands::dispatch(&cli),
    }
}
