use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "prosody", version, about = "Prosodic similarity of vocal feedback: extraction, listening tests, evaluation and training")]
pub struct Cli {
    /// Seed for every randomized step [default: 17]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML settings file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut isolated feedback tokens out of aligned conversations
    Extract(ExtractArgs),
    /// Pitch statistics and Legendre contour fits per clip
    Features(FeaturesArgs),
    /// Draw same-form triads from a manifest
    SampleTriads(SampleArgs),
    /// Run the listening-test server
    Serve(ServeArgs),
    /// Export judgments (and optionally consensus triads) from a study log
    Export(ExportArgs),
    /// Agreement of every representation with the consensus judgments
    Eval(EvalArgs),
    /// Per-layer agreement of one embedding model
    ProbeLayers(ProbeArgs),
    /// Train linear projections with the holdout and k-fold protocol
    Train(TrainArgs),
    /// Merge saved evaluation reports into one table
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Directory of alignment files (.tsv, .txt or .TextGrid)
    #[arg(long)]
    pub alignments: PathBuf,
    /// Directory holding `<conversation>.wav` for each alignment file
    #[arg(long)]
    pub audio: PathBuf,
    /// FiCa, Fisher or synthetic
    #[arg(long)]
    pub dataset: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Reviewed CSV; only rows marked `yes` enter the manifest
    #[arg(long)]
    pub approved: Option<PathBuf>,
    #[arg(long)]
    pub isolation_gap_s: Option<f64>,
    #[arg(long)]
    pub pad_s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub floor_hz: Option<f64>,
    #[arg(long)]
    pub ceil_hz: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Triads per dataset
    #[arg(long, default_value_t = 1200)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory with manifest.jsonl, triads.jsonl and optional study.toml
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Built listening-test interface to serve at /
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub raters_per_triad: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Judgments JSONL
    #[arg(long)]
    pub out: PathBuf,
    /// Also write unanimous triads here
    #[arg(long)]
    pub consensus: Option<PathBuf>,
    /// Judgments needed for a triad to count
    #[arg(long, default_value_t = 3)]
    pub required: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Consensus JSONL; repeat to combine datasets
    #[arg(long, required = true)]
    pub consensus: Vec<PathBuf>,
    /// Features JSONL from `prosody features`
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Manifest for audio (spectral rows) and embedding paths
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Embedding model to add as a row; repeatable
    #[arg(long = "model")]
    pub models: Vec<String>,
    /// Directory of `<clip>.<model>.pemb` files (otherwise manifest paths)
    #[arg(long)]
    pub emb_dir: Option<PathBuf>,
    /// Skip the spectrogram rows (they need the audio)
    #[arg(long)]
    pub no_spectral: bool,
    /// Add consensus-oracle and random-score rows
    #[arg(long)]
    pub controls: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long, required = true)]
    pub consensus: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub emb_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, required = true)]
    pub consensus: Vec<PathBuf>,
    /// lp3, lp3+voiced_len, or emb:<model>:<layer>
    #[arg(long)]
    pub input: String,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub emb_dir: Option<PathBuf>,
    /// Comma-separated latent sizes
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Train latent sizes above the input size instead of skipping them
    #[arg(long)]
    pub allow_rank_deficient: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json files from `prosody eval`
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}
