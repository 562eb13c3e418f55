use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "eittrack",
    version,
    about = "Simulate EIT measurements of a moving target and track it"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the forward and inverse meshes.
    Mesh(CommonArgs),
    /// Run the tracking benchmark and write per-frame and aggregate CSVs.
    Experiment(CommonArgs),
    /// Draw box plots and an SNR curve from a results CSV.
    Report(ReportArgs),
    /// Track a target through difference frames read from a CSV file.
    Track(TrackArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated SNR levels in dB, `inf` for noiseless.
    #[arg(long)]
    pub snr: Option<String>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Comma-separated subset of jac, kf, hmm.
    #[arg(long)]
    pub methods: Option<String>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = "eittrack-out")]
    pub out: PathBuf,
    /// Directory holding cached Jacobians; defaults to `<out>/cache`.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Per-frame results CSV written by `experiment`.
    pub results: PathBuf,
    #[arg(long, default_value = "eittrack-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// One difference frame per row, measurements comma-separated.
    pub input: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}
