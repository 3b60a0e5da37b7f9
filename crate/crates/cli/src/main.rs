mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Simulate, track, count and evaluate pedestrians seen from an approaching train.
#[derive(Debug, Parser)]
#[command(name = "crowdtrack", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one synthetic sequence.
    Simulate(SimulateArgs),
    /// Track detections and count people in the virtual bands.
    Track(TrackArgs),
    /// Score tracker results against ground truth.
    Evaluate(EvaluateArgs),
    /// Rank counting-band settings over a directory of sequences.
    Sweep(SweepArgs),
    /// Compare the counting accuracy of tracking runs.
    Report(ReportArgs),
    /// Generate the seeded benchmark suite and run every model on it.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene configuration (key = value).
    #[arg(long)]
    pub scene: PathBuf,
    /// Detector noise configuration (key = value).
    #[arg(long)]
    pub noise: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed of the scene file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Clone)]
pub struct TrackingOptions {
    /// Motion model: cv8d, ca12d or phys3d.
    #[arg(long)]
    pub model: Option<String>,
    /// Tracker and counting settings (key = value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub band_start: Option<f64>,
    #[arg(long)]
    pub band_end: Option<f64>,
    /// Consecutive in-band frames needed to count a track.
    #[arg(long)]
    pub persistence: Option<u32>,
    /// Frame rate; defaults to seqinfo.cfg next to the detections, then the config.
    #[arg(long)]
    pub fps: Option<f64>,
    /// Track on motion only, without embeddings.
    #[arg(long)]
    pub no_appearance: bool,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub options: TrackingOptions,
    /// Camera calibration (key = value: fx, fy, cx, cy, width, height).
    #[arg(long)]
    pub cam: PathBuf,
    #[arg(long)]
    pub det: PathBuf,
    #[arg(long)]
    pub emb: Option<PathBuf>,
    /// Results file; counts and the manifest are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// True counts (left, right, total) recorded in the manifest.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub res: PathBuf,
    /// True unique-person count; defaults to truth.txt next to the ground truth.
    #[arg(long)]
    pub truth_count: Option<u32>,
    /// Count summary of the run; defaults to counts.txt next to the results.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Row label; defaults to the name of the ground-truth directory.
    #[arg(long)]
    pub name: Option<String>,
    /// Output directory for the tables; defaults to the results directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Swept parameter; only `band` is supported.
    #[arg(long, default_value = "band")]
    pub param: String,
    /// Grid as `start:a,b,… end:c,d,…`.
    #[arg(long, num_args = 1.., value_delimiter = ' ')]
    pub grid: Vec<String>,
    /// Directory whose subdirectories hold det.txt, emb.txt, cam.cfg and truth.txt.
    #[arg(long)]
    pub sequences: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub options: TrackingOptions,
    #[arg(long, env = "CROWDTRACK_JOBS", default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory whose subdirectories each hold a tracking run.
    #[arg(long)]
    pub runs: PathBuf,
    /// Output directory; defaults to the runs directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub sequences: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub min_pedestrians: usize,
    #[arg(long, default_value_t = 60)]
    pub max_pedestrians: usize,
    /// Base scene configuration; seed, pedestrian count and side are set per sequence.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Models to run (comma separated).
    #[arg(long, default_value = "cv8d,ca12d,phys3d", value_delimiter = ',')]
    pub models: Vec<String>,
    /// Tracker and counting settings shared by all models.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "CROWDTRACK_JOBS", default_value_t = 1)]
    pub jobs: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Track(a) => commands::track(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Report(a) => commands::report(&a),
        Command::Benchmark(a) => commands::benchmark(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
