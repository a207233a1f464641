//! `dualgraph`: generate campaigns, train and evaluate surrogates, and run
//! the projection and gradient studies from the command line.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

/// Default output root when `--out` is not given.
pub const OUT_ENV: &str = "DUALGRAPH_OUT";

#[derive(Parser)]
#[command(name = "dualgraph", version, about = "Dual-graph recurrent surrogate for four-point bending")]
struct Cli {
    /// Output root for subcommands without an explicit --out.
    #[arg(long, global = true, env = OUT_ENV, default_value = "runs")]
    root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic campaign of loading histories.
    Gen(GenArgs),
    /// Assign a campaign's cases to train/validation/test partitions.
    Split(SplitArgs),
    /// Train a surrogate on a campaign's training partition.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a campaign partition.
    Eval(EvalArgs),
    /// Roll a checkpoint out on one case.
    Rollout(RolloutArgs),
    /// Compare the single-graph baseline with the dual model over several seeds.
    Ablate(AblateArgs),
    /// Element → node → element peak attenuation of one frame.
    ProjectStudy(ProjectArgs),
    /// Node and element graph statistics of a case.
    GraphStats(GraphStatsArgs),
    /// Finite-difference audit of the full model gradient.
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
pub struct GenArgs {
    /// Number of distinct load-offset pairs to sample.
    #[arg(long, default_value_t = 190)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mesh resolution: full or tiny.
    #[arg(long, default_value = "full")]
    pub mesh_scale: String,
    #[arg(long, default_value_t = 21)]
    pub frames: usize,
    /// Campaign directory [default: <root>/gen].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SplitArgs {
    /// Campaign directory [default: <root>/gen].
    #[arg(long)]
    pub campaign: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.15,0.15")]
    pub ratios: Vec<f64>,
}

/// Training settings. Unset flags fall back to `--config`, then to the
/// defaults shown.
#[derive(Args, Clone)]
pub struct TrainFlags {
    /// JSON file mirroring the training configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// [default: 1000]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Cases per batch [default: 8]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 0.003]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Global gradient-norm clip [default: 0.5]
    #[arg(long)]
    pub clip: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// dual or baseline [default: dual]
    #[arg(long)]
    pub kind: Option<String>,
    /// Recurrent hidden width [default: 256]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Decoder head width [default: 256]
    #[arg(long)]
    pub mlp_width: Option<usize>,
    /// Chebyshev filter order [default: 2]
    #[arg(long)]
    pub cheb_order: Option<usize>,
    /// Feed predicted stress back into the node features [default: off]
    #[arg(long)]
    pub stress_feedback: bool,
    /// Stress loss weight [default: 1]
    #[arg(long)]
    pub lambda_stress: Option<f64>,
    /// PEEQ loss weight [default: 1]
    #[arg(long)]
    pub lambda_peeq: Option<f64>,
    /// Reaction-force loss weight [default: 1]
    #[arg(long)]
    pub lambda_rf2: Option<f64>,
    /// Displacement smoothness weight [default: 0.01]
    #[arg(long)]
    pub lambda_laplacian: Option<f64>,
    /// Plateau epochs before the learning rate is cut [default: 3]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Learning-rate factor on a plateau [default: 0.5]
    #[arg(long)]
    pub factor: Option<f64>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Campaign directory [default: <root>/gen].
    #[arg(long)]
    pub campaign: Option<PathBuf>,
    /// Output directory [default: <root>/train].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint directory [default: <root>/train/checkpoint].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Campaign directory [default: <root>/gen].
    #[arg(long)]
    pub campaign: Option<PathBuf>,
    /// train, validation, test or all.
    #[arg(long, default_value = "test")]
    pub partition: String,
    /// Use the checkpoint's statistics even if the campaign's training
    /// partition gives different ones.
    #[arg(long)]
    pub trust_checkpoint_stats: bool,
    /// Output directory [default: <root>/eval].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct RolloutArgs {
    /// Checkpoint directory [default: <root>/train/checkpoint].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Case directory.
    #[arg(long)]
    pub case: PathBuf,
    /// Feed ground truth instead of predictions back between frames.
    #[arg(long)]
    pub teacher: bool,
    /// Output directory [default: <root>/rollout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AblateArgs {
    /// Campaign directory [default: <root>/gen].
    #[arg(long)]
    pub campaign: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    /// Output directory [default: <root>/ablate].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Args)]
pub struct ProjectArgs {
    /// Case directory.
    #[arg(long)]
    pub case: PathBuf,
    /// Frame index [default: last frame].
    #[arg(long)]
    pub frame: Option<usize>,
    /// Output directory [default: <root>/project-study].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GraphStatsArgs {
    /// Case directory.
    #[arg(long)]
    pub case: PathBuf,
    /// Also write graph_stats.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GradCheckArgs {
    /// dual or baseline.
    #[arg(long, default_value = "dual")]
    pub kind: String,
    #[arg(long, default_value_t = 3)]
    pub hidden: usize,
    #[arg(long, default_value_t = 3)]
    pub mlp_width: usize,
    /// Frames of the single-element test case.
    #[arg(long, default_value_t = 3)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    /// Exit with status 4 above this relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long)]
    pub stress_feedback: bool,
}

/// Bad flag values detected after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Usage(pub String);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            report("usage", &e.kind().to_string(), None, 2);
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => commands::gen(&cli.root, a),
        Command::Split(a) => commands::split(&cli.root, a),
        Command::Train(a) => commands::train(&cli.root, a),
        Command::Eval(a) => commands::eval(&cli.root, a),
        Command::Rollout(a) => commands::run_rollout(&cli.root, a),
        Command::Ablate(a) => commands::ablate(&cli.root, a),
        Command::ProjectStudy(a) => commands::project_study(&cli.root, a),
        Command::GraphStats(a) => commands::graph_stats(a),
        Command::GradCheck(a) => commands::grad_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code, path) = classify(&e);
            eprintln!("error: {e:#}");
            report(kind, &format!("{e:#}"), path, code);
            ExitCode::from(code)
        }
    }
}

/// Error kind, exit code and offending path.
fn classify(e: &anyhow::Error) -> (&'static str, u8, Option<PathBuf>) {
    use dualgraph::Error as E;
    if e.downcast_ref::<Usage>().is_some() {
        return ("usage", 2, None);
    }
    if let Some(c) = e.downcast_ref::<commands::ThresholdExceeded>() {
        return ("numerical", 4, c.0.clone());
    }
    match e.downcast_ref::<E>() {
        Some(err) if err.is_numerical() => ("numerical", 4, None),
        Some(E::Io { path, .. } | E::Manifest { path, .. } | E::MissingBlob { path, .. }) => {
            ("data", 3, Some(path.clone()))
        }
        Some(_) => ("data", 3, None),
        None => ("data", 3, None),
    }
}

/// Machine-readable error record on stderr, one line of JSON.
fn report(kind: &str, message: &str, path: Option<PathBuf>, code: u8) {
    let record = json!({
        "error": {
            "kind": kind,
            "message": message,
            "path": path,
            "exit_code": code,
        }
    });
    eprintln!("{record}");
}
