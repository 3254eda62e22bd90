//! The `uhrseg` command line.
//!
//! Exit status is 0 on success, 1 when the arguments do not parse and 2 when
//! the inputs are rejected. Diagnostics go to standard error as one JSON
//! object per line; results go to the declared output paths or, for the
//! commands that print, to standard output.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::richness::{DEFAULT_MIN_AREA, DEFAULT_Q, DEFAULT_REGION_COUNT, DEFAULT_REGION_SIZE};
use crate::tiler::{DEFAULT_OVERLAP, DEFAULT_PATCH};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "uhrseg", version, about = "Wavelet tools for ultra-high-resolution segmentation")]
pub struct Cli {
    /// Worker threads; 0 lets the runtime decide. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Multilevel Haar transform of a PNG or raw tensor, in Mallat layout.
    Dwt(DwtArgs),
    /// Inverse of `dwt`.
    Idwt(IdwtArgs),
    /// Laplacian residuals of an image.
    Pyramid(PyramidArgs),
    /// Wavelet smooth loss between two raw tensors.
    Wsl(WslArgs),
    /// Scene context richness of a directory of label maps.
    Richness(RichnessArgs),
    /// Cut an image into overlapping patches.
    Tile(TileArgs),
    /// Reassemble patches produced by `tile`.
    Merge(MergeArgs),
    /// Compare predicted and ground-truth label maps.
    Eval(EvalArgs),
    /// Train the toy network on generated scenes.
    TrainToy(TrainToyArgs),
    /// Segment an image with a toy-network checkpoint.
    InferToy(InferToyArgs),
}

#[derive(Debug, Args)]
pub struct DwtArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Raw tensor output; a `<out>.json` sidecar records the original size.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
}

#[derive(Debug, Args)]
pub struct IdwtArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// `.png` or `.utsr`.
    #[arg(long)]
    pub out: PathBuf,
    /// Needed only when the input has no sidecar.
    #[arg(long)]
    pub levels: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PyramidArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub levels: usize,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long, default_value_t = 1.0)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 0.8)]
    pub lambda2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda3: f64,
    /// Wavelet packet depth of the smooth loss.
    #[arg(long, default_value_t = 3)]
    pub wsl_levels: usize,
}

impl LossArgs {
    fn weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            depth: self.wsl_levels,
        }
    }
}

#[derive(Debug, Args)]
pub struct WslArgs {
    /// Reference tensor.
    #[arg(long)]
    pub a: PathBuf,
    /// Reconstruction.
    #[arg(long)]
    pub b: PathBuf,
    #[command(flatten)]
    pub loss: LossArgs,
}

#[derive(Debug, Args)]
pub struct RichnessArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_Q)]
    pub q: f64,
    /// Square region side, clamped to each map's size.
    #[arg(long, default_value_t = DEFAULT_REGION_SIZE)]
    pub region_size: usize,
    #[arg(long, default_value_t = DEFAULT_REGION_COUNT)]
    pub regions: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
    pub min_area: usize,
    /// Inferred from the largest label when absent.
    #[arg(long)]
    pub num_categories: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TileArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PATCH)]
    pub patch: usize,
    #[arg(long, default_value_t = DEFAULT_OVERLAP)]
    pub overlap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MergeKind {
    /// Grayscale label PNG patches, majority vote.
    Labels,
    /// Raw tensor logit patches, averaged.
    Logits,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long)]
    pub plan: PathBuf,
    /// Directory holding `patch_NNNN.png` or `patch_NNNN.utsr`.
    #[arg(long)]
    pub patches: PathBuf,
    #[arg(long, value_enum, default_value_t = MergeKind::Labels)]
    pub kind: MergeKind,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub num_categories: usize,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub scenes: usize,
    /// Scene side; a multiple of 32.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 4)]
    pub num_categories: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Emit a progress event every this many iterations; 0 disables them.
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
    #[command(flatten)]
    pub loss: LossArgs,
}

#[derive(Debug, Args)]
pub struct InferToyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Label PNG.
    #[arg(long)]
    pub out: PathBuf,
}

/// Writes one diagnostic event to standard error.
pub(crate) fn event(name: &str, fields: Value) {
    let mut obj = json!({ "event": name });
    if let (Some(o), Value::Object(extra)) = (obj.as_object_mut(), fields) {
        o.extend(extra);
    }
    eprintln!("{obj}");
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return EXIT_OK;
            }
            let mut root = Cli::command();
            let name = args
                .iter()
                .skip(1)
                .filter_map(|a| a.to_str())
                .find(|a| root.find_subcommand(a).is_some());
            if let Some(sub) = name.and_then(|n| root.find_subcommand_mut(n)) {
                eprintln!("\n{}", sub.render_help());
            }
            return EXIT_USAGE;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            event("error", json!({ "kind": e.kind(), "message": e.to_string() }));
            EXIT_DATA
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Dwt(a) => commands::dwt(a),
        Command::Idwt(a) => commands::idwt(a),
        Command::Pyramid(a) => commands::pyramid(a),
        Command::Wsl(a) => commands::wsl(a),
        Command::Richness(a) => commands::richness(a),
        Command::Tile(a) => commands::tile(a),
        Command::Merge(a) => commands::merge(a),
        Command::Eval(a) => commands::eval(a),
        Command::TrainToy(a) => commands::train_toy(a),
        Command::InferToy(a) => commands::infer_toy(a),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["uhrseg", "dwt", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["uhrseg", "frobnicate"]), EXIT_USAGE);
    }

    #[test]
    fn data_errors_exit_two() {
        assert_eq!(
            run(["uhrseg", "dwt", "--in", "/nonexistent/x.png", "--out", "/nonexistent/y.utsr"]),
            EXIT_DATA
        );
    }
}
