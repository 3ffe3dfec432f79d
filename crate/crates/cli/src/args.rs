use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dfcgs::{CodecConfig, CompensationMode, RefineTarget};

#[derive(Debug, Parser)]
#[command(name = "dfcgs", version, about = "Inter-frame codec for Gaussian-splat sequences")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate seeded synthetic scenes as frame directories.
    Synth(SynthArgs),
    /// Train a codec model on frame directories.
    Train(TrainArgs),
    /// Encode a frame directory into a bitstream.
    Encode(EncodeArgs),
    /// Decode a bitstream into a frame directory.
    Decode(DecodeArgs),
    /// Per-frame rate and quality report.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub scenes: usize,
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(long, default_value_t = 1000)]
    pub gaussians: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Views written to `cameras.txt`.
    #[arg(long, default_value_t = 3)]
    pub views: usize,
    #[arg(long, default_value_t = 128)]
    pub image_size: usize,
}

/// Codec options. Unset options keep the model's value (encode) or the
/// reference defaults (train).
#[derive(Debug, Default, Args)]
pub struct CodecArgs {
    /// Control-point divisor M.
    #[arg(long)]
    pub downscale: Option<usize>,
    /// Neighbours K per control point.
    #[arg(long)]
    pub knn: Option<usize>,
    /// Hash-grid levels L.
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub quant_step: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// per-control-point or per-gaussian.
    #[arg(long, value_parser = parse_mode)]
    pub compensation: Option<CompensationMode>,
    #[arg(long)]
    pub distance_scale: Option<f64>,
    /// dc or full.
    #[arg(long, value_parser = parse_refine)]
    pub refine: Option<RefineTarget>,
}

fn parse_mode(s: &str) -> Result<CompensationMode, String> {
    s.parse().map_err(|e: dfcgs::Error| e.to_string())
}

fn parse_refine(s: &str) -> Result<RefineTarget, String> {
    s.parse().map_err(|e: dfcgs::Error| e.to_string())
}

impl CodecArgs {
    pub fn apply(&self, base: &CodecConfig) -> CodecConfig {
        let mut c = base.clone();
        if let Some(v) = self.downscale {
            c.downscale_factor = v;
        }
        if let Some(v) = self.knn {
            c.knn_k = v;
        }
        if let Some(v) = self.levels {
            c.hashgrid_levels = v;
        }
        if let Some(v) = self.quant_step {
            c.quant_step = v;
        }
        if let Some(v) = self.latent_dim {
            c.latent_dim = v;
        }
        if let Some(v) = self.compensation {
            c.compensation_mode = v;
        }
        if let Some(v) = self.distance_scale {
            c.distance_scale = v;
        }
        if let Some(v) = self.refine {
            c.refine_target = v;
        }
        c
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// A directory of `.gfr` frames, or of scene subdirectories.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda_size: f64,
    #[arg(long, default_value_t = 5)]
    pub gof: usize,
    #[arg(long, default_value_t = 1000)]
    pub iters1: usize,
    #[arg(long, default_value_t = 2000)]
    pub iters2: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train on rendered images instead of parameters.
    #[arg(long)]
    pub image_loss: bool,
    /// Training cameras for `--image-loss`; defaults to an orbit at 64x64.
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    /// Per-iteration loss CSV.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    #[command(flatten)]
    pub codec: CodecArgs,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub gof: usize,
    #[command(flatten)]
    pub codec: CodecArgs,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub recon: PathBuf,
    #[arg(long)]
    pub bitstream: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    #[arg(long)]
    pub csv: PathBuf,
    /// Writes PPM renders of the reconstruction.
    #[arg(long)]
    pub render_dir: Option<PathBuf>,
}
