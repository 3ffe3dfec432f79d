use std::fs;
use std::path::{Path, PathBuf};

use dfcgs::render::{load_cameras, rd_report, render, save_cameras, save_report, Camera};
use dfcgs::train::{
    save_loss_log, standard_scenes, synth_scene, train, DistortionMode, SynthSceneConfig, TrainSchedule, TrainingSet,
};
use dfcgs::{
    decode_sequence, encode_sequence, load_frame, read_bitstream, save_frame, segment_sequence, write_bitstream,
    CodecConfig, CodecModel, Frame,
};
use thiserror::Error;

use crate::args::{Command, DecodeArgs, EncodeArgs, EvalArgs, SynthArgs, TrainArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<dfcgs::Error> for CliError {
    fn from(e: dfcgs::Error) -> Self {
        match e {
            dfcgs::Error::TrainingAborted { .. } | dfcgs::Error::NonFinite(_) => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Eval(a) => eval(a),
    }
}

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:05}.gfr")
}

/// Sorted `.gfr` files directly inside `dir`.
fn frame_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "gfr") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_sequence(dir: &Path) -> CliResult<Vec<Frame>> {
    let files = frame_files(dir)?;
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no .gfr frames", dir.display())));
    }
    files.iter().map(|p| load_frame(p).map_err(CliError::from)).collect()
}

/// The frames in `dir`, or one sequence per scene subdirectory.
fn load_scenes(dir: &Path) -> CliResult<Vec<Vec<Frame>>> {
    if !frame_files(dir)?.is_empty() {
        return Ok(vec![load_sequence(dir)?]);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_error(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    let mut scenes = Vec::new();
    for d in subdirs {
        if !frame_files(&d)?.is_empty() {
            scenes.push(load_sequence(&d)?);
        }
    }
    if scenes.is_empty() {
        return Err(CliError::Data(format!("{}: no frames or scene directories", dir.display())));
    }
    Ok(scenes)
}

fn write_sequence(dir: &Path, frames: &[Frame]) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    for (t, f) in frames.iter().enumerate() {
        save_frame(f, dir.join(frame_name(t)))?;
    }
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    if a.scenes == 0 || a.frames == 0 || a.gaussians == 0 {
        return Err(usage("--scenes, --frames and --gaussians must be positive"));
    }
    if a.views == 0 || a.image_size == 0 {
        return Err(usage("--views and --image-size must be positive"));
    }
    let presets = standard_scenes(a.gaussians, a.frames, a.seed);
    let configs: Vec<SynthSceneConfig> = (0..a.scenes)
        .map(|k| SynthSceneConfig { seed: a.seed.wrapping_add(k as u64), ..presets[k % presets.len()].clone() })
        .collect();
    let scenes = configs.iter().map(synth_scene).collect::<Result<Vec<_>, _>>()?;
    for (k, s) in scenes.iter().enumerate() {
        write_sequence(&a.out.join(format!("scene_{k:03}")), &s.frames)?;
    }
    let cameras = Camera::framing(&scenes[0].frames[0].positions, a.views, a.image_size)?;
    save_cameras(&cameras, a.out.join("cameras.txt"))?;
    println!("wrote {} scenes x {} frames to {}", a.scenes, a.frames, a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CliResult<()> {
    let config = CodecConfig {
        lambda_size: a.lambda_size,
        gof_length: a.gof,
        seed: a.seed,
        ..a.codec.apply(&CodecConfig::default())
    }
    .validated()
    .map_err(|e| usage(e.to_string()))?;
    let mut schedule = TrainSchedule {
        stage1_iters: a.iters1,
        stage2_iters: a.iters2,
        gof_length: a.gof,
        lr: a.lr,
        lambda_size: a.lambda_size,
        distortion: if a.image_loss { DistortionMode::Image } else { DistortionMode::Parameter },
        cameras: Vec::new(),
        seed: a.seed,
    };
    if a.cameras.is_some() && !a.image_loss {
        return Err(usage("--cameras requires --image-loss"));
    }
    schedule.validate().map_err(|e| usage(e.to_string()))?;
    let scenes = load_scenes(&a.data)?;
    if a.image_loss {
        schedule.cameras = match &a.cameras {
            Some(p) => load_cameras(p)?,
            None => Camera::framing(&scenes[0][0].positions, 3, 64)?,
        };
    }
    let data = TrainingSet::from_sequences(scenes, a.gof)?;
    let model = CodecModel::new(config)?;
    let (model, log) = train(model, &data, schedule)?;
    let bytes = model.save(&a.out)?;
    if let Some(p) = &a.loss_log {
        save_loss_log(&log, p)?;
    }
    if let Some(last) = log.last() {
        println!(
            "trained {} iterations: distortion {:.6}, rate {:.2} bits",
            log.len(),
            last.distortion,
            last.rate_bits
        );
    }
    println!("wrote {} ({bytes} bytes, config {})", a.out.display(), model.config.digest_hex());
    Ok(())
}

/// Rejects flags that disagree with the model's configuration.
fn check_model_config(model: &CodecModel, requested: CodecConfig) -> CliResult<()> {
    let requested = requested.validated().map_err(|e| usage(e.to_string()))?;
    let diff = model.config.diff(&requested);
    if diff.is_empty() {
        return Ok(());
    }
    Err(CliError::Data(format!(
        "config digest mismatch: model {} vs flags {}\n  {}",
        model.config.digest_hex(),
        requested.digest_hex(),
        diff.join("\n  ")
    )))
}

fn encode(a: EncodeArgs) -> CliResult<()> {
    if a.gof == 0 {
        return Err(usage("--gof must be positive"));
    }
    let model = CodecModel::load(&a.model)?;
    check_model_config(&model, a.codec.apply(&model.config))?;
    let frames = load_sequence(&a.frames)?;
    let count = frames.len();
    let gofs = segment_sequence(frames, a.gof)?;
    let (stream, _) = encode_sequence(&model, &gofs)?;
    let bytes = write_bitstream(&a.out, &stream)?;
    println!("encoded {count} frames in {} groups: {bytes} bytes", gofs.len());
    Ok(())
}

fn decode(a: DecodeArgs) -> CliResult<()> {
    let model = CodecModel::load(&a.model)?;
    let stream = read_bitstream(&a.input)?;
    let frames: Vec<Frame> = decode_sequence(&model, &stream)?.iter().map(|f| f.cast()).collect();
    write_sequence(&a.out, &frames)?;
    println!("decoded {} frames to {}", frames.len(), a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let original = load_sequence(&a.reference)?;
    let decoded = load_sequence(&a.recon)?;
    let stream = read_bitstream(&a.bitstream)?;
    let cameras = load_cameras(&a.cameras)?;
    let rows = rd_report(&original, &decoded, &stream, &cameras)?;
    save_report(&rows, &a.csv)?;
    if let Some(dir) = &a.render_dir {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        for (t, f) in decoded.iter().enumerate() {
            for (k, cam) in cameras.iter().enumerate() {
                render(f, cam).write_ppm(dir.join(format!("frame_{t:05}_view_{k}.ppm")))?;
            }
        }
    }
    let p: Vec<_> = rows.iter().filter(|r| !r.intra).collect();
    let bytes: usize = rows.iter().map(|r| r.bytes).sum();
    let psnr: Vec<f64> = p.iter().filter_map(|r| r.psnr_mean()).collect();
    print!("{} frames, {bytes} payload bytes", rows.len());
    if !psnr.is_empty() {
        print!(", mean P-frame PSNR {:.3} dB", psnr.iter().sum::<f64>() / psnr.len() as f64);
    }
    println!();
    Ok(())
}
