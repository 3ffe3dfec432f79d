//! Two-stage training loop.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::DistortionMode;
use super::step::{p_frame_step, prepare_targets, DistortionTarget, LatentNoise, TrainReference};
use crate::error::{Error, Result};
use crate::frame::{GaussianFrame, GroupOfFrames};
use crate::geometry::Aabb;
use crate::model::{CodecModel, ENTROPY_BLOCKS};
use crate::nn::AdamState;
use crate::pipeline::BBOX_MARGIN;
use crate::render::Camera;

/// Global gradient norm above which gradients are rescaled.
pub const CLIP_NORM: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSchedule {
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    pub gof_length: usize,
    pub lr: f64,
    /// Rate weight of stage 2. Stage 1 always uses zero.
    pub lambda_size: f64,
    pub distortion: DistortionMode,
    /// Training views of the image loss.
    pub cameras: Vec<Camera>,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            stage1_iters: 1000,
            stage2_iters: 2000,
            gof_length: 5,
            lr: 1e-3,
            lambda_size: 1e-3,
            distortion: DistortionMode::Parameter,
            cameras: Vec::new(),
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.gof_length < 2 {
            return Err(Error::InvalidConfig("training GoFs need at least one P-frame".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.lambda_size >= 0.0 && self.lambda_size.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda_size {} must be >= 0", self.lambda_size)));
        }
        if self.distortion == DistortionMode::Image && self.cameras.is_empty() {
            return Err(Error::InvalidConfig("image distortion needs training cameras".into()));
        }
        Ok(())
    }

    pub fn lambda_for(&self, stage: u8) -> f64 {
        if stage == 1 {
            0.0
        } else {
            self.lambda_size
        }
    }
}

/// One row of the loss log.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub iter: usize,
    pub stage: u8,
    pub distortion: f64,
    /// Rate term in bits per control point.
    pub rate_bits: f64,
    pub total: f64,
    pub lambda_size: f64,
}

pub const LOSS_LOG_HEADER: [&str; 6] = ["iter", "stage", "distortion", "rate_bits", "total", "lambda_size"];

pub fn write_loss_log<W: Write>(records: &[LossRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LOSS_LOG_HEADER).map_err(csv_error)?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            r.stage.to_string(),
            format!("{:e}", r.distortion),
            format!("{:e}", r.rate_bits),
            format!("{:e}", r.total),
            format!("{:e}", r.lambda_size),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_loss_log(records: &[LossRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_loss_log(records, std::io::BufWriter::new(f))
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Stream(e),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

/// Scenes of training GoFs, sampled round-robin across scenes.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub scenes: Vec<Vec<GroupOfFrames<f64>>>,
}

impl TrainingSet {
    pub fn new(scenes: Vec<Vec<GroupOfFrames<f64>>>) -> Result<Self> {
        let scenes: Vec<_> = scenes
            .into_iter()
            .map(|s| s.into_iter().filter(|g| !g.p_frames.is_empty()).collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect();
        if scenes.is_empty() {
            return Err(Error::InvalidArgument("training data has no GoF with a P-frame".into()));
        }
        Ok(TrainingSet { scenes })
    }

    /// Cuts storage-precision sequences into GoFs.
    pub fn from_sequences(sequences: Vec<Vec<GaussianFrame<f32>>>, gof_length: usize) -> Result<Self> {
        let scenes = sequences
            .into_iter()
            .map(|s| {
                let frames = s.iter().map(|f| f.cast::<f64>()).collect();
                crate::pipeline::segment_sequence(frames, gof_length)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(scenes)
    }
}

/// Mutable training state. After an error, `model` holds the last
/// parameters that produced a finite loss and `log` the completed rows.
#[derive(Clone)]
pub struct Trainer {
    pub model: CodecModel,
    pub schedule: TrainSchedule,
    pub log: Vec<LossRecord>,
    grads: CodecModel,
    adam: AdamState<f64>,
    frozen_in_stage1: Vec<bool>,
    rng: ChaCha8Rng,
    orders: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    iter: usize,
}

impl Trainer {
    pub fn new(model: CodecModel, schedule: TrainSchedule) -> Result<Self> {
        schedule.validate()?;
        let sizes: Vec<usize> = model.blocks().iter().map(|b| b.2.len()).collect();
        let frozen_in_stage1 =
            model.blocks().iter().map(|b| ENTROPY_BLOCKS.iter().any(|p| b.0.starts_with(p))).collect();
        Ok(Trainer {
            grads: model.zeros_like(),
            adam: AdamState::new(schedule.lr, &sizes),
            rng: ChaCha8Rng::seed_from_u64(schedule.seed),
            model,
            schedule,
            log: Vec::new(),
            frozen_in_stage1,
            orders: Vec::new(),
            cursors: Vec::new(),
            iter: 0,
        })
    }

    fn next_gof<'a>(&mut self, data: &'a TrainingSet) -> &'a GroupOfFrames<f64> {
        if self.orders.len() != data.scenes.len() {
            self.orders = data.scenes.iter().map(|s| (0..s.len()).collect()).collect();
            self.cursors = vec![usize::MAX; data.scenes.len()];
        }
        let s = self.iter % data.scenes.len();
        if self.cursors[s] >= self.orders[s].len() {
            self.orders[s].shuffle(&mut self.rng);
            self.cursors[s] = 0;
        }
        let g = self.orders[s][self.cursors[s]];
        self.cursors[s] += 1;
        &data.scenes[s][g]
    }

    /// Forward and backward over one GoF. Fills `self.grads`.
    fn gof_loss(&mut self, gof: &GroupOfFrames<f64>, lambda: f64) -> Result<(f64, f64, f64)> {
        for (_, _, d) in self.grads.blocks_mut() {
            d.fill(0.0);
        }
        let cfg = &self.model.config;
        let bbox = Aabb::around(&gof.i_frame.positions, BBOX_MARGIN);
        let share = 1.0 / gof.p_frames.len() as f64;
        let mut reference = gof.i_frame.clone();
        let (mut d, mut r, mut t) = (0.0, 0.0, 0.0);
        for frame in &gof.p_frames {
            let tr = TrainReference::new(&self.model, reference, bbox)?;
            let noise = LatentNoise::sample(tr.control.len(), cfg.latent_dim, cfg.quant_step, &mut self.rng);
            let images = prepare_targets(self.schedule.distortion, frame, &self.schedule.cameras)?;
            let target = match self.schedule.distortion {
                DistortionMode::Parameter => DistortionTarget::Parameter(frame),
                DistortionMode::Image => {
                    DistortionTarget::Image { frame, cameras: &self.schedule.cameras, images: &images }
                }
            };
            let out = p_frame_step(&self.model, &tr, &target, Some(&noise), lambda, share, Some(&mut self.grads))?;
            d += share * out.distortion;
            r += share * out.rate;
            t += share * out.total;
            reference = out.reconstruction;
        }
        Ok((d, r, t))
    }

    /// Runs one iteration of `stage` and appends its log row.
    pub fn step(&mut self, data: &TrainingSet, stage: u8) -> Result<LossRecord> {
        let lambda = self.schedule.lambda_for(stage);
        let gof = self.next_gof(data);
        let iteration = self.iter;
        let abort = |reason: String| Error::TrainingAborted { iteration, reason };
        let (distortion, rate_bits, total) = self.gof_loss(gof, lambda).map_err(|e| abort(e.to_string()))?;
        let active: Vec<bool> = self.frozen_in_stage1.iter().map(|&f| stage != 1 || !f).collect();
        let grads = self.grads.blocks();
        let sq: f64 =
            grads.iter().zip(&active).filter(|(_, &a)| a).map(|(b, _)| b.2.iter().map(|v| v * v).sum::<f64>()).sum();
        if !sq.is_finite() {
            return Err(abort("non-finite gradient".into()));
        }
        let clip = if sq.sqrt() > CLIP_NORM { CLIP_NORM / sq.sqrt() } else { 1.0 };
        let scaled: Vec<Vec<f64>> = grads
            .iter()
            .zip(&active)
            .map(|(b, &a)| if a && clip != 1.0 { b.2.iter().map(|v| v * clip).collect() } else { Vec::new() })
            .collect();
        for (block, (((_, _, params), g), &a)) in
            self.model.blocks_mut().into_iter().zip(&grads).zip(&active).enumerate()
        {
            if !a {
                continue;
            }
            let g = if clip != 1.0 { &scaled[block][..] } else { g.2 };
            self.adam.step_block(block, params, g).map_err(|e| abort(e.to_string()))?;
        }
        let record = LossRecord { iter: iteration, stage, distortion, rate_bits, total, lambda_size: lambda };
        self.log.push(record.clone());
        self.iter += 1;
        Ok(record)
    }

    /// Runs both stages.
    pub fn run(&mut self, data: &TrainingSet) -> Result<()> {
        for _ in 0..self.schedule.stage1_iters {
            self.step(data, 1)?;
        }
        for _ in 0..self.schedule.stage2_iters {
            self.step(data, 2)?;
        }
        Ok(())
    }
}

/// Trains `model` on `data` under `schedule`.
pub fn train(model: CodecModel, data: &TrainingSet, schedule: TrainSchedule) -> Result<(CodecModel, Vec<LossRecord>)> {
    let mut t = Trainer::new(model, schedule)?;
    t.run(data)?;
    Ok((t.model, t.log))
}

/// Mean parameter distortion of the P-frames after closed-loop coding.
pub fn coded_distortion(model: &CodecModel, gofs: &[GroupOfFrames<f32>]) -> Result<f64> {
    let (_, encoded) = crate::pipeline::encode_sequence(model, gofs)?;
    let mut sum = 0.0;
    let mut count = 0;
    for (g, e) in gofs.iter().zip(&encoded) {
        for (f, r) in g.p_frames.iter().zip(&e.reconstructions[1..]) {
            sum += super::loss::param_distortion(r, &f.cast::<f64>())?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no P-frames to measure".into()));
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::small_config;
    use crate::train::synth::{synth_scene, SynthSceneConfig};

    fn data() -> TrainingSet {
        let seqs = (0..2)
            .map(|s| {
                synth_scene(&SynthSceneConfig { n_gaussians: 60, n_frames: 6, seed: s, ..SynthSceneConfig::default() })
                    .unwrap()
                    .frames
            })
            .collect();
        TrainingSet::from_sequences(seqs, 3).unwrap()
    }

    fn schedule(s1: usize, s2: usize) -> TrainSchedule {
        TrainSchedule { stage1_iters: s1, stage2_iters: s2, gof_length: 3, seed: 4, ..TrainSchedule::default() }
    }

    #[test]
    fn zero_iterations_leave_the_model() {
        let m = CodecModel::new(small_config()).unwrap();
        let (t, log) = train(m.clone(), &data(), schedule(0, 0)).unwrap();
        assert_eq!(t, m);
        assert!(log.is_empty());
    }

    #[test]
    fn stage_one_freezes_entropy_blocks() {
        let m = CodecModel::new(small_config()).unwrap();
        let (t, log) = train(m.clone(), &data(), schedule(3, 0)).unwrap();
        let before = m.blocks();
        let after = t.blocks();
        let mut moved = 0;
        for (a, b) in before.iter().zip(&after) {
            if ENTROPY_BLOCKS.iter().any(|p| a.0.starts_with(p)) {
                assert_eq!(a.2, b.2, "{} moved in stage 1", a.0);
            } else if a.2 != b.2 {
                moved += 1;
            }
        }
        assert!(moved > 0);
        assert!(log.iter().all(|r| r.stage == 1 && r.lambda_size == 0.0 && r.total == r.distortion));
        let (t2, log2) = train(t, &data(), schedule(0, 2)).unwrap();
        assert!(log2.iter().all(|r| r.stage == 2 && r.lambda_size == 1e-3));
        assert!(t2.prior.blocks().iter().zip(m.prior.blocks()).any(|(a, b)| a.2 != b.2));
    }

    #[test]
    fn loss_log_is_deterministic() {
        let m = CodecModel::new(small_config()).unwrap();
        let (_, a) = train(m.clone(), &data(), schedule(2, 2)).unwrap();
        let (_, b) = train(m, &data(), schedule(2, 2)).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_loss_log(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,stage,distortion,rate_bits,total,lambda_size\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn round_robin_over_scenes() {
        let d = data();
        let mut t = Trainer::new(CodecModel::new(small_config()).unwrap(), schedule(0, 0)).unwrap();
        let picks: Vec<*const GroupOfFrames<f64>> = (0..4)
            .map(|_| {
                let g = t.next_gof(&d) as *const _;
                t.iter += 1;
                g
            })
            .collect();
        let scene_of =
            |p: *const GroupOfFrames<f64>| d.scenes.iter().position(|s| s.iter().any(|g| std::ptr::eq(g, p))).unwrap();
        assert_eq!(picks.iter().map(|&p| scene_of(p)).collect::<Vec<_>>(), vec![0, 1, 0, 1]);
        assert_ne!(picks[0], picks[2]);
    }

    #[test]
    fn image_mode_needs_cameras() {
        let s = TrainSchedule { distortion: DistortionMode::Image, ..schedule(1, 0) };
        assert!(Trainer::new(CodecModel::new(small_config()).unwrap(), s).is_err());
    }
}
