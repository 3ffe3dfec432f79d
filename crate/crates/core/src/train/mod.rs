//! Training: synthetic data, losses, the differentiable P-frame step and
//! the two-stage loop.

pub mod loss;
pub mod step;
pub mod synth;
pub mod trainer;

pub use loss::{param_distortion, param_distortion_grad, total_loss, DistortionMode, FrameGrad};
pub use step::{p_frame_step, DistortionTarget, LatentNoise, StepResult, TrainReference};
pub use synth::{standard_scenes, synth_scene, synth_sequence, MotionClass, RigidMotion, SynthScene, SynthSceneConfig};
pub use trainer::{
    coded_distortion, save_loss_log, train, write_loss_log, LossRecord, TrainSchedule, Trainer, TrainingSet, CLIP_NORM,
};
