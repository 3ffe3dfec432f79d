//! Feedforward inter-frame compression for sequences of 3D Gaussian-splat
//! frames.
//!
//! A group of frames starts with a losslessly stored I-frame. Every P-frame is
//! coded as the motion of a sparse set of control points relative to the
//! decoder's reconstruction of the previous frame, entropy coded with a
//! hyperprior and a spatial context, and spread back to all Gaussians by
//! distance-weighted compensation followed by a bit-free colour refinement.

#![allow(clippy::needless_range_loop)]

pub mod coder;
pub mod compensate;
pub mod config;
pub mod entropy;
pub mod error;
pub mod frame;
pub mod geometry;
pub mod model;
pub mod motion;
pub mod nn;
pub mod pipeline;
pub mod render;
pub mod scalar;
pub mod train;

pub use coder::{read_bitstream, write_bitstream, Bitstream, FrameRecord};
pub use config::{CodecConfig, CompensationMode, RefineTarget};
pub use error::{Error, Result};
pub use frame::{load_frame, save_frame, GaussianFrame, GroupOfFrames};
pub use model::CodecModel;
pub use pipeline::{decode_gof, decode_sequence, encode_gof, encode_sequence, segment_sequence};
pub use scalar::Scalar;

/// Storage precision: frames on disk and rendered images.
pub type Frame = GaussianFrame<f32>;
/// Working precision used by training and coding.
pub type Frame64 = GaussianFrame<f64>;
pub type Gof = GroupOfFrames<f32>;
pub type Gof64 = GroupOfFrames<f64>;
pub type Image = render::Image<f32>;
pub type Net = nn::DenseNet<f64>;
pub type Grid = nn::HashGrid<f64>;
pub type ControlPoints = geometry::ControlPointSet<f64>;
