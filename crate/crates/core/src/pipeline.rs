//! Group-of-frames encoder and decoder.
//!
//! Both sides keep a [`ReferenceBuffer`] holding the previous
//! reconstruction. The encoder decodes its own output to advance the
//! buffer, so the two never diverge.

use ndarray::{s, Array2, Axis};
use rayon::prelude::*;

use crate::coder::{decode_symbols, encode_symbols, Bitstream, FrameRecord, SymbolModel};
use crate::compensate::{apply_motion, compensation_weights, refine_colors, CompensationPlan};
use crate::config::CodecConfig;
use crate::entropy::{bits, gaussian_likelihood, predict_params, spatial_temporal_context, EntropyParams};
use crate::error::{Error, Result};
use crate::frame::{decode_frame, encode_frame, validate_frame, GaussianFrame, GroupOfFrames};
use crate::geometry::{fps, gather_control_points, knn, Aabb, ControlPointSet};
use crate::model::CodecModel;
use crate::motion::{analysis, extract_features, motion_from_features, rows_to_motions, synthesis, MotionPacket};
use crate::nn::DenseNet;

/// Margin added around the I-frame positions when normalizing a GoF.
pub const BBOX_MARGIN: f64 = 0.05;
const CHUNK: usize = 256;

/// The previous reconstruction and everything derived from it.
#[derive(Clone, Debug)]
pub struct ReferenceBuffer {
    pub frame: GaussianFrame<f64>,
    pub bbox: Aabb,
    pub control: ControlPointSet<f64>,
    pub plan: CompensationPlan,
    /// Context features of every Gaussian (`N × context_dim`).
    pub context: Array2<f64>,
    /// Colour residuals predicted from `context`.
    pub residuals: Array2<f64>,
}

impl ReferenceBuffer {
    pub fn new(model: &CodecModel, frame: GaussianFrame<f64>, bbox: Aabb) -> Result<Self> {
        let (control, plan) = control_plan(&model.config, &frame)?;
        let context = spatial_temporal_context(
            &model.grid,
            &model.pos_ctx,
            &model.attr_ctx,
            &bbox,
            &frame.positions,
            &frame.rotations,
        )?;
        let residuals = infer_chunked(&model.refine, &context)?;
        Ok(ReferenceBuffer { frame, bbox, control, plan, context, residuals })
    }

    /// Context rows of the control points.
    pub fn control_context(&self) -> Array2<f64> {
        self.context.select(Axis(0), &self.control.indices)
    }

    /// Motion compensation followed by colour refinement.
    pub fn reconstruct(&self, model: &CodecModel, motion: &Array2<f64>) -> Result<GaussianFrame<f64>> {
        let moved = apply_motion(&self.frame, &self.plan, &rows_to_motions(motion))?;
        refine_colors(&moved, self.residuals.view(), model.config.refine_target)
    }
}

/// Control points (FPS from index 0) and their neighbour weights.
pub fn control_plan(cfg: &CodecConfig, frame: &GaussianFrame<f64>) -> Result<(ControlPointSet<f64>, CompensationPlan)> {
    let n = frame.len();
    if n == 0 {
        return Err(Error::EmptyFrame);
    }
    let indices = fps(&frame.positions, cfg.control_points(n), 0)?;
    let control = gather_control_points(frame, &indices)?;
    let neighbors = knn(&control.positions, &frame.positions, cfg.knn_k.min(n))?;
    let plan = compensation_weights(neighbors, n, cfg.compensation_mode, cfg.distance_scale);
    Ok((control, plan))
}

pub(crate) fn infer_chunked(net: &DenseNet<f64>, x: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((x.nrows(), net.output_dim()));
    for start in (0..x.nrows()).step_by(CHUNK) {
        let end = (start + CHUNK).min(x.nrows());
        let y = net.infer(x.slice(s![start..end, ..]))?;
        out.slice_mut(s![start..end, ..]).assign(&y);
    }
    Ok(out)
}

/// Per-channel tables of the hyper-latent, fixed for a given model.
pub struct HyperTables(Vec<SymbolModel>);

impl HyperTables {
    pub fn new(model: &CodecModel) -> Self {
        let c = &model.config;
        HyperTables(
            (0..c.latent_dim)
                .map(|ch| SymbolModel::factorized(&model.prior, ch, c.quant_step, c.symbol_bound))
                .collect(),
        )
    }

    fn channel(&self, i: usize) -> &SymbolModel {
        &self.0[i % self.0.len()]
    }
}

/// Latent tables, one per element in row-major order.
fn latent_tables(params: &EntropyParams, q: f64, bound: u32) -> Vec<SymbolModel> {
    params.mu.iter().zip(params.sigma.iter()).map(|(&mu, &sigma)| SymbolModel::gaussian(mu, sigma, q, bound)).collect()
}

/// Lattice indices `round(v / q)`.
fn to_symbols(v: &Array2<f64>, q: f64, what: &str) -> Result<Vec<i32>> {
    v.iter()
        .map(|&x| {
            let k = (x / q).round();
            if !k.is_finite() || k.abs() > i32::MAX as f64 {
                return Err(Error::NonFinite(format!("{what} value {x} cannot be quantized")));
            }
            Ok(k as i32)
        })
        .collect()
}

fn from_symbols(symbols: &[i32], rows: usize, cols: usize, q: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(i, j)| symbols[i * cols + j] as f64 * q)
}

/// Everything the encoder learns about one P-frame.
#[derive(Clone, Debug)]
pub struct InterFrame {
    pub record: FrameRecord,
    pub packet: MotionPacket,
    pub params: EntropyParams,
    /// `Σ -log2 p` of the coded latents under the continuous model.
    pub estimated_bits: f64,
    pub reconstruction: GaussianFrame<f64>,
}

pub fn encode_p_frame(
    model: &CodecModel,
    hyper: &HyperTables,
    reference: &ReferenceBuffer,
    current: &GaussianFrame<f64>,
) -> Result<InterFrame> {
    let cfg = &model.config;
    let q = cfg.quant_step;
    if current.len() != reference.frame.len() {
        return Err(Error::InvalidFrame(format!(
            "frame has {} Gaussians, reference has {}",
            current.len(),
            reference.frame.len()
        )));
    }
    let idx = &reference.control.indices;
    let cur_attrs: Vec<[f64; 7]> = idx.iter().map(|&i| current.attributes(i)).collect();
    let y_cur = extract_features(&model.feature, &reference.bbox, &cur_attrs, cfg.freq_octaves)?;
    let y_ref = extract_features(&model.feature, &reference.bbox, &reference.control.attributes, cfg.freq_octaves)?;
    let motion = motion_from_features(&model.converter, &y_cur, &y_ref)?;
    let y = analysis(&model.analysis, &motion)?;
    let y_sym = to_symbols(&y, q, "latent")?;
    let (nc, latent) = y.dim();
    let y_hat = from_symbols(&y_sym, nc, latent, q);
    let z = model.hyper.infer(y.view())?;
    let z_sym = to_symbols(&z, q, "hyper-latent")?;
    let z_hat = from_symbols(&z_sym, nc, latent, q);
    let hyper_bytes = encode_symbols(&z_sym, |i| hyper.channel(i));
    let ctx = reference.control_context();
    let params = predict_params(&model.fusion, ctx.view(), z_hat.view())?;
    let tables = latent_tables(&params, q, cfg.symbol_bound);
    let latent_bytes = encode_symbols(&y_sym, |i| &tables[i]);

    let mut estimated_bits = 0.0;
    for ((&v, &mu), &sigma) in y_hat.iter().zip(params.mu.iter()).zip(params.sigma.iter()) {
        estimated_bits += bits(gaussian_likelihood(v, mu, sigma, q));
    }
    for (i, &v) in z_hat.iter().enumerate() {
        estimated_bits += bits(model.prior.likelihood(v, i % latent, q));
    }

    let decoded = synthesis(&model.synthesis, &y_hat)?;
    let reconstruction = reference.reconstruct(model, &decoded)?;
    Ok(InterFrame {
        record: FrameRecord::Inter { control_points: nc as u64, hyper: hyper_bytes, latent: latent_bytes },
        packet: MotionPacket { motion, y, y_hat, z, z_hat, decoded },
        params,
        estimated_bits,
        reconstruction,
    })
}

/// Decodes one P record against `reference`. Reads nothing but the record,
/// the reference and the model.
pub fn decode_p_frame(
    model: &CodecModel,
    hyper: &HyperTables,
    reference: &ReferenceBuffer,
    record: &FrameRecord,
) -> Result<GaussianFrame<f64>> {
    let cfg = &model.config;
    let q = cfg.quant_step;
    let FrameRecord::Inter { control_points, hyper: hyper_bytes, latent: latent_bytes } = record else {
        return Err(Error::CorruptStream("expected a P record".into()));
    };
    let nc = reference.control.len();
    if *control_points != nc as u64 {
        return Err(Error::CorruptStream(format!(
            "record declares {control_points} control points, reference yields {nc}"
        )));
    }
    let latent = cfg.latent_dim;
    let z_sym = decode_symbols(hyper_bytes, nc * latent, |i| hyper.channel(i))?;
    let z_hat = from_symbols(&z_sym, nc, latent, q);
    let ctx = reference.control_context();
    let params = predict_params(&model.fusion, ctx.view(), z_hat.view())?;
    let tables = latent_tables(&params, q, cfg.symbol_bound);
    let y_sym = decode_symbols(latent_bytes, nc * latent, |i| &tables[i])?;
    let y_hat = from_symbols(&y_sym, nc, latent, q);
    let decoded = synthesis(&model.synthesis, &y_hat)?;
    reference.reconstruct(model, &decoded)
}

fn check_frame(frame: &GaussianFrame<f32>) -> Result<()> {
    let report = validate_frame(frame);
    match report.violations.first() {
        None => Ok(()),
        Some(v) => Err(Error::InvalidFrame(format!(
            "Gaussian {} ({:?}): {} ({} violations)",
            v.index,
            v.field,
            v.message,
            report.violations.len()
        ))),
    }
}

/// Decodes an I record and prepares the buffer for the first P-frame.
fn intra_reference(model: &CodecModel, bytes: &[u8]) -> Result<ReferenceBuffer> {
    let (frame, _) = decode_frame(bytes)?;
    let frame = frame.cast::<f64>();
    let bbox = Aabb::around(&frame.positions, BBOX_MARGIN);
    ReferenceBuffer::new(model, frame, bbox)
}

/// Output of [`encode_gof`].
#[derive(Clone, Debug)]
pub struct EncodedGof {
    pub records: Vec<FrameRecord>,
    /// The encoder's own reconstruction of every frame, I-frame first.
    pub reconstructions: Vec<GaussianFrame<f64>>,
    pub inter: Vec<InterStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterStats {
    pub control_points: usize,
    pub estimated_bits: f64,
    pub payload_bytes: usize,
}

/// Encodes one GoF. `first_index` only labels errors.
pub fn encode_gof(model: &CodecModel, gof: &GroupOfFrames<f32>, first_index: usize) -> Result<EncodedGof> {
    let hyper = HyperTables::new(model);
    let n = gof.i_frame.len();
    for (t, f) in gof.frames().enumerate() {
        if f.len() != n {
            return Err(Error::InvalidFrame(format!("{} Gaussians where the I-frame has {n}", f.len()))
                .at_frame(first_index + t));
        }
        check_frame(f).map_err(|e| e.at_frame(first_index + t))?;
    }
    let intra = encode_frame(&gof.i_frame);
    let mut reference = intra_reference(model, &intra).map_err(|e| e.at_frame(first_index))?;
    let mut records = vec![FrameRecord::Intra(intra)];
    let mut reconstructions = vec![reference.frame.clone()];
    let mut inter = Vec::with_capacity(gof.p_frames.len());
    for (t, frame) in gof.p_frames.iter().enumerate() {
        let at = first_index + t + 1;
        let out = encode_p_frame(model, &hyper, &reference, &frame.cast::<f64>()).map_err(|e| e.at_frame(at))?;
        inter.push(InterStats {
            control_points: reference.control.len(),
            estimated_bits: out.estimated_bits,
            payload_bytes: out.record.payload_bytes(),
        });
        let bbox = reference.bbox;
        if t + 1 < gof.p_frames.len() {
            reference = ReferenceBuffer::new(model, out.reconstruction.clone(), bbox).map_err(|e| e.at_frame(at))?;
        }
        reconstructions.push(out.reconstruction);
        records.push(out.record);
    }
    Ok(EncodedGof { records, reconstructions, inter })
}

/// Decodes the records of one GoF. The first record must be intra.
pub fn decode_gof(model: &CodecModel, records: &[FrameRecord], first_index: usize) -> Result<GroupOfFrames<f64>> {
    let hyper = HyperTables::new(model);
    let Some(FrameRecord::Intra(bytes)) = records.first() else {
        return Err(Error::CorruptStream("group does not start with an I record".into()).at_frame(first_index));
    };
    let mut reference = intra_reference(model, bytes).map_err(|e| e.at_frame(first_index))?;
    let i_frame = reference.frame.clone();
    let mut p_frames = Vec::with_capacity(records.len() - 1);
    for (t, record) in records[1..].iter().enumerate() {
        let at = first_index + t + 1;
        let frame = decode_p_frame(model, &hyper, &reference, record).map_err(|e| e.at_frame(at))?;
        if t + 2 < records.len() {
            let bbox = reference.bbox;
            reference = ReferenceBuffer::new(model, frame.clone(), bbox).map_err(|e| e.at_frame(at))?;
        }
        p_frames.push(frame);
    }
    GroupOfFrames::new(i_frame, p_frames)
}

/// Consecutive chunks of `gof_length` frames; the last may be shorter.
pub fn segment_sequence<T: crate::scalar::Scalar>(
    frames: Vec<GaussianFrame<T>>,
    gof_length: usize,
) -> Result<Vec<GroupOfFrames<T>>> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("cannot segment an empty sequence".into()));
    }
    if gof_length == 0 {
        return Err(Error::InvalidArgument("GoF length must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(frames.len().div_ceil(gof_length));
    let mut iter = frames.into_iter().peekable();
    while iter.peek().is_some() {
        let mut chunk: Vec<_> = iter.by_ref().take(gof_length).collect();
        let p = chunk.split_off(1);
        out.push(GroupOfFrames::new(chunk.pop().expect("chunk is non-empty"), p)?);
    }
    Ok(out)
}

/// Start index of each GoF within the records of a stream.
pub fn gof_starts(records: &[FrameRecord]) -> Vec<usize> {
    records.iter().enumerate().filter(|(_, r)| r.is_intra()).map(|(i, _)| i).collect()
}

/// Encodes a whole sequence. GoFs are independent and run in parallel.
pub fn encode_sequence(model: &CodecModel, gofs: &[GroupOfFrames<f32>]) -> Result<(Bitstream, Vec<EncodedGof>)> {
    let mut firsts = Vec::with_capacity(gofs.len());
    let mut at = 0;
    for g in gofs {
        firsts.push(at);
        at += g.gof_length();
    }
    let encoded: Vec<EncodedGof> =
        gofs.par_iter().zip(firsts.par_iter()).map(|(g, &first)| encode_gof(model, g, first)).collect::<Result<_>>()?;
    let mut stream = Bitstream::new(model.digest());
    for e in &encoded {
        stream.frames.extend(e.records.iter().cloned());
    }
    Ok((stream, encoded))
}

/// Decodes every frame of `stream` after checking the config digest.
pub fn decode_sequence(model: &CodecModel, stream: &Bitstream) -> Result<Vec<GaussianFrame<f64>>> {
    stream.check_digest(&model.digest())?;
    if stream.frames.is_empty() {
        return Ok(Vec::new());
    }
    let starts = gof_starts(&stream.frames);
    if starts.first() != Some(&0) {
        return Err(Error::CorruptStream("stream does not start with an I record".into()).at_frame(0));
    }
    let bounds: Vec<(usize, usize)> = starts
        .iter()
        .zip(starts.iter().skip(1).chain(std::iter::once(&stream.frames.len())))
        .map(|(&a, &b)| (a, b))
        .collect();
    let gofs: Vec<GroupOfFrames<f64>> =
        bounds.par_iter().map(|&(a, b)| decode_gof(model, &stream.frames[a..b], a)).collect::<Result<_>>()?;
    Ok(gofs.into_iter().flat_map(|g| std::iter::once(g.i_frame).chain(g.p_frames)).collect())
}
