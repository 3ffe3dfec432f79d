//! Per-frame rate and quality report.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::camera::Camera;
use super::metrics::{psnr, ssim};
use super::raster::{render, Image};
use crate::coder::Bitstream;
use crate::error::{Error, Result};
use crate::frame::GaussianFrame;
use crate::train::loss::param_distortion;
use crate::train::trainer::csv_error;

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub frame: usize,
    pub intra: bool,
    /// Payload bytes of the frame record.
    pub bytes: usize,
    pub param_err: f64,
    /// One entry per camera.
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl ReportRow {
    pub fn psnr_mean(&self) -> Option<f64> {
        mean(&self.psnr)
    }

    pub fn ssim_mean(&self) -> Option<f64> {
        mean(&self.ssim)
    }
}

pub fn render_views(frame: &GaussianFrame<f32>, cameras: &[Camera]) -> Vec<Image<f32>> {
    cameras.iter().map(|c| render(frame, c)).collect()
}

/// One row per frame. PSNR and SSIM compare renders of the original and the
/// decoded frame from every camera.
pub fn rd_report(
    original: &[GaussianFrame<f32>],
    decoded: &[GaussianFrame<f32>],
    stream: &Bitstream,
    cameras: &[Camera],
) -> Result<Vec<ReportRow>> {
    if original.len() != decoded.len() || original.len() != stream.frames.len() {
        return Err(Error::InvalidArgument(format!(
            "{} original frames, {} decoded frames, {} records",
            original.len(),
            decoded.len(),
            stream.frames.len()
        )));
    }
    (0..original.len())
        .into_par_iter()
        .map(|t| {
            let (a, b) = (&original[t], &decoded[t]);
            let param_err = param_distortion(&b.cast::<f64>(), &a.cast::<f64>()).map_err(|e| e.at_frame(t))?;
            let mut row = ReportRow {
                frame: t,
                intra: stream.frames[t].is_intra(),
                bytes: stream.frames[t].payload_bytes(),
                param_err,
                psnr: Vec::with_capacity(cameras.len()),
                ssim: Vec::with_capacity(cameras.len()),
            };
            for cam in cameras {
                let (ra, rb) = (render(a, cam), render(b, cam));
                row.psnr.push(psnr(&ra, &rb)?);
                row.ssim.push(ssim(&ra, &rb)?);
            }
            Ok(row)
        })
        .collect()
}

/// Column names for `views` cameras.
pub fn report_header(views: usize) -> Vec<String> {
    let mut h: Vec<String> =
        ["frame", "type", "bytes", "param_err", "psnr_mean", "ssim_mean"].iter().map(|s| s.to_string()).collect();
    h.extend((0..views).map(|k| format!("psnr_view_{k}")));
    h.extend((0..views).map(|k| format!("ssim_view_{k}")));
    h
}

pub fn write_report<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let views = rows.first().map_or(0, |r| r.psnr.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(report_header(views)).map_err(csv_error)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for r in rows {
        let mut rec = vec![
            r.frame.to_string(),
            if r.intra { "I" } else { "P" }.to_string(),
            r.bytes.to_string(),
            format!("{:e}", r.param_err),
            opt(r.psnr_mean()),
            opt(r.ssim_mean()),
        ];
        rec.extend(r.psnr.iter().map(|v| format!("{v:.6}")));
        rec.extend(r.ssim.iter().map(|v| format!("{v:.6}")));
        w.write_record(rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_report(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_report(rows, std::io::BufWriter::new(f))
}
