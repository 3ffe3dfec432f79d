//! Gaussian frames, groups of frames and the `.gfr` container.
//!
//! A `.gfr` file is a 16-byte header (`"GFRM"`, `u32` version, `u64` count)
//! followed by little-endian `f32` arrays: positions `[3N]`, rotations `[4N]`
//! stored `(w, x, y, z)`, scales `[3N]`, opacities `[N]` and SH coefficients
//! `[48N]` (DC triple first, then ascending degree, three channels per
//! coefficient). All values are stored activated.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

pub const SH_COEFFS: usize = 48;
pub const GFR_MAGIC: [u8; 4] = *b"GFRM";
pub const GFR_VERSION: u32 = 1;
pub const GFR_HEADER_BYTES: usize = 16;
/// 3 + 4 + 3 + 1 + 48 scalars per Gaussian.
pub const FLOATS_PER_GAUSSIAN: usize = 59;

/// Deviation from unit norm accepted as-is on load.
pub const QUAT_UNIT_TOL: f64 = 1e-6;
/// Largest deviation that is silently renormalized on load.
pub const QUAT_RENORM_TOL: f64 = 1e-3;

/// One time step of a Gaussian-splat scene.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFrame<T> {
    pub positions: Vec<[T; 3]>,
    /// Unit quaternions, `(w, x, y, z)`.
    pub rotations: Vec<[T; 4]>,
    pub scales: Vec<[T; 3]>,
    pub opacities: Vec<T>,
    pub sh: Vec<[T; SH_COEFFS]>,
}

impl<T: Scalar> GaussianFrame<T> {
    pub fn empty() -> Self {
        GaussianFrame {
            positions: Vec::new(),
            rotations: Vec::new(),
            scales: Vec::new(),
            opacities: Vec::new(),
            sh: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> GaussianFrame<U> {
        fn arr<A: Scalar, B: Scalar, const K: usize>(v: &[[A; K]]) -> Vec<[B; K]> {
            v.iter().map(|a| a.map(cast)).collect()
        }
        GaussianFrame {
            positions: arr(&self.positions),
            rotations: arr(&self.rotations),
            scales: arr(&self.scales),
            opacities: self.opacities.iter().map(|&o| cast(o)).collect(),
            sh: arr(&self.sh),
        }
    }

    /// Geometry attributes `(μ, q)` of Gaussian `i`.
    pub fn attributes(&self, i: usize) -> [T; 7] {
        let p = self.positions[i];
        let q = self.rotations[i];
        [p[0], p[1], p[2], q[0], q[1], q[2], q[3]]
    }
}

/// An I-frame followed by P-frames coded against reconstructed references.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupOfFrames<T> {
    pub i_frame: GaussianFrame<T>,
    pub p_frames: Vec<GaussianFrame<T>>,
}

impl<T: Scalar> GroupOfFrames<T> {
    pub fn new(i_frame: GaussianFrame<T>, p_frames: Vec<GaussianFrame<T>>) -> Result<Self> {
        let n = i_frame.len();
        for (t, f) in p_frames.iter().enumerate() {
            if f.len() != n {
                return Err(Error::InvalidFrame(format!(
                    "P-frame {} has {} Gaussians, I-frame has {n}",
                    t + 1,
                    f.len()
                )));
            }
        }
        Ok(GroupOfFrames { i_frame, p_frames })
    }

    pub fn gof_length(&self) -> usize {
        1 + self.p_frames.len()
    }

    pub fn frames(&self) -> impl Iterator<Item = &GaussianFrame<T>> {
        std::iter::once(&self.i_frame).chain(self.p_frames.iter())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Position,
    Rotation,
    Scale,
    Opacity,
    Sh,
    Count,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub field: Field,
    pub message: String,
}

/// Every invariant violation found in a frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, index: usize, field: Field, message: impl Into<String>) {
        self.violations.push(Violation { index, field, message: message.into() });
    }
}

fn quat_norm<T: Scalar>(q: &[T; 4]) -> f64 {
    q.iter()
        .map(|c| {
            let c = c.to_f64_lossy();
            c * c
        })
        .sum::<f64>()
        .sqrt()
}

pub fn validate_frame<T: Scalar>(frame: &GaussianFrame<T>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = frame.positions.len();
    let lens = [
        (Field::Rotation, frame.rotations.len()),
        (Field::Scale, frame.scales.len()),
        (Field::Opacity, frame.opacities.len()),
        (Field::Sh, frame.sh.len()),
    ];
    for (field, len) in lens {
        if len != n {
            report.push(0, Field::Count, format!("{field:?} has {len} entries, expected {n}"));
        }
    }
    if !report.is_valid() {
        return report;
    }
    for i in 0..n {
        if frame.positions[i].iter().any(|v| !v.is_finite()) {
            report.push(i, Field::Position, "non-finite value");
        }
        let q = &frame.rotations[i];
        if q.iter().any(|v| !v.is_finite()) {
            report.push(i, Field::Rotation, "non-finite value");
        } else {
            let dev = (quat_norm(q) - 1.0).abs();
            if dev > QUAT_UNIT_TOL {
                report.push(i, Field::Rotation, format!("quaternion norm deviation {dev:e}"));
            }
        }
        let s = &frame.scales[i];
        if s.iter().any(|v| !v.is_finite()) {
            report.push(i, Field::Scale, "non-finite value");
        } else if s.iter().any(|&v| v <= T::zero()) {
            report.push(i, Field::Scale, "scale must be strictly positive");
        }
        let o = frame.opacities[i];
        if !o.is_finite() {
            report.push(i, Field::Opacity, "non-finite value");
        } else if o < T::zero() || o > T::one() {
            report.push(i, Field::Opacity, format!("opacity {o} outside [0, 1]"));
        }
        if frame.sh[i].iter().any(|v| !v.is_finite()) {
            report.push(i, Field::Sh, "non-finite value");
        }
    }
    report
}

/// What loading had to fix up.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadReport {
    pub max_quat_deviation: f64,
    pub renormalized: usize,
}

pub fn container_size(n: usize) -> usize {
    GFR_HEADER_BYTES + n * FLOATS_PER_GAUSSIAN * 4
}

pub fn encode_frame(frame: &GaussianFrame<f32>) -> Vec<u8> {
    let n = frame.len();
    let mut out = Vec::with_capacity(container_size(n));
    out.extend_from_slice(&GFR_MAGIC);
    out.extend_from_slice(&GFR_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    let mut put = |v: f32| out.extend_from_slice(&v.to_le_bytes());
    frame.positions.iter().flatten().for_each(|&v| put(v));
    frame.rotations.iter().flatten().for_each(|&v| put(v));
    frame.scales.iter().flatten().for_each(|&v| put(v));
    frame.opacities.iter().for_each(|&v| put(v));
    frame.sh.iter().flatten().for_each(|&v| put(v));
    out
}

fn chunks<const K: usize>(data: &[f32]) -> Vec<[f32; K]> {
    data.chunks_exact(K).map(|c| c.try_into().expect("chunk length")).collect()
}

/// Parses and validates a `.gfr` byte buffer.
pub fn decode_frame(bytes: &[u8]) -> Result<(GaussianFrame<f32>, LoadReport)> {
    if bytes.len() < GFR_HEADER_BYTES {
        return Err(Error::InvalidFrame(format!(
            "container holds {} bytes, header needs {GFR_HEADER_BYTES}",
            bytes.len()
        )));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != GFR_MAGIC {
        return Err(Error::BadMagic { expected: GFR_MAGIC, found: magic });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != GFR_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if n == 0 {
        return Err(Error::EmptyFrame);
    }
    let n = usize::try_from(n).map_err(|_| Error::InvalidFrame("count overflows".into()))?;
    let expected = n
        .checked_mul(FLOATS_PER_GAUSSIAN * 4)
        .and_then(|b| b.checked_add(GFR_HEADER_BYTES))
        .ok_or_else(|| Error::InvalidFrame("count overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::InvalidFrame(format!(
            "header declares {n} Gaussians ({expected} bytes) but container holds {} bytes",
            bytes.len()
        )));
    }
    let floats: Vec<f32> =
        bytes[GFR_HEADER_BYTES..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let (pos, rest) = floats.split_at(3 * n);
    let (rot, rest) = rest.split_at(4 * n);
    let (scl, rest) = rest.split_at(3 * n);
    let (opa, sh) = rest.split_at(n);
    let mut frame = GaussianFrame {
        positions: chunks(pos),
        rotations: chunks(rot),
        scales: chunks(scl),
        opacities: opa.to_vec(),
        sh: chunks(sh),
    };

    let mut report = LoadReport::default();
    for (i, q) in frame.rotations.iter_mut().enumerate() {
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("rotation {i}")));
        }
        let norm = quat_norm(q);
        let dev = (norm - 1.0).abs();
        report.max_quat_deviation = report.max_quat_deviation.max(dev);
        if dev > QUAT_RENORM_TOL {
            return Err(Error::QuaternionDeviation { index: i, deviation: dev });
        }
        if dev > QUAT_UNIT_TOL {
            *q = q.map(|c| (c as f64 / norm) as f32);
            report.renormalized += 1;
        }
    }
    if let Some(v) = validate_frame(&frame).violations.first() {
        return Err(match v.message.as_str() {
            "non-finite value" => Error::NonFinite(format!("{:?} {}", v.field, v.index)),
            _ => Error::InvalidFrame(format!("{:?} {}: {}", v.field, v.index, v.message)),
        });
    }
    Ok((frame, report))
}

pub fn load_frame_with_report(path: impl AsRef<Path>) -> Result<(GaussianFrame<f32>, LoadReport)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frame(&bytes)
}

pub fn load_frame(path: impl AsRef<Path>) -> Result<GaussianFrame<f32>> {
    load_frame_with_report(path).map(|(f, _)| f)
}

/// Writes `frame` as a `.gfr` container and returns the byte count.
pub fn save_frame(frame: &GaussianFrame<f32>, path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let report = validate_frame(frame);
    if let Some(v) = report.violations.first() {
        return Err(Error::InvalidFrame(format!("{:?} {}: {}", v.field, v.index, v.message)));
    }
    let bytes = encode_frame(frame);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len())
}
