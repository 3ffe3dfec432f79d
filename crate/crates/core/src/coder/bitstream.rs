//! `.dfc` container.
//!
//! ```text
//! "DFCS" | u32 version | 32-byte config digest | u32 frame count
//! per frame: u8 type (0 = I, 1 = P)
//!            I: u64 payload length
//!            P: u64 control points | u64 hyper length | u64 latent length
//! payloads in frame order (P: hyper stream, then latent stream)
//! ```
//!
//! All integers are little-endian. A new group of frames starts at every I
//! record.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const DFC_MAGIC: [u8; 4] = *b"DFCS";
pub const DFC_VERSION: u32 = 1;
pub const DFC_HEADER_BYTES: usize = 4 + 4 + 32 + 4;
pub const INTRA_RECORD_BYTES: usize = 1 + 8;
pub const INTER_RECORD_BYTES: usize = 1 + 3 * 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FrameRecord {
    /// A raw `.gfr` container.
    Intra(Vec<u8>),
    Inter {
        control_points: u64,
        hyper: Vec<u8>,
        latent: Vec<u8>,
    },
}

impl FrameRecord {
    pub fn is_intra(&self) -> bool {
        matches!(self, FrameRecord::Intra(_))
    }

    pub fn payload_bytes(&self) -> usize {
        match self {
            FrameRecord::Intra(b) => b.len(),
            FrameRecord::Inter { hyper, latent, .. } => hyper.len() + latent.len(),
        }
    }

    pub fn record_bytes(&self) -> usize {
        if self.is_intra() {
            INTRA_RECORD_BYTES
        } else {
            INTER_RECORD_BYTES
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub digest: [u8; 32],
    pub frames: Vec<FrameRecord>,
}

impl Bitstream {
    pub fn new(digest: [u8; 32]) -> Self {
        Bitstream { digest, frames: Vec::new() }
    }

    /// Header plus per-frame records.
    pub fn overhead_bytes(&self) -> usize {
        DFC_HEADER_BYTES + self.frames.iter().map(FrameRecord::record_bytes).sum::<usize>()
    }

    pub fn total_bytes(&self) -> usize {
        self.overhead_bytes() + self.frames.iter().map(FrameRecord::payload_bytes).sum::<usize>()
    }

    /// Fails unless the stream was produced under a config with `digest`.
    pub fn check_digest(&self, digest: &[u8; 32]) -> Result<()> {
        if &self.digest != digest {
            return Err(Error::DigestMismatch { stream: hex::encode(self.digest), model: hex::encode(digest) });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.total_bytes());
        out.extend_from_slice(&DFC_MAGIC);
        out.extend_from_slice(&DFC_VERSION.to_le_bytes());
        out.extend_from_slice(&self.digest);
        out.extend_from_slice(&(self.frames.len() as u32).to_le_bytes());
        for f in &self.frames {
            match f {
                FrameRecord::Intra(b) => {
                    out.push(0);
                    out.extend_from_slice(&(b.len() as u64).to_le_bytes());
                }
                FrameRecord::Inter { control_points, hyper, latent } => {
                    out.push(1);
                    out.extend_from_slice(&control_points.to_le_bytes());
                    out.extend_from_slice(&(hyper.len() as u64).to_le_bytes());
                    out.extend_from_slice(&(latent.len() as u64).to_le_bytes());
                }
            }
        }
        for f in &self.frames {
            match f {
                FrameRecord::Intra(b) => out.extend_from_slice(b),
                FrameRecord::Inter { hyper, latent, .. } => {
                    out.extend_from_slice(hyper);
                    out.extend_from_slice(latent);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != DFC_MAGIC {
            return Err(Error::BadMagic { expected: DFC_MAGIC, found: magic });
        }
        let version = r.u32()?;
        if version != DFC_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let count = r.u32()? as usize;
        enum Header {
            Intra(u64),
            Inter(u64, u64, u64),
        }
        let mut headers = Vec::with_capacity(count.min(1 << 16));
        let mut declared: u128 = 0;
        for t in 0..count {
            let h = match r.u8()? {
                0 => Header::Intra(r.u64()?),
                1 => Header::Inter(r.u64()?, r.u64()?, r.u64()?),
                other => return Err(Error::CorruptStream(format!("frame {t}: unknown frame type {other}"))),
            };
            declared += match h {
                Header::Intra(n) => n as u128,
                Header::Inter(_, a, b) => a as u128 + b as u128,
            };
            headers.push(h);
        }
        let remaining = (bytes.len() - r.pos) as u128;
        if declared != remaining {
            return Err(Error::CorruptStream(format!(
                "records declare {declared} payload bytes, file holds {remaining}"
            )));
        }
        let mut frames = Vec::with_capacity(headers.len());
        for h in headers {
            frames.push(match h {
                Header::Intra(n) => FrameRecord::Intra(r.take(n as usize)?.to_vec()),
                Header::Inter(nc, a, b) => FrameRecord::Inter {
                    control_points: nc,
                    hyper: r.take(a as usize)?.to_vec(),
                    latent: r.take(b as usize)?.to_vec(),
                },
            });
        }
        Ok(Bitstream { digest, frames })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptStream(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn write_bitstream(path: impl AsRef<Path>, stream: &Bitstream) -> Result<usize> {
    let path = path.as_ref();
    let bytes = stream.to_bytes();
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len())
}

pub fn read_bitstream(path: impl AsRef<Path>) -> Result<Bitstream> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Bitstream::from_bytes(&bytes)
}
