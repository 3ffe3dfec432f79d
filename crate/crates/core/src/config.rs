//! Codec configuration and its digest.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How decoded control-point motion is normalized when spread to neighbors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CompensationMode {
    /// Weights sum to one over each control point's neighbor set; a Gaussian
    /// listed by several control points receives the sum of their shares.
    #[default]
    PerControlPoint,
    /// Weights sum to one over the control points listing a Gaussian.
    PerGaussian,
}

impl fmt::Display for CompensationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompensationMode::PerControlPoint => "per-control-point",
            CompensationMode::PerGaussian => "per-gaussian",
        })
    }
}

impl FromStr for CompensationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-control-point" => Ok(CompensationMode::PerControlPoint),
            "per-gaussian" => Ok(CompensationMode::PerGaussian),
            _ => Err(Error::InvalidConfig(format!("unknown compensation mode {s:?}"))),
        }
    }
}

/// Which SH coefficients the color refinement head predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RefineTarget {
    #[default]
    Dc,
    Full,
}

impl RefineTarget {
    pub fn width(self) -> usize {
        match self {
            RefineTarget::Dc => 3,
            RefineTarget::Full => crate::frame::SH_COEFFS,
        }
    }
}

impl fmt::Display for RefineTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefineTarget::Dc => "dc",
            RefineTarget::Full => "full",
        })
    }
}

impl FromStr for RefineTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dc" => Ok(RefineTarget::Dc),
            "full" => Ok(RefineTarget::Full),
            _ => Err(Error::InvalidConfig(format!("unknown refine target {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodecConfig {
    /// Control-point divisor M: `ceil(N / M)` control points per frame.
    pub downscale_factor: usize,
    /// Neighbors K gathered around each control point.
    pub knn_k: usize,
    pub hashgrid_levels: usize,
    /// Quantization step q'.
    pub quant_step: f64,
    pub latent_dim: usize,
    pub lambda_size: f64,
    pub lambda_dssim: f64,
    pub gof_length: usize,
    pub freq_octaves: usize,
    pub compensation_mode: CompensationMode,
    pub seed: u64,

    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub wide_dim: usize,
    pub context_dim: usize,
    pub hash_table_log2: u32,
    pub hash_features: usize,
    pub hash_base_resolution: u32,
    pub refine_target: RefineTarget,
    /// Multiplies distances inside the compensation exponent.
    pub distance_scale: f64,
    /// Symbols outside `[-B, B]` are escape-coded.
    pub symbol_bound: u32,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            downscale_factor: 70,
            knn_k: 30,
            hashgrid_levels: 16,
            quant_step: 1.0,
            latent_dim: 16,
            lambda_size: 1e-3,
            lambda_dssim: 0.2,
            gof_length: 30,
            freq_octaves: 6,
            compensation_mode: CompensationMode::PerControlPoint,
            seed: 0,
            feature_dim: 64,
            hidden_dim: 64,
            wide_dim: 128,
            context_dim: 64,
            hash_table_log2: 16,
            hash_features: 8,
            hash_base_resolution: 16,
            refine_target: RefineTarget::Dc,
            distance_scale: 1.0,
            symbol_bound: 64,
        }
    }
}

fn f32_exact(v: f64) -> f64 {
    v as f32 as f64
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.downscale_factor < 1 {
            return bad("downscale factor M must be >= 1");
        }
        if self.knn_k < 1 {
            return bad("knn K must be >= 1");
        }
        if self.hashgrid_levels < 1 {
            return bad("hashgrid levels must be >= 1");
        }
        if !(self.quant_step > 0.0 && self.quant_step.is_finite()) {
            return bad("quantization step must be > 0");
        }
        if self.latent_dim < 1 {
            return bad("latent dim must be >= 1");
        }
        if !(self.lambda_size >= 0.0 && self.lambda_size.is_finite()) {
            return bad("lambda_size must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return bad("lambda_dssim must lie in [0, 1]");
        }
        if self.gof_length < 1 {
            return bad("gof length must be >= 1");
        }
        if self.freq_octaves < 1 {
            return bad("frequency octaves must be >= 1");
        }
        if self.feature_dim < 1 || self.hidden_dim < 1 || self.wide_dim < 1 || self.context_dim < 1 {
            return bad("network widths must be >= 1");
        }
        if !(1..=24).contains(&self.hash_table_log2) || self.hash_features < 1 {
            return bad("hash table must have 2^1..2^24 entries and >= 1 feature");
        }
        if self.hash_base_resolution < 1 {
            return bad("hash base resolution must be >= 1");
        }
        if !(self.distance_scale >= 0.0 && self.distance_scale.is_finite()) {
            return bad("distance scale must be finite and >= 0");
        }
        if !(1..=1 << 14).contains(&self.symbol_bound) {
            return bad("symbol bound must lie in [1, 16384]");
        }
        Ok(())
    }

    /// Rounds real-valued fields to `f32` precision so that a configuration
    /// survives the weight file unchanged.
    pub fn canonicalize(&mut self) {
        self.quant_step = f32_exact(self.quant_step);
        self.lambda_size = f32_exact(self.lambda_size);
        self.lambda_dssim = f32_exact(self.lambda_dssim);
        self.distance_scale = f32_exact(self.distance_scale);
    }

    pub fn validated(mut self) -> Result<Self> {
        self.canonicalize();
        self.validate()?;
        Ok(self)
    }

    /// Number of control points for a frame of `n` Gaussians.
    pub fn control_points(&self, n: usize) -> usize {
        n.div_ceil(self.downscale_factor).max(1)
    }

    /// Input width of the feature network.
    pub fn encoded_attr_dim(&self) -> usize {
        7 * 2 * self.freq_octaves
    }

    /// The fields that change what a decoder reconstructs, one `key=value`
    /// pair per line in a fixed order.
    pub fn canonical_fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("downscale_factor", self.downscale_factor.to_string()),
            ("knn_k", self.knn_k.to_string()),
            ("hashgrid_levels", self.hashgrid_levels.to_string()),
            ("quant_step", format!("{:?}", self.quant_step)),
            ("latent_dim", self.latent_dim.to_string()),
            ("freq_octaves", self.freq_octaves.to_string()),
            ("compensation_mode", self.compensation_mode.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("wide_dim", self.wide_dim.to_string()),
            ("context_dim", self.context_dim.to_string()),
            ("hash_table_log2", self.hash_table_log2.to_string()),
            ("hash_features", self.hash_features.to_string()),
            ("hash_base_resolution", self.hash_base_resolution.to_string()),
            ("refine_target", self.refine_target.to_string()),
            ("distance_scale", format!("{:?}", self.distance_scale)),
            ("symbol_bound", self.symbol_bound.to_string()),
        ]
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"dfcgs-config-v1\n");
        for (k, v) in self.canonical_fields() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().into()
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest())
    }

    /// Human-readable list of digest-relevant fields that differ.
    pub fn diff(&self, other: &CodecConfig) -> Vec<String> {
        self.canonical_fields()
            .into_iter()
            .zip(other.canonical_fields())
            .filter(|(a, b)| a.1 != b.1)
            .map(|(a, b)| format!("{}: {} != {}", a.0, a.1, b.1))
            .collect()
    }
}
