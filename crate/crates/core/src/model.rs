//! All learned parameters of the codec and the `.dfw` weight file.
//!
//! `.dfw` layout: `"DFCW"`, `u32` version, then named blocks until end of
//! file. A block is `u32` name length, UTF-8 name, `u32` rank, `rank × u64`
//! dims, then `f32` little-endian data. Configuration fields come first as
//! `config.<field>` blocks, followed by the parameters in the order of
//! [`CodecModel::blocks`].

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{CodecConfig, CompensationMode, RefineTarget};
use crate::entropy::{FactorizedPrior, DEFAULT_FILTERS, DEFAULT_INIT_SCALE};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseNet, HashGrid};

pub const DFW_MAGIC: [u8; 4] = *b"DFCW";
pub const DFW_VERSION: u32 = 1;

/// Name prefixes of the entropy-model blocks, frozen during the first
/// training stage.
pub const ENTROPY_BLOCKS: [&str; 3] = ["hyper.", "fusion.", "prior."];

#[derive(Clone, Debug, PartialEq)]
pub struct CodecModel {
    pub config: CodecConfig,
    pub feature: DenseNet<f64>,
    pub converter: DenseNet<f64>,
    pub analysis: DenseNet<f64>,
    pub hyper: DenseNet<f64>,
    pub synthesis: DenseNet<f64>,
    pub grid: HashGrid<f64>,
    pub pos_ctx: DenseNet<f64>,
    pub attr_ctx: DenseNet<f64>,
    pub fusion: DenseNet<f64>,
    pub prior: FactorizedPrior,
    pub refine: DenseNet<f64>,
}

/// A parameter tensor: name, shape and data.
pub type Block<'a> = (String, Vec<usize>, &'a [f64]);
pub type BlockMut<'a> = (String, Vec<usize>, &'a mut [f64]);

impl CodecModel {
    /// Freshly initialized model, seeded by `config.seed`. The converter,
    /// synthesis and refinement output layers start at zero, so the
    /// untrained codec reproduces its reference frame.
    pub fn new(config: CodecConfig) -> Result<Self> {
        let config = config.validated()?;
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let leaky = Activation::LeakyRelu;
        let feature =
            DenseNet::new(&[c.encoded_attr_dim(), c.hidden_dim, c.hidden_dim, c.feature_dim], leaky, &mut rng);
        let mut converter = DenseNet::new(&[c.feature_dim, c.hidden_dim, 7], leaky, &mut rng);
        converter.zero_output_layer();
        let analysis = DenseNet::new(&[7, c.hidden_dim, c.latent_dim], leaky, &mut rng);
        let hyper = DenseNet::new(&[c.latent_dim, c.hidden_dim, c.latent_dim], leaky, &mut rng);
        let mut synthesis = DenseNet::new(&[c.latent_dim, c.hidden_dim, 7], leaky, &mut rng);
        synthesis.zero_output_layer();
        let grid =
            HashGrid::new(c.hashgrid_levels, c.hash_features, c.hash_table_log2, c.hash_base_resolution, &mut rng);
        let pos_ctx = DenseNet::new(&[grid.output_dim(), c.hidden_dim, c.context_dim], leaky, &mut rng);
        let attr_ctx = DenseNet::new(&[7, c.hidden_dim, c.context_dim], leaky, &mut rng);
        let fusion =
            DenseNet::new(&[c.context_dim + c.latent_dim, c.wide_dim, c.wide_dim, 2 * c.latent_dim], leaky, &mut rng);
        let prior = FactorizedPrior::new(c.latent_dim, &DEFAULT_FILTERS, DEFAULT_INIT_SCALE, &mut rng);
        let mut refine =
            DenseNet::new(&[c.context_dim, c.wide_dim, c.wide_dim, c.refine_target.width()], leaky, &mut rng);
        refine.zero_output_layer();
        Ok(CodecModel {
            config,
            feature,
            converter,
            analysis,
            hyper,
            synthesis,
            grid,
            pos_ctx,
            attr_ctx,
            fusion,
            prior,
            refine,
        })
    }

    /// Same shapes, all parameters zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        CodecModel {
            config: self.config.clone(),
            feature: self.feature.zeros_like(),
            converter: self.converter.zeros_like(),
            analysis: self.analysis.zeros_like(),
            hyper: self.hyper.zeros_like(),
            synthesis: self.synthesis.zeros_like(),
            grid: self.grid.zeros_like(),
            pos_ctx: self.pos_ctx.zeros_like(),
            attr_ctx: self.attr_ctx.zeros_like(),
            fusion: self.fusion.zeros_like(),
            prior: self.prior.zeros_like(),
            refine: self.refine.zeros_like(),
        }
    }

    pub fn digest(&self) -> [u8; 32] {
        self.config.digest()
    }

    fn nets(&self) -> [(&'static str, &DenseNet<f64>); 4] {
        [
            ("feature", &self.feature),
            ("converter", &self.converter),
            ("analysis", &self.analysis),
            ("hyper", &self.hyper),
        ]
    }

    /// Every parameter tensor in canonical order.
    pub fn blocks(&self) -> Vec<Block<'_>> {
        let mut out = Vec::new();
        fn prefixed<'a>(p: &str, v: Vec<Block<'a>>, out: &mut Vec<Block<'a>>) {
            for (n, s, d) in v {
                out.push((format!("{p}.{n}"), s, d));
            }
        }
        for (p, net) in self.nets() {
            prefixed(p, net.blocks(), &mut out);
        }
        prefixed("synthesis", self.synthesis.blocks(), &mut out);
        out.push((
            "hashgrid.table".into(),
            vec![self.grid.levels, self.grid.table_size, self.grid.features],
            &self.grid.table[..],
        ));
        prefixed("pos_ctx", self.pos_ctx.blocks(), &mut out);
        prefixed("attr_ctx", self.attr_ctx.blocks(), &mut out);
        prefixed("fusion", self.fusion.blocks(), &mut out);
        prefixed("prior", self.prior.blocks(), &mut out);
        prefixed("refine", self.refine.blocks(), &mut out);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let mut out = Vec::new();
        fn prefixed<'a>(p: &str, v: Vec<BlockMut<'a>>, out: &mut Vec<BlockMut<'a>>) {
            for (n, s, d) in v {
                out.push((format!("{p}.{n}"), s, d));
            }
        }
        prefixed("feature", self.feature.blocks_mut(), &mut out);
        prefixed("converter", self.converter.blocks_mut(), &mut out);
        prefixed("analysis", self.analysis.blocks_mut(), &mut out);
        prefixed("hyper", self.hyper.blocks_mut(), &mut out);
        prefixed("synthesis", self.synthesis.blocks_mut(), &mut out);
        let shape = vec![self.grid.levels, self.grid.table_size, self.grid.features];
        out.push(("hashgrid.table".into(), shape, &mut self.grid.table[..]));
        prefixed("pos_ctx", self.pos_ctx.blocks_mut(), &mut out);
        prefixed("attr_ctx", self.attr_ctx.blocks_mut(), &mut out);
        prefixed("fusion", self.fusion.blocks_mut(), &mut out);
        prefixed("prior", self.prior.blocks_mut(), &mut out);
        prefixed("refine", self.refine.blocks_mut(), &mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.2.len()).sum()
    }

    /// Rounds every parameter to `f32`, the precision of the weight file.
    pub fn round_to_f32(&mut self) {
        for (_, _, d) in self.blocks_mut() {
            for v in d.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&DFW_MAGIC);
        out.extend_from_slice(&DFW_VERSION.to_le_bytes());
        for (name, shape, data) in config_blocks(&self.config) {
            write_block(&mut out, &name, &shape, data.iter().copied());
        }
        for (name, shape, data) in self.blocks() {
            write_block(&mut out, &name, &shape, data.iter().map(|&v| v as f32));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Weights("file shorter than its header".into()));
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != DFW_MAGIC {
            return Err(Error::BadMagic { expected: DFW_MAGIC, found: magic });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != DFW_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let mut pos = 8;
        let mut blocks = Vec::new();
        while pos < bytes.len() {
            blocks.push(read_block(bytes, &mut pos)?);
        }
        let (cfg_blocks, params): (Vec<_>, Vec<_>) = blocks.into_iter().partition(|b| b.0.starts_with("config."));
        let config = parse_config(&cfg_blocks)?;
        let mut model = CodecModel::new(config)?;
        let mut targets = model.blocks_mut();
        if targets.len() != params.len() {
            return Err(Error::Weights(format!("expected {} parameter blocks, found {}", targets.len(), params.len())));
        }
        for ((name, shape, dst), (fname, fshape, data)) in targets.iter_mut().zip(params) {
            if *name != fname || *shape != fshape {
                return Err(Error::Weights(format!("block {fname} {fshape:?} where {name} {shape:?} was expected")));
            }
            for (d, v) in dst.iter_mut().zip(data) {
                if !v.is_finite() {
                    return Err(Error::Weights(format!("non-finite value in {fname}")));
                }
                *d = v as f64;
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<usize> {
        let path = path.as_ref();
        let bytes = self.to_bytes();
        fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(bytes.len())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_block(out: &mut Vec<u8>, name: &str, shape: &[usize], data: impl Iterator<Item = f32>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_block(bytes: &[u8], pos: &mut usize) -> Result<(String, Vec<usize>, Vec<f32>)> {
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Weights(format!("truncated block at byte {pos}")))?;
        let s = &bytes[*pos..end];
        *pos = end;
        Ok(s)
    };
    let name_len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    let name =
        String::from_utf8(take(name_len)?.to_vec()).map_err(|_| Error::Weights("block name is not UTF-8".into()))?;
    let rank = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    if rank > 8 {
        return Err(Error::Weights(format!("block {name} has rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::Weights(format!("block {name} is too large")))?;
    let data = take(count)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Ok((name, shape, data))
}

fn config_blocks(c: &CodecConfig) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let scalar = |name: &str, v: f64| (format!("config.{name}"), vec![], vec![v as f32]);
    let seed = (0..4).map(|i| ((c.seed >> (16 * i)) & 0xFFFF) as f32).collect();
    vec![
        scalar("downscale_factor", c.downscale_factor as f64),
        scalar("knn_k", c.knn_k as f64),
        scalar("hashgrid_levels", c.hashgrid_levels as f64),
        scalar("quant_step", c.quant_step),
        scalar("latent_dim", c.latent_dim as f64),
        scalar("lambda_size", c.lambda_size),
        scalar("lambda_dssim", c.lambda_dssim),
        scalar("gof_length", c.gof_length as f64),
        scalar("freq_octaves", c.freq_octaves as f64),
        scalar(
            "compensation_mode",
            match c.compensation_mode {
                CompensationMode::PerControlPoint => 0.0,
                CompensationMode::PerGaussian => 1.0,
            },
        ),
        ("config.seed".into(), vec![4], seed),
        scalar("feature_dim", c.feature_dim as f64),
        scalar("hidden_dim", c.hidden_dim as f64),
        scalar("wide_dim", c.wide_dim as f64),
        scalar("context_dim", c.context_dim as f64),
        scalar("hash_table_log2", c.hash_table_log2 as f64),
        scalar("hash_features", c.hash_features as f64),
        scalar("hash_base_resolution", c.hash_base_resolution as f64),
        scalar(
            "refine_target",
            match c.refine_target {
                RefineTarget::Dc => 0.0,
                RefineTarget::Full => 1.0,
            },
        ),
        scalar("distance_scale", c.distance_scale),
        scalar("symbol_bound", c.symbol_bound as f64),
    ]
}

fn parse_config(blocks: &[(String, Vec<usize>, Vec<f32>)]) -> Result<CodecConfig> {
    let expected = config_blocks(&CodecConfig::default());
    if blocks.len() != expected.len() {
        return Err(Error::Weights(format!("expected {} config blocks, found {}", expected.len(), blocks.len())));
    }
    let get = |name: &str| -> Result<&[f32]> {
        blocks
            .iter()
            .find(|b| b.0 == format!("config.{name}"))
            .map(|b| &b.2[..])
            .ok_or_else(|| Error::Weights(format!("missing config.{name}")))
    };
    let real = |name: &str| -> Result<f64> {
        let v = get(name)?;
        v.first().map(|&x| x as f64).ok_or_else(|| Error::Weights(format!("config.{name} is empty")))
    };
    let int = |name: &str| -> Result<usize> {
        let v = real(name)?;
        if v < 0.0 || v.fract() != 0.0 || v > (1u64 << 24) as f64 {
            return Err(Error::Weights(format!("config.{name} = {v} is not a count")));
        }
        Ok(v as usize)
    };
    let seed_parts = get("seed")?;
    if seed_parts.len() != 4 {
        return Err(Error::Weights("config.seed must hold four 16-bit chunks".into()));
    }
    let seed = seed_parts.iter().enumerate().fold(0u64, |a, (i, &v)| a | ((v as u64 & 0xFFFF) << (16 * i)));
    let compensation_mode = match int("compensation_mode")? {
        0 => CompensationMode::PerControlPoint,
        1 => CompensationMode::PerGaussian,
        v => return Err(Error::Weights(format!("unknown compensation mode {v}"))),
    };
    let refine_target = match int("refine_target")? {
        0 => RefineTarget::Dc,
        1 => RefineTarget::Full,
        v => return Err(Error::Weights(format!("unknown refine target {v}"))),
    };
    CodecConfig {
        downscale_factor: int("downscale_factor")?,
        knn_k: int("knn_k")?,
        hashgrid_levels: int("hashgrid_levels")?,
        quant_step: real("quant_step")?,
        latent_dim: int("latent_dim")?,
        lambda_size: real("lambda_size")?,
        lambda_dssim: real("lambda_dssim")?,
        gof_length: int("gof_length")?,
        freq_octaves: int("freq_octaves")?,
        compensation_mode,
        seed,
        feature_dim: int("feature_dim")?,
        hidden_dim: int("hidden_dim")?,
        wide_dim: int("wide_dim")?,
        context_dim: int("context_dim")?,
        hash_table_log2: int("hash_table_log2")? as u32,
        hash_features: int("hash_features")?,
        hash_base_resolution: int("hash_base_resolution")? as u32,
        refine_target,
        distance_scale: real("distance_scale")?,
        symbol_bound: int("symbol_bound")? as u32,
    }
    .validated()
}
