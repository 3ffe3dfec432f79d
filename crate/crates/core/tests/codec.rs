#![allow(clippy::needless_range_loop)]
use std::path::PathBuf;

use dfcgs::coder::{DFC_HEADER_BYTES, INTER_RECORD_BYTES, INTRA_RECORD_BYTES};
use dfcgs::compensate::normalize_quat;
use dfcgs::frame::{container_size, decode_frame, encode_frame};
use dfcgs::render::{render, Camera};
use dfcgs::train::{synth_sequence, SynthSceneConfig};
use dfcgs::{decode_sequence, encode_sequence, segment_sequence, Bitstream, CodecConfig, CodecModel, Frame, Frame64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn small_config() -> CodecConfig {
    CodecConfig {
        downscale_factor: 5,
        knn_k: 6,
        hashgrid_levels: 3,
        latent_dim: 4,
        freq_octaves: 2,
        feature_dim: 8,
        hidden_dim: 8,
        wide_dim: 8,
        context_dim: 6,
        hash_table_log2: 8,
        hash_features: 2,
        hash_base_resolution: 4,
        ..CodecConfig::default()
    }
}

/// Small model whose output heads are nonzero, so P-frames code real motion.
fn active_model(seed: u64) -> CodecModel {
    let mut m = CodecModel::new(CodecConfig { seed, ..small_config() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for net in [&mut m.converter, &mut m.synthesis, &mut m.refine] {
        let l = net.layers.last_mut().unwrap();
        l.weight.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    }
    m
}

fn random_sequence(n: usize, frames: usize, seed: u64) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Frame64::empty();
    for _ in 0..n {
        f.positions.push([0; 3].map(|_| rng.gen_range(-1.0..1.0)));
        f.rotations.push(normalize_quat([0; 4].map(|_| rng.gen_range(-1.0..1.0))));
        f.scales.push([0; 3].map(|_| rng.gen_range(0.01..0.2)));
        f.opacities.push(rng.gen_range(0.05..0.95));
        f.sh.push([0; 48].map(|_| rng.gen_range(-0.5..0.5)));
    }
    let mut out = vec![f.cast::<f32>()];
    for _ in 1..frames {
        for j in 0..n {
            for a in 0..3 {
                f.positions[j][a] += rng.gen_range(-0.05..0.05);
            }
            f.rotations[j] = normalize_quat(f.rotations[j].map(|v| v + rng.gen_range(-0.05..0.05)));
        }
        out.push(f.cast());
    }
    out
}

fn bits(f: &Frame64) -> Vec<u64> {
    let mut v = Vec::new();
    for j in 0..f.len() {
        v.extend(f.positions[j].iter().map(|x| x.to_bits()));
        v.extend(f.rotations[j].iter().map(|x| x.to_bits()));
        v.extend(f.scales[j].iter().map(|x| x.to_bits()));
        v.push(f.opacities[j].to_bits());
        v.extend(f.sh[j].iter().map(|x| x.to_bits()));
    }
    v
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/small.dfc")
}

fn golden_stream() -> (CodecModel, Vec<u8>) {
    let model = active_model(42);
    let cfg = SynthSceneConfig { n_gaussians: 60, n_frames: 6, seed: 42, ..SynthSceneConfig::default() };
    let gofs = synth_sequence(&cfg, 3).unwrap();
    let (stream, _) = encode_sequence(&model, &gofs).unwrap();
    (model, stream.to_bytes())
}

/// Set `DFCGS_BLESS=1` to rewrite the committed stream after an intended
/// format or model change.
#[test]
fn golden_stream_is_stable() {
    let (model, bytes) = golden_stream();
    let path = golden_path();
    if std::env::var("DFCGS_BLESS").is_ok_and(|v| v == "1") {
        std::fs::write(&path, &bytes).unwrap();
    }
    let committed = std::fs::read(&path).expect("committed golden stream");
    assert_eq!(hex::encode(Sha256::digest(&bytes)), hex::encode(Sha256::digest(&committed)));
    assert_eq!(bytes, committed);
    let decoded = decode_sequence(&model, &Bitstream::from_bytes(&committed).unwrap()).unwrap();
    assert_eq!(decoded.len(), 6);
}

#[test]
fn decoding_needs_only_stream_model_and_reference() {
    let (model, bytes) = golden_stream();
    let dir = tempfile::tempdir().unwrap();
    let stream_path = dir.path().join("s.dfc");
    let model_path = dir.path().join("m.dfw");
    std::fs::write(&stream_path, &bytes).unwrap();
    model.save(&model_path).unwrap();
    let model = CodecModel::load(&model_path).unwrap();
    let stream = dfcgs::read_bitstream(&stream_path).unwrap();
    let a = decode_sequence(&model, &stream).unwrap();
    let b = decode_sequence(&model, &stream).unwrap();
    assert_eq!(a.iter().map(bits).collect::<Vec<_>>(), b.iter().map(bits).collect::<Vec<_>>());
}

#[test]
fn render_is_deterministic() {
    let frames = random_sequence(200, 1, 3);
    let cams = Camera::framing(&frames[0].positions, 2, 48).unwrap();
    for c in &cams {
        assert_eq!(render(&frames[0], c).pixels, render(&frames[0], c).pixels);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_loop_and_accounting(n in 8usize..80, frames in 1usize..7, gof in 1usize..4, seed in 0u64..1000) {
        let model = active_model(seed % 7);
        let seq = random_sequence(n, frames, seed);
        let gofs = segment_sequence(seq, gof).unwrap();
        let (stream, encoded) = encode_sequence(&model, &gofs).unwrap();
        let bytes = stream.to_bytes();
        let internal: Vec<Vec<u64>> = encoded.iter().flat_map(|g| g.reconstructions.iter().map(bits)).collect();
        let decoded: Vec<Vec<u64>> = decode_sequence(&model, &Bitstream::from_bytes(&bytes).unwrap())
            .unwrap()
            .iter()
            .map(bits)
            .collect();
        prop_assert_eq!(&decoded, &internal);

        let records: usize = stream
            .frames
            .iter()
            .map(|r| r.payload_bytes() + if r.is_intra() { INTRA_RECORD_BYTES } else { INTER_RECORD_BYTES })
            .sum();
        prop_assert_eq!(bytes.len(), DFC_HEADER_BYTES + records);

        let (again, _) = encode_sequence(&model, &gofs).unwrap();
        prop_assert_eq!(again.to_bytes(), bytes);
    }

    #[test]
    fn container_round_trip(n in 1usize..50, seed in 0u64..1000) {
        let f = random_sequence(n, 1, seed).remove(0);
        let bytes = encode_frame(&f);
        prop_assert_eq!(bytes.len(), container_size(n));
        let (g, _) = decode_frame(&bytes).unwrap();
        prop_assert_eq!(encode_frame(&g), bytes);
    }
}
