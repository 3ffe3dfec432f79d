//! Acceptance suite. Prints one PASS/FAIL line per criterion; exits non-zero
//! on any FAIL only when `DFCGS_ACCEPTANCE_STRICT=1`.

#![allow(clippy::needless_range_loop)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use dfcgs::coder::{RangeDecoder, RangeEncoder, SymbolModel, DFC_HEADER_BYTES, INTER_RECORD_BYTES, INTRA_RECORD_BYTES};
use dfcgs::compensate::{apply_motion, compensation_weights, normalize_quat};
use dfcgs::entropy::{gaussian_likelihood, rate_grad, rate_loss};
use dfcgs::geometry::{fps, knn, Aabb};
use dfcgs::pipeline::{decode_p_frame, encode_p_frame, HyperTables, ReferenceBuffer, BBOX_MARGIN};
use dfcgs::render::{l1, psnr, rasterize, rd_report, render_traced_frozen, ssim, Camera, Image, Splat};
use dfcgs::train::loss::{image_distortion_grad, param_distortion, param_distortion_grad, target_images};
use dfcgs::train::{
    coded_distortion, p_frame_step, standard_scenes, synth_scene, synth_sequence, DistortionTarget, LatentNoise,
    SynthSceneConfig, TrainReference, TrainSchedule, Trainer, TrainingSet,
};
use dfcgs::{
    decode_sequence, encode_sequence, segment_sequence, Bitstream, CodecConfig, CodecModel, CompensationMode, Frame,
    Frame64, Gof,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn panic_text(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

fn criterion(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("panicked: {}", panic_text(e))),
    };
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2} {verdict}: {name}: {detail} [{:.1} s]", t.elapsed().as_secs_f64());
    pass
}

fn random_frame(n: usize, rng: &mut ChaCha8Rng) -> Frame64 {
    let mut f = Frame64::empty();
    for _ in 0..n {
        f.positions.push([0; 3].map(|_| rng.gen_range(-0.8..0.8)));
        f.rotations.push(normalize_quat([0; 4].map(|_| rng.gen_range(-1.0..1.0))));
        f.scales.push([0; 3].map(|_| rng.gen_range(0.05..0.3)));
        f.opacities.push(rng.gen_range(0.1..0.9));
        let mut sh = [0.0; 48];
        for v in sh.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        sh[0] = rng.gen_range(0.0..1.5);
        f.sh.push(sh);
    }
    f
}

fn moved(f: &Frame64, rng: &mut ChaCha8Rng) -> Frame64 {
    let mut g = f.clone();
    for j in 0..g.len() {
        for a in 0..3 {
            g.positions[j][a] += rng.gen_range(-0.05..0.05);
            g.sh[j][a] += rng.gen_range(-0.1..0.1);
        }
        g.rotations[j] = normalize_quat(g.rotations[j].map(|v| v + rng.gen_range(-0.1..0.1)));
    }
    g
}

/// Central-difference agreement, relative to the larger magnitude with a
/// floor for near-zero gradients.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

/// Default architecture with the zero-initialized output heads randomized,
/// so P-frames carry real motion and refinement.
fn active_model(config: CodecConfig, seed: u64) -> CodecModel {
    let mut m = CodecModel::new(config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for net in [&mut m.converter, &mut m.synthesis, &mut m.refine] {
        let l = net.layers.last_mut().unwrap();
        l.weight.mapv_inplace(|_| rng.gen_range(-0.05..0.05));
    }
    m
}

fn small_config(seed: u64) -> CodecConfig {
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
        seed,
        ..CodecConfig::default()
    }
}

fn bits_equal(a: &Frame64, b: &Frame64) -> bool {
    let f = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    a.len() == b.len()
        && (0..a.len()).all(|j| {
            f(&a.positions[j]) == f(&b.positions[j])
                && f(&a.rotations[j]) == f(&b.rotations[j])
                && f(&a.scales[j]) == f(&b.scales[j])
                && a.opacities[j].to_bits() == b.opacities[j].to_bits()
                && f(&a.sh[j]) == f(&b.sh[j])
        })
}

fn c1_determinism() -> Outcome {
    let t = Instant::now();
    let model = active_model(CodecConfig::default(), 11);
    let gofs: Vec<Gof> = (0..20u64)
        .map(|seed| {
            let gof_len = if seed % 2 == 0 { 5 } else { 30 };
            let cfg = SynthSceneConfig { n_gaussians: 5000, n_frames: gof_len, seed, ..SynthSceneConfig::default() };
            synth_sequence(&cfg, gof_len).unwrap().remove(0)
        })
        .collect();
    let (stream, encoded) = encode_sequence(&model, &gofs).unwrap();
    let bytes = stream.to_bytes();
    let decoded = decode_sequence(&model, &Bitstream::from_bytes(&bytes).unwrap()).unwrap();
    let internal: Vec<&Frame64> = encoded.iter().flat_map(|g| &g.reconstructions).collect();
    let bad_frames = if decoded.len() == internal.len() {
        decoded.iter().zip(&internal).filter(|(a, b)| !bits_equal(a, b)).count()
    } else {
        decoded.len().max(internal.len())
    };
    let (again, _) = encode_sequence(&model, &gofs).unwrap();
    let reencode_ok = again.to_bytes() == bytes;
    let secs = t.elapsed().as_secs_f64();
    outcome(
        bad_frames == 0 && reencode_ok && secs < 60.0,
        format!(
            "20 GoFs, {} frames at N=5000: {bad_frames} decoded frames differ from encoder reconstructions, re-encode identical {reencode_ok}, {} bytes, runtime {secs:.1} s (limit 60 s)",
            internal.len(),
            bytes.len()
        ),
    )
}

fn c2_entropy_optimality() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bound = CodecConfig::default().symbol_bound;
    let mut models = Vec::with_capacity(10_000);
    let mut symbols = Vec::with_capacity(10_000);
    let mut cross_entropy_bits = 0.0;
    for _ in 0..10_000 {
        let mu = rng.gen_range(-20.0..20.0);
        let sigma = (rng.gen_range(0.05f64.ln()..40f64.ln())).exp();
        let m = SymbolModel::gaussian(mu, sigma, 1.0, bound);
        let v = if rng.gen_bool(0.02) { rng.gen_range(-200..200) } else { m.sample_hint(rng.gen::<f64>()) };
        cross_entropy_bits += m.cost_bits(v);
        models.push(m);
        symbols.push(v);
    }
    let mut enc = RangeEncoder::new();
    for (v, m) in symbols.iter().zip(&models) {
        enc.encode(*v, m);
    }
    let bytes = enc.finish();
    let mut dec = RangeDecoder::new(&bytes).unwrap();
    let round_trip = symbols.iter().zip(&models).all(|(v, m)| dec.decode(m).unwrap() == *v);
    let ce_bytes = cross_entropy_bits / 8.0;
    let limit = 1.01 * ce_bytes + 16.0;
    let secs = t.elapsed().as_secs_f64();
    outcome(
        round_trip && (bytes.len() as f64) <= limit && secs < 10.0,
        format!(
            "{} bytes vs cross-entropy {ce_bytes:.1} bytes (limit {limit:.1}), lossless {round_trip}, {secs:.2} s",
            bytes.len()
        ),
    )
}

const BLOCK_GROUPS: [&str; 11] = [
    "feature.",
    "converter.",
    "analysis.",
    "hyper.",
    "synthesis.",
    "hashgrid.",
    "pos_ctx.",
    "attr_ctx.",
    "fusion.",
    "prior.",
    "refine.",
];

/// Small model with every parameter randomized so no layer is dead.
fn random_model(seed: u64) -> CodecModel {
    let mut model = CodecModel::new(small_config(seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (name, _, d) in model.blocks_mut() {
        let amp = if name.starts_with("hashgrid") { 0.5 } else { 0.4 };
        for v in d.iter_mut() {
            if name.starts_with("prior") {
                *v += rng.gen_range(-0.1..0.1);
            } else {
                *v = rng.gen_range(-amp..amp);
            }
        }
    }
    model
}

fn c3_gradients() -> Outcome {
    let mut worst: Vec<(String, f64, usize)> = BLOCK_GROUPS.iter().map(|g| (g.to_string(), 0.0, 0)).collect();
    for seed in 0..20u64 {
        let model = random_model(1000 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = random_frame(36, &mut rng);
        let target = moved(&frame, &mut rng);
        let bbox = Aabb::around(&frame.positions, BBOX_MARGIN);
        let reference = TrainReference::new(&model, frame, bbox).unwrap();
        let noise =
            LatentNoise::sample(reference.control.len(), model.config.latent_dim, model.config.quant_step, &mut rng);
        let dt = DistortionTarget::Parameter(&target);
        let lambda = 0.05;
        let mut grads = model.zeros_like();
        p_frame_step(&model, &reference, &dt, Some(&noise), lambda, 1.0, Some(&mut grads)).unwrap();
        let names: Vec<String> = grads.blocks().iter().map(|b| b.0.clone()).collect();
        let gblocks: Vec<Vec<f64>> = grads.blocks().iter().map(|b| b.2.to_vec()).collect();
        for (gi, prefix) in BLOCK_GROUPS.iter().enumerate() {
            let members: Vec<usize> = (0..names.len()).filter(|&b| names[b].starts_with(prefix)).collect();
            let b = members[rng.gen_range(0..members.len())];
            let nz: Vec<usize> = (0..gblocks[b].len()).filter(|&e| gblocks[b][e] != 0.0).collect();
            let e = if nz.is_empty() { rng.gen_range(0..gblocks[b].len()) } else { nz[rng.gen_range(0..nz.len())] };
            let h = 1e-6;
            let eval = |d: f64| {
                let mut m = model.clone();
                m.blocks_mut()[b].2[e] += d;
                p_frame_step(&m, &reference, &dt, Some(&noise), lambda, 1.0, None).unwrap().total
            };
            let num = (eval(h) - eval(-h)) / (2.0 * h);
            let r = rel_err(gblocks[b][e], num);
            worst[gi].1 = worst[gi].1.max(r);
            worst[gi].2 += 1;
        }
    }

    let mut rate_worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..20 {
        let nc = rng.gen_range(1..10);
        let py: Vec<f64> = (0..nc * 4).map(|_| rng.gen_range(0.01..1.0)).collect();
        let pz: Vec<f64> = (0..nc * 4).map(|_| rng.gen_range(0.01..1.0)).collect();
        let i = rng.gen_range(0..py.len());
        let h = 1e-7 * py[i];
        let f = |d: f64| {
            let mut p = py.clone();
            p[i] += d;
            rate_loss(&p, &pz, nc)
        };
        let num = (f(h) - f(-h)) / (2.0 * h);
        rate_worst = rate_worst.max(rel_err(rate_grad(py[i], nc), num));
    }

    let mut param_worst = 0.0f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let target = random_frame(5, &mut rng);
        let recon = moved(&target, &mut rng);
        let (_, g) = param_distortion_grad(&recon, &target).unwrap();
        let h = 1e-7;
        for j in 0..5 {
            for a in 0..3 {
                let (mut p, mut m) = (recon.clone(), recon.clone());
                p.positions[j][a] += h;
                m.positions[j][a] -= h;
                let num = (param_distortion(&p, &target).unwrap() - param_distortion(&m, &target).unwrap()) / (2.0 * h);
                param_worst = param_worst.max(rel_err(g.positions[j][a], num));
                let (mut p, mut m) = (recon.clone(), recon.clone());
                p.sh[j][a] += h;
                m.sh[j][a] -= h;
                let num = (param_distortion(&p, &target).unwrap() - param_distortion(&m, &target).unwrap()) / (2.0 * h);
                param_worst = param_worst.max(rel_err(g.sh[j][a], num));
            }
            for a in 0..4 {
                let (mut p, mut m) = (recon.clone(), recon.clone());
                p.rotations[j][a] += h;
                m.rotations[j][a] -= h;
                let num = (param_distortion(&p, &target).unwrap() - param_distortion(&m, &target).unwrap()) / (2.0 * h);
                param_worst = param_worst.max(rel_err(g.rotations[j][a], num));
            }
        }
    }

    let mut image_worst = 0.0f64;
    let cams = [
        Camera::look_at([0.0, 0.0, -3.0], [0.0; 3], [0.0, 1.0, 0.0], 50.0, 16, 16).unwrap(),
        Camera::look_at([2.0, 0.5, -2.0], [0.0; 3], [0.0, 1.0, 0.0], 50.0, 16, 16).unwrap(),
    ];
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let target = random_frame(5, &mut rng);
        let recon = moved(&target, &mut rng);
        let targets = target_images(&target, &cams).unwrap();
        let (_, g) = image_distortion_grad(&recon, &targets, &cams).unwrap();
        let loss = |f: &Frame64| -> f64 {
            cams.iter()
                .zip(&targets)
                .map(|(c, t)| {
                    let img = render_traced_frozen(f, &recon, c).unwrap().image();
                    0.5 * (0.2 * (1.0 - ssim(t, &img).unwrap()) + 0.8 * l1(t, &img).unwrap())
                })
                .sum()
        };
        let h = 1e-6;
        let j = rng.gen_range(0..5);
        for a in 0..3 {
            let (mut p, mut m) = (recon.clone(), recon.clone());
            p.positions[j][a] += h;
            m.positions[j][a] -= h;
            image_worst = image_worst.max(rel_err(g.positions[j][a], (loss(&p) - loss(&m)) / (2.0 * h)));
            let (mut p, mut m) = (recon.clone(), recon.clone());
            p.sh[j][a] += h;
            m.sh[j][a] -= h;
            image_worst = image_worst.max(rel_err(g.sh[j][a], (loss(&p) - loss(&m)) / (2.0 * h)));
        }
    }

    let blocks_ok = worst.iter().all(|w| w.1 < 1e-4 && w.2 >= 20);
    let pass = blocks_ok && rate_worst < 1e-4 && param_worst < 1e-4 && image_worst < 1e-4;
    let max_block = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let worst_group = worst.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    outcome(
        pass,
        format!(
            "11 block groups x 20 instances, worst {max_block:.2e} ({}); rate {rate_worst:.2e}; param distortion {param_worst:.2e}; image distortion {image_worst:.2e}",
            worst_group.0.trim_end_matches('.')
        ),
    )
}

fn brute_fps(p: &[[f64; 3]], count: usize, start: usize) -> Vec<usize> {
    let d2 = |a: &[f64; 3], b: &[f64; 3]| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>();
    let mut sel = vec![start];
    while sel.len() < count {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..p.len() {
            if sel.contains(&i) {
                continue;
            }
            let m = sel.iter().map(|&s| d2(&p[i], &p[s])).fold(f64::INFINITY, f64::min);
            if m > best.0 {
                best = (m, i);
            }
        }
        sel.push(best.1);
    }
    sel
}

fn c4_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut fps_bad = 0;
    let mut knn_bad = 0;
    for inst in 0..200 {
        let n = if inst % 10 == 0 { 1000 } else { rng.gen_range(1..300) };
        let grid = inst % 4 == 1;
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| [0; 3].map(|_| if grid { rng.gen_range(0..4) as f64 } else { rng.gen_range(-1.0..1.0) }))
            .collect();
        let count = rng.gen_range(1..=n.min(40));
        let start = rng.gen_range(0..n);
        if fps(&pts, count, start).unwrap() != brute_fps(&pts, count, start) {
            fps_bad += 1;
        }
        let queries: Vec<[f64; 3]> =
            (0..rng.gen_range(1..20)).map(|_| [0; 3].map(|_| rng.gen_range(-1.0..1.0))).collect();
        let k = rng.gen_range(1..=n.min(30));
        let map = knn(&queries, &pts, k).unwrap();
        for (qi, q) in queries.iter().enumerate() {
            let mut all: Vec<(f64, usize)> =
                pts.iter().enumerate().map(|(i, p)| ((0..3).map(|a| (q[a] - p[a]).powi(2)).sum::<f64>(), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expect: Vec<usize> = all[..k].iter().map(|x| x.1).collect();
            let dist_ok = map.distances(qi).iter().zip(&all[..k]).all(|(d, e)| (d - e.0.sqrt()).abs() <= 1e-12);
            if map.neighbors(qi) != expect.as_slice() || !dist_ok {
                knn_bad += 1;
            }
        }
    }

    let mut motion_err = 0.0f64;
    for inst in 0..50 {
        let n = rng.gen_range(5..200);
        let frame = random_frame(n, &mut rng);
        let nc = rng.gen_range(1..=n.min(20));
        let cps = fps(&frame.positions, nc, 0).unwrap();
        let cp_pos: Vec<[f64; 3]> = cps.iter().map(|&i| frame.positions[i]).collect();
        let k = rng.gen_range(1..=n.min(12));
        let mode = if inst % 2 == 0 { CompensationMode::PerControlPoint } else { CompensationMode::PerGaussian };
        let scale = rng.gen_range(0.5..4.0);
        let map = knn(&cp_pos, &frame.positions, k).unwrap();
        let plan = compensation_weights(map.clone(), n, mode, scale);
        let motions: Vec<[f64; 7]> = (0..nc).map(|_| [0; 7].map(|_| rng.gen_range(-0.2..0.2))).collect();
        let got = apply_motion(&frame, &plan, &motions).unwrap();

        let mut raw = vec![vec![0.0; nc]; n];
        for i in 0..nc {
            for (&j, &d) in map.neighbors(i).iter().zip(map.distances(i)) {
                raw[j][i] = (-scale * d).exp();
            }
        }
        let mut w = raw.clone();
        match mode {
            CompensationMode::PerControlPoint => {
                for i in 0..nc {
                    let s: f64 = (0..n).map(|j| raw[j][i]).sum();
                    for row in w.iter_mut() {
                        row[i] /= s;
                    }
                }
            }
            CompensationMode::PerGaussian => {
                for row in w.iter_mut() {
                    let s: f64 = row.iter().sum();
                    if s > 0.0 {
                        row.iter_mut().for_each(|v| *v /= s);
                    }
                }
            }
        }
        for j in 0..n {
            let delta: Vec<f64> = (0..7).map(|c| (0..nc).map(|i| w[j][i] * motions[i][c]).sum()).collect();
            for a in 0..3 {
                motion_err = motion_err.max((got.positions[j][a] - (frame.positions[j][a] + delta[a])).abs());
            }
            let q = normalize_quat([0, 1, 2, 3].map(|a| frame.rotations[j][a] + delta[3 + a]));
            for a in 0..4 {
                motion_err = motion_err.max((got.rotations[j][a] - q[a]).abs());
            }
        }
    }
    outcome(
        fps_bad == 0 && knn_bad == 0 && motion_err <= 1e-12,
        format!("fps mismatches {fps_bad}/200, knn mismatching queries {knn_bad}, apply_motion max error {motion_err:.1e} over 50 instances"),
    )
}

fn c5_likelihoods() -> Outcome {
    let g = gaussian_likelihood(0.0, 0.0, 1.0, 1.0);
    let model = CodecModel::new(CodecConfig::default()).unwrap();
    let mut worst = 0.0f64;
    for c in 0..model.config.latent_dim {
        let total: f64 = (-30..=30).map(|x| model.prior.likelihood(x as f64, c, 1.0)).sum();
        worst = worst.max((total - 1.0).abs());
    }
    outcome(
        (g - 0.38292).abs() <= 1e-4 && worst <= 1e-3,
        format!("P(0|0,1) = {g:.6} (expect 0.38292); prior mass over [-30,30] deviates by at most {worst:.2e}"),
    )
}

const SMOKE_N: usize = 1000;
const SMOKE_FRAMES: usize = 10;
const SMOKE_GOF: usize = 5;
const STAGE1: usize = 200;
const STAGE2: usize = 100;

fn smoke_config() -> CodecConfig {
    CodecConfig { downscale_factor: 10, ..CodecConfig::default() }
}

struct Smoke {
    initial: f64,
    after_stage1: f64,
    early_median: f64,
    late_median: f64,
    payload_rate: usize,
    payload_zero: usize,
    trained: CodecModel,
    train_mode_error: f64,
    test_mode_error: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn p_payload(model: &CodecModel, gofs: &[Gof]) -> usize {
    let (stream, _) = encode_sequence(model, gofs).unwrap();
    stream.frames.iter().filter(|r| !r.is_intra()).map(|r| r.payload_bytes()).sum()
}

fn scene_gofs(scenes: &[SynthSceneConfig]) -> (Vec<Vec<Frame>>, Vec<Gof>) {
    let seqs: Vec<Vec<Frame>> = scenes.iter().map(|c| synth_scene(c).unwrap().frames).collect();
    let gofs = seqs.iter().flat_map(|s| segment_sequence(s.clone(), SMOKE_GOF).unwrap()).collect();
    (seqs, gofs)
}

/// Mean P-frame parameter distortion with training-time latent noise.
fn train_mode_error(model: &CodecModel, gofs: &[Gof], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = &model.config;
    let (mut total, mut count) = (0.0, 0);
    for gof in gofs {
        let i_frame: Frame64 = gof.i_frame.cast();
        let bbox = Aabb::around(&i_frame.positions, BBOX_MARGIN);
        let mut reference = i_frame;
        for p in &gof.p_frames {
            let target: Frame64 = p.cast();
            let tr = TrainReference::new(model, reference, bbox).unwrap();
            let noise = LatentNoise::sample(tr.control.len(), cfg.latent_dim, cfg.quant_step, &mut rng);
            let out =
                p_frame_step(model, &tr, &DistortionTarget::Parameter(&target), Some(&noise), 0.0, 1.0, None).unwrap();
            total += out.distortion;
            count += 1;
            reference = out.reconstruction;
        }
    }
    total / count as f64
}

fn smoke() -> &'static Smoke {
    static SMOKE: OnceLock<Smoke> = OnceLock::new();
    SMOKE.get_or_init(|| {
        let (seqs, gofs) = scene_gofs(&standard_scenes(SMOKE_N, SMOKE_FRAMES, 0));
        let data = TrainingSet::from_sequences(seqs, SMOKE_GOF).unwrap();
        let model = CodecModel::new(smoke_config()).unwrap();
        let initial = coded_distortion(&model, &gofs).unwrap();
        let schedule = TrainSchedule {
            stage1_iters: STAGE1,
            stage2_iters: STAGE2,
            gof_length: SMOKE_GOF,
            ..TrainSchedule::default()
        };
        let mut trainer = Trainer::new(model, schedule).unwrap();
        for _ in 0..STAGE1 {
            trainer.step(&data, 1).unwrap();
        }
        let after_stage1 = coded_distortion(&trainer.model, &gofs).unwrap();
        let d: Vec<f64> = trainer.log.iter().map(|r| r.distortion).collect();
        let early_median = median(d[..50].to_vec());
        let late_median = median(d[150..].to_vec());

        let stage2 = |lambda: f64| {
            let mut t = trainer.clone();
            t.schedule.lambda_size = lambda;
            for _ in 0..STAGE2 {
                t.step(&data, 2).unwrap();
            }
            t.model
        };
        let with_rate = stage2(1e-3);
        let without_rate = stage2(0.0);
        let payload_rate = p_payload(&with_rate, &gofs);
        let payload_zero = p_payload(&without_rate, &gofs);

        let (_, held_out) = scene_gofs(&standard_scenes(SMOKE_N, SMOKE_FRAMES, 100));
        let train_mode_error = train_mode_error(&with_rate, &held_out, 7);
        let test_mode_error = coded_distortion(&with_rate, &held_out).unwrap();
        Smoke {
            initial,
            after_stage1,
            early_median,
            late_median,
            payload_rate,
            payload_zero,
            trained: with_rate,
            train_mode_error,
            test_mode_error,
        }
    })
}

fn c6_training() -> Outcome {
    let s = smoke();
    let ratio = s.after_stage1 / s.initial;
    let halves = ratio < 0.5;
    let rate_acts = s.payload_rate < s.payload_zero;
    let trend = s.late_median < s.early_median;
    let consistent = s.test_mode_error <= 2.0 * s.train_mode_error;
    println!(
        "    note: stage-1 median loss {:.5} (iters 0-50) -> {:.5} (iters 150-200) [{}]; held-out test/train error {:.5}/{:.5} [{}]",
        s.early_median,
        s.late_median,
        if trend { "PASS" } else { "FAIL" },
        s.test_mode_error,
        s.train_mode_error,
        if consistent { "PASS" } else { "FAIL" }
    );
    outcome(
        halves && rate_acts,
        format!(
            "distortion {:.5} -> {:.5} after {STAGE1} stage-1 iterations (ratio {ratio:.3}, need < 0.5); P payload after {STAGE2} stage-2 iterations {} B with lambda 1e-3 vs {} B with lambda 0",
            s.initial, s.after_stage1, s.payload_rate, s.payload_zero
        ),
    )
}

const LARGE_N: usize = 100_000;

struct Large {
    payload: usize,
    control_points: usize,
    accounting_ok: bool,
    encode: Duration,
    decode: Duration,
    identical: bool,
}

fn large() -> &'static Large {
    static LARGE: OnceLock<Large> = OnceLock::new();
    LARGE.get_or_init(|| {
        let mut model = smoke().trained.clone();
        model.config.downscale_factor = 70;
        let cfg = SynthSceneConfig { n_gaussians: LARGE_N, n_frames: 2, seed: 70, ..SynthSceneConfig::default() };
        let frames = synth_scene(&cfg).unwrap().frames;
        let reference: Frame64 = frames[0].cast();
        let current: Frame64 = frames[1].cast();
        let bbox = Aabb::around(&reference.positions, BBOX_MARGIN);

        let t = Instant::now();
        let hyper = HyperTables::new(&model);
        let buffer = ReferenceBuffer::new(&model, reference.clone(), bbox).unwrap();
        let inter = encode_p_frame(&model, &hyper, &buffer, &current).unwrap();
        let encode = t.elapsed();

        let t = Instant::now();
        let hyper = HyperTables::new(&model);
        let buffer = ReferenceBuffer::new(&model, reference, bbox).unwrap();
        let decoded = decode_p_frame(&model, &hyper, &buffer, &inter.record).unwrap();
        let decode = t.elapsed();

        let gof = segment_sequence(frames, 2).unwrap();
        let (stream, _) = encode_sequence(&model, &gof).unwrap();
        let p = stream.frames[1].payload_bytes();
        let i = stream.frames[0].payload_bytes();
        let accounting_ok = stream.to_bytes().len()
            == DFC_HEADER_BYTES + INTRA_RECORD_BYTES + i + INTER_RECORD_BYTES + p
            && p == inter.record.payload_bytes();
        Large {
            payload: p,
            control_points: model.config.control_points(LARGE_N),
            accounting_ok,
            encode,
            decode,
            identical: bits_equal(&decoded, &inter.reconstruction),
        }
    })
}

fn c7_compression_ratio() -> Outcome {
    let l = large();
    let raw = 236 * LARGE_N;
    let limit = raw / 40;
    outcome(
        l.payload <= limit && l.accounting_ok,
        format!(
            "N=1e5, M=70: {} control points, P payload {} B vs raw/40 = {limit} B ({:.0}x smaller than raw), accounting identity {}",
            l.control_points,
            l.payload,
            raw as f64 / l.payload as f64,
            l.accounting_ok
        ),
    )
}

fn c8_quality_fluctuation() -> Outcome {
    let s = smoke();
    let model = &s.trained;
    let cfg = SynthSceneConfig { n_gaussians: SMOKE_N, n_frames: 5, ..standard_scenes(SMOKE_N, 5, 0).remove(0) };
    let frames = synth_scene(&cfg).unwrap().frames;
    let gofs = segment_sequence(frames.clone(), 5).unwrap();
    let (stream, _) = encode_sequence(model, &gofs).unwrap();
    let decoded: Vec<Frame> = decode_sequence(model, &stream).unwrap().iter().map(|f| f.cast()).collect();
    let cameras = Camera::framing(&frames[0].positions, 3, 128).unwrap();
    let rows = rd_report(&frames, &decoded, &stream, &cameras).unwrap();
    let p: Vec<_> = rows.iter().filter(|r| !r.intra).collect();
    let first = &p[0].psnr;
    let mut drop = 0.0f64;
    for r in &p {
        for (a, b) in first.iter().zip(&r.psnr) {
            drop = drop.max(a - b);
        }
    }
    let means: Vec<String> = p.iter().map(|r| format!("{:.2}", r.psnr_mean().unwrap())).collect();
    outcome(
        drop < 3.0,
        format!(
            "P-frame mean PSNR [{}] dB at 128x128, 3 views; max drop from first P-frame {drop:.3} dB (limit 3)",
            means.join(", ")
        ),
    )
}

fn splat(index: usize, depth: f64, color: [f64; 3]) -> Splat<f64> {
    Splat {
        index,
        depth,
        mean: [1.0, 1.0],
        conic: [1.0, 0.0, 1.0],
        radius: 3.0,
        opacity: 0.5,
        color,
        raw_color: color,
        mean_jacobian: [[0.0; 3]; 2],
        view_dir: [0.0, 0.0, 1.0],
    }
}

fn constant(v: f64) -> Image<f64> {
    let mut img = Image::black(8, 8);
    img.pixels.iter_mut().for_each(|p| *p = [v; 3]);
    img
}

fn c9_renderer() -> Outcome {
    let img = rasterize(&[splat(0, 1.0, [1.0, 0.0, 0.0]), splat(1, 2.0, [0.0, 1.0, 0.0])], 3, 3);
    let blend = img.get(1, 1);
    let p = psnr(&constant(0.0), &constant(0.5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut noisy = Image::black(16, 16);
    noisy.pixels.iter_mut().for_each(|px| *px = [0; 3].map(|_| rng.gen::<f64>()));
    let s = ssim(&noisy, &noisy).unwrap();
    outcome(
        blend == [0.5, 0.25, 0.0] && (p - 6.0206).abs() < 1e-6 && (s - 1.0).abs() < 1e-6,
        format!("blend pixel {blend:?}, PSNR(0 vs 0.5) {p:.7} dB, SSIM(x, x) {s}"),
    )
}

fn c10_timing() -> Outcome {
    let l = large();
    let total = (l.encode + l.decode).as_secs_f64();
    let target = if total < 10.0 { "within" } else { "over" };
    outcome(
        total < 60.0 && l.identical,
        format!(
            "one N=1e5 P-frame: encode {:.2} s + decode {:.2} s = {total:.2} s ({target} the 10 s target, fail above 60 s); decoder matches encoder {}",
            l.encode.as_secs_f64(),
            l.decode.as_secs_f64(),
            l.identical
        ),
    )
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let results = [
        criterion(1, "codec round-trip determinism", c1_determinism),
        criterion(2, "entropy-coding optimality", c2_entropy_optimality),
        criterion(3, "gradient integrity", c3_gradients),
        criterion(4, "oracle equivalence", c4_oracles),
        criterion(5, "likelihood sanity", c5_likelihoods),
        criterion(6, "training efficacy", c6_training),
        criterion(7, "compression ratio", c7_compression_ratio),
        criterion(8, "quality fluctuation", c8_quality_fluctuation),
        criterion(9, "renderer correctness", c9_renderer),
        criterion(10, "timing envelope", c10_timing),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed < results.len() && std::env::var("DFCGS_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
