//! End-to-end acceptance checks, one per shipped guarantee. Each test prints
//! a single PASS/FAIL line; tolerances are pinned in the assertions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vconceal::fse::{generate_model_fast, generate_model_reference, FseConfig};
use vconceal::loss::{BlockRef, LossMask};
use vconceal::motion::{build_support_ring, estimate_motion};
use vconceal::pipeline::{conceal_sequence, ConcealConfig, Mode};
use vconceal::synthetic;
use vconceal::video::VideoSequence;
use vconceal::volume::{
    build_weights, omega, ExtrapolationVolume, LayerInfo, SampleStatus, WeightParams, WeightVolume,
};
use vconceal::{fit_weight_model, psnr_blocks, TrainingPair};

fn verdict(name: &str, ok: bool) {
    println!("acceptance: {name}: {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name} failed");
}

fn random_volume(
    m: usize,
    n: usize,
    p: usize,
    n_prev: usize,
    seed: u64,
) -> (ExtrapolationVolume, WeightVolume) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = m * n * p;
    let samples: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..255.0)).collect();
    let weights: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
    let layers = (0..p)
        .map(|i| LayerInfo {
            kappa: i as i32 - n_prev as i32,
            frame: Some(i),
            shift: (0, 0),
            motion_error: None,
        })
        .collect();
    let vol = ExtrapolationVolume {
        m,
        n,
        p,
        samples,
        status: vec![SampleStatus::Support; len],
        origin: (0, 0),
        n_prev,
        layers,
    };
    let w = WeightVolume { m, n, p, weights };
    (vol, w)
}

/// Fourier-domain and spatial-domain model generation agree bin-for-bin.
#[test]
fn oracle_equivalence() {
    let mut ok = true;
    for seed in 0..20u64 {
        for fft_dims in [(8, 8, 4), (16, 16, 4)] {
            let (vol, w) = random_volume(8, 8, 4, 2, seed);
            let cfg = FseConfig {
                iterations: 100,
                fft_dims,
                ..FseConfig::default()
            };
            let fast = generate_model_fast(&vol, &w, &cfg).unwrap();
            let refm = generate_model_reference(&vol, &w, &cfg).unwrap();
            ok &= fast.selection == refm.selection;
            ok &= fast
                .coeffs
                .iter()
                .zip(&refm.coeffs)
                .all(|(a, b)| (a - b).norm() < 1e-9);
        }
    }
    verdict("oracle equivalence (20 seeds, 2 transform sizes)", ok);
}

/// Weighted residual energy never increases, for any compensation factor.
#[test]
fn residual_monotonicity() {
    let mut ok = true;
    for seed in 100..110u64 {
        let (vol, w) = random_volume(48, 48, 3, 2, seed);
        for gamma in [0.3, 0.7, 1.0] {
            let cfg = FseConfig {
                iterations: 800,
                gamma,
                fft_dims: (64, 64, 16),
                track_residual: true,
                ..FseConfig::default()
            };
            let model = generate_model_fast(&vol, &w, &cfg).unwrap();
            let start: f64 = vol
                .samples
                .iter()
                .zip(&w.weights)
                .map(|(&s, &wv)| wv * s * s)
                .sum();
            let mut prev = start;
            for &e in &model.residual_energy {
                ok &= e <= prev + 1e-9 * start;
                prev = e;
            }
        }
    }
    verdict("residual monotonicity (10 instances, gamma 0.3/0.7/1.0)", ok);
}

/// Every displacement on the full candidate grid is recovered exactly.
#[test]
fn motion_recovery_exhaustive() {
    let base = synthetic::textured_frame(160, 160, 42);
    let mut mask = LossMask::new(160, 160, 2, 16).unwrap();
    mask.mark_lost(1, 4, 4);
    let block = BlockRef { frame: 1, bx: 4, by: 4 };
    let mut ok = true;
    for dy in -16i32..=16 {
        for dx in -16i32..=16 {
            // refr[u, v] = base[u - dx, v - dy]: the content sits at (dx, dy)
            let refr = synthetic::translate(&base, 160, 160, -dx, -dy);
            let seq =
                VideoSequence::from_luma_frames(160, 160, vec![refr, base.clone()]).unwrap();
            let ring = build_support_ring(&mask, block, 4).unwrap();
            let est = estimate_motion(&seq, &ring, 1, -1, 16);
            ok &= est.vector == (dx, dy) && est.error <= 1e-12;
        }
    }
    verdict("motion recovery (exhaustive 33x33 shift sweep)", ok);
}

/// Point values of the layer ramp and of the sample weights.
#[test]
fn weighting_point_checks() {
    let mut ok = true;
    ok &= (omega(0.0, 0.675, 84.375) - 0.675).abs() < 1e-12;
    ok &= omega(84.375, 0.675, 84.375).abs() < 1e-12;
    ok &= (omega(42.1875, 0.675, 84.375) - 0.3375).abs() < 1e-12;

    // single current-frame layer, 25x25 so the center is a sample
    let len = 25 * 25;
    let mut vol = ExtrapolationVolume {
        m: 25,
        n: 25,
        p: 1,
        samples: vec![128.0; len],
        status: vec![SampleStatus::Support; len],
        origin: (0, 0),
        n_prev: 0,
        layers: vec![LayerInfo {
            kappa: 0,
            frame: Some(0),
            shift: (0, 0),
            motion_error: None,
        }],
    };
    let center = vol.idx(12, 12, 0);
    let step = vol.idx(13, 12, 0);
    vol.status[step] = SampleStatus::Concealed;
    let params = WeightParams {
        omega_max: 0.675,
        t_e: 84.375,
        delta: 0.2,
        rho_hat: 0.8,
        fixed_weighting: false,
        omega_override: None,
    };
    let w = build_weights(&vol, &params).unwrap();
    ok &= (w.weights[center] - 0.675).abs() < 1e-12;
    // one step from the center, additionally attenuated as a concealed sample
    ok &= (w.weights[step] - 0.675 * 0.8 * 0.2).abs() < 1e-12;
    vol.status[step] = SampleStatus::Support;
    let w = build_weights(&vol, &params).unwrap();
    ok &= (w.weights[step] - 0.675 * 0.8).abs() < 1e-12;

    verdict("weighting point checks (ramp and sample weights)", ok);
}

/// The ramp regression recovers its parameters from exact and noisy samples.
#[test]
fn regression_recovery() {
    let exact: Vec<TrainingPair> = (0..2000)
        .map(|i| {
            let e = 84.375 * i as f64 / 1999.0;
            TrainingPair {
                error: e,
                best_omega: 0.675 * (1.0 - e / 84.375),
            }
        })
        .collect();
    let (om, te) = fit_weight_model(&exact).unwrap();
    let mut ok = (om - 0.675).abs() < 1e-9 && (te - 84.375).abs() < 1e-9;

    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy: Vec<TrainingPair> = exact
            .iter()
            .map(|p| {
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let n = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                TrainingPair {
                    error: p.error,
                    best_omega: p.best_omega + 0.05 * n,
                }
            })
            .collect();
        let (om, te) = fit_weight_model(&noisy).unwrap();
        ok &= (om - 0.675).abs() < 0.05 && (te - 84.375).abs() < 5.0;
    }
    verdict("regression recovery (exact and sigma=0.05 noise)", ok);
}

/// With one exact and one noisy reference, weighting by estimation quality
/// beats treating both references alike.
#[test]
fn content_adaptive_gain() {
    let mut ok = true;
    for (sigma, seed) in [(20.0, 7u64), (40.0, 8u64)] {
        let cur = synthetic::textured_frame(176, 144, seed);
        let noisy = synthetic::add_noise(&cur, sigma, seed + 50);
        let seq =
            VideoSequence::from_luma_frames(176, 144, vec![noisy, cur.clone(), cur]).unwrap();
        let mask = LossMask::checkerboard(176, 144, 3, 16, &[2], 0).unwrap();
        assert!(mask.lost_block_count() >= 50);
        let corrupted = mask.apply_loss(&seq, 0).unwrap();
        let mut psnrs = [0.0f64; 2];
        for (i, mode) in [Mode::ContentAdaptive, Mode::FixedWeighting].iter().enumerate() {
            let cfg = ConcealConfig {
                mode: *mode,
                ..ConcealConfig::default()
            };
            let (concealed, _) = conceal_sequence(&corrupted, &mask, &cfg, None).unwrap();
            psnrs[i] = psnr_blocks(&seq, &concealed, &mask).unwrap();
        }
        println!(
            "  sigma {sigma}: ca-mc-fse {:.4} dB, mc-fse {:.4} dB",
            psnrs[0], psnrs[1]
        );
        ok &= psnrs[0] >= psnrs[1] + 0.1;
    }
    verdict("content-adaptive gain >= 0.1 dB over fixed weighting", ok);
}

fn ordering_sequence() -> (VideoSequence, &'static str) {
    for path in [
        std::env::var("FOREMAN_CIF").unwrap_or_default(),
        "testdata/foreman_cif.yuv".to_string(),
    ] {
        if !path.is_empty() && std::path::Path::new(&path).exists() {
            if let Ok(seq) = VideoSequence::load(std::path::Path::new(&path), 352, 288, 14) {
                return (seq, "foreman cif");
            }
        }
    }
    let frames: Vec<Vec<u8>> = (0..14)
        .map(|t| synthetic::evolving_scene_frame(176, 144, t))
        .collect();
    (
        VideoSequence::from_luma_frames(176, 144, frames).unwrap(),
        "synthetic evolving scene",
    )
}

/// Full concealment clearly beats plain motion-compensated copying.
#[test]
fn baseline_ordering() {
    let (seq, material) = ordering_sequence();
    let loss_frames: Vec<usize> = (2..12).collect();
    let mask = LossMask::checkerboard(
        seq.width(),
        seq.height(),
        seq.frame_count(),
        16,
        &loss_frames,
        0,
    )
    .unwrap();
    let corrupted = mask.apply_loss(&seq, 0).unwrap();
    let mut psnrs = [0.0f64; 2];
    for (i, mode) in [Mode::ContentAdaptive, Mode::TemporalCopy].iter().enumerate() {
        let cfg = ConcealConfig {
            mode: *mode,
            n_prev: 2,
            n_follow: 1,
            ..ConcealConfig::default()
        };
        let (concealed, _) = conceal_sequence(&corrupted, &mask, &cfg, None).unwrap();
        psnrs[i] = psnr_blocks(&seq, &concealed, &mask).unwrap();
    }
    println!(
        "  {material}: ca-mc-fse {:.4} dB, temporal-copy {:.4} dB",
        psnrs[0], psnrs[1]
    );
    verdict(
        "baseline ordering: ca-mc-fse >= temporal copy + 1.0 dB",
        psnrs[0] >= psnrs[1] + 1.0,
    );
}

/// Determinism and containment of the full pipeline.
#[test]
fn pipeline_hygiene() {
    let base = synthetic::textured_frame(176, 144, 21);
    let frames: Vec<Vec<u8>> = (0..3)
        .map(|t| synthetic::translate(&base, 176, 144, -(t as i32), 2 * t as i32))
        .collect();
    let seq = VideoSequence::from_luma_frames(176, 144, frames).unwrap();
    let mask = LossMask::checkerboard(176, 144, 3, 16, &[2], 0).unwrap();
    let corrupted = mask.apply_loss(&seq, 0).unwrap();
    let cfg = ConcealConfig {
        fse: FseConfig {
            iterations: 100,
            ..FseConfig::default()
        },
        ..ConcealConfig::default()
    };

    let (out, _) = conceal_sequence(&corrupted, &mask, &cfg, None).unwrap();
    let mut ok = true;
    // every sample outside a lost block is carried through untouched
    for t in 0..3 {
        for y in 0..144i64 {
            for x in 0..176i64 {
                let lost = mask
                    .state_at_pixel(t, x, y)
                    .map(|s| s != vconceal::BlockState::Intact)
                    .unwrap_or(false);
                if !lost {
                    ok &= out.sample(x, y, t) == corrupted.sample(x, y, t);
                }
            }
        }
    }

    // re-runs are bit-identical
    let (again, _) = conceal_sequence(&corrupted, &mask, &cfg, None).unwrap();
    ok &= out == again;

    // thread count never changes the output
    for threads in [2usize, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let (pooled, _) =
            pool.install(|| conceal_sequence(&corrupted, &mask, &cfg, None).unwrap());
        ok &= pooled == out;
    }
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let (serial, _) = single.install(|| conceal_sequence(&corrupted, &mask, &cfg, None).unwrap());
    ok &= serial == out;

    verdict("pipeline hygiene (containment, re-runs, thread counts)", ok);
}
