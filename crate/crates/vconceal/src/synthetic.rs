//! Deterministic synthetic test material.
//!
//! The evaluation harness and the benchmark suite need textured frames with
//! controlled motion and controlled cross-frame similarity; everything here is
//! a pure function of its seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Band-limited pseudo-random texture: seeded white noise smoothed by a few
/// box-blur passes. Locally distinctive, so block matching has a unique
/// minimum, but smooth enough to resemble natural content.
pub fn textured_frame(width: usize, height: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f: Vec<f64> = (0..width * height).map(|_| rng.gen_range(0.0..256.0)).collect();
    for _ in 0..2 {
        f = box_blur(&f, width, height, 2);
    }
    // stretch back to a wide value range after blurring
    let (lo, hi) = f.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    f.iter()
        .map(|&v| (16.0 + (v - lo) / (hi - lo) * 224.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

fn box_blur(f: &[f64], width: usize, height: usize, radius: i64) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    let norm = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let mut acc = 0.0;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let sx = (x + dx).clamp(0, width as i64 - 1) as usize;
                    let sy = (y + dy).clamp(0, height as i64 - 1) as usize;
                    acc += f[sy * width + sx];
                }
            }
            out[(y as usize) * width + x as usize] = acc / norm;
        }
    }
    out
}

/// out[x, y] = in[x + dx, y + dy] with edge replication.
pub fn translate(frame: &[u8], width: usize, height: usize, dx: i32, dy: i32) -> Vec<u8> {
    let mut out = vec![0u8; width * height];
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let sx = (x + dx as i64).clamp(0, width as i64 - 1) as usize;
            let sy = (y + dy as i64).clamp(0, height as i64 - 1) as usize;
            out[(y as usize) * width + x as usize] = frame[sy * width + sx];
        }
    }
    out
}

/// Adds seeded zero-mean Gaussian noise, clamping to [0, 255].
pub fn add_noise(frame: &[u8], sigma: f64, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    frame
        .iter()
        .map(|&v| {
            // Box-Muller
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let n = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            (v as f64 + sigma * n).round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Smooth time-varying scene that no pure temporal copy tracks well:
/// drifting sinusoid mixture with a per-frame phase evolution and a mild
/// brightness ramp.
pub fn evolving_scene_frame(width: usize, height: usize, t: usize) -> Vec<u8> {
    let tt = t as f64;
    let mut out = vec![0u8; width * height];
    for y in 0..height {
        for x in 0..width {
            let xf = x as f64;
            let yf = y as f64;
            let v = 128.0
                + 3.0 * tt
                + 42.0 * (0.055 * xf + 0.021 * yf + 0.31 * tt).sin()
                + 30.0 * (0.017 * xf - 0.047 * yf + 0.23 * tt + 1.3).sin()
                + 22.0 * (0.0027 * xf * yf / (1.0 + 0.002 * yf) + 0.41 * tt).sin()
                + 14.0 * (0.09 * xf - 0.012 * yf - 0.17 * tt + 0.7).cos();
            out[y * width + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}
