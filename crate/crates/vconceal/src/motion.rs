//! Displacement estimation for a lost block from its intact surroundings.
//!
//! The block content itself is gone, so the intact ring around it is matched
//! against shifted versions of itself in each reference frame (full search
//! over the integer candidate grid), and the winning vector's root-mean-square
//! matching error is kept for the later weighting stage.

use crate::error::{ConcealError, Result};
use crate::loss::{BlockRef, BlockState, LossMask};
use crate::video::VideoSequence;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Result of the candidate search towards one reference frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionEstimate {
    /// Signed frame offset of the reference frame relative to the lost block's frame.
    pub kappa: i32,
    /// Winning displacement (dx, dy) in integer pixels.
    pub vector: (i32, i32),
    /// RMS luma difference of the ring under the winning displacement.
    pub error: f64,
    pub reliable: bool,
}

/// The ring of usable samples surrounding a lost block. Samples from
/// still-lost blocks are excluded; already-concealed samples are included
/// (they are the only available context for consecutive losses).
#[derive(Debug, Clone)]
pub struct SupportRing {
    pub pixels: Vec<(i32, i32)>,
    pub width: usize,
}

pub fn build_support_ring(
    mask: &LossMask,
    block: BlockRef,
    width: usize,
) -> Result<SupportRing> {
    let bs = mask.block_size() as i32;
    let w = width as i32;
    let x0 = block.bx as i32 * bs;
    let y0 = block.by as i32 * bs;
    let frame_w = (mask.blocks_w() * mask.block_size()) as i32;
    let frame_h = (mask.blocks_h() * mask.block_size()) as i32;
    let mut pixels = Vec::with_capacity(((bs + 2 * w) * (bs + 2 * w) - bs * bs) as usize);
    for y in y0 - w..y0 + bs + w {
        for x in x0 - w..x0 + bs + w {
            if x >= x0 && x < x0 + bs && y >= y0 && y < y0 + bs {
                continue; // block footprint itself
            }
            if x < 0 || y < 0 || x >= frame_w || y >= frame_h {
                continue; // clipped at frame bounds
            }
            match mask
                .state_at_pixel(block.frame, x as i64, y as i64)
                .expect("in-bounds")
            {
                BlockState::Lost => {}
                BlockState::Intact | BlockState::Concealed => pixels.push((x, y)),
            }
        }
    }
    if pixels.is_empty() {
        return Err(ConcealError::EmptyRing);
    }
    Ok(SupportRing { pixels, width })
}

/// RMS difference between the ring in frame `tau` and its shifted counterpart
/// in frame `tau + kappa`. Shifted reads use the sequence boundary policy.
pub fn match_error(
    seq: &VideoSequence,
    ring: &SupportRing,
    tau: usize,
    candidate: (i32, i32),
    kappa: i32,
) -> f64 {
    debug_assert!(!ring.pixels.is_empty());
    let reference = (tau as i64 + kappa as i64) as usize;
    let (dx, dy) = (candidate.0 as i64, candidate.1 as i64);
    let mut acc = 0.0f64;
    for &(x, y) in &ring.pixels {
        let a = seq.sample(x as i64, y as i64, tau) as f64;
        let b = seq.sample(x as i64 + dx, y as i64 + dy, reference) as f64;
        let d = a - b;
        acc += d * d;
    }
    (acc / ring.pixels.len() as f64).sqrt()
}

/// Candidate ordering for the exhaustive grid; also defines the tie-break:
/// smaller |dx|+|dy| first, then smaller dy, then smaller dx.
#[inline]
fn better(err: f64, cand: (i32, i32), best_err: f64, best: (i32, i32)) -> bool {
    if err != best_err {
        return err < best_err;
    }
    let key = (cand.0.abs() + cand.1.abs(), cand.1, cand.0);
    let best_key = (best.0.abs() + best.1.abs(), best.1, best.0);
    key < best_key
}

/// Exhaustive search over all (2*d_max+1)^2 integer candidates for the
/// reference frame at offset `kappa`.
pub fn estimate_motion(
    seq: &VideoSequence,
    ring: &SupportRing,
    tau: usize,
    kappa: i32,
    d_max: i32,
) -> MotionEstimate {
    let side = (2 * d_max + 1) as usize;
    let candidates: Vec<(i32, i32)> = (0..side * side)
        .map(|i| {
            let dy = (i / side) as i32 - d_max;
            let dx = (i % side) as i32 - d_max;
            (dx, dy)
        })
        .collect();

    #[cfg(feature = "parallel")]
    let errors: Vec<f64> = candidates
        .par_iter()
        .map(|&c| match_error(seq, ring, tau, c, kappa))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let errors: Vec<f64> = candidates
        .iter()
        .map(|&c| match_error(seq, ring, tau, c, kappa))
        .collect();

    // Deterministic reduction: tie-break applied after collecting all errors.
    let mut best = candidates[0];
    let mut best_err = errors[0];
    for (&c, &e) in candidates.iter().zip(&errors).skip(1) {
        if better(e, c, best_err, best) {
            best = c;
            best_err = e;
        }
    }
    MotionEstimate {
        kappa,
        vector: best,
        error: best_err,
        reliable: false,
    }
}

/// Flags each estimate by the two quality criteria: absolute error against
/// `t_abs`, and homogeneity across reference frames against `t_rel` (error
/// ratio vs. the best frame, floored at 1). Returns true only when every
/// estimate passes; the pipeline then uses the aligned volume, otherwise it
/// falls back to the unaligned one for all layers.
pub fn assess_reliability(estimates: &mut [MotionEstimate], t_abs: f64, t_rel: f64) -> bool {
    if estimates.is_empty() {
        return true;
    }
    let min_err = estimates
        .iter()
        .map(|e| e.error)
        .fold(f64::INFINITY, f64::min);
    let floor = min_err.max(1.0);
    let mut all = true;
    for e in estimates.iter_mut() {
        e.reliable = e.error <= t_abs && e.error <= t_rel * floor;
        all &= e.reliable;
    }
    all
}
