//! End-to-end concealment: per lost block, estimate motion, gate reliability,
//! cut the (aligned) volume, build weights, generate the model, and write the
//! extrapolated block back. Frames are processed in temporal order and blocks
//! in raster order; already-concealed blocks feed later ones.

use crate::error::{ConcealError, Result};
use crate::fse::{generate_model_fast, render_model, FseConfig};
use crate::loss::{BlockRef, BlockState, LossMask};
use crate::motion::{assess_reliability, build_support_ring, estimate_motion, MotionEstimate};
use crate::video::{Plane, VideoSequence};
use crate::volume::{build_weights, extract_volume, omega, VolumeParams, WeightParams};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Per-layer weighting scaled by motion-estimation quality.
    ContentAdaptive,
    /// Fixed exponential weighting only (per-layer factor pinned to 1).
    FixedWeighting,
    /// Motion-compensated copy of the previous frame's co-located block.
    TemporalCopy,
}

#[derive(Debug, Clone)]
pub struct ConcealConfig {
    pub n_prev: usize,
    pub n_follow: usize,
    pub d_max: i32,
    pub ring_width: usize,
    pub t_abs: f64,
    pub t_rel: f64,
    pub omega_max: f64,
    pub t_e: f64,
    pub delta: f64,
    pub block_size: usize,
    pub border: usize,
    pub mode: Mode,
    pub fse: FseConfig,
    /// Training hook: uniform per-layer factor for all reference layers,
    /// bypassing the motion-error ramp.
    pub omega_override: Option<f64>,
    /// Also conceal the chroma planes at half resolution, reusing the luma
    /// motion vectors.
    pub conceal_chroma: bool,
}

impl Default for ConcealConfig {
    fn default() -> Self {
        Self {
            n_prev: 2,
            n_follow: 0,
            d_max: 16,
            ring_width: 4,
            t_abs: 10.0,
            t_rel: 3.0,
            omega_max: 0.675,
            t_e: 84.375,
            delta: 0.2,
            block_size: 16,
            border: 16,
            mode: Mode::ContentAdaptive,
            fse: FseConfig::default(),
            omega_override: None,
            conceal_chroma: false,
        }
    }
}

impl ConcealConfig {
    fn volume_params(&self) -> VolumeParams {
        VolumeParams {
            block_size: self.block_size,
            border: self.border,
            n_prev: self.n_prev,
            n_follow: self.n_follow,
        }
    }

    fn weight_params(&self) -> WeightParams {
        WeightParams {
            omega_max: self.omega_max,
            t_e: self.t_e,
            delta: self.delta,
            rho_hat: self.fse.rho_hat,
            fixed_weighting: self.mode == Mode::FixedWeighting,
            omega_override: self.omega_override,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerReport {
    pub kappa: i32,
    pub dx: i32,
    pub dy: i32,
    pub error: f64,
    pub reliable: bool,
    pub omega: f64,
}

#[derive(Debug, Clone)]
pub struct BlockReport {
    pub frame: usize,
    pub bx: usize,
    pub by: usize,
    pub layers: Vec<LayerReport>,
    pub psnr: Option<f64>,
    /// The block had no usable support and was filled from its nearest
    /// non-lost neighbors.
    pub fallback: bool,
}

/// Concealed samples for one block, computed without mutating anything.
struct BlockOutcome {
    luma: Vec<u8>,
    chroma: Option<[Vec<u8>; 2]>,
    report: BlockReport,
}

fn layer_omega_for_report(cfg: &ConcealConfig, est: &MotionEstimate) -> f64 {
    match cfg.mode {
        Mode::ContentAdaptive => match cfg.omega_override {
            Some(w) => w,
            None => omega(est.error, cfg.omega_max, cfg.t_e),
        },
        Mode::FixedWeighting => 1.0,
        Mode::TemporalCopy => 0.0,
    }
}

/// Last-resort fill: each pixel takes the nearest (Chebyshev, deterministic
/// scan order) usable sample of the same plane, 128 if the whole frame is
/// lost. Concealed samples are only accepted within one block of the pixel;
/// farther out only intact ones count, which keeps the fill independent of
/// the in-frame concealment schedule.
fn neighbor_fill(
    buf: &VideoSequence,
    mask: &LossMask,
    plane: Plane,
    frame: usize,
    bx: usize,
    by: usize,
    block_size: usize,
) -> Vec<u8> {
    let (pw, ph) = buf.plane_dims(plane);
    let mut out = Vec::with_capacity(block_size * block_size);
    for ly in 0..block_size {
        for lx in 0..block_size {
            let px = (bx * block_size + lx) as i64;
            let py = (by * block_size + ly) as i64;
            let mut value = 128u8;
            'search: for radius in 1..(pw.max(ph) as i64) {
                for y in py - radius..=py + radius {
                    for x in px - radius..=px + radius {
                        if (y - py).abs() < radius && (x - px).abs() < radius {
                            continue; // interior already visited
                        }
                        if x < 0 || y < 0 || x >= pw as i64 || y >= ph as i64 {
                            continue;
                        }
                        let usable = match mask.state_at_pixel_scaled(frame, x, y, block_size) {
                            Some(BlockState::Lost) => false,
                            Some(BlockState::Concealed) => radius <= block_size as i64,
                            _ => true,
                        };
                        if usable {
                            value = buf.sample_plane(plane, x, y, frame);
                            break 'search;
                        }
                    }
                }
            }
            out.push(value);
        }
    }
    out
}

fn fallback_outcome(
    buf: &VideoSequence,
    mask: &LossMask,
    block: BlockRef,
    cfg: &ConcealConfig,
) -> BlockOutcome {
    let luma = neighbor_fill(buf, mask, Plane::Y, block.frame, block.bx, block.by, cfg.block_size);
    let chroma = cfg.conceal_chroma.then(|| {
        [
            neighbor_fill(buf, mask, Plane::U, block.frame, block.bx, block.by, cfg.block_size / 2),
            neighbor_fill(buf, mask, Plane::V, block.frame, block.bx, block.by, cfg.block_size / 2),
        ]
    });
    BlockOutcome {
        luma,
        chroma,
        report: BlockReport {
            frame: block.frame,
            bx: block.bx,
            by: block.by,
            layers: Vec::new(),
            psnr: None,
            fallback: true,
        },
    }
}

fn temporal_copy_outcome(
    buf: &VideoSequence,
    mask: &LossMask,
    block: BlockRef,
    estimates: &[MotionEstimate],
    cfg: &ConcealConfig,
) -> BlockOutcome {
    // winning vector towards the previous frame; the following frame stands
    // in when the loss is in the first frame
    let est = estimates
        .iter()
        .find(|e| e.kappa == -1)
        .or_else(|| estimates.iter().find(|e| e.kappa == 1));
    let Some(est) = est else {
        return fallback_outcome(buf, mask, block, cfg);
    };
    let mut gated = [*est];
    let reliable = assess_reliability(&mut gated, cfg.t_abs, cfg.t_rel);
    let vector = if reliable { est.vector } else { (0, 0) };
    let reference = (block.frame as i64 + est.kappa as i64) as usize;
    let bs = cfg.block_size;
    let mut luma = Vec::with_capacity(bs * bs);
    for ly in 0..bs {
        for lx in 0..bs {
            let x = (block.bx * bs + lx) as i64 + vector.0 as i64;
            let y = (block.by * bs + ly) as i64 + vector.1 as i64;
            luma.push(buf.sample(x, y, reference));
        }
    }
    let chroma = cfg.conceal_chroma.then(|| {
        let hb = bs / 2;
        let copy_plane = |plane: Plane| {
            let mut out = Vec::with_capacity(hb * hb);
            for ly in 0..hb {
                for lx in 0..hb {
                    let x = (block.bx * hb + lx) as i64 + (vector.0 / 2) as i64;
                    let y = (block.by * hb + ly) as i64 + (vector.1 / 2) as i64;
                    out.push(buf.sample_plane(plane, x, y, reference));
                }
            }
            out
        };
        [copy_plane(Plane::U), copy_plane(Plane::V)]
    });
    BlockOutcome {
        luma,
        chroma,
        report: BlockReport {
            frame: block.frame,
            bx: block.bx,
            by: block.by,
            layers: vec![LayerReport {
                kappa: est.kappa,
                dx: est.vector.0,
                dy: est.vector.1,
                error: est.error,
                reliable: gated[0].reliable,
                omega: 0.0,
            }],
            psnr: None,
            fallback: false,
        },
    }
}

fn fse_plane(
    buf: &VideoSequence,
    mask: &LossMask,
    plane: Plane,
    block: BlockRef,
    estimates: &[MotionEstimate],
    aligned: bool,
    params: &VolumeParams,
    cfg: &ConcealConfig,
    fse_cfg: &FseConfig,
) -> Result<Vec<u8>> {
    let vol = extract_volume(buf, mask, plane, block, estimates, aligned, params);
    let weights = build_weights(&vol, &cfg.weight_params())?;
    let model = generate_model_fast(&vol, &weights, fse_cfg)?;
    let bs = params.block_size;
    let coords: Vec<(usize, usize, usize)> = (0..bs)
        .flat_map(|ly| (0..bs).map(move |lx| (params.border + lx, params.border + ly, params.n_prev)))
        .collect();
    let rendered = render_model(&model, &coords);
    Ok(rendered
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect())
}

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

fn compute_block(
    buf: &VideoSequence,
    mask: &LossMask,
    block: BlockRef,
    cfg: &ConcealConfig,
) -> Result<BlockOutcome> {
    debug_assert_eq!(mask.state(block.frame, block.bx, block.by), BlockState::Lost);
    let ring = match build_support_ring(mask, block, cfg.ring_width) {
        Ok(r) => r,
        Err(ConcealError::EmptyRing) => return Ok(fallback_outcome(buf, mask, block, cfg)),
        Err(e) => return Err(e),
    };

    let tau = block.frame;
    let mut estimates: Vec<MotionEstimate> = (-(cfg.n_prev as i32)..=cfg.n_follow as i32)
        .filter(|&k| k != 0)
        .filter(|&k| {
            let t = tau as i64 + k as i64;
            t >= 0 && t < buf.frame_count() as i64
        })
        .map(|k| estimate_motion(buf, &ring, tau, k, cfg.d_max))
        .collect();

    if cfg.mode == Mode::TemporalCopy {
        return Ok(temporal_copy_outcome(buf, mask, block, &estimates, cfg));
    }

    let aligned = assess_reliability(&mut estimates, cfg.t_abs, cfg.t_rel);

    let luma = match fse_plane(
        buf,
        mask,
        Plane::Y,
        block,
        &estimates,
        aligned,
        &cfg.volume_params(),
        cfg,
        &cfg.fse,
    ) {
        Ok(l) => l,
        Err(ConcealError::NoSupport) => return Ok(fallback_outcome(buf, mask, block, cfg)),
        Err(e) => return Err(e),
    };

    let chroma = if cfg.conceal_chroma {
        let halved: Vec<MotionEstimate> = estimates
            .iter()
            .map(|e| MotionEstimate {
                vector: (e.vector.0 / 2, e.vector.1 / 2),
                ..*e
            })
            .collect();
        let params = VolumeParams {
            block_size: cfg.block_size / 2,
            border: cfg.border / 2,
            n_prev: cfg.n_prev,
            n_follow: cfg.n_follow,
        };
        let side = next_pow2(params.side());
        let fse_cfg = FseConfig {
            fft_dims: (side, side, cfg.fse.fft_dims.2),
            ..cfg.fse.clone()
        };
        let mut planes = Vec::with_capacity(2);
        for plane in [Plane::U, Plane::V] {
            match fse_plane(buf, mask, plane, block, &halved, aligned, &params, cfg, &fse_cfg) {
                Ok(p) => planes.push(p),
                Err(ConcealError::NoSupport) => planes.push(neighbor_fill(
                    buf,
                    mask,
                    plane,
                    block.frame,
                    block.bx,
                    block.by,
                    params.block_size,
                )),
                Err(e) => return Err(e),
            }
        }
        let v = planes.pop().unwrap();
        let u = planes.pop().unwrap();
        Some([u, v])
    } else {
        None
    };

    let layers = estimates
        .iter()
        .map(|e| LayerReport {
            kappa: e.kappa,
            dx: e.vector.0,
            dy: e.vector.1,
            error: e.error,
            reliable: e.reliable,
            omega: layer_omega_for_report(cfg, e),
        })
        .collect();

    Ok(BlockOutcome {
        luma,
        chroma,
        report: BlockReport {
            frame: block.frame,
            bx: block.bx,
            by: block.by,
            layers,
            psnr: None,
            fallback: false,
        },
    })
}

fn write_block(buf: &mut VideoSequence, block: BlockRef, cfg: &ConcealConfig, outcome: &BlockOutcome) {
    let bs = cfg.block_size;
    for ly in 0..bs {
        for lx in 0..bs {
            buf.set_sample_plane(
                Plane::Y,
                block.bx * bs + lx,
                block.by * bs + ly,
                block.frame,
                outcome.luma[ly * bs + lx],
            );
        }
    }
    if let Some(chroma) = &outcome.chroma {
        let hb = bs / 2;
        for (plane, data) in [Plane::U, Plane::V].iter().zip(chroma) {
            for ly in 0..hb {
                for lx in 0..hb {
                    buf.set_sample_plane(
                        *plane,
                        block.bx * hb + lx,
                        block.by * hb + ly,
                        block.frame,
                        data[ly * hb + lx],
                    );
                }
            }
        }
    }
}

fn block_psnr(original: &VideoSequence, buf: &VideoSequence, block: BlockRef, bs: usize) -> f64 {
    let mut acc = 0.0f64;
    for ly in 0..bs {
        for lx in 0..bs {
            let x = (block.bx * bs + lx) as i64;
            let y = (block.by * bs + ly) as i64;
            let d = original.sample(x, y, block.frame) as f64 - buf.sample(x, y, block.frame) as f64;
            acc += d * d;
        }
    }
    let mse = acc / (bs * bs) as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

/// Conceals one lost block in place and flips its mask state.
pub fn conceal_block(
    buf: &mut VideoSequence,
    mask: &mut LossMask,
    block: BlockRef,
    cfg: &ConcealConfig,
) -> Result<BlockReport> {
    let outcome = compute_block(buf, mask, block, cfg)?;
    write_block(buf, block, cfg, &outcome);
    mask.mark_concealed(block.frame, block.bx, block.by);
    Ok(outcome.report)
}

/// Groups the raster-ordered lost blocks of one frame into waves such that no
/// two blocks of a wave are within Chebyshev distance 1 of each other and
/// every block's in-frame dependencies sit in earlier waves. Executing waves
/// in order, blocks within a wave in any order, is equivalent to the
/// sequential raster scan: a block only ever reads samples within one border
/// (16 px) of its footprint in its own frame, which reaches exactly the
/// adjacent blocks.
fn schedule_waves(order: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
    let mut wave_of: Vec<usize> = Vec::with_capacity(order.len());
    let mut waves: Vec<Vec<(usize, usize)>> = Vec::new();
    for (i, &(bx, by)) in order.iter().enumerate() {
        let mut wave = 0usize;
        for (j, &(ox, oy)) in order[..i].iter().enumerate() {
            let dep = (bx as i64 - ox as i64).abs() <= 1 && (by as i64 - oy as i64).abs() <= 1;
            if dep {
                wave = wave.max(wave_of[j] + 1);
            }
        }
        wave_of.push(wave);
        if waves.len() <= wave {
            waves.resize(wave + 1, Vec::new());
        }
        waves[wave].push((bx, by));
    }
    waves
}

/// Conceals every lost block of the sequence. Frames are processed in
/// temporal order, blocks per the deterministic concealment order; samples
/// outside lost blocks are never modified. When `original` is given, each
/// report row carries the block's PSNR against it.
pub fn conceal_sequence(
    seq: &VideoSequence,
    mask: &LossMask,
    cfg: &ConcealConfig,
    original: Option<&VideoSequence>,
) -> Result<(VideoSequence, Vec<BlockReport>)> {
    if seq.width() != mask.blocks_w() * mask.block_size()
        || seq.height() != mask.blocks_h() * mask.block_size()
        || seq.frame_count() != mask.frame_count()
    {
        return Err(ConcealError::GeometryMismatch(
            "mask geometry does not match sequence".into(),
        ));
    }
    let mut buf = seq.clone();
    let mut work = mask.clone();
    let mut reports = Vec::new();

    for frame in 0..seq.frame_count() {
        let order = work.concealment_order(frame);
        for wave in schedule_waves(&order) {
            let blocks: Vec<BlockRef> = wave
                .iter()
                .map(|&(bx, by)| BlockRef { frame, bx, by })
                .collect();

            #[cfg(feature = "parallel")]
            let outcomes: Vec<BlockOutcome> = blocks
                .par_iter()
                .map(|&b| compute_block(&buf, &work, b, cfg))
                .collect::<Result<Vec<_>>>()?;
            #[cfg(not(feature = "parallel"))]
            let outcomes: Vec<BlockOutcome> = blocks
                .iter()
                .map(|&b| compute_block(&buf, &work, b, cfg))
                .collect::<Result<Vec<_>>>()?;

            for (block, mut outcome) in blocks.into_iter().zip(outcomes) {
                write_block(&mut buf, block, cfg, &outcome);
                work.mark_concealed(block.frame, block.bx, block.by);
                if let Some(orig) = original {
                    outcome.report.psnr = Some(block_psnr(orig, &buf, block, cfg.block_size));
                }
                reports.push(outcome.report);
            }
        }
    }
    Ok((buf, reports))
}

/// Fixed-header CSV serialization of the per-block report; one line per
/// reference layer (one placeholder line for blocks without references).
pub fn report_csv(reports: &[BlockReport]) -> String {
    let mut out = String::from("frame,bx,by,kappa,dx,dy,err,reliable,omega,psnr\n");
    let fmt_psnr = |p: Option<f64>| match p {
        None => String::new(),
        Some(v) if v.is_infinite() => "99.99".to_string(),
        Some(v) => format!("{v:.4}"),
    };
    for r in reports {
        if r.layers.is_empty() {
            out.push_str(&format!(
                "{},{},{},0,0,0,0.000000,true,0.000000,{}\n",
                r.frame,
                r.bx,
                r.by,
                fmt_psnr(r.psnr)
            ));
            continue;
        }
        for l in &r.layers {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.6},{},{:.6},{}\n",
                r.frame,
                r.bx,
                r.by,
                l.kappa,
                l.dx,
                l.dy,
                l.error,
                l.reliable,
                l.omega,
                fmt_psnr(r.psnr)
            ));
        }
    }
    out
}
