//! PSNR over reconstructed blocks, algorithm comparison runs, and the
//! training procedure that fits the (omega_max, t_e) weighting ramp.

use crate::error::{ConcealError, Result};
use crate::loss::{BlockRef, BlockState, LossMask};
use crate::pipeline::{conceal_block, conceal_sequence, ConcealConfig, Mode};
use crate::video::VideoSequence;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// One training observation: the motion error of a block paired with the
/// uniform reference-layer weight that maximized its reconstruction PSNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingPair {
    pub error: f64,
    pub best_omega: f64,
}

/// PSNR over lost-block samples only, accumulated across all frames.
/// An exact match returns +inf (capped at 99.99 when serialized).
pub fn psnr_blocks(
    original: &VideoSequence,
    concealed: &VideoSequence,
    mask: &LossMask,
) -> Result<f64> {
    if original.width() != concealed.width()
        || original.height() != concealed.height()
        || original.frame_count() != concealed.frame_count()
    {
        return Err(ConcealError::GeometryMismatch(
            "original and concealed sequences differ in geometry".into(),
        ));
    }
    let bs = mask.block_size();
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for frame in 0..mask.frame_count() {
        for by in 0..mask.blocks_h() {
            for bx in 0..mask.blocks_w() {
                if mask.state(frame, bx, by) == BlockState::Intact {
                    continue;
                }
                for y in by * bs..(by + 1) * bs {
                    for x in bx * bs..(bx + 1) * bs {
                        let d = original.sample(x as i64, y as i64, frame) as f64
                            - concealed.sample(x as i64, y as i64, frame) as f64;
                        acc += d * d;
                        count += 1;
                    }
                }
            }
        }
    }
    if count == 0 {
        return Err(ConcealError::EmptyMask);
    }
    let mse = acc / count as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    })
}

pub fn psnr_cap(psnr: f64) -> f64 {
    if psnr.is_infinite() {
        99.99
    } else {
        psnr
    }
}

fn block_psnr(original: &VideoSequence, buf: &VideoSequence, block: BlockRef, bs: usize) -> f64 {
    let mut acc = 0.0;
    for ly in 0..bs {
        for lx in 0..bs {
            let x = (block.bx * bs + lx) as i64;
            let y = (block.by * bs + ly) as i64;
            let d =
                original.sample(x, y, block.frame) as f64 - buf.sample(x, y, block.frame) as f64;
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

/// Conceals one block of the undistorted sequence once per grid value, with
/// the candidate weight applied uniformly to all reference layers, and keeps
/// the weight that maximizes the block PSNR (ties go to the smaller weight,
/// so the search is invariant under grid reordering). The paired motion
/// error is the mean over the reliable reference-frame estimates, over all
/// of them when none passes the gate.
pub fn best_weight_search(
    original: &VideoSequence,
    mask: &LossMask,
    block: BlockRef,
    cfg: &ConcealConfig,
    omega_grid: &[f64],
) -> Result<TrainingPair> {
    if omega_grid.is_empty() {
        return Err(ConcealError::Invalid("empty weight grid".into()));
    }
    let corrupted = mask.apply_loss(original, 0)?;
    let mut best: Option<(f64, f64)> = None; // (psnr, omega)
    let mut rep_error = 0.0f64;
    for &om in omega_grid {
        let mut buf = corrupted.clone();
        let mut work = mask.clone();
        let mut trial = cfg.clone();
        trial.omega_override = Some(om);
        trial.t_e = f64::INFINITY;
        let report = conceal_block(&mut buf, &mut work, block, &trial)?;
        let psnr = block_psnr(original, &buf, block, cfg.block_size);
        let reliable: Vec<f64> = report
            .layers
            .iter()
            .filter(|l| l.reliable)
            .map(|l| l.error)
            .collect();
        let errors: Vec<f64> = if reliable.is_empty() {
            report.layers.iter().map(|l| l.error).collect()
        } else {
            reliable
        };
        if !errors.is_empty() {
            rep_error = errors.iter().sum::<f64>() / errors.len() as f64;
        }
        let better = match best {
            None => true,
            Some((bp, bo)) => psnr > bp || (psnr == bp && om < bo),
        };
        if better {
            best = Some((psnr, om));
        }
    }
    let (_, best_omega) = best.unwrap();
    Ok(TrainingPair {
        error: rep_error,
        best_omega,
    })
}

/// Ordinary least squares fit of best_omega against error; the intercept is
/// omega_max and the zero crossing -a/b is t_e. Data without a decreasing
/// trend (b >= 0) or with a non-positive intercept is rejected.
pub fn fit_weight_model(pairs: &[TrainingPair]) -> Result<(f64, f64)> {
    let n = pairs.len();
    if n < 2 {
        return Err(ConcealError::InsufficientPairs(n));
    }
    let mean_x = pairs.iter().map(|p| p.error).sum::<f64>() / n as f64;
    let mean_y = pairs.iter().map(|p| p.best_omega).sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for p in pairs {
        sxx += (p.error - mean_x) * (p.error - mean_x);
        sxy += (p.error - mean_x) * (p.best_omega - mean_y);
    }
    if sxx == 0.0 {
        return Err(ConcealError::InsufficientPairs(1));
    }
    let b = sxy / sxx;
    let a = mean_y - b * mean_x;
    if b >= 0.0 {
        return Err(ConcealError::DegenerateFit(format!(
            "slope {b:.6} is not decreasing"
        )));
    }
    if a <= 0.0 {
        return Err(ConcealError::DegenerateFit(format!(
            "intercept {a:.6} is not positive"
        )));
    }
    Ok((a, -a / b))
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub mask_name: String,
    pub mode: Mode,
    pub psnr: f64,
    pub blocks: usize,
}

#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    /// (mask, mode_a, mode_b, psnr_a - psnr_b) for every mode pair per mask.
    pub gains: Vec<(String, Mode, Mode, f64)>,
}

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::ContentAdaptive => "ca-mc-fse",
        Mode::FixedWeighting => "mc-fse",
        Mode::TemporalCopy => "temporal-copy",
    }
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mask,mode,psnr,blocks\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.4},{}\n",
                r.mask_name,
                mode_name(r.mode),
                psnr_cap(r.psnr),
                r.blocks
            ));
        }
        if !self.gains.is_empty() {
            out.push_str("mask,gain_of,over,db\n");
            for (mask, a, b, g) in &self.gains {
                out.push_str(&format!(
                    "{},{},{},{:.4}\n",
                    mask,
                    mode_name(*a),
                    mode_name(*b),
                    g
                ));
            }
        }
        out
    }
}

/// Conceals the sequence once per (mask, mode) cell and tabulates the PSNR
/// over the lost blocks, plus pairwise mode gains per mask.
pub fn run_comparison(
    original: &VideoSequence,
    masks: &[(String, LossMask)],
    modes: &[Mode],
    cfg: &ConcealConfig,
) -> Result<ComparisonTable> {
    let cells: Vec<(usize, usize)> = (0..masks.len())
        .flat_map(|i| (0..modes.len()).map(move |j| (i, j)))
        .collect();

    let run_cell = |&(i, j): &(usize, usize)| -> Result<ComparisonRow> {
        let (name, mask) = &masks[i];
        let corrupted = mask.apply_loss(original, 0)?;
        let mut cell_cfg = cfg.clone();
        cell_cfg.mode = modes[j];
        let (concealed, reports) = conceal_sequence(&corrupted, mask, &cell_cfg, None)?;
        let psnr = psnr_blocks(original, &concealed, mask)?;
        Ok(ComparisonRow {
            mask_name: name.clone(),
            mode: modes[j],
            psnr,
            blocks: reports.len(),
        })
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<ComparisonRow> = cells.par_iter().map(run_cell).collect::<Result<Vec<_>>>()?;
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<ComparisonRow> = cells.iter().map(run_cell).collect::<Result<Vec<_>>>()?;

    let mut gains = Vec::new();
    for (name, _) in masks {
        for a in 0..modes.len() {
            for b in a + 1..modes.len() {
                let pa = rows
                    .iter()
                    .find(|r| &r.mask_name == name && r.mode == modes[a])
                    .unwrap()
                    .psnr;
                let pb = rows
                    .iter()
                    .find(|r| &r.mask_name == name && r.mode == modes[b])
                    .unwrap()
                    .psnr;
                gains.push((name.clone(), modes[a], modes[b], pa - pb));
            }
        }
    }
    Ok(ComparisonTable { rows, gains })
}

pub fn training_pairs_csv(pairs: &[TrainingPair]) -> String {
    let mut out = String::from("error,best_omega\n");
    for p in pairs {
        out.push_str(&format!("{:.6},{:.6}\n", p.error, p.best_omega));
    }
    out
}
