//! Artificial block-loss patterns and the per-block concealment state.

use std::fs;
use std::path::Path;

use crate::error::{ConcealError, Result};
use crate::video::VideoSequence;

pub const DEFAULT_BLOCK_SIZE: usize = 16;

/// Addresses one block of a masked sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRef {
    pub frame: usize,
    pub bx: usize,
    pub by: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockState {
    Intact,
    Lost,
    Concealed,
}

/// Per-frame grid of block states. Blocks only ever transition
/// `Lost -> Concealed`; intact blocks never change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossMask {
    block_size: usize,
    blocks_w: usize,
    blocks_h: usize,
    grids: Vec<Vec<BlockState>>,
}

impl LossMask {
    pub fn new(width: usize, height: usize, frame_count: usize, block_size: usize) -> Result<Self> {
        if block_size == 0 || width % block_size != 0 || height % block_size != 0 {
            return Err(ConcealError::GeometryMismatch(format!(
                "{width}x{height} is not divisible by block size {block_size}"
            )));
        }
        Ok(Self {
            block_size,
            blocks_w: width / block_size,
            blocks_h: height / block_size,
            grids: vec![vec![BlockState::Intact; (width / block_size) * (height / block_size)]; frame_count],
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn blocks_w(&self) -> usize {
        self.blocks_w
    }

    pub fn blocks_h(&self) -> usize {
        self.blocks_h
    }

    pub fn frame_count(&self) -> usize {
        self.grids.len()
    }

    #[inline]
    pub fn state(&self, frame: usize, bx: usize, by: usize) -> BlockState {
        self.grids[frame][by * self.blocks_w + bx]
    }

    /// Block state for the block containing pixel (x, y), or `None` when the
    /// pixel lies outside the frame.
    #[inline]
    pub fn state_at_pixel(&self, frame: usize, x: i64, y: i64) -> Option<BlockState> {
        self.state_at_pixel_scaled(frame, x, y, self.block_size)
    }

    /// Same lookup against a plane where one mask block spans `block_size`
    /// pixels (8 for the chroma planes of an I420 sequence with 16x16 luma
    /// blocks).
    #[inline]
    pub fn state_at_pixel_scaled(
        &self,
        frame: usize,
        x: i64,
        y: i64,
        block_size: usize,
    ) -> Option<BlockState> {
        let w = (self.blocks_w * block_size) as i64;
        let h = (self.blocks_h * block_size) as i64;
        if x < 0 || y < 0 || x >= w || y >= h {
            return None;
        }
        Some(self.state(frame, x as usize / block_size, y as usize / block_size))
    }

    pub fn mark_lost(&mut self, frame: usize, bx: usize, by: usize) {
        self.grids[frame][by * self.blocks_w + bx] = BlockState::Lost;
    }

    pub fn mark_concealed(&mut self, frame: usize, bx: usize, by: usize) {
        let s = &mut self.grids[frame][by * self.blocks_w + bx];
        assert_eq!(*s, BlockState::Lost, "only lost blocks become concealed");
        *s = BlockState::Concealed;
    }

    pub fn lost_block_count(&self) -> usize {
        self.grids
            .iter()
            .flatten()
            .filter(|s| **s == BlockState::Lost)
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.grids
            .iter()
            .flatten()
            .all(|s| *s == BlockState::Intact)
    }

    fn check_frames(frames: &[usize], frame_count: usize) -> Result<()> {
        for &f in frames {
            if f >= frame_count {
                return Err(ConcealError::FrameOutOfRange {
                    frame: f,
                    count: frame_count,
                });
            }
        }
        Ok(())
    }

    /// Isolated-loss pattern: block (bx, by) is lost iff (bx+by) mod 2 equals
    /// `parity`, so no lost block has a lost 4-neighbor in the same frame.
    pub fn checkerboard(
        width: usize,
        height: usize,
        frame_count: usize,
        block_size: usize,
        frames: &[usize],
        parity: u8,
    ) -> Result<Self> {
        let mut mask = Self::new(width, height, frame_count, block_size)?;
        Self::check_frames(frames, frame_count)?;
        for &f in frames {
            for by in 0..mask.blocks_h {
                for bx in 0..mask.blocks_w {
                    if (bx + by) % 2 == parity as usize {
                        mask.mark_lost(f, bx, by);
                    }
                }
            }
        }
        Ok(mask)
    }

    /// Consecutive-loss pattern: entire block rows with (by mod 2 == phase)
    /// are lost.
    pub fn slices(
        width: usize,
        height: usize,
        frame_count: usize,
        block_size: usize,
        frames: &[usize],
        phase: u8,
    ) -> Result<Self> {
        let mut mask = Self::new(width, height, frame_count, block_size)?;
        Self::check_frames(frames, frame_count)?;
        for &f in frames {
            for by in 0..mask.blocks_h {
                if by % 2 == phase as usize {
                    for bx in 0..mask.blocks_w {
                        mask.mark_lost(f, bx, by);
                    }
                }
            }
        }
        Ok(mask)
    }

    /// Deterministic concealment order for one frame: raster scan over the
    /// lost blocks (top-to-bottom, left-to-right).
    pub fn concealment_order(&self, frame: usize) -> Vec<(usize, usize)> {
        let mut order = Vec::new();
        for by in 0..self.blocks_h {
            for bx in 0..self.blocks_w {
                if self.state(frame, bx, by) == BlockState::Lost {
                    order.push((bx, by));
                }
            }
        }
        order
    }

    fn check_geometry(&self, seq: &VideoSequence) -> Result<()> {
        if seq.width() != self.blocks_w * self.block_size
            || seq.height() != self.blocks_h * self.block_size
            || seq.frame_count() != self.grids.len()
        {
            return Err(ConcealError::GeometryMismatch(format!(
                "mask covers {}x{} blocks of {} over {} frames, sequence is {}x{} over {} frames",
                self.blocks_w,
                self.blocks_h,
                self.block_size,
                self.grids.len(),
                seq.width(),
                seq.height(),
                seq.frame_count()
            )));
        }
        Ok(())
    }

    /// Overwrites every sample inside a lost block with `fill`. The fill value
    /// is never read by the concealment engine; it only affects how the
    /// corrupted input looks.
    pub fn apply_loss(&self, seq: &VideoSequence, fill: u8) -> Result<VideoSequence> {
        self.check_geometry(seq)?;
        let mut out = seq.clone();
        let bs = self.block_size;
        let w = seq.width();
        for (f, grid) in self.grids.iter().enumerate() {
            for by in 0..self.blocks_h {
                for bx in 0..self.blocks_w {
                    if grid[by * self.blocks_w + bx] != BlockState::Lost {
                        continue;
                    }
                    let frame = &mut out.frames_mut()[f];
                    for y in by * bs..(by + 1) * bs {
                        for x in bx * bs..(bx + 1) * bs {
                            frame.y[y * w + x] = fill;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Text form: one `frame bx by` line per lost block, sorted, with `#`
    /// comments allowed.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# lost blocks: frame bx by (block size {}, grid {}x{}, {} frames)\n",
            self.block_size,
            self.blocks_w,
            self.blocks_h,
            self.grids.len()
        ));
        for (f, _) in self.grids.iter().enumerate() {
            for by in 0..self.blocks_h {
                for bx in 0..self.blocks_w {
                    if self.state(f, bx, by) != BlockState::Intact {
                        out.push_str(&format!("{f} {bx} {by}\n"));
                    }
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn parse_text(
        text: &str,
        width: usize,
        height: usize,
        frame_count: usize,
        block_size: usize,
    ) -> Result<Self> {
        let mut mask = Self::new(width, height, frame_count, block_size)?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(ConcealError::BadMaskFile {
                    line: i + 1,
                    msg: format!("expected `frame bx by`, got {line:?}"),
                });
            }
            let parse = |s: &str| -> Result<usize> {
                s.parse().map_err(|_| ConcealError::BadMaskFile {
                    line: i + 1,
                    msg: format!("not an integer: {s:?}"),
                })
            };
            let (f, bx, by) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
            if f >= frame_count || bx >= mask.blocks_w || by >= mask.blocks_h {
                return Err(ConcealError::BadMaskFile {
                    line: i + 1,
                    msg: format!("block ({f},{bx},{by}) outside geometry"),
                });
            }
            mask.mark_lost(f, bx, by);
        }
        Ok(mask)
    }

    pub fn load(
        path: &Path,
        width: usize,
        height: usize,
        frame_count: usize,
        block_size: usize,
    ) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_text(&text, width, height, frame_count, block_size)
    }
}
