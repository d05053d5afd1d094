//! Raw planar I420 video sequences with explicit geometry.
//!
//! All out-of-frame sample access goes through a single boundary policy:
//! coordinates are clamped to the frame edge (edge replication).

use std::fs;
use std::path::Path;

use crate::error::{ConcealError, Result};

/// Which plane of an I420 frame is being addressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    Y,
    U,
    V,
}

/// One decoded frame: full-resolution luma plus quarter-size chroma planes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub y: Vec<u8>,
    pub u: Vec<u8>,
    pub v: Vec<u8>,
}

/// An ordered set of frames sharing one geometry. Immutable after load;
/// the pipeline mutates an explicit clone of the buffer, never the original.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoSequence {
    width: usize,
    height: usize,
    frames: Vec<Frame>,
}

impl VideoSequence {
    /// Builds a sequence from raw luma planes; chroma is initialized neutral (128).
    /// Dimensions must be even so the sequence stays representable as I420.
    pub fn from_luma_frames(width: usize, height: usize, luma: Vec<Vec<u8>>) -> Result<Self> {
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
            return Err(ConcealError::BadDimensions { width, height });
        }
        let chroma_len = (width / 2) * (height / 2);
        let frames = luma
            .into_iter()
            .map(|y| {
                assert_eq!(y.len(), width * height, "luma plane size mismatch");
                Frame {
                    y,
                    u: vec![128; chroma_len],
                    v: vec![128; chroma_len],
                }
            })
            .collect();
        Ok(Self {
            width,
            height,
            frames,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [Frame] {
        &mut self.frames
    }

    pub fn plane_dims(&self, plane: Plane) -> (usize, usize) {
        match plane {
            Plane::Y => (self.width, self.height),
            Plane::U | Plane::V => (self.width / 2, self.height / 2),
        }
    }

    /// Boundary-policy sample access: `x`/`y` may be any integers and are
    /// clamped to the frame edge. `t` must be a valid frame index.
    #[inline]
    pub fn sample(&self, x: i64, y: i64, t: usize) -> u8 {
        self.sample_plane(Plane::Y, x, y, t)
    }

    #[inline]
    pub fn sample_plane(&self, plane: Plane, x: i64, y: i64, t: usize) -> u8 {
        let (w, h) = self.plane_dims(plane);
        let frame = &self.frames[t];
        let data = match plane {
            Plane::Y => &frame.y,
            Plane::U => &frame.u,
            Plane::V => &frame.v,
        };
        let cx = x.clamp(0, w as i64 - 1) as usize;
        let cy = y.clamp(0, h as i64 - 1) as usize;
        data[cy * w + cx]
    }

    #[inline]
    pub fn set_sample_plane(&mut self, plane: Plane, x: usize, y: usize, t: usize, value: u8) {
        let (w, _) = self.plane_dims(plane);
        let frame = &mut self.frames[t];
        let data = match plane {
            Plane::Y => &mut frame.y,
            Plane::U => &mut frame.u,
            Plane::V => &mut frame.v,
        };
        data[y * w + x] = value;
    }

    fn frame_bytes(width: usize, height: usize) -> usize {
        width * height * 3 / 2
    }

    /// Loads a raw headerless I420 file. The file size must be a whole
    /// multiple of one frame's byte size for the declared geometry.
    pub fn load(path: &Path, width: usize, height: usize, max_frames: usize) -> Result<Self> {
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
            return Err(ConcealError::BadDimensions { width, height });
        }
        let data = fs::read(path)?;
        let frame_bytes = Self::frame_bytes(width, height);
        if data.len() % frame_bytes != 0 {
            return Err(ConcealError::TruncatedFile {
                size: data.len() as u64,
                frame_bytes,
            });
        }
        let available = data.len() / frame_bytes;
        let n = available.min(max_frames);
        let luma_len = width * height;
        let chroma_len = luma_len / 4;
        let frames = (0..n)
            .map(|i| {
                let base = i * frame_bytes;
                Frame {
                    y: data[base..base + luma_len].to_vec(),
                    u: data[base + luma_len..base + luma_len + chroma_len].to_vec(),
                    v: data[base + luma_len + chroma_len..base + frame_bytes].to_vec(),
                }
            })
            .collect();
        Ok(Self {
            width,
            height,
            frames,
        })
    }

    /// Writes the sequence back as raw I420. `load(save(seq))` is the
    /// identity, bit-exact.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.frames.len() * Self::frame_bytes(self.width, self.height));
        for f in &self.frames {
            out.extend_from_slice(&f.y);
            out.extend_from_slice(&f.u);
            out.extend_from_slice(&f.v);
        }
        fs::write(path, out)?;
        Ok(())
    }
}
