//! Extrapolation volume extraction and weight construction.
//!
//! The volume is an M x N x P cube cut around the lost block: the current
//! frame's layer plus up to `n_prev` previous and `n_follow` following frames,
//! each reference layer shifted by its estimated displacement when the
//! estimation is reliable. The weight volume gives every usable sample an
//! exponentially decaying influence on the model generation, scaled per layer
//! by the motion-estimation quality in the content-adaptive mode.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{ConcealError, Result};
use crate::loss::{BlockRef, BlockState, LossMask};
use crate::motion::MotionEstimate;
use crate::video::{Plane, VideoSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleStatus {
    /// Correctly received (or from a frame with no mask entry).
    Support,
    /// The lost block being concealed, at the current frame's layer.
    Loss,
    /// Reconstructed by an earlier concealment step.
    Concealed,
    /// Outside the frame, outside the sequence, or a still-lost block.
    Unavailable,
}

/// Geometry of the cube in plane units.
#[derive(Debug, Clone, Copy)]
pub struct VolumeParams {
    pub block_size: usize,
    pub border: usize,
    pub n_prev: usize,
    pub n_follow: usize,
}

impl VolumeParams {
    pub fn side(&self) -> usize {
        self.block_size + 2 * self.border
    }

    pub fn layers(&self) -> usize {
        self.n_prev + self.n_follow + 1
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerInfo {
    pub kappa: i32,
    /// Source frame index, `None` when the layer falls outside the sequence.
    pub frame: Option<usize>,
    pub shift: (i32, i32),
    /// Motion estimation error towards this layer; `None` for the current
    /// frame's own layer and for clipped layers.
    pub motion_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExtrapolationVolume {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    /// Luma values as reals; loss positions hold 0.
    pub samples: Vec<f64>,
    pub status: Vec<SampleStatus>,
    /// Plane coordinates of volume sample (0, 0) before any layer shift.
    pub origin: (i64, i64),
    pub n_prev: usize,
    pub layers: Vec<LayerInfo>,
}

impl ExtrapolationVolume {
    #[inline]
    pub fn idx(&self, m: usize, n: usize, p: usize) -> usize {
        (m * self.n + n) * self.p + p
    }

    pub fn len(&self) -> usize {
        self.m * self.n * self.p
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Debug dump: text header plus flat little-endian f64 samples and one
    /// status byte per sample.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        writeln!(f, "volume {} {} {} origin {} {} n_prev {}", self.m, self.n, self.p, self.origin.0, self.origin.1, self.n_prev)?;
        for s in &self.samples {
            f.write_all(&s.to_le_bytes())?;
        }
        let status_bytes: Vec<u8> = self
            .status
            .iter()
            .map(|s| match s {
                SampleStatus::Support => 0,
                SampleStatus::Loss => 1,
                SampleStatus::Concealed => 2,
                SampleStatus::Unavailable => 3,
            })
            .collect();
        f.write_all(&status_bytes)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct WeightVolume {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub weights: Vec<f64>,
}

impl WeightVolume {
    #[inline]
    pub fn idx(&self, m: usize, n: usize, p: usize) -> usize {
        (m * self.n + n) * self.p + p
    }
}

/// Per-layer weighting factor: a linear ramp from `omega_max` at zero motion
/// error down to 0 at `t_e`; frames at or beyond `t_e` are excluded entirely.
#[inline]
pub fn omega(error: f64, omega_max: f64, t_e: f64) -> f64 {
    debug_assert!(error >= 0.0);
    if error < t_e {
        omega_max * (1.0 - error / t_e)
    } else {
        0.0
    }
}

/// Exponential decay with Euclidean distance from the volume center
/// (the current frame's layer holds the temporal center).
#[inline]
pub fn decay_weight(
    m: usize,
    n: usize,
    p: usize,
    dim_m: usize,
    dim_n: usize,
    n_prev: usize,
    rho_hat: f64,
) -> f64 {
    let dm = m as f64 - (dim_m as f64 - 1.0) / 2.0;
    let dn = n as f64 - (dim_n as f64 - 1.0) / 2.0;
    let dp = p as f64 - n_prev as f64;
    rho_hat.powf((dm * dm + dn * dn + dp * dp).sqrt())
}

/// Cuts the (aligned) volume out of the partially concealed buffer.
///
/// Layer `p` is sourced from frame `tau + (p - n_prev)`, shifted by the
/// estimated displacement when `aligned` holds. Reads use the boundary
/// policy; status comes from the mask at the unclamped source position, with
/// out-of-frame and out-of-sequence samples marked unavailable.
pub fn extract_volume(
    seq: &VideoSequence,
    mask: &LossMask,
    plane: Plane,
    block: BlockRef,
    estimates: &[MotionEstimate],
    aligned: bool,
    params: &VolumeParams,
) -> ExtrapolationVolume {
    let side = params.side();
    let layers_n = params.layers();
    let (pw, ph) = seq.plane_dims(plane);
    let x0 = (block.bx * params.block_size) as i64 - params.border as i64;
    let y0 = (block.by * params.block_size) as i64 - params.border as i64;
    let tau = block.frame as i64;

    let mut layers = Vec::with_capacity(layers_n);
    for p in 0..layers_n {
        let kappa = p as i32 - params.n_prev as i32;
        let t = tau + kappa as i64;
        if t < 0 || t >= seq.frame_count() as i64 {
            layers.push(LayerInfo {
                kappa,
                frame: None,
                shift: (0, 0),
                motion_error: None,
            });
            continue;
        }
        let est = estimates.iter().find(|e| e.kappa == kappa);
        let shift = match est {
            Some(e) if aligned && kappa != 0 => e.vector,
            _ => (0, 0),
        };
        layers.push(LayerInfo {
            kappa,
            frame: Some(t as usize),
            shift,
            motion_error: est.map(|e| e.error),
        });
    }

    let mut samples = vec![0.0; side * side * layers_n];
    let mut status = vec![SampleStatus::Unavailable; side * side * layers_n];
    for (p, layer) in layers.iter().enumerate() {
        let Some(t) = layer.frame else { continue };
        for n in 0..side {
            for m in 0..side {
                let x = x0 + m as i64 + layer.shift.0 as i64;
                let y = y0 + n as i64 + layer.shift.1 as i64;
                let i = (m * side + n) * layers_n + p;
                let st = if x < 0 || y < 0 || x >= pw as i64 || y >= ph as i64 {
                    SampleStatus::Unavailable
                } else {
                    match mask
                        .state_at_pixel_scaled(t, x, y, params.block_size)
                        .expect("in plane bounds")
                    {
                        BlockState::Intact => SampleStatus::Support,
                        BlockState::Concealed => SampleStatus::Concealed,
                        BlockState::Lost => {
                            let same_block = t == block.frame
                                && (x as usize) / params.block_size == block.bx
                                && (y as usize) / params.block_size == block.by;
                            if same_block {
                                SampleStatus::Loss
                            } else {
                                SampleStatus::Unavailable
                            }
                        }
                    }
                };
                status[i] = st;
                samples[i] = if st == SampleStatus::Loss {
                    0.0
                } else {
                    seq.sample_plane(plane, x, y, t) as f64
                };
            }
        }
    }

    ExtrapolationVolume {
        m: side,
        n: side,
        p: layers_n,
        samples,
        status,
        origin: (x0, y0),
        n_prev: params.n_prev,
        layers,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WeightParams {
    pub omega_max: f64,
    pub t_e: f64,
    pub delta: f64,
    pub rho_hat: f64,
    /// MC-FSE mode: the per-layer factor is pinned to 1 everywhere.
    pub fixed_weighting: bool,
    /// Training hook: apply this factor uniformly to all reference layers.
    pub omega_override: Option<f64>,
}

pub fn build_weights(vol: &ExtrapolationVolume, params: &WeightParams) -> Result<WeightVolume> {
    let layer_omega: Vec<f64> = vol
        .layers
        .iter()
        .map(|layer| {
            if params.fixed_weighting {
                1.0
            } else if layer.kappa == 0 {
                // the layer with the true spatial context is never
                // down-weighted below any reference layer
                params.omega_max
            } else if let Some(w) = params.omega_override {
                w
            } else {
                match layer.motion_error {
                    Some(err) => omega(err, params.omega_max, params.t_e),
                    None => 0.0,
                }
            }
        })
        .collect();

    let mut weights = vec![0.0; vol.len()];
    let mut any = false;
    for m in 0..vol.m {
        for n in 0..vol.n {
            for p in 0..vol.p {
                let i = vol.idx(m, n, p);
                let w = match vol.status[i] {
                    SampleStatus::Loss | SampleStatus::Unavailable => 0.0,
                    SampleStatus::Support => {
                        layer_omega[p] * decay_weight(m, n, p, vol.m, vol.n, vol.n_prev, params.rho_hat)
                    }
                    SampleStatus::Concealed => {
                        params.delta
                            * layer_omega[p]
                            * decay_weight(m, n, p, vol.m, vol.n, vol.n_prev, params.rho_hat)
                    }
                };
                weights[i] = w;
                any |= w > 0.0;
            }
        }
    }
    if !any {
        return Err(ConcealError::NoSupport);
    }
    Ok(WeightVolume {
        m: vol.m,
        n: vol.n,
        p: vol.p,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    const OMEGA_MAX: f64 = 0.675;
    const T_E: f64 = 84.375;

    #[test]
    fn omega_point_values() {
        assert!((omega(0.0, OMEGA_MAX, T_E) - 0.675).abs() < 1e-15);
        assert_eq!(omega(T_E, OMEGA_MAX, T_E), 0.0);
        assert!((omega(42.1875, OMEGA_MAX, T_E) - 0.3375).abs() < 1e-15);
        assert_eq!(omega(200.0, OMEGA_MAX, T_E), 0.0);
    }

    fn static_volume(n_prev: usize, n_follow: usize, tau: usize) -> ExtrapolationVolume {
        let base = synthetic::textured_frame(128, 128, 5);
        let frames = vec![base.clone(), base.clone(), base.clone(), base];
        let seq = VideoSequence::from_luma_frames(128, 128, frames).unwrap();
        let mut mask = LossMask::new(128, 128, 4, 16).unwrap();
        mask.mark_lost(tau, 3, 3);
        let ests: Vec<MotionEstimate> = (-(n_prev as i32)..=n_follow as i32)
            .filter(|&k| k != 0)
            .map(|k| MotionEstimate {
                kappa: k,
                vector: (0, 0),
                error: 0.0,
                reliable: true,
            })
            .collect();
        extract_volume(
            &seq,
            &mask,
            Plane::Y,
            BlockRef { frame: tau, bx: 3, by: 3 },
            &ests,
            true,
            &VolumeParams {
                block_size: 16,
                border: 16,
                n_prev,
                n_follow,
            },
        )
    }

    #[test]
    fn static_layers_identical() {
        let vol = static_volume(2, 1, 2);
        assert_eq!((vol.m, vol.n, vol.p), (48, 48, 4));
        for m in 0..48 {
            for n in 0..48 {
                let v0 = vol.samples[vol.idx(m, n, 0)];
                for p in 1..4 {
                    let i = vol.idx(m, n, p);
                    if vol.status[i] == SampleStatus::Loss {
                        continue; // loss footprint only exists at p = n_prev
                    }
                    if vol.status[vol.idx(m, n, 2)] == SampleStatus::Loss && p == 2 {
                        continue;
                    }
                    assert_eq!(vol.samples[i], v0);
                }
            }
        }
    }

    #[test]
    fn aligned_global_shift_layers_identical() {
        // the current content sits at (+3, -2) per step back: f1[u,v] = base[u-3, v+2]
        let base = synthetic::textured_frame(160, 160, 6);
        let f1 = synthetic::translate(&base, 160, 160, -3, 2); // previous frame
        let f0 = synthetic::translate(&f1, 160, 160, -3, 2);
        let seq = VideoSequence::from_luma_frames(160, 160, vec![f0, f1, base.clone()]).unwrap();
        let mut mask = LossMask::new(160, 160, 3, 16).unwrap();
        mask.mark_lost(2, 4, 4);
        let ests = vec![
            MotionEstimate { kappa: -2, vector: (6, -4), error: 0.0, reliable: true },
            MotionEstimate { kappa: -1, vector: (3, -2), error: 0.0, reliable: true },
        ];
        let vol = extract_volume(
            &seq,
            &mask,
            Plane::Y,
            BlockRef { frame: 2, bx: 4, by: 4 },
            &ests,
            true,
            &VolumeParams { block_size: 16, border: 16, n_prev: 2, n_follow: 0 },
        );
        for m in 0..48 {
            for n in 0..48 {
                let i2 = vol.idx(m, n, 2);
                if vol.status[i2] == SampleStatus::Loss {
                    continue;
                }
                assert_eq!(vol.samples[vol.idx(m, n, 0)], vol.samples[i2]);
                assert_eq!(vol.samples[vol.idx(m, n, 1)], vol.samples[i2]);
            }
        }
    }

    #[test]
    fn clipped_layers_are_unavailable() {
        let vol = static_volume(2, 0, 0); // tau = 0 with two previous layers
        for p in 0..2 {
            for m in 0..48 {
                for n in 0..48 {
                    assert_eq!(vol.status[vol.idx(m, n, p)], SampleStatus::Unavailable);
                }
            }
        }
        assert!(vol.layers[0].frame.is_none());
        assert!(vol.layers[1].frame.is_none());
    }

    fn weight_params() -> WeightParams {
        WeightParams {
            omega_max: OMEGA_MAX,
            t_e: T_E,
            delta: 0.2,
            rho_hat: 0.8,
            fixed_weighting: false,
            omega_override: None,
        }
    }

    /// Odd-sided single-layer volume with a hand-set status map, so the
    /// center sample sits exactly on the decay origin.
    fn tiny_volume() -> ExtrapolationVolume {
        let m = 25;
        let p = 1;
        ExtrapolationVolume {
            m,
            n: m,
            p,
            samples: vec![100.0; m * m],
            status: vec![SampleStatus::Support; m * m],
            origin: (0, 0),
            n_prev: 0,
            layers: vec![LayerInfo { kappa: 0, frame: Some(0), shift: (0, 0), motion_error: None }],
        }
    }

    #[test]
    fn weight_point_values() {
        let vol = tiny_volume();
        let w = build_weights(&vol, &weight_params()).unwrap();
        let c = 12; // (25-1)/2
        assert!((w.weights[w.idx(c, c, 0)] - OMEGA_MAX).abs() < 1e-12);
        assert!((w.weights[w.idx(c + 1, c, 0)] - OMEGA_MAX * 0.8).abs() < 1e-12);
    }

    #[test]
    fn concealed_attenuation() {
        let mut vol = tiny_volume();
        let c = 12;
        let i = vol.idx(c + 1, c, 0);
        vol.status[i] = SampleStatus::Concealed;
        let w = build_weights(&vol, &weight_params()).unwrap();
        assert!((w.weights[i] - 0.2 * OMEGA_MAX * 0.8).abs() < 1e-12);
    }

    #[test]
    fn loss_and_unavailable_are_zero_weight() {
        let vol = static_volume(2, 0, 0);
        let mut params = weight_params();
        params.omega_override = Some(1.0);
        let w = build_weights(&vol, &params).unwrap();
        for i in 0..vol.len() {
            match vol.status[i] {
                SampleStatus::Loss | SampleStatus::Unavailable => assert_eq!(w.weights[i], 0.0),
                _ => {}
            }
        }
    }

    #[test]
    fn weights_decay_with_distance_within_layer() {
        let vol = tiny_volume();
        let w = build_weights(&vol, &weight_params()).unwrap();
        let c = 12.0;
        let mut pairs: Vec<(f64, f64)> = (0..25)
            .flat_map(|m| (0..25).map(move |n| (m, n)))
            .map(|(m, n)| {
                let d = ((m as f64 - c).powi(2) + (n as f64 - c).powi(2)).sqrt();
                (d, w.weights[m * 25 + n])
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for pair in pairs.windows(2) {
            assert!(pair[1].1 <= pair[0].1 + 1e-12);
        }
    }

    #[test]
    fn layer_beyond_te_gets_zero_weight() {
        let base = synthetic::textured_frame(128, 128, 9);
        let seq = VideoSequence::from_luma_frames(128, 128, vec![base.clone(), base]).unwrap();
        let mut mask = LossMask::new(128, 128, 2, 16).unwrap();
        mask.mark_lost(1, 3, 3);
        let ests = vec![MotionEstimate { kappa: -1, vector: (0, 0), error: 90.0, reliable: false }];
        let vol = extract_volume(
            &seq,
            &mask,
            Plane::Y,
            BlockRef { frame: 1, bx: 3, by: 3 },
            &ests,
            false,
            &VolumeParams { block_size: 16, border: 16, n_prev: 1, n_follow: 0 },
        );
        let w = build_weights(&vol, &weight_params()).unwrap();
        for m in 0..48 {
            for n in 0..48 {
                assert_eq!(w.weights[w.idx(m, n, 0)], 0.0);
            }
        }
    }

    #[test]
    fn all_zero_weights_error() {
        let mut vol = tiny_volume();
        for s in vol.status.iter_mut() {
            *s = SampleStatus::Unavailable;
        }
        assert!(matches!(
            build_weights(&vol, &weight_params()),
            Err(ConcealError::NoSupport)
        ));
    }
}
