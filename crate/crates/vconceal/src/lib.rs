//! Spatio-temporal error concealment for raw video.
//!
//! Lost 16x16 blocks are reconstructed by estimating the motion of their
//! intact surroundings towards neighboring frames, cutting a motion-aligned
//! extrapolation volume out of the sequence, and generating a sparse 3-D
//! Fourier model of the signal whose per-sample influence decays with
//! distance from the loss and, in the content-adaptive mode, scales per frame
//! layer with the motion-estimation quality.
//!
//! The crate ships the concealment pipeline, artificial loss patterns, a
//! motion-compensated temporal-copy baseline, a PSNR evaluation harness, and
//! the regression-based training of the weighting ramp, all behind the
//! `vconceal` CLI.
//!
//! With the default `parallel` feature, independent candidate vectors and
//! independent blocks are processed on a rayon pool; results are bit-identical
//! to the sequential build at any thread count.

pub mod error;
pub mod eval;
pub mod fse;
pub mod loss;
pub mod motion;
pub mod pipeline;
pub mod synthetic;
pub mod video;
pub mod volume;

pub use error::{ConcealError, Result};
pub use eval::{best_weight_search, fit_weight_model, psnr_blocks, run_comparison, TrainingPair};
pub use fse::{generate_model_fast, generate_model_reference, render_model, FseConfig, SpectralModel};
pub use loss::{BlockRef, BlockState, LossMask};
pub use motion::{assess_reliability, build_support_ring, estimate_motion, match_error, MotionEstimate, SupportRing};
pub use pipeline::{conceal_block, conceal_sequence, report_csv, BlockReport, ConcealConfig, Mode};
pub use video::{Frame, Plane, VideoSequence};
pub use volume::{build_weights, extract_volume, omega, ExtrapolationVolume, WeightVolume};
