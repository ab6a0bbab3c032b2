//! Video super-resolution from long-term, cross-scale self-exemplars.
//!
//! Each frame is tiled into overlapping patches. Every patch looks for larger
//! copies of itself anywhere in the video (global exemplars) and for
//! same-scale copies in nearby frames (local exemplars). Global exemplars are
//! screened by dense feature-block matching, aligned to the patch with a
//! RANSAC affine fit, fused with per-pixel softmax weights, and their
//! high-frequency band is transferred onto a bicubic base.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root pick a concrete precision.

pub mod align;
pub mod error;
pub mod features;
pub mod frames;
pub mod fusion;
pub mod metrics;
pub mod pipeline;
pub mod retrieval;
mod scalar;
pub mod selection;

pub use error::{Error, Result};
pub use scalar::Real;

/// Single-precision frame, the pipeline's working type.
pub type Frame32 = frames::Frame<f32>;
/// Double-precision frame for oracle checks.
pub type Frame64 = frames::Frame<f64>;
pub type FrameStore32 = retrieval::FrameStore<f32>;
pub type FrameStore64 = retrieval::FrameStore<f64>;
pub type FeatureMap32 = features::FeatureMap<f32>;
pub type FeatureMap64 = features::FeatureMap<f64>;
pub type MatchMaps32 = features::MatchMaps<f32>;
pub type MatchMaps64 = features::MatchMaps<f64>;
pub type Affine32 = align::AffineParams<f32>;
pub type Affine64 = align::AffineParams<f64>;
