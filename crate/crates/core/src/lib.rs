//! Reconstruction of sub-frame appearance, shape and 6DoF pose for motion-
//! blurred spherical objects in low-frame-rate video.
//!
//! Given frames, an estimated background, and a 2D trajectory of the object
//! center, the solvers recover per-sub-frame snapshots (appearance + opacity
//! mask) along the blur, turn mask areas into relative depth, fit a piecewise
//! polynomial 3D trajectory with bounce handling, and estimate angular
//! velocity from the appearance sequence by a voted grid search. Synthetic
//! scene generation and evaluation metrics close the loop for testing.

pub mod curve;
pub mod deblatting;
pub mod error;
pub mod fft2;
pub mod formation;
pub mod image;
pub mod io;
pub mod kernel;
pub mod metrics;
pub mod pipeline;
pub mod rotation;
pub mod synth;
pub mod trajectory;

pub use curve::{Curve2D, PolySegment2};
pub use error::{Error, Result};
pub use image::{Image, Snapshot};
pub use kernel::{rasterize_segment, BlurKernel};
