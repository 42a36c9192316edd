//! Blur-and-matting image formation and background estimation.
//!
//! A frame showing a motion-blurred object over a static background B is
//! modeled as `I = H*F + (1 - H*M) . B`: the object's sharp appearance F and
//! transparency mask M, both convolved with the exposure's blur kernel H,
//! composited over the background. The piecewise variant splits the exposure
//! into sub-intervals, each with its own snapshot and kernel, with the
//! kernel masses summing to the full exposure.

use crate::deblatting::reconstruct;
use crate::error::{Error, Result};
use crate::image::{Image, Snapshot};
use crate::kernel::BlurKernel;

const MASS_TOL: f64 = 1e-9;

/// Renders one frame with a single appearance/mask pair blurred by a
/// normalized kernel: `I = H*F + (1 - H*M) . B`.
pub fn render_frame(background: &Image, snapshot: &Snapshot, kernel: &BlurKernel) -> Result<Image> {
    let sum = kernel.sum();
    if (sum - 1.0).abs() > MASS_TOL {
        return Err(Error::KernelNotNormalized { sum });
    }
    render_frame_piecewise(
        background,
        std::slice::from_ref(snapshot),
        std::slice::from_ref(kernel),
    )
}

/// Renders one frame whose exposure is split into sub-intervals:
/// `I = sum_i H_i*F_i + (1 - sum_i H_i*M_i) . B`. The kernel masses must
/// sum to one (the whole exposure), though individual kernels carry only
/// their interval's share.
pub fn render_frame_piecewise(
    background: &Image,
    snapshots: &[Snapshot],
    kernels: &[BlurKernel],
) -> Result<Image> {
    if snapshots.len() != kernels.len() || snapshots.is_empty() {
        return Err(Error::InvalidInput(
            "need one kernel per snapshot, at least one".into(),
        ));
    }
    let total: f64 = kernels.iter().map(|k| k.sum()).sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::KernelNotNormalized { sum: total });
    }
    reconstruct(background, kernels, snapshots)
}

/// Per-pixel, per-channel median over a window of frames; the usual
/// background estimate for a mostly static scene where the object covers
/// each pixel in less than half the window.
pub fn estimate_background(frames: &[Image]) -> Result<Image> {
    let Some(first) = frames.first() else {
        return Err(Error::Degenerate("empty frame window".into()));
    };
    let (h, w) = first.dims();
    let channels = first.channels();
    for f in frames {
        if f.dims() != (h, w) || f.channels() != channels {
            return Err(Error::DimensionMismatch(
                "all frames in the window must share a shape".into(),
            ));
        }
    }
    let n = frames.len();
    let mut column = vec![0.0; n];
    let mut data = vec![0.0; channels * h * w];
    for (i, value) in data.iter_mut().enumerate() {
        for (j, f) in frames.iter().enumerate() {
            column[j] = f.data()[i];
        }
        column.sort_by(|a, b| a.total_cmp(b));
        *value = if n % 2 == 1 {
            column[n / 2]
        } else {
            0.5 * (column[n / 2 - 1] + column[n / 2])
        };
    }
    Image::new(h, w, channels, data)
}
