//! Coarse-to-fine splitting of one frame's exposure into sub-frame
//! snapshots.
//!
//! Level 0 is the whole-exposure estimate. Each level halves every time
//! segment, rasterizes a blur kernel per segment from the frame's motion
//! curve, and re-runs the piecewise solver seeded with the parent segment's
//! result as template. Kernel mass is proportional to segment duration, so
//! the per-level kernels always sum to a unit-mass exposure.

use crate::deblatting::fm::solve_fm_piecewise;
use crate::deblatting::{FmSolverParams, IterationStat};
use crate::error::{Error, Result};
use crate::image::{Image, Snapshot};
use crate::curve::Curve2D;
use crate::kernel::{rasterize_segment, BlurKernel};

/// Maximum segments a frame may be split into.
const MAX_SEGMENTS: usize = 32;
/// Kernel raster margin beyond the sampled curve extent, in pixels.
const RASTER_MARGIN: f64 = 2.0;

/// Splitting plan: `levels` rounds of halving, optionally overriding the
/// last level's segment count (for sequences whose temporal super-resolution
/// factor is not a power of two).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HierarchySchedule {
    pub levels: usize,
    pub final_segments: Option<usize>,
}

impl HierarchySchedule {
    /// Plain halving schedule producing `2^levels` segments.
    pub fn new(levels: usize) -> Result<Self> {
        let s = Self { levels, final_segments: None };
        s.validate()?;
        Ok(s)
    }

    /// Halving schedule whose last level yields `final_segments` segments.
    pub fn with_final_segments(levels: usize, final_segments: usize) -> Result<Self> {
        let s = Self { levels, final_segments: Some(final_segments) };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if 1usize.checked_shl(self.levels as u32).is_none_or(|n| n > MAX_SEGMENTS) {
            return Err(Error::InvalidInput(format!(
                "2^{} segments exceeds the ceiling of {MAX_SEGMENTS}",
                self.levels
            )));
        }
        if let Some(m) = self.final_segments {
            if self.levels == 0 {
                return Err(Error::InvalidInput(
                    "a final segment count needs at least one level".into(),
                ));
            }
            if m < 2 || m > MAX_SEGMENTS {
                return Err(Error::InvalidInput(format!(
                    "final segment count must be in 2..={MAX_SEGMENTS}, got {m}"
                )));
            }
        }
        Ok(())
    }

    /// Segments produced by the last level.
    pub fn segment_count(&self) -> usize {
        self.final_segments.unwrap_or(1 << self.levels)
    }
}

/// Snapshots and kernels for every segment of one frame's exposure.
#[derive(Debug, Clone)]
pub struct HierarchyResult {
    pub snapshots: Vec<Snapshot>,
    pub kernels: Vec<BlurKernel>,
    /// Curve-domain time span covered by each snapshot.
    pub spans: Vec<(f64, f64)>,
    /// Whether the final level's solver reached its tolerance.
    pub converged: bool,
    /// Iteration trace of the final level's solve; empty for zero levels.
    pub trace: Vec<IterationStat>,
}

/// Odd-sided kernel raster large enough for every curve position, expressed
/// relative to the object anchor `p0`.
fn kernel_raster(curve: &Curve2D, p0: (f64, f64)) -> (usize, usize, (usize, usize)) {
    let (d0, d1) = curve.domain();
    let mut hx: f64 = 0.0;
    let mut hy: f64 = 0.0;
    let samples = 257;
    for i in 0..samples {
        let t = d0 + (d1 - d0) * i as f64 / (samples - 1) as f64;
        let (x, y) = curve.eval(t);
        hx = hx.max((x - p0.0).abs());
        hy = hy.max((y - p0.1).abs());
    }
    let half_w = (hx + RASTER_MARGIN).ceil() as usize;
    let half_h = (hy + RASTER_MARGIN).ceil() as usize;
    let kw = 2 * half_w + 1;
    let kh = 2 * half_h + 1;
    (kh, kw, (half_h, half_w))
}

fn equal_spans(d0: f64, d1: f64, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let a = d0 + (d1 - d0) * i as f64 / n as f64;
            let b = d0 + (d1 - d0) * (i + 1) as f64 / n as f64;
            (a, b)
        })
        .collect()
}

/// Splits one frame's exposure into `schedule.segment_count()` snapshots.
///
/// `curve` is the object's motion over this frame in frame-raster
/// coordinates; `f0` is the whole-exposure estimate whose mask centroid
/// anchors the kernel raster. A zero-level schedule returns `f0` unchanged.
pub fn hierarchical_deblat(
    frame: &Image,
    background: &Image,
    curve: &Curve2D,
    f0: &Snapshot,
    schedule: &HierarchySchedule,
    params: &FmSolverParams,
) -> Result<HierarchyResult> {
    schedule.validate()?;
    params.validate()?;
    if f0.dims() != frame.dims() {
        return Err(Error::DimensionMismatch(
            "whole-exposure snapshot must match the frame".into(),
        ));
    }
    let (d0, d1) = curve.domain();
    if !(d1 > d0) {
        return Err(Error::InvalidInput(format!(
            "curve domain [{d0}, {d1}] is empty"
        )));
    }
    let p0 = f0.mask_centroid();
    let (kh, kw, anchor) = kernel_raster(curve, p0);
    // Re-base so positions land on the kernel raster with p0 at the anchor.
    let based = curve.translated(p0.0 - anchor.1 as f64, p0.1 - anchor.0 as f64);

    if schedule.levels == 0 {
        let kernel = rasterize_segment(&based, d0, d1, kh, kw, 1.0)?;
        return Ok(HierarchyResult {
            snapshots: vec![f0.clone()],
            kernels: vec![kernel],
            spans: vec![(d0, d1)],
            converged: true,
            trace: Vec::new(),
        });
    }

    let mut current = vec![f0.clone()];
    let mut out = None;
    for level in 1..=schedule.levels {
        let n = if level == schedule.levels {
            schedule.segment_count()
        } else {
            1 << level
        };
        let spans = equal_spans(d0, d1, n);
        let templates: Vec<Snapshot> = (0..n)
            .map(|i| current[i * current.len() / n].clone())
            .collect();
        let kernels = spans
            .iter()
            .map(|&(a, b)| rasterize_segment(&based, a, b, kh, kw, (b - a) / (d1 - d0)))
            .collect::<Result<Vec<_>>>()?;
        let r = solve_fm_piecewise(frame, background, &kernels, Some(&templates), params)?;
        current = r.snapshots.clone();
        out = Some(HierarchyResult {
            snapshots: r.snapshots,
            kernels,
            spans,
            converged: r.converged,
            trace: r.trace,
        });
    }
    Ok(out.expect("at least one level ran"))
}
