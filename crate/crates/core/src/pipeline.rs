//! End-to-end tracking: frames plus a 2D trajectory in, sub-frame
//! snapshots, a 3D trajectory, and a spin series out.
//!
//! Stages run in processing order: median background, per-frame blur-aware
//! appearance/mask recovery on a padded region of interest, area-based depth
//! per snapshot, bounce detection, continuous 3D fitting, and sliding-window
//! spin estimation. Frames are independent in the recovery stage and run in
//! parallel; every other stage is a sequential barrier.
//!
//! The composite cannot distinguish mask level from appearance level over a
//! known background, so each frame's whole-exposure solve is anchored by a
//! template built from the frame itself: a flat disk of the streak's mean
//! color, sized and placed from the moments of the frame-background
//! difference. The mask's raw pixel sum is the area statistic the formation
//! model pins down and depth uses it directly; appearance-based stages
//! additionally cut the mask floor and strip the background share so halo
//! pixels do not read as object texture.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::Curve2D;
use crate::deblatting::{
    hierarchical_deblat, solve_fm, solve_h, FmSolverParams, HierarchySchedule, IterationStat,
};
use crate::error::{Error, Result};
use crate::formation::{estimate_background, render_frame};
use crate::image::{Image, Snapshot};
use crate::kernel::{rasterize_segment, BlurKernel};
use crate::metrics::PoseSample;
use crate::rotation::{sliding_velocities, ConsensusParams, VelocityGrid, VelocitySample};
use crate::trajectory::{
    depth_from_mask, detect_bounces, fit_trajectory, DepthSample, Trajectory3D,
};

/// Raster margin beyond the curve extent when sizing blur-kernel rasters.
const KERNEL_MARGIN: f64 = 2.0;
/// Samples used to bound a curve's spatial extent.
const EXTENT_SAMPLES: usize = 257;
/// Direction change across a curve breakpoint that marks a 2D bounce.
const BOUNCE_ANGLE_DEG: f64 = 20.0;
/// Per-pixel absolute difference (summed over channels) below which a pixel
/// does not count as object evidence during detection.
const DETECT_THRESHOLD: f64 = 0.05;

/// Tuning for the tracking pipeline.
#[derive(Debug, Clone)]
pub struct TrackParams {
    pub solver: FmSolverParams,
    pub schedule: HierarchySchedule,
    pub grid: VelocityGrid,
    pub consensus: ConsensusParams,
    /// Padding around the per-frame curve extent when cropping the region of
    /// interest, in pixels. Must comfortably exceed the object radius.
    pub roi_pad: f64,
    /// Mask level cut before appearance measurements, in (0, 1).
    pub mask_threshold: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            solver: FmSolverParams::default(),
            schedule: HierarchySchedule::new(3).expect("3 levels fit the segment ceiling"),
            grid: VelocityGrid::default(),
            consensus: ConsensusParams::default(),
            roi_pad: 48.0,
            mask_threshold: 0.3,
        }
    }
}

impl TrackParams {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.schedule.validate()?;
        self.consensus.validate(&self.grid)?;
        if !(self.roi_pad.is_finite() && self.roi_pad >= 8.0) {
            return Err(Error::InvalidInput(format!(
                "roi_pad must be at least 8 px, got {}",
                self.roi_pad
            )));
        }
        if !(self.mask_threshold >= 0.0 && self.mask_threshold < 1.0) {
            return Err(Error::InvalidInput(format!(
                "mask_threshold must lie in [0, 1), got {}",
                self.mask_threshold
            )));
        }
        Ok(())
    }
}

/// Axis-aligned crop window in frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiRect {
    pub x0: usize,
    pub y0: usize,
    pub height: usize,
    pub width: usize,
}

impl RoiRect {
    fn crop_from(&self, img: &Image) -> Result<Image> {
        img.crop(self.y0, self.x0, self.height, self.width)
    }
}

/// Everything recovered from one frame: snapshots and kernels live in the
/// coordinates of `roi`; spans are global frame times.
#[derive(Debug, Clone)]
pub struct FrameDeblat {
    pub frame_index: usize,
    pub roi: RoiRect,
    /// Whole-exposure estimate that seeded the hierarchy.
    pub level0: Snapshot,
    pub snapshots: Vec<Snapshot>,
    pub kernels: Vec<BlurKernel>,
    pub spans: Vec<(f64, f64)>,
    pub converged: bool,
    /// Whole-exposure iterations followed by the final level's.
    pub trace: Vec<IterationStat>,
}

/// Output of [`track_sequence`].
#[derive(Debug, Clone)]
pub struct TrackResult {
    pub background: Image,
    pub frames: Vec<FrameDeblat>,
    pub depth_samples: Vec<DepthSample>,
    pub bounces: Vec<f64>,
    pub trajectory: Trajectory3D,
    pub velocities: Vec<VelocitySample>,
    pub warnings: Vec<String>,
}

impl TrackResult {
    /// Pose series for evaluation: a radius observation per reliable depth
    /// sample and a spin observation per velocity window.
    pub fn pose_samples(&self) -> Vec<PoseSample> {
        let mut out = Vec::new();
        for s in &self.depth_samples {
            if s.reliable {
                out.push(PoseSample {
                    t: s.t,
                    radius: Some((s.area / std::f64::consts::PI).sqrt()),
                    omega: None,
                });
            }
        }
        for v in &self.velocities {
            out.push(PoseSample {
                t: v.t_center,
                radius: None,
                omega: Some(v.omega),
            });
        }
        out
    }
}

fn curve_extent(curve: &Curve2D) -> (f64, f64, f64, f64) {
    let (d0, d1) = curve.domain();
    let mut minx = f64::INFINITY;
    let mut maxx = f64::NEG_INFINITY;
    let mut miny = f64::INFINITY;
    let mut maxy = f64::NEG_INFINITY;
    let mut take = |(x, y): (f64, f64)| {
        minx = minx.min(x);
        maxx = maxx.max(x);
        miny = miny.min(y);
        maxy = maxy.max(y);
    };
    take(curve.eval(d0));
    take(curve.eval(d1));
    for p in curve.sample_positions(d0, d1, EXTENT_SAMPLES) {
        take(p);
    }
    (minx, maxx, miny, maxy)
}

/// Crop window covering the curve's extent plus `pad` on every side,
/// clamped to the frame. Errors when the padded extent misses the frame.
pub fn roi_for_frame(
    frame_height: usize,
    frame_width: usize,
    curve: &Curve2D,
    pad: f64,
) -> Result<RoiRect> {
    let (minx, maxx, miny, maxy) = curve_extent(curve);
    let x0 = (minx - pad).floor().max(0.0) as usize;
    let y0 = (miny - pad).floor().max(0.0) as usize;
    let x1 = (((maxx + pad).ceil() + 1.0).max(0.0) as usize).min(frame_width);
    let y1 = (((maxy + pad).ceil() + 1.0).max(0.0) as usize).min(frame_height);
    if x1 <= x0 || y1 <= y0 {
        return Err(Error::InvalidInput(format!(
            "trajectory extent [{minx:.1}, {maxx:.1}]x[{miny:.1}, {maxy:.1}] \
             lies outside the {frame_height}x{frame_width} frame"
        )));
    }
    Ok(RoiRect {
        x0,
        y0,
        height: y1 - y0,
        width: x1 - x0,
    })
}

/// Odd-sided kernel raster sized to hold every curve position after
/// re-basing `p0` onto the raster anchor.
fn raster_for(curve: &Curve2D, p0: (f64, f64)) -> (usize, usize, (usize, usize)) {
    let (minx, maxx, miny, maxy) = curve_extent(curve);
    let hx = (maxx - p0.0).abs().max((minx - p0.0).abs());
    let hy = (maxy - p0.1).abs().max((miny - p0.1).abs());
    let half_w = (hx + KERNEL_MARGIN).ceil() as usize;
    let half_h = (hy + KERNEL_MARGIN).ceil() as usize;
    (2 * half_h + 1, 2 * half_w + 1, (half_h, half_w))
}

/// Whole-frame anchor template built from the frame itself: a flat disk of
/// the streak's mean color, sized from the transverse second moment of
/// `|frame - background|` and placed at `center`. The color is corrected for
/// blur dilution: a pixel on the streak centerline sees the object for
/// roughly `2 radius / streak length` of the exposure.
///
/// Without such an anchor the appearance/mask split is ambiguous (a
/// semi-transparent dark veil composites identically to an opaque dark
/// object) and the solver has no reason to prefer the opaque branch.
fn bootstrap_template(
    frame_roi: &Image,
    bg_roi: &Image,
    center: (f64, f64),
) -> Result<Option<Snapshot>> {
    let (h, w) = frame_roi.dims();
    let mut d = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for c in 0..3 {
                s += (frame_roi.get(x, y, c) - bg_roi.get(x, y, c)).abs();
            }
            d[y * w + x] = (s - DETECT_THRESHOLD).max(0.0);
        }
    }
    let Some(stats) = mass_stats(&d, h, w) else {
        return Ok(None);
    };
    let radius = (2.0 * stats.var_minor.max(0.0).sqrt()).max(2.0);
    let streak_len = (12.0 * (stats.var_major - stats.var_minor).max(0.0)).sqrt();
    let coverage = (2.0 * radius / streak_len.max(1e-6)).clamp(0.15, 1.0);
    let total: f64 = d.iter().sum();
    let mut color = [0.0; 3];
    for (c, slot) in color.iter_mut().enumerate() {
        let mut mean_obs = 0.0;
        let mut mean_bg = 0.0;
        for y in 0..h {
            for x in 0..w {
                let wgt = d[y * w + x];
                mean_obs += wgt * frame_roi.get(x, y, c);
                mean_bg += wgt * bg_roi.get(x, y, c);
            }
        }
        mean_obs /= total;
        mean_bg /= total;
        *slot = (mean_bg + (mean_obs - mean_bg) / coverage).clamp(0.0, 1.0);
    }
    let disk = Image::from_fn(h, w, 1, |x, y, _| {
        let dist = ((x as f64 - center.0).powi(2) + (y as f64 - center.1).powi(2)).sqrt();
        (radius + 0.5 - dist).clamp(0.0, 1.0)
    })?;
    let appearance = Image::from_fn(h, w, 3, |x, y, c| disk.get(x, y, 0) * color[c])?;
    Ok(Some(Snapshot::new(appearance, disk)?))
}

/// Recovers one frame's sub-frame snapshots: whole-exposure solve on the
/// region of interest, then the coarse-to-fine hierarchy.
pub fn deblat_frame(
    frame: &Image,
    background: &Image,
    curve_global: &Curve2D,
    frame_index: usize,
    params: &TrackParams,
) -> Result<FrameDeblat> {
    params.validate()?;
    let t0 = frame_index as f64;
    let t1 = t0 + 1.0;
    let curve_frame = curve_global.restrict(t0, t1)?;
    let (fh, fw) = frame.dims();
    let roi = roi_for_frame(fh, fw, &curve_frame, params.roi_pad)?;
    let frame_roi = roi.crop_from(frame)?;
    let bg_roi = roi.crop_from(background)?;
    let curve_roi = curve_frame.translated(roi.x0 as f64, roi.y0 as f64);

    let mid = curve_roi.eval(0.5 * (t0 + t1));
    let (kh, kw, (ay, ax)) = raster_for(&curve_roi, mid);
    let based = curve_roi.translated(mid.0 - ax as f64, mid.1 - ay as f64);
    let k0 = rasterize_segment(&based, t0, t1, kh, kw, 1.0)?;
    let template = bootstrap_template(&frame_roi, &bg_roi, mid)?;
    let level0 = solve_fm(&frame_roi, &bg_roi, &k0, template.as_ref(), &params.solver)?;

    let h = hierarchical_deblat(
        &frame_roi,
        &bg_roi,
        &curve_roi,
        &level0.snapshot,
        &params.schedule,
        &params.solver,
    )?;
    let mut trace = level0.trace;
    trace.extend(h.trace);
    Ok(FrameDeblat {
        frame_index,
        roi,
        level0: level0.snapshot,
        snapshots: h.snapshots,
        kernels: h.kernels,
        spans: h.spans,
        converged: level0.converged && h.converged,
        trace,
    })
}

/// Cuts the mask floor: values at or below `threshold` go to zero and the
/// remaining range rescales onto [0, 1].
pub fn clean_mask(mask: &Image, threshold: f64) -> Result<Image> {
    if mask.channels() != 1 {
        return Err(Error::InvalidInput("mask must have one channel".into()));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidInput(format!(
            "mask threshold must lie in [0, 1), got {threshold}"
        )));
    }
    if threshold == 0.0 {
        return Ok(mask.clone());
    }
    let (h, w) = mask.dims();
    Image::from_fn(h, w, 1, |x, y, _| {
        ((mask.get(x, y, 0) - threshold) / (1.0 - threshold)).clamp(0.0, 1.0)
    })
}

/// Cleans a snapshot for measurement: the mask floor is cut and the
/// appearance gives back the background share that the removed mask level
/// was carrying, so halo pixels do not read as object texture.
pub fn clean_snapshot(
    snapshot: &Snapshot,
    background: &Image,
    threshold: f64,
) -> Result<Snapshot> {
    if background.dims() != snapshot.dims() || background.channels() != 3 {
        return Err(Error::DimensionMismatch(
            "background must be a 3-channel image of the snapshot's size".into(),
        ));
    }
    let mask = clean_mask(&snapshot.mask, threshold)?;
    let (h, w) = mask.dims();
    let appearance = Image::from_fn(h, w, 3, |x, y, c| {
        let removed = (snapshot.mask.get(x, y, 0) - mask.get(x, y, 0)).max(0.0);
        (snapshot.appearance.get(x, y, c) - background.get(x, y, c) * removed)
            .clamp(0.0, mask.get(x, y, 0))
    })?;
    Snapshot::new(appearance, mask)
}

/// One depth observation per snapshot: position from the 2D trajectory at
/// the span midpoint, depth from the mask's raw pixel sum. The sum is the
/// area statistic the formation model pins down, so no floor cut is applied.
pub fn depth_stage(
    frames: &[FrameDeblat],
    curve_global: &Curve2D,
) -> Result<Vec<DepthSample>> {
    let mut out = Vec::new();
    for fd in frames {
        for (snap, span) in fd.snapshots.iter().zip(&fd.spans) {
            let est = depth_from_mask(&snap.mask);
            let t = 0.5 * (span.0 + span.1);
            let (x, y) = curve_global.eval(t);
            out.push(DepthSample {
                t,
                x,
                y,
                depth: est.depth,
                area: est.area,
                reliable: est.reliable,
            });
        }
    }
    Ok(out)
}

/// Interior curve breakpoints where the motion direction kinks by more than
/// the bounce angle; candidate 2D bounce times.
pub fn curve_bounces_2d(curve: &Curve2D) -> Vec<f64> {
    let (d0, d1) = curve.domain();
    let h = 1e-3;
    let mut out = Vec::new();
    for &b in &curve.breakpoints()[1..curve.breakpoints().len() - 1] {
        let (px, py) = curve.eval((b - h).max(d0));
        let (cx, cy) = curve.eval(b);
        let (nx, ny) = curve.eval((b + h).min(d1));
        let u = (cx - px, cy - py);
        let v = (nx - cx, ny - cy);
        let nu = (u.0 * u.0 + u.1 * u.1).sqrt();
        let nv = (v.0 * v.0 + v.1 * v.1).sqrt();
        if nu <= 1e-12 || nv <= 1e-12 {
            continue;
        }
        let cosang = ((u.0 * v.0 + u.1 * v.1) / (nu * nv)).clamp(-1.0, 1.0);
        if cosang.acos().to_degrees() > BOUNCE_ANGLE_DEG {
            out.push(b);
        }
    }
    out
}

/// Spin series over all snapshots, with windows cut at the bounce times.
pub fn rotation_stage(
    frames: &[FrameDeblat],
    background: &Image,
    bounces: &[f64],
    params: &TrackParams,
) -> Result<Vec<VelocitySample>> {
    let mut snaps = Vec::new();
    let mut times = Vec::new();
    for fd in frames {
        let bg_roi = fd.roi.crop_from(background)?;
        for (snap, span) in fd.snapshots.iter().zip(&fd.spans) {
            snaps.push(clean_snapshot(snap, &bg_roi, params.mask_threshold)?);
            times.push(0.5 * (span.0 + span.1));
        }
    }
    sliding_velocities(&snaps, &times, bounces, &params.grid, &params.consensus)
}

/// Runs the full pipeline. The trajectory must cover `[0, frames.len()]` in
/// frame time. A degenerate spin stage (textureless object, too few
/// snapshots) downgrades to a warning with an empty velocity series; any
/// other failure aborts.
pub fn track_sequence(
    frames: &[Image],
    curve: &Curve2D,
    params: &TrackParams,
) -> Result<TrackResult> {
    params.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidInput("no frames to track".into()));
    }
    let n = frames.len();
    let (d0, d1) = curve.domain();
    if d0 > 1e-9 || d1 < n as f64 - 1e-9 {
        return Err(Error::InvalidInput(format!(
            "trajectory domain [{d0}, {d1}] must cover frame times [0, {n}]"
        )));
    }
    let background = estimate_background(frames)?;
    let deblats: Vec<FrameDeblat> = (0..n)
        .into_par_iter()
        .map(|i| deblat_frame(&frames[i], &background, curve, i, params))
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    for fd in &deblats {
        if !fd.converged {
            warnings.push(format!(
                "frame {}: solver stopped before reaching tolerance",
                fd.frame_index
            ));
        }
    }
    let depth_samples = depth_stage(&deblats, curve)?;
    let bounces = detect_bounces(&depth_samples, &curve_bounces_2d(curve));
    let trajectory = fit_trajectory(&depth_samples, &bounces)?;
    let velocities = match rotation_stage(&deblats, &background, &bounces, params) {
        Ok(v) => v,
        Err(Error::Degenerate(msg)) => {
            warnings.push(format!("spin estimation skipped: {msg}"));
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    Ok(TrackResult {
        background,
        frames: deblats,
        depth_samples,
        bounces,
        trajectory,
        velocities,
        warnings,
    })
}

/// Output of [`superres_frames`].
#[derive(Debug, Clone)]
pub struct SuperresResult {
    pub frames: Vec<Image>,
    /// Global time span each output frame covers.
    pub spans: Vec<(f64, f64)>,
    /// Set when the factor exceeds the snapshot granularity and snapshots
    /// were reused for neighboring output frames.
    pub reused_snapshots: bool,
}

fn paste(base: &Image, patch: &Image, roi: &RoiRect) -> Result<Image> {
    if base.channels() != patch.channels() {
        return Err(Error::DimensionMismatch("channel counts differ".into()));
    }
    let (bh, bw) = base.dims();
    let (ph, pw) = patch.dims();
    if roi.y0 + ph > bh || roi.x0 + pw > bw {
        return Err(Error::DimensionMismatch(format!(
            "{ph}x{pw} patch at ({}, {}) exceeds the {bh}x{bw} canvas",
            roi.x0, roi.y0
        )));
    }
    let mut data = base.data().to_vec();
    for c in 0..base.channels() {
        let src_plane = patch.plane(c);
        for y in 0..ph {
            let src = &src_plane[y * pw..(y + 1) * pw];
            let off = (c * bh + roi.y0 + y) * bw + roi.x0;
            data[off..off + pw].copy_from_slice(src);
        }
    }
    Image::new(bh, bw, base.channels(), data)
}

/// Re-renders the sequence at `factor` output frames per input frame: the
/// estimated background everywhere, with the object composited from the
/// snapshot covering each output interval, blurred by that interval's share
/// of the motion curve.
pub fn superres_frames(
    background: &Image,
    tracked: &[FrameDeblat],
    curve: &Curve2D,
    factor: usize,
) -> Result<SuperresResult> {
    if factor == 0 {
        return Err(Error::InvalidInput("factor must be at least 1".into()));
    }
    let mut frames = Vec::with_capacity(tracked.len() * factor);
    let mut spans = Vec::with_capacity(tracked.len() * factor);
    let mut reused = false;
    for fd in tracked {
        let nseg = fd.snapshots.len();
        if nseg == 0 {
            return Err(Error::Degenerate(format!(
                "frame {} has no snapshots",
                fd.frame_index
            )));
        }
        if factor > nseg {
            reused = true;
        }
        let t0 = fd.frame_index as f64;
        let curve_roi = curve
            .restrict(t0, t0 + 1.0)?
            .translated(fd.roi.x0 as f64, fd.roi.y0 as f64);
        let bg_roi = fd.roi.crop_from(background)?;
        for s in 0..factor {
            let a = t0 + s as f64 / factor as f64;
            let b = t0 + (s + 1) as f64 / factor as f64;
            let midt = 0.5 * (a + b);
            let i = (((midt - t0) * nseg as f64).floor() as usize).min(nseg - 1);
            let snap = &fd.snapshots[i];
            let p0 = snap.mask_centroid();
            let (kh, kw, (ay, ax)) = raster_for(&curve_roi, p0);
            let based = curve_roi.translated(p0.0 - ax as f64, p0.1 - ay as f64);
            let kernel = rasterize_segment(&based, a, b, kh, kw, 1.0)?;
            let patch = render_frame(&bg_roi, snap, &kernel)?;
            frames.push(paste(background, &patch, &fd.roi)?);
            spans.push((a, b));
        }
    }
    Ok(SuperresResult {
        frames,
        spans,
        reused_snapshots: reused,
    })
}

/// Second-moment summary of a nonnegative mass image.
struct MassStats {
    cx: f64,
    cy: f64,
    /// Unit direction of the dominant axis.
    axis: (f64, f64),
    var_major: f64,
    var_minor: f64,
}

fn mass_stats(weights: &[f64], height: usize, width: usize) -> Option<MassStats> {
    let total: f64 = weights.iter().sum();
    if total <= 1e-9 {
        return None;
    }
    let mut cx = 0.0;
    let mut cy = 0.0;
    for y in 0..height {
        for x in 0..width {
            let v = weights[y * width + x];
            cx += v * x as f64;
            cy += v * y as f64;
        }
    }
    cx /= total;
    cy /= total;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for y in 0..height {
        for x in 0..width {
            let v = weights[y * width + x];
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            sxx += v * dx * dx;
            sxy += v * dx * dy;
            syy += v * dy * dy;
        }
    }
    sxx /= total;
    sxy /= total;
    syy /= total;
    let mean = 0.5 * (sxx + syy);
    let gap = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let var_major = mean + gap;
    let var_minor = (mean - gap).max(0.0);
    // Eigenvector of the larger eigenvalue; fall back to +x when isotropic.
    let cand = (var_major - syy, sxy);
    let alt = (sxy, var_major - sxx);
    let pick = if cand.0.abs() + cand.1.abs() >= alt.0.abs() + alt.1.abs() {
        cand
    } else {
        alt
    };
    let norm = (pick.0 * pick.0 + pick.1 * pick.1).sqrt();
    let axis = if norm > 1e-9 {
        (pick.0 / norm, pick.1 / norm)
    } else {
        (1.0, 0.0)
    };
    Some(MassStats {
        cx,
        cy,
        axis,
        var_major,
        var_minor,
    })
}

/// Endpoints of a straight streak implied by second moments: a segment of
/// length L convolved with a disk has variance L^2/12 + r^2/4 along the
/// motion and r^2/4 across it, so the length follows from the variance gap.
fn endpoints_from_stats(stats: &MassStats) -> ((f64, f64), (f64, f64)) {
    let len = (12.0 * (stats.var_major - stats.var_minor)).max(0.0).sqrt();
    let h = 0.5 * len;
    (
        (stats.cx - h * stats.axis.0, stats.cy - h * stats.axis.1),
        (stats.cx + h * stats.axis.0, stats.cy + h * stats.axis.1),
    )
}

fn frame_streak_endpoints(
    frame: &Image,
    background: &Image,
    params: &TrackParams,
) -> Result<((f64, f64), (f64, f64))> {
    let (h, w) = frame.dims();
    let mut diff = vec![0.0; h * w];
    for c in 0..frame.channels() {
        for (d, (f, b)) in diff
            .iter_mut()
            .zip(frame.plane(c).iter().zip(background.plane(c)))
        {
            *d += (f - b).abs();
        }
    }
    for d in &mut diff {
        *d = (*d - DETECT_THRESHOLD).max(0.0);
    }
    let stats = mass_stats(&diff, h, w)
        .ok_or_else(|| Error::Degenerate("no moving object stands out from the background".into()))?;
    let (p, q) = endpoints_from_stats(&stats);
    let radius = (2.0 * stats.var_minor.sqrt()).max(2.0);

    // Refine by estimating the blur kernel of a disk template on a padded
    // crop: the kernel mass traces the motion path directly.
    let seg_len = ((q.0 - p.0).powi(2) + (q.1 - p.1).powi(2)).sqrt();
    let pad = params.roi_pad.max(radius + KERNEL_MARGIN + 2.0);
    let track_curve = Curve2D::single(
        0.0,
        1.0,
        vec![p.0, q.0 - p.0],
        vec![p.1, q.1 - p.1],
    )?;
    let roi = roi_for_frame(h, w, &track_curve, pad)?;
    let frame_roi = roi.crop_from(frame)?;
    let bg_roi = roi.crop_from(background)?;
    let (rh, rw) = frame_roi.dims();
    // Kernel raster geometry of the estimator: frame raster trimmed to odd
    // side lengths, anchored at its center.
    let kh = if rh % 2 == 1 { rh } else { rh - 1 };
    let kw = if rw % 2 == 1 { rw } else { rw - 1 };
    let (ay, ax) = ((kh - 1) / 2, (kw - 1) / 2);

    // Disk template centered on the kernel anchor so kernel raster
    // positions read directly as object centers in crop coordinates.
    let mask = Image::from_fn(rh, rw, 1, |x, y, _| {
        let d = ((x as f64 - ax as f64).powi(2) + (y as f64 - ay as f64).powi(2)).sqrt();
        (radius + 0.5 - d).clamp(0.0, 1.0)
    })?;
    let mut color = [0.0; 3];
    let mut wsum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = diff[y * w + x];
            if v > 0.0 {
                for (acc, c) in color.iter_mut().zip(0..3) {
                    *acc += v * frame.get(x, y, c);
                }
                wsum += v;
            }
        }
    }
    for c in &mut color {
        *c /= wsum.max(1e-12);
    }
    let appearance = Image::from_fn(rh, rw, 3, |x, y, c| mask.get(x, y, 0) * color[c])?;
    let template = Snapshot::new(appearance, mask)?;
    let est = solve_h(&frame_roi, &bg_roi, &template, &params.solver)?;
    let (kh, kw) = est.kernel.dims();
    let Some(kstats) = mass_stats(est.kernel.weights(), kh, kw) else {
        return Ok((p, q));
    };
    let (rp, rq) = endpoints_from_stats(&kstats);
    let refined_len = ((rq.0 - rp.0).powi(2) + (rq.1 - rp.1).powi(2)).sqrt();
    // An implausible refinement (e.g. the solver latched onto residual
    // noise) falls back to the moment estimate.
    if refined_len > 2.0 * seg_len + 4.0 {
        return Ok((p, q));
    }
    let to_frame = |(x, y): (f64, f64)| (x + roi.x0 as f64, y + roi.y0 as f64);
    Ok((to_frame(rp), to_frame(rq)))
}

/// Estimates a continuous 2D trajectory from the frames alone by fitting a
/// straight streak per frame (second moments of the background difference,
/// refined through blur-kernel estimation with a disk template) and joining
/// consecutive endpoints.
pub fn estimate_trajectory_from_frames(
    frames: &[Image],
    background: &Image,
    params: &TrackParams,
) -> Result<Curve2D> {
    params.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidInput("no frames".into()));
    }
    let mut ends: Vec<((f64, f64), (f64, f64))> = frames
        .iter()
        .map(|f| frame_streak_endpoints(f, background, params))
        .collect::<Result<_>>()?;

    // Per-frame streaks carry a direction ambiguity; orient them so
    // consecutive endpoints connect.
    let d2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    if ends.len() >= 2 {
        let (a, b) = (ends[0], ends[1]);
        let mut best = (0usize, f64::INFINITY);
        for (combo, gap) in [
            (0, d2(a.1, b.0)),
            (1, d2(a.0, b.0)),
            (2, d2(a.1, b.1)),
            (3, d2(a.0, b.1)),
        ] {
            if gap < best.1 {
                best = (combo, gap);
            }
        }
        if best.0 == 1 || best.0 == 3 {
            ends[0] = (a.1, a.0);
        }
        if best.0 == 2 || best.0 == 3 {
            ends[1] = (b.1, b.0);
        }
        for i in 2..ends.len() {
            if d2(ends[i - 1].1, ends[i].1) < d2(ends[i - 1].1, ends[i].0) {
                ends[i] = (ends[i].1, ends[i].0);
            }
        }
    }

    let n = ends.len();
    let mut knots = Vec::with_capacity(n + 1);
    knots.push(ends[0].0);
    for i in 1..n {
        knots.push((
            0.5 * (ends[i - 1].1 .0 + ends[i].0 .0),
            0.5 * (ends[i - 1].1 .1 + ends[i].0 .1),
        ));
    }
    knots.push(ends[n - 1].1);

    let breakpoints: Vec<f64> = (0..=n).map(|i| i as f64).collect();
    let segments = knots
        .windows(2)
        .map(|w| crate::curve::PolySegment2 {
            degree: 1,
            coeffs_x: vec![w[0].0, w[1].0 - w[0].0],
            coeffs_y: vec![w[0].1, w[1].1 - w[0].1],
        })
        .collect();
    Curve2D::new(breakpoints, segments)
}
