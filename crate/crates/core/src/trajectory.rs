//! 3D trajectories: depth from mask area, bounce detection, and constrained
//! piecewise-polynomial fitting.
//!
//! Depth is relative: a sphere's perceived radius scales with the inverse of
//! its distance under perspective, so `depth = sqrt(pi / mask_area)` gives
//! depth up to a global scale chosen later (median depth of a sequence is
//! normalized to 1). Coordinates are (x, y) in pixels plus this relative depth.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::curve::{
    horner, segment_index, validate_breakpoints, validate_coeffs, Curve2D, PolySegment2,
    CONTINUITY_TOL, MAX_DEGREE,
};
use crate::error::{Error, Result};
use crate::image::Image;

/// Mask areas below this many pixels make a depth estimate unreliable.
pub const MIN_RELIABLE_AREA: f64 = 4.0;

/// Bounce candidates closer than this (in frames) collapse into one.
pub const BOUNCE_MERGE_WINDOW: f64 = 0.5;

/// Slope-change threshold factor over the robust derivative-change scale.
pub const BOUNCE_SLOPE_FACTOR: f64 = 3.0;

/// One polynomial piece of a 3D trajectory, in the local variable
/// `u = t - t_start` (ascending powers).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolySegment3 {
    pub degree: usize,
    pub coeffs_x: Vec<f64>,
    pub coeffs_y: Vec<f64>,
    pub coeffs_d: Vec<f64>,
}

/// Continuous piecewise-polynomial map `t -> (x, y, depth)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "TrajRepr", into = "TrajRepr")]
pub struct Trajectory3D {
    breakpoints: Vec<f64>,
    segments: Vec<PolySegment3>,
}

#[derive(Serialize, Deserialize)]
struct TrajRepr {
    breakpoints: Vec<f64>,
    segments: Vec<PolySegment3>,
}

impl TryFrom<TrajRepr> for Trajectory3D {
    type Error = Error;
    fn try_from(r: TrajRepr) -> Result<Self> {
        Trajectory3D::new(r.breakpoints, r.segments)
    }
}

impl From<Trajectory3D> for TrajRepr {
    fn from(t: Trajectory3D) -> Self {
        TrajRepr { breakpoints: t.breakpoints, segments: t.segments }
    }
}

impl Trajectory3D {
    /// Builds a trajectory, checking shapes and continuity in all coordinates.
    pub fn new(breakpoints: Vec<f64>, segments: Vec<PolySegment3>) -> Result<Self> {
        validate_breakpoints(&breakpoints, segments.len())?;
        for seg in &segments {
            validate_coeffs(seg.degree, &[&seg.coeffs_x, &seg.coeffs_y, &seg.coeffs_d])?;
        }
        let traj = Self { breakpoints, segments };
        for s in 1..traj.segments.len() {
            let t = traj.breakpoints[s];
            let a = traj.eval_segment(s - 1, t);
            let b = traj.eval_segment(s, t);
            let gap = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            if gap > CONTINUITY_TOL {
                return Err(Error::InvalidInput(format!(
                    "discontinuity of {gap:.3e} at breakpoint {t}"
                )));
            }
        }
        Ok(traj)
    }

    /// Single segment over `[t0, t1]`; coordinates are zero-padded to a
    /// common degree.
    pub fn single(
        t0: f64,
        t1: f64,
        mut coeffs_x: Vec<f64>,
        mut coeffs_y: Vec<f64>,
        mut coeffs_d: Vec<f64>,
    ) -> Result<Self> {
        let len = coeffs_x.len().max(coeffs_y.len()).max(coeffs_d.len()).max(1);
        coeffs_x.resize(len, 0.0);
        coeffs_y.resize(len, 0.0);
        coeffs_d.resize(len, 0.0);
        Self::new(
            vec![t0, t1],
            vec![PolySegment3 { degree: len - 1, coeffs_x, coeffs_y, coeffs_d }],
        )
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[PolySegment3] {
        &self.segments
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    fn eval_segment(&self, s: usize, t: f64) -> [f64; 3] {
        let u = t - self.breakpoints[s];
        let seg = &self.segments[s];
        [horner(&seg.coeffs_x, u), horner(&seg.coeffs_y, u), horner(&seg.coeffs_d, u)]
    }

    /// Position at time `t`, clamped to the domain. At an interior breakpoint
    /// the left segment wins.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let (t0, t1) = self.domain();
        let t = t.clamp(t0, t1);
        self.eval_segment(segment_index(&self.breakpoints, t), t)
    }

    /// The (x, y) part as a 2D curve.
    pub fn project_xy(&self) -> Curve2D {
        let segments = self
            .segments
            .iter()
            .map(|s| PolySegment2 {
                degree: s.degree,
                coeffs_x: s.coeffs_x.clone(),
                coeffs_y: s.coeffs_y.clone(),
            })
            .collect();
        Curve2D::new(self.breakpoints.clone(), segments).expect("projection preserves validity")
    }

    /// Same trajectory with the depth coordinate multiplied by `scale`.
    pub fn scaled_depth(&self, scale: f64) -> Trajectory3D {
        let mut segments = self.segments.clone();
        for seg in &mut segments {
            for c in &mut seg.coeffs_d {
                *c *= scale;
            }
        }
        Trajectory3D { breakpoints: self.breakpoints.clone(), segments }
    }

    /// Widens the domain to cover `[t0, t1]` by extrapolating the outer
    /// segments. Breakpoints only move outward; the interior is unchanged.
    pub fn extended(&self, t0: f64, t1: f64) -> Result<Trajectory3D> {
        if !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidInput("extension bounds must be finite".into()));
        }
        let mut breakpoints = self.breakpoints.clone();
        let mut segments = self.segments.clone();
        let shift = breakpoints[0] - t0;
        if shift > 0.0 {
            // The first segment's polynomials are in u = t - old start; moving
            // the start re-centers them: q(u') = p(u' - shift).
            let seg = &mut segments[0];
            for coeffs in [&mut seg.coeffs_x, &mut seg.coeffs_y, &mut seg.coeffs_d] {
                *coeffs = recenter_poly(coeffs, -shift);
            }
            breakpoints[0] = t0;
        }
        let last = breakpoints.len() - 1;
        if t1 > breakpoints[last] {
            breakpoints[last] = t1;
        }
        Trajectory3D::new(breakpoints, segments)
    }
}

/// Coefficients of `p(u + shift)` given those of `p`.
fn recenter_poly(coeffs: &[f64], shift: f64) -> Vec<f64> {
    let mut out = vec![0.0; coeffs.len()];
    for (j, &c) in coeffs.iter().enumerate() {
        // c * (u + shift)^j contributes c * C(j, k) * shift^(j - k) to u^k.
        let mut term = c;
        out[j] += term;
        for k in (0..j).rev() {
            term *= shift * (k + 1) as f64 / (j - k) as f64;
            out[k] += term;
        }
    }
    out
}

/// Depth read off a single mask.
#[derive(Debug, Clone, Copy)]
pub struct DepthEstimate {
    pub depth: f64,
    pub area: f64,
    pub reliable: bool,
}

/// Relative depth from a mask's area: `depth = sqrt(pi / area)`, the inverse
/// of the perceived radius. Tiny areas are flagged unreliable.
pub fn depth_from_mask(mask: &Image) -> DepthEstimate {
    let area = mask.plane_sum(0);
    let depth = (std::f64::consts::PI / area.max(1e-12)).sqrt();
    DepthEstimate { depth, area, reliable: area >= MIN_RELIABLE_AREA }
}

/// One sub-frame observation entering the trajectory fit.
#[derive(Debug, Clone, Copy)]
pub struct DepthSample {
    /// Frame time of the sub-frame center.
    pub t: f64,
    /// Object center in pixels, from the 2D trajectory.
    pub x: f64,
    pub y: f64,
    /// Relative depth.
    pub depth: f64,
    /// Mask area the depth was derived from.
    pub area: f64,
    pub reliable: bool,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Merges 2D bounce times with sharp sign changes of the depth derivative.
///
/// A depth bounce needs a strict sign flip between consecutive increments and
/// a slope change of at least `BOUNCE_SLOPE_FACTOR` times the median absolute
/// second difference. The second-difference median is the robust scale here
/// on purpose: it vanishes on piecewise-linear depth (so a clean vee is
/// caught) and equals the slope change at a smooth parabolic minimum (so a
/// flyby nearest point is not). Candidates within `BOUNCE_MERGE_WINDOW`
/// frames collapse; a cluster containing a 2D bounce keeps that
/// (authoritative) time, otherwise the cluster mean is used.
pub fn detect_bounces(samples: &[DepthSample], bounces_2d: &[f64]) -> Vec<f64> {
    let pts: Vec<&DepthSample> = samples.iter().filter(|s| s.reliable).collect();
    let mut depth_events = Vec::new();
    if pts.len() >= 3 {
        let inc: Vec<f64> = pts.windows(2).map(|w| w[1].depth - w[0].depth).collect();
        let mut curv: Vec<f64> = inc.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let threshold = (BOUNCE_SLOPE_FACTOR * median(&mut curv)).max(1e-12);
        for k in 1..inc.len() {
            if inc[k - 1] * inc[k] < 0.0 && (inc[k] - inc[k - 1]).abs() >= threshold {
                depth_events.push(pts[k].t);
            }
        }
    }
    let mut events: Vec<(f64, bool)> = bounces_2d.iter().map(|t| (*t, true)).collect();
    events.extend(depth_events.iter().map(|t| (*t, false)));
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut merged = Vec::new();
    let mut i = 0;
    while i < events.len() {
        let mut j = i + 1;
        while j < events.len() && events[j].0 - events[j - 1].0 <= BOUNCE_MERGE_WINDOW {
            j += 1;
        }
        let cluster = &events[i..j];
        let t = match cluster.iter().find(|(_, from_2d)| *from_2d) {
            Some((t, _)) => *t,
            None => cluster.iter().map(|(t, _)| t).sum::<f64>() / cluster.len() as f64,
        };
        merged.push(t);
        i = j;
    }
    merged
}

/// Least-squares piecewise-polynomial fit of the reliable samples, with
/// segments split at `bounces` and positions forced continuous across them.
///
/// Per segment the degree is `min(6, floor(span_frames / 4) + 1)`, further
/// capped by the sample count. Interior segments need degree >= 1 so that the
/// two continuity constraints stay satisfiable; a segment without samples
/// becomes such a linear bridge between its neighbors (or a constant fill at
/// the ends).
pub fn fit_trajectory(samples: &[DepthSample], bounces: &[f64]) -> Result<Trajectory3D> {
    let mut pts: Vec<&DepthSample> = samples.iter().filter(|s| s.reliable).collect();
    pts.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    if pts.len() < 2 {
        return Err(Error::Degenerate(format!(
            "{} reliable samples is not enough to fit a trajectory",
            pts.len()
        )));
    }
    let t0 = pts[0].t;
    let t1 = pts[pts.len() - 1].t;
    if !(t1 > t0) {
        return Err(Error::Degenerate("all samples share one timestamp".into()));
    }
    let mut breakpoints = vec![t0];
    let mut sorted_bounces: Vec<f64> = bounces
        .iter()
        .copied()
        .filter(|b| *b > t0 + 1e-9 && *b < t1 - 1e-9)
        .collect();
    sorted_bounces.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breakpoints.extend(sorted_bounces);
    breakpoints.push(t1);

    let n_seg = breakpoints.len() - 1;
    // Samples per segment; a sample exactly at an interior breakpoint counts
    // for both sides, which also stabilizes the continuity constraint.
    let mut members: Vec<Vec<&DepthSample>> = vec![Vec::new(); n_seg];
    for p in &pts {
        for s in 0..n_seg {
            if p.t >= breakpoints[s] - 1e-12 && p.t <= breakpoints[s + 1] + 1e-12 {
                members[s].push(p);
            }
        }
    }
    let degrees: Vec<usize> = (0..n_seg)
        .map(|s| {
            let span = breakpoints[s + 1] - breakpoints[s];
            let by_span = (span / 4.0).floor() as usize + 1;
            let by_count = members[s].len().saturating_sub(1);
            let interior = n_seg > 1 && s > 0 && s + 1 < n_seg;
            let floor_deg = if interior || members[s].is_empty() { 1 } else { 0 };
            by_span.min(by_count.max(floor_deg)).min(MAX_DEGREE).max(floor_deg)
        })
        .collect();

    let offsets: Vec<usize> = degrees
        .iter()
        .scan(0usize, |acc, d| {
            let here = *acc;
            *acc += d + 1;
            Some(here)
        })
        .collect();
    let n_coef: usize = degrees.iter().map(|d| d + 1).sum();
    let n_con = n_seg - 1;

    // One KKT system per coordinate: minimize |A c - y|^2 + eps |c|^2
    // subject to continuity rows C c = 0.
    let dim = n_coef + n_con;
    let mut fitted: Vec<Vec<f64>> = Vec::with_capacity(3);
    for coord in 0..3 {
        let mut ata = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DMatrix::<f64>::zeros(dim, 1);
        for s in 0..n_seg {
            let base = offsets[s];
            for p in &members[s] {
                let u = p.t - breakpoints[s];
                let mut row = vec![0.0; degrees[s] + 1];
                let mut pw = 1.0;
                for r in row.iter_mut() {
                    *r = pw;
                    pw *= u;
                }
                let y = match coord {
                    0 => p.x,
                    1 => p.y,
                    _ => p.depth,
                };
                for a in 0..row.len() {
                    for b in 0..row.len() {
                        ata[(base + a, base + b)] += row[a] * row[b];
                    }
                    rhs[(base + a, 0)] += row[a] * y;
                }
            }
        }
        for i in 0..n_coef {
            ata[(i, i)] += 1e-12;
        }
        for con in 0..n_con {
            // Value of segment `con` at its right end minus segment `con + 1`
            // at its left end.
            let s = con;
            let u_end = breakpoints[s + 1] - breakpoints[s];
            let mut pw = 1.0;
            for a in 0..=degrees[s] {
                ata[(n_coef + con, offsets[s] + a)] = pw;
                ata[(offsets[s] + a, n_coef + con)] = pw;
                pw *= u_end;
            }
            ata[(n_coef + con, offsets[s + 1])] = -1.0;
            ata[(offsets[s + 1], n_coef + con)] = -1.0;
        }
        let solved = ata
            .full_piv_lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Degenerate("singular trajectory fit system".into()))?;
        fitted.push(solved.column(0).iter().take(n_coef).copied().collect());
    }

    let segments: Vec<PolySegment3> = (0..n_seg)
        .map(|s| {
            let range = offsets[s]..offsets[s] + degrees[s] + 1;
            PolySegment3 {
                degree: degrees[s],
                coeffs_x: fitted[0][range.clone()].to_vec(),
                coeffs_y: fitted[1][range.clone()].to_vec(),
                coeffs_d: fitted[2][range].to_vec(),
            }
        })
        .collect();
    Trajectory3D::new(breakpoints, segments)
}
