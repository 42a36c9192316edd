//! Piecewise-polynomial 2D trajectories in pixel coordinates.
//!
//! A curve maps frame time `t` to a sub-pixel image position. Segments store
//! their coefficients in the local variable `u = t - t_start` (ascending
//! powers), which keeps Vandermonde systems well conditioned over domains of
//! tens of frames; evaluation is Horner on the stored coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positional continuity required between adjacent segments, in pixels.
pub const CONTINUITY_TOL: f64 = 1e-6;

/// Highest polynomial degree a segment may carry.
pub const MAX_DEGREE: usize = 6;

/// One polynomial piece of a 2D curve, in the local variable of its segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolySegment2 {
    pub degree: usize,
    /// Coefficients of x(u), ascending powers, length `degree + 1`.
    pub coeffs_x: Vec<f64>,
    /// Coefficients of y(u), ascending powers, length `degree + 1`.
    pub coeffs_y: Vec<f64>,
}

/// Continuous piecewise-polynomial curve `t -> (x, y)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "CurveRepr", into = "CurveRepr")]
pub struct Curve2D {
    breakpoints: Vec<f64>,
    segments: Vec<PolySegment2>,
}

/// Serialized form: `{"breakpoints": [...], "segments": [...]}`.
#[derive(Serialize, Deserialize)]
struct CurveRepr {
    breakpoints: Vec<f64>,
    segments: Vec<PolySegment2>,
}

impl TryFrom<CurveRepr> for Curve2D {
    type Error = Error;
    fn try_from(r: CurveRepr) -> Result<Self> {
        Curve2D::new(r.breakpoints, r.segments)
    }
}

impl From<Curve2D> for CurveRepr {
    fn from(c: Curve2D) -> Self {
        CurveRepr { breakpoints: c.breakpoints, segments: c.segments }
    }
}

pub(crate) fn horner(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

pub(crate) fn validate_breakpoints(breakpoints: &[f64], segments: usize) -> Result<()> {
    if segments == 0 {
        return Err(Error::InvalidInput("curve needs at least one segment".into()));
    }
    if breakpoints.len() != segments + 1 {
        return Err(Error::InvalidInput(format!(
            "{} breakpoints for {} segments",
            breakpoints.len(),
            segments
        )));
    }
    if breakpoints.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput("non-finite breakpoint".into()));
    }
    if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("breakpoints must be strictly increasing".into()));
    }
    Ok(())
}

pub(crate) fn validate_coeffs(degree: usize, coeffs: &[&[f64]]) -> Result<()> {
    if degree > MAX_DEGREE {
        return Err(Error::InvalidInput(format!("degree {degree} exceeds {MAX_DEGREE}")));
    }
    for cs in coeffs {
        if cs.len() != degree + 1 {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for degree {degree}",
                cs.len()
            )));
        }
        if cs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
    }
    Ok(())
}

/// Index of the segment containing `t`; at an interior breakpoint the left
/// segment wins.
pub(crate) fn segment_index(breakpoints: &[f64], t: f64) -> usize {
    let interior = &breakpoints[1..breakpoints.len() - 1];
    interior.partition_point(|b| *b < t)
}

impl Curve2D {
    /// Builds a curve, checking breakpoint ordering, coefficient shapes and
    /// positional continuity at interior breakpoints.
    pub fn new(breakpoints: Vec<f64>, segments: Vec<PolySegment2>) -> Result<Self> {
        validate_breakpoints(&breakpoints, segments.len())?;
        for seg in &segments {
            validate_coeffs(seg.degree, &[&seg.coeffs_x, &seg.coeffs_y])?;
        }
        let curve = Self { breakpoints, segments };
        for s in 1..curve.segments.len() {
            let t = curve.breakpoints[s];
            let left = curve.eval_segment(s - 1, t);
            let right = curve.eval_segment(s, t);
            let gap = ((left.0 - right.0).powi(2) + (left.1 - right.1).powi(2)).sqrt();
            if gap > CONTINUITY_TOL {
                return Err(Error::InvalidInput(format!(
                    "discontinuity of {gap:.3e} px at breakpoint {t}"
                )));
            }
        }
        Ok(curve)
    }

    /// Single polynomial segment over `[t0, t1]` from local-variable
    /// coefficients; the shorter coordinate is zero-padded to the common degree.
    pub fn single(t0: f64, t1: f64, mut coeffs_x: Vec<f64>, mut coeffs_y: Vec<f64>) -> Result<Self> {
        let len = coeffs_x.len().max(coeffs_y.len()).max(1);
        coeffs_x.resize(len, 0.0);
        coeffs_y.resize(len, 0.0);
        Self::new(vec![t0, t1], vec![PolySegment2 { degree: len - 1, coeffs_x, coeffs_y }])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[PolySegment2] {
        &self.segments
    }

    /// `(start, end)` of the covered time interval.
    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    fn eval_segment(&self, s: usize, t: f64) -> (f64, f64) {
        let u = t - self.breakpoints[s];
        let seg = &self.segments[s];
        (horner(&seg.coeffs_x, u), horner(&seg.coeffs_y, u))
    }

    /// Position at time `t`. Times outside the domain are clamped to it.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let (t0, t1) = self.domain();
        let t = t.clamp(t0, t1);
        self.eval_segment(segment_index(&self.breakpoints, t), t)
    }

    /// `n` positions at midpoint times of `n` equal sub-intervals of `[t0, t1]`.
    pub fn sample_positions(&self, t0: f64, t1: f64, n: usize) -> Vec<(f64, f64)> {
        let step = (t1 - t0) / n as f64;
        (0..n).map(|i| self.eval(t0 + (i as f64 + 0.5) * step)).collect()
    }

    /// Polyline estimate of arc length over `[t0, t1]` in pixels.
    pub fn arc_length(&self, t0: f64, t1: f64) -> f64 {
        const SAMPLES: usize = 256;
        let mut prev = self.eval(t0);
        let mut total = 0.0;
        for i in 1..=SAMPLES {
            let t = t0 + (t1 - t0) * i as f64 / SAMPLES as f64;
            let p = self.eval(t);
            total += ((p.0 - prev.0).powi(2) + (p.1 - prev.1).powi(2)).sqrt();
            prev = p;
        }
        total
    }

    /// Same curve expressed in a raster whose origin sits at `(dx, dy)` of the
    /// current coordinate frame.
    pub fn translated(&self, dx: f64, dy: f64) -> Curve2D {
        let mut segments = self.segments.clone();
        for seg in &mut segments {
            seg.coeffs_x[0] -= dx;
            seg.coeffs_y[0] -= dy;
        }
        Curve2D { breakpoints: self.breakpoints.clone(), segments }
    }

    /// Reparametrizes the whole curve onto the time interval `[a, b]` by the
    /// affine map that sends the current domain onto it.
    pub fn with_domain(&self, a: f64, b: f64) -> Result<Curve2D> {
        if !(b > a) {
            return Err(Error::InvalidInput("empty target domain".into()));
        }
        let (t0, t1) = self.domain();
        // Breakpoints map affinely; one unit of new time advances the old
        // parameter by `scale`, so local coefficients pick up scale^k.
        let scale = (t1 - t0) / (b - a);
        let breakpoints: Vec<f64> =
            self.breakpoints.iter().map(|t| a + (t - t0) * (b - a) / (t1 - t0)).collect();
        let mut segments = self.segments.clone();
        for seg in &mut segments {
            let mut pw = 1.0;
            for k in 0..=seg.degree {
                seg.coeffs_x[k] *= pw;
                seg.coeffs_y[k] *= pw;
                pw *= scale;
            }
        }
        Curve2D::new(breakpoints, segments)
    }

    /// The same curve cut down to the sub-interval `[t0, t1]` of its domain.
    /// Interior breakpoints inside the window are kept; the boundary pieces
    /// are re-based exactly (binomial shift of the local coefficients).
    pub fn restrict(&self, t0: f64, t1: f64) -> Result<Curve2D> {
        let (d0, d1) = self.domain();
        if !(t1 > t0) {
            return Err(Error::InvalidInput(format!(
                "empty restriction interval [{t0}, {t1}]"
            )));
        }
        if t0 < d0 - 1e-9 || t1 > d1 + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "restriction [{t0}, {t1}] leaves the domain [{d0}, {d1}]"
            )));
        }
        let t0 = t0.max(d0);
        let t1 = t1.min(d1);
        let mut breakpoints = vec![t0];
        for &b in &self.breakpoints {
            if b > t0 + 1e-12 && b < t1 - 1e-12 {
                breakpoints.push(b);
            }
        }
        breakpoints.push(t1);
        let segments = breakpoints
            .windows(2)
            .map(|w| {
                let s = segment_index(&self.breakpoints, 0.5 * (w[0] + w[1]));
                let seg = &self.segments[s];
                let delta = w[0] - self.breakpoints[s];
                PolySegment2 {
                    degree: seg.degree,
                    coeffs_x: shift_poly(&seg.coeffs_x, delta),
                    coeffs_y: shift_poly(&seg.coeffs_y, delta),
                }
            })
            .collect();
        Curve2D::new(breakpoints, segments)
    }
}

/// Coefficients of `p(u + delta)` in ascending powers of `u`.
pub(crate) fn shift_poly(coeffs: &[f64], delta: f64) -> Vec<f64> {
    let n = coeffs.len();
    let mut out = vec![0.0; n];
    for (j, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in (j..n).rev() {
            acc = acc * delta + coeffs[k] * binomial(k, j);
        }
        *slot = acc;
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut v = 1.0;
    for i in 0..k.min(n - k) {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}
