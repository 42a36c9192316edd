//! Spin estimation for spherical objects.
//!
//! Coordinate frame everywhere: x right, y down, z toward the camera. An
//! angular velocity is a 3-vector in radians per frame-time unit; its
//! direction is the rotation axis and its norm the rotation rate.
//!
//! Estimation matches pairs of sharp sub-frame snapshots. A candidate
//! velocity is scored by rotating the sphere texture of the earlier snapshot
//! onto the later one and measuring the mean photometric residual over a
//! central region chosen so that every candidate keeps the region's
//! pre-image on the visible hemisphere. Pairwise votes from a short window
//! are fused by a consensus rule that discards outlier pairs.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{mask_centroid, Image, Snapshot};

/// Smallest usable visibility-region radius in pixels. A pair whose region
/// would shrink below this is treated as uninformative.
const MIN_REGION_RADIUS: f64 = 3.0;

/// Minimum per-channel texture variance inside the region for a pair to
/// produce a meaningful vote. A flat ball scores every rotation equally.
const TEXTURE_VARIANCE_MIN: f64 = 1e-4;

/// Floor applied to the mask before un-premultiplying the appearance, so
/// thin rim coverage does not blow up the recovered texture.
const UNPREMULTIPLY_FLOOR: f64 = 0.2;

/// Windows larger than this use only pair baselines up to
/// [`PAIR_SPAN_CAP`] snapshots apart instead of all pairs.
const ALL_PAIRS_MAX: usize = 10;
const PAIR_SPAN_CAP: usize = 5;

/// Angular velocity as an axis-scaled rotation rate. The zero vector means
/// no rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularVelocity {
    pub omega: [f64; 3],
}

impl AngularVelocity {
    pub fn new(omega: [f64; 3]) -> Result<Self> {
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite angular velocity".into()));
        }
        Ok(Self { omega })
    }

    pub fn zero() -> Self {
        Self { omega: [0.0; 3] }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.omega[0], self.omega[1], self.omega[2])
    }

    /// Rotation rate in radians per frame.
    pub fn rate(&self) -> f64 {
        self.vector().norm()
    }

    /// Unit axis, or `None` for (numerically) zero rotation.
    pub fn axis(&self) -> Option<Vector3<f64>> {
        let v = self.vector();
        let n = v.norm();
        if n > 1e-12 {
            Some(v / n)
        } else {
            None
        }
    }

    /// Total rotation vector accumulated over `dt` frames.
    pub fn scaled(&self, dt: f64) -> Vector3<f64> {
        self.vector() * dt
    }
}

/// Discrete set of candidate angular velocities: a near-uniform set of unit
/// axes crossed with evenly spaced rates, plus the single zero-velocity
/// candidate. Rates are non-negative; opposite spins are covered because the
/// axis set contains every axis together with its antipode.
#[derive(Debug, Clone)]
pub struct VelocityGrid {
    axes: Vec<Vector3<f64>>,
    delta: f64,
    rate_max: f64,
}

impl VelocityGrid {
    /// Builds a grid of `n_axes` axes (must be even: the set is generated as
    /// a spherical Fibonacci lattice on one hemisphere plus its antipodes)
    /// with rates `delta, 2 delta, ..., <= rate_max` in radians per frame.
    pub fn new(n_axes: usize, delta: f64, rate_max: f64) -> Result<Self> {
        if n_axes < 2 || n_axes % 2 != 0 {
            return Err(Error::InvalidInput(
                "axis count must be even and at least 2".into(),
            ));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidInput("rate step must be positive".into()));
        }
        if !(rate_max.is_finite() && rate_max >= delta) {
            return Err(Error::InvalidInput(
                "maximum rate must be at least one rate step".into(),
            ));
        }
        let half = n_axes / 2;
        let golden_angle = PI * (3.0 - 5.0f64.sqrt());
        let mut axes = Vec::with_capacity(n_axes);
        for i in 0..half {
            let z = (i as f64 + 0.5) / half as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let theta = golden_angle * i as f64;
            axes.push(Vector3::new(r * theta.cos(), r * theta.sin(), z));
        }
        for i in 0..half {
            axes.push(-axes[i]);
        }
        Ok(Self {
            axes,
            delta,
            rate_max,
        })
    }

    pub fn axes(&self) -> &[Vector3<f64>] {
        &self.axes
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rate_max(&self) -> f64 {
        self.rate_max
    }

    /// All candidate velocities in a fixed order: the zero candidate first,
    /// then every axis with increasing rates.
    pub fn candidates(&self) -> Vec<AngularVelocity> {
        let n_rates = (self.rate_max / self.delta + 1e-9).floor() as usize;
        let mut out = Vec::with_capacity(self.axes.len() * n_rates + 1);
        out.push(AngularVelocity::zero());
        for axis in &self.axes {
            for k in 1..=n_rates {
                let v = axis * (k as f64 * self.delta);
                out.push(AngularVelocity {
                    omega: [v.x, v.y, v.z],
                });
            }
        }
        out
    }

    /// Same axes with the rate step halved. The coarse rates are a subset of
    /// the refined ones, so refining never removes a candidate.
    pub fn refined(&self) -> Self {
        Self {
            axes: self.axes.clone(),
            delta: self.delta / 2.0,
            rate_max: self.rate_max,
        }
    }
}

impl Default for VelocityGrid {
    fn default() -> Self {
        Self::new(312, 0.02, 1.2).expect("default grid parameters are valid")
    }
}

/// Tuning for fusing pairwise votes inside a window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusParams {
    /// Agreement radius: votes within `rho` of each other (euclidean on the
    /// velocity vector) support the same hypothesis.
    pub rho: f64,
    /// Additive stabilizer in the score `1 / (error + epsilon)`.
    pub epsilon: f64,
    /// Number of snapshots per sliding window.
    pub window: usize,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        Self {
            rho: 0.04,
            epsilon: 1e-3,
            window: 8,
        }
    }
}

impl ConsensusParams {
    /// The agreement radius must cover the grid quantization, otherwise two
    /// votes for the same true velocity can fail to support each other.
    pub fn validate(&self, grid: &VelocityGrid) -> Result<()> {
        if !(self.rho.is_finite() && self.rho >= grid.delta()) {
            return Err(Error::InvalidInput(
                "agreement radius must be at least the grid rate step".into(),
            ));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidInput(
                "score stabilizer must be positive".into(),
            ));
        }
        if self.window < 3 {
            return Err(Error::InvalidInput(
                "window must hold at least 3 snapshots".into(),
            ));
        }
        Ok(())
    }
}

/// One pair's velocity hypothesis. `informative` is false when the pair
/// cannot discriminate between rotations (flat texture, unusable region);
/// such votes carry zero score and are skipped by the consensus.
#[derive(Debug, Clone, Copy)]
pub struct PairwiseVote {
    pub omega: AngularVelocity,
    pub score: f64,
    pub informative: bool,
}

impl PairwiseVote {
    fn uninformative() -> Self {
        Self {
            omega: AngularVelocity::zero(),
            score: 0.0,
            informative: false,
        }
    }
}

/// Fused estimate for one window.
#[derive(Debug, Clone, Copy)]
pub struct WindowEstimate {
    pub omega: AngularVelocity,
    /// Number of votes in the winning consensus set.
    pub n_inliers: usize,
    /// Total score of the winning consensus set.
    pub score_total: f64,
}

/// One timestamped output of [`sliding_velocities`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VelocitySample {
    pub t_center: f64,
    pub omega: AngularVelocity,
    pub n_inliers: usize,
    pub score_total: f64,
}

/// Center and radius of the disk support of a mask, with the radius taken
/// from the covered area.
fn disk_geometry(mask: &Image) -> Result<(f64, f64, f64)> {
    if mask.channels() != 1 {
        return Err(Error::DimensionMismatch(
            "mask must have a single channel".into(),
        ));
    }
    let area = mask.plane_sum(0);
    if area <= 1e-9 {
        return Err(Error::Degenerate("empty mask".into()));
    }
    let (cx, cy) = mask_centroid(mask);
    Ok((cx, cy, (area / PI).sqrt()))
}

/// Inverse of the rotation described by the rotation vector `total`
/// (axis times angle, radians).
fn inverse_rotation(total: Vector3<f64>) -> Matrix3<f64> {
    UnitQuaternion::from_scaled_axis(total)
        .inverse()
        .to_rotation_matrix()
        .into_inner()
}

/// Renders the sphere seen in `appearance` after rotating it by the rotation
/// vector `rotation` (axis times angle). The ball's center and radius come
/// from the mask; the silhouette of a sphere is rotation-invariant, so the
/// mask itself is unchanged by the motion.
///
/// Output pixels whose pre-image falls on the far hemisphere, or outside the
/// mask, are zero. The appearance is sampled bilinearly.
pub fn rotate_sphere_image(
    appearance: &Image,
    mask: &Image,
    rotation: Vector3<f64>,
) -> Result<Image> {
    let (h, w) = appearance.dims();
    if mask.dims() != (h, w) {
        return Err(Error::DimensionMismatch(
            "appearance and mask sizes differ".into(),
        ));
    }
    if !rotation.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite rotation vector".into()));
    }
    let (cx, cy, radius) = disk_geometry(mask)?;
    let inv = inverse_rotation(rotation);
    let channels = appearance.channels();
    let mask_plane = mask.plane(0);
    let mut data = vec![0.0; channels * h * w];
    for y in 0..h {
        for x in 0..w {
            if mask_plane[y * w + x] <= 0.0 {
                continue;
            }
            let ux = (x as f64 - cx) / radius;
            let uy = (y as f64 - cy) / radius;
            let rho2 = ux * ux + uy * uy;
            if rho2 > 1.0 {
                continue;
            }
            let p = Vector3::new(ux, uy, (1.0 - rho2).sqrt());
            let q = inv * p;
            if q.z < 0.0 {
                continue;
            }
            let sx = cx + q.x * radius;
            let sy = cy + q.y * radius;
            for c in 0..channels {
                data[(c * h + y) * w + x] = appearance.bilinear(c, sx, sy);
            }
        }
    }
    Image::new(h, w, channels, data)
}

/// Resamples a snapshot's un-premultiplied sphere texture onto a square
/// canvas with the ball centered on the raster center at the given radius.
/// All rotation scoring happens on such canvases, so snapshots of different
/// apparent sizes become comparable.
pub fn resample_ball(snapshot: &Snapshot, radius: f64) -> Result<Image> {
    if !(radius.is_finite() && radius >= 2.0) {
        return Err(Error::InvalidInput(
            "target ball radius must be at least 2 px".into(),
        ));
    }
    let (scx, scy, sr) = disk_geometry(&snapshot.mask)?;
    let side = 2 * (radius.ceil() as usize) + 3;
    let center = ((side - 1) / 2) as f64;
    let scale = sr / radius;
    let channels = snapshot.appearance.channels();
    let mut data = vec![0.0; channels * side * side];
    let reach2 = (radius + 1.0) * (radius + 1.0);
    for y in 0..side {
        for x in 0..side {
            let dx = x as f64 - center;
            let dy = y as f64 - center;
            if dx * dx + dy * dy > reach2 {
                continue;
            }
            let sx = scx + dx * scale;
            let sy = scy + dy * scale;
            let m = snapshot.mask.bilinear(0, sx, sy).max(UNPREMULTIPLY_FLOOR);
            for c in 0..channels {
                let v = snapshot.appearance.bilinear(c, sx, sy) / m;
                data[(c * side + y) * side + x] = v.clamp(0.0, 1.0);
            }
        }
    }
    Image::new(side, side, channels, data)
}

/// Region of a ball canvas whose pre-image stays on the visible hemisphere
/// under every rotation of total angle up to `theta_max`: the central disk
/// of radius `ball_radius * cos(theta_max)`. Returns a single-channel 0/1
/// image on a `side x side` canvas; it is empty when `theta_max`
/// reaches a quarter turn.
pub fn visibility_region(side: usize, ball_radius: f64, theta_max: f64) -> Result<Image> {
    if !(ball_radius.is_finite() && ball_radius > 0.0 && theta_max.is_finite() && theta_max >= 0.0)
    {
        return Err(Error::InvalidInput(
            "region needs a positive radius and a non-negative angle".into(),
        ));
    }
    let region_radius = ball_radius * theta_max.min(FRAC_PI_2).cos();
    let center = ((side - 1) / 2) as f64;
    Image::from_fn(side, side, 1, |x, y, _| {
        let dx = x as f64 - center;
        let dy = y as f64 - center;
        if (dx * dx + dy * dy).sqrt() <= region_radius {
            1.0
        } else {
            0.0
        }
    })
}

/// Region pixels lifted onto the unit sphere, for a ball centered on the
/// raster center of its canvas.
struct RegionSamples {
    /// Unit-sphere point of each region pixel (front hemisphere).
    lift: Vec<Vector3<f64>>,
    /// Pixel coordinates matching `lift`.
    pixels: Vec<(usize, usize)>,
    weights: Vec<f64>,
    weight_sum: f64,
}

fn region_samples(region: &Image, ball_radius: f64) -> Result<RegionSamples> {
    if region.channels() != 1 {
        return Err(Error::DimensionMismatch(
            "region must have a single channel".into(),
        ));
    }
    let (h, w) = region.dims();
    let cx = ((w - 1) / 2) as f64;
    let cy = ((h - 1) / 2) as f64;
    let plane = region.plane(0);
    let mut lift = Vec::new();
    let mut pixels = Vec::new();
    let mut weights = Vec::new();
    let mut weight_sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let wgt = plane[y * w + x];
            if wgt <= 0.0 {
                continue;
            }
            let ux = (x as f64 - cx) / ball_radius;
            let uy = (y as f64 - cy) / ball_radius;
            let rho2 = ux * ux + uy * uy;
            if rho2 > 1.0 {
                return Err(Error::InvalidInput(
                    "region extends beyond the ball silhouette".into(),
                ));
            }
            lift.push(Vector3::new(ux, uy, (1.0 - rho2).sqrt()));
            pixels.push((x, y));
            weights.push(wgt);
            weight_sum += wgt;
        }
    }
    if lift.is_empty() {
        return Err(Error::Degenerate("empty visibility region".into()));
    }
    Ok(RegionSamples {
        lift,
        pixels,
        weights,
        weight_sum,
    })
}

/// Region values of `img`, channel-major per pixel, aligned with the sample
/// list.
fn gather_region(img: &Image, samples: &RegionSamples) -> Vec<f64> {
    let (h, w) = img.dims();
    let channels = img.channels();
    let mut out = Vec::with_capacity(samples.pixels.len() * channels);
    for &(x, y) in &samples.pixels {
        for c in 0..channels {
            out.push(img.data()[(c * h + y) * w + x]);
        }
    }
    out
}

/// Mean absolute residual between `first` rotated by `total` and the region
/// values `second_region` (as produced by [`gather_region`]). Pre-images
/// that leave the front hemisphere count as an empty (zero) sample; regions
/// built by [`visibility_region`] with a covering angle never produce any.
fn warp_error(
    first: &Image,
    second_region: &[f64],
    samples: &RegionSamples,
    ball_radius: f64,
    total: Vector3<f64>,
) -> f64 {
    let (h, w) = first.dims();
    let channels = first.channels();
    let cx = ((w - 1) / 2) as f64;
    let cy = ((h - 1) / 2) as f64;
    let inv = inverse_rotation(total);
    let mut acc = 0.0;
    for (k, p) in samples.lift.iter().enumerate() {
        let q = inv * p;
        let wgt = samples.weights[k];
        if q.z < 0.0 {
            for c in 0..channels {
                acc += wgt * second_region[k * channels + c].abs();
            }
            continue;
        }
        let sx = cx + q.x * ball_radius;
        let sy = cy + q.y * ball_radius;
        for c in 0..channels {
            acc += wgt * (first.bilinear(c, sx, sy) - second_region[k * channels + c]).abs();
        }
    }
    acc / (samples.weight_sum * channels as f64)
}

/// Mean absolute difference, over the region, between `first` rotated
/// forward by `omega` for `dt` frames and `second`. All three images live on
/// a shared ball canvas (sphere centered on the raster center with the given
/// radius, as built by [`resample_ball`]).
pub fn reprojection_error(
    first: &Image,
    second: &Image,
    omega: &AngularVelocity,
    dt: f64,
    region: &Image,
    ball_radius: f64,
) -> Result<f64> {
    if first.dims() != second.dims()
        || first.channels() != second.channels()
        || region.dims() != first.dims()
    {
        return Err(Error::DimensionMismatch(
            "images and region must share one canvas".into(),
        ));
    }
    if !dt.is_finite() {
        return Err(Error::InvalidInput("non-finite time step".into()));
    }
    let samples = region_samples(region, ball_radius)?;
    let second_region = gather_region(second, &samples);
    Ok(warp_error(
        first,
        &second_region,
        &samples,
        ball_radius,
        omega.scaled(dt),
    ))
}

/// Per-channel texture variance of `img` over the region, averaged across
/// channels.
fn region_variance(img: &Image, samples: &RegionSamples) -> f64 {
    let values = gather_region(img, samples);
    let channels = img.channels();
    let n = samples.pixels.len() as f64;
    let mut total = 0.0;
    for c in 0..channels {
        let mut sum = 0.0;
        let mut sq = 0.0;
        for k in 0..samples.pixels.len() {
            let v = values[k * channels + c];
            sum += v;
            sq += v * v;
        }
        let mean = sum / n;
        total += (sq / n - mean * mean).max(0.0);
    }
    total / channels as f64
}

/// Exhaustive grid argmin of the warp residual. Candidate errors are
/// evaluated in parallel but reduced in candidate order, so the result does
/// not depend on the parallel schedule.
fn grid_search(
    first: &Image,
    second_region: &[f64],
    samples: &RegionSamples,
    ball_radius: f64,
    dt: f64,
    grid: &VelocityGrid,
) -> (AngularVelocity, f64) {
    let candidates = grid.candidates();
    let errors: Vec<f64> = candidates
        .par_iter()
        .map(|omega| warp_error(first, second_region, samples, ball_radius, omega.scaled(dt)))
        .collect();
    let mut best = 0;
    for (i, e) in errors.iter().enumerate() {
        if *e < errors[best] {
            best = i;
        }
    }
    (candidates[best], errors[best])
}

/// Scores a prepared pair on a shared canvas. See [`estimate_pairwise`].
fn vote_on_prepared(
    first: &Image,
    second: &Image,
    dt: f64,
    grid: &VelocityGrid,
    epsilon: f64,
    samples: &RegionSamples,
    ball_radius: f64,
) -> PairwiseVote {
    if (region_variance(first, samples)).min(region_variance(second, samples))
        < TEXTURE_VARIANCE_MIN
    {
        return PairwiseVote::uninformative();
    }
    let second_region = gather_region(second, samples);
    let (omega, err) = grid_search(first, &second_region, samples, ball_radius, dt, grid);
    PairwiseVote {
        omega,
        score: 1.0 / (err + epsilon),
        informative: true,
    }
}

/// Estimates the angular velocity carrying `first` onto `second` over `dt`
/// frames by exhaustive search over the grid, and scores the vote as
/// `1 / (residual + epsilon)`.
///
/// Both snapshots are resampled to the mean of their apparent radii. The
/// vote comes back uninformative when the ball texture is too flat to
/// discriminate rotations or when `grid.rate_max() * dt` leaves no usable
/// visibility region.
pub fn estimate_pairwise(
    first: &Snapshot,
    second: &Snapshot,
    dt: f64,
    grid: &VelocityGrid,
    epsilon: f64,
) -> Result<PairwiseVote> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput("time step must be positive".into()));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidInput(
            "score stabilizer must be positive".into(),
        ));
    }
    let (_, _, r1) = disk_geometry(&first.mask)?;
    let (_, _, r2) = disk_geometry(&second.mask)?;
    let radius = 0.5 * (r1 + r2);
    let theta_max = grid.rate_max() * dt;
    if radius * theta_max.min(FRAC_PI_2).cos() < MIN_REGION_RADIUS {
        return Ok(PairwiseVote::uninformative());
    }
    let a = resample_ball(first, radius)?;
    let b = resample_ball(second, radius)?;
    let region = visibility_region(a.dims().0, radius, theta_max)?;
    let samples = region_samples(&region, radius)?;
    Ok(vote_on_prepared(&a, &b, dt, grid, epsilon, &samples, radius))
}

/// Fuses pairwise votes: each vote proposes the consensus set of votes
/// within `rho` of it, the set with the highest total score wins, and the
/// estimate is the score-weighted mean of the winning set (so it stays
/// within `rho` of the winning vote). Identical votes short-circuit to that
/// exact velocity. Errors when every vote is uninformative.
pub fn consensus_vote(votes: &[PairwiseVote], rho: f64) -> Result<WindowEstimate> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidInput(
            "agreement radius must be positive".into(),
        ));
    }
    let live: Vec<&PairwiseVote> = votes.iter().filter(|v| v.informative).collect();
    if live.is_empty() {
        return Err(Error::Degenerate(
            "no informative pairwise votes in the window".into(),
        ));
    }
    if live.iter().all(|v| v.omega.omega == live[0].omega.omega) {
        return Ok(WindowEstimate {
            omega: live[0].omega,
            n_inliers: live.len(),
            score_total: live.iter().map(|v| v.score).sum(),
        });
    }
    let mut best_idx = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, vi) in live.iter().enumerate() {
        let mut score = 0.0;
        for vj in &live {
            if (vj.omega.vector() - vi.omega.vector()).norm() <= rho {
                score += vj.score;
            }
        }
        if score > best_score {
            best_score = score;
            best_idx = i;
        }
    }
    let winner = live[best_idx].omega.vector();
    let mut num = Vector3::zeros();
    let mut den = 0.0;
    let mut n_inliers = 0;
    for v in &live {
        if (v.omega.vector() - winner).norm() <= rho {
            num += v.omega.vector() * v.score;
            den += v.score;
            n_inliers += 1;
        }
    }
    let mean = num / den;
    Ok(WindowEstimate {
        omega: AngularVelocity::new([mean.x, mean.y, mean.z])?,
        n_inliers,
        score_total: den,
    })
}

/// Index pairs voted on inside a window: all pairs for small windows, else
/// baselines capped at [`PAIR_SPAN_CAP`] snapshots.
fn window_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if n <= ALL_PAIRS_MAX || j - i <= PAIR_SPAN_CAP {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Estimates one angular velocity from a window of at least 3 snapshots.
///
/// Snapshots are resampled to the window's median radius, every retained
/// pair votes via [`estimate_pairwise`]'s scoring on a region shared by the
/// whole window, and [`consensus_vote`] fuses the votes. Pairs whose
/// baseline would push the hypothesized rotation past the visible cap are
/// dropped, longest first; if no pair survives, or no vote is informative,
/// the window is degenerate.
pub fn estimate_window(
    snapshots: &[Snapshot],
    times: &[f64],
    grid: &VelocityGrid,
    params: &ConsensusParams,
) -> Result<WindowEstimate> {
    params.validate(grid)?;
    let n = snapshots.len();
    if n < 3 {
        return Err(Error::InvalidInput(
            "a window needs at least 3 snapshots".into(),
        ));
    }
    if times.len() != n {
        return Err(Error::DimensionMismatch(
            "one timestamp per snapshot required".into(),
        ));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput(
            "timestamps must be finite and strictly increasing".into(),
        ));
    }
    let mut radii = Vec::with_capacity(n);
    for s in snapshots {
        radii.push(disk_geometry(&s.mask)?.2);
    }
    let radius = median(&radii);

    let mut active: Vec<(usize, usize, f64)> = window_pairs(n)
        .into_iter()
        .map(|(i, j)| (i, j, times[j] - times[i]))
        .collect();
    let dt_max = loop {
        let Some(dt_max) = active.iter().map(|p| p.2).max_by(|a, b| a.total_cmp(b)) else {
            return Err(Error::Degenerate(
                "every pair's hypothesized rotation exceeds the visible cap".into(),
            ));
        };
        if radius * (grid.rate_max() * dt_max).min(FRAC_PI_2).cos() >= MIN_REGION_RADIUS {
            break dt_max;
        }
        active.retain(|p| p.2 < dt_max - 1e-12);
    };

    let mut prepared = Vec::with_capacity(n);
    for s in snapshots {
        prepared.push(resample_ball(s, radius)?);
    }
    let region = visibility_region(prepared[0].dims().0, radius, grid.rate_max() * dt_max)?;
    let samples = region_samples(&region, radius)?;
    let votes: Vec<PairwiseVote> = active
        .iter()
        .map(|&(i, j, dt)| {
            vote_on_prepared(
                &prepared[i],
                &prepared[j],
                dt,
                grid,
                params.epsilon,
                &samples,
                radius,
            )
        })
        .collect();
    consensus_vote(&votes, params.rho)
}

/// Runs [`estimate_window`] along a snapshot sequence with stride 1.
///
/// Windows never straddle a bounce: the sequence is split at each bounce
/// time (a snapshot at exactly the bounce time joins the later span) and
/// each span is windowed on its own. Spans shorter than the window length
/// produce one whole-span estimate; spans with fewer than 3 snapshots, and
/// windows whose votes are all uninformative, are skipped. Each estimate is
/// stamped at the center of its window's time range.
pub fn sliding_velocities(
    snapshots: &[Snapshot],
    times: &[f64],
    bounces: &[f64],
    grid: &VelocityGrid,
    params: &ConsensusParams,
) -> Result<Vec<VelocitySample>> {
    params.validate(grid)?;
    if snapshots.len() != times.len() {
        return Err(Error::DimensionMismatch(
            "one timestamp per snapshot required".into(),
        ));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput(
            "timestamps must be finite and strictly increasing".into(),
        ));
    }
    let mut cuts: Vec<f64> = bounces.to_vec();
    cuts.sort_by(|a, b| a.total_cmp(b));

    let mut spans = Vec::new();
    let mut start = 0;
    for b in &cuts {
        let end = start + times[start..].partition_point(|t| *t < *b);
        if end > start {
            spans.push((start, end));
        }
        start = end;
    }
    if start < times.len() {
        spans.push((start, times.len()));
    }

    let mut out = Vec::new();
    for (s, e) in spans {
        let len = e - s;
        if len < 3 {
            continue;
        }
        let width = params.window.min(len);
        for w0 in s..=(e - width) {
            let w1 = w0 + width;
            match estimate_window(&snapshots[w0..w1], &times[w0..w1], grid, params) {
                Ok(est) => out.push(VelocitySample {
                    t_center: 0.5 * (times[w0] + times[w1 - 1]),
                    omega: est.omega,
                    n_inliers: est.n_inliers,
                    score_total: est.score_total,
                }),
                Err(Error::Degenerate(_)) => {}
                Err(e) => return Err(e),
            }
            if width == len {
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Smooth synthetic sphere texture, channel-dependent so all three
    /// planes carry signal.
    fn tex(x: f64, y: f64, c: usize) -> f64 {
        let ph = c as f64 * 0.7;
        0.5 + 0.24 * (0.55 * x + ph).sin() * (0.4 * y).cos() + 0.16 * (0.23 * x + 0.31 * y - ph).sin()
    }

    /// Coverage mask of a centered disk.
    fn disk_mask(side: usize, radius: f64) -> Image {
        let c = ((side - 1) / 2) as f64;
        Image::from_fn(side, side, 1, |x, y, _| {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
            (radius + 0.5 - d).clamp(0.0, 1.0)
        })
        .unwrap()
    }

    /// Un-premultiplied texture image covering the disk plus a 1 px apron.
    fn ball_texture(side: usize, radius: f64) -> Image {
        let c = ((side - 1) / 2) as f64;
        Image::from_fn(side, side, 3, |x, y, ch| {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
            if d <= radius + 1.0 {
                tex(x as f64, y as f64, ch).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .unwrap()
    }

    /// Snapshot of the textured ball rotated by `rotation` from the base
    /// orientation.
    fn rotated_snapshot(side: usize, radius: f64, rotation: Vector3<f64>) -> Snapshot {
        let mask = disk_mask(side, radius);
        let texture = ball_texture(side, radius);
        let rotated = rotate_sphere_image(&texture, &mask, rotation).unwrap();
        let (h, w) = rotated.dims();
        let premult = Image::from_fn(h, w, 3, |x, y, c| {
            rotated.data()[(c * h + y) * w + x] * mask.data()[y * w + x]
        })
        .unwrap();
        Snapshot::new(premult, mask).unwrap()
    }

    fn small_grid() -> VelocityGrid {
        VelocityGrid::new(40, 0.1, 0.4).unwrap()
    }

    #[test]
    fn default_grid_has_the_documented_shape() {
        let grid = VelocityGrid::default();
        assert_eq!(grid.axes().len(), 312);
        for a in grid.axes() {
            assert!((a.norm() - 1.0).abs() < 1e-12);
        }
        for i in 0..156 {
            let sum = grid.axes()[i] + grid.axes()[i + 156];
            assert!(sum.norm() < 1e-12, "axis set must be antipodally closed");
        }
        let cands = grid.candidates();
        assert_eq!(cands.len(), 312 * 60 + 1);
        assert_eq!(cands[0].rate(), 0.0);
        let max_rate = cands.iter().map(|c| c.rate()).fold(0.0, f64::max);
        assert!(max_rate <= 1.2 + 1e-9);
    }

    #[test]
    fn grid_and_params_validation_reject_bad_values() {
        assert!(VelocityGrid::new(31, 0.02, 1.2).is_err());
        assert!(VelocityGrid::new(40, 0.0, 1.2).is_err());
        assert!(VelocityGrid::new(40, 0.1, 0.05).is_err());
        let grid = small_grid();
        let mut params = ConsensusParams::default();
        assert!(params.validate(&grid).is_err(), "rho below the rate step");
        params.rho = 0.2;
        assert!(params.validate(&grid).is_ok());
        params.window = 2;
        assert!(params.validate(&grid).is_err());
    }

    #[test]
    fn zero_rotation_is_the_identity() {
        let mask = disk_mask(41, 17.0);
        let texture = ball_texture(41, 17.0);
        let out = rotate_sphere_image(&texture, &mask, Vector3::zeros()).unwrap();
        let c = 20.0;
        for y in 0..41 {
            for x in 0..41 {
                let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
                if d <= 16.0 {
                    for ch in 0..3 {
                        let a = out.data()[(ch * 41 + y) * 41 + x];
                        let b = texture.data()[(ch * 41 + y) * 41 + x];
                        assert!((a - b).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn z_axis_rotation_matches_planar_rotation() {
        let side = 41;
        let radius = 17.0;
        let mask = disk_mask(side, radius);
        let texture = ball_texture(side, radius);
        let theta = 0.5;
        let out = rotate_sphere_image(&texture, &mask, Vector3::new(0.0, 0.0, theta)).unwrap();
        let c = ((side - 1) / 2) as f64;
        let (cos, sin) = (theta.cos(), theta.sin());
        let mut acc = 0.0;
        let mut count = 0.0;
        for y in 0..side {
            for x in 0..side {
                let dx = x as f64 - c;
                let dy = y as f64 - c;
                if (dx * dx + dy * dy).sqrt() > radius - 2.0 {
                    continue;
                }
                // In-plane pre-image under the inverse rotation, evaluated
                // on the analytic texture rather than by resampling.
                let px = c + dx * cos + dy * sin;
                let py = c - dx * sin + dy * cos;
                for ch in 0..3 {
                    let expect = tex(px, py, ch).clamp(0.0, 1.0);
                    acc += (out.data()[(ch * side + y) * side + x] - expect).abs();
                    count += 1.0;
                }
            }
        }
        assert!(acc / count <= 2e-2, "mean planar mismatch {}", acc / count);
    }

    #[test]
    fn two_half_rotations_match_one_full_rotation() {
        let side = 41;
        let radius = 17.0;
        let mask = disk_mask(side, radius);
        let texture = ball_texture(side, radius);
        let full = Vector3::new(0.3, -0.2, 0.4);
        let once = rotate_sphere_image(&texture, &mask, full).unwrap();
        let half = rotate_sphere_image(&texture, &mask, full * 0.5).unwrap();
        let twice = rotate_sphere_image(&half, &mask, full * 0.5).unwrap();
        let c = ((side - 1) / 2) as f64;
        let keep = radius * full.norm().cos() * 0.9;
        let mut acc = 0.0;
        let mut count = 0.0;
        for y in 0..side {
            for x in 0..side {
                let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
                if d > keep {
                    continue;
                }
                for ch in 0..3 {
                    let idx = (ch * side + y) * side + x;
                    acc += (once.data()[idx] - twice.data()[idx]).abs();
                    count += 1.0;
                }
            }
        }
        assert!(acc / count <= 2e-2, "mean composition gap {}", acc / count);
    }

    #[test]
    fn empty_masks_and_regions_are_rejected() {
        let zero_mask = Image::from_fn(21, 21, 1, |_, _, _| 0.0).unwrap();
        let texture = ball_texture(21, 8.0);
        assert!(matches!(
            rotate_sphere_image(&texture, &zero_mask, Vector3::zeros()),
            Err(Error::Degenerate(_))
        ));
        let region = Image::from_fn(21, 21, 1, |_, _, _| 0.0).unwrap();
        let err = reprojection_error(
            &texture,
            &texture,
            &AngularVelocity::zero(),
            1.0,
            &region,
            8.0,
        );
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn reprojection_error_vanishes_only_at_the_true_rotation() {
        let side = 37;
        let radius = 16.0;
        let base = rotated_snapshot(side, radius, Vector3::zeros());
        let a = resample_ball(&base, radius).unwrap();
        let region = visibility_region(a.dims().0, radius, 0.3).unwrap();
        let zero = AngularVelocity::zero();
        let e_same = reprojection_error(&a, &a, &zero, 1.0, &region, radius).unwrap();
        assert_eq!(e_same, 0.0);

        let spun = small_grid().axes()[3] * 0.2;
        let b_snap = rotated_snapshot(side, radius, spun);
        let b = resample_ball(&b_snap, radius).unwrap();
        let omega = AngularVelocity::new([spun.x, spun.y, spun.z]).unwrap();
        let e_true = reprojection_error(&a, &b, &omega, 1.0, &region, radius).unwrap();
        let e_zero = reprojection_error(&a, &b, &zero, 1.0, &region, radius).unwrap();
        assert!(e_true < 0.25 * e_zero, "true {} zero {}", e_true, e_zero);
    }

    #[test]
    fn region_pre_images_stay_on_the_front_hemisphere() {
        let radius: f64 = 20.0;
        let grid = VelocityGrid::new(16, 0.3, 1.2).unwrap();
        let dt = 1.0;
        let side = 2 * (radius.ceil() as usize) + 3;
        let region = visibility_region(side, radius, grid.rate_max() * dt).unwrap();
        let samples = region_samples(&region, radius).unwrap();
        for omega in grid.candidates() {
            let inv = inverse_rotation(omega.scaled(dt));
            for p in &samples.lift {
                assert!((inv * p).z >= -1e-9);
            }
        }
    }

    #[test]
    fn on_grid_rotation_is_recovered_exactly() {
        let grid = small_grid();
        let side = 37;
        let radius = 16.0;
        let truth = grid.axes()[7] * 0.2;
        let a = rotated_snapshot(side, radius, Vector3::zeros());
        let b = rotated_snapshot(side, radius, truth);
        let vote = estimate_pairwise(&a, &b, 1.0, &grid, 1e-3).unwrap();
        assert!(vote.informative);
        assert!(vote.score > 0.0);
        assert!(
            (vote.omega.vector() - truth).norm() <= 1e-12,
            "estimate {:?} truth {:?}",
            vote.omega,
            truth
        );
    }

    #[test]
    fn off_grid_rotation_lands_within_grid_spacing() {
        let grid = small_grid();
        let side = 37;
        let radius = 16.0;
        let axis = grid.axes()[7];
        let tilt = (axis + Vector3::new(0.02, -0.015, 0.02)).normalize();
        let truth = tilt * 0.25;
        let a = rotated_snapshot(side, radius, Vector3::zeros());
        let b = rotated_snapshot(side, radius, truth);
        let vote = estimate_pairwise(&a, &b, 1.0, &grid, 1e-3).unwrap();
        let bound = grid.delta() * 2.0f64.sqrt();
        assert!(
            (vote.omega.vector() - truth).norm() <= bound,
            "error {} bound {}",
            (vote.omega.vector() - truth).norm(),
            bound
        );
    }

    #[test]
    fn swapping_the_pair_negates_the_estimate() {
        let grid = small_grid();
        let side = 37;
        let radius = 16.0;
        let truth = grid.axes()[7] * 0.2;
        let a = rotated_snapshot(side, radius, Vector3::zeros());
        let b = rotated_snapshot(side, radius, truth);
        let fwd = estimate_pairwise(&a, &b, 1.0, &grid, 1e-3).unwrap();
        let rev = estimate_pairwise(&b, &a, 1.0, &grid, 1e-3).unwrap();
        let gap = (fwd.omega.vector() + rev.omega.vector()).norm();
        assert!(gap <= 2.0 * grid.delta(), "antisymmetry gap {}", gap);
    }

    #[test]
    fn flat_texture_is_flagged_uninformative() {
        let side = 31;
        let radius = 13.0;
        let mask = disk_mask(side, radius);
        let flat = Image::from_fn(side, side, 3, |x, y, _| {
            0.5 * mask.data()[y * side + x]
        })
        .unwrap();
        let snap = Snapshot::new(flat, mask).unwrap();
        let vote = estimate_pairwise(&snap, &snap, 1.0, &small_grid(), 1e-3).unwrap();
        assert!(!vote.informative);
        assert_eq!(vote.score, 0.0);

        let snaps = vec![snap.clone(), snap.clone(), snap];
        let times = [0.0, 1.0, 2.0];
        let mut params = ConsensusParams {
            rho: 0.2,
            window: 3,
            ..ConsensusParams::default()
        };
        params.epsilon = 1e-3;
        let err = estimate_window(&snaps, &times, &small_grid(), &params);
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn refining_the_grid_never_hurts_on_grid_axes() {
        let grid = small_grid();
        let side = 37;
        let radius = 16.0;
        let truth = grid.axes()[7] * 0.2;
        let a = rotated_snapshot(side, radius, Vector3::zeros());
        let b = rotated_snapshot(side, radius, truth);
        let axis_err = |v: &PairwiseVote| {
            v.omega
                .axis()
                .map(|ax| ax.angle(&truth.normalize()))
                .unwrap_or(std::f64::consts::PI)
        };
        let coarse = estimate_pairwise(&a, &b, 1.0, &grid, 1e-3).unwrap();
        let fine = estimate_pairwise(&a, &b, 1.0, &grid.refined(), 1e-3).unwrap();
        assert!(axis_err(&fine) <= axis_err(&coarse) + 1e-12);
    }

    #[test]
    fn consensus_excludes_the_outlier() {
        let base = Vector3::new(0.3, 0.0, 0.1);
        let jitters = [
            Vector3::new(0.005, 0.0, 0.0),
            Vector3::new(-0.004, 0.003, 0.0),
            Vector3::new(0.0, -0.006, 0.004),
            Vector3::new(0.002, 0.002, -0.003),
            Vector3::new(-0.001, 0.004, 0.002),
        ];
        let scores = [1.0, 0.8, 1.2, 0.9, 1.1];
        let mut votes = Vec::new();
        for (j, s) in jitters.iter().zip(scores) {
            let v = base + j;
            votes.push(PairwiseVote {
                omega: AngularVelocity::new([v.x, v.y, v.z]).unwrap(),
                score: s,
                informative: true,
            });
        }
        votes.push(PairwiseVote {
            omega: AngularVelocity::new([-0.5, 0.4, 0.0]).unwrap(),
            score: 1.5,
            informative: true,
        });
        let est = consensus_vote(&votes, 0.04).unwrap();
        assert_eq!(est.n_inliers, 5);

        let mut num = Vector3::zeros();
        let mut den = 0.0;
        for (j, s) in jitters.iter().zip(scores) {
            num += (base + j) * s;
            den += s;
        }
        let expect = num / den;
        assert!((est.omega.vector() - expect).norm() <= 1e-12);
        assert!((est.score_total - den).abs() <= 1e-12);
    }

    #[test]
    fn identical_votes_return_that_vote_exactly() {
        let omega = AngularVelocity::new([0.123456789, -0.3, 1e-5]).unwrap();
        let votes: Vec<PairwiseVote> = [2.0, 0.5, 0.25]
            .iter()
            .map(|s| PairwiseVote {
                omega,
                score: *s,
                informative: true,
            })
            .collect();
        let est = consensus_vote(&votes, 0.04).unwrap();
        assert_eq!(est.omega.omega, omega.omega);
        assert_eq!(est.n_inliers, 3);
    }

    #[test]
    fn consensus_stays_within_rho_of_some_vote() {
        let mut state = 0x1234_5678_9abc_def0u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let rho = 0.05;
        for _ in 0..50 {
            let n = 3 + (next() * 6.0) as usize;
            let votes: Vec<PairwiseVote> = (0..n)
                .map(|_| PairwiseVote {
                    omega: AngularVelocity::new([
                        next() * 0.8 - 0.4,
                        next() * 0.8 - 0.4,
                        next() * 0.8 - 0.4,
                    ])
                    .unwrap(),
                    score: 0.1 + next(),
                    informative: true,
                })
                .collect();
            let est = consensus_vote(&votes, rho).unwrap();
            let near = votes
                .iter()
                .any(|v| (v.omega.vector() - est.omega.vector()).norm() <= rho + 1e-12);
            assert!(near, "estimate strayed from every vote");
            let again = consensus_vote(&votes, rho).unwrap();
            assert_eq!(est.omega.omega, again.omega.omega);
        }
    }

    #[test]
    fn window_recovers_a_constant_spin() {
        let grid = VelocityGrid::new(40, 0.05, 0.45).unwrap();
        let side = 31;
        let radius = 14.0;
        let truth = grid.axes()[3] * 0.3;
        let times = [0.0, 0.25, 0.5, 0.75, 1.0];
        let snaps: Vec<Snapshot> = times
            .iter()
            .map(|t| rotated_snapshot(side, radius, truth * *t))
            .collect();
        let params = ConsensusParams {
            rho: 0.1,
            epsilon: 1e-3,
            window: 5,
        };
        let est = estimate_window(&snaps, &times, &grid, &params).unwrap();
        assert!(
            (est.omega.vector() - truth).norm() <= 2.0 * grid.delta(),
            "window error {}",
            (est.omega.vector() - truth).norm()
        );
        assert_eq!(est.n_inliers, 10, "all pairs should agree on-grid");
        assert!(est.score_total > 0.0);
    }

    #[test]
    fn sliding_windows_never_straddle_a_bounce() {
        let grid = VelocityGrid::new(40, 0.05, 0.45).unwrap();
        let side = 31;
        let radius = 14.0;
        let left = grid.axes()[3] * 0.3;
        let right = grid.axes()[11] * 0.25;
        let mut snaps = Vec::new();
        let mut times = Vec::new();
        for k in 0..4 {
            times.push(k as f64 * 0.25);
            snaps.push(rotated_snapshot(side, radius, left * (k as f64 * 0.25)));
        }
        for k in 0..4 {
            times.push(1.0 + k as f64 * 0.25);
            snaps.push(rotated_snapshot(side, radius, right * (k as f64 * 0.25)));
        }
        let params = ConsensusParams {
            rho: 0.1,
            epsilon: 1e-3,
            window: 3,
        };
        let bounce = [0.9];
        let out = sliding_velocities(&snaps, &times, &bounce, &grid, &params).unwrap();
        assert_eq!(out.len(), 4, "two stride-1 windows per span");
        for sample in &out {
            let truth = if sample.t_center < 0.9 { left } else { right };
            assert!(
                (sample.omega.vector() - truth).norm() <= 2.0 * grid.delta(),
                "sample at t={} is off its span's spin",
                sample.t_center
            );
        }
        assert_eq!(out[0].t_center, 0.25);
        assert_eq!(out[3].t_center, 1.5);
    }

    #[test]
    fn short_spans_collapse_to_one_whole_span_estimate() {
        let grid = VelocityGrid::new(40, 0.05, 0.45).unwrap();
        let side = 31;
        let radius = 14.0;
        let truth = grid.axes()[3] * 0.3;
        let times = [0.0, 0.25, 0.5, 0.75];
        let snaps: Vec<Snapshot> = times
            .iter()
            .map(|t| rotated_snapshot(side, radius, truth * *t))
            .collect();
        let params = ConsensusParams {
            rho: 0.1,
            epsilon: 1e-3,
            window: 8,
        };
        let out = sliding_velocities(&snaps, &times, &[], &grid, &params).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].t_center, 0.375);

        let direct = estimate_window(&snaps, &times, &grid, &params).unwrap();
        assert_eq!(out[0].omega.omega, direct.omega.omega);
    }

    #[test]
    fn results_do_not_depend_on_the_thread_count() {
        let grid = small_grid();
        let side = 37;
        let radius = 16.0;
        let truth = grid.axes()[7] * 0.2;
        let a = rotated_snapshot(side, radius, Vector3::zeros());
        let b = rotated_snapshot(side, radius, truth);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| estimate_pairwise(&a, &b, 1.0, &grid, 1e-3).unwrap())
        };
        let one = run(1);
        let two = run(2);
        assert_eq!(one.omega.omega, two.omega.omega);
        assert_eq!(one.score.to_bits(), two.score.to_bits());
    }

    #[test]
    fn input_validation_rejects_malformed_calls() {
        let grid = small_grid();
        let snap = rotated_snapshot(25, 10.0, Vector3::zeros());
        assert!(estimate_pairwise(&snap, &snap, 0.0, &grid, 1e-3).is_err());
        assert!(estimate_pairwise(&snap, &snap, 1.0, &grid, 0.0).is_err());
        let params = ConsensusParams {
            rho: 0.2,
            epsilon: 1e-3,
            window: 3,
        };
        let two = vec![snap.clone(), snap.clone()];
        assert!(estimate_window(&two, &[0.0, 1.0], &grid, &params).is_err());
        let three = vec![snap.clone(), snap.clone(), snap.clone()];
        assert!(estimate_window(&three, &[0.0, 1.0], &grid, &params).is_err());
        assert!(estimate_window(&three, &[0.0, 1.0, 0.5], &grid, &params).is_err());
    }
}
