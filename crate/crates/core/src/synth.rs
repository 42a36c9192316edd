//! Forward-model scene simulator: a textured sphere on a known 6DoF path,
//! rendered at high temporal sampling and averaged down to emulate
//! low-frame-rate capture. This is the ground-truth oracle for the
//! reconstruction pipeline's end-to-end tests.
//!
//! Conventions: orthographic projection, camera frame x right / y down /
//! z toward the camera, frame `n` exposes over `[n, n + 1]` frame-time
//! units. The sphere texture is equirectangular with poles on the sphere's
//! y axis; shading is baked into the texture.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{Image, Snapshot};
use crate::rotation::AngularVelocity;
use crate::trajectory::Trajectory3D;

/// One interval of constant angular velocity.
#[derive(Debug, Clone, Copy)]
pub struct SpinSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub omega: AngularVelocity,
}

/// Piecewise-constant spin plan with orientation integrated from identity at
/// the start of the first segment.
#[derive(Debug, Clone)]
pub struct SpinSchedule {
    segments: Vec<SpinSegment>,
    /// Orientation at each segment start, chained in the camera frame.
    start_orientations: Vec<UnitQuaternion<f64>>,
}

impl SpinSchedule {
    /// Validates that segments are contiguous and forward in time.
    pub fn new(segments: Vec<SpinSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidInput("spin schedule needs a segment".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.t_end > s.t_start) {
                return Err(Error::InvalidInput(format!(
                    "spin segment {i} has non-positive span"
                )));
            }
            if i > 0 && (s.t_start - segments[i - 1].t_end).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "spin segments {} and {i} are not contiguous",
                    i - 1
                )));
            }
        }
        let mut start_orientations = Vec::with_capacity(segments.len());
        let mut q = UnitQuaternion::identity();
        for s in &segments {
            start_orientations.push(q);
            q = UnitQuaternion::from_scaled_axis(s.omega.scaled(s.t_end - s.t_start)) * q;
        }
        Ok(Self { segments, start_orientations })
    }

    /// Constant spin over `[t0, t1]`.
    pub fn constant(t0: f64, t1: f64, omega: AngularVelocity) -> Result<Self> {
        Self::new(vec![SpinSegment { t_start: t0, t_end: t1, omega }])
    }

    pub fn segments(&self) -> &[SpinSegment] {
        &self.segments
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.segments[0].t_start, self.segments.last().unwrap().t_end)
    }

    fn segment_index(&self, t: f64) -> usize {
        let mut i = self
            .segments
            .partition_point(|s| s.t_end < t)
            .min(self.segments.len() - 1);
        // A time exactly on a boundary belongs to the earlier segment; both
        // give the same orientation.
        if i > 0 && t <= self.segments[i - 1].t_end {
            i -= 1;
        }
        i
    }

    /// Orientation at time `t` (clamped to the schedule domain), as the
    /// rotation taking reference-pose directions to camera-frame directions.
    pub fn orientation_at(&self, t: f64) -> UnitQuaternion<f64> {
        let (t0, t1) = self.domain();
        let t = t.clamp(t0, t1);
        let i = self.segment_index(t);
        let s = &self.segments[i];
        UnitQuaternion::from_scaled_axis(s.omega.scaled(t - s.t_start)) * self.start_orientations[i]
    }

    pub fn omega_at(&self, t: f64) -> AngularVelocity {
        let (t0, t1) = self.domain();
        self.segments[self.segment_index(t.clamp(t0, t1))].omega
    }
}

/// Everything needed to render one synthetic sequence.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub background: Image,
    /// Equirectangular 3-channel sphere texture.
    pub texture: Image,
    /// Object path in pixels + relative depth over at least `[0, frames]`.
    pub trajectory_gt: Trajectory3D,
    /// Spin plan covering at least `[0, frames]`.
    pub spin_gt: SpinSchedule,
    /// Perceived radius in pixels when the relative depth is 1.
    pub radius_at_unit_depth: f64,
    pub frames: usize,
    /// Sub-frames averaged into each output frame.
    pub averaging_factor: usize,
    /// Instantaneous composites averaged into each sub-frame.
    pub subsamples_per_subframe: usize,
    /// Capture-rate metadata carried through to outputs.
    pub fps_target: f64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.background.channels() != 3 || self.texture.channels() != 3 {
            return Err(Error::InvalidInput(
                "background and texture must be 3-channel".into(),
            ));
        }
        if !(self.radius_at_unit_depth > 0.0) {
            return Err(Error::InvalidInput("radius_at_unit_depth must be positive".into()));
        }
        if self.frames == 0 || self.averaging_factor == 0 {
            return Err(Error::InvalidInput("frames and averaging_factor must be >= 1".into()));
        }
        if self.subsamples_per_subframe < 8 {
            return Err(Error::InvalidInput("subsamples_per_subframe must be >= 8".into()));
        }
        if !(self.fps_target > 0.0) {
            return Err(Error::InvalidInput("fps_target must be positive".into()));
        }
        let horizon = self.frames as f64;
        let (a, b) = self.trajectory_gt.domain();
        if a > 1e-9 || b < horizon - 1e-9 {
            return Err(Error::InvalidInput(format!(
                "trajectory domain [{a}, {b}] does not cover [0, {horizon}]"
            )));
        }
        let (sa, sb) = self.spin_gt.domain();
        if sa > 1e-9 || sb < horizon - 1e-9 {
            return Err(Error::InvalidInput(format!(
                "spin schedule [{sa}, {sb}] does not cover [0, {horizon}]"
            )));
        }
        Ok(())
    }

    /// Instantaneous center, radius, and orientation at time `t`.
    pub fn pose_at(&self, t: f64) -> Result<InstantPose> {
        let p = self.trajectory_gt.eval(t);
        if !(p[2] > 1e-6) {
            return Err(Error::Degenerate(format!("non-positive depth {} at t = {t}", p[2])));
        }
        Ok(InstantPose {
            x: p[0],
            y: p[1],
            depth: p[2],
            radius: self.radius_at_unit_depth / p[2],
            orientation: self.spin_gt.orientation_at(t),
        })
    }
}

/// Pose of the sphere at a single instant.
#[derive(Debug, Clone, Copy)]
pub struct InstantPose {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
    pub radius: f64,
    pub orientation: UnitQuaternion<f64>,
}

/// Ground-truth pose recorded at a sub-frame center.
#[derive(Debug, Clone, Copy)]
pub struct SubFramePose {
    pub subframe_index: usize,
    /// Frame time of the sub-frame center.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub orientation: UnitQuaternion<f64>,
}

/// Exact per-sub-frame annotations for a generated sequence.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub poses: Vec<SubFramePose>,
    pub spin_segments: Vec<SpinSegment>,
    pub averaging_factor: usize,
    pub radius_at_unit_depth: f64,
    pub fps_target: f64,
}

/// Frames plus their annotations; `warnings` lists frames where the object
/// left the canvas by more than its radius (rendering clips to the canvas).
#[derive(Debug, Clone)]
pub struct SequenceOutput {
    pub frames: Vec<Image>,
    pub gt: GroundTruth,
    pub warnings: Vec<String>,
}

/// Bilinear equirectangular lookup: longitude wraps, latitude clamps.
fn sample_equirect(texture: &Image, channel: usize, lon: f64, lat: f64) -> f64 {
    let (h, w) = texture.dims();
    let u = (lon + std::f64::consts::PI) / std::f64::consts::TAU * w as f64 - 0.5;
    let v = (lat + std::f64::consts::FRAC_PI_2) / std::f64::consts::PI * h as f64 - 0.5;
    let u0 = u.floor();
    let v0 = v.floor();
    let fu = u - u0;
    let fv = v - v0;
    let wrap = |i: i64| -> usize { (i.rem_euclid(w as i64)) as usize };
    let clampv = |i: i64| -> usize { i.clamp(0, h as i64 - 1) as usize };
    let (x0, x1) = (wrap(u0 as i64), wrap(u0 as i64 + 1));
    let (y0, y1) = (clampv(v0 as i64), clampv(v0 as i64 + 1));
    let p = texture.plane(channel);
    let a = p[y0 * w + x0] * (1.0 - fu) + p[y0 * w + x1] * fu;
    let b = p[y1 * w + x0] * (1.0 - fu) + p[y1 * w + x1] * fu;
    a * (1.0 - fv) + b * fv
}

/// Orthographic render of the rotated textured sphere.
///
/// `center` is `(x, y)` in pixels, `canvas` is `(height, width)`. The mask is
/// an anti-aliased disk indicator; the appearance is the texture looked up on
/// the visible hemisphere and premultiplied by the mask, so `F <= M` holds
/// exactly.
pub fn project_sphere(
    texture: &Image,
    orientation: &UnitQuaternion<f64>,
    radius: f64,
    center: (f64, f64),
    canvas: (usize, usize),
) -> Result<Snapshot> {
    if texture.channels() != 3 {
        return Err(Error::InvalidInput("sphere texture must be 3-channel".into()));
    }
    if !(radius >= 1.0) {
        return Err(Error::InvalidInput(format!("radius {radius} is below 1 px")));
    }
    let (h, w) = canvas;
    let (cx, cy) = center;
    let mut appearance = Image::zeros(h, w, 3)?;
    let mut mask = Image::zeros(h, w, 1)?;
    let y_lo = ((cy - radius - 1.0).floor().max(0.0)) as usize;
    let y_hi = ((cy + radius + 1.0).ceil() as i64).clamp(0, h as i64 - 1) as usize;
    let x_lo = ((cx - radius - 1.0).floor().max(0.0)) as usize;
    let x_hi = ((cx + radius + 1.0).ceil() as i64).clamp(0, w as i64 - 1) as usize;
    if (cy + radius + 1.0) < 0.0 || (cx + radius + 1.0) < 0.0 {
        return Snapshot::new(appearance, mask);
    }
    let inv = orientation.inverse();
    for y in y_lo..=y_hi.min(h.saturating_sub(1)) {
        for x in x_lo..=x_hi.min(w.saturating_sub(1)) {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let rho = (dx * dx + dy * dy).sqrt();
            let coverage = (radius + 0.5 - rho).clamp(0.0, 1.0);
            if coverage <= 0.0 {
                continue;
            }
            // Lift to the front hemisphere; boundary pixels just outside the
            // unit disk read the rim.
            let mut ux = dx / radius;
            let mut uy = dy / radius;
            let rn = (ux * ux + uy * uy).sqrt();
            if rn > 1.0 {
                ux /= rn;
                uy /= rn;
            }
            let uz = (1.0 - (ux * ux + uy * uy)).max(0.0).sqrt();
            let p = inv.transform_vector(&Vector3::new(ux, uy, uz));
            // At the poles longitude is numerically meaningless; pin it so
            // equivalent orientations sample identically.
            let (lon, lat) = if p.y.abs() >= 1.0 - 1e-9 {
                (0.0, p.y.signum() * std::f64::consts::FRAC_PI_2)
            } else {
                (p.z.atan2(p.x), p.y.clamp(-1.0, 1.0).asin())
            };
            mask.set(x, y, 0, coverage);
            for c in 0..3 {
                appearance.set(x, y, c, coverage * sample_equirect(texture, c, lon, lat));
            }
        }
    }
    Snapshot::new(appearance, mask)
}

/// Patch-rect bounds of the sphere at one pose, clipped to the canvas.
/// Returns `None` when fully off-canvas.
fn patch_bounds(
    pose: &InstantPose,
    h: usize,
    w: usize,
) -> Option<(usize, usize, usize, usize)> {
    let y0 = (pose.y - pose.radius - 1.0).floor().max(0.0) as usize;
    let x0 = (pose.x - pose.radius - 1.0).floor().max(0.0) as usize;
    let y1 = (pose.y + pose.radius + 1.0).ceil() as i64;
    let x1 = (pose.x + pose.radius + 1.0).ceil() as i64;
    if y1 < 0 || x1 < 0 || y0 >= h || x0 >= w {
        return None;
    }
    Some((y0, x0, (y1 as usize + 1).min(h), (x1 as usize + 1).min(w)))
}

/// Accumulates `weight * (F - M .* background)` for the pose's patch into
/// `delta`, a full-canvas 3-channel accumulator.
fn accumulate_instant(
    spec: &SceneSpec,
    pose: &InstantPose,
    weight: f64,
    delta: &mut Image,
) -> Result<()> {
    let (h, w) = spec.background.dims();
    let Some((y0, x0, y1, x1)) = patch_bounds(pose, h, w) else {
        return Ok(());
    };
    let (ph, pw) = (y1 - y0, x1 - x0);
    let patch = project_sphere(
        &spec.texture,
        &pose.orientation,
        pose.radius,
        (pose.x - x0 as f64, pose.y - y0 as f64),
        (ph, pw),
    )?;
    for c in 0..3 {
        for py in 0..ph {
            for px in 0..pw {
                let f = patch.appearance.get(px, py, c);
                let m = patch.mask.get(px, py, 0);
                if m == 0.0 && f == 0.0 {
                    continue;
                }
                let bg = spec.background.get(x0 + px, y0 + py, c);
                let v = delta.get(x0 + px, y0 + py, c) + weight * (f - m * bg);
                delta.set(x0 + px, y0 + py, c, v);
            }
        }
    }
    Ok(())
}

/// Renders sub-frame `sub` of frame `frame`: the mean of
/// `subsamples_per_subframe` instantaneous composites over the sub-frame's
/// time slice.
pub fn render_subframe(spec: &SceneSpec, frame: usize, sub: usize) -> Result<Image> {
    spec.validate()?;
    if frame >= spec.frames || sub >= spec.averaging_factor {
        return Err(Error::InvalidInput(format!(
            "sub-frame ({frame}, {sub}) outside {}x{}",
            spec.frames, spec.averaging_factor
        )));
    }
    let k = spec.averaging_factor as f64;
    let s = spec.subsamples_per_subframe;
    let mut delta = Image::zeros(spec.background.dims().0, spec.background.dims().1, 3)?;
    for i in 0..s {
        let t = frame as f64 + (sub as f64 + (i as f64 + 0.5) / s as f64) / k;
        let pose = spec.pose_at(t)?;
        accumulate_instant(spec, &pose, 1.0 / s as f64, &mut delta)?;
    }
    let (h, w) = spec.background.dims();
    Image::from_fn(h, w, 3, |x, y, c| spec.background.get(x, y, c) + delta.get(x, y, c))
}

/// Renders the full sequence. Each output frame is the exact mean of its
/// `averaging_factor` sub-frames as produced by `render_subframe`;
/// ground-truth poses are recorded at sub-frame centers.
pub fn generate_sequence(spec: &SceneSpec) -> Result<SequenceOutput> {
    spec.validate()?;
    let (h, w) = spec.background.dims();
    let k = spec.averaging_factor;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut poses = Vec::with_capacity(spec.frames * k);
    let mut warnings = Vec::new();
    for n in 0..spec.frames {
        let mut acc = vec![0.0; h * w * 3];
        let mut off_canvas = false;
        for j in 0..k {
            let sub = render_subframe(spec, n, j)?;
            for (a, v) in acc.iter_mut().zip(sub.data()) {
                *a += v;
            }
            let t = n as f64 + (j as f64 + 0.5) / k as f64;
            let pose = spec.pose_at(t)?;
            if pose.x < -pose.radius
                || pose.y < -pose.radius
                || pose.x > w as f64 - 1.0 + pose.radius
                || pose.y > h as f64 - 1.0 + pose.radius
            {
                off_canvas = true;
            }
            poses.push(SubFramePose {
                subframe_index: n * k + j,
                t,
                x: pose.x,
                y: pose.y,
                radius: pose.radius,
                orientation: pose.orientation,
            });
        }
        if off_canvas {
            warnings.push(format!(
                "frame {n}: object left the canvas by more than its radius; rendering clipped"
            ));
        }
        for a in acc.iter_mut() {
            *a /= k as f64;
        }
        frames.push(Image::from_data_clamped(h, w, 3, acc)?);
    }
    Ok(SequenceOutput {
        frames,
        gt: GroundTruth {
            poses,
            spin_segments: spec.spin_gt.segments().to_vec(),
            averaging_factor: k,
            radius_at_unit_depth: spec.radius_at_unit_depth,
            fps_target: spec.fps_target,
        },
        warnings,
    })
}

/// Seam-free procedural sphere texture: per-channel base tones, a few
/// longitude-periodic cosine features faded toward the poles, and Gaussian
/// spots placed at random points of the sphere. Deterministic per seed.
pub fn procedural_texture(height: usize, width: usize, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [f64; 3] = [
        rng.gen_range(0.25..0.75),
        rng.gen_range(0.25..0.75),
        rng.gen_range(0.25..0.75),
    ];
    struct Wave {
        amp: [f64; 3],
        lon_freq: f64,
        lat_freq: f64,
        lon_phase: f64,
        lat_phase: f64,
    }
    let waves: Vec<Wave> = (0..6)
        .map(|_| Wave {
            amp: [
                rng.gen_range(-0.14..0.14),
                rng.gen_range(-0.14..0.14),
                rng.gen_range(-0.14..0.14),
            ],
            // Integer longitude frequency keeps the seam invisible.
            lon_freq: rng.gen_range(1..5) as f64,
            lat_freq: rng.gen_range(1..4) as f64,
            lon_phase: rng.gen_range(0.0..std::f64::consts::TAU),
            lat_phase: rng.gen_range(0.0..std::f64::consts::TAU),
        })
        .collect();
    struct Spot {
        dir: Vector3<f64>,
        amp: [f64; 3],
        width: f64,
    }
    let spots: Vec<Spot> = (0..8)
        .map(|_| {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let az: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = (1.0 - z * z).max(0.0).sqrt();
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            Spot {
                dir: Vector3::new(r * az.cos(), z, r * az.sin()),
                amp: [
                    sign * rng.gen_range(0.1..0.35),
                    sign * rng.gen_range(0.1..0.35),
                    sign * rng.gen_range(0.1..0.35),
                ],
                width: rng.gen_range(0.15..0.4),
            }
        })
        .collect();
    Image::from_fn(height, width, 3, |x, y, c| {
        let lon = (x as f64 + 0.5) / width as f64 * std::f64::consts::TAU - std::f64::consts::PI;
        let lat = (y as f64 + 0.5) / height as f64 * std::f64::consts::PI
            - std::f64::consts::FRAC_PI_2;
        let dir = Vector3::new(lat.cos() * lon.cos(), lat.sin(), lat.cos() * lon.sin());
        let mut v = base[c];
        for wv in &waves {
            v += wv.amp[c]
                * (wv.lon_freq * lon + wv.lon_phase).cos()
                * (wv.lat_freq * lat + wv.lat_phase).cos()
                * lat.cos();
        }
        for sp in &spots {
            let angle = sp.dir.dot(&dir).clamp(-1.0, 1.0).acos();
            v += sp.amp[c] * (-(angle / sp.width).powi(2)).exp();
        }
        v.clamp(0.02, 0.98)
    })
}

/// Smooth procedural background: base color, low-frequency waves, and a few
/// soft blobs. Deterministic per seed.
pub fn procedural_background(height: usize, width: usize, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e3779b97f4a7c15));
    let base: [f64; 3] = [
        rng.gen_range(0.2..0.6),
        rng.gen_range(0.2..0.6),
        rng.gen_range(0.2..0.6),
    ];
    struct Wave {
        amp: [f64; 3],
        kx: f64,
        ky: f64,
        phase: f64,
    }
    let waves: Vec<Wave> = (0..4)
        .map(|_| Wave {
            amp: [
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
            ],
            kx: rng.gen_range(0.5..3.0),
            ky: rng.gen_range(0.5..3.0),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        })
        .collect();
    struct Blob {
        cx: f64,
        cy: f64,
        sigma: f64,
        amp: [f64; 3],
    }
    let blobs: Vec<Blob> = (0..5)
        .map(|_| Blob {
            cx: rng.gen_range(0.0..1.0),
            cy: rng.gen_range(0.0..1.0),
            sigma: rng.gen_range(0.08..0.25),
            amp: [
                rng.gen_range(-0.15..0.15),
                rng.gen_range(-0.15..0.15),
                rng.gen_range(-0.15..0.15),
            ],
        })
        .collect();
    Image::from_fn(height, width, 3, |x, y, c| {
        let u = (x as f64 + 0.5) / width as f64;
        let v = (y as f64 + 0.5) / height as f64;
        let mut val = base[c];
        for wv in &waves {
            val += wv.amp[c] * (std::f64::consts::TAU * (wv.kx * u + wv.ky * v) + wv.phase).sin();
        }
        for b in &blobs {
            let d2 = ((u - b.cx) / b.sigma).powi(2) + ((v - b.cy) / b.sigma).powi(2);
            val += b.amp[c] * (-d2).exp();
        }
        val.clamp(0.05, 0.95)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formation::render_frame;
    use crate::kernel::rasterize_segment;
    use crate::Curve2D;

    fn uniform_texture(value: f64) -> Image {
        Image::from_fn(32, 64, 3, |_, _, _| value).unwrap()
    }

    fn test_spec(traj: Trajectory3D, spin: SpinSchedule, frames: usize) -> SceneSpec {
        SceneSpec {
            background: procedural_background(72, 96, 7).unwrap(),
            texture: procedural_texture(48, 96, 7).unwrap(),
            trajectory_gt: traj,
            spin_gt: spin,
            radius_at_unit_depth: 9.0,
            frames,
            averaging_factor: 4,
            subsamples_per_subframe: 8,
            fps_target: 30.0,
        }
    }

    #[test]
    fn projection_deterministic_and_periodic() {
        let tex = procedural_texture(40, 80, 3).unwrap();
        let q = UnitQuaternion::identity();
        let a = project_sphere(&tex, &q, 11.0, (20.0, 20.0), (41, 41)).unwrap();
        let b = project_sphere(&tex, &q, 11.0, (20.0, 20.0), (41, 41)).unwrap();
        assert_eq!(a.appearance.data(), b.appearance.data());
        let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
        let full_turn = UnitQuaternion::from_scaled_axis(axis * std::f64::consts::TAU);
        let c = project_sphere(&tex, &full_turn, 11.0, (20.0, 20.0), (41, 41)).unwrap();
        assert!(a.appearance.mean_abs_diff(&c.appearance) <= 1e-6);
    }

    #[test]
    fn mask_area_matches_disk() {
        let tex = uniform_texture(1.0);
        for r in [8.0, 12.5, 20.0, 40.0] {
            let side = (2.0 * r) as usize + 8;
            let c = (side / 2) as f64;
            let snap =
                project_sphere(&tex, &UnitQuaternion::identity(), r, (c, c), (side, side))
                    .unwrap();
            let area = snap.mask.plane_sum(0);
            let expect = std::f64::consts::PI * r * r;
            assert!(
                (area - expect).abs() / expect <= 0.02,
                "r = {r}: area {area} vs {expect}"
            );
        }
    }

    #[test]
    fn tiny_radius_rejected() {
        let tex = uniform_texture(0.5);
        assert!(project_sphere(&tex, &UnitQuaternion::identity(), 0.8, (5.0, 5.0), (11, 11))
            .is_err());
    }

    #[test]
    fn static_scene_collapses_to_instant_composite() {
        let traj = Trajectory3D::single(0.0, 2.0, vec![40.0], vec![30.0], vec![1.0]).unwrap();
        let spin = SpinSchedule::constant(0.0, 2.0, AngularVelocity::zero()).unwrap();
        let mut spec = test_spec(traj, spin, 2);
        spec.averaging_factor = 8;
        let out = generate_sequence(&spec).unwrap();
        assert!(out.warnings.is_empty());
        // Direct instantaneous composite at any time (pose is constant).
        let pose = spec.pose_at(0.31).unwrap();
        let (h, w) = spec.background.dims();
        let snap = project_sphere(
            &spec.texture,
            &pose.orientation,
            pose.radius,
            (pose.x, pose.y),
            (h, w),
        )
        .unwrap();
        let direct = Image::from_fn(h, w, 3, |x, y, c| {
            snap.appearance.get(x, y, c)
                + (1.0 - snap.mask.get(x, y, 0)) * spec.background.get(x, y, c)
        })
        .unwrap();
        assert!(out.frames[0].max_abs_diff(&direct) <= 1e-12);
        assert!(out.frames[1].max_abs_diff(&direct) <= 1e-12);
    }

    #[test]
    fn linear_motion_matches_blur_kernel_render() {
        // Uniform white sphere moving 40 px in one frame at constant depth:
        // the frame must match the blur-kernel formation model. Odd canvas
        // sides double as the kernel raster.
        let h = 81;
        let w = 141;
        let traj =
            Trajectory3D::single(0.0, 1.0, vec![40.0, 40.0], vec![40.0], vec![1.0]).unwrap();
        let spin = SpinSchedule::constant(0.0, 1.0, AngularVelocity::zero()).unwrap();
        let spec = SceneSpec {
            background: Image::from_fn(h, w, 3, |x, y, c| {
                0.2 + 0.3 * ((x + y + 30 * c) % 41) as f64 / 40.0
            })
            .unwrap(),
            texture: uniform_texture(1.0),
            trajectory_gt: traj,
            spin_gt: spin,
            radius_at_unit_depth: 9.0,
            frames: 1,
            averaging_factor: 1,
            subsamples_per_subframe: 512,
            fps_target: 30.0,
        };
        let out = generate_sequence(&spec).unwrap();

        let center = ((w / 2) as f64, (h / 2) as f64);
        let snap = project_sphere(
            &spec.texture,
            &UnitQuaternion::identity(),
            9.0,
            center,
            (h, w),
        )
        .unwrap();
        // Kernel splats at curve positions re-based so the object sits at the
        // kernel anchor.
        let anchor = ((w / 2) as f64, (h / 2) as f64);
        let curve = Curve2D::single(0.0, 1.0, vec![40.0, 40.0], vec![40.0])
            .unwrap()
            .translated(center.0 - anchor.0, center.1 - anchor.1);
        let kernel = rasterize_segment(&curve, 0.0, 1.0, h, w, 1.0).unwrap();
        let modeled = render_frame(&spec.background, &snap, &kernel).unwrap();
        let err = out.frames[0].mean_abs_diff(&modeled);
        assert!(err <= 1e-2, "L1/px {err}");
    }

    #[test]
    fn doubling_subsamples_converges() {
        let traj =
            Trajectory3D::single(0.0, 2.0, vec![20.0, 25.0], vec![50.0, -8.0], vec![1.0, 0.1])
                .unwrap();
        let spin = SpinSchedule::constant(
            0.0,
            2.0,
            AngularVelocity::new([0.1, 0.3, 0.2]).unwrap(),
        )
        .unwrap();
        let mut spec = test_spec(traj, spin, 2);
        spec.subsamples_per_subframe = 16;
        let coarse = generate_sequence(&spec).unwrap();
        spec.subsamples_per_subframe = 32;
        let fine = generate_sequence(&spec).unwrap();
        for (a, b) in coarse.frames.iter().zip(&fine.frames) {
            assert!(a.mean_abs_diff(b) <= 1e-3);
        }
    }

    #[test]
    fn frame_is_mean_of_its_subframes() {
        let traj =
            Trajectory3D::single(0.0, 1.0, vec![30.0, 12.0], vec![40.0, 3.0], vec![1.0, 0.05])
                .unwrap();
        let spin =
            SpinSchedule::constant(0.0, 1.0, AngularVelocity::new([0.0, 0.4, 0.1]).unwrap())
                .unwrap();
        let spec = test_spec(traj, spin, 1);
        let out = generate_sequence(&spec).unwrap();
        let (h, w) = spec.background.dims();
        let mut acc = vec![0.0; h * w * 3];
        for j in 0..spec.averaging_factor {
            let sub = render_subframe(&spec, 0, j).unwrap();
            for (a, v) in acc.iter_mut().zip(sub.data()) {
                *a += v;
            }
        }
        for a in acc.iter_mut() {
            *a /= spec.averaging_factor as f64;
        }
        let mean = Image::from_data_clamped(h, w, 3, acc).unwrap();
        assert!(out.frames[0].max_abs_diff(&mean) <= 1e-15);
    }

    #[test]
    fn gt_radius_depth_product_constant() {
        let traj =
            Trajectory3D::single(0.0, 3.0, vec![40.0, 2.0], vec![36.0], vec![0.8, 0.2, -0.03])
                .unwrap();
        let spin = SpinSchedule::constant(0.0, 3.0, AngularVelocity::zero()).unwrap();
        let spec = test_spec(traj, spin, 3);
        let out = generate_sequence(&spec).unwrap();
        assert_eq!(out.gt.poses.len(), 3 * spec.averaging_factor);
        for p in &out.gt.poses {
            let depth = spec.trajectory_gt.eval(p.t)[2];
            assert!((p.radius * depth - spec.radius_at_unit_depth).abs() <= 1e-9);
        }
    }

    #[test]
    fn rolling_ball_omega_equals_traversed_angle_over_time() {
        // Straight ground path of length 60 px over 3 frames at depth 1 with
        // radius 10: rolling without slipping means rate = v / r.
        let length = 60.0;
        let frames = 3.0;
        let radius = 10.0;
        let speed = length / frames;
        let rate = speed / radius;
        let omega = AngularVelocity::new([0.0, 0.0, -rate]).unwrap();
        let spin = SpinSchedule::constant(0.0, 3.0, omega).unwrap();
        let traversed_angle = length / radius;
        assert!((spin.segments()[0].omega.rate() - traversed_angle / frames).abs() < 1e-12);
        // Orientation after the full path is the traversed-angle roll.
        let q = spin.orientation_at(3.0);
        let expect =
            UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 0.0, -traversed_angle));
        assert!(q.angle_to(&expect) < 1e-9);
    }

    #[test]
    fn off_canvas_motion_warns_and_clips() {
        let traj =
            Trajectory3D::single(0.0, 2.0, vec![40.0, -60.0], vec![30.0], vec![1.0]).unwrap();
        let spin = SpinSchedule::constant(0.0, 2.0, AngularVelocity::zero()).unwrap();
        let spec = test_spec(traj, spin, 2);
        let out = generate_sequence(&spec).unwrap();
        assert!(!out.warnings.is_empty());
        assert_eq!(out.frames.len(), 2);
    }

    #[test]
    fn spin_schedule_chains_orientations() {
        let w1 = AngularVelocity::new([0.0, 0.0, 0.5]).unwrap();
        let w2 = AngularVelocity::new([0.5, 0.0, 0.0]).unwrap();
        let spin = SpinSchedule::new(vec![
            SpinSegment { t_start: 0.0, t_end: 2.0, omega: w1 },
            SpinSegment { t_start: 2.0, t_end: 4.0, omega: w2 },
        ])
        .unwrap();
        let q_mid = spin.orientation_at(2.0);
        let expect_mid = UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 0.0, 1.0));
        assert!(q_mid.angle_to(&expect_mid) < 1e-12);
        let q_end = spin.orientation_at(4.0);
        let expect_end =
            UnitQuaternion::from_scaled_axis(Vector3::new(1.0, 0.0, 0.0)) * expect_mid;
        assert!(q_end.angle_to(&expect_end) < 1e-12);
        assert_eq!(spin.omega_at(1.0), w1);
        assert_eq!(spin.omega_at(3.0), w2);
    }

    #[test]
    fn texture_and_background_deterministic_per_seed() {
        let a = procedural_texture(32, 64, 11).unwrap();
        let b = procedural_texture(32, 64, 11).unwrap();
        let c = procedural_texture(32, 64, 12).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.max_abs_diff(&c) > 0.0);
        let d = procedural_background(40, 50, 5).unwrap();
        let e = procedural_background(40, 50, 5).unwrap();
        assert_eq!(d.data(), e.data());
    }

    #[test]
    fn texture_seam_is_invisible() {
        // Wrap continuity: first and last texture columns must differ by no
        // more than adjacent interior columns do.
        let tex = procedural_texture(64, 128, 21).unwrap();
        let (h, w) = tex.dims();
        let col_gap = |x0: usize, x1: usize| -> f64 {
            let mut worst = 0.0f64;
            for c in 0..3 {
                for y in 0..h {
                    worst = worst.max((tex.get(x0, y, c) - tex.get(x1, y, c)).abs());
                }
            }
            worst
        };
        let seam = col_gap(w - 1, 0);
        let interior = col_gap(w / 2, w / 2 + 1);
        assert!(seam <= interior * 3.0 + 0.02, "seam {seam} vs interior {interior}");
    }
}
