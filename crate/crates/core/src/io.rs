//! On-disk formats: lossless PNG frames, CSV tables, validated JSON curves.
//!
//! Every write lands atomically (temp file in the target directory, then
//! rename), so a crashed run never leaves half-written artifacts behind.
//! Floating-point image data maps to integer PNG codes as `code / max_code`;
//! 16-bit output round-trips with error at most half a code step.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use nalgebra::{Quaternion, UnitQuaternion};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::deblatting::IterationStat;
use crate::error::{Error, Result};
use crate::image::{Image, Snapshot};
use crate::metrics::EvalReport;
use crate::rotation::{AngularVelocity, VelocitySample};
use crate::synth::{GroundTruth, SpinSegment, SubFramePose};
use crate::trajectory::{DepthSample, MIN_RELIABLE_AREA};

/// File names used by the ground-truth directory layout.
pub const GT_POSES_FILE: &str = "gt_poses.csv";
pub const GT_SPIN_FILE: &str = "gt_spin_segments.csv";
pub const GT_META_FILE: &str = "gt_meta.json";

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to `path` via a uniquely named temp file in the same
/// directory followed by a rename, creating parent directories as needed.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let base = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no file name", path.display())))?;
    let tag = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = parent.join(format!(
        ".{}.tmp-{}-{tag}",
        base.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

fn encode_png(img: &Image, sixteen_bit: bool) -> Result<Vec<u8>> {
    let (h, w) = img.dims();
    let (wu, hu) = (w as u32, h as u32);
    let dynimg = match (img.channels(), sixteen_bit) {
        (1, true) => DynamicImage::ImageLuma16(ImageBuffer::from_fn(wu, hu, |x, y| {
            Luma([(img.get(x as usize, y as usize, 0) * 65535.0).round() as u16])
        })),
        (1, false) => DynamicImage::ImageLuma8(ImageBuffer::from_fn(wu, hu, |x, y| {
            Luma([(img.get(x as usize, y as usize, 0) * 255.0).round() as u8])
        })),
        (3, true) => DynamicImage::ImageRgb16(ImageBuffer::from_fn(wu, hu, |x, y| {
            Rgb(std::array::from_fn(|c| {
                (img.get(x as usize, y as usize, c) * 65535.0).round() as u16
            }))
        })),
        (3, false) => DynamicImage::ImageRgb8(ImageBuffer::from_fn(wu, hu, |x, y| {
            Rgb(std::array::from_fn(|c| {
                (img.get(x as usize, y as usize, c) * 255.0).round() as u8
            }))
        })),
        (c, _) => {
            return Err(Error::DimensionMismatch(format!(
                "PNG export supports 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut out = Cursor::new(Vec::new());
    dynimg
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Png(e.to_string()))?;
    Ok(out.into_inner())
}

/// Writes a 1- or 3-channel image as 16-bit lossless PNG.
pub fn write_png16(path: &Path, img: &Image) -> Result<()> {
    atomic_write(path, &encode_png(img, true)?)
}

/// Writes a 1- or 3-channel image as 8-bit lossless PNG.
pub fn write_png8(path: &Path, img: &Image) -> Result<()> {
    atomic_write(path, &encode_png(img, false)?)
}

/// Reads an 8- or 16-bit grayscale or RGB PNG into float planes in [0, 1].
pub fn read_png(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| Error::Png(e.to_string()))?;
    fn planes<T: Copy + Into<f64>>(
        raw: &[T],
        w: usize,
        h: usize,
        channels: usize,
        max: f64,
    ) -> Result<Image> {
        let mut data = vec![0.0; channels * h * w];
        for y in 0..h {
            for x in 0..w {
                for c in 0..channels {
                    data[(c * h + y) * w + x] = raw[(y * w + x) * channels + c].into() / max;
                }
            }
        }
        Image::new(h, w, channels, data)
    }
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        DynamicImage::ImageLuma8(b) => planes(b.as_raw(), w, h, 1, 255.0),
        DynamicImage::ImageLuma16(b) => planes(b.as_raw(), w, h, 1, 65535.0),
        DynamicImage::ImageRgb8(b) => planes(b.as_raw(), w, h, 3, 255.0),
        DynamicImage::ImageRgb16(b) => planes(b.as_raw(), w, h, 3, 65535.0),
        other => Err(Error::Png(format!(
            "unsupported PNG color type {:?}",
            other.color()
        ))),
    }
}

/// Lexicographically sorted PNG paths directly inside `dir`.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Canonical zero-padded frame file name, so listings sort temporally.
pub fn frame_name(prefix: &str, index: usize) -> String {
    format!("{prefix}_{index:05}.png")
}

/// Serializes a value as pretty JSON and writes it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

/// Reads and validates a JSON value (validating types reject malformed
/// content in their serde conversions).
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn csv_bytes(writer: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    writer.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("non-finite {name} value {v}")))
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRow {
    subframe_index: usize,
    t: f64,
    x: f64,
    y: f64,
    radius: f64,
    quat_w: f64,
    quat_x: f64,
    quat_y: f64,
    quat_z: f64,
}

/// Writes sub-frame poses as CSV with columns
/// `subframe_index, t, x, y, radius, quat_w, quat_x, quat_y, quat_z`.
pub fn write_pose_csv(path: &Path, poses: &[SubFramePose]) -> Result<()> {
    let mut w = csv_writer();
    for p in poses {
        let q = p.orientation.quaternion();
        w.serialize(PoseRow {
            subframe_index: p.subframe_index,
            t: p.t,
            x: p.x,
            y: p.y,
            radius: p.radius,
            quat_w: q.w,
            quat_x: q.i,
            quat_y: q.j,
            quat_z: q.k,
        })?;
    }
    atomic_write(path, &csv_bytes(w)?)
}

/// Reads sub-frame poses written by [`write_pose_csv`]. Orientations are
/// renormalized; a near-zero quaternion is rejected.
pub fn read_pose_csv(path: &Path) -> Result<Vec<SubFramePose>> {
    let mut out = Vec::new();
    for row in csv_reader(path)?.deserialize::<PoseRow>() {
        let r = row?;
        let q = Quaternion::new(
            finite("quat_w", r.quat_w)?,
            finite("quat_x", r.quat_x)?,
            finite("quat_y", r.quat_y)?,
            finite("quat_z", r.quat_z)?,
        );
        if q.norm() < 1e-9 {
            return Err(Error::InvalidInput(format!(
                "orientation quaternion at sub-frame {} is near zero",
                r.subframe_index
            )));
        }
        out.push(SubFramePose {
            subframe_index: r.subframe_index,
            t: finite("t", r.t)?,
            x: finite("x", r.x)?,
            y: finite("y", r.y)?,
            radius: finite("radius", r.radius)?,
            orientation: UnitQuaternion::from_quaternion(q),
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct SpinRow {
    t_start: f64,
    t_end: f64,
    wx: f64,
    wy: f64,
    wz: f64,
}

/// Writes spin segments as CSV with columns `t_start, t_end, wx, wy, wz`.
pub fn write_spin_csv(path: &Path, segments: &[SpinSegment]) -> Result<()> {
    let mut w = csv_writer();
    for s in segments {
        let [wx, wy, wz] = s.omega.omega;
        w.serialize(SpinRow {
            t_start: s.t_start,
            t_end: s.t_end,
            wx,
            wy,
            wz,
        })?;
    }
    atomic_write(path, &csv_bytes(w)?)
}

/// Reads spin segments written by [`write_spin_csv`].
pub fn read_spin_csv(path: &Path) -> Result<Vec<SpinSegment>> {
    let mut out = Vec::new();
    for row in csv_reader(path)?.deserialize::<SpinRow>() {
        let r = row?;
        let t_start = finite("t_start", r.t_start)?;
        let t_end = finite("t_end", r.t_end)?;
        if t_end <= t_start {
            return Err(Error::InvalidInput(format!(
                "spin segment [{t_start}, {t_end}] is not forward in time"
            )));
        }
        out.push(SpinSegment {
            t_start,
            t_end,
            omega: AngularVelocity::new([r.wx, r.wy, r.wz])?,
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct DepthRow {
    t: f64,
    x: f64,
    y: f64,
    area: f64,
    d: f64,
}

/// Writes depth samples as CSV with columns `t, x, y, area, d`.
pub fn write_depth_csv(path: &Path, samples: &[DepthSample]) -> Result<()> {
    let mut w = csv_writer();
    for s in samples {
        w.serialize(DepthRow {
            t: s.t,
            x: s.x,
            y: s.y,
            area: s.area,
            d: s.depth,
        })?;
    }
    atomic_write(path, &csv_bytes(w)?)
}

/// Reads depth samples written by [`write_depth_csv`]. Reliability is not
/// stored and is restored from the mask-area threshold.
pub fn read_depth_csv(path: &Path) -> Result<Vec<DepthSample>> {
    let mut out = Vec::new();
    for row in csv_reader(path)?.deserialize::<DepthRow>() {
        let r = row?;
        let area = finite("area", r.area)?;
        out.push(DepthSample {
            t: finite("t", r.t)?,
            x: finite("x", r.x)?,
            y: finite("y", r.y)?,
            depth: finite("d", r.d)?,
            area,
            reliable: area >= MIN_RELIABLE_AREA,
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct VelocityRow {
    t_center: f64,
    wx: f64,
    wy: f64,
    wz: f64,
    rate: f64,
    n_inliers: usize,
    score_total: f64,
}

/// Writes a velocity series as CSV with columns
/// `t_center, wx, wy, wz, rate, n_inliers, score_total`. The rate column is
/// the magnitude of `(wx, wy, wz)`, stored for human reading.
pub fn write_velocity_csv(path: &Path, samples: &[VelocitySample]) -> Result<()> {
    let mut w = csv_writer();
    for s in samples {
        let [wx, wy, wz] = s.omega.omega;
        w.serialize(VelocityRow {
            t_center: s.t_center,
            wx,
            wy,
            wz,
            rate: s.omega.rate(),
            n_inliers: s.n_inliers,
            score_total: s.score_total,
        })?;
    }
    atomic_write(path, &csv_bytes(w)?)
}

/// Reads a velocity series written by [`write_velocity_csv`], rejecting rows
/// whose redundant rate column disagrees with the axis components.
pub fn read_velocity_csv(path: &Path) -> Result<Vec<VelocitySample>> {
    let mut out = Vec::new();
    for row in csv_reader(path)?.deserialize::<VelocityRow>() {
        let r = row?;
        let omega = AngularVelocity::new([r.wx, r.wy, r.wz])?;
        let rate = finite("rate", r.rate)?;
        if (rate - omega.rate()).abs() > 1e-6 * (1.0 + rate.abs()) {
            return Err(Error::InvalidInput(format!(
                "rate column {rate} disagrees with |omega| = {}",
                omega.rate()
            )));
        }
        out.push(VelocitySample {
            t_center: finite("t_center", r.t_center)?,
            omega,
            n_inliers: r.n_inliers,
            score_total: finite("score_total", r.score_total)?,
        });
    }
    Ok(out)
}

/// Writes a solver iteration trace as CSV for diagnostics runs.
pub fn write_diagnostics_csv(path: &Path, trace: &[IterationStat]) -> Result<()> {
    let mut w = csv_writer();
    for stat in trace {
        w.serialize(stat)?;
    }
    atomic_write(path, &csv_bytes(w)?)
}

#[derive(Serialize, Deserialize)]
struct GtMeta {
    averaging_factor: usize,
    radius_at_unit_depth: f64,
    fps_target: f64,
}

/// Writes ground truth into `dir` as a pose CSV, a spin-segment CSV, and a
/// small JSON with the scalar metadata.
pub fn write_ground_truth(dir: &Path, gt: &GroundTruth) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_pose_csv(&dir.join(GT_POSES_FILE), &gt.poses)?;
    write_spin_csv(&dir.join(GT_SPIN_FILE), &gt.spin_segments)?;
    write_json(
        &dir.join(GT_META_FILE),
        &GtMeta {
            averaging_factor: gt.averaging_factor,
            radius_at_unit_depth: gt.radius_at_unit_depth,
            fps_target: gt.fps_target,
        },
    )
}

/// Reads a ground-truth directory written by [`write_ground_truth`].
pub fn read_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let meta: GtMeta = read_json(&dir.join(GT_META_FILE))?;
    Ok(GroundTruth {
        poses: read_pose_csv(&dir.join(GT_POSES_FILE))?,
        spin_segments: read_spin_csv(&dir.join(GT_SPIN_FILE))?,
        averaging_factor: meta.averaging_factor,
        radius_at_unit_depth: meta.radius_at_unit_depth,
        fps_target: meta.fps_target,
    })
}

/// One exported snapshot: file names are relative to the index file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotIndexEntry {
    pub frame: usize,
    pub segment: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub appearance: String,
    pub mask: String,
}

/// Writes one frame's snapshots as paired 16-bit PNGs named
/// `F_frame{n}_seg{i}.png` / `M_frame{n}_seg{i}.png` and returns the index
/// entries describing them.
pub fn write_snapshot_pngs(
    dir: &Path,
    frame: usize,
    snapshots: &[Snapshot],
    spans: &[(f64, f64)],
) -> Result<Vec<SnapshotIndexEntry>> {
    if snapshots.len() != spans.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} snapshots but {} time spans",
            snapshots.len(),
            spans.len()
        )));
    }
    let mut entries = Vec::with_capacity(snapshots.len());
    for (segment, (snap, span)) in snapshots.iter().zip(spans).enumerate() {
        let appearance = format!("F_frame{frame}_seg{segment}.png");
        let mask = format!("M_frame{frame}_seg{segment}.png");
        write_png16(&dir.join(&appearance), &snap.appearance)?;
        write_png16(&dir.join(&mask), &snap.mask)?;
        entries.push(SnapshotIndexEntry {
            frame,
            segment,
            t_start: span.0,
            t_end: span.1,
            appearance,
            mask,
        });
    }
    Ok(entries)
}

/// Loads the snapshots listed in a JSON index file, resolving file names
/// relative to the index location.
pub fn read_snapshots(index_path: &Path) -> Result<Vec<(SnapshotIndexEntry, Snapshot)>> {
    let entries: Vec<SnapshotIndexEntry> = read_json(index_path)?;
    let dir = index_path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::with_capacity(entries.len());
    for entry in entries {
        let appearance = read_png(&dir.join(&entry.appearance))?;
        let mask = read_png(&dir.join(&entry.mask))?;
        let snap = Snapshot::new(appearance, mask)?;
        out.push((entry, snap));
    }
    Ok(out)
}

#[derive(Serialize)]
struct EvalCsvRow<'a> {
    frame: &'a str,
    #[serde(rename = "TIoU")]
    tiou: Option<f64>,
    #[serde(rename = "TIoU-3D")]
    tiou3d: Option<f64>,
    #[serde(rename = "Radius Error [pixels]")]
    radius_error: Option<f64>,
    #[serde(rename = "Axis Error [deg]")]
    axis_error: Option<f64>,
    #[serde(rename = "Angle Error [deg]")]
    angle_error: Option<f64>,
    #[serde(rename = "Axis Error (directed) [deg]")]
    axis_error_directed: Option<f64>,
}

/// Writes an evaluation report as CSV: one row per frame, then a `mean` row
/// with the aggregates. Absent scores stay empty cells, never zeros.
pub fn write_eval_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = csv_writer();
    let mut frame_labels: Vec<String> = Vec::new();
    for row in &report.rows {
        frame_labels.push(row.frame.to_string());
    }
    for (row, label) in report.rows.iter().zip(&frame_labels) {
        w.serialize(EvalCsvRow {
            frame: label,
            tiou: row.tiou,
            tiou3d: row.tiou3d,
            radius_error: row.radius_error,
            axis_error: row.axis_error,
            angle_error: row.angle_error,
            axis_error_directed: None,
        })?;
    }
    w.serialize(EvalCsvRow {
        frame: "mean",
        tiou: report.tiou,
        tiou3d: report.tiou3d,
        radius_error: report.radius_error,
        axis_error: report.axis_error,
        angle_error: report.angle_error,
        axis_error_directed: report.axis_error_directed,
    })?;
    atomic_write(path, &csv_bytes(w)?)
}

/// Renders an evaluation report as an aligned plain-text table with the same
/// column names as the CSV; absent scores print as `-`.
pub fn format_eval_table(report: &EvalReport) -> String {
    let headers = [
        "frame",
        "TIoU",
        "TIoU-3D",
        "Radius Error [pixels]",
        "Axis Error [deg]",
        "Angle Error [deg]",
    ];
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut rows: Vec<[String; 6]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.frame.to_string(),
                cell(r.tiou),
                cell(r.tiou3d),
                cell(r.radius_error),
                cell(r.axis_error),
                cell(r.angle_error),
            ]
        })
        .collect();
    rows.push([
        "mean".to_string(),
        cell(report.tiou),
        cell(report.tiou3d),
        cell(report.radius_error),
        cell(report.axis_error),
        cell(report.angle_error),
    ]);
    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| rows.iter().map(|r| r[i].len()).max().unwrap_or(0).max(h.len()))
        .collect();
    let mut out = String::new();
    for (i, h) in headers.iter().enumerate() {
        if i > 0 {
            out.push_str("  ");
        }
        out.push_str(&format!("{h:>w$}", w = widths[i]));
    }
    out.push('\n');
    for row in &rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(&format!("{v:>w$}", w = widths[i]));
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "Axis Error (directed) [deg]: {}\n",
        cell(report.axis_error_directed)
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::Curve2D;
    use crate::metrics::EvalRow;
    use nalgebra::Vector3;
    use tempfile::tempdir;

    fn gradient_image(h: usize, w: usize, channels: usize) -> Image {
        Image::from_fn(h, w, channels, |x, y, c| {
            ((x + 2 * y + 3 * c) % 97) as f64 / 96.0
        })
        .unwrap()
    }

    #[test]
    fn png16_round_trips_on_the_code_grid() {
        let dir = tempdir().unwrap();
        let img = Image::from_fn(7, 5, 3, |x, y, c| {
            ((x * 1315 + y * 2711 + c * 4099) % 65536) as f64 / 65535.0
        })
        .unwrap();
        let path = dir.path().join("a.png");
        write_png16(&path, &img).unwrap();
        let back = read_png(&path).unwrap();
        assert_eq!(back.dims(), (7, 5));
        assert_eq!(back.channels(), 3);
        assert_eq!(back.max_abs_diff(&img), 0.0);
    }

    #[test]
    fn png_quantization_error_is_bounded() {
        let dir = tempdir().unwrap();
        let img = gradient_image(9, 11, 1);
        let p16 = dir.path().join("q16.png");
        let p8 = dir.path().join("q8.png");
        write_png16(&p16, &img).unwrap();
        write_png8(&p8, &img).unwrap();
        assert!(read_png(&p16).unwrap().max_abs_diff(&img) <= (0.5 + 1e-9) / 65535.0);
        assert!(read_png(&p8).unwrap().max_abs_diff(&img) <= (0.5 + 1e-9) / 255.0);
    }

    #[test]
    fn unsupported_images_are_rejected() {
        let dir = tempdir().unwrap();
        let junk = dir.path().join("junk.png");
        fs::write(&junk, b"not a png").unwrap();
        assert!(matches!(read_png(&junk), Err(Error::Png(_))));

        let rgba = dir.path().join("rgba.png");
        let buf = image::ImageBuffer::from_pixel(2, 2, image::Rgba([1u8, 2, 3, 4]));
        let mut bytes = Cursor::new(Vec::new());
        DynamicImage::ImageRgba8(buf)
            .write_to(&mut bytes, ImageFormat::Png)
            .unwrap();
        fs::write(&rgba, bytes.into_inner()).unwrap();
        assert!(matches!(read_png(&rgba), Err(Error::Png(_))));
    }

    #[test]
    fn atomic_writes_create_parents_and_leave_no_temp_files() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nested/deeper/file.bin");
        atomic_write(&path, b"payload").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"payload");
        let names: Vec<String> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["file.bin".to_string()]);
    }

    #[test]
    fn pose_csv_round_trips_and_uses_the_documented_header() {
        let dir = tempdir().unwrap();
        let poses: Vec<SubFramePose> = (0..6)
            .map(|i| SubFramePose {
                subframe_index: i,
                t: 0.125 + i as f64 * 0.25,
                x: 30.0 + i as f64,
                y: 40.0 - 0.5 * i as f64,
                radius: 12.0 + 0.1 * i as f64,
                orientation: UnitQuaternion::from_scaled_axis(Vector3::new(
                    0.1 * i as f64,
                    0.2,
                    -0.05 * i as f64,
                )),
            })
            .collect();
        let path = dir.path().join("poses.csv");
        write_pose_csv(&path, &poses).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text
            .starts_with("subframe_index,t,x,y,radius,quat_w,quat_x,quat_y,quat_z"));
        let back = read_pose_csv(&path).unwrap();
        assert_eq!(back.len(), poses.len());
        for (a, b) in back.iter().zip(&poses) {
            assert_eq!(a.subframe_index, b.subframe_index);
            assert_eq!((a.t, a.x, a.y, a.radius), (b.t, b.x, b.y, b.radius));
            assert!(a.orientation.angle_to(&b.orientation) <= 1e-9);
        }
    }

    #[test]
    fn spin_csv_round_trips_exactly() {
        let dir = tempdir().unwrap();
        let segments = vec![
            SpinSegment {
                t_start: 0.0,
                t_end: 0.9,
                omega: AngularVelocity::new([0.3, -0.1, 0.7]).unwrap(),
            },
            SpinSegment {
                t_start: 0.9,
                t_end: 2.0,
                omega: AngularVelocity::new([-0.2, 0.4, 0.1]).unwrap(),
            },
        ];
        let path = dir.path().join("spin.csv");
        write_spin_csv(&path, &segments).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t_start,t_end,wx,wy,wz"));
        let back = read_spin_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back.iter().zip(&segments) {
            assert_eq!((a.t_start, a.t_end), (b.t_start, b.t_end));
            assert_eq!(a.omega, b.omega);
        }
        fs::write(&path, "t_start,t_end,wx,wy,wz\n1.0,0.5,0,0,0\n").unwrap();
        assert!(read_spin_csv(&path).is_err());
    }

    #[test]
    fn depth_csv_restores_reliability_from_area() {
        let dir = tempdir().unwrap();
        let samples = vec![
            DepthSample {
                t: 0.5,
                x: 10.0,
                y: 20.0,
                depth: 0.8,
                area: 3.9,
                reliable: false,
            },
            DepthSample {
                t: 1.5,
                x: 11.0,
                y: 21.0,
                depth: 0.7,
                area: MIN_RELIABLE_AREA,
                reliable: true,
            },
        ];
        let path = dir.path().join("depth.csv");
        write_depth_csv(&path, &samples).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,x,y,area,d"));
        let back = read_depth_csv(&path).unwrap();
        assert!(!back[0].reliable && back[1].reliable);
        for (a, b) in back.iter().zip(&samples) {
            assert_eq!((a.t, a.x, a.y, a.depth, a.area), (b.t, b.x, b.y, b.depth, b.area));
        }
    }

    #[test]
    fn velocity_csv_round_trips_and_validates_the_rate_column() {
        let dir = tempdir().unwrap();
        let samples = vec![VelocitySample {
            t_center: 1.25,
            omega: AngularVelocity::new([0.1, 0.2, -0.3]).unwrap(),
            n_inliers: 7,
            score_total: 41.5,
        }];
        let path = dir.path().join("vel.csv");
        write_velocity_csv(&path, &samples).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t_center,wx,wy,wz,rate,n_inliers,score_total"));
        let back = read_velocity_csv(&path).unwrap();
        assert_eq!(back[0].omega, samples[0].omega);
        assert_eq!(back[0].n_inliers, 7);
        assert_eq!(back[0].score_total, 41.5);
        fs::write(
            &path,
            "t_center,wx,wy,wz,rate,n_inliers,score_total\n1.0,0.1,0.0,0.0,9.9,3,1.0\n",
        )
        .unwrap();
        assert!(read_velocity_csv(&path).is_err());
    }

    #[test]
    fn ground_truth_directory_round_trips() {
        let dir = tempdir().unwrap();
        let gt = GroundTruth {
            poses: vec![SubFramePose {
                subframe_index: 0,
                t: 0.25,
                x: 5.0,
                y: 6.0,
                radius: 9.0,
                orientation: UnitQuaternion::identity(),
            }],
            spin_segments: vec![SpinSegment {
                t_start: 0.0,
                t_end: 1.0,
                omega: AngularVelocity::new([0.0, 0.0, 0.5]).unwrap(),
            }],
            averaging_factor: 2,
            radius_at_unit_depth: 9.0,
            fps_target: 30.0,
        };
        write_ground_truth(dir.path(), &gt).unwrap();
        let back = read_ground_truth(dir.path()).unwrap();
        assert_eq!(back.poses.len(), 1);
        assert_eq!(back.spin_segments.len(), 1);
        assert_eq!(back.averaging_factor, 2);
        assert_eq!(back.radius_at_unit_depth, 9.0);
        assert_eq!(back.fps_target, 30.0);
    }

    #[test]
    fn snapshots_are_exported_under_the_documented_names() {
        let dir = tempdir().unwrap();
        let mask = Image::from_fn(8, 8, 1, |x, y, _| {
            if (x as isize - 4).pow(2) + (y as isize - 4).pow(2) <= 6 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let appearance = Image::from_fn(8, 8, 3, |x, y, c| {
            mask.get(x, y, 0) * ((x + y + c) % 5) as f64 / 5.0
        })
        .unwrap();
        let snap = Snapshot::new(appearance, mask).unwrap();
        let snaps = vec![snap.clone(), snap.clone()];
        let spans = vec![(0.0, 0.5), (0.5, 1.0)];
        let entries = write_snapshot_pngs(dir.path(), 3, &snaps, &spans).unwrap();
        assert!(dir.path().join("F_frame3_seg0.png").exists());
        assert!(dir.path().join("M_frame3_seg1.png").exists());
        let index = dir.path().join("snapshots.json");
        write_json(&index, &entries).unwrap();
        let back = read_snapshots(&index).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].0.t_start, 0.5);
        assert!(back[0].1.appearance.max_abs_diff(&snap.appearance) <= (0.5 + 1e-9) / 65535.0);
        assert!(back[0].1.mask.max_abs_diff(&snap.mask) <= (0.5 + 1e-9) / 65535.0);

        assert!(write_snapshot_pngs(dir.path(), 0, &snaps, &spans[..1]).is_err());
    }

    #[test]
    fn eval_outputs_match_the_table_headers_and_keep_absences_empty() {
        let dir = tempdir().unwrap();
        let report = EvalReport {
            tiou: Some(0.91),
            tiou3d: Some(0.87),
            radius_error: Some(1.25),
            axis_error: None,
            axis_error_directed: None,
            angle_error: None,
            rows: vec![EvalRow {
                frame: 0,
                tiou: Some(0.91),
                tiou3d: Some(0.87),
                radius_error: Some(1.25),
                axis_error: None,
                angle_error: None,
            }],
        };
        let path = dir.path().join("eval.csv");
        write_eval_csv(&path, &report).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "frame,TIoU,TIoU-3D,Radius Error [pixels],Axis Error [deg],\
             Angle Error [deg],Axis Error (directed) [deg]"
        );
        assert_eq!(lines.next().unwrap(), "0,0.91,0.87,1.25,,,");
        assert_eq!(lines.next().unwrap(), "mean,0.91,0.87,1.25,,,");

        let table = format_eval_table(&report);
        assert!(table.contains("Radius Error [pixels]"));
        assert!(table.contains('-'));
        assert!(!table.contains("0.0000"));
    }

    #[test]
    fn json_helpers_validate_on_the_way_in() {
        let dir = tempdir().unwrap();
        let curve = Curve2D::single(0.0, 2.0, vec![1.0, 0.5], vec![2.0, -0.25]).unwrap();
        let path = dir.path().join("curve.json");
        write_json(&path, &curve).unwrap();
        let back: Curve2D = read_json(&path).unwrap();
        assert_eq!(back.eval(1.3), curve.eval(1.3));
        fs::write(
            &path,
            br#"{"breakpoints": [0.0, 1.0], "segments": []}"#,
        )
        .unwrap();
        assert!(read_json::<Curve2D>(&path).is_err());
    }

    #[test]
    fn frame_names_sort_temporally() {
        let dir = tempdir().unwrap();
        let img = gradient_image(3, 3, 1);
        for i in [0, 2, 10, 1] {
            write_png16(&dir.path().join(frame_name("frame", i)), &img).unwrap();
        }
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let listed = list_pngs(dir.path()).unwrap();
        let names: Vec<String> = listed
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            vec![
                "frame_00000.png",
                "frame_00001.png",
                "frame_00002.png",
                "frame_00010.png"
            ]
        );
    }
}
