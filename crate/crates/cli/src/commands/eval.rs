//! `eval`: score tracking outputs against ground truth.
//!
//! Loads the estimated 3D trajectory (required) plus whatever measurement
//! series the estimate directory carries (2D trajectory, depth, spin); the
//! channels an estimate does not provide are reported as absent, never as
//! zero error. Timeline mismatches between estimate and ground truth are
//! the documented misalignment failure.

use std::path::Path;

use deblat::curve::Curve2D;
use deblat::image::Image;
use deblat::io;
use deblat::metrics::{
    align_depth_scale, pose_errors, tiou3d_series, tiou_series, EvalReport, EvalRow, PoseSample,
};
use deblat::trajectory::{DepthSample, Trajectory3D};

use crate::commands::{
    eval_error, input_error, internal_error, CmdResult, DEPTH_FILE, EVAL_REPORT_FILE,
    TRAJECTORY_2D_FILE, TRAJECTORY_3D_FILE, TRAJECTORY_GT_FILE, VELOCITY_FILE,
};

fn mean(series: &[f64]) -> f64 {
    series.iter().sum::<f64>() / series.len() as f64
}

/// Anti-aliased disk mask used as the shared object shape for the 2D score.
fn disk_mask(radius: f64) -> deblat::Result<Image> {
    let side = 2 * radius.ceil() as usize + 5;
    let c = ((side - 1) / 2) as f64;
    Image::from_fn(side, side, 1, |x, y, _| {
        let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
        (radius + 0.5 - d).clamp(0.0, 1.0)
    })
}

pub fn run(est_dir: &Path, gt_dir: &Path) -> CmdResult<()> {
    for d in [est_dir, gt_dir] {
        if !d.is_dir() {
            return Err(input_error(format!("{} is not a directory", d.display())));
        }
    }
    let gt = io::read_ground_truth(gt_dir).map_err(input_error)?;
    let gt_traj: Trajectory3D =
        io::read_json(&gt_dir.join(TRAJECTORY_GT_FILE)).map_err(input_error)?;
    let est_traj: Trajectory3D =
        io::read_json(&est_dir.join(TRAJECTORY_3D_FILE)).map_err(input_error)?;
    let est_curve: Option<Curve2D> = {
        let p = est_dir.join(TRAJECTORY_2D_FILE);
        if p.is_file() {
            Some(io::read_json(&p).map_err(input_error)?)
        } else {
            None
        }
    };
    let depth: Vec<DepthSample> = {
        let p = est_dir.join(DEPTH_FILE);
        if p.is_file() {
            io::read_depth_csv(&p).map_err(input_error)?
        } else {
            Vec::new()
        }
    };
    let velocity = {
        let p = est_dir.join(VELOCITY_FILE);
        if p.is_file() {
            io::read_velocity_csv(&p).map_err(input_error)?
        } else {
            Vec::new()
        }
    };
    if gt.poses.is_empty() || gt.averaging_factor == 0 {
        return Err(input_error("ground truth carries no poses"));
    }
    if gt.poses.len() % gt.averaging_factor != 0 {
        return Err(input_error(format!(
            "{} ground-truth poses is not a whole number of frames at averaging factor {}",
            gt.poses.len(),
            gt.averaging_factor
        )));
    }
    let n_frames = gt.poses.len() / gt.averaging_factor;
    let frames = 0..n_frames;

    let mean_radius = gt.poses.iter().map(|p| p.radius).sum::<f64>() / gt.poses.len() as f64;
    let aligned = align_depth_scale(&est_traj, &gt_traj, frames.clone()).map_err(eval_error)?;
    let series3d = tiou3d_series(
        &aligned,
        &gt_traj,
        mean_radius,
        gt.radius_at_unit_depth,
        frames.clone(),
    )
    .map_err(eval_error)?;
    let series2d = match &est_curve {
        Some(c) => {
            let mask = disk_mask(mean_radius).map_err(eval_error)?;
            Some(
                tiou_series(c, &gt_traj.project_xy(), &mask, frames.clone())
                    .map_err(eval_error)?,
            )
        }
        None => None,
    };

    let mut samples = Vec::new();
    for s in &depth {
        if s.reliable {
            samples.push(PoseSample {
                t: s.t,
                radius: Some((s.area / std::f64::consts::PI).sqrt()),
                omega: None,
            });
        }
    }
    for v in &velocity {
        samples.push(PoseSample {
            t: v.t_center,
            radius: None,
            omega: Some(v.omega),
        });
    }
    let pose_report = if samples.is_empty() {
        None
    } else {
        Some(pose_errors(&samples, &gt).map_err(eval_error)?)
    };

    let by_frame = |f: usize| {
        pose_report
            .as_ref()
            .and_then(|r| r.rows.iter().find(|row| row.frame == f))
    };
    let rows = (0..n_frames)
        .map(|f| EvalRow {
            frame: f,
            tiou: series2d.as_ref().map(|s| s[f]),
            tiou3d: Some(series3d[f]),
            radius_error: by_frame(f).and_then(|r| r.radius_error),
            axis_error: by_frame(f).and_then(|r| r.axis_error),
            angle_error: by_frame(f).and_then(|r| r.angle_error),
        })
        .collect();
    let report = EvalReport {
        tiou: series2d.as_deref().map(mean),
        tiou3d: Some(mean(&series3d)),
        radius_error: pose_report.as_ref().and_then(|r| r.radius_error),
        axis_error: pose_report.as_ref().and_then(|r| r.axis_error),
        axis_error_directed: pose_report.as_ref().and_then(|r| r.axis_error_directed),
        angle_error: pose_report.as_ref().and_then(|r| r.angle_error),
        rows,
    };

    io::write_eval_csv(&est_dir.join(EVAL_REPORT_FILE), &report).map_err(internal_error)?;
    print!("{}", io::format_eval_table(&report));
    Ok(())
}
