//! `track`: the full recovery pipeline with per-stage caching.
//!
//! Stages write their outputs as they complete, so a failed run keeps
//! everything produced before the failure. When the output directory's
//! manifest matches the current run exactly, existing stage outputs are
//! reused instead of recomputed; a later stage recomputed from cached
//! earlier stages equals the full run because every stage consumes its
//! inputs as stored on disk (snapshots and the background are re-read after
//! writing, so in-memory and quantized values never diverge).

use std::path::{Path, PathBuf};

use deblat::curve::Curve2D;
use deblat::formation::estimate_background;
use deblat::io;
use deblat::pipeline::{
    curve_bounces_2d, deblat_frame, depth_stage, estimate_trajectory_from_frames, rotation_stage,
    FrameDeblat,
};
use deblat::rotation::VelocitySample;
use deblat::trajectory::{detect_bounces, fit_trajectory, DepthSample, Trajectory3D};
use rayon::prelude::*;

use crate::commands::{
    input_error, load_deblats, load_frames, stage_error, CmdResult, Failure, FrameMeta,
    BACKGROUND_FILE, BOUNCES_FILE, DEPTH_FILE, DIAGNOSTICS_DIR, FRAME_META_FILE, SNAPSHOT_DIR,
    SNAPSHOT_INDEX, TRAJECTORY_2D_FILE, TRAJECTORY_3D_FILE, TRAJECTORY_GT_FILE, VELOCITY_FILE,
};
use crate::config::{Config, TrajectorySource};
use crate::manifest::RunManifest;

pub fn run(cfg: &Config, diagnostics: bool) -> CmdResult<()> {
    cfg.validate().map_err(input_error)?;
    let params = cfg.track_params().map_err(input_error)?;
    if cfg.frames_dir.is_empty() {
        return Err(input_error("frames_dir is required for track"));
    }
    let frames = load_frames(Path::new(&cfg.frames_dir))?;
    let n = frames.len();

    // Referenced paths must exist before any work starts.
    let source = cfg.trajectory_source().map_err(input_error)?;
    let source_path = match &source {
        TrajectorySource::File(p) => {
            let pb = PathBuf::from(p);
            if !pb.is_file() {
                return Err(input_error(format!("trajectory file {p} does not exist")));
            }
            Some(pb)
        }
        TrajectorySource::Oracle => {
            if cfg.gt_dir.is_empty() {
                return Err(input_error("gt_dir is required for the oracle trajectory source"));
            }
            let pb = Path::new(&cfg.gt_dir).join(TRAJECTORY_GT_FILE);
            if !pb.is_file() {
                return Err(input_error(format!(
                    "ground-truth trajectory {} does not exist",
                    pb.display()
                )));
            }
            Some(pb)
        }
        TrajectorySource::Estimate => None,
    };

    let out_dir = PathBuf::from(&cfg.output_dir);
    let mut manifest = RunManifest::new("track", cfg, diagnostics);
    let cached = manifest.matches_cache(&out_dir);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| input_error(format!("cannot create {}: {e}", out_dir.display())))?;

    // Stage: background.
    let bg_path = out_dir.join(BACKGROUND_FILE);
    let err = |e: deblat::Error| stage_error("background", e);
    let background = if cached && bg_path.is_file() {
        println!("track: background (cached)");
        io::read_png(&bg_path).map_err(err)?
    } else {
        let bg = estimate_background(&frames).map_err(err)?;
        io::write_png16(&bg_path, &bg).map_err(err)?;
        println!("track: background estimated from {n} frames");
        // Decode the stored file so later stages see exactly what a cached
        // rerun reads.
        io::read_png(&bg_path).map_err(err)?
    };

    // Stage: trajectory.
    let curve_path = out_dir.join(TRAJECTORY_2D_FILE);
    let curve: Curve2D = if cached && curve_path.is_file() {
        println!("track: trajectory (cached)");
        io::read_json(&curve_path).map_err(|e| stage_error("trajectory", e))?
    } else {
        let c = match &source {
            TrajectorySource::File(_) => io::read_json(source_path.as_ref().unwrap())
                .map_err(input_error)?,
            TrajectorySource::Oracle => {
                let t: Trajectory3D =
                    io::read_json(source_path.as_ref().unwrap()).map_err(input_error)?;
                t.project_xy()
            }
            TrajectorySource::Estimate => estimate_trajectory_from_frames(
                &frames,
                &background,
                &params,
            )
            .map_err(|e| stage_error("trajectory", e))?,
        };
        io::write_json(&curve_path, &c).map_err(|e| stage_error("trajectory", e))?;
        let label = match &source {
            TrajectorySource::File(p) => format!("from {p}"),
            TrajectorySource::Oracle => "from ground truth".into(),
            TrajectorySource::Estimate => "estimated from frames".into(),
        };
        println!("track: trajectory {label}");
        c
    };
    let (d0, d1) = curve.domain();
    if d0 > 1e-9 || d1 < n as f64 - 1e-9 {
        return Err(input_error(format!(
            "trajectory domain [{d0}, {d1}] does not cover frame times [0, {n}]"
        )));
    }

    // Stage: deblat.
    let snap_dir = out_dir.join(SNAPSHOT_DIR);
    let index_path = snap_dir.join(SNAPSHOT_INDEX);
    let meta_path = out_dir.join(FRAME_META_FILE);
    let deblats: Vec<FrameDeblat> = if cached && index_path.is_file() && meta_path.is_file() {
        println!("track: snapshots (cached)");
        load_deblats(&index_path, &meta_path).map_err(|e| stage_error("deblat", e))?
    } else {
        let err = |e: deblat::Error| stage_error("deblat", e);
        let results: Vec<FrameDeblat> = (0..n)
            .into_par_iter()
            .map(|i| deblat_frame(&frames[i], &background, &curve, i, &params))
            .collect::<deblat::Result<Vec<_>>>()
            .map_err(err)?;
        std::fs::create_dir_all(&snap_dir).map_err(|e| stage_error("deblat", e))?;
        let mut entries = Vec::new();
        for fd in &results {
            entries.extend(
                io::write_snapshot_pngs(&snap_dir, fd.frame_index, &fd.snapshots, &fd.spans)
                    .map_err(err)?,
            );
        }
        io::write_json(&index_path, &entries).map_err(err)?;
        let metas: Vec<FrameMeta> = results
            .iter()
            .map(|fd| FrameMeta {
                frame_index: fd.frame_index,
                roi: fd.roi,
                converged: fd.converged,
            })
            .collect();
        io::write_json(&meta_path, &metas).map_err(err)?;
        if diagnostics {
            let ddir = out_dir.join(DIAGNOSTICS_DIR);
            for fd in &results {
                io::write_diagnostics_csv(
                    &ddir.join(format!("deblat_frame_{:05}.csv", fd.frame_index)),
                    &fd.trace,
                )
                .map_err(err)?;
            }
        }
        let segs = results.first().map_or(0, |f| f.snapshots.len());
        println!("track: {n} frames deblatted, {segs} snapshots each");
        // Quantization barrier: downstream stages consume the archived
        // snapshots, not the in-memory ones.
        load_deblats(&index_path, &meta_path).map_err(err)?
    };

    // Stage: depth.
    let depth_path = out_dir.join(DEPTH_FILE);
    let depth_samples: Vec<DepthSample> = if cached && depth_path.is_file() {
        println!("track: depth (cached)");
        io::read_depth_csv(&depth_path).map_err(|e| stage_error("depth", e))?
    } else {
        let samples = depth_stage(&deblats, &curve)
            .map_err(|e| stage_error("depth", e))?;
        io::write_depth_csv(&depth_path, &samples).map_err(|e| stage_error("depth", e))?;
        println!("track: {} depth samples", samples.len());
        samples
    };

    // Stage: bounces.
    let bounces_path = out_dir.join(BOUNCES_FILE);
    let bounces: Vec<f64> = if cached && bounces_path.is_file() {
        println!("track: bounces (cached)");
        io::read_json(&bounces_path).map_err(|e| stage_error("bounces", e))?
    } else {
        let b = detect_bounces(&depth_samples, &curve_bounces_2d(&curve));
        io::write_json(&bounces_path, &b).map_err(|e| stage_error("bounces", e))?;
        println!("track: {} bounce(s)", b.len());
        b
    };

    // Stage: trajectory fit.
    let traj_path = out_dir.join(TRAJECTORY_3D_FILE);
    if cached && traj_path.is_file() {
        println!("track: 3D trajectory (cached)");
    } else {
        let traj = fit_trajectory(&depth_samples, &bounces)
            .and_then(|t| t.extended(0.0, n as f64))
            .map_err(|e| stage_error("fit", e))?;
        io::write_json(&traj_path, &traj).map_err(|e| stage_error("fit", e))?;
        println!("track: 3D trajectory fitted ({} segment(s))", traj.segments().len());
    }

    // Stage: rotation.
    let vel_path = out_dir.join(VELOCITY_FILE);
    let velocities: Vec<VelocitySample> = if cached && vel_path.is_file() {
        println!("track: spin (cached)");
        io::read_velocity_csv(&vel_path).map_err(|e| stage_error("rotation", e))?
    } else {
        let v = match rotation_stage(&deblats, &background, &bounces, &params) {
            Ok(v) => v,
            Err(deblat::Error::Degenerate(msg)) => {
                eprintln!("track: warning: spin estimation skipped: {msg}");
                Vec::new()
            }
            Err(e) => return Err(stage_error("rotation", e)),
        };
        io::write_velocity_csv(&vel_path, &v).map_err(|e| stage_error("rotation", e))?;
        println!("track: {} spin window(s)", v.len());
        v
    };

    // Warnings derive from the artifacts so cached reruns reproduce them.
    for fd in &deblats {
        if !fd.converged {
            manifest.warnings.push(format!(
                "frame {}: solver stopped before reaching tolerance",
                fd.frame_index
            ));
        }
    }
    if velocities.is_empty() {
        manifest.warnings.push("spin series is empty".into());
    }
    manifest
        .write(&out_dir)
        .map_err(|e: deblat::Error| Failure {
            code: crate::commands::EXIT_INTERNAL,
            message: format!("cannot write manifest: {e}"),
        })?;
    for w in &manifest.warnings {
        eprintln!("track: warning: {w}");
    }
    println!("track: done -> {}", out_dir.display());
    Ok(())
}
