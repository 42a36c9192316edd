//! `synth`: generate a scene with exact ground truth.

use std::path::{Path, PathBuf};

use deblat::io;
use deblat::rotation::AngularVelocity;
use deblat::synth::{
    generate_sequence, procedural_background, procedural_texture, SceneSpec, SpinSchedule,
};
use deblat::trajectory::Trajectory3D;

use crate::commands::{
    input_error, internal_error, CmdResult, FRAMES_SUBDIR, GT_SUBDIR, TRAJECTORY_GT_FILE,
};
use crate::config::Config;
use crate::manifest::RunManifest;

pub fn run(cfg: &Config, diagnostics: bool) -> CmdResult<()> {
    cfg.validate().map_err(input_error)?;
    let out_dir = PathBuf::from(&cfg.output_dir);
    let gt_dir = if cfg.gt_dir.is_empty() {
        out_dir.join(GT_SUBDIR)
    } else {
        PathBuf::from(&cfg.gt_dir)
    };

    let background = procedural_background(cfg.scene_height, cfg.scene_width, cfg.seed)
        .map_err(input_error)?;
    let texture = procedural_texture(
        cfg.texture_height,
        cfg.texture_width,
        cfg.seed.wrapping_add(1),
    )
    .map_err(input_error)?;

    let span = cfg.scene_frames as f64;
    let trajectory_gt = if cfg.synth_trajectory_file.is_empty() {
        Trajectory3D::single(
            0.0,
            span,
            vec![cfg.synth_start_x, cfg.synth_vx],
            vec![cfg.synth_start_y, cfg.synth_vy],
            vec![cfg.synth_start_depth, cfg.synth_v_depth],
        )
        .map_err(input_error)?
    } else {
        let p = Path::new(&cfg.synth_trajectory_file);
        if !p.is_file() {
            return Err(input_error(format!(
                "synth_trajectory_file {} does not exist",
                p.display()
            )));
        }
        io::read_json(p).map_err(input_error)?
    };
    let spin_gt = if cfg.synth_spin_file.is_empty() {
        SpinSchedule::constant(
            0.0,
            span,
            AngularVelocity {
                omega: [cfg.synth_spin_wx, cfg.synth_spin_wy, cfg.synth_spin_wz],
            },
        )
        .map_err(input_error)?
    } else {
        let p = Path::new(&cfg.synth_spin_file);
        if !p.is_file() {
            return Err(input_error(format!(
                "synth_spin_file {} does not exist",
                p.display()
            )));
        }
        let segments = io::read_spin_csv(p).map_err(input_error)?;
        SpinSchedule::new(segments).map_err(input_error)?
    };

    let spec = SceneSpec {
        background,
        texture,
        trajectory_gt: trajectory_gt.clone(),
        spin_gt,
        radius_at_unit_depth: cfg.radius_at_unit_depth,
        frames: cfg.scene_frames,
        averaging_factor: cfg.averaging_factor,
        subsamples_per_subframe: cfg.subsamples,
        fps_target: cfg.fps_target,
    };
    let out = generate_sequence(&spec).map_err(input_error)?;

    let frames_dir = out_dir.join(FRAMES_SUBDIR);
    for (n, frame) in out.frames.iter().enumerate() {
        io::write_png16(&frames_dir.join(io::frame_name("frame", n)), frame)
            .map_err(internal_error)?;
    }
    io::write_ground_truth(&gt_dir, &out.gt).map_err(internal_error)?;
    io::write_json(&gt_dir.join(TRAJECTORY_GT_FILE), &trajectory_gt).map_err(internal_error)?;

    let mut manifest = RunManifest::new("synth", cfg, diagnostics);
    manifest.warnings = out.warnings.clone();
    manifest.write(&out_dir).map_err(internal_error)?;

    for w in &out.warnings {
        eprintln!("synth: warning: {w}");
    }
    println!("synth: {} frames -> {}", out.frames.len(), frames_dir.display());
    println!(
        "synth: {} ground-truth poses -> {}",
        out.gt.poses.len(),
        gt_dir.display()
    );
    Ok(())
}
