//! Subcommand implementations and the exit-code discipline they share.
//!
//! Exit codes: 0 success, 2 input error, 3 processing stage failure with
//! partial outputs retained, 4 evaluation misalignment, 1 unexpected error.

pub mod eval;
pub mod superres;
pub mod synth;
pub mod track;

use std::fmt::Display;
use std::path::Path;

use deblat::image::Image;
use deblat::io;
use deblat::pipeline::{FrameDeblat, RoiRect};
use serde::{Deserialize, Serialize};

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_STAGE: i32 = 3;
pub const EXIT_EVAL: i32 = 4;

/// A command failure carrying the documented process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

pub type CmdResult<T> = Result<T, Failure>;

pub fn input_error(e: impl Display) -> Failure {
    Failure { code: EXIT_INPUT, message: format!("input error: {e}") }
}

pub fn stage_error(stage: &str, e: impl Display) -> Failure {
    Failure { code: EXIT_STAGE, message: format!("stage {stage}: {e}") }
}

pub fn eval_error(e: impl Display) -> Failure {
    Failure { code: EXIT_EVAL, message: format!("evaluation: {e}") }
}

pub fn internal_error(e: impl Display) -> Failure {
    Failure { code: EXIT_INTERNAL, message: format!("error: {e}") }
}

// Artifact names shared between commands.
pub const TRAJECTORY_GT_FILE: &str = "trajectory_gt.json";
pub const TRAJECTORY_2D_FILE: &str = "trajectory2d.json";
pub const TRAJECTORY_3D_FILE: &str = "trajectory3d.json";
pub const BACKGROUND_FILE: &str = "background.png";
pub const DEPTH_FILE: &str = "depth.csv";
pub const VELOCITY_FILE: &str = "velocity.csv";
pub const BOUNCES_FILE: &str = "bounces.json";
pub const FRAME_META_FILE: &str = "track_frames.json";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SNAPSHOT_INDEX: &str = "index.json";
pub const EVAL_REPORT_FILE: &str = "eval_report.csv";
pub const FRAMES_SUBDIR: &str = "frames";
pub const GT_SUBDIR: &str = "gt";
pub const DIAGNOSTICS_DIR: &str = "diagnostics";
pub const SUPERRES_DIR: &str = "superres";

/// Per-frame metadata stored beside the snapshot archive; together they
/// reconstruct the deblatting stage's output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameMeta {
    pub frame_index: usize,
    pub roi: RoiRect,
    pub converged: bool,
}

/// Loads all PNG frames of a directory in name order.
pub fn load_frames(dir: &Path) -> CmdResult<Vec<Image>> {
    if !dir.is_dir() {
        return Err(input_error(format!("frame directory {} does not exist", dir.display())));
    }
    let paths = io::list_pngs(dir).map_err(input_error)?;
    if paths.is_empty() {
        return Err(input_error(format!("no PNG frames in {}", dir.display())));
    }
    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        let img = io::read_png(p).map_err(input_error)?;
        if img.channels() != 3 {
            return Err(input_error(format!("{} is not a color frame", p.display())));
        }
        if let Some(first) = frames.first() {
            let f: &Image = first;
            if f.dims() != img.dims() {
                return Err(input_error(format!(
                    "{} has different dimensions than the first frame",
                    p.display()
                )));
            }
        }
        frames.push(img);
    }
    Ok(frames)
}

/// Rebuilds the deblatting stage's output from the snapshot archive and the
/// frame metadata file. Kernels and iteration traces are not stored; the
/// bootstrap snapshot slot is filled with the first stored snapshot since
/// downstream stages never read it.
pub fn load_deblats(index_path: &Path, meta_path: &Path) -> deblat::Result<Vec<FrameDeblat>> {
    let metas: Vec<FrameMeta> = io::read_json(meta_path)?;
    let pairs = io::read_snapshots(index_path)?;
    let mut out = Vec::with_capacity(metas.len());
    for m in metas {
        let mut snapshots = Vec::new();
        let mut spans = Vec::new();
        for (entry, snap) in pairs.iter().filter(|(e, _)| e.frame == m.frame_index) {
            snapshots.push(snap.clone());
            spans.push((entry.t_start, entry.t_end));
        }
        let Some(level0) = snapshots.first().cloned() else {
            return Err(deblat::Error::InvalidInput(format!(
                "no snapshots stored for frame {}",
                m.frame_index
            )));
        };
        out.push(FrameDeblat {
            frame_index: m.frame_index,
            roi: m.roi,
            level0,
            snapshots,
            kernels: Vec::new(),
            spans,
            converged: m.converged,
            trace: Vec::new(),
        });
    }
    Ok(out)
}
