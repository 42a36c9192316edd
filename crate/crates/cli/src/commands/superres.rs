//! `superres`: re-render the sequence at a multiple of the input frame rate
//! from a completed track run.

use std::path::PathBuf;

use deblat::curve::Curve2D;
use deblat::io;
use deblat::pipeline::superres_frames;
use serde::Serialize;

use crate::commands::{
    input_error, load_deblats, stage_error, CmdResult, BACKGROUND_FILE, FRAME_META_FILE,
    SNAPSHOT_DIR, SNAPSHOT_INDEX, SUPERRES_DIR, TRAJECTORY_2D_FILE,
};
use crate::config::Config;
use crate::manifest::RunManifest;

#[derive(Serialize)]
struct SuperresIndex {
    factor: usize,
    reused_snapshots: bool,
    /// Global time span each output frame covers.
    spans: Vec<(f64, f64)>,
}

pub fn run(cfg: &Config, factor: usize, diagnostics: bool) -> CmdResult<()> {
    cfg.validate().map_err(input_error)?;
    if factor == 0 {
        return Err(input_error("factor must be at least 1"));
    }
    let out_dir = PathBuf::from(&cfg.output_dir);
    let bg_path = out_dir.join(BACKGROUND_FILE);
    let index_path = out_dir.join(SNAPSHOT_DIR).join(SNAPSHOT_INDEX);
    let meta_path = out_dir.join(FRAME_META_FILE);
    let curve_path = out_dir.join(TRAJECTORY_2D_FILE);
    for p in [&bg_path, &index_path, &meta_path, &curve_path] {
        if !p.is_file() {
            return Err(input_error(format!(
                "missing track output {}; run track into this output_dir first",
                p.display()
            )));
        }
    }
    let background = io::read_png(&bg_path).map_err(input_error)?;
    let deblats = load_deblats(&index_path, &meta_path).map_err(input_error)?;
    let curve: Curve2D = io::read_json(&curve_path).map_err(input_error)?;

    let result = superres_frames(&background, &deblats, &curve, factor)
        .map_err(|e| stage_error("superres", e))?;

    let sdir = out_dir.join(SUPERRES_DIR);
    for (i, frame) in result.frames.iter().enumerate() {
        io::write_png16(&sdir.join(io::frame_name("sr", i)), frame)
            .map_err(|e| stage_error("superres", e))?;
    }
    io::write_json(
        &sdir.join("index.json"),
        &SuperresIndex {
            factor,
            reused_snapshots: result.reused_snapshots,
            spans: result.spans.clone(),
        },
    )
    .map_err(|e| stage_error("superres", e))?;

    let mut manifest = RunManifest::new("superres", cfg, diagnostics);
    if result.reused_snapshots {
        manifest.warnings.push(format!(
            "factor {factor} exceeds the stored snapshot granularity; nearest snapshots reused"
        ));
    }
    manifest
        .write(&sdir)
        .map_err(|e| stage_error("superres", e))?;
    for w in &manifest.warnings {
        eprintln!("superres: warning: {w}");
    }
    println!(
        "superres: {} frames (factor {factor}) -> {}",
        result.frames.len(),
        sdir.display()
    );
    Ok(())
}
