//! Flat `key = value` configuration with a typed schema.
//!
//! Every key has a declared type and default; unknown keys, duplicate keys,
//! and untypeable values are errors so a config file documents a run
//! exactly. `#` starts a full-line comment. The canonical dump (same
//! format, declaration order) is what run manifests store and compare.

use std::path::Path;

use deblat::deblatting::{FmSolverParams, HierarchySchedule};
use deblat::pipeline::TrackParams;
use deblat::rotation::{ConsensusParams, VelocityGrid};
use deblat::{Error, Result};

trait Value: Sized {
    fn parse(key: &str, raw: &str) -> Result<Self>;
    fn format(&self) -> String;
}

fn bad(key: &str, raw: &str, ty: &str) -> Error {
    Error::InvalidInput(format!("config key '{key}': '{raw}' is not a {ty}"))
}

impl Value for f64 {
    fn parse(key: &str, raw: &str) -> Result<Self> {
        let v: f64 = raw.parse().map_err(|_| bad(key, raw, "number"))?;
        if !v.is_finite() {
            return Err(bad(key, raw, "finite number"));
        }
        Ok(v)
    }
    fn format(&self) -> String {
        format!("{self}")
    }
}

impl Value for usize {
    fn parse(key: &str, raw: &str) -> Result<Self> {
        raw.parse().map_err(|_| bad(key, raw, "non-negative integer"))
    }
    fn format(&self) -> String {
        format!("{self}")
    }
}

impl Value for u64 {
    fn parse(key: &str, raw: &str) -> Result<Self> {
        raw.parse().map_err(|_| bad(key, raw, "non-negative integer"))
    }
    fn format(&self) -> String {
        format!("{self}")
    }
}

impl Value for bool {
    fn parse(key: &str, raw: &str) -> Result<Self> {
        match raw {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(bad(key, raw, "bool (true/false)")),
        }
    }
    fn format(&self) -> String {
        format!("{self}")
    }
}

impl Value for String {
    fn parse(_key: &str, raw: &str) -> Result<Self> {
        Ok(raw.to_string())
    }
    fn format(&self) -> String {
        self.clone()
    }
}

macro_rules! schema {
    ($(($field:ident, $ty:ty, $default:expr, $help:expr)),+ $(,)?) => {
        /// Effective settings for one run; one field per config key.
        #[derive(Debug, Clone, PartialEq)]
        pub struct Config {
            $(pub $field: $ty,)+
        }

        impl Default for Config {
            fn default() -> Self {
                Self { $($field: $default,)+ }
            }
        }

        impl Config {
            fn set(&mut self, key: &str, raw: &str) -> Result<()> {
                match key {
                    $(stringify!($field) => self.$field = Value::parse(key, raw)?,)+
                    _ => {
                        return Err(Error::InvalidInput(format!(
                            "unknown config key '{key}'"
                        )))
                    }
                }
                Ok(())
            }

            fn entries(&self) -> Vec<(&'static str, String, &'static str)> {
                vec![$((stringify!($field), self.$field.format(), $help),)+]
            }
        }
    };
}

schema![
    // Scene generation.
    (scene_height, usize, 270, "canvas height in pixels"),
    (scene_width, usize, 480, "canvas width in pixels"),
    (scene_frames, usize, 10, "number of output frames"),
    (averaging_factor, usize, 8, "sub-frames averaged into each frame"),
    (subsamples, usize, 8, "instant composites averaged into each sub-frame"),
    (radius_at_unit_depth, f64, 15.0, "perceived ball radius in pixels at relative depth 1"),
    (fps_target, f64, 30.0, "capture rate metadata carried into outputs"),
    (texture_height, usize, 128, "sphere texture height"),
    (texture_width, usize, 256, "sphere texture width"),
    (synth_start_x, f64, 60.0, "object start x in pixels"),
    (synth_start_y, f64, 135.0, "object start y in pixels"),
    (synth_start_depth, f64, 1.0, "object start relative depth"),
    (synth_vx, f64, 36.0, "object x velocity in pixels per frame"),
    (synth_vy, f64, 0.0, "object y velocity in pixels per frame"),
    (synth_v_depth, f64, 0.0, "object depth velocity per frame"),
    (synth_spin_wx, f64, 0.0, "spin x component in radians per frame"),
    (synth_spin_wy, f64, 0.0, "spin y component in radians per frame"),
    (synth_spin_wz, f64, 0.3, "spin z component in radians per frame"),
    (synth_trajectory_file, String, String::new(), "3D trajectory JSON overriding the linear motion keys"),
    (synth_spin_file, String, String::new(), "spin segment CSV overriding the constant spin keys"),
    // Paths.
    (frames_dir, String, String::new(), "input frame directory (PNG files in name order)"),
    (gt_dir, String, String::new(), "ground-truth directory (synth output; oracle and eval input)"),
    (output_dir, String, "out".into(), "directory all command outputs go under"),
    // 2D trajectory source: exactly one for track.
    (trajectory_file, String, String::new(), "2D trajectory JSON produced by an upstream tracker"),
    (trajectory_oracle, bool, false, "take the 2D trajectory from the ground truth in gt_dir"),
    (trajectory_estimate, bool, false, "estimate the 2D trajectory from the frames themselves"),
    // Hierarchy and solver.
    (levels, usize, 3, "halving levels; 2^levels snapshots per frame"),
    (final_segments, usize, 0, "override the last level's segment count (0 = 2^levels)"),
    (lambda, f64, 1e-2, "template prior weight"),
    (alpha_f, f64, 5e-4, "appearance total-variation weight"),
    (lambda_r, f64, 1e-1, "rotational symmetry prior weight"),
    (gamma_f, f64, 1e-2, "appearance step scaling"),
    (gamma_m, f64, 1e-2, "mask step scaling"),
    (admm_rho, f64, 1e-1, "constraint splitting penalty"),
    (max_iters, usize, 100, "solver iteration cap"),
    (cg_iters, usize, 8, "conjugate-gradient steps per outer iteration"),
    (tol, f64, 1e-4, "relative convergence tolerance"),
    (roi_pad, f64, 48.0, "padding around the per-frame trajectory extent in pixels"),
    (mask_threshold, f64, 0.3, "mask floor cut before area measurements"),
    // Spin search.
    (grid_axes, usize, 312, "candidate axis count (even)"),
    (grid_rate_step, f64, 0.02, "candidate rate step in radians per frame"),
    (grid_rate_max, f64, 1.2, "largest candidate rate in radians per frame"),
    (consensus_rho, f64, 0.04, "vote agreement radius"),
    (consensus_epsilon, f64, 1e-3, "vote score stabilizer"),
    (window, usize, 8, "snapshots per sliding spin window"),
    // Reproducibility.
    (seed, u64, 0, "seed for procedural content"),
];

impl Config {
    /// Parses a config file over the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidInput(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_text(&text)
    }

    /// Parses `key = value` lines over the defaults. Duplicate keys are
    /// rejected rather than silently overridden.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, raw)) = line.split_once('=') else {
                return Err(Error::InvalidInput(format!(
                    "config line {}: expected 'key = value', got '{line}'",
                    i + 1
                )));
            };
            let key = key.trim();
            if seen.contains(&key.to_string()) {
                return Err(Error::InvalidInput(format!(
                    "config line {}: duplicate key '{key}'",
                    i + 1
                )));
            }
            cfg.set(key, raw.trim())?;
            seen.push(key.to_string());
        }
        Ok(cfg)
    }

    /// Canonical flat dump: every key in declaration order. Reparsing the
    /// dump reproduces the config exactly.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (key, value, _) in self.entries() {
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// Dump with a help comment above each key, for `--print-config`.
    pub fn dump_annotated(&self) -> String {
        let mut out = String::new();
        for (key, value, help) in self.entries() {
            out.push_str(&format!("# {help}\n{key} = {value}\n"));
        }
        out
    }

    /// Range checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("radius_at_unit_depth", self.radius_at_unit_depth),
            ("fps_target", self.fps_target),
            ("synth_start_depth", self.synth_start_depth),
        ];
        for (key, v) in positive {
            if v <= 0.0 {
                return Err(Error::InvalidInput(format!("{key} must be positive, got {v}")));
            }
        }
        let at_least = [
            ("scene_height", self.scene_height, 32),
            ("scene_width", self.scene_width, 32),
            ("scene_frames", self.scene_frames, 1),
            ("averaging_factor", self.averaging_factor, 1),
            ("subsamples", self.subsamples, 8),
            ("texture_height", self.texture_height, 8),
            ("texture_width", self.texture_width, 8),
        ];
        for (key, v, lo) in at_least {
            if v < lo {
                return Err(Error::InvalidInput(format!(
                    "{key} must be at least {lo}, got {v}"
                )));
            }
        }
        if self.output_dir.is_empty() {
            return Err(Error::InvalidInput("output_dir must not be empty".into()));
        }
        // Solver, schedule, grid, and pipeline values validate through
        // their owners.
        self.track_params().map(|_| ())
    }

    pub fn solver(&self) -> FmSolverParams {
        FmSolverParams {
            lambda: self.lambda,
            alpha_f: self.alpha_f,
            lambda_r: self.lambda_r,
            gamma_f: self.gamma_f,
            gamma_m: self.gamma_m,
            admm_rho: self.admm_rho,
            max_iters: self.max_iters,
            cg_iters: self.cg_iters,
            tol: self.tol,
        }
    }

    pub fn schedule(&self) -> Result<HierarchySchedule> {
        if self.final_segments == 0 {
            HierarchySchedule::new(self.levels)
        } else {
            HierarchySchedule::with_final_segments(self.levels, self.final_segments)
        }
    }

    pub fn grid(&self) -> Result<VelocityGrid> {
        VelocityGrid::new(self.grid_axes, self.grid_rate_step, self.grid_rate_max)
    }

    pub fn consensus(&self) -> ConsensusParams {
        ConsensusParams {
            rho: self.consensus_rho,
            epsilon: self.consensus_epsilon,
            window: self.window,
        }
    }

    pub fn track_params(&self) -> Result<TrackParams> {
        let params = TrackParams {
            solver: self.solver(),
            schedule: self.schedule()?,
            grid: self.grid()?,
            consensus: self.consensus(),
            roi_pad: self.roi_pad,
            mask_threshold: self.mask_threshold,
        };
        params.validate()?;
        Ok(params)
    }
}

/// The selected way to obtain the 2D trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrajectorySource {
    File(String),
    Oracle,
    Estimate,
}

impl Config {
    /// Exactly one trajectory source must be selected.
    pub fn trajectory_source(&self) -> Result<TrajectorySource> {
        let mut picked = Vec::new();
        if !self.trajectory_file.is_empty() {
            picked.push(TrajectorySource::File(self.trajectory_file.clone()));
        }
        if self.trajectory_oracle {
            picked.push(TrajectorySource::Oracle);
        }
        if self.trajectory_estimate {
            picked.push(TrajectorySource::Estimate);
        }
        match picked.len() {
            1 => Ok(picked.pop().unwrap()),
            0 => Err(Error::InvalidInput(
                "no trajectory source: set trajectory_file, trajectory_oracle, \
                 or trajectory_estimate"
                    .into(),
            )),
            _ => Err(Error::InvalidInput(
                "more than one trajectory source selected".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_dump_reparses_to_itself() {
        let cfg = Config::default();
        let again = Config::from_text(&cfg.dump()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.dump(), cfg.dump());
    }

    #[test]
    fn values_round_trip_through_the_dump() {
        let mut cfg = Config::default();
        cfg.set("alpha_f", "0.00073").unwrap();
        cfg.set("seed", "12345").unwrap();
        cfg.set("trajectory_file", "runs/curve.json").unwrap();
        cfg.set("trajectory_oracle", "true").unwrap();
        let again = Config::from_text(&cfg.dump()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(Config::from_text("no_such_key = 1\n").is_err());
        assert!(Config::from_text("levels = many\n").is_err());
        assert!(Config::from_text("tol = nan\n").is_err());
        assert!(Config::from_text("trajectory_oracle = yes\n").is_err());
        assert!(Config::from_text("levels\n").is_err());
        assert!(Config::from_text("levels = 2\nlevels = 3\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = Config::from_text("# a comment\n\n  levels = 2  \n").unwrap();
        assert_eq!(cfg.levels, 2);
    }

    #[test]
    fn exactly_one_trajectory_source() {
        let mut cfg = Config::default();
        assert!(cfg.trajectory_source().is_err());
        cfg.trajectory_oracle = true;
        assert_eq!(cfg.trajectory_source().unwrap(), TrajectorySource::Oracle);
        cfg.trajectory_file = "a.json".into();
        assert!(cfg.trajectory_source().is_err());
    }

    #[test]
    fn validation_catches_out_of_range_values() {
        let mut cfg = Config::default();
        cfg.mask_threshold = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.levels = 9;
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.grid_axes = 3;
        assert!(cfg.validate().is_err());
        assert!(Config::default().validate().is_ok());
    }
}
