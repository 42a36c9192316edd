//! Run manifests: what produced the contents of an output directory.
//!
//! A manifest records the command, the crate version, and the canonical
//! config dump, so a run is reproducible from the manifest alone. It is
//! also the cache key: stage outputs in a directory are only reused when
//! the stored manifest matches the current run exactly.

use std::path::Path;

use deblat::io;
use deblat::Result;
use serde::{Deserialize, Serialize};

use crate::config::Config;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub diagnostics: bool,
    /// Canonical flat dump of the effective configuration.
    pub config: String,
    /// Notes derived from the run's artifacts (non-convergence, empty spin
    /// series); deterministic given the outputs.
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &Config, diagnostics: bool) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            diagnostics,
            config: cfg.dump(),
            warnings: Vec::new(),
        }
    }

    /// True when the manifest stored in `dir` describes this same run, so
    /// stage outputs there are safe to reuse.
    pub fn matches_cache(&self, dir: &Path) -> bool {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return false;
        }
        match io::read_json::<RunManifest>(&path) {
            Ok(stored) => {
                stored.command == self.command
                    && stored.version == self.version
                    && stored.seed == self.seed
                    && stored.diagnostics == self.diagnostics
                    && stored.config == self.config
            }
            Err(_) => false,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_json(&dir.join(MANIFEST_FILE), self)
    }
}
