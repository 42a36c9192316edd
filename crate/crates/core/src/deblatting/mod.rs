//! Blur-aware appearance and mask recovery.
//!
//! The observation model treats a frame as a blurred object composited over a
//! known background: `I = H*F + (1 - H*M) . B`, with `H` a unit-mass blur
//! kernel, `F` the object's premultiplied appearance, and `M` its soft mask.
//! This module estimates the unknowns from single frames: appearance and mask
//! given the kernel (`solve_fm`), a temporal sequence of appearance/mask pairs
//! given per-segment kernels (`solve_fm_piecewise`), the kernel given
//! appearance and mask (`solve_h`), and a coarse-to-fine split of a frame's
//! exposure into sub-frame snapshots (`hierarchical_deblat`).
//!
//! All solvers are ADMM loops whose inner linear systems are solved by a few
//! conjugate-gradient steps with FFT-based convolution operators.

pub mod circavg;
mod cg;
mod fm;
mod hierarchy;
mod kernel_est;
mod operators;
pub mod prox;

pub use fm::{objective_fm, reconstruct, solve_fm, solve_fm_piecewise, FmResult, PiecewiseResult};
pub use hierarchy::{hierarchical_deblat, HierarchyResult, HierarchySchedule};
pub use kernel_est::{solve_h, KernelResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tuning knobs for the appearance/mask solvers.
///
/// `lambda` anchors the estimate to a template, `alpha_f` weights the
/// appearance total-variation term, `lambda_r` pulls the mask toward radial
/// symmetry about its centroid, and `gamma_f`/`gamma_m` couple consecutive
/// segments of a piecewise solve. `admm_rho` is the splitting penalty,
/// `cg_iters` caps the inner linear solver, and `max_iters`/`tol` bound the
/// outer loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FmSolverParams {
    pub lambda: f64,
    pub alpha_f: f64,
    pub lambda_r: f64,
    pub gamma_f: f64,
    pub gamma_m: f64,
    pub admm_rho: f64,
    pub max_iters: usize,
    pub cg_iters: usize,
    pub tol: f64,
}

impl Default for FmSolverParams {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            alpha_f: 5e-4,
            lambda_r: 1e-1,
            gamma_f: 1e-2,
            gamma_m: 1e-2,
            admm_rho: 1e-1,
            max_iters: 100,
            cg_iters: 8,
            tol: 1e-4,
        }
    }
}

impl FmSolverParams {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda", self.lambda),
            ("alpha_f", self.alpha_f),
            ("lambda_r", self.lambda_r),
            ("gamma_f", self.gamma_f),
            ("gamma_m", self.gamma_m),
        ];
        for (name, v) in weights {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if !self.admm_rho.is_finite() || self.admm_rho <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "admm_rho must be positive, got {}",
                self.admm_rho
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if self.cg_iters == 0 {
            return Err(Error::InvalidInput("cg_iters must be at least 1".into()));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// One outer-iteration record of a solver run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationStat {
    pub iteration: usize,
    /// Objective of the feasible (projected) iterate at this step.
    pub objective: f64,
    /// Lowest feasible objective seen so far.
    pub best_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}
