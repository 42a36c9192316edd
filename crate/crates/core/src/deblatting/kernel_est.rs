//! Blur kernel estimation given an appearance/mask pair.
//!
//! Minimizes `||H*F + (1 - H*M) . B - I||^2` over kernels constrained to the
//! probability simplex (`H >= 0`, `sum H = 1`), by ADMM with an exact simplex
//! projection, so the returned kernel always satisfies the constraints.

use crate::deblatting::cg::conjugate_gradient;
use crate::deblatting::operators::KernelConv;
use crate::deblatting::prox::project_simplex;
use crate::deblatting::{FmSolverParams, IterationStat};
use crate::error::{Error, Result};
use crate::image::{Image, Snapshot};
use crate::kernel::BlurKernel;

/// Output of the kernel estimator.
#[derive(Debug, Clone)]
pub struct KernelResult {
    pub kernel: BlurKernel,
    pub converged: bool,
    pub iterations: usize,
    /// Half squared data residual of the returned kernel.
    pub objective: f64,
    pub trace: Vec<IterationStat>,
}

struct KernelModel {
    op: KernelConv,
    spec_f: Vec<Vec<rustfft::num_complex::Complex64>>,
    spec_m: Vec<rustfft::num_complex::Complex64>,
    bg: Vec<Vec<f64>>,
    sn: usize,
    kn: usize,
}

impl KernelModel {
    /// `y_c = F_c*h - B_c . (M*h)`.
    fn forward(&mut self, h: &[f64], out: &mut [Vec<f64>]) {
        let mut ym = vec![0.0; self.sn];
        self.op.forward(&self.spec_m, h, &mut ym);
        for c in 0..3 {
            out[c].resize(self.sn, 0.0);
            self.op.forward(&self.spec_f[c], h, &mut out[c]);
            for j in 0..self.sn {
                out[c][j] -= self.bg[c][j] * ym[j];
            }
        }
    }

    fn adjoint(&mut self, y: &[Vec<f64>], out: &mut [f64]) {
        out.fill(0.0);
        for c in 0..3 {
            self.op.adjoint_accumulate(&self.spec_f[c], &y[c], out);
        }
        let mut s = vec![0.0; self.sn];
        for c in 0..3 {
            for j in 0..self.sn {
                s[j] += self.bg[c][j] * y[c][j];
            }
        }
        let mut m_term = vec![0.0; self.kn];
        self.op.adjoint_accumulate(&self.spec_m, &s, &mut m_term);
        for (o, v) in out.iter_mut().zip(&m_term) {
            *o -= v;
        }
    }
}

fn half_residual(model: &mut KernelModel, data: &[Vec<f64>], h: &[f64]) -> f64 {
    let mut y = vec![Vec::new(), Vec::new(), Vec::new()];
    model.forward(h, &mut y);
    let mut obj = 0.0;
    for c in 0..3 {
        obj += 0.5
            * y[c]
                .iter()
                .zip(&data[c])
                .map(|(a, d)| (a - d) * (a - d))
                .sum::<f64>();
    }
    obj
}

/// Estimates the blur kernel that best explains `frame` as `snapshot`
/// composited over `background`.
///
/// The kernel raster is the frame raster trimmed to odd side lengths, so any
/// object path inside the frame is representable.
pub fn solve_h(
    frame: &Image,
    background: &Image,
    snapshot: &Snapshot,
    params: &FmSolverParams,
) -> Result<KernelResult> {
    params.validate()?;
    if frame.channels() != 3 || background.channels() != 3 {
        return Err(Error::InvalidInput("frame and background must have 3 channels".into()));
    }
    if frame.dims() != background.dims() || snapshot.dims() != frame.dims() {
        return Err(Error::DimensionMismatch(
            "frame, background, and snapshot must share dimensions".into(),
        ));
    }
    if snapshot.mask.plane_sum(0) <= 1e-9 {
        return Err(Error::Degenerate("snapshot mask is empty".into()));
    }
    let (sh, sw) = frame.dims();
    let kh = if sh % 2 == 1 { sh } else { sh - 1 };
    let kw = if sw % 2 == 1 { sw } else { sw - 1 };
    let anchor = ((kh - 1) / 2, (kw - 1) / 2);
    let kn = kh * kw;
    let mut op = KernelConv::new(sh, sw, kh, kw, anchor);
    let spec_f = (0..3)
        .map(|c| op.filter_spectrum(snapshot.appearance.plane(c)))
        .collect();
    let spec_m = op.filter_spectrum(snapshot.mask.plane(0));
    let bg = (0..3).map(|c| background.plane(c).to_vec()).collect();
    let mut model = KernelModel { op, spec_f, spec_m, bg, sn: sh * sw, kn };
    let data: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            frame
                .plane(c)
                .iter()
                .zip(background.plane(c))
                .map(|(i, b)| i - b)
                .collect()
        })
        .collect();

    let rho = params.admm_rho;
    let mut x = vec![0.0; kn];
    x[anchor.0 * kw + anchor.1] = 1.0;
    let mut z = x.clone();
    let mut u = vec![0.0; kn];

    let mut best = z.clone();
    let mut best_obj = half_residual(&mut model, &data, &best);
    let mut adj_d = vec![0.0; kn];
    model.adjoint(&data, &mut adj_d);

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..params.max_iters {
        iterations = it + 1;
        let b: Vec<f64> = adj_d
            .iter()
            .zip(z.iter().zip(&u))
            .map(|(a, (zv, uv))| a + rho * (zv - uv))
            .collect();
        conjugate_gradient(
            |v, out| {
                let mut y = vec![Vec::new(), Vec::new(), Vec::new()];
                model.forward(v, &mut y);
                model.adjoint(&y, out);
                for (o, a) in out.iter_mut().zip(v) {
                    *o += rho * a;
                }
            },
            &b,
            &mut x,
            params.cg_iters,
        );
        let z_prev = z.clone();
        for j in 0..kn {
            z[j] = x[j] + u[j];
        }
        project_simplex(&mut z);
        for j in 0..kn {
            u[j] += x[j] - z[j];
        }
        let primal_num: f64 = x.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let xn: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let zn: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let primal = primal_num / xn.max(zn).max(1e-12);
        let dual_num: f64 = z
            .iter()
            .zip(&z_prev)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            * rho;
        let un: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt() * rho;
        let dual = dual_num / un.max(1e-12);

        let obj = half_residual(&mut model, &data, &z);
        if obj < best_obj {
            best_obj = obj;
            best.copy_from_slice(&z);
        }
        trace.push(IterationStat {
            iteration: it,
            objective: obj,
            best_objective: best_obj,
            primal_residual: primal,
            dual_residual: dual,
        });
        if primal <= params.tol && dual <= params.tol {
            converged = true;
            break;
        }
    }

    let mut kernel = BlurKernel::new(kh, kw, best)?;
    if (kernel.sum() - 1.0).abs() > 1e-12 {
        kernel.normalize_to(1.0)?;
    }
    Ok(KernelResult {
        kernel,
        converged,
        iterations,
        objective: best_obj,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deblatting::fm::reconstruct;

    fn disk_snapshot(h: usize, w: usize, cx: f64, cy: f64, r: f64) -> Snapshot {
        let mask = Image::from_fn(h, w, 1, |x, y, _| {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            if d <= r { 1.0 } else { 0.0 }
        })
        .unwrap();
        let appearance = Image::from_fn(h, w, 3, |x, y, c| {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            if d <= r { 0.5 + 0.12 * c as f64 + 0.02 * ((x + y) % 3) as f64 } else { 0.0 }
        })
        .unwrap();
        Snapshot::new(appearance, mask).unwrap()
    }

    fn flat_background(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, 3, |x, _, c| 0.15 + 0.04 * c as f64 + 0.002 * (x % 5) as f64).unwrap()
    }

    #[test]
    fn recovers_two_point_kernel() {
        let (h, w) = (21, 21);
        let snap = disk_snapshot(h, w, 10.0, 10.0, 4.0);
        let background = flat_background(h, w);
        let mut weights = vec![0.0; 21 * 21];
        weights[10 * 21 + 7] = 0.5;
        weights[10 * 21 + 13] = 0.5;
        let truth = BlurKernel::new(21, 21, weights).unwrap();
        let frame = reconstruct(
            &background,
            std::slice::from_ref(&truth),
            std::slice::from_ref(&snap),
        )
        .unwrap();
        let params = FmSolverParams { max_iters: 80, ..FmSolverParams::default() };
        let r = solve_h(&frame, &background, &snap, &params).unwrap();
        let a = r.kernel.weights();
        let b = truth.weights();
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(dot / (na * nb) >= 0.95, "correlation {}", dot / (na * nb));
    }

    #[test]
    fn delta_blur_concentrates_mass_at_the_delta() {
        let (h, w) = (19, 19);
        let snap = disk_snapshot(h, w, 9.0, 9.0, 4.0);
        let background = flat_background(h, w);
        let truth = BlurKernel::delta(19, 19).unwrap();
        let frame = reconstruct(
            &background,
            std::slice::from_ref(&truth),
            std::slice::from_ref(&snap),
        )
        .unwrap();
        let params = FmSolverParams { max_iters: 80, ..FmSolverParams::default() };
        let r = solve_h(&frame, &background, &snap, &params).unwrap();
        let kw = r.kernel.weights();
        let mut near = 0.0;
        for y in 8..=10 {
            for x in 8..=10 {
                near += kw[y * 19 + x];
            }
        }
        assert!(near >= 0.9, "mass near delta {near}");
    }

    #[test]
    fn returned_kernel_is_on_the_simplex() {
        let (h, w) = (15, 15);
        let snap = disk_snapshot(h, w, 7.0, 7.0, 3.0);
        let background = flat_background(h, w);
        // A frame the model cannot explain perfectly still yields a valid
        // kernel.
        let frame = Image::from_fn(h, w, 3, |x, y, c| {
            (0.1 + 0.05 * c as f64 + 0.03 * ((2 * x + y) % 6) as f64).min(1.0)
        })
        .unwrap();
        let params = FmSolverParams { max_iters: 12, ..FmSolverParams::default() };
        let r = solve_h(&frame, &background, &snap, &params).unwrap();
        let sum: f64 = r.kernel.weights().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9);
        assert!(r.kernel.weights().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn empty_mask_is_rejected() {
        let (h, w) = (9, 9);
        let snap = Snapshot::new(
            Image::zeros(h, w, 3).unwrap(),
            Image::zeros(h, w, 1).unwrap(),
        )
        .unwrap();
        let background = flat_background(h, w);
        let frame = flat_background(h, w);
        let err = solve_h(&frame, &background, &snap, &FmSolverParams::default());
        assert!(err.is_err());
    }
}
