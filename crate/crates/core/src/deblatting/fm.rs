//! Appearance and mask estimation given blur kernels.
//!
//! `solve_fm_piecewise` fits one appearance/mask pair per exposure segment of
//! a single frame so that the composite `sum_i H_i*F_i + (1 - sum_i H_i*M_i)
//! . B` matches the observed frame, with a template anchor on appearance,
//! total variation on appearance, radial-symmetry pressure on each mask
//! about its own centroid, and an L1 coupling between consecutive segments.
//! `solve_fm` is the single-segment case.
//!
//! The solver is ADMM with three splits: appearance gradients (shrunk toward
//! sparsity), the pixelwise ordering constraint `0 <= F <= M <= 1` (projected
//! exactly), and segment-to-segment differences (shrunk toward agreement).
//! The quadratic step runs a few warm-started conjugate-gradient iterations.
//! Every outer iteration projects the iterate to feasibility, scores it with
//! the full objective, and the best-scoring feasible iterate is returned, so
//! more iterations can only improve the result.

use std::ops::Range;

use crate::deblatting::cg::conjugate_gradient;
use crate::deblatting::circavg::RingIndex;
use crate::deblatting::operators::{grad_adjoint_accumulate, grad_forward, ConvBank};
use crate::deblatting::prox::{project_ordered_pixel, soft_threshold_slice};
use crate::deblatting::{FmSolverParams, IterationStat};
use crate::error::{Error, Result};
use crate::image::{Image, Snapshot};
use crate::kernel::BlurKernel;

/// Output of the single-segment solver.
#[derive(Debug, Clone)]
pub struct FmResult {
    pub snapshot: Snapshot,
    pub converged: bool,
    pub iterations: usize,
    /// Objective value of the returned (feasible) estimate.
    pub objective: f64,
    pub trace: Vec<IterationStat>,
}

/// Output of the piecewise solver: one snapshot per exposure segment.
#[derive(Debug, Clone)]
pub struct PiecewiseResult {
    pub snapshots: Vec<Snapshot>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub trace: Vec<IterationStat>,
}

/// Index arithmetic for the stacked unknown: per segment, three appearance
/// planes then the mask plane, each `sn` values.
#[derive(Clone, Copy)]
struct Layout {
    n: usize,
    sn: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.n * 4 * self.sn
    }

    fn plane(&self, seg: usize, p: usize) -> Range<usize> {
        let start = (seg * 4 + p) * self.sn;
        start..start + self.sn
    }

    fn f_plane(&self, seg: usize, c: usize) -> Range<usize> {
        self.plane(seg, c)
    }

    fn m_plane(&self, seg: usize) -> Range<usize> {
        self.plane(seg, 3)
    }
}

/// The data term's linear operator and its adjoint, with the background
/// folded in.
struct Model {
    sh: usize,
    sw: usize,
    sn: usize,
    bank: ConvBank,
    bg: Vec<Vec<f64>>,
}

impl Model {
    fn new(kernels: &[&BlurKernel], background: &Image) -> Result<Self> {
        let (sh, sw) = background.dims();
        let bank = ConvBank::new(kernels, sh, sw)?;
        let bg = (0..3).map(|c| background.plane(c).to_vec()).collect();
        Ok(Self { sh, sw, sn: sh * sw, bank, bg })
    }

    /// `y_c = sum_i C_i F_ic - B_c . sum_i C_i M_i` for all three channels.
    fn forward(&mut self, v: &[f64], lay: Layout, out: &mut [Vec<f64>]) {
        let m_planes: Vec<&[f64]> = (0..lay.n).map(|i| &v[lay.m_plane(i)]).collect();
        let mut conv_m = vec![0.0; self.sn];
        self.bank.forward_sum(&m_planes, &mut conv_m);
        for c in 0..3 {
            let f_planes: Vec<&[f64]> = (0..lay.n).map(|i| &v[lay.f_plane(i, c)]).collect();
            out[c].resize(self.sn, 0.0);
            self.bank.forward_sum(&f_planes, &mut out[c]);
            for j in 0..self.sn {
                out[c][j] -= self.bg[c][j] * conv_m[j];
            }
        }
    }

    /// Adds `scale * A^T y` into the stacked vector `out`.
    fn adjoint_accumulate(&mut self, y: &[Vec<f64>], lay: Layout, out: &mut [f64], scale: f64) {
        let mut per_seg: Vec<Vec<f64>> = vec![Vec::new(); lay.n];
        for c in 0..3 {
            self.bank.adjoint_each(&y[c], &mut per_seg);
            for i in 0..lay.n {
                for (o, a) in out[lay.f_plane(i, c)].iter_mut().zip(&per_seg[i]) {
                    *o += scale * a;
                }
            }
        }
        // The mask feels every channel through the background.
        let mut s = vec![0.0; self.sn];
        for c in 0..3 {
            for j in 0..self.sn {
                s[j] += self.bg[c][j] * y[c][j];
            }
        }
        self.bank.adjoint_each(&s, &mut per_seg);
        for i in 0..lay.n {
            for (o, a) in out[lay.m_plane(i)].iter_mut().zip(&per_seg[i]) {
                *o -= scale * a;
            }
        }
    }
}

fn plane_centroid(plane: &[f64], h: usize, w: usize) -> (f64, f64) {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sm = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = plane[y * w + x].max(0.0);
            sx += v * x as f64;
            sy += v * y as f64;
            sm += v;
        }
    }
    if sm <= 1e-12 {
        ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0)
    } else {
        (sx / sm, sy / sm)
    }
}

fn build_rings(x: &[f64], lay: Layout, sh: usize, sw: usize) -> Vec<RingIndex> {
    (0..lay.n)
        .map(|i| {
            let (cx, cy) = plane_centroid(&x[lay.m_plane(i)], sh, sw);
            RingIndex::new(sh, sw, cx, cy)
        })
        .collect()
}

/// Projects each pixel of each segment onto `0 <= F <= M <= 1`.
fn project_x(x: &mut [f64], lay: Layout) {
    for i in 0..lay.n {
        let block = i * 4 * lay.sn;
        for j in 0..lay.sn {
            let mut ch = [
                x[block + j],
                x[block + lay.sn + j],
                x[block + 2 * lay.sn + j],
            ];
            let mut m = x[block + 3 * lay.sn + j];
            project_ordered_pixel(&mut ch, &mut m);
            x[block + j] = ch[0];
            x[block + lay.sn + j] = ch[1];
            x[block + 2 * lay.sn + j] = ch[2];
            x[block + 3 * lay.sn + j] = m;
        }
    }
}

fn gradient_len(lay: Layout) -> usize {
    lay.n * 3 * 2 * lay.sn
}

fn chain_len(lay: Layout) -> usize {
    lay.n.saturating_sub(1) * 4 * lay.sn
}

/// Stacked forward differences of every appearance plane.
fn compute_g(v: &[f64], lay: Layout, sh: usize, sw: usize, out: &mut [f64]) {
    for i in 0..lay.n {
        for c in 0..3 {
            let off = (i * 3 + c) * 2 * lay.sn;
            let (gx, gy) = out[off..off + 2 * lay.sn].split_at_mut(lay.sn);
            grad_forward(&v[lay.f_plane(i, c)], sh, sw, gx, gy);
        }
    }
}

fn accumulate_gt(g: &[f64], lay: Layout, sh: usize, sw: usize, scale: f64, out: &mut [f64]) {
    for i in 0..lay.n {
        for c in 0..3 {
            let off = (i * 3 + c) * 2 * lay.sn;
            grad_adjoint_accumulate(
                &g[off..off + lay.sn],
                &g[off + lay.sn..off + 2 * lay.sn],
                sh,
                sw,
                scale,
                &mut out[lay.f_plane(i, c)],
            );
        }
    }
}

/// Differences between consecutive segments, all four planes per link.
fn compute_d(v: &[f64], lay: Layout, out: &mut [f64]) {
    for j in 0..lay.n.saturating_sub(1) {
        for p in 0..4 {
            let a = lay.plane(j, p).start;
            let b = lay.plane(j + 1, p).start;
            let o = (j * 4 + p) * lay.sn;
            for k in 0..lay.sn {
                out[o + k] = v[b + k] - v[a + k];
            }
        }
    }
}

fn accumulate_dt(d: &[f64], lay: Layout, scale: f64, out: &mut [f64]) {
    for j in 0..lay.n.saturating_sub(1) {
        for p in 0..4 {
            let a = lay.plane(j, p).start;
            let b = lay.plane(j + 1, p).start;
            let o = (j * 4 + p) * lay.sn;
            for k in 0..lay.sn {
                out[a + k] -= scale * d[o + k];
                out[b + k] += scale * d[o + k];
            }
        }
    }
}

/// Applies the quadratic step's normal operator.
fn normal_apply(
    model: &mut Model,
    rings: &[RingIndex],
    params: &FmSolverParams,
    lay: Layout,
    v: &[f64],
    out: &mut [f64],
) {
    let (sh, sw, sn) = (model.sh, model.sw, model.sn);
    out.fill(0.0);
    let mut y = vec![Vec::new(), Vec::new(), Vec::new()];
    model.forward(v, lay, &mut y);
    model.adjoint_accumulate(&y, lay, out, 1.0);
    let rho = params.admm_rho;
    let mut gx = vec![0.0; sn];
    let mut gy = vec![0.0; sn];
    let mut tmp = vec![0.0; sn];
    for i in 0..lay.n {
        for c in 0..3 {
            let r = lay.f_plane(i, c);
            for (o, a) in out[r.clone()].iter_mut().zip(&v[r.clone()]) {
                *o += params.lambda * a;
            }
            grad_forward(&v[r.clone()], sh, sw, &mut gx, &mut gy);
            grad_adjoint_accumulate(&gx, &gy, sh, sw, rho, &mut out[r]);
        }
        // Ring binning is an orthogonal projector, so the radial penalty's
        // normal contribution is just its defect.
        let rm = lay.m_plane(i);
        rings[i].defect(&v[rm.clone()], &mut tmp);
        for (o, t) in out[rm].iter_mut().zip(&tmp) {
            *o += params.lambda_r * t;
        }
    }
    for (o, a) in out.iter_mut().zip(v) {
        *o += rho * a;
    }
    let mut d = vec![0.0; chain_len(lay)];
    compute_d(v, lay, &mut d);
    accumulate_dt(&d, lay, rho, out);
}

/// Full objective at a stacked point, rebuilding each mask's ring structure
/// from the point itself so scores are comparable across iterates.
fn objective_vec(
    model: &mut Model,
    data: &[Vec<f64>],
    fhat: &[f64],
    params: &FmSolverParams,
    lay: Layout,
    x: &[f64],
) -> f64 {
    let (sh, sw, sn) = (model.sh, model.sw, model.sn);
    let mut y = vec![Vec::new(), Vec::new(), Vec::new()];
    model.forward(x, lay, &mut y);
    let mut obj = 0.0;
    for c in 0..3 {
        obj += 0.5
            * y[c]
                .iter()
                .zip(&data[c])
                .map(|(a, d)| (a - d) * (a - d))
                .sum::<f64>();
    }
    let mut gx = vec![0.0; sn];
    let mut gy = vec![0.0; sn];
    let mut tmp = vec![0.0; sn];
    for i in 0..lay.n {
        for c in 0..3 {
            let r = lay.f_plane(i, c);
            obj += 0.5
                * params.lambda
                * x[r.clone()]
                    .iter()
                    .zip(&fhat[r.clone()])
                    .map(|(a, t)| (a - t) * (a - t))
                    .sum::<f64>();
            grad_forward(&x[r], sh, sw, &mut gx, &mut gy);
            obj += params.alpha_f
                * (gx.iter().map(|v| v.abs()).sum::<f64>()
                    + gy.iter().map(|v| v.abs()).sum::<f64>());
        }
        let rm = lay.m_plane(i);
        let (cx, cy) = plane_centroid(&x[rm.clone()], sh, sw);
        let ring = RingIndex::new(sh, sw, cx, cy);
        ring.defect(&x[rm], &mut tmp);
        obj += 0.5 * params.lambda_r * tmp.iter().map(|v| v * v).sum::<f64>();
    }
    for j in 0..lay.n.saturating_sub(1) {
        for p in 0..4 {
            let a = lay.plane(j, p).start;
            let b = lay.plane(j + 1, p).start;
            let weight = if p < 3 { params.gamma_f } else { params.gamma_m };
            let mut l1 = 0.0;
            for k in 0..lay.sn {
                l1 += (x[b + k] - x[a + k]).abs();
            }
            obj += weight * l1;
        }
    }
    obj
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn validate_scene(frame: &Image, background: &Image) -> Result<()> {
    if frame.channels() != 3 || background.channels() != 3 {
        return Err(Error::InvalidInput("frame and background must have 3 channels".into()));
    }
    if frame.dims() != background.dims() {
        return Err(Error::DimensionMismatch(format!(
            "frame {:?} vs background {:?}",
            frame.dims(),
            background.dims()
        )));
    }
    Ok(())
}

fn stack_snapshot(x: &mut [f64], lay: Layout, seg: usize, snap: &Snapshot) {
    for c in 0..3 {
        x[lay.f_plane(seg, c)].copy_from_slice(snap.appearance.plane(c));
    }
    x[lay.m_plane(seg)].copy_from_slice(snap.mask.plane(0));
}

/// Estimates one appearance/mask pair per exposure segment of `frame`.
///
/// `kernels` holds one blur kernel per segment on a shared raster; their
/// total mass should be the frame's exposure (one for a full frame). An
/// optional template per segment anchors appearance and seeds the iteration.
pub fn solve_fm_piecewise(
    frame: &Image,
    background: &Image,
    kernels: &[BlurKernel],
    templates: Option<&[Snapshot]>,
    params: &FmSolverParams,
) -> Result<PiecewiseResult> {
    params.validate()?;
    validate_scene(frame, background)?;
    // Without a template the anchor term would pull appearance toward zero,
    // the transparent branch of the appearance/mask ambiguity.
    let mut params = params.clone();
    if templates.is_none() {
        params.lambda = 0.0;
    }
    let params = &params;
    let (sh, sw) = frame.dims();
    let n = kernels.len();
    if n == 0 {
        return Err(Error::InvalidInput("need at least one blur kernel".into()));
    }
    if let Some(ts) = templates {
        if ts.len() != n {
            return Err(Error::InvalidInput(format!(
                "expected {n} templates, got {}",
                ts.len()
            )));
        }
        for t in ts {
            if t.dims() != frame.dims() || t.appearance.channels() != 3 {
                return Err(Error::DimensionMismatch(
                    "template dimensions must match the frame".into(),
                ));
            }
        }
    }
    let lay = Layout { n, sn: sh * sw };
    let krefs: Vec<&BlurKernel> = kernels.iter().collect();
    let mut model = Model::new(&krefs, background)?;
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

    let mut fhat = vec![0.0; lay.len()];
    let mut x = vec![0.0; lay.len()];
    if let Some(ts) = templates {
        for (i, t) in ts.iter().enumerate() {
            stack_snapshot(&mut fhat, lay, i, t);
            stack_snapshot(&mut x, lay, i, t);
        }
    }

    let rho = params.admm_rho;
    let mut z_g = vec![0.0; gradient_len(lay)];
    compute_g(&x, lay, sh, sw, &mut z_g);
    let mut z_box = x.clone();
    project_x(&mut z_box, lay);
    let mut z_d = vec![0.0; chain_len(lay)];
    compute_d(&x, lay, &mut z_d);
    let mut u_g = vec![0.0; z_g.len()];
    let mut u_box = vec![0.0; z_box.len()];
    let mut u_d = vec![0.0; z_d.len()];

    let mut best_x = z_box.clone();
    let mut best_obj = objective_vec(&mut model, &data, &fhat, params, lay, &best_x);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let mut b = vec![0.0; lay.len()];
    let mut gx_full = vec![0.0; z_g.len()];
    let mut dx_full = vec![0.0; z_d.len()];

    for it in 0..params.max_iters {
        iterations = it + 1;
        // Radial structure follows the latest feasible masks.
        let rings = build_rings(&z_box, lay, sh, sw);

        b.fill(0.0);
        model.adjoint_accumulate(&data, lay, &mut b, 1.0);
        for i in 0..n {
            for c in 0..3 {
                let r = lay.f_plane(i, c);
                for (o, t) in b[r.clone()].iter_mut().zip(&fhat[r]) {
                    *o += params.lambda * t;
                }
            }
        }
        let zg_minus: Vec<f64> = z_g.iter().zip(&u_g).map(|(z, u)| z - u).collect();
        accumulate_gt(&zg_minus, lay, sh, sw, rho, &mut b);
        for j in 0..lay.len() {
            b[j] += rho * (z_box[j] - u_box[j]);
        }
        let zd_minus: Vec<f64> = z_d.iter().zip(&u_d).map(|(z, u)| z - u).collect();
        accumulate_dt(&zd_minus, lay, rho, &mut b);

        conjugate_gradient(
            |v, out| normal_apply(&mut model, &rings, params, lay, v, out),
            &b,
            &mut x,
            params.cg_iters,
        );

        compute_g(&x, lay, sh, sw, &mut gx_full);
        compute_d(&x, lay, &mut dx_full);

        let z_g_prev = z_g.clone();
        let z_box_prev = z_box.clone();
        let z_d_prev = z_d.clone();

        for j in 0..z_g.len() {
            z_g[j] = gx_full[j] + u_g[j];
        }
        soft_threshold_slice(&mut z_g, params.alpha_f / rho);
        for j in 0..z_g.len() {
            u_g[j] += gx_full[j] - z_g[j];
        }

        for j in 0..lay.len() {
            z_box[j] = x[j] + u_box[j];
        }
        project_x(&mut z_box, lay);
        for j in 0..lay.len() {
            u_box[j] += x[j] - z_box[j];
        }

        for j in 0..z_d.len() {
            z_d[j] = dx_full[j] + u_d[j];
        }
        for j in 0..lay.n.saturating_sub(1) {
            for p in 0..4 {
                let o = (j * 4 + p) * lay.sn;
                let t = if p < 3 { params.gamma_f } else { params.gamma_m };
                soft_threshold_slice(&mut z_d[o..o + lay.sn], t / rho);
            }
        }
        for j in 0..z_d.len() {
            u_d[j] += dx_full[j] - z_d[j];
        }

        let primal_num = (gx_full
            .iter()
            .zip(&z_g)
            .map(|(a, z)| (a - z) * (a - z))
            .sum::<f64>()
            + x.iter()
                .zip(&z_box)
                .map(|(a, z)| (a - z) * (a - z))
                .sum::<f64>()
            + dx_full
                .iter()
                .zip(&z_d)
                .map(|(a, z)| (a - z) * (a - z))
                .sum::<f64>())
        .sqrt();
        let op_norm = (norm(&gx_full).powi(2) + norm(&x).powi(2) + norm(&dx_full).powi(2)).sqrt();
        let z_norm = (norm(&z_g).powi(2) + norm(&z_box).powi(2) + norm(&z_d).powi(2)).sqrt();
        let primal = primal_num / op_norm.max(z_norm).max(1e-12);

        let mut dual_vec = vec![0.0; lay.len()];
        let dz_g: Vec<f64> = z_g.iter().zip(&z_g_prev).map(|(a, b)| a - b).collect();
        accumulate_gt(&dz_g, lay, sh, sw, rho, &mut dual_vec);
        for j in 0..lay.len() {
            dual_vec[j] += rho * (z_box[j] - z_box_prev[j]);
        }
        let dz_d: Vec<f64> = z_d.iter().zip(&z_d_prev).map(|(a, b)| a - b).collect();
        accumulate_dt(&dz_d, lay, rho, &mut dual_vec);
        let mut dual_den_vec = vec![0.0; lay.len()];
        accumulate_gt(&u_g, lay, sh, sw, rho, &mut dual_den_vec);
        for j in 0..lay.len() {
            dual_den_vec[j] += rho * u_box[j];
        }
        accumulate_dt(&u_d, lay, rho, &mut dual_den_vec);
        let dual = norm(&dual_vec) / norm(&dual_den_vec).max(1e-12);

        let mut cand = x.clone();
        project_x(&mut cand, lay);
        let obj = objective_vec(&mut model, &data, &fhat, params, lay, &cand);
        if obj < best_obj {
            best_obj = obj;
            best_x = cand;
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

    let mut snapshots = Vec::with_capacity(n);
    for i in 0..n {
        let block = i * 4 * lay.sn;
        let appearance = Image::new(sh, sw, 3, best_x[block..block + 3 * lay.sn].to_vec())?;
        let mask = Image::new(sh, sw, 1, best_x[block + 3 * lay.sn..block + 4 * lay.sn].to_vec())?;
        snapshots.push(Snapshot::new(appearance, mask)?);
    }
    Ok(PiecewiseResult {
        snapshots,
        converged,
        iterations,
        objective: best_obj,
        trace,
    })
}

/// Single-segment appearance/mask estimation.
pub fn solve_fm(
    frame: &Image,
    background: &Image,
    kernel: &BlurKernel,
    template: Option<&Snapshot>,
    params: &FmSolverParams,
) -> Result<FmResult> {
    let t = template.map(std::slice::from_ref);
    let mut r = solve_fm_piecewise(frame, background, std::slice::from_ref(kernel), t, params)?;
    let snapshot = r.snapshots.pop().expect("one segment in, one snapshot out");
    Ok(FmResult {
        snapshot,
        converged: r.converged,
        iterations: r.iterations,
        objective: r.objective,
        trace: r.trace,
    })
}

/// Objective of feasible snapshots under the piecewise model; the radial
/// term is measured about each mask's own centroid.
pub fn objective_fm(
    frame: &Image,
    background: &Image,
    kernels: &[BlurKernel],
    templates: Option<&[Snapshot]>,
    snapshots: &[Snapshot],
    params: &FmSolverParams,
) -> Result<f64> {
    params.validate()?;
    validate_scene(frame, background)?;
    let mut params = params.clone();
    if templates.is_none() {
        params.lambda = 0.0;
    }
    let params = &params;
    let n = kernels.len();
    if snapshots.len() != n || n == 0 {
        return Err(Error::InvalidInput(format!(
            "expected {n} snapshots, got {}",
            snapshots.len()
        )));
    }
    for s in snapshots {
        if s.dims() != frame.dims() || s.appearance.channels() != 3 {
            return Err(Error::DimensionMismatch(
                "snapshot dimensions must match the frame".into(),
            ));
        }
    }
    let (sh, sw) = frame.dims();
    let lay = Layout { n, sn: sh * sw };
    let krefs: Vec<&BlurKernel> = kernels.iter().collect();
    let mut model = Model::new(&krefs, background)?;
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
    let mut fhat = vec![0.0; lay.len()];
    if let Some(ts) = templates {
        if ts.len() != n {
            return Err(Error::InvalidInput(format!(
                "expected {n} templates, got {}",
                ts.len()
            )));
        }
        for (i, t) in ts.iter().enumerate() {
            if t.dims() != frame.dims() || t.appearance.channels() != 3 {
                return Err(Error::DimensionMismatch(
                    "template dimensions must match the frame".into(),
                ));
            }
            stack_snapshot(&mut fhat, lay, i, t);
        }
    }
    let mut x = vec![0.0; lay.len()];
    for (i, s) in snapshots.iter().enumerate() {
        stack_snapshot(&mut x, lay, i, s);
    }
    Ok(objective_vec(&mut model, &data, &fhat, params, lay, &x))
}

/// Renders the model's prediction of a frame from per-segment snapshots:
/// `sum_i H_i*F_i + (1 - sum_i H_i*M_i) . B`.
pub fn reconstruct(
    background: &Image,
    kernels: &[BlurKernel],
    snapshots: &[Snapshot],
) -> Result<Image> {
    if kernels.len() != snapshots.len() || kernels.is_empty() {
        return Err(Error::InvalidInput(
            "need one kernel per snapshot, at least one".into(),
        ));
    }
    if background.channels() != 3 {
        return Err(Error::InvalidInput("background must have 3 channels".into()));
    }
    for s in snapshots {
        if s.dims() != background.dims() {
            return Err(Error::DimensionMismatch(
                "snapshot dimensions must match the background".into(),
            ));
        }
    }
    let (sh, sw) = background.dims();
    let sn = sh * sw;
    let krefs: Vec<&BlurKernel> = kernels.iter().collect();
    let mut bank = ConvBank::new(&krefs, sh, sw)?;
    let m_planes: Vec<&[f64]> = snapshots.iter().map(|s| s.mask.plane(0)).collect();
    let mut conv_m = vec![0.0; sn];
    bank.forward_sum(&m_planes, &mut conv_m);
    let mut out = vec![0.0; 3 * sn];
    for c in 0..3 {
        let f_planes: Vec<&[f64]> = snapshots.iter().map(|s| s.appearance.plane(c)).collect();
        let mut conv_f = vec![0.0; sn];
        bank.forward_sum(&f_planes, &mut conv_f);
        let bg = background.plane(c);
        for j in 0..sn {
            out[c * sn + j] = conv_f[j] + (1.0 - conv_m[j]) * bg[j];
        }
    }
    Image::from_data_clamped(sh, sw, 3, out)
}
