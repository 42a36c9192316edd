//! Matrix-free conjugate gradient for the solvers' inner normal equations.

/// Runs at most `max_iters` CG steps on `N x = b` starting from the current
/// `x` (warm start), where `apply` computes `N v` into its output slice.
/// `N` must be symmetric positive semidefinite. Stops early once the residual
/// norm drops below `1e-8 * ||b||`.
pub fn conjugate_gradient<F>(mut apply: F, b: &[f64], x: &mut [f64], max_iters: usize)
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut nx = vec![0.0; n];
    apply(x, &mut nx);
    for i in 0..n {
        r[i] = b[i] - nx[i];
    }
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let stop = 1e-8 * b_norm;
    let mut rs_old: f64 = r.iter().map(|v| v * v).sum();
    if rs_old.sqrt() <= stop {
        return;
    }
    let mut p = r.clone();
    let mut np = vec![0.0; n];
    for _ in 0..max_iters {
        apply(&p, &mut np);
        let denom: f64 = p.iter().zip(&np).map(|(a, b)| a * b).sum();
        if denom <= 0.0 {
            // Numerical loss of positive definiteness; keep the current x.
            break;
        }
        let alpha = rs_old / denom;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * np[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        if rs_new.sqrt() <= stop {
            break;
        }
        let beta = rs_new / rs_old;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs_old = rs_new;
    }
}
