//! Proximal and projection building blocks for the ADMM solvers.

/// Scalar soft threshold, the prox of `t * |x|`.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// In-place soft threshold over a slice.
pub fn soft_threshold_slice(values: &mut [f64], t: f64) {
    for v in values.iter_mut() {
        *v = soft_threshold(*v, t);
    }
}

/// Exact Euclidean projection onto the probability simplex
/// `{x : x >= 0, sum x = 1}` by the sort-and-threshold rule.
pub fn project_simplex(values: &mut [f64]) {
    debug_assert!(!values.is_empty());
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if *u > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    for v in values.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

/// Exact Euclidean projection of one pixel's `(appearance channels, mask)`
/// values onto `{0 <= f_c <= m <= 1 for all c}`.
///
/// For fixed mask value m the optimal channels are `clamp(f, 0, m)`; the
/// remaining one-dimensional problem in m is piecewise quadratic with knots
/// at the channel values, solved by scanning the active-set count.
pub fn project_ordered_pixel(channels: &mut [f64], mask: &mut f64) {
    let mut above: [f64; 8] = [0.0; 8];
    let mut n_above = 0;
    for &c in channels.iter() {
        if c > 0.0 {
            above[n_above] = c;
            n_above += 1;
        }
    }
    above[..n_above].sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut best_m = *mask;
    let mut sum_top = 0.0;
    for q in 0..=n_above {
        if q > 0 {
            sum_top += above[q - 1];
        }
        let m_q = (*mask + sum_top) / (1.0 + q as f64);
        let upper = if q == 0 { f64::INFINITY } else { above[q - 1] };
        let lower = if q == n_above { f64::NEG_INFINITY } else { above[q] };
        if m_q <= upper && m_q >= lower {
            best_m = m_q;
            break;
        }
    }
    let m = best_m.clamp(0.0, 1.0);
    for c in channels.iter_mut() {
        *c = c.clamp(0.0, m);
    }
    *mask = m;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(0.75, 0.25), 0.5);
        assert_eq!(soft_threshold(-0.75, 0.25), -0.5);
        assert_eq!(soft_threshold(0.125, 0.25), 0.0);
        assert_eq!(soft_threshold(0.5, 0.0), 0.5);
    }

    #[test]
    fn simplex_known_points() {
        let mut a = [2.0, 0.0];
        project_simplex(&mut a);
        assert_eq!(a, [1.0, 0.0]);
        let mut b = [0.3, 0.3];
        project_simplex(&mut b);
        assert!((b[0] - 0.5).abs() < 1e-12 && (b[1] - 0.5).abs() < 1e-12);
        let mut c = [0.2, 0.5, 0.3];
        project_simplex(&mut c);
        assert!((c[0] - 0.2).abs() < 1e-12, "already feasible point must not move");
    }

    /// Independent simplex oracle: bisection on the threshold of the
    /// monotone map tau -> sum max(v - tau, 0).
    fn simplex_by_bisection(v: &[f64]) -> Vec<f64> {
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        let mut lo = hi - 1.0;
        while v.iter().map(|x| (x - lo).max(0.0)).sum::<f64>() < 1.0 {
            lo -= 1.0;
        }
        let mut hi = hi;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if v.iter().map(|x| (x - mid).max(0.0)).sum::<f64>() > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tau = 0.5 * (lo + hi);
        v.iter().map(|x| (x - tau).max(0.0)).collect()
    }

    proptest! {
        #[test]
        fn simplex_matches_bisection_oracle(v in proptest::collection::vec(-3.0f64..3.0, 1..12)) {
            let mut got = v.clone();
            project_simplex(&mut got);
            let want = simplex_by_bisection(&v);
            let sum: f64 = got.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            prop_assert!(got.iter().all(|x| *x >= 0.0));
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() <= 1e-9, "{g} vs {w}");
            }
        }

        #[test]
        fn ordered_projection_beats_random_feasible_points(
            g in proptest::array::uniform3(-1.5f64..2.5),
            h in -1.5f64..2.5,
            probes in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 32),
        ) {
            let mut f = g;
            let mut m = h;
            project_ordered_pixel(&mut f, &mut m);
            // Feasibility is exact.
            prop_assert!(m >= 0.0 && m <= 1.0);
            for c in f {
                prop_assert!(c >= 0.0 && c <= m);
            }
            let dist = |f: &[f64; 3], m: f64| -> f64 {
                f.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + (m - h) * (m - h)
            };
            let d_proj = dist(&f, m);
            // No random feasible point may be closer to the target.
            for (mp, a, b, c) in probes {
                let fp = [a * mp, b * mp, c * mp];
                prop_assert!(d_proj <= dist(&fp, mp) + 1e-9);
            }
        }

        #[test]
        fn ordered_projection_fixes_feasible_points(
            m in 0.0f64..1.0,
            f in proptest::array::uniform3(0.0f64..1.0),
        ) {
            let mut fv = [f[0] * m, f[1] * m, f[2] * m];
            let want = fv;
            let mut mv = m;
            project_ordered_pixel(&mut fv, &mut mv);
            prop_assert!((mv - m).abs() <= 1e-12);
            for (a, b) in fv.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
