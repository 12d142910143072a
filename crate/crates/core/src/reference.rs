//! Reference implementations used by the test suites and benches.
//!
//! Everything here favors transparency over speed: exhaustive active-set
//! enumeration for the small-n projection and support problems, Dykstra's
//! alternating projections as a second independent route, and dense O(n)
//! recomputations of the lazily cached distribution state. None of this code
//! is on the solver's hot path.

use crate::ambiguity::Chi2Set;

/// Exact projection of `w` onto the chi-square set by enumerating every
/// candidate active set of floored coordinates and checking the KKT system.
/// Exponential in `n`; intended for n <= 20.
pub fn project_exact(set: &Chi2Set, w: &[f64]) -> Vec<f64> {
    let n = set.n();
    assert!(n <= 20, "active-set enumeration only suitable for small n");
    let f = set.floor();
    let u = 1.0 / n as f64;
    let r_sq = set.radius_sq();
    let tol = 1e-11;

    // Unconstrained-in-divergence candidate: clamp to the floor only.
    let clamped: Vec<f64> = w.iter().map(|&v| v.max(f)).collect();
    let dist_sq: f64 = clamped.iter().map(|&p| (p - u) * (p - u)).sum();
    if dist_sq <= r_sq + tol {
        return clamped;
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << n) {
        let floored = |r: usize| mask >> r & 1 == 1;
        let s_count = mask.count_ones() as usize;
        let q = r_sq - s_count as f64 * (f - u) * (f - u);
        if q <= 0.0 {
            continue;
        }
        let mut w_norm_sq = 0.0;
        for (r, &wr) in w.iter().enumerate() {
            if !floored(r) {
                w_norm_sq += (wr - u) * (wr - u);
            }
        }
        if w_norm_sq <= 0.0 {
            continue;
        }
        let one_plus_lambda = (w_norm_sq / q).sqrt();
        if one_plus_lambda < 1.0 - tol {
            continue; // lambda must be nonnegative
        }
        let lambda = (one_plus_lambda - 1.0).max(0.0);
        let mut p = vec![0.0; n];
        let mut ok = true;
        for (r, &wr) in w.iter().enumerate() {
            if floored(r) {
                p[r] = f;
                // multiplier sign: theta_r = (f - w_r) + lambda (f - u) >= 0
                if (f - wr) + lambda * (f - u) < -1e-9 {
                    ok = false;
                    break;
                }
            } else {
                p[r] = (wr + lambda * u) / one_plus_lambda;
                if p[r] < f - 1e-9 {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let d: f64 = w.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, p));
        }
    }
    match best {
        Some((_, p)) => p,
        // Degenerate inputs (e.g. w constant at the center): fall back to Dykstra.
        None => project_dykstra(set, w, 200_000),
    }
}

/// Dykstra's alternating projections onto ball-around-uniform and the floor
/// box. Independent route used to cross-validate `project_exact`.
pub fn project_dykstra(set: &Chi2Set, w: &[f64], iters: usize) -> Vec<f64> {
    let n = set.n();
    let f = set.floor();
    let u = 1.0 / n as f64;
    let radius = set.radius_sq().sqrt();

    let mut x = w.to_vec();
    let mut p_inc = vec![0.0; n];
    let mut q_inc = vec![0.0; n];
    for _ in 0..iters {
        // ball step
        let y: Vec<f64> = (0..n).map(|r| x[r] + p_inc[r]).collect();
        let dist: f64 = y.iter().map(|&v| (v - u) * (v - u)).sum::<f64>().sqrt();
        let xb: Vec<f64> = if dist <= radius || dist == 0.0 {
            y.clone()
        } else {
            y.iter().map(|&v| u + (v - u) * radius / dist).collect()
        };
        for r in 0..n {
            p_inc[r] = y[r] - xb[r];
        }
        // floor step
        let z: Vec<f64> = (0..n).map(|r| xb[r] + q_inc[r]).collect();
        let xf: Vec<f64> = z.iter().map(|&v| v.max(f)).collect();
        for r in 0..n {
            q_inc[r] = z[r] - xf[r];
        }
        x = xf;
    }
    x
}

/// Exact maximizer of `f^T p` over the chi-square set, again by active-set
/// enumeration. Returns `(value, argmax)`.
pub fn sup_linear_exact(set: &Chi2Set, fv: &[f64]) -> (f64, Vec<f64>) {
    let n = set.n();
    assert!(n <= 20);
    let f = set.floor();
    let u = 1.0 / n as f64;
    let r_sq = set.radius_sq();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |p: &[f64]| {
        if !set.contains(p, 1e-9) {
            return false;
        }
        let v: f64 = p.iter().zip(fv).map(|(a, b)| a * b).sum();
        if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
            best = Some((v, p.to_vec()));
        }
        true
    };

    // lambda = 0 candidate: floor every strictly negative coordinate.
    let p0: Vec<f64> = fv.iter().map(|&c| if c < 0.0 { f } else { u }).collect();
    consider(&p0);

    for mask in 0u32..(1u32 << n) {
        let floored = |r: usize| mask >> r & 1 == 1;
        let s_count = mask.count_ones() as usize;
        let q = r_sq - s_count as f64 * (f - u) * (f - u);
        if q <= 0.0 {
            continue;
        }
        let mut f_norm_sq = 0.0;
        for (r, &c) in fv.iter().enumerate() {
            if !floored(r) {
                f_norm_sq += c * c;
            }
        }
        if f_norm_sq <= 0.0 {
            continue;
        }
        let lambda = (f_norm_sq / q).sqrt();
        let mut p = vec![0.0; n];
        let mut ok = true;
        for (r, &c) in fv.iter().enumerate() {
            if floored(r) {
                p[r] = f;
                if lambda * (f - u) - c < -1e-9 {
                    ok = false; // multiplier would be negative
                    break;
                }
            } else {
                p[r] = u + c / lambda;
                if p[r] < f - 1e-9 {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            consider(&p);
        }
    }
    best.expect("sup_linear_exact found no KKT candidate")
}

/// Dense reference for one bandit-style update: replace one coordinate of the
/// materialized vector and project the result with the exact oracle.
pub fn dense_bmd_reference(set: &Chi2Set, p: &[f64], touched: usize, w_touched: f64) -> Vec<f64> {
    let mut w = p.to_vec();
    w[touched] = w_touched;
    project_exact(set, &w)
}
