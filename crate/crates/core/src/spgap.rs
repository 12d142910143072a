//! Saddle-point gap evaluation: the closed-form sup over the ambiguity set
//! per constraint, and an approximate inner minimization over the decision
//! domain by projected subgradient.

use crate::ambiguity::Chi2Set;
use crate::error::Result;
use crate::par;
use crate::problem::{phi, DrfProblem};

/// SP-gap components at a candidate pair.
#[derive(Debug, Clone)]
pub struct GapReport {
    pub sup_value: f64,
    pub sup_argmax_constraint: usize,
    /// Best objective value found by the inner minimization; an upper bound
    /// on the true inf, so `gap` overestimates the true gap.
    pub inf_value: f64,
    pub gap: f64,
    pub inf_iterations_used: usize,
    pub phi_at_pair: f64,
}

/// `sup_p phi(x_bar, p)`: independent linear maximizations per constraint.
pub fn sup_over_p(
    problem: &DrfProblem,
    set: &Chi2Set,
    x_bar: &[f64],
) -> Result<(f64, usize, Vec<Vec<f64>>)> {
    let per: Vec<(f64, Vec<f64>)> = {
        let results: Vec<Result<(f64, Vec<f64>)>> = par::map_indexed(problem.m(), |i| {
            let fv = problem.eval_dense(i, x_bar);
            set.sup_linear(&fv)
        });
        let mut out = Vec::with_capacity(problem.m());
        for r in results {
            out.push(r?);
        }
        out
    };
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, (v, _)) in per.iter().enumerate() {
        if *v > best.0 {
            best = (*v, i);
        }
    }
    let maximizers = per.into_iter().map(|(_, p)| p).collect();
    Ok((best.0, best.1, maximizers))
}

/// Approximate `inf_x max_i p_bar^i . F^i(x)` by projected subgradient with
/// step `c / sqrt(k)`, tracking the best visited iterate and the running
/// average. The returned value is achieved by the returned point, hence an
/// upper bound on the true infimum.
pub fn inf_over_x(
    problem: &DrfProblem,
    p_bar: &[Vec<f64>],
    budget: usize,
) -> Result<(f64, Vec<f64>)> {
    let dom = problem.domain();
    let d = problem.d();
    let budget = budget.max(1);

    let objective_and_grad = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let vals: Vec<f64> = par::map_indexed(problem.m(), |i| {
            let fv = problem.eval_dense(i, x);
            par::dot(&p_bar[i], &fv)
        });
        let mut i_star = 0;
        for (i, v) in vals.iter().enumerate().skip(1) {
            if *v > vals[i_star] {
                i_star = i;
            }
        }
        let g = problem.weighted_subgradient(i_star, x, &p_bar[i_star]);
        Ok((vals[i_star], g))
    };

    let mut x = dom.center(d);
    let (v0, g0) = objective_and_grad(&x)?;
    let mut best_val = v0;
    let mut best_x = x.clone();
    // step constant from the Euclidean diameter and a crude gradient scale
    let g_scale = g0.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let c = dom.euclidean_diameter() / g_scale.max(1.0);

    let mut avg = vec![0.0; d];
    for k in 1..=budget {
        let (val, g) = objective_and_grad(&x)?;
        if val < best_val {
            best_val = val;
            best_x = x.clone();
        }
        let step = c / (k as f64).sqrt();
        let moved: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        x = dom.project(&moved);
        for (a, v) in avg.iter_mut().zip(&x) {
            *a += (*v - *a) / k as f64;
        }
    }
    let avg_proj = dom.project(&avg);
    let (avg_val, _) = objective_and_grad(&avg_proj)?;
    if avg_val < best_val {
        best_val = avg_val;
        best_x = avg_proj;
    }
    Ok((best_val, best_x))
}

/// Full gap report at `(x_bar, p_bar)`.
pub fn sp_gap(
    problem: &DrfProblem,
    set: &Chi2Set,
    x_bar: &[f64],
    p_bar: &[Vec<f64>],
    budget: usize,
) -> Result<GapReport> {
    let (sup_value, sup_argmax_constraint, _) = sup_over_p(problem, set, x_bar)?;
    let (inf_value, _) = inf_over_x(problem, p_bar, budget)?;
    let phi_at_pair = phi(problem, x_bar, p_bar)?;
    Ok(GapReport {
        sup_value,
        sup_argmax_constraint,
        inf_value,
        gap: sup_value - inf_value,
        inf_iterations_used: budget,
        phi_at_pair,
    })
}
