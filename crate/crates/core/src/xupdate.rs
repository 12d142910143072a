//! Decision-variable updates: the approximate max-index procedure, the
//! biased stochastic mirror-descent step built on it, and the deterministic
//! full-gradient baseline step.

use crate::ambiguity::DistState;
use crate::error::{DrfError, Result};
use crate::par;
use crate::problem::DrfProblem;
use crate::rngutil::{substream, StreamKind};


/// Identifies the rng substreams of one solver iteration.
#[derive(Debug, Clone, Copy)]
pub struct StepCtx {
    pub seed: u64,
    pub t: u64,
}

/// Result of the sampled argmax over constraints.
#[derive(Debug, Clone)]
pub struct IndexEstimate {
    /// Estimated maximizing constraint (ties broken by lowest index).
    pub i_hat: usize,
    /// Mass-weighted estimates `(1^T p^i) * mean_k F^i_{s_k}(x)`, one per
    /// constraint. Exact dot products when sampling was exhaustive.
    pub f_hat: Vec<f64>,
    /// True when `K >= n` switched the procedure to exact evaluation.
    pub exhaustive: bool,
    /// Index draws per constraint, retained only on request.
    pub samples_used: Option<Vec<Vec<usize>>>,
}

fn argmax_lowest(f_hat: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in f_hat.iter().enumerate().skip(1) {
        if *v > f_hat[best] {
            best = i;
        }
    }
    best
}

/// Estimate `argmax_i (p^i)^T F^i(x)` from `K` index samples per constraint.
///
/// With `K >= n` sampling is pointless: the dense dot product costs the same,
/// so the estimate becomes exact. Per-constraint work may fan out to worker
/// threads; each constraint draws from its own substream so the result is
/// schedule-independent.
pub fn approx_max_index(
    problem: &DrfProblem,
    x: &[f64],
    p_states: &[DistState],
    k: usize,
    ctx: StepCtx,
) -> Result<IndexEstimate> {
    approx_max_index_impl(problem, x, p_states, k, ctx, false)
}

/// Same as [`approx_max_index`] but retains the drawn indices for audits.
pub fn approx_max_index_retaining(
    problem: &DrfProblem,
    x: &[f64],
    p_states: &[DistState],
    k: usize,
    ctx: StepCtx,
) -> Result<IndexEstimate> {
    approx_max_index_impl(problem, x, p_states, k, ctx, true)
}

fn approx_max_index_impl(
    problem: &DrfProblem,
    x: &[f64],
    p_states: &[DistState],
    k: usize,
    ctx: StepCtx,
    retain: bool,
) -> Result<IndexEstimate> {
    if k == 0 {
        return Err(DrfError::InvalidArgument("sample size K must be >= 1".into()));
    }
    if p_states.len() != problem.m() {
        return Err(DrfError::DimensionMismatch {
            expected: problem.m(),
            got: p_states.len(),
            context: "approx_max_index states",
        });
    }
    let n = problem.n();
    if k >= n {
        // exhaustive mode: exact expectation per constraint
        let f_hat: Vec<f64> = par::map_indexed(problem.m(), |i| {
            let vals = problem.eval_dense(i, x);
            let p = p_states[i].materialize();
            par::dot(&p, &vals)
        });
        return Ok(IndexEstimate {
            i_hat: argmax_lowest(&f_hat),
            f_hat,
            exhaustive: true,
            samples_used: None,
        });
    }

    let per_constraint: Vec<(f64, Option<Vec<usize>>)> = par::map_indexed(problem.m(), |i| {
        let mut rng = substream(ctx.seed, ctx.t, i as u64, StreamKind::MaxIndex);
        let state = &p_states[i];
        let mut acc = 0.0;
        let mut drawn = if retain { Some(Vec::with_capacity(k)) } else { None };
        for _ in 0..k {
            let r = state.sample_index(&mut rng).expect("positive mass");
            acc += problem.oracle().value(i, r, x);
            if let Some(d) = drawn.as_mut() {
                d.push(r);
            }
        }
        (state.total_mass() * acc / k as f64, drawn)
    });
    let f_hat: Vec<f64> = per_constraint.iter().map(|(v, _)| *v).collect();
    let samples_used = if retain {
        Some(per_constraint.into_iter().map(|(_, s)| s.unwrap()).collect())
    } else {
        None
    };
    Ok(IndexEstimate {
        i_hat: argmax_lowest(&f_hat),
        f_hat,
        exhaustive: k >= n,
        samples_used,
    })
}

/// The mass-weighted stochastic subgradient used by the mirror-descent step,
/// exposed separately so tests can enumerate the descent index.
pub fn smd_gradient(
    problem: &DrfProblem,
    i_hat: usize,
    descent_index: usize,
    mass: f64,
    x: &[f64],
) -> Vec<f64> {
    let mut g = vec![0.0; problem.d()];
    problem.oracle().subgradient(i_hat, descent_index, x, &mut g);
    for v in &mut g {
        *v *= mass;
    }
    g
}

/// One biased stochastic mirror-descent step on the decision variable.
///
/// Returns the next iterate together with the index estimate, which the
/// efficient feasibility test re-uses.
pub fn eps_smd_step(
    problem: &DrfProblem,
    x_t: &[f64],
    p_states: &[DistState],
    k: usize,
    step_x: f64,
    ctx: StepCtx,
) -> Result<(Vec<f64>, IndexEstimate)> {
    if !(step_x > 0.0) {
        return Err(DrfError::InvalidArgument(format!(
            "step_x must be positive, got {step_x}"
        )));
    }
    let est = approx_max_index(problem, x_t, p_states, k, ctx)?;
    let mut rng = substream(ctx.seed, ctx.t, 0, StreamKind::DescentIndex);
    let descent_index = p_states[est.i_hat].sample_index(&mut rng)?;
    let g = smd_gradient(
        problem,
        est.i_hat,
        descent_index,
        p_states[est.i_hat].total_mass(),
        x_t,
    );
    let x_next = problem.domain().prox_step(x_t, &g, step_x)?;
    Ok((x_next, est))
}

/// Deterministic full-gradient baseline step: exact argmax constraint, full
/// weighted subgradient, same prox.
pub fn ofo_x_step(
    problem: &DrfProblem,
    x_t: &[f64],
    p_dense: &[Vec<f64>],
    step_x: f64,
) -> Result<(Vec<f64>, usize)> {
    if !(step_x > 0.0) {
        return Err(DrfError::InvalidArgument(format!(
            "step_x must be positive, got {step_x}"
        )));
    }
    let vals: Vec<f64> = par::map_indexed(problem.m(), |i| {
        let fv = problem.eval_dense(i, x_t);
        par::dot(&p_dense[i], &fv)
    });
    let i_star = argmax_lowest(&vals);
    let g = problem.weighted_subgradient(i_star, x_t, &p_dense[i_star]);
    let x_next = problem.domain().prox_step(x_t, &g, step_x)?;
    Ok((x_next, i_star))
}
