//! Distribution-parameter updates: the bandit mirror-descent step with its
//! 1-sparse importance-weighted gradient estimate, and the deterministic
//! full-gradient ascent baseline.

use crate::ambiguity::{Chi2Set, DistState};
use crate::error::{DrfError, Result};
use crate::problem::DrfProblem;
use rand::Rng;

/// What one bandit step did, for traces and tests.
#[derive(Debug, Clone, Copy)]
pub struct BmdStepRecord {
    pub sampled_index: usize,
    /// The importance-weighted estimator value `(1^T p) F_r(x) / p^(r)`.
    pub estimator_value: f64,
    pub alpha_star: f64,
}

/// One bandit mirror-descent step on constraint `i`'s distribution state.
pub fn bmd_step<R: Rng>(
    problem: &DrfProblem,
    i: usize,
    x_t: &[f64],
    state: &mut DistState,
    step_p: f64,
    rng: &mut R,
) -> Result<BmdStepRecord> {
    let sampled = state.sample_index(rng)?;
    bmd_step_at(problem, i, x_t, state, step_p, sampled)
}

/// The deterministic remainder of [`bmd_step`] once the index is drawn;
/// exposed so tests can force the index and enumerate expectations.
pub fn bmd_step_at(
    problem: &DrfProblem,
    i: usize,
    x_t: &[f64],
    state: &mut DistState,
    step_p: f64,
    sampled: usize,
) -> Result<BmdStepRecord> {
    if !(step_p > 0.0) {
        return Err(DrfError::InvalidArgument(format!(
            "step_p must be positive, got {step_p}"
        )));
    }
    let p_r = state.get(sampled);
    let mass = state.total_mass();
    let f_val = problem.oracle().value(i, sampled, x_t);
    if !f_val.is_finite() {
        return Err(DrfError::OracleFailure { i, r: sampled });
    }
    let estimator = mass * f_val / p_r;
    // ascent on p; a large negative payoff may push the coordinate below
    // zero, where the projection outcome is identical to clamping at zero
    let w_touched = (p_r + step_p * estimator).max(0.0);
    let alpha_star = state.alpha_star(sampled, w_touched);
    state.bmd_affine_update(alpha_star, sampled, w_touched)?;
    Ok(BmdStepRecord {
        sampled_index: sampled,
        estimator_value: estimator,
        alpha_star,
    })
}

/// Deterministic ascent baseline: full gradient `F^i(x_t)` followed by the
/// dense projection.
pub fn ofo_p_step(
    problem: &DrfProblem,
    set: &Chi2Set,
    i: usize,
    x_t: &[f64],
    p_dense: &[f64],
    step_p: f64,
) -> Result<Vec<f64>> {
    if !(step_p > 0.0) {
        return Err(DrfError::InvalidArgument(format!(
            "step_p must be positive, got {step_p}"
        )));
    }
    let fv = problem.eval_dense(i, x_t);
    if fv.iter().any(|v| !v.is_finite()) {
        let r = fv.iter().position(|v| !v.is_finite()).unwrap();
        return Err(DrfError::OracleFailure { i, r });
    }
    let w: Vec<f64> = p_dense
        .iter()
        .zip(&fv)
        .map(|(p, f)| p + step_p * f)
        .collect();
    set.project(&w, crate::ambiguity::TOL_G)
}
