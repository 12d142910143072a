//! Problem model: the constraint-oracle contract, averaged iterates, and
//! certificates shared by all solver components.

use crate::error::{DrfError, Result};
use crate::mirror::MirrorDomain;
use crate::par;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Scenario-function oracle for all `m` constraints of a problem.
///
/// `value(i, r, x)` returns `F^i_r(x)`; `subgradient` writes a subgradient of
/// `F^i_r` at `x` into `out`. Both must be pure functions of their arguments
/// and safe to call from multiple threads.
pub trait ConstraintOracle: Send + Sync {
    fn value(&self, i: usize, r: usize, x: &[f64]) -> f64;

    fn subgradient(&self, i: usize, r: usize, x: &[f64], out: &mut [f64]);

    /// Batched evaluation of `F^i_r(x)` for all `r`. The default loops over
    /// `value`; implementations may override when a vectorized form exists.
    fn values_batch(&self, i: usize, x: &[f64], out: &mut [f64]) {
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = self.value(i, r, x);
        }
    }
}

/// A distributionally robust feasibility problem:
/// `m` constraint oracles over a shared decision domain, with declared
/// Lipschitz and magnitude bounds.
#[derive(Clone)]
pub struct DrfProblem {
    m: usize,
    n: usize,
    d: usize,
    oracle: Arc<dyn ConstraintOracle>,
    lipschitz_g: f64,
    bounds_m: Vec<f64>,
    domain: MirrorDomain,
}

impl std::fmt::Debug for DrfProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DrfProblem")
            .field("m", &self.m)
            .field("n", &self.n)
            .field("d", &self.d)
            .field("lipschitz_g", &self.lipschitz_g)
            .field("bounds_m", &self.bounds_m)
            .field("domain", &self.domain)
            .finish()
    }
}

impl DrfProblem {
    pub fn new(
        m: usize,
        n: usize,
        d: usize,
        oracle: Arc<dyn ConstraintOracle>,
        lipschitz_g: f64,
        bounds_m: Vec<f64>,
        domain: MirrorDomain,
    ) -> Result<Self> {
        if m < 1 {
            return Err(DrfError::InvalidConfig("m must be >= 1".into()));
        }
        if n < 2 {
            return Err(DrfError::InvalidConfig("n must be >= 2".into()));
        }
        if d < 1 {
            return Err(DrfError::InvalidConfig("d must be >= 1".into()));
        }
        if bounds_m.len() != m {
            return Err(DrfError::DimensionMismatch {
                expected: m,
                got: bounds_m.len(),
                context: "bounds_m",
            });
        }
        if !(lipschitz_g >= 0.0) || bounds_m.iter().any(|b| !(*b >= 0.0)) {
            return Err(DrfError::InvalidConfig(
                "G and M^i bounds must be nonnegative".into(),
            ));
        }
        if let Some(dd) = domain.intrinsic_dim() {
            if dd != d {
                return Err(DrfError::DimensionMismatch {
                    expected: dd,
                    got: d,
                    context: "domain dimension",
                });
            }
        }
        Ok(Self {
            m,
            n,
            d,
            oracle,
            lipschitz_g,
            bounds_m,
            domain,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn oracle(&self) -> &dyn ConstraintOracle {
        self.oracle.as_ref()
    }

    pub fn lipschitz_g(&self) -> f64 {
        self.lipschitz_g
    }

    pub fn bound_m(&self, i: usize) -> f64 {
        self.bounds_m[i]
    }

    pub fn max_bound_m(&self) -> f64 {
        self.bounds_m.iter().cloned().fold(0.0, f64::max)
    }

    pub fn domain(&self) -> &MirrorDomain {
        &self.domain
    }

    /// Dense evaluation of `F^i(x)` with the deterministic chunked scheme.
    pub fn eval_dense(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let oracle = self.oracle.as_ref();
        par::map_indexed(self.n, |r| oracle.value(i, r, x))
    }

    /// Full subgradient `sum_r p_r dF^i_r(x)`.
    pub fn weighted_subgradient(&self, i: usize, x: &[f64], p: &[f64]) -> Vec<f64> {
        let oracle = self.oracle.as_ref();
        let d = self.d;
        // per-scenario subgradients accumulated chunk-deterministically per coordinate
        let partials: Vec<Vec<f64>> = par::map_indexed(self.n, |r| {
            let mut g = vec![0.0; d];
            oracle.subgradient(i, r, x, &mut g);
            for v in &mut g {
                *v *= p[r];
            }
            g
        });
        let mut out = vec![0.0; d];
        for g in partials {
            for (o, v) in out.iter_mut().zip(&g) {
                *o += v;
            }
        }
        out
    }
}

/// `phi(x, p) = max_i (p^i)^T F^i(x)`.
pub fn phi(problem: &DrfProblem, x: &[f64], p: &[Vec<f64>]) -> Result<f64> {
    if x.len() != problem.d() {
        return Err(DrfError::DimensionMismatch {
            expected: problem.d(),
            got: x.len(),
            context: "phi decision vector",
        });
    }
    if p.len() != problem.m() {
        return Err(DrfError::DimensionMismatch {
            expected: problem.m(),
            got: p.len(),
            context: "phi distribution list",
        });
    }
    let mut best = f64::NEG_INFINITY;
    for (i, pi) in p.iter().enumerate() {
        if pi.len() != problem.n() {
            return Err(DrfError::DimensionMismatch {
                expected: problem.n(),
                got: pi.len(),
                context: "phi distribution vector",
            });
        }
        let vals = problem.eval_dense(i, x);
        if vals.iter().any(|v| !v.is_finite()) {
            let r = vals.iter().position(|v| !v.is_finite()).unwrap();
            return Err(DrfError::OracleFailure { i, r });
        }
        best = best.max(par::dot(pi, &vals));
    }
    Ok(best)
}

/// Which code path produced a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateSource {
    /// Heuristic early stop on the periodically computed SP gap.
    EarlyStopSpGap,
    /// Exact feasibility test at loop exhaustion.
    ExactTest,
    /// Sampled feasibility test reusing the max-index estimates.
    EfficientTest,
}

/// Outcome of a feasibility run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CertificateKind {
    EpsFeasible { x_bar: Vec<f64> },
    Infeasible { p_bar: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub epsilon: f64,
    pub source: CertificateSource,
}

impl Certificate {
    pub fn is_feasible(&self) -> bool {
        matches!(self.kind, CertificateKind::EpsFeasible { .. })
    }

    pub fn x_bar(&self) -> Option<&[f64]> {
        match &self.kind {
            CertificateKind::EpsFeasible { x_bar } => Some(x_bar),
            _ => None,
        }
    }

    pub fn p_bar(&self) -> Option<&[Vec<f64>]> {
        match &self.kind {
            CertificateKind::Infeasible { p_bar } => Some(p_bar),
            _ => None,
        }
    }
}

/// Incremental theta-weighted averages of the iterate pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningAverage {
    weight_sum: f64,
    avg_x: Vec<f64>,
    avg_p: Vec<Vec<f64>>,
}

impl RunningAverage {
    pub fn new(d: usize, m: usize, n: usize) -> Self {
        Self {
            weight_sum: 0.0,
            avg_x: vec![0.0; d],
            avg_p: vec![vec![0.0; n]; m],
        }
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    pub fn avg_x(&self) -> &[f64] {
        &self.avg_x
    }

    pub fn avg_p(&self) -> &[Vec<f64>] {
        &self.avg_p
    }

    /// Fold in one iterate with weight `theta_t > 0`.
    pub fn update(&mut self, theta_t: f64, x_t: &[f64], p_t: &[Vec<f64>]) -> Result<()> {
        if !(theta_t > 0.0) {
            return Err(DrfError::InvalidArgument(format!(
                "average weight must be positive, got {theta_t}"
            )));
        }
        let new_sum = self.weight_sum + theta_t;
        let frac = theta_t / new_sum;
        for (a, v) in self.avg_x.iter_mut().zip(x_t) {
            *a += frac * (v - *a);
        }
        for (ap, pv) in self.avg_p.iter_mut().zip(p_t) {
            for (a, v) in ap.iter_mut().zip(pv) {
                *a += frac * (v - *a);
            }
        }
        self.weight_sum = new_sum;
        Ok(())
    }
}

/// One entry of a validation report.
#[derive(Debug, Clone)]
pub struct BoundViolation {
    pub kind: &'static str,
    pub constraint: usize,
    pub scenario: usize,
    pub excess: f64,
}

/// Monte-Carlo spot check of the declared `M^i` and `G` bounds.
/// Violations are report entries, not errors.
pub fn validate_problem<R: Rng>(
    problem: &DrfProblem,
    samples: usize,
    rng: &mut R,
) -> Vec<BoundViolation> {
    let mut report = Vec::new();
    let dom = problem.domain();
    let tol = 1e-9;
    for _ in 0..samples {
        let x = dom.sample_member(problem.d(), rng);
        let y = dom.sample_member(problem.d(), rng);
        let i = rng.gen_range(0..problem.m());
        let r = rng.gen_range(0..problem.n());
        let fx = problem.oracle().value(i, r, &x);
        let fy = problem.oracle().value(i, r, &y);
        let mi = problem.bound_m(i);
        if fx.abs() > mi + tol {
            report.push(BoundViolation {
                kind: "magnitude",
                constraint: i,
                scenario: r,
                excess: fx.abs() - mi,
            });
        }
        let dist = {
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            dom.norm(&diff)
        };
        let lip = problem.lipschitz_g() * dist + tol;
        if (fx - fy).abs() > lip {
            report.push(BoundViolation {
                kind: "lipschitz",
                constraint: i,
                scenario: r,
                excess: (fx - fy).abs() - lip,
            });
        }
    }
    report
}
