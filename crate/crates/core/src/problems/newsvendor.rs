//! Multi-item newsvendor with a CVaR constraint. The decision vector is the
//! order quantity plus the CVaR auxiliary variable as a trailing coordinate.

use crate::error::{DrfError, Result};
use crate::mirror::MirrorDomain;
use crate::problem::{ConstraintOracle, DrfProblem};
use crate::problems::{cholesky, standard_normal};
use crate::rngutil::gen_stream;
use rand::Rng;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct NewsvendorSpec {
    pub d: usize,
    pub n: usize,
    pub cost: Vec<f64>,
    pub retail: Vec<f64>,
    pub salvage: Vec<f64>,
    pub backorder: Vec<f64>,
    /// Demand samples, n x d, clamped at zero.
    pub demand: Vec<Vec<f64>>,
    pub budget: f64,
    pub beta: f64,
    pub cvar_bound: f64,
    pub tau_lo: f64,
    pub tau_hi: f64,
}

/// `L(x, xi) = (c - s).x - (b + r - s).min(x, xi) + b.xi`
pub fn newsvendor_loss(spec: &NewsvendorSpec, x: &[f64], xi: &[f64]) -> f64 {
    let mut acc = 0.0;
    for jj in 0..spec.d {
        let sold = x[jj].min(xi[jj]);
        acc += (spec.cost[jj] - spec.salvage[jj]) * x[jj]
            - (spec.backorder[jj] + spec.retail[jj] - spec.salvage[jj]) * sold
            + spec.backorder[jj] * xi[jj];
    }
    acc
}

fn loss_subgrad_into(spec: &NewsvendorSpec, x: &[f64], xi: &[f64], out: &mut [f64]) {
    for jj in 0..spec.d {
        // d/dx_j min(x_j, xi_j) = 1 when x_j < xi_j, 0 otherwise (ties take 0)
        let slope = if x[jj] < xi[jj] { 1.0 } else { 0.0 };
        out[jj] = (spec.cost[jj] - spec.salvage[jj])
            - (spec.backorder[jj] + spec.retail[jj] - spec.salvage[jj]) * slope;
    }
}

/// Synthetic generator in the usual parameterization: retail 0.5, salvage and
/// backorder at 20% / 25% of retail, costs uniform(0.1, 0.25), demand from a
/// correlated Gaussian with means uniform(0.1, 0.2), budget 1.2 x total mean
/// demand, CVaR level 0.1 and bound calibrated at the mean-demand order.
pub fn gen_newsvendor(d: usize, n: usize, seed: u64) -> NewsvendorSpec {
    assert!(d >= 1 && n >= 2);
    let mut rng = gen_stream(seed ^ 0x9e45);
    let retail = vec![0.5; d];
    let salvage: Vec<f64> = retail.iter().map(|r| 0.2 * r).collect();
    let backorder: Vec<f64> = retail.iter().map(|r| 0.25 * r).collect();
    let cost: Vec<f64> = (0..d).map(|_| 0.1 + 0.15 * rng.gen::<f64>()).collect();
    let mu: Vec<f64> = (0..d).map(|_| 0.1 + 0.1 * rng.gen::<f64>()).collect();
    let sigma: Vec<f64> = mu
        .iter()
        .map(|&m| (0.05 + 0.15 * rng.gen::<f64>()) * m)
        .collect();

    // correlation from a random Gram matrix, rescaled to unit diagonal
    let s_mat: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| standard_normal(&mut rng)).collect())
        .collect();
    let mut gram = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            gram[a][b] = (0..d).map(|k| s_mat[k][a] * s_mat[k][b]).sum();
        }
    }
    let inv_sqrt: Vec<f64> = (0..d).map(|a| 1.0 / gram[a][a].sqrt()).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            let corr = inv_sqrt[a] * gram[a][b] * inv_sqrt[b];
            cov[a][b] = sigma[a] * corr * sigma[b];
        }
    }
    let chol = cholesky(&cov);
    let demand: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
            (0..d)
                .map(|a| {
                    let dev: f64 = (0..=a).map(|k| chol[a][k] * z[k]).sum();
                    (mu[a] + dev).max(0.0)
                })
                .collect()
        })
        .collect();

    let budget = 1.2 * mu.iter().sum::<f64>();
    let beta = 0.1;

    // calibrate the CVaR bound at the mean-demand order quantity
    let mut spec = NewsvendorSpec {
        d,
        n,
        cost,
        retail,
        salvage,
        backorder,
        demand,
        budget,
        beta,
        cvar_bound: 0.0,
        tau_lo: 0.0,
        tau_hi: 1.0,
    };
    let losses: Vec<f64> = spec
        .demand
        .iter()
        .map(|xi| newsvendor_loss(&spec, &mu, xi))
        .collect();
    let mut sorted = losses.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q_idx = (((1.0 - beta) * (n as f64 - 1.0)).round() as usize).min(n - 1);
    let tau = sorted[q_idx];
    spec.cvar_bound = losses
        .iter()
        .map(|l| tau + (l - tau).max(0.0) / beta)
        .sum::<f64>()
        / n as f64;
    let lo = sorted[0];
    let hi = sorted[n - 1];
    let margin = 0.1 * (hi - lo).max(0.1);
    spec.tau_lo = lo - margin;
    spec.tau_hi = hi + margin;
    spec
}

struct NewsvendorOracle {
    spec: NewsvendorSpec,
    threshold: f64,
}

impl ConstraintOracle for NewsvendorOracle {
    fn value(&self, i: usize, r: usize, y: &[f64]) -> f64 {
        let d = self.spec.d;
        let (x, tau) = (&y[..d], y[d]);
        let loss = newsvendor_loss(&self.spec, x, &self.spec.demand[r]);
        if i == 0 {
            loss - self.threshold
        } else {
            tau + (loss - tau).max(0.0) / self.spec.beta - self.spec.cvar_bound
        }
    }

    fn subgradient(&self, i: usize, r: usize, y: &[f64], out: &mut [f64]) {
        let d = self.spec.d;
        let (x, tau) = (&y[..d], y[d]);
        let xi = &self.spec.demand[r];
        if i == 0 {
            loss_subgrad_into(&self.spec, x, xi, &mut out[..d]);
            out[d] = 0.0;
        } else {
            let loss = newsvendor_loss(&self.spec, x, xi);
            // (.)_+ takes subgradient 0 at the kink
            if loss > tau {
                loss_subgrad_into(&self.spec, x, xi, &mut out[..d]);
                for v in out[..d].iter_mut() {
                    *v /= self.spec.beta;
                }
                out[d] = 1.0 - 1.0 / self.spec.beta;
            } else {
                out[..d].fill(0.0);
                out[d] = 1.0;
            }
        }
    }
}

/// Assemble the two-constraint feasibility problem "worst-case expected loss
/// at most `threshold`" subject to the CVaR cap, over the budget box with the
/// auxiliary CVaR coordinate appended.
pub fn build_newsvendor(spec: &NewsvendorSpec, threshold: f64) -> Result<DrfProblem> {
    if spec.demand.len() != spec.n || spec.demand.iter().any(|row| row.len() != spec.d) {
        return Err(DrfError::Data("demand matrix shape mismatch".into()));
    }
    for jj in 0..spec.d {
        if !(spec.cost[jj] < spec.retail[jj]) || !(spec.salvage[jj] < spec.retail[jj]) {
            return Err(DrfError::Data(
                "newsvendor prices must satisfy c < r and s < r".into(),
            ));
        }
    }
    if !(spec.beta > 0.0 && spec.beta <= 1.0) {
        return Err(DrfError::Data("beta must lie in (0, 1]".into()));
    }

    // separable interval bounds for M^i and the gradient scale
    let mut loss_lo = 0.0f64;
    let mut loss_hi = 0.0f64;
    let mut grad_sq = 0.0f64;
    for r in 0..spec.n {
        let xi = &spec.demand[r];
        let mut lo = 0.0;
        let mut hi = 0.0;
        for jj in 0..spec.d {
            let cs = spec.cost[jj] - spec.salvage[jj];
            let brs = spec.backorder[jj] + spec.retail[jj] - spec.salvage[jj];
            let base = spec.backorder[jj] * xi[jj];
            // x_j in [0, budget]: endpoints and the kink x_j = xi_j
            let cands = [
                base,
                cs * spec.budget - brs * xi[jj].min(spec.budget) + base,
                cs * xi[jj].min(spec.budget) - brs * xi[jj].min(spec.budget) + base,
            ];
            lo += cands.iter().cloned().fold(f64::INFINITY, f64::min);
            hi += cands.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        loss_lo = if r == 0 { lo } else { loss_lo.min(lo) };
        loss_hi = if r == 0 { hi } else { loss_hi.max(hi) };
        let g: f64 = (0..spec.d)
            .map(|jj| {
                let cs = spec.cost[jj] - spec.salvage[jj];
                let cb = spec.cost[jj] - spec.retail[jj] - spec.backorder[jj];
                cs.abs().max(cb.abs()).powi(2)
            })
            .sum();
        grad_sq = grad_sq.max(g);
    }
    let m0 = (loss_hi - threshold).abs().max((loss_lo - threshold).abs());
    let cvar_hi = spec.tau_hi.max(spec.tau_lo + (loss_hi - spec.tau_lo).max(0.0) / spec.beta)
        - spec.cvar_bound;
    let cvar_lo = spec.tau_lo - spec.cvar_bound;
    let m1 = cvar_hi.abs().max(cvar_lo.abs());
    let g_loss = grad_sq.sqrt();
    let g_cvar = ((g_loss / spec.beta).powi(2)
        + (1.0f64 - 1.0 / spec.beta).abs().max(1.0).powi(2))
    .sqrt();

    let oracle = NewsvendorOracle {
        spec: spec.clone(),
        threshold,
    };
    DrfProblem::new(
        2,
        spec.n,
        spec.d + 1,
        Arc::new(oracle),
        g_loss.max(g_cvar),
        vec![m0, m1],
        MirrorDomain::BudgetBox {
            cap: spec.budget,
            dim: spec.d,
            aux_lo: spec.tau_lo,
            aux_hi: spec.tau_hi,
        },
    )
}
