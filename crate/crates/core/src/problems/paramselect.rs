//! Personalized parameter selection: allocate one of `L` treatment levels to
//! each of `J` cohorts, maximizing a revenue metric subject to caps on the
//! remaining metrics. Scenario payoffs are linear, `F^i_r(x) = u^i_r . x`.

use crate::error::{DrfError, Result};
use crate::mirror::MirrorDomain;
use crate::problem::{ConstraintOracle, DrfProblem};
use crate::problems::standard_normal;
use crate::rngutil::gen_stream;
use rand::Rng;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct ParamSelectSpec {
    pub j: usize,
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub sigma_sq: f64,
    /// Effect samples, `[i][r]` a d-vector with `d = j * l`.
    pub effects: Vec<Vec<Vec<f64>>>,
    /// Metric thresholds; metric 0 is the `>= c` revenue floor, the rest are
    /// `<= c` caps.
    pub thresholds: Vec<f64>,
}

/// Synthetic generation: per metric `i`, mean entries uniform on `(0, 1/J)`
/// and samples `u^i_r ~ N(mu^i, sigma^2 I)`. Thresholds are set from the
/// value of the uniform allocation so instances are moderately feasible.
pub fn gen_param_select(
    j: usize,
    l: usize,
    m: usize,
    n: usize,
    sigma_sq: f64,
    seed: u64,
) -> ParamSelectSpec {
    assert!(j >= 1 && l >= 1 && m >= 1 && n >= 1);
    let d = j * l;
    let mut rng = gen_stream(seed ^ 0x9a5e);
    let sigma = sigma_sq.sqrt();
    let mut effects = Vec::with_capacity(m);
    let mut thresholds = Vec::with_capacity(m);
    for i in 0..m {
        let mu: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() / j as f64).collect();
        let samples: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                mu.iter()
                    .map(|&mj| mj + sigma * standard_normal(&mut rng))
                    .collect()
            })
            .collect();
        // value of the uniform allocation under the sample mean
        let uniform_value: f64 =
            samples.iter().flat_map(|row| row.iter()).sum::<f64>() / (n as f64 * l as f64);
        thresholds.push(if i == 0 {
            0.9 * uniform_value
        } else {
            1.1 * uniform_value
        });
        effects.push(samples);
    }
    ParamSelectSpec {
        j,
        l,
        m,
        n,
        sigma_sq,
        effects,
        thresholds,
    }
}

struct ParamSelectOracle {
    effects: Vec<Vec<Vec<f64>>>,
    thresholds: Vec<f64>,
}

impl ConstraintOracle for ParamSelectOracle {
    fn value(&self, i: usize, r: usize, x: &[f64]) -> f64 {
        let dot: f64 = self.effects[i][r].iter().zip(x).map(|(a, b)| a * b).sum();
        if i == 0 {
            // revenue floor `inf_p p.F >= c` recast as `sup_p p.(c - F) <= 0`
            self.thresholds[0] - dot
        } else {
            dot - self.thresholds[i]
        }
    }
    fn subgradient(&self, i: usize, r: usize, _x: &[f64], out: &mut [f64]) {
        if i == 0 {
            for (o, v) in out.iter_mut().zip(&self.effects[0][r]) {
                *o = -v;
            }
        } else {
            out.copy_from_slice(&self.effects[i][r]);
        }
    }
}

pub fn build_param_select(spec: &ParamSelectSpec) -> Result<DrfProblem> {
    let d = spec.j * spec.l;
    if spec.effects.len() != spec.m || spec.thresholds.len() != spec.m {
        return Err(DrfError::Data("effects/thresholds do not match m".into()));
    }
    for samples in &spec.effects {
        if samples.len() != spec.n || samples.iter().any(|row| row.len() != d) {
            return Err(DrfError::Data("effect sample dimensions are inconsistent".into()));
        }
    }
    // data-driven bounds: per block, an allocation mixes the block's entries,
    // so the extreme values of u.x are the sums of blockwise minima / maxima
    let mut g = 0.0f64;
    let mut bounds = Vec::with_capacity(spec.m);
    for (i, samples) in spec.effects.iter().enumerate() {
        let mut m_i = 0.0f64;
        for row in samples {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for block in row.chunks(spec.l) {
                hi += block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                lo += block.iter().cloned().fold(f64::INFINITY, f64::min);
            }
            let c = spec.thresholds[i];
            m_i = m_i.max((hi - c).abs()).max((lo - c).abs());
            g = g.max(row.iter().fold(0.0f64, |a, &v| a.max(v.abs())));
        }
        bounds.push(m_i);
    }
    DrfProblem::new(
        spec.m,
        spec.n,
        d,
        Arc::new(ParamSelectOracle {
            effects: spec.effects.clone(),
            thresholds: spec.thresholds.clone(),
        }),
        g,
        bounds,
        MirrorDomain::ProductOfSimplices {
            blocks: spec.j,
            block_len: spec.l,
        },
    )
}
