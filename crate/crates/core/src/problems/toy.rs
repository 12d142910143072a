//! Tiny analytic instances used by tests and the CLI exit-code fixtures.

use crate::error::Result;
use crate::mirror::MirrorDomain;
use crate::problem::{ConstraintOracle, DrfProblem};
use crate::rngutil::gen_stream;
use rand::Rng;
use std::sync::Arc;

struct ConstOracle {
    value: f64,
}

impl ConstraintOracle for ConstOracle {
    fn value(&self, _i: usize, _r: usize, _x: &[f64]) -> f64 {
        self.value
    }
    fn subgradient(&self, _i: usize, _r: usize, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `F^i_r(x) = value` everywhere. With `value > 0` the instance is
/// analytically infeasible; with `value < 0` it is robustly feasible.
pub fn build_const_toy(value: f64, m: usize, n: usize, d: usize) -> Result<DrfProblem> {
    DrfProblem::new(
        m,
        n,
        d,
        Arc::new(ConstOracle { value }),
        0.0,
        vec![value.abs().max(1e-6); m],
        MirrorDomain::EuclideanBall { radius: 1.0 },
    )
}

struct LinearToyOracle {
    // [i][r][d]
    rows: Vec<Vec<Vec<f64>>>,
}

impl ConstraintOracle for LinearToyOracle {
    fn value(&self, i: usize, r: usize, x: &[f64]) -> f64 {
        self.rows[i][r].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - 1.0
    }
    fn subgradient(&self, i: usize, r: usize, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.rows[i][r]);
    }
}

/// Random feasible instance: `F^i_r(x) = a^i_r . x - 1` with `||a|| <= 1`
/// over the unit ball, so `x = 0` satisfies every constraint with slack 1.
pub fn gen_linear_toy(m: usize, n: usize, d: usize, seed: u64) -> Result<DrfProblem> {
    let mut rng = gen_stream(seed ^ 0x70f1);
    let rows: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let mut a: Vec<f64> =
                        (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1.0 {
                        for v in &mut a {
                            *v /= norm;
                        }
                    }
                    a
                })
                .collect()
        })
        .collect();
    DrfProblem::new(
        m,
        n,
        d,
        Arc::new(LinearToyOracle { rows }),
        1.0,
        vec![2.0; m],
        MirrorDomain::EuclideanBall { radius: 1.0 },
    )
}
