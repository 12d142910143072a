//! Logistic regression with covariance-based fairness constraints.
//!
//! Three constraints: per-sample logistic loss at most `loss_rhs`, and the
//! sensitive-attribute covariance proxy bounded by `cov_bound` on both sides.
//! The declared bounds `G = M^i = 0.25` only hold after the feature matrix is
//! rescaled so the decision ball cannot push any margin past ~0.1; the
//! builder checks this analytically and refuses unscaled data.

use crate::error::{DrfError, Result};
use crate::mirror::MirrorDomain;
use crate::problem::{ConstraintOracle, DrfProblem};
use crate::problems::standard_normal;
use crate::rngutil::gen_stream;
use rand::Rng;
use std::sync::Arc;

/// Margin cap: with `|theta^T x| <= 0.1` the per-sample loss stays inside
/// `[ln(1+e^-0.1), ln(1+e^0.1)] ⊂ [0.25, 0.75]`.
const MARGIN_CAP: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct FairnessLrSpec {
    /// n x d feature matrix, already scaled for the bounds.
    pub features: Vec<Vec<f64>>,
    /// Binary responses.
    pub labels: Vec<u8>,
    /// Sensitive attribute per sample.
    pub sensitive: Vec<f64>,
    /// Covariance-proxy bound `c`.
    pub cov_bound: f64,
    /// Right-hand side of the loss constraint.
    pub loss_rhs: f64,
    /// Decision-ball radius; `5 ln d` unless overridden.
    pub radius: f64,
}

impl FairnessLrSpec {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<u8>, sensitive: Vec<f64>) -> Self {
        let d = features.first().map_or(1, Vec::len);
        Self {
            features,
            labels,
            sensitive,
            cov_bound: 0.05,
            loss_rhs: 0.5,
            radius: 5.0 * (d as f64).ln(),
        }
    }
}

/// Globally rescale a feature matrix so every margin over the radius-`R` ball
/// is at most [`MARGIN_CAP`]. Returns the scaled copy.
pub fn scale_features_for_bounds(features: &[Vec<f64>], radius: f64) -> Vec<Vec<f64>> {
    let max_norm = features
        .iter()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    if max_norm == 0.0 {
        return features.to_vec();
    }
    let gamma = MARGIN_CAP / (radius * max_norm);
    features
        .iter()
        .map(|row| row.iter().map(|v| v * gamma).collect())
        .collect()
}

fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u
    } else if u < -30.0 {
        0.0
    } else {
        (1.0 + u.exp()).ln()
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

struct FairnessOracle {
    features: Vec<Vec<f64>>,
    labels: Vec<u8>,
    centered_sensitive: Vec<f64>,
    loss_rhs: f64,
    cov_bound: f64,
}

impl ConstraintOracle for FairnessOracle {
    fn value(&self, i: usize, r: usize, x: &[f64]) -> f64 {
        let u: f64 = self.features[r].iter().zip(x).map(|(a, b)| a * b).sum();
        match i {
            0 => softplus(u) - f64::from(self.labels[r]) * u - self.loss_rhs,
            1 => self.centered_sensitive[r] * u - self.cov_bound,
            _ => -self.centered_sensitive[r] * u - self.cov_bound,
        }
    }

    fn subgradient(&self, i: usize, r: usize, x: &[f64], out: &mut [f64]) {
        let row = &self.features[r];
        let coeff = match i {
            0 => {
                let u: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                sigmoid(u) - f64::from(self.labels[r])
            }
            1 => self.centered_sensitive[r],
            _ => -self.centered_sensitive[r],
        };
        for (o, v) in out.iter_mut().zip(row) {
            *o = coeff * v;
        }
    }
}

/// Assemble the three-constraint problem. Fails with a rescale hint when the
/// analytic bound check rejects the data.
pub fn build_fairness_lr(spec: &FairnessLrSpec) -> Result<DrfProblem> {
    let n = spec.features.len();
    if n < 2 {
        return Err(DrfError::Data("need at least two samples".into()));
    }
    let d = spec.features[0].len();
    if spec.labels.len() != n || spec.sensitive.len() != n {
        return Err(DrfError::Data("feature/label/sensitive lengths differ".into()));
    }
    if spec
        .features
        .iter()
        .flatten()
        .chain(spec.sensitive.iter())
        .any(|v| !v.is_finite())
    {
        return Err(DrfError::NonFinite("fairness data"));
    }

    // analytic bound check on the scaled data
    let max_norm = spec
        .features
        .iter()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    let margin = spec.radius * max_norm;
    let z_bar = spec.sensitive.iter().sum::<f64>() / n as f64;
    let z_dev = spec
        .sensitive
        .iter()
        .map(|z| (z - z_bar).abs())
        .fold(0.0f64, f64::max);
    let loss_hi = softplus(margin) - spec.loss_rhs;
    let loss_lo = spec.loss_rhs - softplus(-margin);
    let fair_hi = z_dev * margin + spec.cov_bound;
    if loss_hi > 0.25 || loss_lo > 0.25 || fair_hi > 0.25 || max_norm > 0.25 || z_dev * max_norm > 0.25
    {
        return Err(DrfError::Data(format!(
            "declared bounds G = M = 0.25 do not hold (max margin {margin:.4}); \
             rescale the features, e.g. with scale_features_for_bounds"
        )));
    }

    let centered: Vec<f64> = spec.sensitive.iter().map(|z| z - z_bar).collect();
    let oracle = FairnessOracle {
        features: spec.features.clone(),
        labels: spec.labels.clone(),
        centered_sensitive: centered,
        loss_rhs: spec.loss_rhs,
        cov_bound: spec.cov_bound,
    };
    DrfProblem::new(
        3,
        n,
        d,
        Arc::new(oracle),
        0.25,
        vec![0.25; 3],
        MirrorDomain::EuclideanBall { radius: spec.radius },
    )
}

/// Synthetic dataset in the same shape as the CSV pipeline's output:
/// continuous features in [0,1], labels from a noisy random hyperplane, and
/// a binary sensitive attribute correlated with the first feature. The
/// returned features are already scaled for the bounds.
pub fn gen_fairness_data(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>, Vec<f64>) {
    let mut rng = gen_stream(seed ^ 0xfa17);
    let w: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let score: f64 = row.iter().zip(&w).map(|(a, b)| (a - 0.5) * b).sum();
        let label = u8::from(score + 0.3 * standard_normal(&mut rng) > 0.0);
        let sens = f64::from(rng.gen::<f64>() < 0.3 + 0.4 * row[0]);
        features.push(row);
        labels.push(label);
        sensitive.push(sens);
    }
    let radius = 5.0 * (d as f64).ln();
    (scale_features_for_bounds(&features, radius), labels, sensitive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::validate_problem;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_weights_give_log_two_loss() {
        let (f, y, z) = gen_fairness_data(50, 4, 3);
        let spec = FairnessLrSpec::new(f, y, z);
        let prob = build_fairness_lr(&spec).unwrap();
        let theta = vec![0.0; 4];
        for r in 0..50 {
            assert_abs_diff_eq!(
                prob.oracle().value(0, r, &theta),
                std::f64::consts::LN_2 - 0.5,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn constant_sensitive_attribute_pins_fairness_values() {
        let (f, y, _) = gen_fairness_data(30, 3, 4);
        let z = vec![1.0; 30];
        let spec = FairnessLrSpec::new(f, y, z);
        let prob = build_fairness_lr(&spec).unwrap();
        let mut rng = crate::rngutil::gen_stream(61);
        let theta = prob.domain().sample_member(3, &mut rng);
        for r in 0..30 {
            assert_abs_diff_eq!(prob.oracle().value(1, r, &theta), -0.05, epsilon = 1e-12);
            assert_abs_diff_eq!(prob.oracle().value(2, r, &theta), -0.05, epsilon = 1e-12);
        }
    }

    #[test]
    fn generated_problem_passes_bound_validation() {
        let (f, y, z) = gen_fairness_data(200, 6, 5);
        let spec = FairnessLrSpec::new(f, y, z);
        let prob = build_fairness_lr(&spec).unwrap();
        let mut rng = crate::rngutil::gen_stream(62);
        let report = validate_problem(&prob, 1000, &mut rng);
        assert!(report.is_empty(), "{report:?}");
    }

    #[test]
    fn unscaled_data_rejected_with_rescale_hint() {
        let (mut f, y, z) = gen_fairness_data(30, 3, 6);
        for row in &mut f {
            for v in row.iter_mut() {
                *v *= 1e3;
            }
        }
        let spec = FairnessLrSpec::new(f, y, z);
        let err = build_fairness_lr(&spec).unwrap_err();
        assert!(err.to_string().contains("rescale"));
    }

    #[test]
    fn loss_gradient_matches_central_differences() {
        let (f, y, z) = gen_fairness_data(20, 4, 7);
        let spec = FairnessLrSpec::new(f, y, z);
        let prob = build_fairness_lr(&spec).unwrap();
        let mut rng = crate::rngutil::gen_stream(63);
        let theta = prob.domain().sample_member(4, &mut rng);
        let mut g = vec![0.0; 4];
        for r in 0..20 {
            prob.oracle().subgradient(0, r, &theta, &mut g);
            for j in 0..4 {
                let h = 1e-6;
                let mut tp = theta.clone();
                tp[j] += h;
                let mut tm = theta.clone();
                tm[j] -= h;
                let fd = (prob.oracle().value(0, r, &tp) - prob.oracle().value(0, r, &tm))
                    / (2.0 * h);
                let rel = (g[j] - fd).abs() / fd.abs().max(1e-9);
                assert!(rel < 1e-5, "grad {} vs fd {}", g[j], fd);
            }
        }
    }
}
