//! Mirror-descent domains for the decision variable: distance-generating
//! functions, Bregman prox steps, Euclidean projections, and diameters.

use crate::error::{DrfError, Result};
use rand::Rng;

const MEMBERSHIP_TOL: f64 = 1e-9;

/// Decision domains supported by the solver.
///
/// Each domain fixes a mirror map: negative entropy on (products of)
/// simplices, half squared Euclidean norm elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub enum MirrorDomain {
    /// `{ x : ||x||_2 <= radius }`
    EuclideanBall { radius: f64 },
    /// The probability simplex of the given dimension, entropy mirror map.
    EntropySimplex { dim: usize },
    /// `blocks` independent simplices of length `block_len` laid out
    /// contiguously; dimension is `blocks * block_len`.
    ProductOfSimplices { blocks: usize, block_len: usize },
    /// `{ x >= 0, 1^T x <= cap }` for the first `dim` coordinates plus one
    /// auxiliary coordinate clipped to `[aux_lo, aux_hi]`, Euclidean geometry
    /// on the product.
    BudgetBox {
        cap: f64,
        dim: usize,
        aux_lo: f64,
        aux_hi: f64,
    },
}

impl MirrorDomain {
    /// Ambient dimension when the domain pins it (`None` for the ball, whose
    /// dimension comes from the problem).
    pub fn intrinsic_dim(&self) -> Option<usize> {
        match self {
            MirrorDomain::EuclideanBall { .. } => None,
            MirrorDomain::EntropySimplex { dim } => Some(*dim),
            MirrorDomain::ProductOfSimplices { blocks, block_len } => Some(blocks * block_len),
            MirrorDomain::BudgetBox { dim, .. } => Some(dim + 1),
        }
    }

    /// The psi-diameter `D_x = max B_psi(x, y)` over the domain.
    pub fn diameter(&self) -> f64 {
        match self {
            MirrorDomain::EuclideanBall { radius } => 2.0 * radius * radius,
            MirrorDomain::EntropySimplex { dim } => (*dim as f64).ln(),
            MirrorDomain::ProductOfSimplices { blocks, block_len } => {
                *blocks as f64 * (*block_len as f64).ln()
            }
            MirrorDomain::BudgetBox {
                cap, aux_lo, aux_hi, ..
            } => {
                let aux_span = aux_hi - aux_lo;
                cap * cap + 0.5 * aux_span * aux_span
            }
        }
    }

    /// Upper bound on the Euclidean diameter of the domain (used by the
    /// inner SP-gap minimization, which always runs Euclidean steps).
    pub fn euclidean_diameter(&self) -> f64 {
        match self {
            MirrorDomain::EuclideanBall { radius } => 2.0 * radius,
            MirrorDomain::EntropySimplex { .. } => std::f64::consts::SQRT_2,
            MirrorDomain::ProductOfSimplices { blocks, .. } => {
                (2.0 * *blocks as f64).sqrt()
            }
            MirrorDomain::BudgetBox {
                cap, aux_lo, aux_hi, ..
            } => {
                let aux_span = aux_hi - aux_lo;
                (2.0 * cap * cap + aux_span * aux_span).sqrt()
            }
        }
    }

    /// Canonical starting point.
    pub fn center(&self, ambient_dim: usize) -> Vec<f64> {
        match self {
            MirrorDomain::EuclideanBall { .. } => vec![0.0; ambient_dim],
            MirrorDomain::EntropySimplex { dim } => vec![1.0 / *dim as f64; *dim],
            MirrorDomain::ProductOfSimplices { blocks, block_len } => {
                vec![1.0 / *block_len as f64; blocks * block_len]
            }
            MirrorDomain::BudgetBox {
                cap,
                dim,
                aux_lo,
                aux_hi,
            } => {
                let mut x = vec![cap / (2.0 * *dim as f64); *dim];
                x.push(0.5 * (aux_lo + aux_hi));
                x
            }
        }
    }

    /// Domain norm of a displacement (the norm in which `G` is measured).
    pub fn norm(&self, v: &[f64]) -> f64 {
        match self {
            MirrorDomain::EntropySimplex { .. } | MirrorDomain::ProductOfSimplices { .. } => {
                v.iter().map(|x| x.abs()).sum()
            }
            _ => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    /// Dual norm of a (sub)gradient.
    pub fn dual_norm(&self, g: &[f64]) -> f64 {
        match self {
            MirrorDomain::EntropySimplex { .. } | MirrorDomain::ProductOfSimplices { .. } => {
                g.iter().fold(0.0f64, |m, x| m.max(x.abs()))
            }
            _ => g.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    /// Membership check with tolerance `MEMBERSHIP_TOL`.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.distance_violation(x) <= MEMBERSHIP_TOL
    }

    fn distance_violation(&self, x: &[f64]) -> f64 {
        match self {
            MirrorDomain::EuclideanBall { radius } => {
                (self.norm(x) - radius).max(0.0)
            }
            MirrorDomain::EntropySimplex { dim } => {
                if x.len() != *dim {
                    return f64::INFINITY;
                }
                simplex_violation(x)
            }
            MirrorDomain::ProductOfSimplices { blocks, block_len } => {
                if x.len() != blocks * block_len {
                    return f64::INFINITY;
                }
                x.chunks(*block_len)
                    .map(simplex_violation)
                    .fold(0.0f64, f64::max)
            }
            MirrorDomain::BudgetBox {
                cap,
                dim,
                aux_lo,
                aux_hi,
            } => {
                if x.len() != dim + 1 {
                    return f64::INFINITY;
                }
                let neg = x[..*dim].iter().fold(0.0f64, |m, v| m.max(-v));
                let over = (x[..*dim].iter().sum::<f64>() - cap).max(0.0);
                let tau = x[*dim];
                let tau_out = (aux_lo - tau).max(0.0).max(tau - aux_hi);
                neg.max(over).max(tau_out)
            }
        }
    }

    /// Bregman distance `B_psi(x, y)` of the domain's mirror map.
    pub fn bregman(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            MirrorDomain::EntropySimplex { .. } | MirrorDomain::ProductOfSimplices { .. } => {
                // KL divergence; 0 ln 0 = 0
                x.iter()
                    .zip(y)
                    .map(|(&a, &b)| {
                        if a <= 0.0 {
                            0.0
                        } else {
                            a * (a / b.max(1e-300)).ln()
                        }
                    })
                    .sum()
            }
            _ => 0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
        }
    }

    /// One Bregman prox step: `argmin_y { g^T y + (1/step) B_psi(y, x) }`.
    pub fn prox_step(&self, x: &[f64], g: &[f64], step: f64) -> Result<Vec<f64>> {
        if step <= 0.0 {
            return Err(DrfError::InvalidArgument(format!(
                "prox step must be positive, got {step}"
            )));
        }
        if g.len() != x.len() {
            return Err(DrfError::DimensionMismatch {
                expected: x.len(),
                got: g.len(),
                context: "prox_step gradient",
            });
        }
        if !self.contains(x) {
            return Err(DrfError::OutsideDomain(format!(
                "prox_step anchor violates domain by {:.3e}",
                self.distance_violation(x)
            )));
        }
        match self {
            MirrorDomain::EntropySimplex { .. } => Ok(entropy_prox(x, g, step)),
            MirrorDomain::ProductOfSimplices { block_len, .. } => {
                let mut out = Vec::with_capacity(x.len());
                for (xb, gb) in x.chunks(*block_len).zip(g.chunks(*block_len)) {
                    out.extend_from_slice(&entropy_prox(xb, gb, step));
                }
                Ok(out)
            }
            _ => {
                let moved: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - step * b).collect();
                Ok(self.project(&moved))
            }
        }
    }

    /// Euclidean projection onto the domain.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            MirrorDomain::EuclideanBall { radius } => {
                let n = self.norm(x);
                if n <= *radius || n == 0.0 {
                    x.to_vec()
                } else {
                    x.iter().map(|v| v * radius / n).collect()
                }
            }
            MirrorDomain::EntropySimplex { .. } => project_simplex(x, 1.0),
            MirrorDomain::ProductOfSimplices { block_len, .. } => {
                let mut out = Vec::with_capacity(x.len());
                for xb in x.chunks(*block_len) {
                    out.extend_from_slice(&project_simplex(xb, 1.0));
                }
                out
            }
            MirrorDomain::BudgetBox {
                cap,
                dim,
                aux_lo,
                aux_hi,
            } => {
                let mut out = project_budget(&x[..*dim], *cap);
                out.push(x[*dim].clamp(*aux_lo, *aux_hi));
                out
            }
        }
    }

    /// Uniform-ish random member, for spot checks and validators.
    pub fn sample_member<R: Rng>(&self, ambient_dim: usize, rng: &mut R) -> Vec<f64> {
        match self {
            MirrorDomain::EuclideanBall { radius } => {
                let mut v: Vec<f64> = (0..ambient_dim)
                    .map(|_| standard_normal(rng))
                    .collect();
                let n = self.norm(&v).max(1e-300);
                let u: f64 = rng.gen::<f64>();
                let scale = radius * u.powf(1.0 / ambient_dim as f64) / n;
                for x in &mut v {
                    *x *= scale;
                }
                v
            }
            MirrorDomain::EntropySimplex { dim } => sample_simplex(*dim, rng),
            MirrorDomain::ProductOfSimplices { blocks, block_len } => {
                let mut out = Vec::with_capacity(blocks * block_len);
                for _ in 0..*blocks {
                    out.extend_from_slice(&sample_simplex(*block_len, rng));
                }
                out
            }
            MirrorDomain::BudgetBox {
                cap,
                dim,
                aux_lo,
                aux_hi,
            } => {
                // sample a (dim+1)-simplex and drop the slack coordinate
                let s = sample_simplex(dim + 1, rng);
                let mut out: Vec<f64> = s[..*dim].iter().map(|v| v * cap).collect();
                out.push(aux_lo + (aux_hi - aux_lo) * rng.gen::<f64>());
                out
            }
        }
    }
}

fn simplex_violation(x: &[f64]) -> f64 {
    let neg = x.iter().fold(0.0f64, |m, v| m.max(-v));
    let sum_err = (x.iter().sum::<f64>() - 1.0).abs();
    neg.max(sum_err)
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn sample_simplex<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim)
        .map(|_| -(rng.gen::<f64>().max(1e-300)).ln())
        .collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

/// Multiplicative-weights closed form of the entropy prox.
/// Subtracts the max exponent before exponentiation to avoid underflow.
fn entropy_prox(x: &[f64], g: &[f64], step: f64) -> Vec<f64> {
    let exps: Vec<f64> = g.iter().map(|gi| -step * gi).collect();
    let m = exps.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut out: Vec<f64> = x
        .iter()
        .zip(&exps)
        .map(|(&xi, &e)| xi * (e - m).exp())
        .collect();
    let s: f64 = out.iter().sum();
    let s = s.max(1e-300);
    for v in &mut out {
        *v = (*v / s).max(1e-300);
    }
    // renormalize once more after flooring
    let s2: f64 = out.iter().sum();
    for v in &mut out {
        *v /= s2;
    }
    out
}

/// Euclidean projection onto the simplex `{x >= 0, 1^T x = z}` (Duchi et al.).
pub fn project_simplex(x: &[f64], z: f64) -> Vec<f64> {
    let mut u = x.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cssv = 0.0;
    let mut rho = 0usize;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cssv += ui;
        let t = (cssv - z) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            rho = i + 1;
            theta = t;
        }
    }
    if rho == 0 {
        // all mass on the largest coordinate
        let (mi, _) = x
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .unwrap();
        let mut out = vec![0.0; x.len()];
        out[mi] = z;
        return out;
    }
    x.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Euclidean projection onto `{x >= 0, 1^T x <= cap}`.
pub fn project_budget(x: &[f64], cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= cap {
        clipped
    } else {
        project_simplex(x, cap)
    }
}
