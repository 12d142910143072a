//! The floored chi-square ambiguity set and its distribution iterates.
//!
//! The set is `{ p in R^n : p >= delta/n, D_chi2(p || 1/n) <= rho/n }`, which
//! geometrically is a Euclidean ball of radius `sqrt(2 rho)/n` around the
//! uniform vector intersected with a coordinate floor. Members need not sum
//! to one. `DistState` maintains an iterate of the bandit ascent with lazy
//! affine bookkeeping so that one update costs `O(log n)`.

use crate::error::{DrfError, Result};
use crate::fenwick::FenwickTree;
use crate::par;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dual-variable stopping tolerance for the projection bisection.
pub const TOL_G: f64 = 1e-10;
/// Interval-width stopping tolerance for the alpha bisection.
pub const EPS_ALPHA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Set {
    n: usize,
    rho: f64,
    delta: f64,
}

impl Chi2Set {
    pub fn new(n: usize, rho: f64, delta: f64) -> Result<Self> {
        if n < 2 {
            return Err(DrfError::InvalidConfig(format!("support size n must be >= 2, got {n}")));
        }
        if !(rho > 0.0 && rho <= n as f64 / 2.0) {
            return Err(DrfError::InvalidConfig(format!(
                "rho must lie in (0, n/2]; got rho={rho}, n={n}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(DrfError::InvalidConfig(format!("delta must lie in (0,1), got {delta}")));
        }
        Ok(Self { n, rho, delta })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Coordinate floor `delta / n`.
    pub fn floor(&self) -> f64 {
        self.delta / self.n as f64
    }

    /// Squared Euclidean radius of the divergence ball: `||p - u||^2 <= 2 rho / n^2`.
    pub fn radius_sq(&self) -> f64 {
        2.0 * self.rho / (self.n as f64 * self.n as f64)
    }

    /// Uniform bound on the total mass of a member: `C_g = 1 + sqrt(2 rho / n)`.
    pub fn mass_bound(&self) -> f64 {
        1.0 + (2.0 * self.rho / self.n as f64).sqrt()
    }

    /// Squared-norm diameter bound `D_p = 4 rho / n^2`.
    pub fn diameter(&self) -> f64 {
        4.0 * self.rho / (self.n as f64 * self.n as f64)
    }

    pub fn uniform(&self) -> Vec<f64> {
        vec![1.0 / self.n as f64; self.n]
    }

    /// Chi-square divergence from the uniform reference.
    pub fn divergence(&self, p: &[f64]) -> f64 {
        let n = self.n as f64;
        par::sum_indexed(p.len(), |r| {
            let d = n * p[r] - 1.0;
            d * d / (2.0 * n)
        })
    }

    /// Membership within `tol` on both the floor and the divergence budget.
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        if p.len() != self.n {
            return false;
        }
        let f = self.floor();
        if p.iter().any(|&v| v < f - tol) {
            return false;
        }
        self.divergence(p) <= self.rho / self.n as f64 + tol
    }

    /// `sup { p^T f : p in set }` with a maximizer attached.
    ///
    /// Bisection on the non-increasing dual derivative `g'(lambda)`; exactly
    /// constant inputs take the closed-form mass-extremal member instead.
    pub fn sup_linear(&self, f_vals: &[f64]) -> Result<(f64, Vec<f64>)> {
        if f_vals.len() != self.n {
            return Err(DrfError::DimensionMismatch {
                expected: self.n,
                got: f_vals.len(),
                context: "sup_linear input",
            });
        }
        if f_vals.iter().any(|v| !v.is_finite()) {
            return Err(DrfError::NonFinite("sup_linear input"));
        }
        let n = self.n as f64;
        let u = 1.0 / n;
        let lo_v = f_vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi_v = f_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scale = hi_v.abs().max(lo_v.abs()).max(1.0);
        if hi_v - lo_v <= 1e-15 * scale {
            // constant payoff: the optimum is the member with extremal mass
            let c = 0.5 * (hi_v + lo_v);
            let spread = (2.0 * self.rho / n).sqrt();
            let p = if c > 0.0 {
                vec![(1.0 + spread) * u; self.n]
            } else if c < 0.0 {
                let s = (1.0 - self.delta).min(spread);
                vec![(1.0 - s) * u; self.n]
            } else {
                self.uniform()
            };
            let val = c * p.iter().sum::<f64>();
            return Ok((val, p));
        }

        // sorted payoffs with suffix sums of squares for O(log n) dual evals
        let mut sorted: Vec<f64> = f_vals.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut suffix_sq = vec![0.0; self.n + 1];
        for r in (0..self.n).rev() {
            suffix_sq[r] = suffix_sq[r + 1] + sorted[r] * sorted[r];
        }

        let rho = self.rho;
        let delta = self.delta;
        let gprime = |lambda: f64| -> f64 {
            // I(lambda) = { r : F_r >= -lambda (1-delta)/n }
            let thresh = -lambda * (1.0 - delta) / n;
            let k0 = sorted.partition_point(|&v| v < thresh);
            let in_count = (self.n - k0) as f64;
            0.5 * suffix_sq[k0] / (lambda * lambda) - rho / (n * n)
                + (1.0 - delta) * (1.0 - delta) / (2.0 * n * n) * (n - in_count)
        };

        let mut hi = 1.0;
        let mut grew = 0;
        while gprime(hi) > 0.0 {
            hi *= 2.0;
            grew += 1;
            if grew > 400 {
                return Err(DrfError::NonFinite("sup_linear bracket growth"));
            }
        }
        let mut lo = hi.min(1.0);
        let mut shrank = 0;
        while gprime(lo) <= 0.0 {
            lo *= 0.5;
            shrank += 1;
            if lo < 1e-18 || shrank > 400 {
                // maximizer in the lambda -> 0 limit: floor every strictly
                // negative payoff (only reachable when no payoff is positive)
                let p: Vec<f64> = f_vals
                    .iter()
                    .map(|&c| if c < 0.0 { self.floor() } else { u })
                    .collect();
                let val = par::dot(&p, f_vals);
                return Ok((val, p));
            }
        }
        let mut lambda = 0.5 * (lo + hi);
        for _ in 0..200 {
            lambda = 0.5 * (lo + hi);
            let g = gprime(lambda);
            if g.abs() <= TOL_G || (hi - lo) <= 1e-13 * hi {
                break;
            }
            if g < 0.0 {
                hi = lambda;
            } else {
                lo = lambda;
            }
        }
        let p: Vec<f64> = f_vals
            .iter()
            .map(|&c| (c / lambda + u - self.floor()).max(0.0) + self.floor())
            .collect();
        let val = par::dot(&p, f_vals);
        Ok((val, p))
    }

    /// Bregman (Euclidean) projection of a dense vector onto the set.
    ///
    /// Sorts once, then bisects the concave dual in the reparameterized
    /// variable `alpha = lambda / (1 + lambda)`.
    pub fn project(&self, w: &[f64], tol_g: f64) -> Result<Vec<f64>> {
        if w.len() != self.n {
            return Err(DrfError::DimensionMismatch {
                expected: self.n,
                got: w.len(),
                context: "project input",
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(DrfError::NonFinite("project input"));
        }
        let n = self.n as f64;
        let f = self.floor();
        let rho = self.rho;
        let delta = self.delta;

        let mut sorted = w.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut suffix1 = vec![0.0; self.n + 1];
        let mut suffix2 = vec![0.0; self.n + 1];
        for r in (0..self.n).rev() {
            suffix1[r] = suffix1[r + 1] + sorted[r];
            suffix2[r] = suffix2[r + 1] + sorted[r] * sorted[r];
        }

        // I(alpha) = { r : w_r >= (delta - alpha) / (n (1 - alpha)) }
        let gprime = |alpha: f64| -> f64 {
            let thresh = (delta - alpha) / (n * (1.0 - alpha));
            let k0 = sorted.partition_point(|&v| v < thresh);
            let cnt = (self.n - k0) as f64;
            let om = 1.0 - alpha;
            0.5 * suffix2[k0] - suffix1[k0] / n
                + cnt / (2.0 * n * n)
                + ((n - cnt) * (1.0 - delta) * (1.0 - delta) - 2.0 * rho) / (2.0 * n * n * om * om)
        };

        let alpha = if gprime(0.0) <= 0.0 {
            0.0
        } else {
            let mut lo = 0.0;
            let mut hi = 1.0 - 1e-15;
            let mut mid = 0.5;
            for _ in 0..200 {
                mid = 0.5 * (lo + hi);
                let g = gprime(mid);
                // the gradient exit alone can leave alpha loose enough to move
                // the projected point by ~1e-9; insist on a narrow interval too
                if (g.abs() <= tol_g && (hi - lo) <= 1e-10) || (hi - lo) <= EPS_ALPHA {
                    break;
                }
                if g < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            mid
        };
        Ok(w.iter()
            .map(|&v| ((1.0 - alpha) * v + alpha / n - f).max(0.0) + f)
            .collect())
    }

    /// Random member, for spot checks. Uniform direction scaled into the ball
    /// and re-projected to respect the floor.
    pub fn sample_member<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let u = 1.0 / self.n as f64;
        let radius = self.radius_sq().sqrt();
        let dir: Vec<f64> = (0..self.n)
            .map(|_| {
                let u1: f64 = rng.gen::<f64>().max(1e-300);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let t: f64 = rng.gen::<f64>().powf(1.0 / self.n as f64);
        let w: Vec<f64> = dir
            .iter()
            .map(|&d| u + d / norm * radius * t)
            .collect();
        self.project(&w, TOL_G).expect("finite input")
    }
}

/// How indices are drawn from a `DistState`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SamplerMode {
    /// Fenwick tree with the global affine correction; O(log n) per draw.
    #[default]
    Fenwick,
    /// Cumulative array recomputed from the materialized vector after each
    /// update; O(n) per update. Kept for differential testing.
    CumulativeArray,
}

/// Report of `DistState::audit`: absolute discrepancies between the lazy
/// caches and an O(n) recomputation.
#[derive(Debug, Clone, Copy)]
pub struct AuditReport {
    pub sum1_err: f64,
    pub sum2_err: f64,
    pub prefix_err: f64,
}

/// One distribution iterate with lazy affine bookkeeping.
///
/// The materialized value of coordinate `r` is `mult * stored[r] + add`.
/// `sum1` and `sum2` cache the first two power sums of the materialized
/// vector and are maintained by closed-form recurrences.
#[derive(Debug, Clone)]
pub struct DistState {
    set: Chi2Set,
    stored: Vec<f64>,
    mult: f64,
    add: f64,
    tree: FenwickTree,
    cumulative: Vec<f64>,
    sum1: f64,
    sum2: f64,
    mode: SamplerMode,
}

const REBUILD_THRESHOLD: f64 = 1e-120;

impl DistState {
    pub fn uniform(set: Chi2Set) -> Self {
        Self::from_dense(set, &set.uniform())
    }

    pub fn from_dense(set: Chi2Set, p: &[f64]) -> Self {
        assert_eq!(p.len(), set.n());
        let tree = FenwickTree::from_values(p);
        let sum1 = par::sum_indexed(p.len(), |r| p[r]);
        let sum2 = par::sum_indexed(p.len(), |r| p[r] * p[r]);
        let mut state = Self {
            set,
            stored: p.to_vec(),
            mult: 1.0,
            add: 0.0,
            tree,
            cumulative: Vec::new(),
            sum1,
            sum2,
            mode: SamplerMode::Fenwick,
        };
        state.refresh_cumulative();
        state
    }

    pub fn with_mode(mut self, mode: SamplerMode) -> Self {
        self.mode = mode;
        self.refresh_cumulative();
        self
    }

    pub fn set(&self) -> &Chi2Set {
        &self.set
    }

    pub fn n(&self) -> usize {
        self.set.n()
    }

    /// Materialized value of one coordinate.
    pub fn get(&self, r: usize) -> f64 {
        self.mult * self.stored[r] + self.add
    }

    /// Cached total mass `sum_r p^(r)`.
    pub fn total_mass(&self) -> f64 {
        self.sum1
    }

    /// Cached `sum_r (p^(r))^2`.
    pub fn sum_sq(&self) -> f64 {
        self.sum2
    }

    pub fn materialize(&self) -> Vec<f64> {
        let (a, b) = (self.mult, self.add);
        let stored = &self.stored;
        par::map_indexed(stored.len(), |r| a * stored[r] + b)
    }

    /// Draw an index with probability `p^(r) / sum p`.
    pub fn sample_index<R: Rng>(&self, rng: &mut R) -> Result<usize> {
        if self.sum1 <= 0.0 {
            return Err(DrfError::InvalidArgument(
                "cannot sample from a nonpositive-mass state".into(),
            ));
        }
        let target = rng.gen::<f64>() * self.sum1;
        Ok(match self.mode {
            SamplerMode::Fenwick => self.tree.search(target, self.mult, self.add),
            SamplerMode::CumulativeArray => {
                let idx = self.cumulative.partition_point(|&c| c <= target);
                idx.min(self.n() - 1)
            }
        })
    }

    /// Solve for the dual step `alpha*` of the projection after a 1-sparse
    /// perturbation: coordinate `touched` moved to `w_touched`, all others
    /// already at or above the floor.
    pub fn alpha_star(&self, touched: usize, w_touched: f64) -> f64 {
        let n = self.n() as f64;
        let f = self.set.floor();
        let rho = self.set.rho();
        let delta = self.set.delta();
        let p_old = self.get(touched);

        // power sums with the touched coordinate replaced (full) or removed (excluded)
        let s1_full = self.sum1 - p_old + w_touched;
        let s2_full = self.sum2 - p_old * p_old + w_touched * w_touched;
        let s1_ex = self.sum1 - p_old;
        let s2_ex = self.sum2 - p_old * p_old;

        // g'(alpha) when I(alpha) = [n]
        let a_full = 0.5 * s2_full - s1_full / n + 0.5 / n;
        let full_root = || {
            if a_full >= rho / (n * n) {
                1.0 - (rho / a_full).sqrt() / n
            } else {
                0.0
            }
        };

        if w_touched >= f {
            return full_root();
        }

        // touched coordinate may leave I(alpha); branch on alpha vs alpha_bar
        let alpha_bar = (f - w_touched) / (1.0 / n - w_touched);
        let b_ex = 0.5 * s2_ex - s1_ex / n + (n - 1.0) / (2.0 * n * n);
        let c_ex = rho / (n * n) - (1.0 - delta) * (1.0 - delta) / (2.0 * n * n);
        let gp = |alpha: f64| -> f64 {
            let om = 1.0 - alpha;
            if alpha >= alpha_bar {
                a_full - rho / (n * n * om * om)
            } else {
                b_ex - c_ex / (om * om)
            }
        };

        if gp(0.0) <= 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0 - 1e-15);
        for _ in 0..200 {
            if lo > alpha_bar {
                return full_root();
            }
            if hi < alpha_bar {
                if c_ex <= 0.0 || b_ex <= c_ex {
                    return lo.max(0.0).min(hi);
                }
                return 1.0 - (c_ex / b_ex).sqrt();
            }
            let mid = 0.5 * (lo + hi);
            let g = gp(mid);
            if g.abs() <= TOL_G || (hi - lo) <= EPS_ALPHA {
                return mid;
            }
            if g < 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Apply the post-projection update: global affine map
    /// `p <- (1-alpha) p + alpha/n` off the touched coordinate, touched
    /// coordinate set to its projected value (floored when the dual branch
    /// dictates). Caches update in O(1), tree in O(log n).
    pub fn bmd_affine_update(
        &mut self,
        alpha_star: f64,
        touched: usize,
        touched_value: f64,
    ) -> Result<()> {
        if !(0.0..1.0).contains(&alpha_star) {
            return Err(DrfError::InvalidArgument(format!(
                "alpha_star must lie in [0,1), got {alpha_star}"
            )));
        }
        if touched >= self.n() {
            return Err(DrfError::InvalidArgument(format!(
                "touched index {touched} out of range (n={})",
                self.n()
            )));
        }
        let n = self.n() as f64;
        let f = self.set.floor();
        let a = alpha_star;
        let om = 1.0 - a;
        let p_old = self.get(touched);
        let mapped = om * touched_value + a / n;

        let new_touched;
        if mapped >= f {
            // the touched coordinate follows the same affine map as the rest
            let s1_rep = self.sum1 - p_old + touched_value;
            let s2_rep = self.sum2 - p_old * p_old + touched_value * touched_value;
            self.sum1 = om * s1_rep + a;
            self.sum2 = om * om * s2_rep + 2.0 * a * om * s1_rep / n + a * a / n;
            new_touched = mapped;
        } else {
            // touched coordinate pinned to the floor; map the other n-1
            let s1_ex = self.sum1 - p_old;
            let s2_ex = self.sum2 - p_old * p_old;
            self.sum1 = om * s1_ex + a * (n - 1.0) / n + f;
            self.sum2 =
                om * om * s2_ex + 2.0 * a * om * s1_ex / n + (n - 1.0) * a * a / (n * n) + f * f;
            new_touched = f;
        }

        self.mult *= om;
        self.add = om * self.add + a / n;
        let new_stored = (new_touched - self.add) / self.mult;
        let delta_stored = new_stored - self.stored[touched];
        self.tree.add(touched, delta_stored);
        self.stored[touched] = new_stored;

        if self.mult < REBUILD_THRESHOLD {
            self.rebuild();
        } else if self.mode == SamplerMode::CumulativeArray {
            self.refresh_cumulative();
        }
        Ok(())
    }

    /// Reset the affine map to the identity, rebuilding the tree from the
    /// materialized values. O(n); called automatically when the multiplier
    /// underflows.
    pub fn rebuild(&mut self) {
        let dense = self.materialize();
        self.stored = dense;
        self.mult = 1.0;
        self.add = 0.0;
        self.tree = FenwickTree::from_values(&self.stored);
        self.refresh_cumulative();
    }

    fn refresh_cumulative(&mut self) {
        if self.mode != SamplerMode::CumulativeArray {
            return;
        }
        let mut run = 0.0;
        self.cumulative = self
            .stored
            .iter()
            .map(|&s| {
                run += self.mult * s + self.add;
                run
            })
            .collect();
    }

    /// O(n) recomputation of every cache; returns the discrepancies.
    pub fn audit(&self) -> AuditReport {
        let dense = self.materialize();
        let ref1: f64 = par::sum_indexed(dense.len(), |r| dense[r]);
        let ref2: f64 = par::sum_indexed(dense.len(), |r| dense[r] * dense[r]);
        let mut run = 0.0;
        let mut prefix_err = 0.0f64;
        for (r, &v) in dense.iter().enumerate() {
            run += v;
            let tree_prefix = self.tree.prefix(r, self.mult, self.add);
            prefix_err = prefix_err.max((tree_prefix - run).abs());
        }
        AuditReport {
            sum1_err: (self.sum1 - ref1).abs(),
            sum2_err: (self.sum2 - ref2).abs(),
            prefix_err,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use crate::rngutil::gen_stream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_set<R: Rng>(rng: &mut R, n: usize) -> Chi2Set {
        let rho = 0.05 + rng.gen::<f64>() * (n as f64 / 2.0 - 0.05);
        let delta = 0.05 + rng.gen::<f64>() * 0.9;
        Chi2Set::new(n, rho, delta).unwrap()
    }

    #[test]
    fn uniform_is_member_and_divergence_zero() {
        let set = Chi2Set::new(5, 1.0, 0.5).unwrap();
        let u = set.uniform();
        assert!(set.contains(&u, 0.0));
        assert_abs_diff_eq!(set.divergence(&u), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn contains_hand_computed_divergence() {
        // n=4, rho=1, delta=0.4: divergence of (0.55,0.15,0.15,0.15) is
        // (1/8)(1.2^2 + 3*0.4^2) = 0.24 <= 0.25
        let set = Chi2Set::new(4, 1.0, 0.4).unwrap();
        let p = [0.55, 0.15, 0.15, 0.15];
        assert_abs_diff_eq!(set.divergence(&p), 0.24, epsilon = 1e-12);
        assert!(set.contains(&p, 0.0));
    }

    #[test]
    fn contains_rejects_floor_violation() {
        let set = Chi2Set::new(4, 1.0, 0.4).unwrap();
        let mut p = set.uniform();
        p[2] = set.floor() - 1e-6;
        assert!(!set.contains(&p, 1e-9));
    }

    #[test]
    fn rho_above_half_n_rejected() {
        assert!(Chi2Set::new(4, 2.1, 0.5).is_err());
        assert!(Chi2Set::new(4, 2.0, 0.5).is_ok());
    }

    #[test]
    fn project_member_is_identity() {
        let mut rng = gen_stream(1);
        for _ in 0..50 {
            let n = rng.gen_range(2..=6);
            let set = random_set(&mut rng, n);
            let p = set.sample_member(&mut rng);
            let q = set.project(&p, TOL_G).unwrap();
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-9, "{p:?} -> {q:?}");
            }
        }
    }

    #[test]
    fn project_uniform_is_uniform() {
        let set = Chi2Set::new(7, 1.3, 0.6).unwrap();
        let u = set.uniform();
        let q = set.project(&u, TOL_G).unwrap();
        for (a, b) in u.iter().zip(&q) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn project_matches_exact_oracle_example() {
        let set = Chi2Set::new(3, 0.6, 0.3).unwrap();
        let w = [0.9, 0.05, 0.05];
        let got = set.project(&w, TOL_G).unwrap();
        let want = reference::project_exact(&set, &w);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-5, "{got:?} vs {want:?}");
        }
        assert!(set.contains(&got, 1e-9));
    }

    #[test]
    fn project_idempotent_and_nonexpansive() {
        let mut rng = gen_stream(2);
        for _ in 0..100 {
            let n = rng.gen_range(2..=8);
            let set = random_set(&mut rng, n);
            let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 3.0 - 1.0).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 3.0 - 1.0).collect();
            let pw = set.project(&w, TOL_G).unwrap();
            let pv = set.project(&v, TOL_G).unwrap();
            let ppw = set.project(&pw, TOL_G).unwrap();
            let d1: f64 = pw.iter().zip(&ppw).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(d1 < 1e-9, "projection not idempotent: {d1}");
            let dproj: f64 = pw.iter().zip(&pv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let dorig: f64 = w.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(dproj <= dorig + 1e-9, "expansive: {dproj} > {dorig}");
        }
    }

    #[test]
    fn member_mass_bounded_by_cg() {
        let mut rng = gen_stream(3);
        for _ in 0..200 {
            let n = rng.gen_range(2..=9);
            let set = random_set(&mut rng, n);
            let p = set.sample_member(&mut rng);
            assert!(p.iter().sum::<f64>() <= set.mass_bound() + 1e-9);
        }
    }

    #[test]
    fn sup_linear_zero_payoff() {
        let set = Chi2Set::new(5, 1.0, 0.5).unwrap();
        let (v, p) = set.sup_linear(&[0.0; 5]).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        assert!(set.contains(&p, 1e-9));
    }

    #[test]
    fn sup_linear_beats_random_members() {
        let mut rng = gen_stream(4);
        let set = Chi2Set::new(6, 1.1, 0.4).unwrap();
        let f: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let (v, p_star) = set.sup_linear(&f).unwrap();
        assert!(set.contains(&p_star, 1e-7));
        for _ in 0..1000 {
            let q = set.sample_member(&mut rng);
            let qv: f64 = q.iter().zip(&f).map(|(a, b)| a * b).sum();
            assert!(v >= qv - 1e-7, "{v} < {qv}");
        }
    }

    #[test]
    fn sup_linear_matches_exact_oracle() {
        let mut rng = gen_stream(5);
        for _ in 0..100 {
            let n = rng.gen_range(2..=5);
            let set = random_set(&mut rng, n);
            let f: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let (v, p) = set.sup_linear(&f).unwrap();
            let (v_ref, _) = reference::sup_linear_exact(&set, &f);
            assert!((v - v_ref).abs() < 1e-6, "{v} vs {v_ref} on {f:?}");
            assert!(set.contains(&p, 1e-7));
        }
    }

    #[test]
    fn sup_linear_constant_payoffs() {
        let set = Chi2Set::new(4, 0.8, 0.5).unwrap();
        let (v_pos, p_pos) = set.sup_linear(&[2.0; 4]).unwrap();
        assert!(set.contains(&p_pos, 1e-9));
        assert_abs_diff_eq!(v_pos, 2.0 * set.mass_bound(), epsilon = 1e-9);
        let (v_neg, p_neg) = set.sup_linear(&[-1.0; 4]).unwrap();
        assert!(set.contains(&p_neg, 1e-9));
        let s = (1.0 - set.delta()).min((2.0 * set.rho() / 4.0).sqrt());
        assert_abs_diff_eq!(v_neg, -(1.0 - s), epsilon = 1e-9);
    }

    #[test]
    fn sampler_uniform_frequencies() {
        let set = Chi2Set::new(10, 1.0, 0.5).unwrap();
        let state = DistState::uniform(set);
        let mut rng = gen_stream(6);
        let draws = 100_000;
        let mut counts = vec![0usize; 10];
        for _ in 0..draws {
            counts[state.sample_index(&mut rng).unwrap()] += 1;
        }
        let expect = draws as f64 / 10.0;
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - expect).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn sampler_spiked_frequency() {
        // p = (0.7, floor, ..., floor); parameters chosen so the spike is a member
        let set = Chi2Set::new(4, 2.0, 0.6).unwrap();
        let f = set.floor();
        let mut p = vec![f; 4];
        p[0] = 0.7;
        assert!(set.contains(&p, 1e-9));
        let state = DistState::from_dense(set, &p);
        let mass: f64 = p.iter().sum();
        let prob = 0.7 / mass;
        let mut rng = gen_stream(7);
        let draws = 100_000;
        let mut hit = 0usize;
        for _ in 0..draws {
            if state.sample_index(&mut rng).unwrap() == 0 {
                hit += 1;
            }
        }
        let sigma = (draws as f64 * prob * (1.0 - prob)).sqrt();
        assert!((hit as f64 - draws as f64 * prob).abs() < 4.0 * sigma);
    }

    #[test]
    fn empty_mass_sampling_rejected() {
        let set = Chi2Set::new(4, 1.0, 0.5).unwrap();
        let mut state = DistState::uniform(set);
        state.sum1 = 0.0;
        let mut rng = gen_stream(100);
        assert!(state.sample_index(&mut rng).is_err());
    }

    #[test]
    fn affine_update_identity_is_noop() {
        let set = Chi2Set::new(6, 1.0, 0.5).unwrap();
        let mut rng = gen_stream(8);
        let p = set.sample_member(&mut rng);
        let mut state = DistState::from_dense(set, &p);
        let before = state.materialize();
        let cur = state.get(3);
        state.bmd_affine_update(0.0, 3, cur).unwrap();
        let after = state.materialize();
        for (a, b) in before.iter().zip(&after) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn uniform_is_fixed_point_of_affine_map() {
        let set = Chi2Set::new(5, 1.0, 0.5).unwrap();
        let mut state = DistState::uniform(set);
        let u = 1.0 / 5.0;
        state.bmd_affine_update(0.37, 2, u).unwrap();
        for r in 0..5 {
            assert_abs_diff_eq!(state.get(r), u, epsilon = 1e-14);
        }
    }

    #[test]
    fn affine_update_matches_dense_reference() {
        let mut rng = gen_stream(9);
        for _ in 0..200 {
            let n = rng.gen_range(3..=6);
            let set = random_set(&mut rng, n);
            let p = set.sample_member(&mut rng);
            let mut state = DistState::from_dense(set, &p);
            let touched = rng.gen_range(0..n);
            // random perturbation, including dips below the floor
            let w_touched = (p[touched] + (rng.gen::<f64>() - 0.5) * 0.8).max(0.0);
            let alpha = state.alpha_star(touched, w_touched);
            state.bmd_affine_update(alpha, touched, w_touched).unwrap();
            let got = state.materialize();
            let want = reference::dense_bmd_reference(&set, &p, touched, w_touched);
            for (a, b) in got.iter().zip(&want) {
                assert!(
                    (a - b).abs() < 1e-6,
                    "n={n} touched={touched} w={w_touched}: {got:?} vs {want:?}"
                );
            }
            assert!(set.contains(&got, 1e-8));
        }
    }

    #[test]
    fn audit_clean_after_many_updates() {
        let set = Chi2Set::new(64, 4.0, 0.5).unwrap();
        let mut state = DistState::uniform(set);
        let mut rng = gen_stream(10);
        for _ in 0..10_000 {
            let touched = rng.gen_range(0..64);
            let w = (state.get(touched) + (rng.gen::<f64>() - 0.5) * 0.05).max(0.0);
            let alpha = state.alpha_star(touched, w);
            state.bmd_affine_update(alpha, touched, w).unwrap();
        }
        let report = state.audit();
        assert!(report.sum1_err < 1e-8, "sum1 drift {}", report.sum1_err);
        assert!(report.sum2_err < 1e-8, "sum2 drift {}", report.sum2_err);
        assert!(report.prefix_err < 1e-8, "prefix drift {}", report.prefix_err);
        assert!(set.contains(&state.materialize(), 1e-8));
    }

    #[test]
    fn sampler_modes_agree_elementwise_and_streamwise() {
        let set = Chi2Set::new(40, 2.0, 0.5).unwrap();
        let mut fe = DistState::uniform(set);
        let mut cu = DistState::uniform(set).with_mode(SamplerMode::CumulativeArray);
        let mut rng = gen_stream(11);
        for _ in 0..1000 {
            let touched = rng.gen_range(0..40);
            let w = (fe.get(touched) + (rng.gen::<f64>() - 0.5) * 0.02).max(0.0);
            let alpha = fe.alpha_star(touched, w);
            let alpha2 = cu.alpha_star(touched, w);
            assert_eq!(alpha, alpha2);
            fe.bmd_affine_update(alpha, touched, w).unwrap();
            cu.bmd_affine_update(alpha, touched, w).unwrap();
        }
        // prefix values agree
        let mut run = 0.0;
        for r in 0..40 {
            run += cu.get(r);
            let lhs = fe.tree.prefix(r, fe.mult, fe.add);
            assert!((lhs - run).abs() < 1e-12, "prefix mismatch at {r}");
        }
        // identical index streams under a shared rng
        let mut ra = gen_stream(12);
        let mut rb = gen_stream(12);
        for _ in 0..1000 {
            assert_eq!(
                fe.sample_index(&mut ra).unwrap(),
                cu.sample_index(&mut rb).unwrap()
            );
        }
    }

    #[test]
    fn gprime_sign_monotone_along_bisection() {
        // concavity of the dual in lambda means the sign of g'(alpha) flips
        // at most once; check on a grid for random sparse perturbations
        let mut rng = gen_stream(13);
        for _ in 0..50 {
            let n = rng.gen_range(3..=7);
            let set = random_set(&mut rng, n);
            let p = set.sample_member(&mut rng);
            let state = DistState::from_dense(set, &p);
            let touched = rng.gen_range(0..n);
            let w = (p[touched] + (rng.gen::<f64>() - 0.5) * 0.6).max(0.0);

            let nf = n as f64;
            let f = set.floor();
            let p_old = state.get(touched);
            let s1f = state.sum1 - p_old + w;
            let s2f = state.sum2 - p_old * p_old + w * w;
            let s1e = state.sum1 - p_old;
            let s2e = state.sum2 - p_old * p_old;
            let afull = 0.5 * s2f - s1f / nf + 0.5 / nf;
            let bex = 0.5 * s2e - s1e / nf + (nf - 1.0) / (2.0 * nf * nf);
            let cex = set.rho() / (nf * nf)
                - (1.0 - set.delta()) * (1.0 - set.delta()) / (2.0 * nf * nf);
            let alpha_bar = if w < f { (f - w) / (1.0 / nf - w) } else { 0.0 };
            let gp = |alpha: f64| {
                let om = 1.0 - alpha;
                if w >= f || alpha >= alpha_bar {
                    afull - set.rho() / (nf * nf * om * om)
                } else {
                    bex - cex / (om * om)
                }
            };
            let mut seen_negative = false;
            for k in 0..500 {
                let alpha = k as f64 / 500.0 * (1.0 - 1e-9);
                let g = gp(alpha);
                if seen_negative {
                    assert!(g <= 1e-12, "sign flipped back at alpha={alpha}");
                }
                if g < 0.0 {
                    seen_negative = true;
                }
            }
        }
    }
}
