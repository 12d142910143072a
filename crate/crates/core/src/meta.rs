//! The end-to-end feasibility solver: iteration planning, the alternating
//! update loop with optional SP-gap early termination, the exact and sampled
//! feasibility tests, warm starts, and the binary-search optimization driver.

use crate::ambiguity::{Chi2Set, DistState, SamplerMode};
use crate::error::{DrfError, Result};
use crate::problem::{
    phi, Certificate, CertificateKind, CertificateSource, DrfProblem, RunningAverage,
};
use crate::pupdate::{bmd_step_at, ofo_p_step};
use crate::rngutil::{substream, StreamKind};
use crate::spgap::sp_gap;
use crate::xupdate::{approx_max_index, eps_smd_step, ofo_x_step, StepCtx};
use crate::par;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Per-iteration sample size policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KPolicy {
    Fixed(usize),
    /// Hoeffding-based size for the planned horizon.
    AutoHoeffding,
    /// Bennett-based size for a known variance bound.
    AutoBennett(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Stochastic updates (bandit p-steps, sampled x-steps).
    Sofo,
    /// Deterministic full-gradient baseline.
    Ofo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeasibilityTest {
    Exact,
    Efficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    /// Approximation-condition share `C_K` of the tolerance.
    pub c_k: f64,
    pub nu0: f64,
    pub nu1: f64,
    /// Fixed confidence parameter; default `max(1, ln(4m/nu0))`.
    pub omega_override: Option<f64>,
    /// Practical override `C_s` replacing `w(Omega) = 3 sqrt(Omega)`.
    pub w_scale_override: Option<f64>,
    /// Override for the mass bound `C_g` entering step sizes and planning.
    pub c_g_override: Option<f64>,
    pub k: KPolicy,
    pub mode: Mode,
    /// Compute the SP gap (and test the early-stop branch) every this many
    /// iterations.
    pub sp_gap_every: Option<usize>,
    /// Cap the loop regardless of the planned horizon.
    pub max_iters_override: Option<usize>,
    pub feasibility_test: FeasibilityTest,
    pub seed: u64,
    /// Iteration budget of the inner minimization inside SP-gap evaluations.
    pub inner_min_budget: usize,
    pub sampler: SamplerMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            c_k: 0.05,
            nu0: 0.05,
            nu1: 0.05,
            omega_override: None,
            w_scale_override: None,
            c_g_override: None,
            k: KPolicy::Fixed(100),
            mode: Mode::Sofo,
            sp_gap_every: None,
            max_iters_override: None,
            feasibility_test: FeasibilityTest::Exact,
            seed: 0,
            inner_min_budget: 2000,
            sampler: SamplerMode::Fenwick,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(DrfError::InvalidConfig("epsilon must be positive".into()));
        }
        if !(self.c_k > 0.0 && self.c_k < 0.5) {
            return Err(DrfError::InvalidConfig(format!(
                "c_k must lie in (0, 1/2), got {}",
                self.c_k
            )));
        }
        for (name, v) in [("nu0", self.nu0), ("nu1", self.nu1)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(DrfError::InvalidConfig(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if self.feasibility_test == FeasibilityTest::Efficient {
            if self.mode == Mode::Ofo {
                return Err(DrfError::InvalidConfig(
                    "the efficient feasibility test needs the sampled estimates of sofo mode"
                        .into(),
                ));
            }
            if self.c_k >= 1.0 / 3.0 {
                return Err(DrfError::InvalidConfig(format!(
                    "the efficient feasibility test requires c_k < 1/3, got {}",
                    self.c_k
                )));
            }
        }
        if let KPolicy::Fixed(k) = self.k {
            if k == 0 {
                return Err(DrfError::InvalidConfig("k must be >= 1".into()));
            }
        }
        if let KPolicy::AutoBennett(s) = self.k {
            if !(s > 0.0) {
                return Err(DrfError::InvalidConfig("bennett variance must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Planned iteration counts, step constants, and certificate thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Horizon for the exact-test inequality.
    pub t_exact: usize,
    /// Horizon for the efficient-test inequality.
    pub t_tilde: usize,
    /// Iterations this run will actually perform.
    pub horizon: usize,
    /// Resolved per-iteration sample size.
    pub k: usize,
    pub omega: f64,
    /// `w(Omega)` (or its practical override).
    pub w_omega: f64,
    pub c_g: f64,
    pub c_x: f64,
    /// Per-constraint ascent step constants (they scale with `1/M^i`).
    pub c_p: Vec<f64>,
    pub kappa_bullet: f64,
    pub kappa_circ: f64,
    /// `sum_{t=1..horizon} 1/sqrt(t)`, the weight normalizer.
    pub theta_norm: f64,
}

impl Schedule {
    /// Normalized averaging weight of iterate `t` (1-based).
    pub fn theta(&self, t: usize) -> f64 {
        theta_raw(t) / self.theta_norm
    }
}

fn theta_raw(t: usize) -> f64 {
    1.0 / (t as f64).sqrt()
}

// zeta(1/2), the constant term of the Euler-Maclaurin expansion below
const ZETA_HALF: f64 = -1.460_354_508_809_586_8;

fn theta_norm_up_to(t: usize) -> f64 {
    if t <= 10_000_000 {
        (1..=t).map(theta_raw).sum()
    } else {
        // sum_{s<=T} s^{-1/2} = 2 sqrt(T) + zeta(1/2) + 1/(2 sqrt(T)) - ...
        let tf = t as f64;
        2.0 * tf.sqrt() + ZETA_HALF + 0.5 / tf.sqrt() - 1.0 / (24.0 * tf.powf(1.5))
    }
}

/// `R_x(T) = C_g G ln(T) sqrt(2 D_x) / sqrt(T)`
fn regret_x(c_g: f64, g: f64, d_x: f64, t: f64) -> f64 {
    c_g * g * t.ln() * (2.0 * d_x).sqrt() / t.sqrt()
}

/// `R_p^i(T) = 2 C_g M^i ln(T) sqrt(2 rho) / (delta sqrt(T))`
fn regret_p(c_g: f64, m_i: f64, rho: f64, delta: f64, t: f64) -> f64 {
    2.0 * c_g * m_i * t.ln() * (2.0 * rho).sqrt() / (delta * t.sqrt())
}

fn smallest_t_satisfying(bound: impl Fn(f64) -> f64, rhs: f64) -> Result<usize> {
    // bound(T) is decreasing for T >= 8
    if bound(8.0) <= rhs {
        return Ok(8);
    }
    let mut hi = 8u64;
    loop {
        hi = hi.saturating_mul(2);
        if hi > 1 << 62 {
            return Err(DrfError::InvalidConfig(
                "planned iteration count overflows; loosen epsilon or the overrides".into(),
            ));
        }
        if bound(hi as f64) <= rhs {
            break;
        }
    }
    let mut lo = hi / 2; // fails
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if bound(mid as f64) <= rhs {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi as usize)
}

/// Compute the full schedule for a problem/ambiguity-set/config triple.
pub fn plan(problem: &DrfProblem, set: &Chi2Set, cfg: &SolverConfig) -> Result<Schedule> {
    cfg.validate()?;
    if set.n() != problem.n() {
        return Err(DrfError::DimensionMismatch {
            expected: problem.n(),
            got: set.n(),
            context: "ambiguity set support size",
        });
    }
    let m = problem.m() as f64;
    let eps = cfg.epsilon;
    let omega = cfg
        .omega_override
        .unwrap_or_else(|| (4.0 * m / cfg.nu0).ln())
        .max(1.0);
    let w_omega = cfg.w_scale_override.unwrap_or(3.0 * omega.sqrt());
    let c_g = cfg.c_g_override.unwrap_or_else(|| set.mass_bound());
    let g = problem.lipschitz_g();
    let d_x = problem.domain().diameter();
    let rho = set.rho();
    let delta = set.delta();
    let max_m = problem.max_bound_m();

    let bound = |t: f64| {
        w_omega * (regret_x(c_g, g, d_x, t) + regret_p(c_g, max_m, rho, delta, t)) + cfg.c_k * eps
    };
    let t_exact = smallest_t_satisfying(&bound, eps / 2.0)?;
    let t_tilde = smallest_t_satisfying(&bound, (1.0 - 2.0 * cfg.c_k) * eps)?;

    let planned = match cfg.feasibility_test {
        FeasibilityTest::Exact => t_exact,
        FeasibilityTest::Efficient => t_tilde,
    };
    let horizon = cfg
        .max_iters_override
        .map_or(planned, |cap| planned.min(cap.max(2)));

    let t_tilde_f = t_tilde as f64;
    let kappa_bullet = w_omega * regret_x(c_g, g, d_x, t_tilde_f) / eps + cfg.c_k;
    let kappa_circ = w_omega * regret_p(c_g, max_m, rho, delta, t_tilde_f) / eps;

    let c_x = (d_x / omega).sqrt() / (c_g * g.max(1e-12));
    let n_sq = (problem.n() as f64) * (problem.n() as f64);
    let c_p: Vec<f64> = (0..problem.m())
        .map(|i| {
            2.0 * delta * (rho / omega).sqrt() / (c_g * problem.bound_m(i).max(1e-12) * n_sq)
        })
        .collect();

    let k = match cfg.k {
        KPolicy::Fixed(k) => k,
        KPolicy::AutoHoeffding => sample_size_hoeffding(problem, cfg, planned),
        KPolicy::AutoBennett(sigma_sq) => sample_size_bennett(problem, cfg, planned, sigma_sq)?,
    };

    Ok(Schedule {
        t_exact,
        t_tilde,
        horizon,
        k,
        omega,
        w_omega,
        c_g,
        c_x,
        c_p,
        kappa_bullet,
        kappa_circ,
        theta_norm: theta_norm_up_to(horizon),
    })
}

/// Hoeffding-based per-iteration sample size
/// `K_h = ceil( 8 M^2 / (C_K eps)^2 * ln(2 m T / nu1) )`.
pub fn sample_size_hoeffding(problem: &DrfProblem, cfg: &SolverConfig, t: usize) -> usize {
    let m_bound = problem.max_bound_m();
    let log_term = (2.0 * problem.m() as f64 * t as f64 / cfg.nu1).ln();
    let raw = 8.0 * m_bound * m_bound / (cfg.c_k * cfg.c_k * cfg.epsilon * cfg.epsilon) * log_term;
    raw.ceil().max(1.0) as usize
}

/// Bennett-based per-iteration sample size
/// `K_b = ceil( 4 M^2 / sigma^2 * 1/h(2 M C_K eps / sigma^2) * ln(2 m T / nu1) )`
/// with `h(t) = (1+t) ln(1+t) - t`.
pub fn sample_size_bennett(
    problem: &DrfProblem,
    cfg: &SolverConfig,
    t: usize,
    sigma_sq: f64,
) -> Result<usize> {
    if !(sigma_sq > 0.0) {
        return Err(DrfError::InvalidArgument(format!(
            "variance bound must be positive, got {sigma_sq}"
        )));
    }
    let m_bound = problem.max_bound_m();
    let h = |t: f64| (1.0 + t) * (1.0 + t).ln() - t;
    let arg = 2.0 * m_bound * cfg.c_k * cfg.epsilon / sigma_sq;
    let log_term = (2.0 * problem.m() as f64 * t as f64 / cfg.nu1).ln();
    let raw = 4.0 * m_bound * m_bound / sigma_sq / h(arg) * log_term;
    Ok(raw.ceil().max(1.0) as usize)
}

/// One SP-gap checkpoint of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: usize,
    pub sp_gap: f64,
    pub phi_value: f64,
    pub elapsed_seconds: f64,
}

/// Run telemetry; the averaged pair is retained for warm starts.
#[derive(Debug, Clone)]
pub struct Trace {
    pub checkpoints: Vec<Checkpoint>,
    pub iterations: usize,
    pub loop_seconds: f64,
    pub source: CertificateSource,
    pub final_averages: (Vec<f64>, Vec<Vec<f64>>),
}

impl Trace {
    pub fn seconds_per_iteration(&self) -> f64 {
        self.loop_seconds / self.iterations.max(1) as f64
    }
}

/// Warm-start pair, also the serialized interchange format.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct WarmStartDoc {
    x: Vec<f64>,
    p: Vec<Vec<f64>>,
    meta: WarmStartMeta,
}

#[derive(Serialize, Deserialize)]
struct WarmStartMeta {
    n: usize,
    m: usize,
    d: usize,
    rho: f64,
    delta: f64,
}

impl WarmStart {
    pub fn to_json(&self, problem: &DrfProblem, set: &Chi2Set) -> String {
        let doc = WarmStartDoc {
            x: self.x.clone(),
            p: self.p.clone(),
            meta: WarmStartMeta {
                n: problem.n(),
                m: problem.m(),
                d: problem.d(),
                rho: set.rho(),
                delta: set.delta(),
            },
        };
        serde_json::to_string_pretty(&doc).expect("warm start serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: WarmStartDoc = serde_json::from_str(text)
            .map_err(|e| DrfError::Data(format!("warm start parse: {e}")))?;
        Ok(WarmStart { x: doc.x, p: doc.p })
    }
}

/// Exact feasibility test: infeasible iff `phi(x_bar, p_bar) > eps/2`
/// (strictly), else `x_bar` is the epsilon-feasible certificate.
pub fn exact_feasibility_test(
    problem: &DrfProblem,
    x_bar: &[f64],
    p_bar: &[Vec<f64>],
    epsilon: f64,
) -> Result<Certificate> {
    let value = phi(problem, x_bar, p_bar)?;
    let kind = if value > epsilon / 2.0 {
        CertificateKind::Infeasible { p_bar: p_bar.to_vec() }
    } else {
        CertificateKind::EpsFeasible { x_bar: x_bar.to_vec() }
    };
    Ok(Certificate {
        kind,
        epsilon,
        source: CertificateSource::ExactTest,
    })
}

/// Sampled feasibility test over the retained estimates:
/// infeasible iff `max_i sum_t theta_t f_hat_t^i > (kappa_bullet + C_K) eps`.
pub fn efficient_feasibility_test(
    f_hat_history: &[Vec<f64>],
    schedule: &Schedule,
    c_k: f64,
    epsilon: f64,
    x_bar: &[f64],
    p_bar: &[Vec<f64>],
) -> Result<Certificate> {
    if f_hat_history.len() != schedule.horizon {
        return Err(DrfError::InvalidArgument(format!(
            "estimate history covers {} iterations, expected {}",
            f_hat_history.len(),
            schedule.horizon
        )));
    }
    let m = f_hat_history.first().map_or(0, Vec::len);
    let mut vartheta = f64::NEG_INFINITY;
    for i in 0..m {
        let acc: f64 = f_hat_history
            .iter()
            .enumerate()
            .map(|(idx, row)| schedule.theta(idx + 1) * row[i])
            .sum();
        vartheta = vartheta.max(acc);
    }
    let kind = if vartheta > (schedule.kappa_bullet + c_k) * epsilon {
        CertificateKind::Infeasible { p_bar: p_bar.to_vec() }
    } else {
        CertificateKind::EpsFeasible { x_bar: x_bar.to_vec() }
    };
    Ok(Certificate {
        kind,
        epsilon,
        source: CertificateSource::EfficientTest,
    })
}

/// Theta-weighted average of the p iterates, maintained in the same lazy
/// affine basis as `DistState` so one update is O(1).
///
/// Invariant: `acc = mu * p_current + nu * 1 + corrections`, where `acc` is
/// the unnormalized weighted sum of all iterates folded in so far.
#[derive(Debug, Clone)]
pub struct LazyAverage {
    mu: f64,
    nu: f64,
    corrections: Vec<f64>,
    weight_sum: f64,
}

impl LazyAverage {
    /// Start the accumulator at the current state value with weight `theta1`.
    pub fn new(n: usize, theta1: f64) -> Self {
        Self {
            mu: theta1,
            nu: 0.0,
            corrections: vec![0.0; n],
            weight_sum: theta1,
        }
    }

    /// Fold in the next iterate after the state moved from `p_t` to `p_{t+1}`
    /// via the affine map `(1-alpha) p + alpha/n` plus a touched-coordinate
    /// override. `p_old`/`p_new` are that coordinate's values before/after.
    pub fn advance(
        &mut self,
        theta_next: f64,
        alpha: f64,
        touched: usize,
        p_old: f64,
        p_new: f64,
    ) {
        let n = self.corrections.len() as f64;
        let om = 1.0 - alpha;
        let correction = p_new - (om * p_old + alpha / n);
        let mu_old = self.mu;
        self.mu = mu_old / om + theta_next;
        self.nu -= mu_old * alpha / (n * om);
        self.corrections[touched] -= mu_old * correction / om;
        self.weight_sum += theta_next;
    }

    /// Renormalize against the current materialized state. O(n); called when
    /// the basis coefficients grow too large.
    pub fn rebase(&mut self, state: &DistState) {
        let p = state.materialize();
        for (c, v) in self.corrections.iter_mut().zip(&p) {
            *c += self.mu * v + self.nu;
        }
        self.mu = 0.0;
        self.nu = 0.0;
    }

    pub fn needs_rebase(&self) -> bool {
        self.mu.abs() > 1e100 || self.nu.abs() > 1e100
    }

    /// The normalized average, given the state the accumulator tracks.
    pub fn materialize(&self, state: &DistState) -> Vec<f64> {
        let mu = self.mu;
        let nu = self.nu;
        let ws = self.weight_sum;
        let p = state.materialize();
        let corr = &self.corrections;
        par::map_indexed(p.len(), |r| (mu * p[r] + nu + corr[r]) / ws)
    }
}

struct SofoAux {
    lazy: LazyAverage,
    error: Option<DrfError>,
}

/// Run the feasibility solver end to end.
pub fn run_feasibility(
    problem: &DrfProblem,
    set: &Chi2Set,
    cfg: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<(Certificate, Trace)> {
    let schedule = plan(problem, set, cfg)?;
    run_feasibility_with_schedule(problem, set, cfg, warm, &schedule)
}

/// Same as [`run_feasibility`] but with a precomputed schedule (the binary
/// search driver reuses one plan across stages).
pub fn run_feasibility_with_schedule(
    problem: &DrfProblem,
    set: &Chi2Set,
    cfg: &SolverConfig,
    warm: Option<&WarmStart>,
    schedule: &Schedule,
) -> Result<(Certificate, Trace)> {
    let eps = cfg.epsilon;
    let (x1, p1) = init_pair(problem, set, cfg, warm)?;
    log::debug!(
        "feasibility run: horizon {}, K {}, c_x {:.3e}",
        schedule.horizon,
        schedule.k,
        schedule.c_x
    );
    match cfg.mode {
        Mode::Sofo => run_sofo(problem, set, cfg, schedule, x1, p1, eps),
        Mode::Ofo => run_ofo(problem, set, cfg, schedule, x1, p1, eps),
    }
}

fn init_pair(
    problem: &DrfProblem,
    set: &Chi2Set,
    cfg: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let dom = problem.domain();
    match warm {
        None => Ok((
            dom.center(problem.d()),
            vec![set.uniform(); problem.m()],
        )),
        Some(w) => {
            if w.x.len() != problem.d() || w.p.len() != problem.m() {
                return Err(DrfError::InvalidArgument(
                    "warm start dimensions do not match the problem".into(),
                ));
            }
            let x_proj = dom.project(&w.x);
            let drift: f64 = w
                .x
                .iter()
                .zip(&x_proj)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if drift > 1e-6 {
                return Err(DrfError::OutsideDomain(format!(
                    "warm x is {drift:.3e} outside the decision domain"
                )));
            }
            let mut p = Vec::with_capacity(problem.m());
            for pi in &w.p {
                if !set.contains(pi, 1e-6) {
                    return Err(DrfError::OutsideDomain(
                        "warm p is outside the ambiguity set".into(),
                    ));
                }
                p.push(set.project(pi, crate::ambiguity::TOL_G)?);
            }
            let _ = cfg;
            Ok((x_proj, p))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_sofo(
    problem: &DrfProblem,
    set: &Chi2Set,
    cfg: &SolverConfig,
    schedule: &Schedule,
    x1: Vec<f64>,
    p1: Vec<Vec<f64>>,
    eps: f64,
) -> Result<(Certificate, Trace)> {
    let horizon = schedule.horizon;
    let keep_history = cfg.feasibility_test == FeasibilityTest::Efficient;
    let mut x = x1;
    let mut x_avg = RunningAverage::new(problem.d(), 0, 0);
    x_avg.update(theta_raw(1), &x, &[])?;
    let mut states: Vec<DistState> = p1
        .iter()
        .map(|pi| DistState::from_dense(*set, pi).with_mode(cfg.sampler))
        .collect();
    let mut aux: Vec<SofoAux> = (0..problem.m())
        .map(|_| SofoAux {
            lazy: LazyAverage::new(set.n(), theta_raw(1)),
            error: None,
        })
        .collect();
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(if keep_history { horizon } else { 0 });
    let mut checkpoints = Vec::new();
    let start = Instant::now();

    for t in 1..horizon {
        let step_x = schedule.c_x * theta_raw(t);
        let ctx = StepCtx { seed: cfg.seed, t: t as u64 };

        // x-update first (it must see p_t), assignment deferred until the
        // p-updates have consumed x_t
        let (x_next, est) = eps_smd_step(problem, &x, &states, schedule.k, step_x, ctx)?;
        if keep_history {
            history.push(est.f_hat.clone());
        }

        let theta_next = theta_raw(t + 1);
        let seed = cfg.seed;
        let c_p = &schedule.c_p;
        let x_ref = &x;
        par::for_each_mut2(&mut states, &mut aux, |i, state, aux_i| {
            let mut rng = substream(seed, t as u64, i as u64, StreamKind::BanditIndex);
            let step_p = c_p[i] * theta_raw(t);
            let outcome = (|| -> Result<()> {
                let idx = state.sample_index(&mut rng)?;
                let p_old = state.get(idx);
                let rec = bmd_step_at(problem, i, x_ref, state, step_p, idx)?;
                let p_new = state.get(idx);
                aux_i.lazy.advance(theta_next, rec.alpha_star, idx, p_old, p_new);
                if aux_i.lazy.needs_rebase() {
                    aux_i.lazy.rebase(state);
                }
                Ok(())
            })();
            if let Err(e) = outcome {
                aux_i.error = Some(e);
            }
        });
        for aux_i in &mut aux {
            if let Some(e) = aux_i.error.take() {
                return Err(DrfError::SolverFailure { t, msg: e.to_string() });
            }
        }

        x = x_next;
        x_avg.update(theta_next, &x, &[])?;

        if let Some(every) = cfg.sp_gap_every {
            if every > 0 && t % every == 0 {
                let x_bar = x_avg.avg_x().to_vec();
                let p_bar: Vec<Vec<f64>> = aux
                    .iter()
                    .zip(&states)
                    .map(|(a, s)| a.lazy.materialize(s))
                    .collect();
                let report = sp_gap(problem, set, &x_bar, &p_bar, cfg.inner_min_budget)?;
                checkpoints.push(Checkpoint {
                    t,
                    sp_gap: report.gap,
                    phi_value: report.phi_at_pair,
                    elapsed_seconds: start.elapsed().as_secs_f64(),
                });
                log::debug!("t={t}: sp_gap={:.5e} phi={:.5e}", report.gap, report.phi_at_pair);
                if report.gap <= eps / 2.0 {
                    let kind = if report.phi_at_pair > eps / 2.0 {
                        CertificateKind::Infeasible { p_bar: p_bar.clone() }
                    } else {
                        CertificateKind::EpsFeasible { x_bar: x_bar.clone() }
                    };
                    let cert = Certificate {
                        kind,
                        epsilon: eps,
                        source: CertificateSource::EarlyStopSpGap,
                    };
                    let trace = Trace {
                        checkpoints,
                        iterations: t,
                        loop_seconds: start.elapsed().as_secs_f64(),
                        source: CertificateSource::EarlyStopSpGap,
                        final_averages: (x_bar, p_bar),
                    };
                    return Ok((cert, trace));
                }
            }
        }
    }

    // last estimate, taken at the final iterate without an x-update
    if keep_history {
        let est = approx_max_index(
            problem,
            &x,
            &states,
            schedule.k,
            StepCtx { seed: cfg.seed, t: horizon as u64 },
        )?;
        history.push(est.f_hat);
    }

    let x_bar = x_avg.avg_x().to_vec();
    let p_bar: Vec<Vec<f64>> = aux
        .iter()
        .zip(&states)
        .map(|(a, s)| a.lazy.materialize(s))
        .collect();
    let cert = match cfg.feasibility_test {
        FeasibilityTest::Exact => exact_feasibility_test(problem, &x_bar, &p_bar, eps)?,
        FeasibilityTest::Efficient => {
            efficient_feasibility_test(&history, schedule, cfg.c_k, eps, &x_bar, &p_bar)?
        }
    };
    let trace = Trace {
        checkpoints,
        iterations: horizon,
        loop_seconds: start.elapsed().as_secs_f64(),
        source: cert.source,
        final_averages: (x_bar, p_bar),
    };
    Ok((cert, trace))
}

#[allow(clippy::too_many_arguments)]
fn run_ofo(
    problem: &DrfProblem,
    set: &Chi2Set,
    cfg: &SolverConfig,
    schedule: &Schedule,
    x1: Vec<f64>,
    p1: Vec<Vec<f64>>,
    eps: f64,
) -> Result<(Certificate, Trace)> {
    let horizon = schedule.horizon;
    let mut x = x1;
    let mut p = p1;
    let mut avg = RunningAverage::new(problem.d(), problem.m(), problem.n());
    avg.update(theta_raw(1), &x, &p)?;
    let mut checkpoints = Vec::new();
    let start = Instant::now();

    for t in 1..horizon {
        let step_x = schedule.c_x * theta_raw(t);
        let (x_next, _) = ofo_x_step(problem, &x, &p, step_x)?;
        let c_p = &schedule.c_p;
        let x_ref = &x;
        let updated: Vec<Result<Vec<f64>>> = par::map_indexed(problem.m(), |i| {
            ofo_p_step(problem, set, i, x_ref, &p[i], c_p[i] * theta_raw(t))
        });
        for (i, next) in updated.into_iter().enumerate() {
            p[i] = next.map_err(|e| DrfError::SolverFailure { t, msg: e.to_string() })?;
        }
        x = x_next;
        avg.update(theta_raw(t + 1), &x, &p)?;

        if let Some(every) = cfg.sp_gap_every {
            if every > 0 && t % every == 0 {
                let report =
                    sp_gap(problem, set, avg.avg_x(), avg.avg_p(), cfg.inner_min_budget)?;
                checkpoints.push(Checkpoint {
                    t,
                    sp_gap: report.gap,
                    phi_value: report.phi_at_pair,
                    elapsed_seconds: start.elapsed().as_secs_f64(),
                });
                if report.gap <= eps / 2.0 {
                    let kind = if report.phi_at_pair > eps / 2.0 {
                        CertificateKind::Infeasible { p_bar: avg.avg_p().to_vec() }
                    } else {
                        CertificateKind::EpsFeasible { x_bar: avg.avg_x().to_vec() }
                    };
                    let cert = Certificate {
                        kind,
                        epsilon: eps,
                        source: CertificateSource::EarlyStopSpGap,
                    };
                    let trace = Trace {
                        checkpoints,
                        iterations: t,
                        loop_seconds: start.elapsed().as_secs_f64(),
                        source: CertificateSource::EarlyStopSpGap,
                        final_averages: (avg.avg_x().to_vec(), avg.avg_p().to_vec()),
                    };
                    return Ok((cert, trace));
                }
            }
        }
    }

    let cert = exact_feasibility_test(problem, avg.avg_x(), avg.avg_p(), eps)?;
    let trace = Trace {
        checkpoints,
        iterations: horizon,
        loop_seconds: start.elapsed().as_secs_f64(),
        source: cert.source,
        final_averages: (avg.avg_x().to_vec(), avg.avg_p().to_vec()),
    };
    Ok((cert, trace))
}

/// Result of one stage of the binary-search optimizer.
#[derive(Debug, Clone)]
pub struct StageResult {
    pub threshold: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub wall_seconds: f64,
    pub source: CertificateSource,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    /// Smallest certified-feasible threshold found.
    pub value: f64,
    pub x: Vec<f64>,
    pub stages: Vec<StageResult>,
    pub total_iterations: usize,
}

/// Solve the optimization problem by bisecting on the objective threshold,
/// warm-starting each stage from the previous stage's averaged pair.
///
/// `family(c)` must produce the feasibility problem "objective <= c". With
/// `trusted_bracket` the caller asserts `family(hi)` feasible and
/// `family(lo)` infeasible; otherwise both are verified first.
#[allow(clippy::too_many_arguments)]
pub fn optimize_binary_search(
    family: &mut dyn FnMut(f64) -> Result<DrfProblem>,
    set: &Chi2Set,
    cfg: &SolverConfig,
    lo: f64,
    hi: f64,
    obj_tol: f64,
    trusted_bracket: bool,
    warm_starts: bool,
) -> Result<OptimizeOutcome> {
    if !(lo < hi) {
        return Err(DrfError::InvalidBracket(format!("need lo < hi, got [{lo}, {hi}]")));
    }
    if !(obj_tol > 0.0) {
        return Err(DrfError::InvalidBracket("obj_tol must be positive".into()));
    }
    let mut stages = Vec::new();
    let mut total_iterations = 0usize;
    let mut warm: Option<WarmStart> = None;
    let mut best_x: Option<Vec<f64>> = None;
    let (mut lo, mut hi) = (lo, hi);

    let mut solve = |threshold: f64,
                     warm: &Option<WarmStart>,
                     stages: &mut Vec<StageResult>,
                     total: &mut usize|
     -> Result<(bool, WarmStart, Option<Vec<f64>>)> {
        let problem = family(threshold)?;
        let (cert, trace) =
            run_feasibility(&problem, set, cfg, warm.as_ref().filter(|_| warm_starts))?;
        stages.push(StageResult {
            threshold,
            feasible: cert.is_feasible(),
            iterations: trace.iterations,
            wall_seconds: trace.loop_seconds,
            source: cert.source,
        });
        *total += trace.iterations;
        let (x_bar, p_bar) = trace.final_averages;
        let x_out = cert.x_bar().map(<[f64]>::to_vec);
        Ok((cert.is_feasible(), WarmStart { x: x_bar, p: p_bar }, x_out))
    };

    if !trusted_bracket {
        let (hi_feasible, w, x_out) = solve(hi, &warm, &mut stages, &mut total_iterations)?;
        if !hi_feasible {
            return Err(DrfError::InvalidBracket(format!(
                "upper threshold {hi} was certified infeasible"
            )));
        }
        warm = Some(w);
        best_x = x_out;
        let (lo_feasible, w, _) = solve(lo, &warm, &mut stages, &mut total_iterations)?;
        if lo_feasible {
            return Err(DrfError::InvalidBracket(format!(
                "lower threshold {lo} was certified feasible"
            )));
        }
        warm = Some(w);
    }

    while hi - lo > obj_tol {
        let mid = 0.5 * (lo + hi);
        let (feasible, w, x_out) = solve(mid, &warm, &mut stages, &mut total_iterations)?;
        if feasible {
            hi = mid;
            if let Some(x) = x_out {
                best_x = Some(x);
            }
        } else {
            lo = mid;
        }
        warm = Some(w);
    }

    let x = match best_x {
        Some(x) => x,
        None => {
            // trusted bracket and already tight: certify hi once
            let (feasible, _, x_out) = solve(hi, &warm, &mut stages, &mut total_iterations)?;
            if !feasible {
                return Err(DrfError::InvalidBracket(format!(
                    "trusted upper threshold {hi} failed certification"
                )));
            }
            x_out.expect("feasible certificate carries x")
        }
    };
    Ok(OptimizeOutcome {
        value: hi,
        x,
        stages,
        total_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_const_toy, gen_linear_toy, gen_param_select, build_param_select};
    use crate::rngutil::gen_stream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    struct ZeroOracle;
    impl crate::problem::ConstraintOracle for ZeroOracle {
        fn value(&self, _: usize, _: usize, _: &[f64]) -> f64 {
            0.0
        }
        fn subgradient(&self, _: usize, _: usize, _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    fn bounded_problem(m: usize, g: f64, m_bound: f64) -> DrfProblem {
        DrfProblem::new(
            m,
            10,
            2,
            std::sync::Arc::new(ZeroOracle),
            g,
            vec![m_bound; m],
            crate::mirror::MirrorDomain::EuclideanBall { radius: 1.0 },
        )
        .unwrap()
    }

    fn toy_cfg(eps: f64) -> SolverConfig {
        SolverConfig {
            epsilon: eps,
            max_iters_override: Some(2000),
            k: KPolicy::Fixed(4),
            seed: 7,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn config_validation_rejects_bad_combinations() {
        let mut cfg = SolverConfig::default();
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
        cfg = SolverConfig::default();
        cfg.c_k = 0.5;
        assert!(cfg.validate().is_err());
        cfg = SolverConfig::default();
        cfg.feasibility_test = FeasibilityTest::Efficient;
        cfg.mode = Mode::Ofo;
        assert!(cfg.validate().is_err());
        cfg = SolverConfig::default();
        cfg.feasibility_test = FeasibilityTest::Efficient;
        cfg.c_k = 0.4;
        assert!(cfg.validate().is_err());
        cfg.c_k = 0.3;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn plan_iterations_grow_as_ck_approaches_half() {
        let prob = gen_linear_toy(3, 10, 2, 1).unwrap();
        let set = Chi2Set::new(10, 1.0, 0.9).unwrap();
        let mk = |c_k: f64| SolverConfig { c_k, ..SolverConfig::default() };
        let t_small = plan(&prob, &set, &mk(0.05)).unwrap().t_exact;
        let t_large = plan(&prob, &set, &mk(0.45)).unwrap().t_exact;
        assert!(t_large > t_small, "{t_large} <= {t_small}");
    }

    #[test]
    fn plan_practical_override_shrinks_horizon() {
        let prob = gen_linear_toy(3, 10, 2, 1).unwrap();
        let set = Chi2Set::new(10, 1.0, 0.9).unwrap();
        let default_t = plan(&prob, &set, &SolverConfig::default()).unwrap().t_exact;
        let override_t = plan(
            &prob,
            &set,
            &SolverConfig { w_scale_override: Some(1.0), ..SolverConfig::default() },
        )
        .unwrap()
        .t_exact;
        assert!(override_t < default_t);
    }

    #[test]
    fn plan_minimality_verified_at_the_boundary() {
        // the planned counts satisfy their inequality while T-1 fails it
        let mut rng = gen_stream(70);
        for trial in 0..30 {
            let m = rng.gen_range(1..=4);
            let n = rng.gen_range(4..=40);
            let prob = gen_linear_toy(m, n, 2, trial).unwrap();
            let rho = 0.1 + rng.gen::<f64>() * (n as f64 / 2.0 - 0.1);
            let delta = 0.3 + rng.gen::<f64>() * 0.65;
            let set = Chi2Set::new(n, rho, delta).unwrap();
            let cfg = SolverConfig {
                epsilon: 0.2 + rng.gen::<f64>(),
                c_k: 0.02 + rng.gen::<f64>() * 0.4,
                w_scale_override: if rng.gen::<bool>() { Some(1.0) } else { None },
                ..SolverConfig::default()
            };
            let schedule = plan(&prob, &set, &cfg).unwrap();
            let c_g = set.mass_bound();
            let w = cfg.w_scale_override.unwrap_or(3.0 * schedule.omega.sqrt());
            let bound = |t: f64| {
                w * (regret_x(c_g, prob.lipschitz_g(), prob.domain().diameter(), t)
                    + regret_p(c_g, prob.max_bound_m(), set.rho(), set.delta(), t))
                    + cfg.c_k * cfg.epsilon
            };
            let t = schedule.t_exact;
            assert!(bound(t as f64) <= cfg.epsilon / 2.0);
            if t > 8 {
                assert!(bound((t - 1) as f64) > cfg.epsilon / 2.0, "trial {trial}: T not minimal");
            }
            // exhaustive scan cross-check when cheap
            if t <= 100_000 {
                let mut scan = 8;
                while bound(scan as f64) > cfg.epsilon / 2.0 {
                    scan += 1;
                }
                assert_eq!(scan, t);
            }
        }
    }

    #[test]
    fn plan_fairness_paper_parameters() {
        // ball radius 5 ln 300, G = M = 0.25, m = 3, rho = 5, delta = 0.95,
        // eps = 0.02, nu0 = 0.05, practical override C_s = 1
        let n = 45_000;
        let prob = {
            use crate::mirror::MirrorDomain;
            use crate::problem::ConstraintOracle;
            use std::sync::Arc;
            struct Z;
            impl ConstraintOracle for Z {
                fn value(&self, _: usize, _: usize, _: &[f64]) -> f64 { 0.0 }
                fn subgradient(&self, _: usize, _: usize, _: &[f64], out: &mut [f64]) {
                    out.fill(0.0);
                }
            }
            DrfProblem::new(
                3, n, 300, Arc::new(Z), 0.25, vec![0.25; 3],
                MirrorDomain::EuclideanBall { radius: 5.0 * (300f64).ln() },
            )
            .unwrap()
        };
        let set = Chi2Set::new(n, 5.0, 0.95).unwrap();
        let cfg = SolverConfig {
            epsilon: 0.02,
            nu0: 0.05,
            w_scale_override: Some(1.0),
            ..SolverConfig::default()
        };
        let schedule = plan(&prob, &set, &cfg).unwrap();
        let t = schedule.t_exact;
        // boundary minimality in place of a full scan (T is in the billions)
        let c_g = set.mass_bound();
        let bound = |tt: f64| {
            1.0 * (regret_x(c_g, 0.25, prob.domain().diameter(), tt)
                + regret_p(c_g, 0.25, 5.0, 0.95, tt))
                + 0.05 * 0.02
        };
        assert!(bound(t as f64) <= 0.01 && bound((t - 1) as f64) > 0.01);
        assert!(t > 1_000_000, "paper-scale plan unexpectedly small: {t}");
    }

    #[test]
    fn t_tilde_not_above_t_for_small_ck() {
        let prob = gen_linear_toy(2, 12, 2, 3).unwrap();
        let set = Chi2Set::new(12, 1.5, 0.8).unwrap();
        for c_k in [0.01, 0.05, 0.1, 0.2, 0.24] {
            let cfg = SolverConfig { c_k, ..SolverConfig::default() };
            let s = plan(&prob, &set, &cfg).unwrap();
            assert!(s.t_tilde <= s.t_exact, "c_k={c_k}: {} > {}", s.t_tilde, s.t_exact);
        }
    }

    #[test]
    fn normalized_weights_sum_to_one() {
        let prob = gen_linear_toy(2, 8, 2, 4).unwrap();
        let set = Chi2Set::new(8, 1.0, 0.9).unwrap();
        let cfg = SolverConfig { max_iters_override: Some(500), ..SolverConfig::default() };
        let s = plan(&prob, &set, &cfg).unwrap();
        let total: f64 = (1..=s.horizon).map(|t| s.theta(t)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hoeffding_sample_size_matches_direct_arithmetic() {
        let prob = bounded_problem(3, 0.25, 0.25);
        let cfg = SolverConfig { epsilon: 0.02, c_k: 0.05, nu1: 0.05, ..SolverConfig::default() };
        let k = sample_size_hoeffding(&prob, &cfg, 100_000);
        let want = (8.0 * 0.25f64 * 0.25 / (0.05f64 * 0.05 * 0.02 * 0.02)
            * (2.0 * 3.0 * 100_000.0 / 0.05f64).ln())
        .ceil() as usize;
        assert_eq!(k, want);
        assert!((8_000_000..9_000_000).contains(&k), "k = {k}");
        // doubling M quadruples the pre-ceiling value
        let prob2 = bounded_problem(3, 0.5, 0.5);
        let k2 = sample_size_hoeffding(&prob2, &cfg, 100_000);
        let raw = 8.0 * 0.25f64 * 0.25 / (0.05f64 * 0.05 * 0.02 * 0.02)
            * (2.0 * 3.0 * 100_000.0 / 0.05f64).ln();
        assert_eq!(k2, (4.0 * raw).ceil() as usize);
        // halving nu1 adds exactly (8 M^2/(C_K eps)^2) ln 2 before ceiling
        let cfg_half = SolverConfig { nu1: 0.025, ..cfg.clone() };
        let k3 = sample_size_hoeffding(&prob, &cfg_half, 100_000);
        let base = 8.0 * 0.25f64 * 0.25 / (0.05f64 * 0.05 * 0.02 * 0.02);
        assert_eq!(k3, (raw + base * 2f64.ln()).ceil() as usize);
    }

    #[test]
    fn bennett_sample_size_matches_direct_arithmetic() {
        let prob = bounded_problem(2, 0.25, 0.25);
        let cfg = SolverConfig { epsilon: 0.02, c_k: 0.05, nu1: 0.05, ..SolverConfig::default() };
        let k = sample_size_bennett(&prob, &cfg, 100_000, 0.01).unwrap();
        let h = |t: f64| (1.0 + t) * (1.0 + t).ln() - t;
        let want = (4.0 * 0.0625 / 0.01 / h(2.0 * 0.25 * 0.05 * 0.02 / 0.01)
            * (2.0 * 2.0 * 100_000.0 / 0.05f64).ln())
        .ceil() as usize;
        assert_eq!(k, want);
        // K_b explodes as the tolerance vanishes
        let tight = SolverConfig { epsilon: 0.001, ..cfg.clone() };
        let loose = SolverConfig { epsilon: 0.1, ..cfg.clone() };
        assert!(
            sample_size_bennett(&prob, &tight, 1000, 0.01).unwrap()
                > sample_size_bennett(&prob, &loose, 1000, 0.01).unwrap()
        );
        // small variance makes Bennett cheaper than Hoeffding
        let sigma_sq = 4.0 * 0.0625 * (0.25 * 0.05 * 0.02);
        assert!(
            sample_size_bennett(&prob, &cfg, 1000, sigma_sq).unwrap()
                < sample_size_hoeffding(&prob, &cfg, 1000)
        );
        assert!(sample_size_bennett(&prob, &cfg, 1000, 0.0).is_err());
    }

    #[test]
    fn exact_test_branches_on_half_epsilon() {
        // constant oracle with uniform p: phi = value exactly
        for (value, eps, feasible) in [
            (0.2, 0.5, true),
            (0.3, 0.5, false),
            (0.25, 0.5, true), // boundary: strict inequality declares infeasible only above eps/2
        ] {
            let prob = build_const_toy(value, 1, 4, 2).unwrap();
            let set = Chi2Set::new(4, 1.0, 0.9).unwrap();
            let p = vec![set.uniform()];
            let x = vec![0.0, 0.0];
            let cert = exact_feasibility_test(&prob, &x, &p, eps).unwrap();
            assert_eq!(cert.is_feasible(), feasible, "value {value}");
            assert_eq!(cert.source, CertificateSource::ExactTest);
        }
    }

    #[test]
    fn efficient_test_thresholds() {
        let mk_schedule = |kappa_bullet: f64| Schedule {
            t_exact: 1,
            t_tilde: 1,
            horizon: 1,
            k: 1,
            omega: 1.0,
            w_omega: 1.0,
            c_g: 1.0,
            c_x: 1.0,
            c_p: vec![1.0],
            kappa_bullet,
            kappa_circ: 0.0,
            theta_norm: 1.0,
        };
        let x = vec![0.0];
        let p = vec![vec![0.25; 4]];
        // vartheta 0.1 vs threshold (0.3 + 0.05) * 1.0 -> feasible
        let cert = efficient_feasibility_test(&[vec![0.1]], &mk_schedule(0.3), 0.05, 1.0, &x, &p)
            .unwrap();
        assert!(cert.is_feasible());
        // vartheta 0.4 -> infeasible
        let cert = efficient_feasibility_test(&[vec![0.4]], &mk_schedule(0.3), 0.05, 1.0, &x, &p)
            .unwrap();
        assert!(!cert.is_feasible());
        assert_eq!(cert.source, CertificateSource::EfficientTest);
        // incomplete history is an error
        assert!(efficient_feasibility_test(&[], &mk_schedule(0.3), 0.05, 1.0, &x, &p).is_err());
    }

    #[test]
    fn lazy_average_matches_dense_recompute() {
        let set = Chi2Set::new(12, 1.0, 0.6).unwrap();
        let mut rng = gen_stream(71);
        let p1 = set.sample_member(&mut rng);
        let mut state = DistState::from_dense(set, &p1);
        let mut lazy = LazyAverage::new(12, theta_raw(1));
        let mut dense_acc: Vec<f64> = p1.iter().map(|v| v * theta_raw(1)).collect();
        let mut wsum = theta_raw(1);
        for t in 1..=2000u64 {
            let idx = rng.gen_range(0..12);
            let w = (state.get(idx) + (rng.gen::<f64>() - 0.5) * 0.05).max(0.0);
            let p_old = state.get(idx);
            let alpha = state.alpha_star(idx, w);
            state.bmd_affine_update(alpha, idx, w).unwrap();
            let p_new = state.get(idx);
            let theta = theta_raw(t as usize + 1);
            lazy.advance(theta, alpha, idx, p_old, p_new);
            if lazy.needs_rebase() {
                lazy.rebase(&state);
            }
            let dense = state.materialize();
            for (acc, v) in dense_acc.iter_mut().zip(&dense) {
                *acc += theta * v;
            }
            wsum += theta;
        }
        let got = lazy.materialize(&state);
        for (g, acc) in got.iter().zip(&dense_acc) {
            let want = acc / wsum;
            assert!((g - want).abs() < 1e-10, "{g} vs {want}");
        }
    }

    #[test]
    fn forced_infeasible_toy_returns_infeasible() {
        let prob = build_const_toy(0.5, 2, 6, 2).unwrap();
        let set = Chi2Set::new(6, 1.0, 0.9).unwrap();
        let cfg = toy_cfg(0.1);
        let (cert, trace) = run_feasibility(&prob, &set, &cfg, None).unwrap();
        assert!(!cert.is_feasible());
        assert_eq!(trace.source, CertificateSource::ExactTest);
        let p_bar = cert.p_bar().unwrap();
        for pi in p_bar {
            assert!(set.contains(pi, 1e-9));
        }
    }

    #[test]
    fn linear_toy_returns_feasible() {
        let prob = gen_linear_toy(1, 8, 3, 2).unwrap();
        let set = Chi2Set::new(8, 1.0, 0.9).unwrap();
        let cfg = toy_cfg(0.1);
        let (cert, _) = run_feasibility(&prob, &set, &cfg, None).unwrap();
        assert!(cert.is_feasible());
        assert!(prob.domain().contains(cert.x_bar().unwrap()));
    }

    #[test]
    fn identical_seed_and_config_replay_bitwise() {
        let spec = gen_param_select(2, 3, 2, 40, 0.05, 21);
        let prob = build_param_select(&spec).unwrap();
        let set = Chi2Set::new(40, 1.0, 0.9).unwrap();
        let cfg = SolverConfig {
            epsilon: 0.05,
            max_iters_override: Some(400),
            sp_gap_every: Some(100),
            inner_min_budget: 200,
            k: KPolicy::Fixed(5),
            seed: 99,
            ..SolverConfig::default()
        };
        let (cert_a, trace_a) = run_feasibility(&prob, &set, &cfg, None).unwrap();
        let (cert_b, trace_b) = run_feasibility(&prob, &set, &cfg, None).unwrap();
        assert_eq!(cert_a, cert_b);
        assert_eq!(trace_a.checkpoints.len(), trace_b.checkpoints.len());
        for (a, b) in trace_a.checkpoints.iter().zip(&trace_b.checkpoints) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.sp_gap.to_bits(), b.sp_gap.to_bits());
            assert_eq!(a.phi_value.to_bits(), b.phi_value.to_bits());
        }
        assert!(trace_a.checkpoints.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn ofo_mode_runs_and_certifies_toys() {
        let prob = build_const_toy(0.5, 2, 6, 2).unwrap();
        let set = Chi2Set::new(6, 1.0, 0.9).unwrap();
        let cfg = SolverConfig {
            mode: Mode::Ofo,
            max_iters_override: Some(500),
            ..toy_cfg(0.1)
        };
        let (cert, _) = run_feasibility(&prob, &set, &cfg, None).unwrap();
        assert!(!cert.is_feasible());

        let prob = gen_linear_toy(1, 8, 3, 2).unwrap();
        let cfg = SolverConfig { mode: Mode::Ofo, ..toy_cfg(0.1) };
        let (cert, _) = run_feasibility(&prob, &set, &cfg, None).unwrap();
        assert!(cert.is_feasible());
    }

    #[test]
    fn warm_start_validation() {
        let prob = gen_linear_toy(1, 6, 2, 3).unwrap();
        let set = Chi2Set::new(6, 1.0, 0.9).unwrap();
        let cfg = toy_cfg(0.1);
        // valid warm start
        let warm = WarmStart { x: vec![0.1, 0.1], p: vec![set.uniform()] };
        assert!(run_feasibility(&prob, &set, &cfg, Some(&warm)).is_ok());
        // x far outside the ball
        let warm = WarmStart { x: vec![5.0, 0.0], p: vec![set.uniform()] };
        assert!(run_feasibility(&prob, &set, &cfg, Some(&warm)).is_err());
        // p outside the set
        let bad_p = vec![vec![1.0; 6]];
        let warm = WarmStart { x: vec![0.0, 0.0], p: bad_p };
        assert!(run_feasibility(&prob, &set, &cfg, Some(&warm)).is_err());
    }

    #[test]
    fn warm_start_roundtrips_through_json() {
        let prob = gen_linear_toy(1, 6, 2, 3).unwrap();
        let set = Chi2Set::new(6, 1.0, 0.9).unwrap();
        let warm = WarmStart { x: vec![0.1, -0.2], p: vec![set.uniform()] };
        let text = warm.to_json(&prob, &set);
        assert!(text.contains("\"meta\""));
        let back = WarmStart::from_json(&text).unwrap();
        assert_eq!(warm, back);
    }

    #[test]
    fn binary_search_degenerate_bracket() {
        let set = Chi2Set::new(6, 1.0, 0.9).unwrap();
        let cfg = toy_cfg(0.1);
        // family: F = value - threshold... use const toy shifted by threshold
        let mut family = |thr: f64| build_const_toy(0.5 - thr, 1, 6, 2);
        let out = optimize_binary_search(&mut family, &set, &cfg, 0.9, 1.0, 0.1, true, true)
            .unwrap();
        assert_eq!(out.stages.len(), 1);
        assert_abs_diff_eq!(out.value, 1.0);
    }

    #[test]
    fn binary_search_validates_bracket() {
        let set = Chi2Set::new(6, 1.0, 0.9).unwrap();
        let cfg = toy_cfg(0.1);
        let mut family = |thr: f64| build_const_toy(0.5 - thr, 1, 6, 2);
        // hi still infeasible -> invalid bracket
        assert!(matches!(
            optimize_binary_search(&mut family, &set, &cfg, 0.0, 0.2, 0.05, false, true),
            Err(DrfError::InvalidBracket(_))
        ));
        // threshold above 0.5 + eps/2 feasible, below infeasible
        let out =
            optimize_binary_search(&mut family, &set, &cfg, 0.2, 1.2, 0.01, false, true).unwrap();
        assert!((out.value - 0.5).abs() < 0.1, "value {}", out.value);
    }
}
