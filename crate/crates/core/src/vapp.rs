//! The VAPP and VAPP-M iterations, the primal subproblem, the `Δᵏ` certificate and backtracking.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::analysis::{feasibility_residual, generalized_distance_sq, kkt_residual, TraceRecord};
use crate::cones::ConeSpec;
use crate::error::{check_dim, Error, Result};
use crate::inner::{accelerated_prox_grad, soft_threshold, ProxTerm};
use crate::lagrangian::{lagrangian, PrimalDual};
use crate::linalg::{axpy, dist, dist_sq, dot, norm, sub};
use crate::oracles::{BregmanCore, FeasibleSet, NccpProblem, PhiMap};

/// Step-size policy for `εᵏ`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EpsMode {
    Fixed,
    /// Shrink by `eta ∈ (0,1)` until `Δᵏ ≥ 0`.
    Backtracking { eta: f64 },
}

/// Which iterate the stopping test looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StopRule {
    Ergodic,
    LastIterate,
    /// Stop as soon as either the ergodic or the last iterate meets the tolerances.
    Either,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    /// Penalty parameter; the dual step uses `ρ = γ`.
    pub gamma: f64,
    pub eps0: f64,
    pub eps_mode: EpsMode,
    /// Bound `M` on the multipliers; `Some` selects the `-M` variants.
    pub dual_bound: Option<f64>,
    pub max_iter: usize,
    pub tol_feas: f64,
    pub tol_obj: f64,
    /// Defaults to `min(1e-10, tol_obj/10)`.
    pub inner_tol: Option<f64>,
    pub seed: u64,
    pub stop_rule: StopRule,
    /// Evaluate per-iteration certificates (`Δᵏ` bound, Lemma-1 terms, KKT residual).
    pub diagnostics: bool,
    /// Abort with an error when a per-iteration certificate fails.
    pub strict_invariants: bool,
    /// Keep every `trace_stride`-th record (the last record is always kept).
    pub trace_stride: usize,
    pub max_backtracks: usize,
    /// Mutation knob for the test suite: runs the primal step with the stale `pᵏ`
    /// and forms `qᵏ` afterwards.
    #[doc(hidden)]
    pub misorder_dual: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma: 1.0,
            eps0: 0.1,
            eps_mode: EpsMode::Fixed,
            dual_bound: None,
            max_iter: 10_000,
            tol_feas: 1e-6,
            tol_obj: 1e-6,
            inner_tol: None,
            seed: 0,
            stop_rule: StopRule::Ergodic,
            diagnostics: true,
            strict_invariants: false,
            trace_stride: 1,
            max_backtracks: 60,
            misorder_dual: false,
        }
    }
}

impl SolverConfig {
    pub fn inner_tol(&self) -> f64 {
        self.inner_tol.unwrap_or_else(|| (self.tol_obj / 10.0).min(1e-10))
    }

    /// Upper limit `β/(B_G + B_Ω + γτ²)` on a fixed `ε`, when the constants are known.
    pub fn eps_limit(&self, problem: &NccpProblem) -> Result<f64> {
        let b_g = problem.g.lipschitz_grad.ok_or(Error::MissingConstant("B_G"))?;
        let b_om = problem
            .theta
            .effective_b_omega(self.dual_bound)
            .ok_or(Error::MissingConstant("B_Omega"))?;
        let tau = problem.theta.theta_lipschitz.ok_or(Error::MissingConstant("tau"))?;
        let den = b_g + b_om + self.gamma * tau * tau;
        Ok(if den > 0.0 { problem.core.beta() / den } else { f64::INFINITY })
    }

    pub fn validate(&self, problem: &NccpProblem) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::NonPositive("gamma"));
        }
        if !(self.eps0 > 0.0) || !self.eps0.is_finite() {
            return Err(Error::NonPositive("eps0"));
        }
        if let Some(m) = self.dual_bound {
            if !(m > 0.0) {
                return Err(Error::NonPositive("dual bound M"));
            }
        }
        if self.max_backtracks == 0 {
            return Err(Error::InvalidParameter("max_backtracks must be >= 1".into()));
        }
        match self.eps_mode {
            EpsMode::Backtracking { eta } => {
                if !(eta > 0.0 && eta < 1.0) {
                    return Err(Error::InvalidParameter("backtracking eta must lie in (0,1)".into()));
                }
            }
            EpsMode::Fixed => {
                let limit = self.eps_limit(problem)?;
                if self.eps0 > 0.99 * limit {
                    return Err(Error::InvalidParameter(alloc::format!(
                        "eps0 = {} exceeds 0.99 * beta/(B_G + B_Omega + gamma tau^2) = {}",
                        self.eps0,
                        0.99 * limit
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Iterate plus ergodic accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub k: usize,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// Multiplier estimate used by the most recent primal step.
    pub q: Vec<f64>,
    /// Step size of the most recent step (the initial `ε⁰` before any step).
    pub eps_k: f64,
    pub ergodic_u_num: Vec<f64>,
    pub ergodic_p_num: Vec<f64>,
    pub ergodic_wsum: f64,
    pub last_delta: Option<DeltaCertificate>,
    pub last_backtracks: usize,
}

impl SolverState {
    pub fn new(problem: &NccpProblem, u0: Vec<f64>, p0: Vec<f64>, eps0: f64) -> Result<Self> {
        check_dim(problem.dim(), u0.len())?;
        check_dim(problem.m(), p0.len())?;
        let (n, m) = (u0.len(), p0.len());
        Ok(SolverState {
            k: 0,
            q: p0.clone(),
            u: u0,
            p: p0,
            eps_k: eps0,
            ergodic_u_num: vec![0.0; n],
            ergodic_p_num: vec![0.0; m],
            ergodic_wsum: 0.0,
            last_delta: None,
            last_backtracks: 0,
        })
    }

    pub fn current(&self) -> PrimalDual {
        PrimalDual { u: self.u.clone(), p: self.p.clone() }
    }

    /// Weighted averages; the current iterate before the first step.
    pub fn ergodic(&self) -> PrimalDual {
        if self.ergodic_wsum > 0.0 {
            let s = 1.0 / self.ergodic_wsum;
            PrimalDual {
                u: self.ergodic_u_num.iter().map(|x| x * s).collect(),
                p: self.ergodic_p_num.iter().map(|x| x * s).collect(),
            }
        } else {
            self.current()
        }
    }

    pub(crate) fn accumulate(&mut self, weight: f64, u: &[f64], p: &[f64]) {
        axpy(weight, u, &mut self.ergodic_u_num);
        axpy(weight, p, &mut self.ergodic_p_num);
        self.ergodic_wsum += weight;
    }
}

/// Value of `Δᵏ(u,v)` and its a-priori lower bound when constants are known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaCertificate {
    pub value: f64,
    pub lower_bound: Option<f64>,
}

// ---------------------------------------------------------------------------
// primal subproblem

/// Linear coefficient `∇G(uᵏ) + (∇Ω(uᵏ))ᵀqᵏ (+ Aᵀqᵏ for linear Φ)`.
pub fn subproblem_gradient(problem: &NccpProblem, u_k: &[f64], q_k: &[f64]) -> Vec<f64> {
    let mut g = problem.g.gradient(u_k);
    axpy(1.0, &problem.theta.omega.jacobian_t_apply(u_k, q_k), &mut g);
    if let PhiMap::Linear { a, .. } = &problem.theta.phi {
        axpy(1.0, &a.tmatvec(q_k), &mut g);
    }
    g
}

/// Nonsmooth part `J + ⟨q, Φ(·)⟩` of the subproblem (linear `Φ` is folded into the gradient).
pub fn subproblem_term<'a>(problem: &'a NccpProblem, q_k: &[f64]) -> Result<ProxTerm<'a>> {
    let n = problem.dim();
    let base = ProxTerm::from_j(&problem.j, n);
    match &problem.theta.phi {
        PhiMap::Zero | PhiMap::Linear { .. } => Ok(base),
        PhiMap::Custom(_) => Err(Error::IncompatibleTags("custom Phi cannot enter the primal subproblem")),
        PhiMap::L1 { direction, weights } => {
            let c = dot(direction, q_k);
            let scale = 1.0 + norm(direction) * norm(q_k);
            if c < -1e-12 * scale {
                return Err(Error::InvalidParameter("<q, direction> < 0: the l1 direction must lie in C".into()));
            }
            let c = c.max(0.0);
            match base {
                ProxTerm::Separable { l1, quad } => {
                    let mut l1 = if l1.is_empty() { vec![0.0; n] } else { l1 };
                    for (i, li) in l1.iter_mut().enumerate() {
                        *li += c * weights.as_ref().map_or(1.0, |w| w[i]);
                    }
                    Ok(ProxTerm::Separable { l1, quad })
                }
                ProxTerm::Custom(f) if c == 0.0 => Ok(ProxTerm::Custom(f)),
                ProxTerm::Custom(_) => Err(Error::IncompatibleTags("custom J combined with an l1 Phi")),
            }
        }
    }
}

fn box_bounds(set: &FeasibleSet) -> Option<(Vec<f64>, Vec<f64>)> {
    match set {
        FeasibleSet::Full(n) => Some((vec![f64::NEG_INFINITY; *n], vec![f64::INFINITY; *n])),
        FeasibleSet::Box { lo, hi } => Some((lo.clone(), hi.clone())),
        FeasibleSet::Ball { .. } => None,
        FeasibleSet::Product(blocks) => {
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for b in blocks {
                let (l, h) = box_bounds(b)?;
                lo.extend(l);
                hi.extend(h);
            }
            Some((lo, hi))
        }
    }
}

/// `argmin_{u∈U} ⟨∇G(uᵏ),u⟩ + J(u) + ⟨qᵏ, ∇Ω(uᵏ)u + Φ(u)⟩ + D(u,uᵏ)/εᵏ`.
///
/// Closed forms cover the half-squared and diagonal cores with separable terms;
/// everything else goes through the accelerated inner solver.
pub fn solve_primal_subproblem(problem: &NccpProblem, u_k: &[f64], q_k: &[f64], eps_k: f64, inner_tol: f64) -> Result<Vec<f64>> {
    check_dim(problem.dim(), u_k.len())?;
    check_dim(problem.m(), q_k.len())?;
    if !(eps_k > 0.0) {
        return Err(Error::NonPositive("eps_k"));
    }
    let g = subproblem_gradient(problem, u_k, q_k);
    let term = subproblem_term(problem, q_k)?;
    solve_linearized(problem, u_k, &g, &term, eps_k, inner_tol)
}

/// `argmin_{u∈U} ⟨g,u⟩ + N(u) + D(u,uᵏ)/ε` for an explicit linear coefficient `g`.
pub fn solve_linearized(problem: &NccpProblem, u_k: &[f64], g: &[f64], term: &ProxTerm<'_>, eps_k: f64, inner_tol: f64) -> Result<Vec<f64>> {
    match &problem.core {
        BregmanCore::HalfSquaredNorm => {
            let mut z = u_k.to_vec();
            axpy(-eps_k, g, &mut z);
            term.prox_on_set(&problem.set, &z, eps_k)
        }
        BregmanCore::DiagonalWeighted(w) => match (term, box_bounds(&problem.set)) {
            (ProxTerm::Separable { l1, quad }, Some((lo, hi))) => Ok((0..u_k.len())
                .map(|i| {
                    let s = eps_k / w[i];
                    let l = l1.get(i).copied().unwrap_or(0.0);
                    let d = quad.get(i).copied().unwrap_or(0.0);
                    let x = soft_threshold(u_k[i] - s * g[i], s * l) / (1.0 + s * d);
                    x.max(lo[i]).min(hi[i])
                })
                .collect()),
            _ => inner_subproblem(problem, u_k, g, term, eps_k, inner_tol),
        },
        BregmanCore::Custom(_) => inner_subproblem(problem, u_k, g, term, eps_k, inner_tol),
    }
}

/// The same subproblem solved by the generic inner solver regardless of structure.
pub fn solve_primal_subproblem_generic(problem: &NccpProblem, u_k: &[f64], q_k: &[f64], eps_k: f64, inner_tol: f64) -> Result<Vec<f64>> {
    check_dim(problem.dim(), u_k.len())?;
    check_dim(problem.m(), q_k.len())?;
    let g = subproblem_gradient(problem, u_k, q_k);
    let term = subproblem_term(problem, q_k)?;
    inner_subproblem(problem, u_k, &g, &term, eps_k, inner_tol)
}

fn inner_subproblem(problem: &NccpProblem, u_k: &[f64], g: &[f64], term: &ProxTerm<'_>, eps_k: f64, inner_tol: f64) -> Result<Vec<f64>> {
    let core = &problem.core;
    let gk = core.gradient(u_k);
    let mut grad_buf = vec![0.0; u_k.len()];
    let mut smooth = |u: &[f64], out: &mut [f64]| -> f64 {
        core.gradient_into(u, &mut grad_buf);
        for i in 0..u.len() {
            out[i] = g[i] + (grad_buf[i] - gk[i]) / eps_k;
        }
        dot(g, u) + core.distance(u, u_k) / eps_k
    };
    let set = &problem.set;
    let mut prox = |z: &[f64], t: f64| term.prox_on_set(set, z, t);
    let lip = core.lipschitz() / eps_k;
    let out = accelerated_prox_grad(u_k, &mut smooth, &mut prox, Some(lip), inner_tol, 1_000_000)?;
    Ok(out.x)
}

// ---------------------------------------------------------------------------
// dual side and certificates

/// `Π(p + ρθ)` onto `C*`, or onto `C* ∩ 𝔅_M` when a bound is given.
pub fn dual_update(cone: &ConeSpec, p_k: &[f64], theta_next: &[f64], rho: f64, dual_bound: Option<f64>) -> Result<Vec<f64>> {
    if !(rho > 0.0) {
        return Err(Error::NonPositive("rho"));
    }
    check_dim(cone.dim(), p_k.len())?;
    check_dim(cone.dim(), theta_next.len())?;
    if let Some(m) = dual_bound {
        if !(m > 0.0) {
            return Err(Error::NonPositive("dual bound M"));
        }
    }
    let mut v = p_k.to_vec();
    axpy(rho, theta_next, &mut v);
    cone.project_multiplier_in_place(dual_bound, &mut v);
    Ok(v)
}

/// `f(v) - f(u) - ⟨∇f(u), v-u⟩`, switching to the trapezoid form `½⟨∇f(v)-∇f(u), v-u⟩`
/// when cancellation swamps the value difference.
fn bregman_remainder(fu: f64, fv: f64, lin: f64, trapezoid: impl FnOnce() -> f64) -> f64 {
    let r = fv - fu - lin;
    let noise = 64.0 * f64::EPSILON * (fu.abs() + fv.abs() + lin.abs());
    if r.abs() <= noise {
        trapezoid()
    } else {
        r
    }
}

/// `Δᵏ(u,v) = D(v,u) - ε[G-remainder + ⟨q, Ω-remainder⟩ + γ/2||Θ(u)-Θ(v)||²]`.
pub fn delta_k(problem: &NccpProblem, u: &[f64], v: &[f64], q_k: &[f64], eps_k: f64, gamma: f64) -> Result<DeltaCertificate> {
    check_dim(problem.dim(), u.len())?;
    check_dim(problem.dim(), v.len())?;
    check_dim(problem.m(), q_k.len())?;
    if !(eps_k > 0.0) {
        return Err(Error::NonPositive("eps_k"));
    }
    if !(gamma > 0.0) {
        return Err(Error::NonPositive("gamma"));
    }
    let d = sub(v, u);
    let gu = problem.g.gradient(u);
    let g_rem = bregman_remainder(problem.g.value(u), problem.g.value(v), dot(&gu, &d), || {
        0.5 * dot(&sub(&problem.g.gradient(v), &gu), &d)
    });
    let omega = &problem.theta.omega;
    let o_rem = if omega.is_affine() {
        0.0
    } else {
        let ou = dot(q_k, &omega.value(u));
        let ov = dot(q_k, &omega.value(v));
        let ju = omega.jacobian_t_apply(u, q_k);
        bregman_remainder(ou, ov, dot(&ju, &d), || 0.5 * dot(&sub(&omega.jacobian_t_apply(v, q_k), &ju), &d))
    };
    let th = dist_sq(&problem.theta(u), &problem.theta(v));
    let value = problem.core.distance(v, u) - eps_k * (g_rem + o_rem + 0.5 * gamma * th);
    let lower_bound = delta_lower_bound(problem, q_k, eps_k, gamma).map(|c| 0.5 * c * dist_sq(u, v));
    Ok(DeltaCertificate { value, lower_bound })
}

/// `β - ε(B_G + B_Ω + γτ²)` using `B_Ω = ||q|| Σ B_{Ω_j}` when only components are declared.
fn delta_lower_bound(problem: &NccpProblem, q_k: &[f64], eps_k: f64, gamma: f64) -> Option<f64> {
    let b_g = problem.g.lipschitz_grad?;
    let b_om = if problem.theta.omega.is_affine() {
        0.0
    } else if let Some(b) = problem.theta.b_omega {
        b
    } else {
        norm(q_k) * problem.theta.b_omega_components.as_ref()?.iter().sum::<f64>()
    };
    let tau = problem.theta.theta_lipschitz?;
    Some(problem.core.beta() - eps_k * (b_g + b_om + gamma * tau * tau))
}

/// Result of one primal-dual step before it is folded into a state.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub u_next: Vec<f64>,
    pub p_next: Vec<f64>,
    pub q: Vec<f64>,
    pub eps: f64,
    pub delta: DeltaCertificate,
    pub backtracks: usize,
}

/// `qᵏ`, `uᵏ⁺¹`, `pᵏ⁺¹` for a given `εᵏ`.
pub fn step_with_eps(problem: &NccpProblem, state: &SolverState, config: &SolverConfig, eps: f64) -> Result<StepResult> {
    let gamma = config.gamma;
    let tol = config.inner_tol();
    let (q, u_next) = if config.misorder_dual {
        let u_next = solve_primal_subproblem(problem, &state.u, &state.p, eps, tol)?;
        let q = dual_update(&problem.cone, &state.p, &problem.theta(&u_next), gamma, config.dual_bound)?;
        (q, u_next)
    } else {
        let q = dual_update(&problem.cone, &state.p, &problem.theta(&state.u), gamma, config.dual_bound)?;
        let u_next = solve_primal_subproblem(problem, &state.u, &q, eps, tol)?;
        (q, u_next)
    };
    let p_next = dual_update(&problem.cone, &state.p, &problem.theta(&u_next), gamma, config.dual_bound)?;
    let delta = delta_k(problem, &state.u, &u_next, &q, eps, gamma)?;
    Ok(StepResult { u_next, p_next, q, eps, delta, backtracks: 0 })
}

/// Backtracked step: `ε = η^i εᵏ⁻¹` for the smallest `i` with `Δᵏ ≥ 0`.
pub fn backtracking_search(problem: &NccpProblem, state: &SolverState, config: &SolverConfig) -> Result<StepResult> {
    let eta = match config.eps_mode {
        EpsMode::Backtracking { eta } => eta,
        EpsMode::Fixed => return Err(Error::InvalidParameter("backtracking step needs backtracking mode".into())),
    };
    let mut eps = state.eps_k;
    for i in 0..=config.max_backtracks {
        let mut r = step_with_eps(problem, state, config, eps)?;
        if r.delta.value >= 0.0 {
            r.backtracks = i;
            return Ok(r);
        }
        eps *= eta;
    }
    Err(Error::BacktrackingCap { trials: config.max_backtracks })
}

pub(crate) fn apply_step(state: &SolverState, r: StepResult) -> SolverState {
    let mut next = state.clone();
    next.accumulate(r.eps, &r.u_next, &r.q);
    next.k += 1;
    next.u = r.u_next;
    next.p = r.p_next;
    next.q = r.q;
    next.eps_k = r.eps;
    next.last_delta = Some(r.delta);
    next.last_backtracks = r.backtracks;
    next
}

/// One VAPP (or VAPP-M) step with `εᵏ = state.eps_k`.
pub fn vapp_step(problem: &NccpProblem, state: &SolverState, config: &SolverConfig) -> Result<SolverState> {
    let r = step_with_eps(problem, state, config, state.eps_k)?;
    Ok(apply_step(state, r))
}

/// One backtracked VAPP (or VAPP-M) step.
pub fn backtracking_step(problem: &NccpProblem, state: &SolverState, config: &SolverConfig) -> Result<SolverState> {
    let r = backtracking_search(problem, state, config)?;
    Ok(apply_step(state, r))
}

/// Dispatches on `config.eps_mode`.
pub fn step(problem: &NccpProblem, state: &SolverState, config: &SolverConfig) -> Result<SolverState> {
    match config.eps_mode {
        EpsMode::Fixed => vapp_step(problem, state, config),
        EpsMode::Backtracking { .. } => backtracking_step(problem, state, config),
    }
}

/// Both sides of the per-iteration descent inequality against a reference `(u*,p*)`.
///
/// `ε` on the left-hand side is `εᵏ` for both brackets.
pub fn lemma1_terms(
    problem: &NccpProblem,
    reference: &PrimalDual,
    prev: &PrimalDual,
    next: &PrimalDual,
    q_k: &[f64],
    eps_k: f64,
    gamma: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    let c = eps_k / (2.0 * gamma);
    let (us, ps) = (&reference.u, &reference.p);
    let lhs = (problem.core.distance(us, &next.u) + c * dist_sq(ps, &next.p))
        - (problem.core.distance(us, &prev.u) + c * dist_sq(ps, &prev.p));
    let rhs = eps_k * (lagrangian(problem, us, q_k)? - lagrangian(problem, &next.u, ps)?) - (delta + c * dist_sq(q_k, &prev.p));
    Ok((lhs, rhs))
}

// ---------------------------------------------------------------------------
// run loop

/// Time source for trace timestamps; the default reports zero.
pub trait Clock {
    fn now_s(&self) -> f64;
}

pub struct NoClock;

impl Clock for NoClock {
    fn now_s(&self) -> f64 {
        0.0
    }
}

/// Everything one iteration contributes to the trace beyond generic metrics.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub q: Vec<f64>,
    pub eps: f64,
    /// Dual step length (`γ` for VAPP, `ρᵏ` for VAPP-S).
    pub rho: f64,
    pub delta: Option<f64>,
    pub lemma: Option<(f64, f64)>,
    pub a_k: Option<f64>,
    pub b_k: Option<f64>,
    pub kkt_applicable: bool,
}

/// Output of a full run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub solution: PrimalDual,
    pub ergodic: PrimalDual,
    pub trace: Vec<TraceRecord>,
    pub iterations: usize,
    pub converged: bool,
    pub state: SolverState,
    /// Time spent inside steps only, per the supplied clock.
    pub step_time_s: f64,
}

/// Generic driver shared by all variants: diagnostics, stopping and the divergence guard.
pub fn drive(
    problem: &NccpProblem,
    config: &SolverConfig,
    mut state: SolverState,
    clock: &dyn Clock,
    step_fn: &mut dyn FnMut(&SolverState) -> Result<(SolverState, StepReport)>,
) -> Result<RunOutput> {
    let t0 = clock.now_s();
    let mut step_time = 0.0;
    let mut trace = Vec::new();
    let stride = config.trace_stride.max(1);
    let reference = problem.reference.as_ref().map(|r| PrimalDual { u: r.u_star.clone(), p: r.p_star.clone() });
    let mut converged = false;
    for _ in 0..config.max_iter {
        let prev = state.current();
        let s0 = clock.now_s();
        let (next, report) = step_fn(&state)?;
        step_time += clock.now_s() - s0;
        let un = norm(&next.u);
        if !(un <= 1e12) {
            return Err(Error::Divergence { iteration: next.k, norm: un });
        }
        state = next;
        let cur = state.current();
        let erg = state.ergodic();
        let obj = problem.objective(&cur.u);
        let feas = feasibility_residual(&problem.cone, &problem.theta(&cur.u))?;
        let obj_e = problem.objective(&erg.u);
        let theta_e = problem.theta(&erg.u);
        let feas_e = feasibility_residual(&problem.cone, &theta_e)?;
        let kkt = if report.kkt_applicable && config.diagnostics {
            Some(kkt_residual(problem, &prev, &cur, &report.q, report.eps, report.rho)?)
        } else {
            None
        };
        let dist_sq = match &reference {
            Some(r) if config.diagnostics => Some(generalized_distance_sq(&problem.core, report.rho, report.eps, &cur, r)?),
            _ => None,
        };
        if config.strict_invariants {
            if let Some((l, r)) = report.lemma {
                if r - l < -1e-8 {
                    return Err(Error::InvariantViolated { what: "descent inequality", iteration: state.k, slack: r - l });
                }
            }
        }
        // stopping test
        let meets = |f: f64, o: f64, comp: f64| {
            let gap = match &problem.reference {
                Some(r) => (o - r.opt_value).abs(),
                None => {
                    let step_res = kkt.unwrap_or_else(|| dist(&prev.u, &cur.u) + dist(&prev.p, &cur.p));
                    comp.abs().max(step_res)
                }
            };
            f <= config.tol_feas && gap <= config.tol_obj
        };
        let ergodic_ok = || meets(feas_e, obj_e, dot(&erg.p, &theta_e));
        let last_ok = || meets(feas, obj, dot(&cur.p, &problem.theta(&cur.u)));
        converged = match config.stop_rule {
            StopRule::Ergodic => ergodic_ok(),
            StopRule::LastIterate => last_ok(),
            StopRule::Either => ergodic_ok() || last_ok(),
        };
        let last = converged || state.k == config.max_iter;
        if state.k.is_multiple_of(stride) || last {
            trace.push(TraceRecord {
                iter: state.k,
                wall_time_s: clock.now_s() - t0,
                obj,
                obj_ergodic: obj_e,
                feas,
                feas_ergodic: feas_e,
                dual_norm: norm(&cur.p),
                eps_k: report.eps,
                delta_k: report.delta,
                lemma1_lhs: report.lemma.map(|x| x.0),
                lemma1_rhs: report.lemma.map(|x| x.1),
                kkt_res: kkt,
                dist_sq,
                a_k: report.a_k,
                b_k: report.b_k,
                rho_k: report.a_k.map(|_| report.rho),
            });
        }
        if converged {
            break;
        }
    }
    Ok(RunOutput {
        solution: state.current(),
        ergodic: state.ergodic(),
        iterations: state.k,
        converged,
        trace,
        state,
        step_time_s: step_time,
    })
}

/// Runs VAPP / VAPP-M from `start` (zeros when `None`).
pub fn run(problem: &NccpProblem, config: &SolverConfig, start: Option<PrimalDual>) -> Result<RunOutput> {
    run_with_clock(problem, config, start, &NoClock)
}

pub fn run_with_clock(problem: &NccpProblem, config: &SolverConfig, start: Option<PrimalDual>, clock: &dyn Clock) -> Result<RunOutput> {
    problem.check_dims()?;
    config.validate(problem)?;
    let start = start.unwrap_or_else(|| PrimalDual { u: vec![0.0; problem.dim()], p: vec![0.0; problem.m()] });
    let mut p0 = start.p.clone();
    problem.cone.project_multiplier_in_place(config.dual_bound, &mut p0);
    let mut u0 = start.u.clone();
    problem.set.project_in_place(&mut u0);
    let state = SolverState::new(problem, u0, p0, config.eps0)?;
    let reference = problem.reference.as_ref().map(|r| PrimalDual { u: r.u_star.clone(), p: r.p_star.clone() });
    let mut step_fn = |s: &SolverState| -> Result<(SolverState, StepReport)> {
        let next = step(problem, s, config)?;
        let delta = next.last_delta.expect("set by every step");
        if config.strict_invariants {
            if let (EpsMode::Fixed, Some(lb)) = (config.eps_mode, delta.lower_bound) {
                if delta.value < lb - 1e-9 {
                    return Err(Error::InvariantViolated { what: "delta lower bound", iteration: next.k, slack: delta.value - lb });
                }
            }
        }
        let lemma = match &reference {
            Some(r) if config.diagnostics => Some(lemma1_terms(
                problem,
                r,
                &s.current(),
                &next.current(),
                &next.q,
                next.eps_k,
                config.gamma,
                delta.value,
            )?),
            _ => None,
        };
        let report = StepReport {
            q: next.q.clone(),
            eps: next.eps_k,
            rho: config.gamma,
            delta: Some(delta.value),
            lemma,
            a_k: None,
            b_k: None,
            kkt_applicable: true,
        };
        Ok((next, report))
    };
    drive(problem, config, state, clock, &mut step_fn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::oracles::{ClosureFn, ConeMapOracle, NonsmoothTerm, Reference, SmoothOracle};

    fn one_d() -> NccpProblem {
        let g = SmoothOracle::new(ClosureFn::new(1, |u| 0.5 * u[0] * u[0], |u, o| o[0] = u[0]))
            .with_lipschitz(1.0)
            .with_strong_convexity(1.0);
        let theta = ConeMapOracle::affine(DenseMatrix::identity(1), vec![1.0]).unwrap();
        NccpProblem::new(g, NonsmoothTerm::Zero, theta, ConeSpec::Zero(1)).unwrap()
    }

    #[test]
    fn worked_step() {
        let pr = one_d();
        let cfg = SolverConfig { gamma: 1.0, eps0: 0.5, ..Default::default() };
        let s0 = SolverState::new(&pr, vec![0.0], vec![0.0], 0.5).unwrap();
        let s1 = vapp_step(&pr, &s0, &cfg).unwrap();
        assert_eq!(s1.q, vec![-1.0]);
        assert!((s1.u[0] - 0.5).abs() < 1e-15);
        assert!((s1.p[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn saddle_is_fixed_point() {
        let pr = one_d();
        let cfg = SolverConfig { gamma: 1.0, eps0: 0.4, ..Default::default() };
        let s0 = SolverState::new(&pr, vec![1.0], vec![-1.0], 0.4).unwrap();
        let s1 = vapp_step(&pr, &s0, &cfg).unwrap();
        assert_eq!(s1.u, vec![1.0]);
        assert_eq!(s1.p, vec![-1.0]);
    }

    #[test]
    fn dual_update_examples() {
        let r = ConeSpec::NonnegOrthant(1);
        assert_eq!(dual_update(&r, &[0.0], &[-2.0], 1.0, None).unwrap(), vec![0.0]);
        let z = ConeSpec::Zero(1);
        assert_eq!(dual_update(&z, &[-0.5], &[0.25], 1.0, None).unwrap(), vec![-0.25]);
        assert!((dual_update(&r, &[0.9], &[1.0], 1.0, Some(1.0)).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn delta_examples() {
        // Θ(u) = u
        let g = SmoothOracle::new(ClosureFn::new(1, |u| 0.5 * u[0] * u[0], |u, o| o[0] = u[0])).with_lipschitz(1.0);
        let theta = ConeMapOracle::affine(DenseMatrix::identity(1), vec![0.0]).unwrap();
        let pr = NccpProblem::new(g, NonsmoothTerm::Zero, theta, ConeSpec::Zero(1)).unwrap();
        assert_eq!(delta_k(&pr, &[0.3], &[0.3], &[0.0], 0.25, 1.0).unwrap().value, 0.0);
        let d = delta_k(&pr, &[0.0], &[1.0], &[0.0], 0.25, 1.0).unwrap();
        assert!((d.value - 0.25).abs() < 1e-15);
        assert!((d.lower_bound.unwrap() - 0.25).abs() < 1e-12);
        let d = delta_k(&pr, &[0.0], &[1.0], &[0.0], 0.6, 1.0).unwrap();
        assert!((d.value + 0.1).abs() < 1e-15);
    }

    #[test]
    fn run_converges_on_one_d() {
        let pr = one_d();
        let cfg = SolverConfig { gamma: 1.0, eps0: 0.4, max_iter: 200, tol_feas: 1e-7, tol_obj: 1e-7, stop_rule: StopRule::LastIterate, ..Default::default() };
        let out = run(&pr, &cfg, None).unwrap();
        assert!((out.solution.u[0] - 1.0).abs() < 1e-6);
        assert!((out.solution.p[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn misordered_dual_breaks_descent() {
        let pr = one_d()
            .with_reference(Reference { u_star: vec![1.0], p_star: vec![-1.0], opt_value: 0.5 })
            .unwrap();
        let cfg = SolverConfig { gamma: 1.0, eps0: 0.4, max_iter: 50, misorder_dual: true, ..Default::default() };
        let out = run(&pr, &cfg, None).unwrap();
        let worst = out.trace.iter().filter_map(|r| r.lemma1_slack()).fold(f64::INFINITY, f64::min);
        assert!(worst < -1e-8, "worst slack {worst}");
    }
}
