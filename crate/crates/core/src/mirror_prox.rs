//! Euclidean Mirror-Prox (extragradient) on `min_{u∈U} max_{p∈C*∩𝔅_M} G(u) + ⟨p, Θ(u)⟩`.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_dim, Error, Result};
use crate::lagrangian::PrimalDual;
use crate::linalg::{axpy, norm, power_iteration};
use crate::oracles::NccpProblem;
use crate::vapp::{drive, Clock, RunOutput, SolverConfig, SolverState, StepReport};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MirrorProxState {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub u_tilde: Vec<f64>,
    pub p_tilde: Vec<f64>,
    pub gamma_k: f64,
}

impl MirrorProxState {
    pub fn new(u: Vec<f64>, p: Vec<f64>, gamma_k: f64) -> Self {
        MirrorProxState { u_tilde: u.clone(), p_tilde: p.clone(), u, p, gamma_k }
    }
}

fn check_smooth(problem: &NccpProblem) -> Result<()> {
    if !problem.j.is_zero() {
        return Err(Error::IncompatibleTags("mirror-prox needs J = 0"));
    }
    if !problem.theta.phi.is_differentiable() {
        return Err(Error::NonDifferentiablePhi);
    }
    Ok(())
}

/// `∇_u L(u,p) = ∇G(u) + ∇Θ(u)ᵀp`
fn grad_u(problem: &NccpProblem, u: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    let mut g = problem.g.gradient(u);
    axpy(1.0, &problem.theta.theta_jacobian_t_apply(u, p)?, &mut g);
    Ok(g)
}

fn primal_move(problem: &NccpProblem, u: &[f64], g: &[f64], gamma: f64) -> Vec<f64> {
    let mut v = u.to_vec();
    axpy(-gamma, g, &mut v);
    problem.set.project_in_place(&mut v);
    v
}

fn dual_move(problem: &NccpProblem, p: &[f64], theta: &[f64], gamma: f64, bound: Option<f64>) -> Vec<f64> {
    let mut v = p.to_vec();
    axpy(gamma, theta, &mut v);
    problem.cone.project_multiplier_in_place(bound, &mut v);
    v
}

/// Extrapolation at `(uᵏ,pᵏ)`, then the update from `(uᵏ,pᵏ)` with gradients at `(ũᵏ,p̃ᵏ)`.
pub fn mirror_prox_step(problem: &NccpProblem, state: &MirrorProxState, gamma_k: f64, dual_bound: Option<f64>) -> Result<MirrorProxState> {
    check_smooth(problem)?;
    if !(gamma_k > 0.0) {
        return Err(Error::NonPositive("gamma_k"));
    }
    check_dim(problem.dim(), state.u.len())?;
    check_dim(problem.m(), state.p.len())?;
    let (u, p) = (&state.u, &state.p);
    let u_tilde = primal_move(problem, u, &grad_u(problem, u, p)?, gamma_k);
    let p_tilde = dual_move(problem, p, &problem.theta(u), gamma_k, dual_bound);
    let u_next = primal_move(problem, u, &grad_u(problem, &u_tilde, &p_tilde)?, gamma_k);
    let p_next = dual_move(problem, p, &problem.theta(&u_tilde), gamma_k, dual_bound);
    Ok(MirrorProxState { u: u_next, p: p_next, u_tilde, p_tilde, gamma_k })
}

/// Safety factor on `1/L̂`: at exactly `γ = 1/L` the extragradient map has a unit
/// eigenvalue `1 - x + x²` (`x = γλ_max = 1`) and the top direction never contracts.
pub const STEP_SAFETY: f64 = 0.9;

/// `STEP_SAFETY / L̂`; see [`saddle_lipschitz_estimate`].
pub fn mirror_prox_step_size(problem: &NccpProblem, u0: &[f64], p0: &[f64]) -> Result<f64> {
    Ok(STEP_SAFETY / saddle_lipschitz_estimate(problem, u0, p0)?)
}

/// `L̂`: spectral norm of the saddle operator's Jacobian at `(u⁰,p⁰)`.
///
/// The `∇²_uu L` block is applied by central differences of `∇_u L(·,p⁰)`.
pub fn saddle_lipschitz_estimate(problem: &NccpProblem, u0: &[f64], p0: &[f64]) -> Result<f64> {
    check_smooth(problem)?;
    let n = problem.dim();
    let m = problem.m();
    let hess = |x: &[f64]| -> Result<Vec<f64>> {
        let nx = norm(x);
        if nx == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let h = 1e-4 * (1.0 + norm(u0)) / nx;
        let mut up = u0.to_vec();
        axpy(h, x, &mut up);
        let mut um = u0.to_vec();
        axpy(-h, x, &mut um);
        let mut d = grad_u(problem, &up, p0)?;
        axpy(-1.0, &grad_u(problem, &um, p0)?, &mut d);
        Ok(d.iter().map(|v| v / (2.0 * h)).collect())
    };
    let theta = &problem.theta;
    let bt = |y: &[f64]| theta.theta_jacobian_t_apply(u0, y);
    let b = |x: &[f64]| -> Vec<f64> {
        let mut out = theta.omega.jacobian_apply(u0, x);
        if let crate::oracles::PhiMap::Linear { a, .. } = &theta.phi {
            axpy(1.0, &a.matvec(x), &mut out);
        }
        out
    };
    let mut failure = None;
    // JᵀJ with J = [[H, Bᵀ], [-B, 0]]
    let lam = power_iteration(n + m, 500, 1e-10, |w, out| {
        let (x, y) = w.split_at(n);
        let jx = (|| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut top = hess(x)?;
            axpy(1.0, &bt(y)?, &mut top);
            let bot: Vec<f64> = b(x).iter().map(|v| -v).collect();
            let mut t2 = hess(&top)?;
            axpy(-1.0, &bt(&bot)?, &mut t2);
            Ok((t2, b(&top)))
        })();
        match jx {
            Ok((t, bb)) => {
                out[..n].copy_from_slice(&t);
                out[n..].copy_from_slice(&bb);
            }
            Err(e) => {
                failure = Some(e);
                out.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let l = lam.max(0.0).sqrt();
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidParameter("degenerate saddle operator at the start point".into()));
    }
    Ok(l)
}

/// Mirror-Prox from `start` (zeros when `None`); `config.eps0 ≤ 0` selects the estimated step.
///
/// The trace uses the shared schema; the ergodic pair averages `(ũᵏ, p̃ᵏ)` with weights `γ`.
pub fn run_mirror_prox(problem: &NccpProblem, config: &SolverConfig, start: Option<PrimalDual>, clock: &dyn Clock) -> Result<RunOutput> {
    problem.check_dims()?;
    check_smooth(problem)?;
    let start = start.unwrap_or_else(|| PrimalDual { u: vec![0.0; problem.dim()], p: vec![0.0; problem.m()] });
    let mut u0 = start.u;
    problem.set.project_in_place(&mut u0);
    let mut p0 = start.p;
    problem.cone.project_multiplier_in_place(config.dual_bound, &mut p0);
    let gamma = if config.eps0 > 0.0 { config.eps0 } else { mirror_prox_step_size(problem, &u0, &p0)? };
    let state = SolverState::new(problem, u0, p0, gamma)?;
    let bound = config.dual_bound;
    let mut step_fn = |s: &SolverState| -> Result<(SolverState, StepReport)> {
        let mp = mirror_prox_step(problem, &MirrorProxState::new(s.u.clone(), s.p.clone(), gamma), gamma, bound)?;
        let mut next = s.clone();
        next.accumulate(gamma, &mp.u_tilde, &mp.p_tilde);
        next.k += 1;
        next.u = mp.u;
        next.p = mp.p;
        next.q = mp.p_tilde.clone();
        next.eps_k = gamma;
        let report = StepReport { q: mp.p_tilde, eps: gamma, rho: gamma, kkt_applicable: false, ..Default::default() };
        Ok((next, report))
    };
    drive(problem, config, state, clock, &mut step_fn)
}
