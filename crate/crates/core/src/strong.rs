//! VAPP-S / VAPP-SM: variable parameters for strongly convex `G`.

use alloc::vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::lagrangian::{lagrangian, PrimalDual};
use crate::linalg::dist_sq;
use crate::oracles::NccpProblem;
use crate::vapp::{dual_update, drive, solve_primal_subproblem, Clock, NoClock, RunOutput, SolverConfig, SolverState, StepReport};

/// Constants of the strongly convex schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StrongSchedule {
    pub eta: f64,
    pub c0: f64,
    pub beta_g: f64,
    pub b_g: f64,
    pub b_omega: f64,
    pub tau: f64,
}

impl StrongSchedule {
    /// `η = β_G/(2τ²)`, `c₀ = 2(B_G + B_Ω)/β_G + 2`.
    pub fn new(beta_g: f64, b_g: f64, b_omega: f64, tau: f64) -> Result<Self> {
        if !(beta_g > 0.0) {
            return Err(Error::NonPositive("beta_G"));
        }
        if !(tau > 0.0) {
            return Err(Error::NonPositive("tau"));
        }
        if b_g < 0.0 || b_omega < 0.0 {
            return Err(Error::InvalidParameter("negative smoothness constant".into()));
        }
        Ok(StrongSchedule {
            eta: beta_g / (2.0 * tau * tau),
            c0: 2.0 * (b_g + b_omega) / beta_g + 2.0,
            beta_g,
            b_g,
            b_omega,
            tau,
        })
    }

    /// Reads the constants off a problem (after any `J → G` curvature shift).
    pub fn from_problem(problem: &NccpProblem, dual_bound: Option<f64>) -> Result<Self> {
        let beta_g = problem.g.strong_convexity.ok_or(Error::MissingConstant("β_G"))?;
        let b_g = problem.g.lipschitz_grad.ok_or(Error::MissingConstant("B_G"))?;
        let b_om = problem.theta.effective_b_omega(dual_bound).ok_or(Error::MissingConstant("B_Omega"))?;
        let tau = problem.theta.theta_lipschitz.ok_or(Error::MissingConstant("tau"))?;
        Self::new(beta_g, b_g, b_om, tau)
    }
}

/// `(ρᵏ, εᵏ) = ((k+1)η, 1/((k+1)ητ² + B_G + B_Ω + β_G))`
pub fn params_strong(s: &StrongSchedule, k: usize) -> (f64, f64) {
    let k1 = (k + 1) as f64;
    let rho = k1 * s.eta;
    let eps = 1.0 / (k1 * s.eta * s.tau * s.tau + s.b_g + s.b_omega + s.beta_g);
    (rho, eps)
}

/// `aᵏ = (c₀+k)[1/(2εᵏ) - β_G/2]`, `bᵏ = (c₀+k)/(2ρᵏ)`
pub fn weights_ab(s: &StrongSchedule, k: usize) -> (f64, f64) {
    let (rho, eps) = params_strong(s, k);
    let w = s.c0 + k as f64;
    (w * (0.5 / eps - 0.5 * s.beta_g), w / (2.0 * rho))
}

fn check_core(problem: &NccpProblem) -> Result<()> {
    if problem.core.is_half_squared() {
        Ok(())
    } else {
        Err(Error::IncompatibleTags("the strongly convex variant requires K = ½||·||²"))
    }
}

/// One VAPP-S step (VAPP-SM when `dual_bound` is set). Ergodic weights are `c₀ + k`.
pub fn vapp_s_step(problem: &NccpProblem, state: &SolverState, schedule: &StrongSchedule, dual_bound: Option<f64>, inner_tol: f64) -> Result<SolverState> {
    check_core(problem)?;
    let k = state.k;
    let (rho, eps) = params_strong(schedule, k);
    let q = dual_update(&problem.cone, &state.p, &problem.theta(&state.u), rho, dual_bound)?;
    let u_next = solve_primal_subproblem(problem, &state.u, &q, eps, inner_tol)?;
    let p_next = dual_update(&problem.cone, &state.p, &problem.theta(&u_next), rho, dual_bound)?;
    let mut next = state.clone();
    next.accumulate(schedule.c0 + k as f64, &u_next, &q);
    next.k += 1;
    next.u = u_next;
    next.p = p_next;
    next.q = q;
    next.eps_k = eps;
    next.last_delta = None;
    next.last_backtracks = 0;
    Ok(next)
}

/// Both sides of the weighted descent inequality for one VAPP-S step.
pub fn lemma2_terms(
    problem: &NccpProblem,
    schedule: &StrongSchedule,
    reference: &PrimalDual,
    prev: &SolverState,
    next: &SolverState,
) -> Result<(f64, f64)> {
    let k = prev.k;
    let (a0, b0) = weights_ab(schedule, k);
    let (a1, b1) = weights_ab(schedule, k + 1);
    let (us, ps) = (&reference.u, &reference.p);
    let lhs = (a1 * dist_sq(us, &next.u) + b1 * dist_sq(ps, &next.p)) - (a0 * dist_sq(us, &prev.u) + b0 * dist_sq(ps, &prev.p));
    let w = schedule.c0 + k as f64;
    let rhs = w * (lagrangian(problem, us, &next.q)? - lagrangian(problem, &next.u, ps)?)
        - 0.5 * schedule.c0 * schedule.beta_g * dist_sq(&prev.u, &next.u)
        - dist_sq(&next.q, &prev.p) / (2.0 * schedule.eta);
    Ok((lhs, rhs))
}

/// Runs VAPP-S / VAPP-SM. A strongly convex diagonal `J` is shifted into `G` first.
pub fn run_strong(problem: &NccpProblem, config: &SolverConfig, start: Option<PrimalDual>) -> Result<RunOutput> {
    run_strong_with_clock(problem, config, start, &NoClock)
}

pub fn run_strong_with_clock(problem: &NccpProblem, config: &SolverConfig, start: Option<PrimalDual>, clock: &dyn Clock) -> Result<RunOutput> {
    let problem = problem.shift_strong_convexity_from_j();
    problem.check_dims()?;
    check_core(&problem)?;
    let schedule = StrongSchedule::from_problem(&problem, config.dual_bound)?;
    let start = start.unwrap_or_else(|| PrimalDual { u: vec![0.0; problem.dim()], p: vec![0.0; problem.m()] });
    let mut p0 = start.p;
    problem.cone.project_multiplier_in_place(config.dual_bound, &mut p0);
    let mut u0 = start.u;
    problem.set.project_in_place(&mut u0);
    let state = SolverState::new(&problem, u0, p0, params_strong(&schedule, 0).1)?;
    let reference = problem.reference.as_ref().map(|r| PrimalDual { u: r.u_star.clone(), p: r.p_star.clone() });
    let tol = config.inner_tol();
    let pr = &problem;
    let mut step_fn = |s: &SolverState| -> Result<(SolverState, StepReport)> {
        let next = vapp_s_step(pr, s, &schedule, config.dual_bound, tol)?;
        let (rho, eps) = params_strong(&schedule, s.k);
        let (a, b) = weights_ab(&schedule, s.k + 1);
        let lemma = match &reference {
            Some(r) if config.diagnostics => Some(lemma2_terms(pr, &schedule, r, s, &next)?),
            _ => None,
        };
        let report = StepReport { q: next.q.clone(), eps, rho, delta: None, lemma, a_k: Some(a), b_k: Some(b), kkt_applicable: true };
        Ok((next, report))
    };
    drive(pr, config, state, clock, &mut step_fn)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let s = StrongSchedule::new(1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(s.eta, 0.5);
        assert_eq!(s.c0, 4.0);
        let (rho, eps) = params_strong(&s, 0);
        assert_eq!(rho, 0.5);
        assert!((eps - 0.4).abs() < 1e-15);
        let (rho, eps) = params_strong(&s, 9);
        assert_eq!(rho, 5.0);
        assert!((eps - 1.0 / 7.0).abs() < 1e-15);
        let (a, b) = weights_ab(&s, 0);
        assert!((a - 3.0).abs() < 1e-14);
        assert_eq!(b, 4.0);
    }

    #[test]
    fn weight_bounds_hold() {
        let s = StrongSchedule::new(0.7, 3.0, 1.5, 2.0).unwrap();
        assert!(s.c0 >= 1.0);
        let mut prev = params_strong(&s, 0);
        for k in 0..10_000 {
            let (a, b) = weights_ab(&s, k);
            let k1 = (k + 1) as f64;
            assert!(a >= 0.25 * s.beta_g * k1 * k1);
            assert!(b >= 0.5 / s.eta);
            if k > 0 {
                let cur = params_strong(&s, k);
                assert!(cur.0 > prev.0 && cur.1 < prev.1);
                prev = cur;
            }
        }
    }
}
