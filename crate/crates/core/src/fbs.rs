//! Forward-backward splitting view of VAPP: `wᵏ⁺¹ = (Γᵏ + A)⁻¹(Γᵏ - B)wᵏ`.
//!
//! Restricted to problems whose `Φ` is zero or linear. This is a verification view;
//! the resolvent reuses the VAPP subproblem solver.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::inner::ProxTerm;
use crate::lagrangian::PrimalDual;
use crate::linalg::{axpy, scaled, sub};
use crate::oracles::{NccpProblem, PhiMap};
use crate::vapp::{apply_step, delta_k, dual_update, solve_linearized, SolverConfig, SolverState, StepResult};

/// Block evaluation `(primal; dual)` of an operator on `w = (u; p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorEval {
    pub primal_part: Vec<f64>,
    pub dual_part: Vec<f64>,
}

impl OperatorEval {
    pub fn inner(&self, w: &PrimalDual) -> f64 {
        crate::linalg::dot(&self.primal_part, &w.u) + crate::linalg::dot(&self.dual_part, &w.p)
    }

    pub fn minus(&self, other: &OperatorEval) -> OperatorEval {
        OperatorEval { primal_part: sub(&self.primal_part, &other.primal_part), dual_part: sub(&self.dual_part, &other.dual_part) }
    }
}

fn check(problem: &NccpProblem, w: &PrimalDual, gamma: f64) -> Result<()> {
    if !problem.theta.phi.is_differentiable() {
        return Err(Error::NonDifferentiablePhi);
    }
    if !(gamma > 0.0) {
        return Err(Error::NonPositive("gamma"));
    }
    check_dim(problem.dim(), w.u.len())?;
    check_dim(problem.m(), w.p.len())
}

/// `Π(p + γΘ(u))` onto `C*`.
fn shifted_projection(problem: &NccpProblem, p: &[f64], u: &[f64], gamma: f64) -> Vec<f64> {
    let mut v = p.to_vec();
    axpy(gamma, &problem.theta(u), &mut v);
    problem.cone.project_dual_in_place(&mut v);
    v
}

/// `B(w) = (∇G(u) + (∇Ω(u)+∇Φ)ᵀΠ(p+γΘ(u)); -[Π(p+γΘ(u)) - p]/γ)`
pub fn op_b(problem: &NccpProblem, w: &PrimalDual, gamma: f64) -> Result<OperatorEval> {
    check(problem, w, gamma)?;
    let pi = shifted_projection(problem, &w.p, &w.u, gamma);
    let mut primal = problem.g.gradient(&w.u);
    axpy(1.0, &problem.theta.theta_jacobian_t_apply(&w.u, &pi)?, &mut primal);
    let dual = pi.iter().zip(&w.p).map(|(a, b)| -(a - b) / gamma).collect();
    Ok(OperatorEval { primal_part: primal, dual_part: dual })
}

fn phi_t_apply(problem: &NccpProblem, q: &[f64]) -> Option<Vec<f64>> {
    match &problem.theta.phi {
        PhiMap::Linear { a, .. } => Some(a.tmatvec(q)),
        _ => None,
    }
}

/// `Γᵏ(w) = (∇K(u)/εᵏ + ∇Φᵀqᵏ; [p - Π(pᵏ + γΘ(u))]/γ)` with `qᵏ = Π(pᵏ + γΘ(uᵏ))`.
pub fn gamma_op(problem: &NccpProblem, w: &PrimalDual, anchor: &PrimalDual, eps_k: f64, gamma: f64) -> Result<OperatorEval> {
    check(problem, w, gamma)?;
    check(problem, anchor, gamma)?;
    if !(eps_k > 0.0) {
        return Err(Error::NonPositive("eps_k"));
    }
    let q = shifted_projection(problem, &anchor.p, &anchor.u, gamma);
    let mut primal = scaled(1.0 / eps_k, &problem.core.gradient(&w.u));
    if let Some(at) = phi_t_apply(problem, &q) {
        axpy(1.0, &at, &mut primal);
    }
    let pi = shifted_projection(problem, &anchor.p, &w.u, gamma);
    let dual = w.p.iter().zip(&pi).map(|(a, b)| (a - b) / gamma).collect();
    Ok(OperatorEval { primal_part: primal, dual_part: dual })
}

/// One resolvent step from `state`, using `εᵏ = state.eps_k`.
///
/// The forward point `z = (Γᵏ - B)(wᵏ)` is formed from the two operator evaluations;
/// the primal block of `(Γᵏ + A)w = z` is then a Bregman-proximal problem and the
/// dual block gives `pᵏ⁺¹ = Π(pᵏ + γΘ(uᵏ⁺¹))`.
pub fn fbs_step(problem: &NccpProblem, state: &SolverState, config: &SolverConfig) -> Result<SolverState> {
    let gamma = config.gamma;
    let eps = state.eps_k;
    let wk = state.current();
    let gam = gamma_op(problem, &wk, &wk, eps, gamma)?;
    let b = op_b(problem, &wk, gamma)?;
    let z = gam.minus(&b);
    let q = dual_update(&problem.cone, &state.p, &problem.theta(&state.u), gamma, config.dual_bound)?;
    // ∇K(u)/ε + ∇Φᵀq + ∂(J + I_U) ∋ z_u  ⇔  argmin D(u,uᵏ)/ε + ⟨g',u⟩ + J(u) over U
    let mut g = scaled(1.0 / eps, &problem.core.gradient(&state.u));
    if let Some(at) = phi_t_apply(problem, &q) {
        axpy(1.0, &at, &mut g);
    }
    axpy(-1.0, &z.primal_part, &mut g);
    let term = ProxTerm::from_j(&problem.j, problem.dim());
    let u_next = solve_linearized(problem, &state.u, &g, &term, eps, config.inner_tol())?;
    let p_next = dual_update(&problem.cone, &state.p, &problem.theta(&u_next), gamma, config.dual_bound)?;
    let delta = delta_k(problem, &state.u, &u_next, &q, eps, gamma)?;
    Ok(apply_step(state, StepResult { u_next, p_next, q, eps, delta, backtracks: 0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::ConeSpec;
    use crate::linalg::{dist, DenseMatrix};
    use crate::oracles::{ClosureFn, ConeMapOracle, NonsmoothTerm, SmoothOracle};
    use crate::vapp::vapp_step;
    use alloc::vec;

    fn one_d() -> NccpProblem {
        let g = SmoothOracle::new(ClosureFn::new(1, |u| 0.5 * u[0] * u[0], |u, o| o[0] = u[0])).with_lipschitz(1.0);
        let theta = ConeMapOracle::affine(DenseMatrix::identity(1), vec![1.0]).unwrap();
        NccpProblem::new(g, NonsmoothTerm::Zero, theta, ConeSpec::Zero(1)).unwrap()
    }

    #[test]
    fn op_b_example() {
        let b = op_b(&one_d(), &PrimalDual::new(vec![0.0], vec![0.0]), 1.0).unwrap();
        assert_eq!(b.primal_part, vec![-1.0]);
        assert_eq!(b.dual_part, vec![1.0]);
    }

    #[test]
    fn op_b_zero_theta() {
        let g = SmoothOracle::new(ClosureFn::new(1, |u| 0.5 * u[0] * u[0], |u, o| o[0] = u[0]));
        let pr = NccpProblem::new(g, NonsmoothTerm::Zero, ConeMapOracle::zero(1, 1), ConeSpec::NonnegOrthant(1)).unwrap();
        let b = op_b(&pr, &PrimalDual::new(vec![3.0], vec![2.0]), 1.0).unwrap();
        assert_eq!(b.primal_part, vec![3.0]);
        assert_eq!(b.dual_part, vec![0.0]);
    }

    #[test]
    fn gamma_op_example() {
        let pr = one_d();
        let w = PrimalDual::new(vec![1.0], vec![0.0]);
        let a = PrimalDual::new(vec![0.0], vec![0.0]);
        let e = gamma_op(&pr, &w, &a, 0.5, 1.0).unwrap();
        assert_eq!(e.primal_part, vec![2.0]);
        assert_eq!(e.dual_part, vec![0.0]);
    }

    #[test]
    fn l1_phi_rejected() {
        let pr = one_d();
        let mut theta = pr.theta.clone();
        theta.phi = PhiMap::L1 { direction: vec![1.0], weights: None };
        let pr2 = NccpProblem::new(pr.g.clone(), NonsmoothTerm::Zero, theta, ConeSpec::NonnegOrthant(1)).unwrap();
        let w = PrimalDual::new(vec![0.0], vec![0.0]);
        assert_eq!(op_b(&pr2, &w, 1.0).unwrap_err(), Error::NonDifferentiablePhi);
    }

    #[test]
    fn fbs_matches_vapp_on_one_d() {
        let pr = one_d();
        let cfg = SolverConfig { gamma: 1.0, eps0: 0.5, ..Default::default() };
        let mut a = SolverState::new(&pr, vec![0.0], vec![0.0], 0.5).unwrap();
        let mut b = a.clone();
        for k in 0..20 {
            a = fbs_step(&pr, &a, &cfg).unwrap();
            b = vapp_step(&pr, &b, &cfg).unwrap();
            if k == 0 {
                assert!(dist(&a.u, &[0.5]) < 1e-12 && dist(&a.p, &[-0.5]) < 1e-12);
            }
            assert!(dist(&a.u, &b.u) < 1e-12 && dist(&a.p, &b.p) < 1e-12);
        }
        let s = SolverState::new(&pr, vec![1.0], vec![-1.0], 0.4).unwrap();
        let t = fbs_step(&pr, &s, &cfg).unwrap();
        assert!(dist(&t.u, &[1.0]) < 1e-15 && dist(&t.p, &[-1.0]) < 1e-15);
    }
}
