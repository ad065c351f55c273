//! Ordinary and augmented Lagrangians, the penalty kernel `φ`, and approximate dual values.

use alloc::vec;
use alloc::vec::Vec;

use crate::cones::ConeSpec;
use crate::error::{check_dim, Error, Result};
use crate::inner::{accelerated_prox_grad, ProxTerm};
use crate::linalg::{axpy, dot, norm_sq};
use crate::oracles::NccpProblem;

/// A primal-dual pair `w = (u; p)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrimalDual {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

impl PrimalDual {
    pub fn new(u: Vec<f64>, p: Vec<f64>) -> Self {
        PrimalDual { u, p }
    }
}

/// `L(u,p) = (G+J)(u) + ⟨p, Θ(u)⟩`
pub fn lagrangian(problem: &NccpProblem, u: &[f64], p: &[f64]) -> Result<f64> {
    check_dim(problem.dim(), u.len())?;
    check_dim(problem.m(), p.len())?;
    Ok(problem.objective(u) + dot(p, &problem.theta(u)))
}

/// `φ(θ,p) = [||Π(p+γθ)||² - ||p||²] / 2γ`, with `Π` the projection onto `C*`.
pub fn phi(theta: &[f64], p: &[f64], gamma: f64, cone: &ConeSpec) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::NonPositive("gamma"));
    }
    check_dim(cone.dim(), theta.len())?;
    check_dim(cone.dim(), p.len())?;
    let mut v = p.to_vec();
    axpy(gamma, theta, &mut v);
    cone.project_dual_in_place(&mut v);
    Ok((norm_sq(&v) - norm_sq(p)) / (2.0 * gamma))
}

/// `L_γ(u,p) = (G+J)(u) + φ(Θ(u), p)`
pub fn aug_lagrangian(problem: &NccpProblem, u: &[f64], p: &[f64], gamma: f64) -> Result<f64> {
    check_dim(problem.dim(), u.len())?;
    Ok(problem.objective(u) + phi(&problem.theta(u), p, gamma, &problem.cone)?)
}

/// Approximate `ψ_γ(p) = min_{u∈U} L_γ(u,p)` with its minimizer estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEstimate {
    pub value: f64,
    pub u: Vec<f64>,
    /// Inner stationarity residual attached to the estimate.
    pub residual: f64,
}

/// Inner accelerated proximal gradient on `L_γ(·,p)`; requires `Φ` zero or linear.
pub fn dual_value_approx(
    problem: &NccpProblem,
    p: &[f64],
    gamma: f64,
    inner_tol: f64,
    start: Option<&[f64]>,
) -> Result<DualEstimate> {
    if !(gamma > 0.0) {
        return Err(Error::NonPositive("gamma"));
    }
    if !(inner_tol > 0.0) {
        return Err(Error::NonPositive("inner_tol"));
    }
    if !problem.theta.phi.is_differentiable() {
        return Err(Error::NonDifferentiablePhi);
    }
    check_dim(problem.m(), p.len())?;
    let n = problem.dim();
    let x0 = match start {
        Some(s) => {
            check_dim(n, s.len())?;
            s.to_vec()
        }
        None => vec![0.0; n],
    };
    let cone = &problem.cone;
    let pn = norm_sq(p);
    let mut smooth = |u: &[f64], g: &mut [f64]| -> f64 {
        let theta = problem.theta(u);
        let mut v = p.to_vec();
        axpy(gamma, &theta, &mut v);
        cone.project_dual_in_place(&mut v);
        problem.g.gradient_into(u, g);
        // differentiability checked above
        let jt = problem.theta.theta_jacobian_t_apply(u, &v).unwrap_or_default();
        axpy(1.0, &jt, g);
        problem.g.value(u) + (norm_sq(&v) - pn) / (2.0 * gamma)
    };
    let term = ProxTerm::from_j(&problem.j, n);
    let set = &problem.set;
    let mut prox = |z: &[f64], t: f64| term.prox_on_set(set, z, t);
    let out = accelerated_prox_grad(&x0, &mut smooth, &mut prox, None, inner_tol, 200_000)?;
    let value = aug_lagrangian(problem, &out.x, p, gamma)?;
    Ok(DualEstimate { value, u: out.x, residual: out.residual })
}
