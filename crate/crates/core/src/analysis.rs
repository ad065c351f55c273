//! Convergence diagnostics: residuals, distances, dual bounds and empirical rate fits.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cones::{ConeSpec, NormExponent};
use crate::error::{check_dim, Error, Result};
use crate::lagrangian::{aug_lagrangian, lagrangian, PrimalDual};
use crate::linalg::{axpy, dist_sq, norm, norm_sq, sub};
use crate::oracles::{BregmanCore, NccpProblem};

/// One row of a solver trace. Optional columns are empty when not applicable.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub iter: usize,
    pub wall_time_s: f64,
    pub obj: f64,
    pub obj_ergodic: f64,
    pub feas: f64,
    pub feas_ergodic: f64,
    pub dual_norm: f64,
    pub eps_k: f64,
    pub delta_k: Option<f64>,
    pub lemma1_lhs: Option<f64>,
    pub lemma1_rhs: Option<f64>,
    pub kkt_res: Option<f64>,
    pub dist_sq: Option<f64>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub a_k: Option<f64>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub b_k: Option<f64>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub rho_k: Option<f64>,
}

impl TraceRecord {
    /// `lemma1_rhs - lemma1_lhs`, when both are present.
    pub fn lemma1_slack(&self) -> Option<f64> {
        Some(self.lemma1_rhs? - self.lemma1_lhs?)
    }
}

/// `||Π_{C*}(Θ(u))||`, zero iff `Θ(u) ∈ -C`.
pub fn feasibility_residual(cone: &ConeSpec, theta_u: &[f64]) -> Result<f64> {
    check_dim(cone.dim(), theta_u.len())?;
    Ok(cone.violation(theta_u))
}

/// Norm of the element of the KKT map at `w_next` built from one VAPP step.
pub fn kkt_residual(
    problem: &NccpProblem,
    w_prev: &PrimalDual,
    w_next: &PrimalDual,
    q_k: &[f64],
    eps_k: f64,
    gamma: f64,
) -> Result<f64> {
    let n = problem.dim();
    let m = problem.m();
    check_dim(n, w_prev.u.len())?;
    check_dim(n, w_next.u.len())?;
    check_dim(m, w_prev.p.len())?;
    check_dim(m, w_next.p.len())?;
    check_dim(m, q_k.len())?;
    let (u, u1) = (&w_prev.u, &w_next.u);
    let mut v = problem.g.gradient(u1);
    axpy(-1.0, &problem.g.gradient(u), &mut v);
    let dp = sub(&w_next.p, q_k);
    axpy(1.0, &problem.theta.theta_subgradient_t_apply(u1, &dp), &mut v);
    if !problem.theta.omega.is_affine() {
        axpy(1.0, &problem.theta.omega.jacobian_t_apply(u1, q_k), &mut v);
        axpy(-1.0, &problem.theta.omega.jacobian_t_apply(u, q_k), &mut v);
    }
    let kd = sub(&problem.core.gradient(u), &problem.core.gradient(u1));
    axpy(1.0 / eps_k, &kd, &mut v);
    let dual = dist_sq(&w_prev.p, &w_next.p) / (gamma * gamma);
    Ok((norm_sq(&v) + dual).sqrt())
}

/// Constants `(𝔞, 𝔟)` with `kkt_res² ≤ 𝔞||Δu||² + 𝔟||Δp||²` for smooth `Φ`.
pub fn kkt_bound_constants(b_g: f64, b_omega: f64, tau: f64, core_lipschitz: f64, eps_min: f64, gamma: f64) -> (f64, f64) {
    let a = b_g + b_omega + gamma * tau * tau + core_lipschitz / eps_min;
    (a * a, 1.0 / (gamma * gamma))
}

/// `[D(u*,u) + ε/(2γ)||p - p*||²]^{1/2}`
pub fn generalized_distance(core: &BregmanCore, gamma: f64, eps_k: f64, w: &PrimalDual, reference: Option<&PrimalDual>) -> Result<f64> {
    let r = reference.ok_or(Error::MissingReference)?;
    Ok(generalized_distance_sq(core, gamma, eps_k, w, r)?.sqrt())
}

pub fn generalized_distance_sq(core: &BregmanCore, gamma: f64, eps_k: f64, w: &PrimalDual, r: &PrimalDual) -> Result<f64> {
    check_dim(r.u.len(), w.u.len())?;
    check_dim(r.p.len(), w.p.len())?;
    Ok(core.distance(&r.u, &w.u) + eps_k / (2.0 * gamma) * dist_sq(&w.p, &r.p))
}

/// Multiplier bound for orthant constraints from a strictly feasible point.
pub fn dual_bound_orthant(problem: &NccpProblem, u_hat: &[f64], lower_bound: f64) -> Result<f64> {
    check_dim(problem.dim(), u_hat.len())?;
    if !is_orthant(&problem.cone) {
        return Err(Error::IncompatibleTags("orthant bound needs a nonnegative-orthant cone"));
    }
    let theta = problem.theta(u_hat);
    let slack = theta.iter().fold(f64::INFINITY, |m, t| m.min(-t));
    if !(slack > 0.0) {
        return Err(Error::NotStrictlyFeasible);
    }
    let gap = problem.objective(u_hat) - lower_bound;
    if gap < 0.0 {
        return Err(Error::InvalidParameter("lower bound exceeds the objective at u_hat".into()));
    }
    Ok(gap / slack)
}

fn is_orthant(cone: &ConeSpec) -> bool {
    match cone {
        ConeSpec::NonnegOrthant(_) => true,
        ConeSpec::Product(b) => b.iter().all(is_orthant),
        _ => false,
    }
}

/// Multiplier bound for `Θ(u) ∈ -K_ν` from a strictly interior point.
///
/// Uses `m^{max((ω-2)/2ω, 0)} · 2^{1/ω} · gap / (-θ₀ - ||θ̄||_ν)`, `ω` conjugate to `ν`,
/// `m = dim θ̄`.
pub fn dual_bound_norm_cone(problem: &NccpProblem, u_hat: &[f64], lower_bound: f64, nu: NormExponent) -> Result<f64> {
    check_dim(problem.dim(), u_hat.len())?;
    let theta = problem.theta(u_hat);
    if theta.len() < 2 {
        return Err(Error::InvalidParameter("norm cone needs dimension >= 2".into()));
    }
    let m = (theta.len() - 1) as f64;
    let slack = -theta[0] - nu.norm(&theta[1..]);
    if !(slack > 0.0) {
        return Err(Error::NotStrictlyFeasible);
    }
    let gap = problem.objective(u_hat) - lower_bound;
    if gap < 0.0 {
        return Err(Error::InvalidParameter("lower bound exceeds the objective at u_hat".into()));
    }
    Ok(norm_cone_factor(nu, m) * gap / slack)
}

/// `m^{max((ω-2)/2ω, 0)} · 2^{1/ω}` for `ω` conjugate to `ν`.
pub fn norm_cone_factor(nu: NormExponent, m: f64) -> f64 {
    match nu.conjugate() {
        NormExponent::Inf => m.sqrt(),
        NormExponent::Two => 2.0f64.sqrt(),
        NormExponent::One => 2.0,
    }
}

/// Trace column selectable for a rate fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Obj,
    ObjErgodic,
    /// `|obj - opt|`
    ObjGap(f64),
    /// `|obj_ergodic - opt|`
    ObjErgodicGap(f64),
    Feas,
    FeasErgodic,
    DualNorm,
    KktRes,
    DistSq,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Obj => "obj",
            Metric::ObjErgodic => "obj_ergodic",
            Metric::ObjGap(_) => "obj_gap",
            Metric::ObjErgodicGap(_) => "obj_ergodic_gap",
            Metric::Feas => "feas",
            Metric::FeasErgodic => "feas_ergodic",
            Metric::DualNorm => "dual_norm",
            Metric::KktRes => "kkt_res",
            Metric::DistSq => "dist_sq",
        }
    }

    pub fn extract(&self, r: &TraceRecord) -> Option<f64> {
        match self {
            Metric::Obj => Some(r.obj),
            Metric::ObjErgodic => Some(r.obj_ergodic),
            Metric::ObjGap(opt) => Some((r.obj - opt).abs()),
            Metric::ObjErgodicGap(opt) => Some((r.obj_ergodic - opt).abs()),
            Metric::Feas => Some(r.feas),
            Metric::FeasErgodic => Some(r.feas_ergodic),
            Metric::DualNorm => Some(r.dual_norm),
            Metric::KktRes => r.kkt_res,
            Metric::DistSq => r.dist_sq,
        }
    }
}

/// Least-squares fit of `log(metric)` against `log(k)` and a geometric ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub metric: &'static str,
    pub window: (usize, usize),
    pub loglog_slope: f64,
    /// Least-squares geometric ratio `exp(slope of log(metric) vs k)`.
    pub contraction_ratio: Option<f64>,
    /// Set when a nonpositive value cut the window short.
    pub truncated: bool,
    pub points: usize,
}

/// Fits a trace column over `k ∈ [lo, hi]`.
pub fn rate_fit(trace: &[TraceRecord], metric: Metric, window: (usize, usize)) -> Result<RateFit> {
    let (ks, vs): (Vec<f64>, Vec<f64>) = trace
        .iter()
        .filter(|r| r.iter >= window.0 && r.iter <= window.1)
        .filter_map(|r| metric.extract(r).map(|v| (r.iter as f64, v)))
        .unzip();
    let mut fit = rate_fit_series(&ks, &vs)?;
    fit.metric = metric.name();
    fit.window = (window.0, fit.window.1.min(window.1));
    Ok(fit)
}

/// Fits `(k, value)` pairs; `k` must be positive for the log-log slope.
pub fn rate_fit_series(ks: &[f64], values: &[f64]) -> Result<RateFit> {
    check_dim(ks.len(), values.len())?;
    if ks.is_empty() {
        return Err(Error::EmptyInput("rate-fit window"));
    }
    let mut end = values.len();
    let mut truncated = false;
    if let Some(pos) = values.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        end = pos;
        truncated = true;
    }
    let pts: Vec<(f64, f64)> = ks[..end].iter().zip(&values[..end]).filter(|(k, _)| **k > 0.0).map(|(k, v)| (*k, *v)).collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateWindow);
    }
    let lk: Vec<f64> = pts.iter().map(|(k, _)| k.ln()).collect();
    let kk: Vec<f64> = pts.iter().map(|(k, _)| *k).collect();
    let lv: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let slope = ls_slope(&lk, &lv);
    let geo = ls_slope(&kk, &lv).exp();
    Ok(RateFit {
        metric: "series",
        window: (pts[0].0 as usize, pts[pts.len() - 1].0 as usize),
        loglog_slope: slope,
        contraction_ratio: Some(geo),
        truncated,
        points: pts.len(),
    })
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `max_probes L(ū, p) - L(u, p̄)`, a lower bound on the saddle gap.
pub fn saddle_gap_estimate(problem: &NccpProblem, ergodic: &PrimalDual, probes: &[PrimalDual]) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::EmptyInput("probe list"));
    }
    let mut best = f64::NEG_INFINITY;
    for w in probes {
        let g = lagrangian(problem, &ergodic.u, &w.p)? - lagrangian(problem, &w.u, &ergodic.p)?;
        best = best.max(g);
    }
    Ok(best)
}

/// Same as [`saddle_gap_estimate`] for the augmented Lagrangian `L_γ`.
pub fn aug_saddle_gap_estimate(problem: &NccpProblem, ergodic: &PrimalDual, probes: &[PrimalDual], gamma: f64) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::EmptyInput("probe list"));
    }
    let mut best = f64::NEG_INFINITY;
    for w in probes {
        let g = aug_lagrangian(problem, &ergodic.u, &w.p, gamma)? - aug_lagrangian(problem, &w.u, &ergodic.p, gamma)?;
        best = best.max(g);
    }
    Ok(best)
}

/// Seeded probe points in `U ∩ B(center.u, r_u)` and `C* ∩ B(center.p, r_p)`, plus the center.
pub fn sample_probes(problem: &NccpProblem, center: &PrimalDual, r_u: f64, r_p: f64, count: usize, seed: u64) -> Vec<PrimalDual> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count + 1);
    out.push(center.clone());
    let ball = |c: &[f64], r: f64, rng: &mut ChaCha8Rng| {
        let d: Vec<f64> = (0..c.len()).map(|_| StandardNormal.sample(rng)).collect();
        let nd = norm(&d).max(1e-300);
        let scale: f64 = {
            let s: f64 = StandardNormal.sample(rng);
            r * (s.abs().min(3.0) / 3.0)
        };
        let mut v = c.to_vec();
        axpy(scale / nd, &d, &mut v);
        v
    };
    for _ in 0..count {
        let mut u = ball(&center.u, r_u, &mut rng);
        problem.set.project_in_place(&mut u);
        let mut p = ball(&center.p, r_p, &mut rng);
        problem.cone.project_dual_in_place(&mut p);
        out.push(PrimalDual { u, p });
    }
    out
}

/// `D(u, u⁰) + ε⁰/(2γ)||p - p⁰||²`, the numerator of the ergodic bifunction bound.
pub fn bifunction_bound_numerator(core: &BregmanCore, w: &PrimalDual, w0: &PrimalDual, eps0: f64, gamma: f64) -> f64 {
    core.distance(&w.u, &w0.u) + eps0 / (2.0 * gamma) * dist_sq(&w.p, &w0.p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::oracles::{ClosureFn, ConeMapOracle, NonsmoothTerm, SmoothOracle};
    use alloc::vec;

    fn one_d() -> NccpProblem {
        let g = SmoothOracle::new(ClosureFn::new(1, |u| 0.5 * u[0] * u[0], |u, o| o[0] = u[0]));
        let theta = ConeMapOracle::affine(DenseMatrix::identity(1), vec![1.0]).unwrap();
        NccpProblem::new(g, NonsmoothTerm::Zero, theta, ConeSpec::Zero(1)).unwrap()
    }

    #[test]
    fn feasibility_examples() {
        let c = ConeSpec::NonnegOrthant(2);
        assert_eq!(feasibility_residual(&c, &[-1.0, -3.0]).unwrap(), 0.0);
        assert_eq!(feasibility_residual(&c, &[2.0, -1.0]).unwrap(), 2.0);
        let soc = ConeSpec::norm_cone(NormExponent::Two, 3);
        let r = feasibility_residual(&soc, &[0.0, 3.0, 4.0]).unwrap();
        assert!((r - 2.5 * 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn kkt_example() {
        let pr = one_d();
        let w0 = PrimalDual::new(vec![0.0], vec![0.0]);
        let w1 = PrimalDual::new(vec![0.5], vec![-0.5]);
        let r = kkt_residual(&pr, &w0, &w1, &[-1.0], 0.5, 1.0).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        assert_eq!(kkt_residual(&pr, &w1, &w1, &[-0.5], 0.5, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn generalized_distance_examples() {
        let core = BregmanCore::HalfSquaredNorm;
        let r = PrimalDual::new(vec![1.0, 2.0], vec![3.0]);
        assert_eq!(generalized_distance(&core, 1.0, 0.5, &r, Some(&r)).unwrap(), 0.0);
        let w = PrimalDual::new(vec![2.0, 2.0], vec![1.0]);
        // ε = 2γ: ½||Δu||² + ||Δp||²/2·2
        let d = generalized_distance(&core, 0.5, 1.0, &w, Some(&r)).unwrap();
        assert!((d * d - (0.5 + 4.0)).abs() < 1e-14);
        assert_eq!(generalized_distance(&core, 1.0, 1.0, &w, None), Err(Error::MissingReference));
    }

    #[test]
    fn orthant_bound_examples() {
        // G ≡ 5, Θ(u) = (u - 1, u - 2) at u = 0
        let g = SmoothOracle::new(ClosureFn::new(1, |_| 5.0, |_, o| o[0] = 0.0));
        let theta = ConeMapOracle::affine(DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap(), vec![1.0, 2.0]).unwrap();
        let pr = NccpProblem::new(g, NonsmoothTerm::Zero, theta, ConeSpec::NonnegOrthant(2)).unwrap();
        assert_eq!(dual_bound_orthant(&pr, &[0.0], 0.0).unwrap(), 5.0);
        assert_eq!(dual_bound_orthant(&pr, &[0.0], 5.0).unwrap(), 0.0);
        assert_eq!(dual_bound_orthant(&pr, &[1.0], 0.0), Err(Error::NotStrictlyFeasible));
    }

    #[test]
    fn norm_cone_bound_example() {
        let g = SmoothOracle::new(ClosureFn::new(1, |_| 3.0, |_, o| o[0] = 0.0));
        let theta = ConeMapOracle::affine(DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap(), vec![1.0, 0.0]).unwrap();
        let pr = NccpProblem::new(g, NonsmoothTerm::Zero, theta, ConeSpec::norm_cone(NormExponent::Two, 2)).unwrap();
        let b = dual_bound_norm_cone(&pr, &[0.0], 0.0, NormExponent::Two).unwrap();
        assert!((b - 3.0 * 2.0f64.sqrt()).abs() < 1e-14);
        assert_eq!(dual_bound_norm_cone(&pr, &[0.0], 3.0, NormExponent::Two).unwrap(), 0.0);
        assert_eq!(norm_cone_factor(NormExponent::One, 16.0), 4.0);
    }

    #[test]
    fn rate_fits_on_synthetic_series() {
        let ks: Vec<f64> = (1..=200).map(|k| k as f64).collect();
        let inv: Vec<f64> = ks.iter().map(|k| 1.0 / k).collect();
        assert!((rate_fit_series(&ks, &inv).unwrap().loglog_slope + 1.0).abs() < 0.01);
        let geo: Vec<f64> = ks.iter().map(|k| 0.9f64.powf(*k)).collect();
        let r = rate_fit_series(&ks, &geo).unwrap().contraction_ratio.unwrap();
        assert!((r - 0.9).abs() < 0.005);
        let mut z = inv.clone();
        z[50] = 0.0;
        let f = rate_fit_series(&ks, &z).unwrap();
        assert!(f.truncated && f.points == 50);
        assert_eq!(rate_fit_series(&[1.0], &[1.0]), Err(Error::DegenerateWindow));
    }

    #[test]
    fn saddle_gap_examples() {
        let pr = one_d();
        let w = PrimalDual::new(vec![0.3], vec![0.2]);
        assert_eq!(saddle_gap_estimate(&pr, &w, core::slice::from_ref(&w)).unwrap(), 0.0);
        let star = PrimalDual::new(vec![1.0], vec![-1.0]);
        assert!(saddle_gap_estimate(&pr, &w, &[star]).unwrap() >= 0.0);
        assert!(saddle_gap_estimate(&pr, &w, &[]).is_err());
    }
}
