//! Certified `K_ν`-convex constraint maps and the SEN-SVM benchmark family.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cones::{ConeSpec, NormExponent};
use crate::error::{check_dim, Error, Result};
use crate::inner::soft_threshold;
use crate::linalg::{axpy, dist_sq, dot, norm1, norm_sq, DenseMatrix};
use crate::oracles::{
    CConvexCertificate, ConeMapOracle, LeastSquaresFn, NccpProblem, NonsmoothTerm, PhiMap, QuadraticAffineMap, QuadraticFn, Reference,
    SmoothMap, SmoothOracle,
};
use crate::vapp::{drive, lemma1_terms, Clock, DeltaCertificate, EpsMode, RunOutput, SolverConfig, SolverState, StepReport};
use crate::lagrangian::PrimalDual;

/// Which stacked form the map takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StructuredVariant {
    /// `(ωᵀg + g₀; Qg)`
    Weighted,
    /// `(g₀; Au - b)`
    Affine,
    /// `(ωᵀg + g₀; Qg; Au - b)`
    WeightedAffine,
}

/// Ingredients of a stacked map. `g₀` may carry a nonsmooth part `g0_l1·||u||₁`,
/// which is routed into `Φ` along the cone axis.
#[derive(Clone)]
pub struct StructuredMapSpec {
    pub dim: usize,
    pub g0: Option<SmoothOracle>,
    pub g0_l1: f64,
    pub g: Vec<SmoothOracle>,
    /// Nonnegative `m × l`.
    pub q: Option<DenseMatrix>,
    pub omega_weights: Vec<f64>,
    pub affine: Option<(DenseMatrix, Vec<f64>)>,
    pub variant: StructuredVariant,
    pub nu: NormExponent,
}

/// The smooth part of a stacked map.
#[derive(Clone)]
pub struct StructuredMap {
    n: usize,
    g0: Option<SmoothOracle>,
    g: Vec<SmoothOracle>,
    q: Option<DenseMatrix>,
    omega_weights: Vec<f64>,
    affine: Option<(DenseMatrix, Vec<f64>)>,
}

impl StructuredMap {
    fn m_rows(&self) -> usize {
        self.q.as_ref().map_or(0, DenseMatrix::rows)
    }

    fn affine_rows(&self) -> usize {
        self.affine.as_ref().map_or(0, |(a, _)| a.rows())
    }

    /// `row0 = p₀`, `Q-block = p[1..=m]`, combined into coefficients on each `∇gⱼ`.
    fn g_coefficients(&self, p: &[f64]) -> Vec<f64> {
        let mut c: Vec<f64> = self.omega_weights.iter().map(|w| w * p[0]).collect();
        if let Some(q) = &self.q {
            let qt = q.tmatvec(&p[1..1 + q.rows()]);
            axpy(1.0, &qt, &mut c);
        }
        c
    }
}

impl SmoothMap for StructuredMap {
    fn in_dim(&self) -> usize {
        self.n
    }
    fn out_dim(&self) -> usize {
        1 + self.m_rows() + self.affine_rows()
    }
    fn value_into(&self, u: &[f64], out: &mut [f64]) {
        let gv: Vec<f64> = self.g.iter().map(|g| g.value(u)).collect();
        out[0] = self.g0.as_ref().map_or(0.0, |g| g.value(u)) + dot(&self.omega_weights, &gv);
        let m = self.m_rows();
        if let Some(q) = &self.q {
            q.matvec_into(&gv, &mut out[1..1 + m]);
        }
        if let Some((a, b)) = &self.affine {
            let tail = &mut out[1 + m..];
            a.matvec_into(u, tail);
            axpy(-1.0, b, tail);
        }
    }
    fn jacobian_apply_into(&self, u: &[f64], d: &[f64], out: &mut [f64]) {
        let gd: Vec<f64> = self.g.iter().map(|g| dot(&g.gradient(u), d)).collect();
        out[0] = self.g0.as_ref().map_or(0.0, |g| dot(&g.gradient(u), d)) + dot(&self.omega_weights, &gd);
        let m = self.m_rows();
        if let Some(q) = &self.q {
            q.matvec_into(&gd, &mut out[1..1 + m]);
        }
        if let Some((a, _)) = &self.affine {
            a.matvec_into(d, &mut out[1 + m..]);
        }
    }
    fn jacobian_t_apply_into(&self, u: &[f64], p: &[f64], out: &mut [f64]) {
        let m = self.m_rows();
        match &self.affine {
            Some((a, _)) => a.tmatvec_into(&p[1 + m..], out),
            None => out.iter_mut().for_each(|x| *x = 0.0),
        }
        if let Some(g0) = &self.g0 {
            if p[0] != 0.0 {
                axpy(p[0], &g0.gradient(u), out);
            }
        }
        for (c, g) in self.g_coefficients(p).iter().zip(&self.g) {
            if *c != 0.0 {
                axpy(*c, &g.gradient(u), out);
            }
        }
    }
    fn is_affine(&self) -> bool {
        self.g0.is_none() && self.g.is_empty()
    }
}

fn validate_spec(spec: &StructuredMapSpec) -> Result<()> {
    let weighted = matches!(spec.variant, StructuredVariant::Weighted | StructuredVariant::WeightedAffine);
    let affine = matches!(spec.variant, StructuredVariant::Affine | StructuredVariant::WeightedAffine);
    if weighted {
        if spec.g.is_empty() {
            return Err(Error::EmptyInput("component functions g"));
        }
        let q = spec.q.as_ref().ok_or(Error::InvalidParameter("weighted variant needs Q".into()))?;
        check_dim(spec.g.len(), q.cols())?;
        check_dim(spec.g.len(), spec.omega_weights.len())?;
        if q.data().iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidParameter("Q must be entrywise nonnegative".into()));
        }
        for j in 0..q.cols() {
            let col: f64 = (0..q.rows()).map(|i| q.get(i, j)).sum();
            let w = spec.omega_weights[j];
            if !(w >= 0.0) || w < col {
                return Err(Error::WeightCondition { column: j });
            }
        }
    } else if !spec.g.is_empty() || spec.q.is_some() {
        return Err(Error::InvalidParameter("affine variant takes no g or Q".into()));
    }
    match (&spec.affine, affine) {
        (Some((a, b)), true) => {
            check_dim(a.rows(), b.len())?;
            check_dim(spec.dim, a.cols())?;
        }
        (None, true) => return Err(Error::InvalidParameter("variant needs an affine block".into())),
        (Some(_), false) => return Err(Error::InvalidParameter("weighted variant takes no affine block".into())),
        (None, false) => {}
    }
    for f in spec.g.iter().chain(spec.g0.iter()) {
        check_dim(spec.dim, f.dim())?;
    }
    if !(spec.g0_l1 >= 0.0) {
        return Err(Error::InvalidParameter("g0_l1 must be nonnegative".into()));
    }
    Ok(())
}

/// Builds `Θ` and certifies it `K_ν`-convex from the structure alone.
///
/// `B_{Ω_j}` components are attached when every smooth ingredient declares its
/// gradient-Lipschitz constant; `τ` only when the map is affine.
pub fn build_structured_map(spec: StructuredMapSpec) -> Result<ConeMapOracle> {
    validate_spec(&spec)?;
    let map = StructuredMap {
        n: spec.dim,
        g0: spec.g0.clone(),
        g: spec.g.clone(),
        q: spec.q.clone(),
        omega_weights: if spec.g.is_empty() { Vec::new() } else { spec.omega_weights.clone() },
        affine: spec.affine.clone(),
    };
    let out = map.out_dim();
    if out < 2 {
        return Err(Error::InvalidParameter("stacked map needs at least two rows".into()));
    }
    let affine_map = map.is_affine();
    let phi = if spec.g0_l1 > 0.0 {
        let mut direction = vec![0.0; out];
        direction[0] = spec.g0_l1;
        PhiMap::L1 { direction, weights: None }
    } else {
        PhiMap::Zero
    };

    let lips: Option<Vec<f64>> = spec.g.iter().map(|g| g.lipschitz_grad).collect();
    let l0 = match &spec.g0 {
        Some(g) => g.lipschitz_grad,
        None => Some(0.0),
    };
    let components = match (lips, l0) {
        (Some(l), Some(l0)) => {
            let mut c = vec![0.0; out];
            c[0] = l0 + dot(&map.omega_weights, &l);
            if let Some(q) = &map.q {
                let ql = q.matvec(&l);
                c[1..1 + q.rows()].copy_from_slice(&ql);
            }
            Some(c)
        }
        _ => None,
    };
    let tau = if affine_map && spec.g0_l1 == 0.0 {
        spec.affine.as_ref().map(|(a, _)| a.spectral_norm())
    } else {
        None
    };

    let mut oracle = ConeMapOracle::new(map, phi);
    oracle.certificate = Some(CConvexCertificate {
        cone: ConeSpec::norm_cone(spec.nu, out),
        reason: match spec.variant {
            StructuredVariant::Weighted => "convex g, nonnegative Q, omega dominates column sums",
            StructuredVariant::Affine => "convex g0 stacked over affine rows",
            StructuredVariant::WeightedAffine => "weighted convex block stacked over affine rows",
        },
    });
    oracle.b_omega_components = components;
    oracle.theta_lipschitz = tau;
    if affine_map {
        oracle.b_omega = Some(0.0);
    }
    Ok(oracle)
}

// ---------------------------------------------------------------------------
// SEN-SVM

/// `min ½||Au-b||²  s.t.  α||u||₁ + (1-α)uᵀQu ≤ δ`, built so that `u*` is optimal with value 0.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SenSvmInstance {
    pub a: DenseMatrix,
    pub q: DenseMatrix,
    pub u_star: Vec<f64>,
    pub b: Vec<f64>,
    pub alpha: f64,
    pub delta: f64,
}

/// How the constraint is posed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SenSvmFormulation {
    /// Scalar inequality on `R₊` with the `ℓ1` part in `Φ`.
    Inequality,
    /// `((1-α)uᵀQu - δ; αu) ∈ -K₁^{n+1}`.
    Cone,
}

fn normals(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| StandardNormal.sample(rng)).collect()
}

/// Seeded generator: `A`, `B` i.i.d. `N(0,1)`, `Q = BᵀB + 1e-10·I`, `s` nonzeros of `u*` drawn `N(0,1)`.
pub fn gen_sen_svm(m: usize, n: usize, s: usize, alpha: f64, seed: u64) -> Result<SenSvmInstance> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter("m and n must be >= 1".into()));
    }
    if s == 0 || s > n {
        return Err(Error::InvalidParameter("need 1 <= s <= n".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter("alpha must lie in (0,1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DenseMatrix::from_row_major(m, n, normals(&mut rng, m * n))?;
    let bmat = DenseMatrix::from_row_major(n, n, normals(&mut rng, n * n))?;
    let mut q = bmat.gram();
    q.add_diagonal(1e-10);
    let mut support = rand::seq::index::sample(&mut rng, n, s).into_vec();
    support.sort_unstable();
    let mut u_star = vec![0.0; n];
    for i in support {
        u_star[i] = StandardNormal.sample(&mut rng);
    }
    let b = a.matvec(&u_star);
    let delta = alpha * norm1(&u_star) + (1.0 - alpha) * dot(&u_star, &q.matvec(&u_star));
    Ok(SenSvmInstance { a, q, u_star, b, alpha, delta })
}

impl SenSvmInstance {
    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    /// `G = ½||Au-b||²` with `B_G = ||A||²`.
    pub fn objective(&self) -> Result<SmoothOracle> {
        let l = self.a.spectral_norm();
        Ok(SmoothOracle::new(LeastSquaresFn::new(self.a.clone(), self.b.clone())?).with_lipschitz(l * l))
    }

    /// `(1-α)uᵀQu - δ` as `½uᵀPu + r` with `P = 2(1-α)Q`.
    fn quadratic_part(&self) -> Result<(QuadraticFn, f64)> {
        let n = self.dim();
        let mut p = self.q.clone();
        p.scale(2.0 * (1.0 - self.alpha));
        let l = p.max_eigenvalue_psd();
        Ok((QuadraticFn::new(p, vec![0.0; n], -self.delta)?, l))
    }

    /// Dual bound `M₁` (inequality) or `M₂` (cone).
    pub fn dual_bound(&self, form: SenSvmFormulation) -> f64 {
        let base = norm_sq(&self.b) / (2.0 * self.delta);
        match form {
            SenSvmFormulation::Inequality => base + 1.0,
            SenSvmFormulation::Cone => ((self.dim() + 1) as f64).sqrt() * base + 1.0,
        }
    }

    pub fn reference(&self, form: SenSvmFormulation) -> Reference {
        let m = match form {
            SenSvmFormulation::Inequality => 1,
            SenSvmFormulation::Cone => self.dim() + 1,
        };
        Reference { u_star: self.u_star.clone(), p_star: vec![0.0; m], opt_value: 0.0 }
    }

    /// The problem in either formulation, with `(u*, 0)` attached as reference.
    pub fn problem(&self, form: SenSvmFormulation) -> Result<NccpProblem> {
        let n = self.dim();
        let g = self.objective()?;
        let (quad, l) = self.quadratic_part()?;
        let pr = match form {
            SenSvmFormulation::Inequality => {
                let map = QuadraticAffineMap::new(DenseMatrix::zeros(1, n), vec![self.delta], vec![(0, quad.p.clone())])?;
                let theta = ConeMapOracle::new(map, PhiMap::L1 { direction: vec![self.alpha], weights: None })
                    .with_b_omega_components(vec![l]);
                NccpProblem::new(g, NonsmoothTerm::Zero, theta, ConeSpec::NonnegOrthant(1))?
            }
            SenSvmFormulation::Cone => {
                let mut ident = DenseMatrix::identity(n);
                ident.scale(self.alpha);
                let theta = build_structured_map(StructuredMapSpec {
                    dim: n,
                    g0: Some(SmoothOracle::new(quad).with_lipschitz(l)),
                    g0_l1: 0.0,
                    g: Vec::new(),
                    q: None,
                    omega_weights: Vec::new(),
                    affine: Some((ident, vec![0.0; n])),
                    variant: StructuredVariant::Affine,
                    nu: NormExponent::One,
                })?;
                NccpProblem::new(g, NonsmoothTerm::Zero, theta, ConeSpec::norm_cone(NormExponent::One, n + 1))?
            }
        };
        pr.with_reference(self.reference(form))
    }
}

/// Closed-form VAPP-M updates for one formulation, caching `Au` and `Qu`.
pub struct SenSvmFastPath<'a> {
    inst: &'a SenSvmInstance,
    form: SenSvmFormulation,
    cone: ConeSpec,
    bound: f64,
    cache: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

struct Trial {
    u: Vec<f64>,
    au: Vec<f64>,
    qu: Vec<f64>,
    theta: Vec<f64>,
}

impl<'a> SenSvmFastPath<'a> {
    /// Uses `config.dual_bound`, or the instance bound when unset.
    pub fn new(inst: &'a SenSvmInstance, form: SenSvmFormulation, config: &SolverConfig) -> Self {
        let n = inst.dim();
        let cone = match form {
            SenSvmFormulation::Inequality => ConeSpec::NonnegOrthant(1),
            SenSvmFormulation::Cone => ConeSpec::norm_cone(NormExponent::One, n + 1),
        };
        let bound = config.dual_bound.unwrap_or_else(|| inst.dual_bound(form));
        SenSvmFastPath { inst, form, cone, bound, cache: None }
    }

    fn products(&mut self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        if let Some((cu, au, qu)) = &self.cache {
            if cu.as_slice() == u {
                return (au.clone(), qu.clone());
            }
        }
        (self.inst.a.matvec(u), self.inst.q.matvec(u))
    }

    fn theta(&self, u: &[f64], qu: &[f64]) -> Vec<f64> {
        let al = self.inst.alpha;
        let quad = (1.0 - al) * dot(u, qu) - self.inst.delta;
        match self.form {
            SenSvmFormulation::Inequality => vec![quad + al * norm1(u)],
            SenSvmFormulation::Cone => {
                let mut t = Vec::with_capacity(u.len() + 1);
                t.push(quad);
                t.extend(u.iter().map(|x| al * x));
                t
            }
        }
    }

    fn project(&self, p: &[f64], theta: &[f64], gamma: f64) -> Vec<f64> {
        let mut v = p.to_vec();
        axpy(gamma, theta, &mut v);
        self.cone.project_multiplier_in_place(Some(self.bound), &mut v);
        v
    }

    fn trial(&self, u: &[f64], grad: &[f64], shrink: f64, eps: f64) -> Trial {
        let u_next: Vec<f64> = u
            .iter()
            .zip(grad)
            .map(|(x, g)| {
                let z = x - eps * g;
                match self.form {
                    SenSvmFormulation::Inequality => soft_threshold(z, eps * shrink),
                    SenSvmFormulation::Cone => z,
                }
            })
            .collect();
        let au = self.inst.a.matvec(&u_next);
        let qu = self.inst.q.matvec(&u_next);
        let theta = self.theta(&u_next, &qu);
        Trial { u: u_next, au, qu, theta }
    }

    /// One step from `state`; backtracks on `Δᵏ ≥ 0` when the config asks for it.
    pub fn step(&mut self, state: &SolverState, config: &SolverConfig) -> Result<SolverState> {
        let gamma = config.gamma;
        let inst = self.inst;
        let al = inst.alpha;
        let u = &state.u;
        let (au, qu) = self.products(u);
        let theta_u = self.theta(u, &qu);
        let q = self.project(&state.p, &theta_u, gamma);

        let mut resid = au.clone();
        axpy(-1.0, &inst.b, &mut resid);
        let mut grad = inst.a.tmatvec(&resid);
        // (Q + Qᵀ)u = 2Qu for symmetric Q
        axpy(2.0 * (1.0 - al) * q[0], &qu, &mut grad);
        let shrink = match self.form {
            SenSvmFormulation::Inequality => al * q[0],
            SenSvmFormulation::Cone => 0.0,
        };
        if self.form == SenSvmFormulation::Cone {
            for (g, qi) in grad.iter_mut().zip(&q[1..]) {
                *g += al * qi;
            }
        }

        let (eta, trials) = match config.eps_mode {
            EpsMode::Fixed => (1.0, 0),
            EpsMode::Backtracking { eta } => (eta, config.max_backtracks),
        };
        let mut eps = state.eps_k;
        let mut accepted = None;
        for i in 0..=trials {
            let t = self.trial(u, &grad, shrink, eps);
            let du: Vec<f64> = t.u.iter().zip(u).map(|(a, b)| a - b).collect();
            let g_rem = 0.5 * dist_sq(&t.au, &au);
            let dq: Vec<f64> = t.qu.iter().zip(&qu).map(|(a, b)| a - b).collect();
            let o_rem = q[0] * (1.0 - al) * dot(&du, &dq);
            let delta = 0.5 * norm_sq(&du) - eps * (g_rem + o_rem + 0.5 * gamma * dist_sq(&theta_u, &t.theta));
            if matches!(config.eps_mode, EpsMode::Fixed) || delta >= 0.0 {
                accepted = Some((t, delta, i));
                break;
            }
            eps *= eta;
        }
        let (t, delta, backtracks) = accepted.ok_or(Error::BacktrackingCap { trials: config.max_backtracks })?;
        let p_next = self.project(&state.p, &t.theta, gamma);

        let mut next = state.clone();
        next.accumulate(eps, &t.u, &q);
        next.k += 1;
        next.u = t.u.clone();
        next.p = p_next;
        next.q = q;
        next.eps_k = eps;
        next.last_delta = Some(DeltaCertificate { value: delta, lower_bound: None });
        next.last_backtracks = backtracks;
        self.cache = Some((t.u, t.au, t.qu));
        Ok(next)
    }
}

/// Stateless form of [`SenSvmFastPath::step`].
pub fn sen_svm_closed_form_updates(
    inst: &SenSvmInstance,
    form: SenSvmFormulation,
    state: &SolverState,
    config: &SolverConfig,
) -> Result<SolverState> {
    SenSvmFastPath::new(inst, form, config).step(state, config)
}

/// VAPP-M on one formulation through the fast path, from `u = 0, p = 0`.
pub fn run_sen_svm(inst: &SenSvmInstance, form: SenSvmFormulation, config: &SolverConfig, clock: &dyn Clock) -> Result<RunOutput> {
    let problem = inst.problem(form)?;
    let mut cfg = config.clone();
    cfg.dual_bound = Some(config.dual_bound.unwrap_or_else(|| inst.dual_bound(form)));
    let state = SolverState::new(&problem, vec![0.0; problem.dim()], vec![0.0; problem.m()], cfg.eps0)?;
    let reference = problem.reference.as_ref().map(|r| PrimalDual { u: r.u_star.clone(), p: r.p_star.clone() });
    let mut fast = SenSvmFastPath::new(inst, form, &cfg);
    let pr = &problem;
    let c = &cfg;
    let mut step_fn = |s: &SolverState| -> Result<(SolverState, StepReport)> {
        let next = fast.step(s, c)?;
        let delta = next.last_delta.map_or(0.0, |d| d.value);
        let lemma = match &reference {
            Some(r) if c.diagnostics => Some(lemma1_terms(pr, r, &s.current(), &next.current(), &next.q, next.eps_k, c.gamma, delta)?),
            _ => None,
        };
        let report = StepReport {
            q: next.q.clone(),
            eps: next.eps_k,
            rho: c.gamma,
            delta: Some(delta),
            lemma,
            a_k: None,
            b_k: None,
            kkt_applicable: true,
        };
        Ok((next, report))
    };
    drive(pr, &cfg, state, clock, &mut step_fn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dist, norm_inf};
    use crate::oracles::{validate_problem, ClosureFn};
    use crate::vapp::{solve_primal_subproblem_generic, step_with_eps};

    fn sq() -> SmoothOracle {
        SmoothOracle::new(ClosureFn::new(1, |u| u[0] * u[0], |u, o| o[0] = 2.0 * u[0])).with_lipschitz(2.0)
    }

    fn uncertified(theta: ConeMapOracle, cone: ConeSpec) -> NccpProblem {
        let mut theta = theta;
        theta.certificate = None;
        let n = theta.in_dim();
        NccpProblem::new(SmoothOracle::zero(n), NonsmoothTerm::Zero, theta, cone).unwrap()
    }

    #[test]
    fn squared_example_all_exponents() {
        for nu in [NormExponent::One, NormExponent::Two, NormExponent::Inf] {
            let theta = build_structured_map(StructuredMapSpec {
                dim: 1,
                g0: None,
                g0_l1: 0.0,
                g: vec![sq()],
                q: Some(DenseMatrix::from_rows(&[vec![1.0]]).unwrap()),
                omega_weights: vec![1.0],
                affine: None,
                variant: StructuredVariant::Weighted,
                nu,
            })
            .unwrap();
            assert_eq!(theta.theta(&[3.0]), vec![9.0, 9.0]);
            let cert = theta.certificate.clone().unwrap();
            assert_eq!(cert.cone, ConeSpec::norm_cone(nu, 2));
            let pr = uncertified(theta, cert.cone);
            let rep = validate_problem(&pr, 2000, 3).unwrap();
            let c = rep.get("c_convexity").unwrap();
            assert!(c.passed && !c.skipped, "{nu:?}: {c:?}");
        }
    }

    #[test]
    fn weight_condition_reports_column() {
        let r = build_structured_map(StructuredMapSpec {
            dim: 1,
            g0: None,
            g0_l1: 0.0,
            g: vec![sq(), sq()],
            q: Some(DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap()),
            omega_weights: vec![1.0, 1.5],
            affine: None,
            variant: StructuredVariant::Weighted,
            nu: NormExponent::Two,
        });
        assert_eq!(r.err(), Some(Error::WeightCondition { column: 1 }));
    }

    #[test]
    fn jacobians_are_adjoint() {
        let theta = build_structured_map(StructuredMapSpec {
            dim: 1,
            g0: Some(sq()),
            g0_l1: 0.5,
            g: vec![sq(), sq()],
            q: Some(DenseMatrix::from_rows(&[vec![0.5, 1.0]]).unwrap()),
            omega_weights: vec![1.0, 2.0],
            affine: Some((DenseMatrix::from_rows(&[vec![2.0], vec![-1.0]]).unwrap(), vec![1.0, 0.0])),
            variant: StructuredVariant::WeightedAffine,
            nu: NormExponent::Inf,
        })
        .unwrap();
        let u = [0.7];
        let d = [1.3];
        let p = [0.2, -0.4, 1.1, 0.9];
        let jd = theta.omega.jacobian_apply(&u, &d);
        let jtp = theta.omega.jacobian_t_apply(&u, &p);
        assert!((dot(&jd, &p) - dot(&jtp, &d)).abs() < 1e-12);
        // ℓ1 part sits on the cone axis
        let t = theta.theta(&[-2.0]);
        assert!((t[0] - (4.0 + 0.5 * 2.0 + 4.0 + 8.0)).abs() < 1e-12);
        assert_eq!(theta.b_omega_components.as_ref().unwrap(), &vec![2.0 + 6.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn generator_invariants() {
        let inst = gen_sen_svm(2, 4, 1, 0.4, 11).unwrap();
        assert_eq!(inst, gen_sen_svm(2, 4, 1, 0.4, 11).unwrap());
        assert_eq!(inst.u_star.iter().filter(|x| **x != 0.0).count(), 1);
        assert_eq!(inst.b, inst.a.matvec(&inst.u_star));
        let expect = 0.4 * norm1(&inst.u_star) + 0.6 * dot(&inst.u_star, &inst.q.matvec(&inst.u_star));
        assert_eq!(inst.delta, expect);
        for form in [SenSvmFormulation::Inequality, SenSvmFormulation::Cone] {
            let pr = inst.problem(form).unwrap();
            assert_eq!(pr.objective(&inst.u_star), 0.0);
            assert!(pr.feasibility(&inst.u_star) < 1e-12);
        }
        assert!(gen_sen_svm(2, 4, 5, 0.4, 1).is_err());
        assert!(gen_sen_svm(2, 4, 1, 1.0, 1).is_err());
    }

    #[test]
    fn cone_map_is_certified() {
        let inst = gen_sen_svm(3, 5, 2, 0.4, 2).unwrap();
        let pr = inst.problem(SenSvmFormulation::Cone).unwrap();
        let cert = pr.theta.certificate.clone().unwrap();
        assert_eq!(cert.cone, pr.cone);
        let rep = validate_problem(&uncertified(pr.theta.clone(), pr.cone.clone()), 2000, 5).unwrap();
        assert!(rep.get("c_convexity").unwrap().passed);
    }

    fn fixed_cfg(inst: &SenSvmInstance, form: SenSvmFormulation) -> SolverConfig {
        SolverConfig { gamma: 1.0, eps0: 1e-3, dual_bound: Some(inst.dual_bound(form)), ..Default::default() }
    }

    #[test]
    fn fast_path_matches_generic() {
        for seed in 0..4 {
            let inst = gen_sen_svm(4, 8, 2, 0.4, seed).unwrap();
            for form in [SenSvmFormulation::Inequality, SenSvmFormulation::Cone] {
                let pr = inst.problem(form).unwrap();
                let cfg = fixed_cfg(&inst, form);
                let u0: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
                let s0 = SolverState::new(&pr, u0, vec![0.0; pr.m()], cfg.eps0).unwrap();
                let (mut a, mut b) = (s0.clone(), s0);
                let mut fast = SenSvmFastPath::new(&inst, form, &cfg);
                for _ in 0..50 {
                    a = fast.step(&a, &cfg).unwrap();
                    let r = step_with_eps(&pr, &b, &cfg, b.eps_k).unwrap();
                    let mut nb = b.clone();
                    nb.u = r.u_next;
                    nb.p = r.p_next;
                    b = nb;
                    assert!(norm_inf(&a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect::<Vec<_>>()) < 1e-10);
                    assert!(dist(&a.p, &b.p) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn optimum_is_fixed_point() {
        let inst = gen_sen_svm(4, 8, 2, 0.4, 9).unwrap();
        for form in [SenSvmFormulation::Inequality, SenSvmFormulation::Cone] {
            let cfg = fixed_cfg(&inst, form);
            let pr = inst.problem(form).unwrap();
            let s = SolverState::new(&pr, inst.u_star.clone(), vec![0.0; pr.m()], cfg.eps0).unwrap();
            let t = sen_svm_closed_form_updates(&inst, form, &s, &cfg).unwrap();
            assert!(dist(&t.u, &inst.u_star) < 1e-10);
            assert!(norm_inf(&t.p) < 1e-10);
        }
    }

    #[test]
    fn zero_multiplier_is_plain_gradient_step() {
        let inst = gen_sen_svm(4, 8, 2, 0.4, 4).unwrap();
        let form = SenSvmFormulation::Inequality;
        let pr = inst.problem(form).unwrap();
        let cfg = fixed_cfg(&inst, form);
        // u = 0 is strictly feasible, so q₁ = 0 with p = 0
        let s = SolverState::new(&pr, vec![0.0; 8], vec![0.0], cfg.eps0).unwrap();
        let t = sen_svm_closed_form_updates(&inst, form, &s, &cfg).unwrap();
        assert_eq!(t.q, vec![0.0]);
        let generic = solve_primal_subproblem_generic(&pr, &s.u, &[0.0], cfg.eps0, 1e-13).unwrap();
        assert!(dist(&t.u, &generic) < 1e-9);
        let mut plain = inst.a.tmatvec(&inst.b);
        plain.iter_mut().for_each(|x| *x *= cfg.eps0);
        assert!(dist(&t.u, &plain) < 1e-14);
    }
}
