//! Problem model: `min G(u) + J(u)` over `u ∈ U` subject to `Θ(u) = Ω(u) + Φ(u) ∈ -C`.
//!
//! Oracles are matrix-free trait objects; the dense implementations provided here
//! are one convenient backend. Smoothness constants are optional: a missing `B_G`,
//! `B_Ω` or `τ` forces the solver into backtracking mode.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::cones::ConeSpec;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dist, dist_sq, dot, norm, norm_sq, DenseMatrix};

// ---------------------------------------------------------------------------
// scalar smooth functions

/// Differentiable scalar function `R^n -> R`.
pub trait ScalarFn: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, u: &[f64]) -> f64;
    fn gradient_into(&self, u: &[f64], out: &mut [f64]);

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(u, &mut g);
        g
    }
}

/// `½ uᵀPu + cᵀu + r` with symmetric `P`.
#[derive(Debug, Clone)]
pub struct QuadraticFn {
    pub p: DenseMatrix,
    pub c: Vec<f64>,
    pub r: f64,
}

impl QuadraticFn {
    pub fn new(p: DenseMatrix, c: Vec<f64>, r: f64) -> Result<Self> {
        check_dim(p.cols(), p.rows())?;
        check_dim(p.cols(), c.len())?;
        Ok(QuadraticFn { p, c, r })
    }
}

impl ScalarFn for QuadraticFn {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn value(&self, u: &[f64]) -> f64 {
        let pu = self.p.matvec(u);
        0.5 * dot(u, &pu) + dot(&self.c, u) + self.r
    }
    fn gradient_into(&self, u: &[f64], out: &mut [f64]) {
        self.p.matvec_into(u, out);
        axpy(1.0, &self.c, out);
    }
}

/// `½ ||Au - b||²`.
#[derive(Debug, Clone)]
pub struct LeastSquaresFn {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
}

impl LeastSquaresFn {
    pub fn new(a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        check_dim(a.rows(), b.len())?;
        Ok(LeastSquaresFn { a, b })
    }

    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let mut r = self.a.matvec(u);
        axpy(-1.0, &self.b, &mut r);
        r
    }
}

impl ScalarFn for LeastSquaresFn {
    fn dim(&self) -> usize {
        self.a.cols()
    }
    fn value(&self, u: &[f64]) -> f64 {
        0.5 * norm_sq(&self.residual(u))
    }
    fn gradient_into(&self, u: &[f64], out: &mut [f64]) {
        let r = self.residual(u);
        self.a.tmatvec_into(&r, out);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroFn(pub usize);

impl ScalarFn for ZeroFn {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, _u: &[f64]) -> f64 {
        0.0
    }
    fn gradient_into(&self, _u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }
}

type ValueClosure = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradClosure = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Closure-backed scalar function.
pub struct ClosureFn {
    dim: usize,
    value: ValueClosure,
    grad: GradClosure,
}

impl ClosureFn {
    pub fn new(
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        ClosureFn { dim, value: Box::new(value), grad: Box::new(grad) }
    }
}

impl ScalarFn for ClosureFn {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, u: &[f64]) -> f64 {
        (self.value)(u)
    }
    fn gradient_into(&self, u: &[f64], out: &mut [f64]) {
        (self.grad)(u, out)
    }
}

/// `inner(u) + (shift/2)||u||²`.
pub struct ShiftedFn {
    pub inner: Arc<dyn ScalarFn>,
    pub shift: f64,
}

impl ScalarFn for ShiftedFn {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, u: &[f64]) -> f64 {
        self.inner.value(u) + 0.5 * self.shift * norm_sq(u)
    }
    fn gradient_into(&self, u: &[f64], out: &mut [f64]) {
        self.inner.gradient_into(u, out);
        axpy(self.shift, u, out);
    }
}

/// Smooth convex objective term `G` with optional constants `B_G` and `β_G`.
#[derive(Clone)]
pub struct SmoothOracle {
    pub f: Arc<dyn ScalarFn>,
    pub lipschitz_grad: Option<f64>,
    pub strong_convexity: Option<f64>,
}

impl SmoothOracle {
    pub fn new(f: impl ScalarFn + 'static) -> Self {
        SmoothOracle { f: Arc::new(f), lipschitz_grad: None, strong_convexity: None }
    }

    pub fn with_lipschitz(mut self, b: f64) -> Self {
        self.lipschitz_grad = Some(b);
        self
    }

    pub fn with_strong_convexity(mut self, beta: f64) -> Self {
        self.strong_convexity = Some(beta);
        self
    }

    pub fn zero(n: usize) -> Self {
        SmoothOracle::new(ZeroFn(n)).with_lipschitz(0.0)
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }
    pub fn value(&self, u: &[f64]) -> f64 {
        self.f.value(u)
    }
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        self.f.gradient(u)
    }
    pub fn gradient_into(&self, u: &[f64], out: &mut [f64]) {
        self.f.gradient_into(u, out)
    }
}

// ---------------------------------------------------------------------------
// nonsmooth term J

/// Convex function with a computable proximal map.
pub trait ProxFn: Send + Sync {
    fn value(&self, u: &[f64]) -> f64;
    /// `argmin_x t·f(x) + ½||x - z||²`
    fn prox(&self, z: &[f64], t: f64) -> Vec<f64>;
}

/// Nonsmooth objective term `J`, tagged by how the subproblem may treat it.
#[derive(Clone)]
pub enum NonsmoothTerm {
    Zero,
    /// `weight · ||u||₁`
    L1 { weight: f64 },
    /// `½ Σ dᵢ uᵢ²` with `dᵢ >= 0`
    DiagQuadratic { diag: Vec<f64> },
    Custom(Arc<dyn ProxFn>),
}

impl NonsmoothTerm {
    pub fn value(&self, u: &[f64]) -> f64 {
        match self {
            NonsmoothTerm::Zero => 0.0,
            NonsmoothTerm::L1 { weight } => weight * u.iter().map(|x| x.abs()).sum::<f64>(),
            NonsmoothTerm::DiagQuadratic { diag } => {
                0.5 * diag.iter().zip(u).map(|(d, x)| d * x * x).sum::<f64>()
            }
            NonsmoothTerm::Custom(f) => f.value(u),
        }
    }

    /// Strong-convexity modulus carried by the term, if any.
    pub fn strong_convexity(&self) -> Option<f64> {
        match self {
            NonsmoothTerm::DiagQuadratic { diag } if !diag.is_empty() => {
                let m = diag.iter().cloned().fold(f64::INFINITY, f64::min);
                (m > 0.0).then_some(m)
            }
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, NonsmoothTerm::Zero)
    }
}

// ---------------------------------------------------------------------------
// constraint map Θ = Ω + Φ

/// Differentiable vector map `R^n -> R^m`.
pub trait SmoothMap: Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn value_into(&self, u: &[f64], out: &mut [f64]);
    /// `out = ∇Ω(u) d`
    fn jacobian_apply_into(&self, u: &[f64], d: &[f64], out: &mut [f64]);
    /// `out = ∇Ω(u)ᵀ p`
    fn jacobian_t_apply_into(&self, u: &[f64], p: &[f64], out: &mut [f64]);
    /// True when the map is affine (zero curvature).
    fn is_affine(&self) -> bool {
        false
    }

    fn value(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim()];
        self.value_into(u, &mut out);
        out
    }
    fn jacobian_t_apply(&self, u: &[f64], p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.in_dim()];
        self.jacobian_t_apply_into(u, p, &mut out);
        out
    }
    fn jacobian_apply(&self, u: &[f64], d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim()];
        self.jacobian_apply_into(u, d, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroMap {
    pub n: usize,
    pub m: usize,
}

impl SmoothMap for ZeroMap {
    fn in_dim(&self) -> usize {
        self.n
    }
    fn out_dim(&self) -> usize {
        self.m
    }
    fn value_into(&self, _u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }
    fn jacobian_apply_into(&self, _u: &[f64], _d: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }
    fn jacobian_t_apply_into(&self, _u: &[f64], _p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }
    fn is_affine(&self) -> bool {
        true
    }
}

/// `Ω_j(u) = a_jᵀu - b_j + ½ uᵀP_j u`, with `P_j` present only on listed rows.
#[derive(Debug, Clone)]
pub struct QuadraticAffineMap {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub quad: Vec<(usize, DenseMatrix)>,
}

impl QuadraticAffineMap {
    pub fn new(a: DenseMatrix, b: Vec<f64>, quad: Vec<(usize, DenseMatrix)>) -> Result<Self> {
        check_dim(a.rows(), b.len())?;
        for (row, p) in &quad {
            if *row >= a.rows() {
                return Err(Error::InvalidParameter("quadratic row index out of range".into()));
            }
            check_dim(a.cols(), p.rows())?;
            check_dim(a.cols(), p.cols())?;
        }
        Ok(QuadraticAffineMap { a, b, quad })
    }

    pub fn affine(a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        Self::new(a, b, Vec::new())
    }
}

impl SmoothMap for QuadraticAffineMap {
    fn in_dim(&self) -> usize {
        self.a.cols()
    }
    fn out_dim(&self) -> usize {
        self.a.rows()
    }
    fn value_into(&self, u: &[f64], out: &mut [f64]) {
        self.a.matvec_into(u, out);
        axpy(-1.0, &self.b, out);
        for (row, p) in &self.quad {
            out[*row] += 0.5 * dot(u, &p.matvec(u));
        }
    }
    fn jacobian_apply_into(&self, u: &[f64], d: &[f64], out: &mut [f64]) {
        self.a.matvec_into(d, out);
        for (row, p) in &self.quad {
            out[*row] += dot(&p.matvec(u), d);
        }
    }
    fn jacobian_t_apply_into(&self, u: &[f64], pv: &[f64], out: &mut [f64]) {
        self.a.tmatvec_into(pv, out);
        for (row, p) in &self.quad {
            if pv[*row] != 0.0 {
                let pu = p.matvec(u);
                axpy(pv[*row], &pu, out);
            }
        }
    }
    fn is_affine(&self) -> bool {
        self.quad.is_empty()
    }
}

type MapClosure = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type MapApplyClosure = Box<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Closure-backed smooth map.
pub struct ClosureMap {
    n: usize,
    m: usize,
    value: MapClosure,
    jac: MapApplyClosure,
    jac_t: MapApplyClosure,
}

impl ClosureMap {
    pub fn new(
        n: usize,
        m: usize,
        value: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        jac: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        jac_t: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        ClosureMap { n, m, value: Box::new(value), jac: Box::new(jac), jac_t: Box::new(jac_t) }
    }
}

impl SmoothMap for ClosureMap {
    fn in_dim(&self) -> usize {
        self.n
    }
    fn out_dim(&self) -> usize {
        self.m
    }
    fn value_into(&self, u: &[f64], out: &mut [f64]) {
        (self.value)(u, out)
    }
    fn jacobian_apply_into(&self, u: &[f64], d: &[f64], out: &mut [f64]) {
        (self.jac)(u, d, out)
    }
    fn jacobian_t_apply_into(&self, u: &[f64], p: &[f64], out: &mut [f64]) {
        (self.jac_t)(u, p, out)
    }
}

/// Nonsmooth or linear part `Φ` of the constraint map.
#[derive(Clone)]
pub enum PhiMap {
    Zero,
    /// `Au - b`
    Linear { a: DenseMatrix, b: Vec<f64> },
    /// `direction · Σᵢ wᵢ|uᵢ|` (`wᵢ = 1` when `weights` is `None`); `direction ∈ C`.
    L1 { direction: Vec<f64>, weights: Option<Vec<f64>> },
    /// Value-only map; not usable by the subproblem solver.
    Custom(Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>),
}

impl PhiMap {
    pub fn add_value(&self, u: &[f64], out: &mut [f64]) {
        match self {
            PhiMap::Zero => {}
            PhiMap::Linear { a, b } => {
                let au = a.matvec(u);
                for i in 0..out.len() {
                    out[i] += au[i] - b[i];
                }
            }
            PhiMap::L1 { direction, weights } => {
                let s = weighted_l1(u, weights.as_deref());
                axpy(s, direction, out);
            }
            PhiMap::Custom(f) => {
                let mut tmp = vec![0.0; out.len()];
                f(u, &mut tmp);
                axpy(1.0, &tmp, out);
            }
        }
    }

    pub fn is_differentiable(&self) -> bool {
        matches!(self, PhiMap::Zero | PhiMap::Linear { .. })
    }
}

pub(crate) fn weighted_l1(u: &[f64], weights: Option<&[f64]>) -> f64 {
    match weights {
        Some(w) => u.iter().zip(w).map(|(x, wi)| wi * x.abs()).sum(),
        None => u.iter().map(|x| x.abs()).sum(),
    }
}

/// Marker that a map's C-convexity was established by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CConvexCertificate {
    pub cone: ConeSpec,
    pub reason: &'static str,
}

/// The constraint map `Θ = Ω + Φ` with its constants.
#[derive(Clone)]
pub struct ConeMapOracle {
    pub omega: Arc<dyn SmoothMap>,
    pub phi: PhiMap,
    /// Lipschitz constant `τ` of `Θ`.
    pub theta_lipschitz: Option<f64>,
    /// Uniform constant `B_Ω` of `u ↦ ∇⟨p, Ω(u)⟩`.
    pub b_omega: Option<f64>,
    /// Per-component gradient-Lipschitz constants `B_{Ω_j}`.
    pub b_omega_components: Option<Vec<f64>>,
    pub certificate: Option<CConvexCertificate>,
}

impl ConeMapOracle {
    pub fn new(omega: impl SmoothMap + 'static, phi: PhiMap) -> Self {
        ConeMapOracle {
            omega: Arc::new(omega),
            phi,
            theta_lipschitz: None,
            b_omega: None,
            b_omega_components: None,
            certificate: None,
        }
    }

    /// `Θ(u) = Au - b` as a smooth affine map.
    pub fn affine(a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        let tau = a.spectral_norm();
        let map = QuadraticAffineMap::affine(a, b)?;
        Ok(ConeMapOracle::new(map, PhiMap::Zero).with_tau(tau).with_b_omega(0.0))
    }

    pub fn zero(n: usize, m: usize) -> Self {
        ConeMapOracle::new(ZeroMap { n, m }, PhiMap::Zero).with_tau(0.0).with_b_omega(0.0)
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.theta_lipschitz = Some(tau);
        self
    }

    pub fn with_b_omega(mut self, b: f64) -> Self {
        self.b_omega = Some(b);
        self
    }

    pub fn with_b_omega_components(mut self, c: Vec<f64>) -> Self {
        self.b_omega_components = Some(c);
        self
    }

    pub fn out_dim(&self) -> usize {
        self.omega.out_dim()
    }

    pub fn in_dim(&self) -> usize {
        self.omega.in_dim()
    }

    pub fn omega_value(&self, u: &[f64]) -> Vec<f64> {
        self.omega.value(u)
    }

    pub fn phi_value(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim()];
        self.phi.add_value(u, &mut out);
        out
    }

    pub fn theta_into(&self, u: &[f64], out: &mut [f64]) {
        self.omega.value_into(u, out);
        self.phi.add_value(u, out);
    }

    pub fn theta(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim()];
        self.theta_into(u, &mut out);
        out
    }

    /// `(∇Ω(u))ᵀp`
    pub fn omega_jacobian_transpose_apply(&self, u: &[f64], p: &[f64]) -> Vec<f64> {
        self.omega.jacobian_t_apply(u, p)
    }

    /// `(∇Ω(u) + ∇Φ)ᵀp` for differentiable `Φ`; errors otherwise.
    pub fn theta_jacobian_t_apply(&self, u: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.omega.jacobian_t_apply(u, p);
        match &self.phi {
            PhiMap::Zero => {}
            PhiMap::Linear { a, .. } => {
                let at = a.tmatvec(p);
                axpy(1.0, &at, &mut out);
            }
            _ => return Err(Error::NonDifferentiablePhi),
        }
        Ok(out)
    }

    /// `θᵀp` for a subgradient selection `θ ∈ ∂Θ(u)` (sign at nonzero coordinates, 0 at kinks).
    pub fn theta_subgradient_t_apply(&self, u: &[f64], p: &[f64]) -> Vec<f64> {
        let mut out = self.omega.jacobian_t_apply(u, p);
        match &self.phi {
            PhiMap::Zero | PhiMap::Custom(_) => {}
            PhiMap::Linear { a, .. } => {
                let at = a.tmatvec(p);
                axpy(1.0, &at, &mut out);
            }
            PhiMap::L1 { direction, weights } => {
                let c = dot(direction, p);
                for (i, o) in out.iter_mut().enumerate() {
                    let w = weights.as_ref().map_or(1.0, |w| w[i]);
                    let s = if u[i] > 0.0 {
                        1.0
                    } else if u[i] < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    *o += c * w * s;
                }
            }
        }
        out
    }

    /// Effective `B_Ω`: declared uniform constant, else `M · Σ B_{Ω_j}` when a dual bound is known.
    pub fn effective_b_omega(&self, dual_bound: Option<f64>) -> Option<f64> {
        if self.omega.is_affine() {
            return Some(self.b_omega.unwrap_or(0.0));
        }
        if let (Some(c), Some(m)) = (&self.b_omega_components, dual_bound) {
            return aggregate_b_omega(c, m).ok();
        }
        self.b_omega
    }
}

/// `B_Ω = M · Σⱼ B_{Ω_j}`.
pub fn aggregate_b_omega(components: &[f64], dual_bound: f64) -> Result<f64> {
    if !(dual_bound > 0.0) {
        return Err(Error::NonPositive("dual bound M"));
    }
    if components.iter().any(|c| *c < 0.0 || !c.is_finite()) {
        return Err(Error::InvalidParameter("negative B_Omega component".into()));
    }
    Ok(dual_bound * components.iter().sum::<f64>())
}

// ---------------------------------------------------------------------------
// feasible set

/// Closed convex feasible set `U`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FeasibleSet {
    Full(usize),
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Product(Vec<FeasibleSet>),
}

impl FeasibleSet {
    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Full(n) => *n,
            FeasibleSet::Box { lo, .. } => lo.len(),
            FeasibleSet::Ball { center, .. } => center.len(),
            FeasibleSet::Product(b) => b.iter().map(FeasibleSet::dim).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeasibleSet::Full(_) => Ok(()),
            FeasibleSet::Box { lo, hi } => {
                check_dim(lo.len(), hi.len())?;
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return Err(Error::InvalidParameter("box with lo > hi".into()));
                }
                Ok(())
            }
            FeasibleSet::Ball { radius, .. } => {
                if *radius > 0.0 {
                    Ok(())
                } else {
                    Err(Error::NonPositive("ball radius"))
                }
            }
            FeasibleSet::Product(b) => b.iter().try_for_each(FeasibleSet::validate),
        }
    }

    pub fn is_full(&self) -> bool {
        match self {
            FeasibleSet::Full(_) => true,
            FeasibleSet::Product(b) => b.iter().all(FeasibleSet::is_full),
            _ => false,
        }
    }

    pub fn project_in_place(&self, u: &mut [f64]) {
        match self {
            FeasibleSet::Full(_) => {}
            FeasibleSet::Box { lo, hi } => {
                for i in 0..u.len() {
                    u[i] = u[i].max(lo[i]).min(hi[i]);
                }
            }
            FeasibleSet::Ball { center, radius } => {
                let d = dist(u, center);
                if d > *radius {
                    let s = radius / d;
                    for i in 0..u.len() {
                        u[i] = center[i] + s * (u[i] - center[i]);
                    }
                }
            }
            FeasibleSet::Product(blocks) => {
                let mut off = 0;
                for b in blocks {
                    let d = b.dim();
                    b.project_in_place(&mut u[off..off + d]);
                    off += d;
                }
            }
        }
    }

    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        let mut out = u.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        dist(&self.project(u), u) <= tol
    }
}

// ---------------------------------------------------------------------------
// Bregman core

/// Strongly convex core function `K` with its user-supplied moduli.
pub trait CoreFn: Send + Sync {
    fn value(&self, u: &[f64]) -> f64;
    fn gradient_into(&self, u: &[f64], out: &mut [f64]);
    fn beta(&self) -> f64;
    fn lipschitz(&self) -> f64;
}

/// Core function `K` inducing `D(u,v) = K(u) - K(v) - ⟨∇K(v), u - v⟩`.
#[derive(Clone)]
pub enum BregmanCore {
    HalfSquaredNorm,
    /// `K(u) = ½ Σ wᵢ uᵢ²`, `wᵢ > 0`
    DiagonalWeighted(Vec<f64>),
    Custom(Arc<dyn CoreFn>),
}

impl BregmanCore {
    pub fn value(&self, u: &[f64]) -> f64 {
        match self {
            BregmanCore::HalfSquaredNorm => 0.5 * norm_sq(u),
            BregmanCore::DiagonalWeighted(w) => {
                0.5 * w.iter().zip(u).map(|(wi, x)| wi * x * x).sum::<f64>()
            }
            BregmanCore::Custom(k) => k.value(u),
        }
    }

    pub fn gradient_into(&self, u: &[f64], out: &mut [f64]) {
        match self {
            BregmanCore::HalfSquaredNorm => out.copy_from_slice(u),
            BregmanCore::DiagonalWeighted(w) => {
                for i in 0..u.len() {
                    out[i] = w[i] * u[i];
                }
            }
            BregmanCore::Custom(k) => k.gradient_into(u, out),
        }
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        self.gradient_into(u, &mut g);
        g
    }

    /// Strong-convexity modulus `β`.
    pub fn beta(&self) -> f64 {
        match self {
            BregmanCore::HalfSquaredNorm => 1.0,
            BregmanCore::DiagonalWeighted(w) => w.iter().cloned().fold(f64::INFINITY, f64::min),
            BregmanCore::Custom(k) => k.beta(),
        }
    }

    /// Gradient-Lipschitz modulus `B`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            BregmanCore::HalfSquaredNorm => 1.0,
            BregmanCore::DiagonalWeighted(w) => w.iter().cloned().fold(0.0, f64::max),
            BregmanCore::Custom(k) => k.lipschitz(),
        }
    }

    pub fn is_half_squared(&self) -> bool {
        matches!(self, BregmanCore::HalfSquaredNorm)
    }

    /// `D(u, v)`
    pub fn distance(&self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            BregmanCore::HalfSquaredNorm => 0.5 * dist_sq(u, v),
            BregmanCore::DiagonalWeighted(w) => {
                0.5 * w.iter().zip(u.iter().zip(v)).map(|(wi, (a, b))| wi * (a - b) * (a - b)).sum::<f64>()
            }
            BregmanCore::Custom(_) => {
                let g = self.gradient(v);
                let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
                (self.value(u) - self.value(v) - dot(&g, &diff)).max(0.0)
            }
        }
    }
}

/// `D(u, v)` with dimension checks.
pub fn bregman_distance(core: &BregmanCore, u: &[f64], v: &[f64]) -> Result<f64> {
    check_dim(u.len(), v.len())?;
    if let BregmanCore::DiagonalWeighted(w) = core {
        check_dim(w.len(), u.len())?;
    }
    Ok(core.distance(u, v))
}

// ---------------------------------------------------------------------------
// the problem bundle

/// Known saddle point and optimal value.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Reference {
    pub u_star: Vec<f64>,
    pub p_star: Vec<f64>,
    pub opt_value: f64,
}

/// The problem `min (G+J)(u)  s.t.  Θ(u) ∈ -C, u ∈ U`.
#[derive(Clone)]
pub struct NccpProblem {
    pub g: SmoothOracle,
    pub j: NonsmoothTerm,
    pub theta: ConeMapOracle,
    pub cone: ConeSpec,
    pub set: FeasibleSet,
    pub core: BregmanCore,
    pub reference: Option<Reference>,
}

impl NccpProblem {
    pub fn new(g: SmoothOracle, j: NonsmoothTerm, theta: ConeMapOracle, cone: ConeSpec) -> Result<Self> {
        let n = g.dim();
        let p = NccpProblem {
            g,
            j,
            theta,
            cone,
            set: FeasibleSet::Full(n),
            core: BregmanCore::HalfSquaredNorm,
            reference: None,
        };
        p.check_dims()?;
        Ok(p)
    }

    pub fn with_set(mut self, set: FeasibleSet) -> Result<Self> {
        self.set = set;
        self.check_dims()?;
        Ok(self)
    }

    pub fn with_core(mut self, core: BregmanCore) -> Result<Self> {
        self.core = core;
        self.check_dims()?;
        Ok(self)
    }

    pub fn with_reference(mut self, reference: Reference) -> Result<Self> {
        check_dim(self.dim(), reference.u_star.len())?;
        check_dim(self.m(), reference.p_star.len())?;
        self.reference = Some(reference);
        Ok(self)
    }

    /// Primal dimension `n`.
    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    /// Constraint dimension `m`.
    pub fn m(&self) -> usize {
        self.cone.dim()
    }

    pub fn check_dims(&self) -> Result<()> {
        let n = self.dim();
        self.cone.validate()?;
        self.set.validate()?;
        check_dim(n, self.theta.in_dim())?;
        check_dim(self.cone.dim(), self.theta.out_dim())?;
        check_dim(n, self.set.dim())?;
        match &self.j {
            NonsmoothTerm::DiagQuadratic { diag } => check_dim(n, diag.len())?,
            NonsmoothTerm::L1 { weight } if *weight < 0.0 => {
                return Err(Error::InvalidParameter("negative l1 weight".into()))
            }
            _ => {}
        }
        match &self.theta.phi {
            PhiMap::Linear { a, b } => {
                check_dim(n, a.cols())?;
                check_dim(self.m(), a.rows())?;
                check_dim(self.m(), b.len())?;
            }
            PhiMap::L1 { direction, weights } => {
                check_dim(self.m(), direction.len())?;
                if let Some(w) = weights {
                    check_dim(n, w.len())?;
                }
            }
            _ => {}
        }
        if let BregmanCore::DiagonalWeighted(w) = &self.core {
            check_dim(n, w.len())?;
            if w.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::InvalidParameter("diagonal core weights must be positive".into()));
            }
        }
        Ok(())
    }

    /// `(G + J)(u)`
    pub fn objective(&self, u: &[f64]) -> f64 {
        self.g.value(u) + self.j.value(u)
    }

    pub fn theta(&self, u: &[f64]) -> Vec<f64> {
        self.theta.theta(u)
    }

    /// `||Π(Θ(u))||`
    pub fn feasibility(&self, u: &[f64]) -> f64 {
        self.cone.violation(&self.theta(u))
    }

    /// Moves `β_J` of curvature from a strongly convex `J` into `G`.
    ///
    /// Returns the problem unchanged when `G` already declares `β_G`.
    pub fn shift_strong_convexity_from_j(&self) -> NccpProblem {
        if self.g.strong_convexity.is_some() {
            return self.clone();
        }
        let Some(beta_j) = self.j.strong_convexity() else {
            return self.clone();
        };
        let mut out = self.clone();
        if let NonsmoothTerm::DiagQuadratic { diag } = &self.j {
            let rest: Vec<f64> = diag.iter().map(|d| d - beta_j).collect();
            out.j = if rest.iter().all(|d| *d == 0.0) {
                NonsmoothTerm::Zero
            } else {
                NonsmoothTerm::DiagQuadratic { diag: rest }
            };
        }
        out.g = SmoothOracle {
            f: Arc::new(ShiftedFn { inner: self.g.f.clone(), shift: beta_j }),
            lipschitz_grad: self.g.lipschitz_grad.map(|b| b + beta_j),
            strong_convexity: Some(beta_j),
        };
        out
    }
}

// ---------------------------------------------------------------------------
// sampled assumption checks

/// Outcome of one sampled assumption check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub skipped: bool,
    pub worst_violation: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    tol: f64,
    worst: f64,
}

impl Tracker {
    fn new(name: &'static str, tol: f64) -> Self {
        Tracker { name, tol, worst: 0.0 }
    }
    fn record(&mut self, violation: f64) {
        let v = if violation.is_nan() { f64::INFINITY } else { violation };
        self.worst = self.worst.max(v);
    }
    fn finish(self) -> CheckResult {
        CheckResult { name: self.name, passed: self.worst <= self.tol, skipped: false, worst_violation: self.worst }
    }
}

fn skipped(name: &'static str) -> CheckResult {
    CheckResult { name, passed: true, skipped: true, worst_violation: 0.0 }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| { let z: f64 = StandardNormal.sample(rng); scale * z }).collect::<Vec<f64>>()
}

/// Violation of `d ∈ -C` measured as distance, i.e. `||Π(d)||`.
pub fn neg_cone_violation(cone: &ConeSpec, d: &[f64]) -> f64 {
    cone.violation(d)
}

/// Runs the sampled assumption checks and reports the worst violation of each.
pub fn validate_problem(problem: &NccpProblem, samples: usize, seed: u64) -> Result<ValidationReport> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    problem.check_dims()?;
    let n = problem.dim();
    let m = problem.m();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
    let mut report = ValidationReport::default();

    let sample_u = |rng: &mut ChaCha8Rng| {
        let mut u = gaussian(rng, n, 1.0);
        problem.set.project_in_place(&mut u);
        u
    };

    // gradient vs central differences
    let mut grad = Tracker::new("gradient_consistency", 1e-5);
    for _ in 0..samples {
        let u = sample_u(&mut rng);
        let g = problem.g.gradient(&u);
        let d = gaussian(&mut rng, n, 1.0);
        let dn = norm(&d);
        let dir: Vec<f64> = d.iter().map(|x| x / dn).collect();
        let h = 1e-6 * (1.0 + norm(&u));
        let up: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
        let um: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a - h * b).collect();
        let fd = (problem.g.value(&up) - problem.g.value(&um)) / (2.0 * h);
        let an = dot(&g, &dir);
        let scale = an.abs().max(norm(&g)).max(1.0);
        grad.record((fd - an).abs() / scale);
    }
    report.checks.push(grad.finish());

    // descent lemma for G
    match problem.g.lipschitz_grad {
        Some(b) => {
            let mut t = Tracker::new("descent_lemma_G", 1e-9);
            for _ in 0..samples {
                let u = sample_u(&mut rng);
                let v = sample_u(&mut rng);
                let g = problem.g.gradient(&u);
                let diff: Vec<f64> = v.iter().zip(&u).map(|(a, b)| a - b).collect();
                let lhs = problem.g.value(&v) - problem.g.value(&u) - dot(&g, &diff);
                let rhs = 0.5 * b * norm_sq(&diff);
                t.record((lhs - rhs) / (1.0 + rhs.abs()).max(1.0));
            }
            report.checks.push(t.finish());
        }
        None => report.checks.push(skipped("descent_lemma_G")),
    }

    // C-convexity of Θ
    if problem.theta.certificate.is_some() {
        report.checks.push(CheckResult { name: "c_convexity", passed: true, skipped: true, worst_violation: 0.0 });
    } else {
        let mut t = Tracker::new("c_convexity", 1e-8);
        for _ in 0..samples {
            let u = sample_u(&mut rng);
            let v = sample_u(&mut rng);
            let a: f64 = unit.sample(&mut rng);
            let mid: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + (1.0 - a) * y).collect();
            let tu = problem.theta(&u);
            let tv = problem.theta(&v);
            let tm = problem.theta(&mid);
            let d: Vec<f64> = (0..m).map(|i| tm[i] - a * tu[i] - (1.0 - a) * tv[i]).collect();
            let scale = 1.0 + norm(&tu).max(norm(&tv));
            t.record(problem.cone.violation(&d) / scale);
        }
        report.checks.push(t.finish());
    }

    // Lipschitz continuity of Θ
    match problem.theta.theta_lipschitz {
        Some(tau) => {
            let mut t = Tracker::new("theta_lipschitz", 1e-9);
            for _ in 0..samples {
                let u = sample_u(&mut rng);
                let v = sample_u(&mut rng);
                let lhs = dist(&problem.theta(&u), &problem.theta(&v));
                let rhs = tau * dist(&u, &v);
                t.record((lhs - rhs) / (1.0 + rhs));
            }
            report.checks.push(t.finish());
        }
        None => report.checks.push(skipped("theta_lipschitz")),
    }

    // curvature bound for ⟨p, Ω⟩
    match problem.theta.b_omega {
        Some(b) => {
            let mut t = Tracker::new("descent_lemma_omega", 1e-9);
            for _ in 0..samples {
                let u = sample_u(&mut rng);
                let v = sample_u(&mut rng);
                let p = gaussian(&mut rng, m, 1.0);
                let pn = norm(&p).max(1e-300);
                let p: Vec<f64> = p.iter().map(|x| x / pn).collect();
                let diff: Vec<f64> = v.iter().zip(&u).map(|(a, b)| a - b).collect();
                let ou = problem.theta.omega.value(&u);
                let ov = problem.theta.omega.value(&v);
                let jd = problem.theta.omega.jacobian_apply(&u, &diff);
                let rem: Vec<f64> = (0..m).map(|i| ov[i] - ou[i] - jd[i]).collect();
                let lhs = dot(&p, &rem);
                let rhs = 0.5 * b * norm_sq(&diff);
                t.record((lhs - rhs) / (1.0 + rhs));
            }
            report.checks.push(t.finish());
        }
        None => report.checks.push(skipped("descent_lemma_omega")),
    }

    // Jacobian transpose consistency: ⟨p, J d⟩ = ⟨Jᵀp, d⟩
    {
        let mut t = Tracker::new("jacobian_adjoint", 1e-9);
        for _ in 0..samples {
            let u = sample_u(&mut rng);
            let d = gaussian(&mut rng, n, 1.0);
            let p = gaussian(&mut rng, m, 1.0);
            let lhs = dot(&p, &problem.theta.omega.jacobian_apply(&u, &d));
            let rhs = dot(&problem.theta.omega.jacobian_t_apply(&u, &p), &d);
            t.record((lhs - rhs).abs() / (1.0 + lhs.abs()));
        }
        report.checks.push(t.finish());
    }

    // Bregman sandwich
    {
        let mut t = Tracker::new("bregman_sandwich", 1e-9);
        let beta = problem.core.beta();
        let big_b = problem.core.lipschitz();
        for _ in 0..samples {
            let u = sample_u(&mut rng);
            let v = sample_u(&mut rng);
            let d = problem.core.distance(&u, &v);
            let s = dist_sq(&u, &v);
            t.record((0.5 * beta * s - d).max(d - 0.5 * big_b * s) / (1.0 + s));
        }
        report.checks.push(t.finish());
    }

    // feasible-set projection: idempotent and nonexpansive
    {
        let mut t = Tracker::new("set_projection", 1e-12);
        for _ in 0..samples {
            let a = gaussian(&mut rng, n, 3.0);
            let b = gaussian(&mut rng, n, 3.0);
            let pa = problem.set.project(&a);
            let pb = problem.set.project(&b);
            let ppa = problem.set.project(&pa);
            t.record(dist(&pa, &ppa));
            t.record(dist(&pa, &pb) - dist(&a, &b));
        }
        report.checks.push(t.finish());
    }

    // the l1 tag evaluates to the weighted l1 norm
    if let NonsmoothTerm::L1 { weight } = &problem.j {
        let mut t = Tracker::new("l1_value", 1e-12);
        for _ in 0..samples {
            let u = gaussian(&mut rng, n, 1.0);
            let direct: f64 = u.iter().map(|x| weight * x.abs()).sum();
            t.record((problem.j.value(&u) - direct).abs() / (1.0 + direct.abs()));
        }
        report.checks.push(t.finish());
    }

    Ok(report)
}
