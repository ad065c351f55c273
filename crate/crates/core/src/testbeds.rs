//! Seeded instances with a known saddle point, built backwards from `(u*, p*)`.
//!
//! Each generator picks `u*`, `p*` and a complementary constraint value first, then
//! chooses the remaining data so that the KKT conditions hold exactly.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cones::{ConeSpec, NormExponent};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, norm1, norm_sq, DenseMatrix};
use crate::oracles::{
    ConeMapOracle, LeastSquaresFn, NccpProblem, NonsmoothTerm, PhiMap, QuadraticAffineMap, QuadraticFn, Reference, SmoothOracle,
};

/// A problem plus what the dual-bound helpers need.
#[derive(Clone)]
pub struct Testbed {
    pub name: &'static str,
    pub problem: NccpProblem,
    /// A Slater point, when the generator guarantees one.
    pub u_hat: Option<Vec<f64>>,
    /// A certified lower bound on the optimal value.
    pub lower_bound: Option<f64>,
}

// power iteration converges from below; pad the constants slightly
const PAD: f64 = 1.0 + 1e-8;

fn normals(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| StandardNormal.sample(rng)).collect()
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Result<DenseMatrix> {
    DenseMatrix::from_row_major(r, c, normals(rng, r * c))
}

/// `βI + RᵀR/n`, with `β` its certified strong-convexity modulus.
fn spd(rng: &mut ChaCha8Rng, n: usize, beta: f64) -> Result<DenseMatrix> {
    let r = gaussian_matrix(rng, n, n)?;
    let mut p = r.gram();
    p.scale(1.0 / n as f64);
    p.add_diagonal(beta);
    Ok(p)
}

/// Rank-one correction so that `A u* = target` exactly (up to rounding).
fn match_rows(a0: DenseMatrix, u_star: &[f64], target: &[f64]) -> Result<DenseMatrix> {
    let au = a0.matvec(u_star);
    let nu = norm_sq(u_star);
    let mut rows = a0.to_rows();
    for (i, row) in rows.iter_mut().enumerate() {
        axpy((target[i] - au[i]) / nu, u_star, row);
    }
    DenseMatrix::from_rows(&rows)
}

/// `½uᵀPu + cᵀu` with `c = -Pu* - Aᵀp*`, and `B_G`, `β_G` attached.
fn quadratic_objective(p: DenseMatrix, beta: f64, u_star: &[f64], a: &DenseMatrix, p_star: &[f64]) -> Result<(SmoothOracle, f64)> {
    let mut c = p.matvec(u_star);
    axpy(1.0, &a.tmatvec(p_star), &mut c);
    c.iter_mut().for_each(|x| *x = -*x);
    // unconstrained minimum ½... = -½ cᵀP⁻¹c
    let lb = -0.5 * dot(&c, &p.cholesky()?.solve(&c));
    let l = p.max_eigenvalue_psd() * PAD;
    let f = QuadraticFn::new(p, c, 0.0)?;
    Ok((SmoothOracle::new(f).with_lipschitz(l).with_strong_convexity(beta), lb))
}

fn affine_theta(a: DenseMatrix, b: Vec<f64>) -> Result<ConeMapOracle> {
    let tau = a.spectral_norm() * PAD;
    Ok(ConeMapOracle::affine(a, b)?.with_tau(tau))
}

fn finish(name: &'static str, mut problem: NccpProblem, u_star: Vec<f64>, p_star: Vec<f64>, u_hat: Option<Vec<f64>>, lb: f64) -> Result<Testbed> {
    let opt = problem.objective(&u_star);
    problem = problem.with_reference(Reference { u_star, p_star, opt_value: opt })?;
    Ok(Testbed { name, problem, u_hat, lower_bound: Some(lb) })
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("dimensions must be >= 1".into()));
    }
    Ok(())
}

/// Strongly convex QP with `Au = b`.
pub fn equality_qp(n: usize, m: usize, seed: u64) -> Result<Testbed> {
    check_sizes(n, m)?;
    if m > n {
        return Err(Error::InvalidParameter("need m <= n for a full-row-rank A".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = spd(&mut rng, n, 0.5)?;
    let a = gaussian_matrix(&mut rng, m, n)?;
    let u_star = normals(&mut rng, n);
    let p_star = normals(&mut rng, m);
    let b = a.matvec(&u_star);
    let (g, lb) = quadratic_objective(p, 0.5, &u_star, &a, &p_star)?;
    let theta = affine_theta(a, b)?;
    let pr = NccpProblem::new(g, NonsmoothTerm::Zero, theta, ConeSpec::Zero(m))?;
    finish("equality_qp", pr, u_star, p_star, None, lb)
}

/// Strongly convex QP with `Au - b ≤ 0`; about half the rows active, `u = 0` strictly feasible.
pub fn orthant_qp(n: usize, m: usize, seed: u64) -> Result<Testbed> {
    check_sizes(n, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = spd(&mut rng, n, 0.5)?;
    let a0 = gaussian_matrix(&mut rng, m, n)?;
    let u_star = normals(&mut rng, n);
    let b: Vec<f64> = (0..m).map(|_| 0.5 + rng.random::<f64>()).collect();
    let mut p_star = vec![0.0; m];
    let mut target = b.clone();
    for i in 0..m {
        if i % 2 == 0 {
            p_star[i] = 0.2 + rng.random::<f64>();
        } else {
            target[i] -= 0.2 + rng.random::<f64>();
        }
    }
    let a = match_rows(a0, &u_star, &target)?;
    let (g, lb) = quadratic_objective(p, 0.5, &u_star, &a, &p_star)?;
    let theta = affine_theta(a, b)?;
    let pr = NccpProblem::new(g, NonsmoothTerm::Zero, theta, ConeSpec::NonnegOrthant(m))?;
    finish("orthant_qp", pr, u_star, p_star, Some(vec![0.0; n]), lb)
}

/// Strongly convex QP with `Fu - g ∈ -K₂^{m}`; active at the boundary, `u = 0` interior.
pub fn soc_qp(n: usize, m: usize, seed: u64) -> Result<Testbed> {
    check_sizes(n, m)?;
    if m < 2 {
        return Err(Error::InvalidParameter("cone dimension must be >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = spd(&mut rng, n, 0.5)?;
    let f0 = gaussian_matrix(&mut rng, m, n)?;
    let u_star = normals(&mut rng, n);
    let mut v = normals(&mut rng, m - 1);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    // g ∈ int K₂ so that u = 0 is strictly feasible
    let gbar: Vec<f64> = normals(&mut rng, m - 1).iter().map(|x| 0.3 * x).collect();
    let mut g = vec![norm(&gbar) + 1.0 + rng.random::<f64>()];
    g.extend(gbar);
    let s = 0.5 + rng.random::<f64>();
    let t = 0.5 + rng.random::<f64>();
    // p* = s(1; v) and Θ(u*) = -t(1; -v) are orthogonal boundary rays
    let mut p_star = vec![s];
    p_star.extend(v.iter().map(|x| s * x));
    let mut target = vec![g[0] - t];
    target.extend(v.iter().zip(&g[1..]).map(|(x, gi)| gi + t * x));
    let f = match_rows(f0, &u_star, &target)?;
    let (obj, lb) = quadratic_objective(p, 0.5, &u_star, &f, &p_star)?;
    let theta = affine_theta(f, g)?;
    let pr = NccpProblem::new(obj, NonsmoothTerm::Zero, theta, ConeSpec::norm_cone(NormExponent::Two, m))?;
    finish("soc_qp", pr, u_star, p_star, Some(vec![0.0; n]), lb)
}

/// `½||Mu - y||² + λ||u||₁` with `Fu - g ≤ 0`; `u*` sparse, `u = 0` strictly feasible.
///
/// `G` is left without a declared `β_G`, so the instance exercises the merely convex path.
pub fn l1_least_squares(n: usize, k: usize, lambda: f64, seed: u64) -> Result<Testbed> {
    check_sizes(n, k)?;
    if !(lambda > 0.0) {
        return Err(Error::NonPositive("lambda"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = 2 * n;
    let mm = gaussian_matrix(&mut rng, rows, n)?;
    let mut u_star = normals(&mut rng, n);
    let mut subgrad = vec![0.0; n];
    for i in 0..n {
        if i % 3 == 2 {
            u_star[i] = 0.0;
            subgrad[i] = 0.9 * (2.0 * rng.random::<f64>() - 1.0);
        } else {
            subgrad[i] = u_star[i].signum();
        }
    }
    let g: Vec<f64> = (0..k).map(|_| 0.5 + rng.random::<f64>()).collect();
    let mut p_star = vec![0.0; k];
    let mut target = g.clone();
    for i in 0..k {
        if i % 2 == 0 {
            p_star[i] = 0.2 + rng.random::<f64>();
        } else {
            target[i] -= 0.2 + rng.random::<f64>();
        }
    }
    let f = match_rows(gaussian_matrix(&mut rng, k, n)?, &u_star, &target)?;
    // Mᵀ(Mu* - y) = w := -λs - Fᵀp*, with the residual taken in range(M)
    let mut w: Vec<f64> = subgrad.iter().map(|s| -lambda * s).collect();
    axpy(-1.0, &f.tmatvec(&p_star), &mut w);
    let mtm = mm.gram();
    let r = mm.matvec(&mtm.cholesky()?.solve(&w));
    let mut y = mm.matvec(&u_star);
    axpy(-1.0, &r, &mut y);
    let l = mm.spectral_norm();
    let obj = SmoothOracle::new(LeastSquaresFn::new(mm, y)?).with_lipschitz(l * l * PAD);
    let theta = affine_theta(f, g)?;
    let pr = NccpProblem::new(obj, NonsmoothTerm::L1 { weight: lambda }, theta, ConeSpec::NonnegOrthant(k))?;
    let opt = pr.objective(&u_star);
    debug_assert!(opt >= 0.0 && norm1(&u_star) > 0.0);
    finish("l1_least_squares", pr, u_star, p_star, Some(vec![0.0; n]), 0.0)
}

/// Random smooth instance with no known solution: strongly convex quadratic `G`,
/// orthant constraints `a_iᵀu - b_i + ½uᵀP_iu ≤ 0` (quadratic on every other row)
/// and, for odd seeds, a linear `Φ`. Returns the problem and an admissible fixed `ε`.
pub fn smooth_instance(n: usize, m: usize, seed: u64) -> Result<(NccpProblem, f64)> {
    check_sizes(n, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = 0.1 + rng.random::<f64>();
    let p = spd(&mut rng, n, beta)?;
    let c = normals(&mut rng, n);
    let b_g = p.max_eigenvalue_psd() * PAD;
    let g = SmoothOracle::new(QuadraticFn::new(p, c, 0.0)?).with_lipschitz(b_g).with_strong_convexity(beta);
    let a = gaussian_matrix(&mut rng, m, n)?;
    let b: Vec<f64> = (0..m).map(|_| 0.5 + rng.random::<f64>()).collect();
    let mut quad = Vec::new();
    let mut comps = vec![0.0; m];
    for (i, comp) in comps.iter_mut().enumerate().step_by(2) {
        let mut q = gaussian_matrix(&mut rng, n, n)?.gram();
        q.scale(0.2 / n as f64);
        *comp = q.max_eigenvalue_psd() * PAD;
        quad.push((i, q));
    }
    let phi = if seed % 2 == 1 {
        let mut pa = gaussian_matrix(&mut rng, m, n)?;
        pa.scale(0.3);
        PhiMap::Linear { a: pa, b: normals(&mut rng, m) }
    } else {
        PhiMap::Zero
    };
    let mut scale = a.spectral_norm();
    if let PhiMap::Linear { a: pa, .. } = &phi {
        scale += pa.spectral_norm();
    }
    let theta = ConeMapOracle::new(QuadraticAffineMap::new(a, b, quad)?, phi).with_b_omega_components(comps.clone());
    let pr = NccpProblem::new(g, NonsmoothTerm::Zero, theta, ConeSpec::NonnegOrthant(m))?;
    let eps = 0.5 / (b_g + comps.iter().sum::<f64>() + scale * scale);
    Ok((pr, eps))
}
