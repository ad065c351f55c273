//! Proximal building blocks and the accelerated proximal-gradient inner solver.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{dist, dist_sq, dot, sub};
use crate::oracles::{FeasibleSet, NonsmoothTerm, ProxFn};

/// Nonsmooth part of a primal subproblem after folding in `⟨q, Φ(u)⟩`.
#[derive(Clone)]
pub enum ProxTerm<'a> {
    /// `Σ lᵢ|uᵢ| + ½ Σ dᵢ uᵢ²`; empty vectors mean zero.
    Separable { l1: Vec<f64>, quad: Vec<f64> },
    Custom(&'a dyn ProxFn),
}

#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

impl ProxTerm<'_> {
    pub fn zero() -> Self {
        ProxTerm::Separable { l1: Vec::new(), quad: Vec::new() }
    }

    /// The term `J` alone, expanded to `n` coordinates.
    pub fn from_j(j: &NonsmoothTerm, n: usize) -> ProxTerm<'_> {
        match j {
            NonsmoothTerm::Zero => ProxTerm::zero(),
            NonsmoothTerm::L1 { weight } => ProxTerm::Separable { l1: vec![*weight; n], quad: Vec::new() },
            NonsmoothTerm::DiagQuadratic { diag } => ProxTerm::Separable { l1: Vec::new(), quad: diag.clone() },
            NonsmoothTerm::Custom(f) => ProxTerm::Custom(f.as_ref()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ProxTerm::Separable { l1, quad } => {
                l1.iter().all(|x| *x == 0.0) && quad.iter().all(|x| *x == 0.0)
            }
            ProxTerm::Custom(_) => false,
        }
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        match self {
            ProxTerm::Separable { l1, quad } => {
                let a: f64 = l1.iter().zip(u).map(|(l, x)| l * x.abs()).sum();
                let b: f64 = quad.iter().zip(u).map(|(d, x)| d * x * x).sum();
                a + 0.5 * b
            }
            ProxTerm::Custom(f) => f.value(u),
        }
    }

    /// Coordinate range `[lo, hi)` of a separable term.
    fn slice(&self, lo: usize, hi: usize) -> ProxTerm<'_> {
        match self {
            ProxTerm::Separable { l1, quad } => ProxTerm::Separable {
                l1: if l1.is_empty() { Vec::new() } else { l1[lo..hi].to_vec() },
                quad: if quad.is_empty() { Vec::new() } else { quad[lo..hi].to_vec() },
            },
            ProxTerm::Custom(f) => ProxTerm::Custom(*f),
        }
    }

    /// `argmin_x t·N(x) + ½||x - z||²`
    pub fn prox(&self, z: &[f64], t: f64) -> Vec<f64> {
        match self {
            ProxTerm::Separable { l1, quad } => z
                .iter()
                .enumerate()
                .map(|(i, zi)| {
                    let l = l1.get(i).copied().unwrap_or(0.0);
                    let d = quad.get(i).copied().unwrap_or(0.0);
                    soft_threshold(*zi, t * l) / (1.0 + t * d)
                })
                .collect(),
            ProxTerm::Custom(f) => f.prox(z, t),
        }
    }

    /// `argmin_{x∈U} t·N(x) + ½||x - z||²`
    pub fn prox_on_set(&self, set: &FeasibleSet, z: &[f64], t: f64) -> Result<Vec<f64>> {
        if set.is_full() {
            return Ok(self.prox(z, t));
        }
        if self.is_zero() {
            return Ok(set.project(z));
        }
        match set {
            FeasibleSet::Full(_) => Ok(self.prox(z, t)),
            FeasibleSet::Box { lo, hi } => {
                if matches!(self, ProxTerm::Custom(_)) {
                    return Err(Error::IncompatibleTags("custom prox with a box-constrained set"));
                }
                // separable: clamping the 1-D minimizer is exact
                let mut x = self.prox(z, t);
                for i in 0..x.len() {
                    x[i] = x[i].max(lo[i]).min(hi[i]);
                }
                Ok(x)
            }
            FeasibleSet::Ball { center, radius } => self.prox_on_ball(center, *radius, z, t),
            FeasibleSet::Product(blocks) => {
                if matches!(self, ProxTerm::Custom(_)) {
                    return Err(Error::IncompatibleTags("custom prox with a product set"));
                }
                let mut out = Vec::with_capacity(z.len());
                let mut off = 0;
                for b in blocks {
                    let d = b.dim();
                    let part = self.slice(off, off + d);
                    out.extend(part.prox_on_set(b, &z[off..off + d], t)?);
                    off += d;
                }
                Ok(out)
            }
        }
    }

    /// Ball constraint via bisection on the multiplier `μ` of `||x - c|| <= r`.
    fn prox_on_ball(&self, c: &[f64], r: f64, z: &[f64], t: f64) -> Result<Vec<f64>> {
        let x_at = |mu: f64| {
            let s = 1.0 + mu;
            let zz: Vec<f64> = z.iter().zip(c).map(|(zi, ci)| (zi + mu * ci) / s).collect();
            self.prox(&zz, t / s)
        };
        let x0 = x_at(0.0);
        if dist(&x0, c) <= r {
            return Ok(x0);
        }
        let mut hi = 1.0;
        let mut x_hi = x_at(hi);
        let mut guard = 0;
        while dist(&x_hi, c) > r {
            hi *= 2.0;
            x_hi = x_at(hi);
            guard += 1;
            if guard > 200 {
                return Err(Error::InnerIterationCap { iterations: guard, residual: dist(&x_hi, c) - r });
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let xm = x_at(mid);
            if dist(&xm, c) > r {
                lo = mid;
            } else {
                hi = mid;
                x_hi = xm;
            }
        }
        Ok(x_hi)
    }
}

/// Result of an inner solve.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub x: Vec<f64>,
    /// Gradient-mapping norm `||y - x⁺|| / t` at the last extrapolated point.
    pub residual: f64,
    pub iterations: usize,
}

/// Accelerated proximal gradient with backtracking and gradient-based restart.
///
/// `smooth(x, grad)` returns `f(x)` and writes `∇f(x)`. `prox(z, t)` evaluates the
/// proximal map of the nonsmooth part (including any set indicator).
pub fn accelerated_prox_grad(
    x0: &[f64],
    smooth: &mut dyn FnMut(&[f64], &mut [f64]) -> f64,
    prox: &mut dyn FnMut(&[f64], f64) -> Result<Vec<f64>>,
    lipschitz: Option<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<InnerOutcome> {
    let n = x0.len();
    let fixed_l = lipschitz.filter(|l| *l > 0.0 && l.is_finite());
    let mut l = fixed_l.unwrap_or(1.0);
    let mut x = prox(x0, 0.0)?;
    let mut y = x.clone();
    let mut theta = 1.0f64;
    let mut gy = vec![0.0; n];
    let mut gx_new = vec![0.0; n];
    let mut residual = f64::INFINITY;

    for it in 1..=max_iter {
        let fy = smooth(&y, &mut gy);
        let x_new = loop {
            let t = 1.0 / l;
            let z: Vec<f64> = y.iter().zip(&gy).map(|(yi, gi)| yi - t * gi).collect();
            let cand = prox(&z, t)?;
            if fixed_l.is_some() {
                break cand;
            }
            let fx = smooth(&cand, &mut gx_new);
            let d = sub(&cand, &y);
            let model = fy + dot(&gy, &d) + 0.5 * l * dist_sq(&cand, &y);
            if fx <= model + 1e-13 * fy.abs().max(1.0) || l > 1e300 {
                break cand;
            }
            l *= 2.0;
        };
        residual = l * dist(&x_new, &y);
        if residual <= tol || !residual.is_finite() {
            if !residual.is_finite() {
                return Err(Error::NonFinite);
            }
            return Ok(InnerOutcome { x: x_new, residual, iterations: it });
        }
        // restart when momentum points uphill
        let step: Vec<f64> = sub(&x_new, &x);
        let uphill = dot(&sub(&y, &x_new), &step) > 0.0;
        let theta_next = if uphill { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) };
        let beta = if uphill { 0.0 } else { (theta - 1.0) / theta_next };
        y = x_new.iter().zip(&step).map(|(xi, si)| xi + beta * si).collect();
        x = x_new;
        theta = theta_next;
        if fixed_l.is_none() {
            // allow the step to grow back slowly
            l *= 0.9;
        }
    }
    Err(Error::InnerIterationCap { iterations: max_iter, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn ball_prox_lands_on_boundary() {
        let term = ProxTerm::Separable { l1: vec![0.1, 0.1], quad: Vec::new() };
        let set = FeasibleSet::Ball { center: vec![0.0, 0.0], radius: 1.0 };
        let x = term.prox_on_set(&set, &[3.0, 4.0], 1.0).unwrap();
        assert!((norm(&x) - 1.0).abs() < 1e-12);
        // direction preserved for equal thresholds on a symmetric point
        let y = term.prox_on_set(&set, &[2.0, 2.0], 1.0).unwrap();
        assert!((y[0] - y[1]).abs() < 1e-12);
    }

    #[test]
    fn inner_solver_matches_soft_threshold() {
        let z = [1.5, -0.2, 0.7];
        let lam = 0.5;
        let term = ProxTerm::Separable { l1: vec![lam; 3], quad: Vec::new() };
        let mut smooth = |x: &[f64], g: &mut [f64]| {
            for i in 0..3 {
                g[i] = x[i] - z[i];
            }
            0.5 * dist_sq(x, &z)
        };
        let mut prox = |v: &[f64], t: f64| Ok(term.prox(v, t));
        let out = accelerated_prox_grad(&[0.0; 3], &mut smooth, &mut prox, None, 1e-12, 10_000).unwrap();
        let exact = term.prox(&z, 1.0);
        assert!(dist(&out.x, &exact) < 1e-10);
    }
}
