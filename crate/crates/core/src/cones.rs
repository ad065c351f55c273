//! Closed convex cone descriptors and the Euclidean projections the solvers use.
//!
//! Multipliers live in the dual cone `C*`, so the workhorse is [`ConeSpec::project_dual`].
//! Every projection here is exact: orthants clamp, the 2-norm cone uses the closed
//! form, and the 1-/inf-norm cones use a sorted-threshold search in `O(k log k)`.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{norm, norm1, norm_inf};

/// Exponent of a norm cone `K_nu = {(x0, xbar) : x0 >= ||xbar||_nu}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NormExponent {
    One,
    Two,
    Inf,
}

impl NormExponent {
    /// Conjugate exponent `omega` with `1/omega + 1/nu = 1`.
    pub fn conjugate(self) -> Self {
        match self {
            NormExponent::One => NormExponent::Inf,
            NormExponent::Two => NormExponent::Two,
            NormExponent::Inf => NormExponent::One,
        }
    }

    pub fn norm(self, x: &[f64]) -> f64 {
        match self {
            NormExponent::One => norm1(x),
            NormExponent::Two => norm(x),
            NormExponent::Inf => norm_inf(x),
        }
    }

    /// Parses the numeric exponent used in config files (`f64::INFINITY` for inf).
    pub fn from_f64(nu: f64) -> Result<Self> {
        if nu == 1.0 {
            Ok(NormExponent::One)
        } else if nu == 2.0 {
            Ok(NormExponent::Two)
        } else if nu.is_infinite() && nu > 0.0 {
            Ok(NormExponent::Inf)
        } else {
            Err(Error::UnsupportedExponent)
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            NormExponent::One => 1.0,
            NormExponent::Two => 2.0,
            NormExponent::Inf => f64::INFINITY,
        }
    }
}

/// Closed convex cone descriptor.
///
/// `Free(n)` is the whole space `R^n`; it only arises as the dual of `Zero(n)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ConeSpec {
    Zero(usize),
    Free(usize),
    NonnegOrthant(usize),
    NormCone { nu: NormExponent, dim: usize },
    Product(Vec<ConeSpec>),
}

impl ConeSpec {
    pub fn norm_cone(nu: NormExponent, dim: usize) -> Self {
        ConeSpec::NormCone { nu, dim }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConeSpec::Zero(n) | ConeSpec::Free(n) | ConeSpec::NonnegOrthant(n) => *n,
            ConeSpec::NormCone { dim, .. } => *dim,
            ConeSpec::Product(blocks) => blocks.iter().map(ConeSpec::dim).sum(),
        }
    }

    /// Checks the descriptor invariants.
    pub fn validate(&self) -> Result<()> {
        match self {
            ConeSpec::Zero(n) | ConeSpec::Free(n) | ConeSpec::NonnegOrthant(n) => {
                if *n == 0 {
                    return Err(Error::InvalidParameter("cone dimension must be >= 1".into()));
                }
            }
            ConeSpec::NormCone { dim, .. } => {
                if *dim < 2 {
                    return Err(Error::InvalidParameter("norm cone dimension must be >= 2".into()));
                }
            }
            ConeSpec::Product(blocks) => {
                if blocks.is_empty() {
                    return Err(Error::EmptyInput("product cone"));
                }
                for b in blocks {
                    b.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Descriptor of the dual cone `C*`.
    pub fn dual(&self) -> ConeSpec {
        match self {
            ConeSpec::Zero(n) => ConeSpec::Free(*n),
            ConeSpec::Free(n) => ConeSpec::Zero(*n),
            ConeSpec::NonnegOrthant(n) => ConeSpec::NonnegOrthant(*n),
            ConeSpec::NormCone { nu, dim } => ConeSpec::NormCone { nu: nu.conjugate(), dim: *dim },
            ConeSpec::Product(blocks) => ConeSpec::Product(blocks.iter().map(ConeSpec::dual).collect()),
        }
    }

    /// Projection onto the cone itself.
    pub fn project_in_place(&self, v: &mut [f64]) {
        match self {
            ConeSpec::Zero(_) => v.iter_mut().for_each(|x| *x = 0.0),
            ConeSpec::Free(_) => {}
            ConeSpec::NonnegOrthant(_) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            ConeSpec::NormCone { nu, .. } => project_norm_cone_in_place(*nu, v),
            ConeSpec::Product(blocks) => {
                let mut offset = 0;
                for b in blocks {
                    let d = b.dim();
                    b.project_in_place(&mut v[offset..offset + d]);
                    offset += d;
                }
            }
        }
    }

    /// `Pi(v)`: Euclidean projection onto `C*`, in place.
    pub fn project_dual_in_place(&self, v: &mut [f64]) {
        match self {
            ConeSpec::Zero(_) => {}
            ConeSpec::Free(_) => v.iter_mut().for_each(|x| *x = 0.0),
            ConeSpec::NonnegOrthant(_) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            ConeSpec::NormCone { nu, .. } => project_norm_cone_in_place(nu.conjugate(), v),
            ConeSpec::Product(blocks) => {
                let mut offset = 0;
                for b in blocks {
                    let d = b.dim();
                    b.project_dual_in_place(&mut v[offset..offset + d]);
                    offset += d;
                }
            }
        }
    }

    /// `Pi(v)`: Euclidean projection onto `C*`.
    pub fn project_dual(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        let mut out = v.to_vec();
        self.project_dual_in_place(&mut out);
        Ok(out)
    }

    /// `Pi_{-C}(v) = v - Pi(v)` (Moreau decomposition).
    pub fn project_neg_cone(&self, v: &[f64]) -> Result<Vec<f64>> {
        let pd = self.project_dual(v)?;
        Ok(v.iter().zip(&pd).map(|(a, b)| a - b).collect())
    }

    /// Projection onto `C* ∩ {||p|| <= radius}`, in place.
    ///
    /// For a cone and a ball centred at the origin this is the cone projection
    /// followed by radial truncation.
    pub fn project_dual_ball_in_place(&self, radius: f64, v: &mut [f64]) {
        self.project_dual_in_place(v);
        let n = norm(v);
        if n > radius {
            let s = radius / n;
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Projection onto `C* ∩ {||p|| <= radius}`.
    pub fn project_cone_ball(&self, radius: f64, v: &[f64]) -> Result<Vec<f64>> {
        if !(radius > 0.0) {
            return Err(Error::NonPositive("ball radius M"));
        }
        check_dim(self.dim(), v.len())?;
        let mut out = v.to_vec();
        self.project_dual_ball_in_place(radius, &mut out);
        Ok(out)
    }

    /// Dual projection with an optional ball bound (VAPP-M when `Some`).
    pub fn project_multiplier_in_place(&self, bound: Option<f64>, v: &mut [f64]) {
        match bound {
            Some(m) => self.project_dual_ball_in_place(m, v),
            None => self.project_dual_in_place(v),
        }
    }

    /// Distance from `theta` to `-C`, i.e. `||Pi(theta)||`.
    pub fn violation(&self, theta: &[f64]) -> f64 {
        let mut tmp = theta.to_vec();
        self.project_dual_in_place(&mut tmp);
        norm(&tmp)
    }

    /// Membership in the cone up to `tol` (measured as distance to the cone).
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        let mut tmp = v.to_vec();
        self.project_in_place(&mut tmp);
        crate::linalg::dist(&tmp, v) <= tol
    }

    /// Membership in the dual cone up to `tol`.
    pub fn dual_contains(&self, v: &[f64], tol: f64) -> bool {
        let mut tmp = v.to_vec();
        self.project_dual_in_place(&mut tmp);
        crate::linalg::dist(&tmp, v) <= tol
    }
}

/// Free-function form of [`ConeSpec::project_dual`].
pub fn project_dual(cone: &ConeSpec, v: &[f64]) -> Result<Vec<f64>> {
    cone.project_dual(v)
}

/// Free-function form of [`ConeSpec::project_neg_cone`].
pub fn project_neg_cone(cone: &ConeSpec, v: &[f64]) -> Result<Vec<f64>> {
    cone.project_neg_cone(v)
}

/// Free-function form of [`ConeSpec::project_cone_ball`].
pub fn project_cone_ball(cone: &ConeSpec, radius: f64, v: &[f64]) -> Result<Vec<f64>> {
    cone.project_cone_ball(radius, v)
}

/// Free-function form of [`ConeSpec::dual`].
pub fn dual_cone(cone: &ConeSpec) -> ConeSpec {
    cone.dual()
}

/// Projection onto `K_nu = {(x0, xbar) : x0 >= ||xbar||_nu}`.
pub fn project_norm_cone(nu: NormExponent, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::InvalidParameter("norm cone projection needs dim >= 2".into()));
    }
    let mut out = x.to_vec();
    project_norm_cone_in_place(nu, &mut out);
    Ok(out)
}

pub(crate) fn project_norm_cone_in_place(nu: NormExponent, x: &mut [f64]) {
    match nu {
        NormExponent::Two => project_soc(x),
        NormExponent::One => project_l1_epigraph(x),
        NormExponent::Inf => {
            // Pi_K(v) = v + Pi_{K*}(-v) with K_inf* = K_1
            let mut neg: Vec<f64> = x.iter().map(|a| -a).collect();
            project_l1_epigraph(&mut neg);
            for (xi, ni) in x.iter_mut().zip(&neg) {
                *xi += ni;
            }
        }
    }
}

fn project_soc(x: &mut [f64]) {
    let t = x[0];
    let r = norm(&x[1..]);
    if t >= r {
        return;
    }
    if t <= -r {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let s = 0.5 * (t + r);
    x[0] = s;
    let scale = s / r;
    x[1..].iter_mut().for_each(|v| *v *= scale);
}

/// Exact projection onto the epigraph of the 1-norm via sorted thresholds.
fn project_l1_epigraph(x: &mut [f64]) {
    let t = x[0];
    let body = &mut x[1..];
    let l1 = norm1(body);
    if t >= l1 {
        return;
    }
    let linf = norm_inf(body);
    if t <= -linf {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut a: Vec<f64> = body.iter().map(|v| v.abs()).collect();
    a.sort_unstable_by(|p, q| q.partial_cmp(p).unwrap_or(core::cmp::Ordering::Equal));
    let n = a.len();
    let mut cum = 0.0;
    let mut lambda = 0.0;
    for k in 0..n {
        cum += a[k];
        let cand = (cum - t) / (k as f64 + 2.0);
        let next = if k + 1 < n { a[k + 1] } else { 0.0 };
        if cand >= next {
            lambda = cand;
            break;
        }
    }
    for v in body.iter_mut() {
        let mag = (v.abs() - lambda).max(0.0);
        *v = mag.copysign(*v);
    }
    x[0] = t + lambda;
}

/// Scratch-free helper for callers that need `||Pi(v)||` repeatedly.
pub fn dual_projection_norm(cone: &ConeSpec, v: &[f64]) -> f64 {
    cone.violation(v)
}

/// Returns a zero vector of the cone's dimension.
pub fn zeros_like(cone: &ConeSpec) -> Vec<f64> {
    vec![0.0; cone.dim()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_abs_diff_eq!(x, y, epsilon = tol);
        }
    }

    #[test]
    fn orthant_dual_projection_clamps() {
        let c = ConeSpec::NonnegOrthant(2);
        close(&c.project_dual(&[1.0, -2.0]).unwrap(), &[1.0, 0.0], 0.0);
    }

    #[test]
    fn zero_cone_dual_is_identity() {
        let c = ConeSpec::Zero(2);
        close(&c.project_dual(&[3.0, -1.0]).unwrap(), &[3.0, -1.0], 0.0);
        close(&c.project_neg_cone(&[3.0, -1.0]).unwrap(), &[0.0, 0.0], 0.0);
    }

    #[test]
    fn soc_example() {
        let c = ConeSpec::norm_cone(NormExponent::Two, 3);
        close(&c.project_dual(&[0.0, 3.0, 4.0]).unwrap(), &[2.5, 1.5, 2.0], 1e-15);
        close(&c.project_neg_cone(&[0.0, 3.0, 4.0]).unwrap(), &[-2.5, 1.5, 2.0], 1e-15);
    }

    #[test]
    fn orthant_neg_projection() {
        let c = ConeSpec::NonnegOrthant(2);
        close(&c.project_neg_cone(&[-1.0, 2.0]).unwrap(), &[-1.0, 0.0], 0.0);
    }

    #[test]
    fn cone_ball_examples() {
        let c = ConeSpec::NonnegOrthant(2);
        let r = c.project_cone_ball(1.0, &[2.0, 2.0]).unwrap();
        let h = 1.0 / 2.0f64.sqrt();
        close(&r, &[h, h], 1e-15);
        let c1 = ConeSpec::NonnegOrthant(1);
        close(&c1.project_cone_ball(5.0, &[-3.0]).unwrap(), &[0.0], 0.0);
        close(&c.project_cone_ball(10.0, &[0.5, 0.25]).unwrap(), &[0.5, 0.25], 0.0);
        assert_eq!(c.project_cone_ball(0.0, &[1.0, 1.0]), Err(Error::NonPositive("ball radius M")));
    }

    #[test]
    fn norm_cone_examples() {
        close(&project_norm_cone(NormExponent::Two, &[5.0, 3.0, 0.0]).unwrap(), &[5.0, 3.0, 0.0], 0.0);
        close(&project_norm_cone(NormExponent::Two, &[-5.0, 3.0, 4.0]).unwrap(), &[0.0, 0.0, 0.0], 0.0);
        let r = project_norm_cone(NormExponent::One, &[0.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(r[0], norm1(&r[1..]), epsilon = 1e-15);
        close(&r, &[2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1e-15);
    }

    #[test]
    fn boundary_points_are_fixed() {
        for nu in [NormExponent::One, NormExponent::Two, NormExponent::Inf] {
            let x = [nu.norm(&[3.0, -4.0]), 3.0, -4.0];
            close(&project_norm_cone(nu, &x).unwrap(), &x, 1e-15);
        }
    }

    #[test]
    fn dual_descriptors() {
        assert_eq!(ConeSpec::Zero(3).dual(), ConeSpec::Free(3));
        assert_eq!(
            ConeSpec::norm_cone(NormExponent::One, 11).dual(),
            ConeSpec::norm_cone(NormExponent::Inf, 11)
        );
        assert_eq!(ConeSpec::NonnegOrthant(4).dual(), ConeSpec::NonnegOrthant(4));
        let p = ConeSpec::Product(vec![ConeSpec::Zero(1), ConeSpec::norm_cone(NormExponent::Two, 3)]);
        assert_eq!(
            p.dual(),
            ConeSpec::Product(vec![ConeSpec::Free(1), ConeSpec::norm_cone(NormExponent::Two, 3)])
        );
        assert_eq!(p.dual().dual(), p);
    }

    #[test]
    fn product_projects_blockwise() {
        let p = ConeSpec::Product(vec![ConeSpec::NonnegOrthant(1), ConeSpec::norm_cone(NormExponent::Two, 3)]);
        close(&p.project_dual(&[-1.0, 0.0, 3.0, 4.0]).unwrap(), &[0.0, 2.5, 1.5, 2.0], 1e-15);
    }

    #[test]
    fn dimension_checks() {
        let c = ConeSpec::NonnegOrthant(2);
        assert!(matches!(c.project_dual(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(ConeSpec::norm_cone(NormExponent::Two, 1).validate().is_err());
        assert!(project_norm_cone(NormExponent::One, &[1.0]).is_err());
        assert_eq!(NormExponent::from_f64(3.0), Err(Error::UnsupportedExponent));
    }

    #[test]
    fn inf_cone_projection_lands_in_cone() {
        let r = project_norm_cone(NormExponent::Inf, &[0.5, 2.0, -1.0, 0.1]).unwrap();
        assert!(r[0] + 1e-14 >= norm_inf(&r[1..]));
    }
}
