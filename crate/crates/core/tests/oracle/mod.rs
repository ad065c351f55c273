//! Reference projections computed without the library's closed forms.
//!
//! `K_1` and `K_inf` are polyhedral, so their projections come from an active-set NNLS
//! on the polar generators; the second-order cone uses a line search on the boundary ray.
#![allow(dead_code, clippy::needless_range_loop)]

use nccp_core::cones::{ConeSpec, NormExponent};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nrm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Solves the SPD system `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Lawson-Hanson NNLS: `min ||E l - v||` over `l >= 0`, with `E` given by its columns.
fn nnls(cols: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let m = cols.len();
    let mut lam = vec![0.0; m];
    let mut passive = vec![false; m];
    let resid = |lam: &[f64]| {
        let mut r = v.to_vec();
        for (c, l) in cols.iter().zip(lam) {
            for (ri, ci) in r.iter_mut().zip(c) {
                *ri -= l * ci;
            }
        }
        r
    };
    let ls = |p: &[usize]| {
        let g: Vec<Vec<f64>> = p.iter().map(|&i| p.iter().map(|&j| dot(&cols[i], &cols[j])).collect()).collect();
        solve(g, p.iter().map(|&i| dot(&cols[i], v)).collect())
    };
    for _outer in 0..10 * m {
        let r = resid(&lam);
        let w: Vec<f64> = cols.iter().map(|c| dot(c, &r)).collect();
        let Some(j) = (0..m).filter(|&j| !passive[j] && w[j] > 1e-13).max_by(|&a, &b| w[a].total_cmp(&w[b])) else { break };
        passive[j] = true;
        loop {
            let p: Vec<usize> = (0..m).filter(|&i| passive[i]).collect();
            let z = ls(&p);
            if z.iter().all(|&x| x > 0.0) {
                lam.iter_mut().for_each(|l| *l = 0.0);
                for (&i, &zi) in p.iter().zip(&z) {
                    lam[i] = zi;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&i, &zi) in p.iter().zip(&z) {
                if zi <= 0.0 {
                    alpha = alpha.min(lam[i] / (lam[i] - zi));
                }
            }
            for (&i, &zi) in p.iter().zip(&z) {
                lam[i] += alpha * (zi - lam[i]);
                if lam[i] <= 1e-15 {
                    lam[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    lam
}

/// Rows `g` of the polyhedral description `{x : g.x <= 0}` of `K_1` or `K_inf`.
fn facets(nu: NormExponent, d: usize) -> Vec<Vec<f64>> {
    let k = d - 1;
    let mut out = Vec::new();
    match nu {
        NormExponent::One => {
            for mask in 0..(1usize << k) {
                let mut g = vec![-1.0];
                g.extend((0..k).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }));
                out.push(g);
            }
        }
        NormExponent::Inf => {
            for i in 0..k {
                for s in [1.0, -1.0] {
                    let mut g = vec![0.0; d];
                    g[0] = -1.0;
                    g[i + 1] = s;
                    out.push(g);
                }
            }
        }
        NormExponent::Two => unreachable!("not polyhedral"),
    }
    out
}

/// Projection onto a polyhedral cone: subtract the projection onto its polar, `cone(g)`.
fn polyhedral_projection(nu: NormExponent, v: &[f64]) -> Vec<f64> {
    let g = facets(nu, v.len());
    let lam = nnls(&g, v);
    let mut polar = vec![0.0; v.len()];
    for (gi, l) in g.iter().zip(&lam) {
        for (p, x) in polar.iter_mut().zip(gi) {
            *p += l * x;
        }
    }
    sub(v, &polar)
}

/// Second-order cone by a line search over the boundary ray, compared with the apex and `v`.
fn soc_by_search(v: &[f64]) -> Vec<f64> {
    let t = v[0];
    let r = nrm(&v[1..]);
    if t >= r {
        return v.to_vec();
    }
    let dir: Vec<f64> = if r > 0.0 { v[1..].iter().map(|x| x / r).collect() } else { vec![0.0; v.len() - 1] };
    // bisection on the sign of d/ds of (t - s)^2 + (r - s)^2
    let df = |s: f64| (s - t) + (s - r);
    let (mut lo, mut hi) = (0.0, t.abs() + r + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if df(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    let mut out = vec![s];
    out.extend(dir.iter().map(|d| s * d));
    out
}

pub fn oracle(nu: NormExponent, v: &[f64]) -> Vec<f64> {
    match nu {
        NormExponent::Two => soc_by_search(v),
        _ => polyhedral_projection(nu, v),
    }
}

/// Dykstra's alternating projections onto `C* ∩ {||p|| <= radius}`.
pub fn dykstra_cone_ball(cone: &ConeSpec, radius: f64, v: &[f64]) -> Vec<f64> {
    let mut x = v.to_vec();
    let (mut p, mut q) = (vec![0.0; v.len()], vec![0.0; v.len()]);
    for _ in 0..20_000 {
        let y = cone.project_dual(&add(&x, &p)).unwrap();
        p = sub(&add(&x, &p), &y);
        let z = add(&y, &q);
        let n = nrm(&z);
        let xn: Vec<f64> = if n > radius { z.iter().map(|a| a * radius / n).collect() } else { z.clone() };
        q = sub(&z, &xn);
        if nrm(&sub(&xn, &x)) < 1e-15 {
            return xn;
        }
        x = xn;
    }
    x
}
