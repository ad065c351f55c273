//! Invariant suites behind `nccp check`.

use std::fmt;
use std::str::FromStr;

use anyhow::{Context, Result};
use nccp_core::analysis::{rate_fit, Metric};
use nccp_core::cones::{ConeSpec, NormExponent};
use nccp_core::fbs::fbs_step;
use nccp_core::linalg::{dist, dist_sq, dot, norm, norm_inf, sub, DenseMatrix};
use nccp_core::oracles::{ClosureFn, ConeMapOracle, NccpProblem, NonsmoothTerm, SmoothOracle};
use nccp_core::strong::run_strong;
use nccp_core::structured::{build_structured_map, StructuredMapSpec, StructuredVariant};
use nccp_core::testbeds::{equality_qp, l1_least_squares, orthant_qp, smooth_instance, soc_qp, Testbed};
use nccp_core::vapp::{run, step_with_eps, vapp_step, EpsMode, SolverConfig, SolverState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Cones,
    ProjIneq,
    Descent,
    DescentStrong,
    Delta,
    Fbs,
    CConvex,
    Rates,
}

impl Suite {
    pub const ALL: [Suite; 8] = [Suite::Cones, Suite::ProjIneq, Suite::Descent, Suite::DescentStrong, Suite::Delta, Suite::Fbs, Suite::CConvex, Suite::Rates];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Cones => "cones",
            Suite::ProjIneq => "proj-ineq",
            Suite::Descent => "descent",
            Suite::DescentStrong => "descent-strong",
            Suite::Delta => "delta",
            Suite::Fbs => "fbs",
            Suite::CConvex => "cconvex",
            Suite::Rates => "rates",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|v| v.name() == s).with_context(|| format!("unknown suite {s:?}"))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    /// Samples per cone family / structured map; iteration counts are fixed per suite.
    pub samples: usize,
    pub seed: u64,
    /// Mutation knob: form `qᵏ` after the primal step.
    pub misorder_dual: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { samples: 10_000, seed: 1, misorder_dual: false }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub passed: bool,
    /// Largest violation seen, in the suite's own units (positive means violated).
    pub worst: f64,
    pub detail: String,
}

impl fmt::Display for SuiteOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<8} {}  worst={:.3e}  {}", self.suite.name(), if self.passed { "PASS" } else { "FAIL" }, self.worst, self.detail)
    }
}

/// Largest-violation bookkeeping for one check.
struct Worst {
    worst: f64,
    tol: f64,
    what: String,
}

impl Worst {
    fn new(tol: f64) -> Self {
        Worst { worst: f64::NEG_INFINITY, tol, what: String::new() }
    }
    /// `excess` is the amount by which an inequality fails (≤ 0 when it holds).
    fn see(&mut self, excess: f64, what: impl FnOnce() -> String) {
        if excess > self.worst || excess.is_nan() {
            self.worst = if excess.is_nan() { f64::INFINITY } else { excess };
            self.what = what();
        }
    }
    fn ok(&self) -> bool {
        self.worst <= self.tol
    }
}

pub fn run_suite(suite: Suite, opts: &CheckOptions) -> SuiteOutcome {
    let r = match suite {
        Suite::Cones => cones(opts),
        Suite::ProjIneq => proj_ineq(opts),
        Suite::Descent => descent(opts),
        Suite::DescentStrong => descent_strong(),
        Suite::Delta => delta(),
        Suite::Fbs => fbs(opts),
        Suite::CConvex => cconvex(opts),
        Suite::Rates => rates(),
    };
    match r {
        Ok((w, detail)) => SuiteOutcome { suite, passed: w.ok(), worst: w.worst, detail: if w.ok() { detail } else { format!("{detail}; worst at {}", w.what) } },
        Err(e) => SuiteOutcome { suite, passed: false, worst: f64::INFINITY, detail: format!("error: {e:#}") },
    }
}

pub fn run_suites(suites: &[Suite], opts: &CheckOptions) -> Vec<SuiteOutcome> {
    suites.iter().map(|s| run_suite(*s, opts)).collect()
}

fn gauss(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// One representative per cone family, plus a product.
pub fn cone_families() -> Vec<ConeSpec> {
    vec![
        ConeSpec::Zero(4),
        ConeSpec::NonnegOrthant(5),
        ConeSpec::norm_cone(NormExponent::One, 6),
        ConeSpec::norm_cone(NormExponent::Two, 6),
        ConeSpec::norm_cone(NormExponent::Inf, 6),
        ConeSpec::Product(vec![ConeSpec::Zero(1), ConeSpec::NonnegOrthant(2), ConeSpec::norm_cone(NormExponent::Two, 3), ConeSpec::norm_cone(NormExponent::One, 4)]),
    ]
}

fn cones(opts: &CheckOptions) -> Result<(Worst, String)> {
    let mut w = Worst::new(1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for cone in cone_families() {
        let m = cone.dim();
        let label = format!("{cone:?}");
        for _ in 0..opts.samples {
            let scale = 10f64.powf(rng.random_range(-2.0..2.0));
            let v = gauss(&mut rng, m, scale);
            let pd = cone.project_dual(&v)?;
            let pn = cone.project_neg_cone(&v)?;
            let recon: Vec<f64> = pd.iter().zip(&pn).map(|(a, b)| a + b).collect();
            w.see(dist(&recon, &v), || format!("{label} moreau"));
            w.see(dot(&pd, &pn).abs(), || format!("{label} complementarity"));
            let u = gauss(&mut rng, m, scale);
            let pu = cone.project_dual(&u)?;
            w.see(dist(&pu, &pd) - dist(&u, &v), || format!("{label} nonexpansive"));
            let y = cone.project_dual(&gauss(&mut rng, m, scale))?;
            w.see(dot(&sub(&y, &pu), &sub(&u, &pu)), || format!("{label} variational"));
            // idempotence is held to a tighter 1e-12
            w.see(dist(&cone.project_dual(&pd)?, &pd) - 1e-12 + 1e-10, || format!("{label} idempotence"));
        }
    }
    Ok((w, format!("{} samples x {} families", opts.samples, cone_families().len())))
}

fn proj_ineq(opts: &CheckOptions) -> Result<(Worst, String)> {
    let mut w = Worst::new(1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(11));
    for cone in cone_families() {
        let m = cone.dim();
        for _ in 0..opts.samples {
            let (u, v, c) = (gauss(&mut rng, m, 1.0), gauss(&mut rng, m, 1.0), gauss(&mut rng, m, 1.0));
            let pu = cone.project_dual(&c.iter().zip(&u).map(|(a, b)| a + b).collect::<Vec<_>>())?;
            let pv = cone.project_dual(&c.iter().zip(&v).map(|(a, b)| a + b).collect::<Vec<_>>())?;
            let lhs = 2.0 * dot(&sub(&pu, &pv), &u);
            let rhs = dist_sq(&u, &v) + dist_sq(&pu, &c) - dist_sq(&pv, &c);
            w.see(lhs - rhs, || format!("{cone:?}"));
        }
    }
    Ok((w, format!("{} samples x {} families", opts.samples, cone_families().len())))
}

/// `G = ½u²`, `Θ(u) = u - 1`, `C = {0}`; saddle point `(1, -1)`.
pub fn one_d() -> Result<NccpProblem> {
    use nccp_core::oracles::Reference;
    let g = SmoothOracle::new(ClosureFn::new(1, |u| 0.5 * u[0] * u[0], |u, o| o[0] = u[0])).with_lipschitz(1.0).with_strong_convexity(1.0);
    let theta = ConeMapOracle::affine(DenseMatrix::identity(1), vec![1.0])?;
    let pr = NccpProblem::new(g, NonsmoothTerm::Zero, theta, ConeSpec::Zero(1))?;
    Ok(pr.with_reference(Reference { u_star: vec![1.0], p_star: vec![-1.0], opt_value: 0.5 })?)
}

fn fixed_config(problem: &NccpProblem, iters: usize) -> Result<SolverConfig> {
    let mut cfg = SolverConfig { max_iter: iters, tol_feas: 0.0, tol_obj: 0.0, ..Default::default() };
    cfg.eps0 = 0.98 * cfg.eps_limit(problem)?;
    Ok(cfg)
}

/// The convex suite used by the descent checks.
pub fn convex_suite(seed: u64) -> Result<Vec<Testbed>> {
    Ok(vec![equality_qp(8, 3, seed)?, orthant_qp(8, 4, seed)?, soc_qp(8, 4, seed)?, l1_least_squares(8, 3, 0.3, seed)?])
}

fn descent(opts: &CheckOptions) -> Result<(Worst, String)> {
    let mut w = Worst::new(1e-8);
    let mut beds = vec![("one_d".to_string(), one_d()?)];
    beds.extend(convex_suite(opts.seed)?.into_iter().map(|t| (t.name.to_string(), t.problem)));
    for (name, pr) in &beds {
        let mut cfg = fixed_config(pr, 300)?;
        cfg.misorder_dual = opts.misorder_dual;
        let out = run(pr, &cfg, None)?;
        for r in &out.trace {
            let slack = r.lemma1_slack().context("descent terms missing from trace")?;
            w.see(-slack, || format!("{name} k={}", r.iter));
        }
    }
    Ok((w, format!("{} instances x 300 steps", beds.len())))
}

fn descent_strong() -> Result<(Worst, String)> {
    let mut w = Worst::new(1e-8);
    let mut beds = vec![("one_d".to_string(), one_d()?)];
    for s in 0..3 {
        beds.push((format!("equality_qp#{s}"), equality_qp(6, 2, s)?.problem));
        beds.push((format!("orthant_qp#{s}"), orthant_qp(6, 3, s)?.problem));
    }
    for (name, pr) in &beds {
        let cfg = SolverConfig { max_iter: 300, tol_feas: 0.0, tol_obj: 0.0, ..Default::default() };
        let out = run_strong(pr, &cfg, None)?;
        for r in &out.trace {
            let slack = r.lemma1_slack().context("descent terms missing from trace")?;
            w.see(-slack, || format!("{name} k={}", r.iter));
        }
    }
    Ok((w, format!("{} instances x 300 steps", beds.len())))
}

fn delta() -> Result<(Worst, String)> {
    let mut w = Worst::new(1e-9);
    let beds = convex_suite(3)?;
    for tb in &beds {
        let pr = &tb.problem;
        let cfg = fixed_config(pr, 0)?;
        let mut state = SolverState::new(pr, vec![0.0; pr.dim()], vec![0.0; pr.m()], cfg.eps0)?;
        for k in 0..300 {
            let r = step_with_eps(pr, &state, &cfg, cfg.eps0)?;
            let lb = r.delta.lower_bound.context("constants missing")?;
            w.see(lb - r.delta.value, || format!("{} k={k}", tb.name));
            state = vapp_step(pr, &state, &cfg)?;
        }
    }
    // backtracking: accepted Δ is nonnegative
    for tb in &beds {
        let pr = &tb.problem;
        let cfg = SolverConfig { eps0: 10.0, eps_mode: EpsMode::Backtracking { eta: 0.5 }, max_iter: 300, tol_feas: 0.0, tol_obj: 0.0, ..Default::default() };
        let out = run(pr, &cfg, None)?;
        for r in &out.trace {
            w.see(-r.delta_k.unwrap_or(f64::NAN), || format!("{} backtracking k={}", tb.name, r.iter));
        }
    }
    Ok((w, format!("{} instances, fixed and backtracking", beds.len())))
}

/// Largest componentwise gap between `fbs_step` and `vapp_step` iterates.
pub fn fbs_divergence(instances: u64, steps: usize, seed: u64) -> Result<(f64, String)> {
    let mut worst = 0.0f64;
    let mut at = String::new();
    for i in 0..instances {
        let s = seed.wrapping_mul(1000).wrapping_add(i);
        let (pr, eps) = smooth_instance(3 + (i as usize % 4), 2 + (i as usize % 3), s)?;
        let cfg = SolverConfig { eps0: eps, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let u0 = gauss(&mut rng, pr.dim(), 1.0);
        let mut a = SolverState::new(&pr, u0.clone(), vec![0.0; pr.m()], eps)?;
        let mut b = a.clone();
        for k in 0..steps {
            a = vapp_step(&pr, &a, &cfg)?;
            b = fbs_step(&pr, &b, &cfg)?;
            let d = norm_inf(&sub(&a.u, &b.u)).max(norm_inf(&sub(&a.p, &b.p)));
            if d > worst {
                worst = d;
                at = format!("instance {i} step {k}");
            }
        }
    }
    Ok((worst, at))
}

fn fbs(opts: &CheckOptions) -> Result<(Worst, String)> {
    let mut w = Worst::new(1e-10);
    let (d, at) = fbs_divergence(50, 100, opts.seed)?;
    w.see(d, || at);
    Ok((w, "50 instances x 100 steps".into()))
}

/// Maps from every structured variant under each `ν`.
pub fn structured_maps(n: usize, seed: u64) -> Result<Vec<(String, ConeMapOracle)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let convex_quad = |rng: &mut ChaCha8Rng| -> Result<SmoothOracle> {
        let r = DenseMatrix::from_row_major(n, n, gauss(rng, n * n, 1.0))?;
        let mut p = r.gram();
        p.scale(1.0 / n as f64);
        let c = gauss(rng, n, 1.0);
        Ok(SmoothOracle::new(nccp_core::oracles::QuadraticFn::new(p, c, -1.0)?))
    };
    let softplus = SmoothOracle::new(ClosureFn::new(
        n,
        |u| u.iter().map(|x| (1.0 + x.exp()).ln()).sum::<f64>() - 2.0,
        |u, o| {
            for (g, x) in o.iter_mut().zip(u) {
                *g = 1.0 / (1.0 + (-x).exp());
            }
        },
    ));
    for nu in [NormExponent::One, NormExponent::Two, NormExponent::Inf] {
        let l = 3;
        let m = 2;
        let g: Vec<SmoothOracle> = (0..l).map(|j| if j == 0 { Ok(softplus.clone()) } else { convex_quad(&mut rng) }).collect::<Result<_>>()?;
        let q = DenseMatrix::from_row_major(m, l, (0..m * l).map(|_| rng.random::<f64>()).collect())?;
        let omega: Vec<f64> = (0..l).map(|j| (0..m).map(|i| q.get(i, j)).sum::<f64>() + rng.random::<f64>()).collect();
        let a = DenseMatrix::from_row_major(2, n, gauss(&mut rng, 2 * n, 1.0))?;
        let b = gauss(&mut rng, 2, 1.0);
        let variants = [
            ("weighted", StructuredVariant::Weighted, Some(convex_quad(&mut rng)?), None),
            ("affine", StructuredVariant::Affine, Some(convex_quad(&mut rng)?), Some((a.clone(), b.clone()))),
            ("weighted_affine", StructuredVariant::WeightedAffine, None, Some((a, b))),
        ];
        for (name, variant, g0, affine) in variants {
            let weighted = !matches!(variant, StructuredVariant::Affine);
            let spec = StructuredMapSpec {
                dim: n,
                g0,
                g0_l1: if name == "affine" { 0.5 } else { 0.0 },
                g: if weighted { g.clone() } else { Vec::new() },
                q: weighted.then(|| q.clone()),
                omega_weights: if weighted { omega.clone() } else { Vec::new() },
                affine,
                variant,
                nu,
            };
            out.push((format!("{name}/nu={}", nu.as_f64()), build_structured_map(spec)?));
        }
    }
    Ok(out)
}

/// Worst scaled `||Π(Θ(λx+(1-λ)y) - λΘ(x) - (1-λ)Θ(y))||` over random pairs.
pub fn c_convexity_violation(theta: &ConeMapOracle, cone: &ConeSpec, n: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = gauss(&mut rng, n, 2.0);
        let y = gauss(&mut rng, n, 2.0);
        let lam: f64 = rng.random();
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        let (tx, ty, tm) = (theta.theta(&x), theta.theta(&y), theta.theta(&mid));
        let d: Vec<f64> = (0..tm.len()).map(|i| tm[i] - lam * tx[i] - (1.0 - lam) * ty[i]).collect();
        let scale = 1.0 + norm(&tx).max(norm(&ty));
        worst = worst.max(cone.violation(&d) / scale);
    }
    worst
}

fn cconvex(opts: &CheckOptions) -> Result<(Worst, String)> {
    let mut w = Worst::new(1e-12);
    let n = 4;
    let maps = structured_maps(n, opts.seed)?;
    for (name, theta) in &maps {
        let cone = theta.certificate.as_ref().context("structured map without certificate")?.cone.clone();
        let v = c_convexity_violation(theta, &cone, n, opts.samples, opts.seed);
        w.see(v, || name.clone());
    }
    Ok((w, format!("{} maps x {} samples", maps.len(), opts.samples)))
}

fn rates() -> Result<(Worst, String)> {
    // slopes must be at most the targets; `worst` reports the largest excess
    let mut w = Worst::new(0.0);
    let tb = equality_qp(8, 3, 1)?;
    let cfg = fixed_config(&tb.problem, 10_000)?;
    let out = run(&tb.problem, &cfg, None)?;
    let f = rate_fit(&out.trace, Metric::FeasErgodic, (100, 10_000))?;
    w.see(f.loglog_slope + 0.9, || "vapp feas_ergodic".into());
    let cfg = SolverConfig { max_iter: 10_000, tol_feas: 0.0, tol_obj: 0.0, ..Default::default() };
    let out = run_strong(&tb.problem, &cfg, None)?;
    let fe = rate_fit(&out.trace, Metric::FeasErgodic, (100, 10_000))?;
    w.see(fe.loglog_slope + 1.8, || "vapp-s feas_ergodic".into());
    let fd = rate_fit(&out.trace, Metric::DistSq, (100, 1_000))?;
    w.see(fd.loglog_slope + 1.8, || "vapp-s dist_sq".into());
    Ok((w, format!("slopes {:.3} / {:.3} / {:.3}", f.loglog_slope, fe.loglog_slope, fd.loglog_slope)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suites_pass() {
        let opts = CheckOptions { samples: 200, seed: 3, misorder_dual: false };
        for s in [Suite::Cones, Suite::ProjIneq, Suite::Descent, Suite::Delta, Suite::CConvex] {
            let o = run_suite(s, &opts);
            assert!(o.passed, "{o}");
        }
    }

    #[test]
    fn misordered_dual_update_fails_descent_suite() {
        let opts = CheckOptions { samples: 10, seed: 3, misorder_dual: true };
        let o = run_suite(Suite::Descent, &opts);
        assert!(!o.passed, "{o}");
    }

    #[test]
    fn suite_names_parse() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
    }
}
