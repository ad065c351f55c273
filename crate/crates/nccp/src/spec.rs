//! The JSON problem-spec format.
//!
//! ```json
//! {"objective": {"smooth": {"kind": "quadratic", "p": [[1.0]], "c": [0.0]}},
//!  "constraint_map": {"omega": {"kind": "affine", "a": [[1.0]], "b": [1.0]}},
//!  "cone": {"zero": 1},
//!  "constants": {"strong_convexity": 1.0}}
//! ```
//!
//! Matrices are inline row lists or `{"path": "..."}` relative to the spec file.
//! Constants left out are derived where the oracle makes that cheap (`B_G` for
//! quadratics and least squares, `τ` for affine maps, per-row `B_Ω` for quadratic rows).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nccp_core::cones::{ConeSpec, NormExponent};
use nccp_core::linalg::DenseMatrix;
use nccp_core::oracles::{
    ConeMapOracle, FeasibleSet, LeastSquaresFn, NccpProblem, NonsmoothTerm, PhiMap, QuadraticAffineMap, QuadraticFn, Reference,
    SmoothOracle, ZeroFn, ZeroMap,
};
use nccp_core::structured::{SenSvmFormulation, SenSvmInstance};
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::matrix::{write_binary, MatrixRef};

/// Power-iteration estimates approach the spectral norm from below.
const PAD: f64 = 1.0 + 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub objective: ObjectiveSpec,
    pub constraint_map: ConstraintMapSpec,
    pub cone: ConeJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<SetSpec>,
    #[serde(default, skip_serializing_if = "Constants::is_empty")]
    pub constants: Constants,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub smooth: SmoothSpec,
    #[serde(default, skip_serializing_if = "NonsmoothSpec::is_zero")]
    pub nonsmooth: NonsmoothSpec,
}

/// `G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SmoothSpec {
    Zero { dim: usize },
    /// `½uᵀPu + cᵀu + r`
    Quadratic {
        p: MatrixRef,
        c: Vec<f64>,
        #[serde(default)]
        r: f64,
    },
    /// `½||Au - b||²`
    LeastSquares { a: MatrixRef, b: Vec<f64> },
}

/// `J`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonsmoothSpec {
    #[default]
    Zero,
    L1 { weight: f64 },
    DiagQuadratic { diag: Vec<f64> },
}

impl NonsmoothSpec {
    fn is_zero(&self) -> bool {
        matches!(self, NonsmoothSpec::Zero)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintMapSpec {
    pub omega: OmegaSpec,
    #[serde(default, skip_serializing_if = "PhiSpec::is_zero")]
    pub phi: PhiSpec,
}

/// `Ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OmegaSpec {
    Zero { m: usize },
    /// `Au - b`
    Affine { a: MatrixRef, b: Vec<f64> },
    /// `Ω_j(u) = a_jᵀu - b_j + ½uᵀP_ju` on the listed rows.
    QuadraticAffine { a: MatrixRef, b: Vec<f64>, quad: Vec<QuadRow> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadRow {
    pub row: usize,
    pub p: MatrixRef,
}

/// `Φ`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiSpec {
    #[default]
    Zero,
    Linear { a: MatrixRef, b: Vec<f64> },
    L1 {
        direction: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

impl PhiSpec {
    fn is_zero(&self) -> bool {
        matches!(self, PhiSpec::Zero)
    }
}

/// `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Full,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    /// `B_G`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_grad: Option<f64>,
    /// `β_G`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong_convexity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_omega_components: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Multiplier bound `M` for the `-M` variants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_bound: Option<f64>,
}

impl Constants {
    fn is_empty(&self) -> bool {
        *self == Constants::default()
    }
}

/// Cone descriptor: `{"zero": m}`, `{"orthant": m}`, `{"norm": 1|2|"inf", "dim": k}`, `{"product": [...]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeJson(pub ConeSpec);

#[derive(Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum ConeRepr {
    Zero { zero: usize },
    Orthant { orthant: usize },
    Norm { norm: NormRepr, dim: usize },
    Product { product: Vec<ConeRepr> },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NormRepr {
    Finite(u8),
    Named(String),
}

fn to_repr(c: &ConeSpec) -> Result<ConeRepr, String> {
    Ok(match c {
        ConeSpec::Zero(m) => ConeRepr::Zero { zero: *m },
        ConeSpec::NonnegOrthant(m) => ConeRepr::Orthant { orthant: *m },
        ConeSpec::NormCone { nu, dim } => ConeRepr::Norm {
            norm: match nu {
                NormExponent::One => NormRepr::Finite(1),
                NormExponent::Two => NormRepr::Finite(2),
                NormExponent::Inf => NormRepr::Named("inf".into()),
            },
            dim: *dim,
        },
        ConeSpec::Product(parts) => ConeRepr::Product { product: parts.iter().map(to_repr).collect::<Result<_, _>>()? },
        ConeSpec::Free(_) => return Err("the full-space cone is not a constraint cone".into()),
    })
}

fn from_repr(r: ConeRepr) -> Result<ConeSpec, String> {
    Ok(match r {
        ConeRepr::Zero { zero } => ConeSpec::Zero(zero),
        ConeRepr::Orthant { orthant } => ConeSpec::NonnegOrthant(orthant),
        ConeRepr::Norm { norm, dim } => {
            let nu = match norm {
                NormRepr::Finite(1) => NormExponent::One,
                NormRepr::Finite(2) => NormExponent::Two,
                NormRepr::Named(s) if s == "inf" => NormExponent::Inf,
                _ => return Err("norm exponent must be 1, 2 or \"inf\"".into()),
            };
            ConeSpec::NormCone { nu, dim }
        }
        ConeRepr::Product { product } => ConeSpec::Product(product.into_iter().map(from_repr).collect::<Result<_, _>>()?),
    })
}

impl Serialize for ConeJson {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        to_repr(&self.0).map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConeJson {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = ConeRepr::deserialize(d)?;
        from_repr(r).map(ConeJson).map_err(de::Error::custom)
    }
}

impl fmt::Display for ConeJson {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match serde_json::to_string(self) {
            Ok(s) => f.write_str(&s),
            Err(_) => write!(f, "{:?}", self.0),
        }
    }
}

/// A spec plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedSpec {
    pub spec: ProblemSpec,
    pub base: PathBuf,
    /// Spec bytes followed by every referenced matrix file, for content hashing.
    pub input_files: Vec<PathBuf>,
}

pub fn parse_spec(text: &str) -> Result<ProblemSpec> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_spec(path: &Path) -> Result<LoadedSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading spec {}", path.display()))?;
    let spec = parse_spec(&text).with_context(|| format!("malformed spec {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut input_files = vec![path.to_path_buf()];
    input_files.extend(spec.matrix_refs().into_iter().filter_map(|m| m.file(&base)));
    Ok(LoadedSpec { spec, base, input_files })
}

fn mat(m: &MatrixRef, base: &Path, what: &str) -> Result<DenseMatrix> {
    m.load(base).with_context(|| format!("loading matrix for {what}"))
}

impl ProblemSpec {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn matrix_refs(&self) -> Vec<&MatrixRef> {
        let mut out = Vec::new();
        match &self.objective.smooth {
            SmoothSpec::Quadratic { p, .. } => out.push(p),
            SmoothSpec::LeastSquares { a, .. } => out.push(a),
            SmoothSpec::Zero { .. } => {}
        }
        match &self.constraint_map.omega {
            OmegaSpec::Affine { a, .. } => out.push(a),
            OmegaSpec::QuadraticAffine { a, quad, .. } => {
                out.push(a);
                out.extend(quad.iter().map(|q| &q.p));
            }
            OmegaSpec::Zero { .. } => {}
        }
        if let PhiSpec::Linear { a, .. } = &self.constraint_map.phi {
            out.push(a);
        }
        out
    }

    /// Builds the oracle bundle; matrix paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<NccpProblem> {
        check_constants(&self.constants)?;
        self.cone.0.validate()?;
        let k = &self.constants;
        let (g, derived_bg) = match &self.objective.smooth {
            SmoothSpec::Zero { dim } => (SmoothOracle::new(ZeroFn(*dim)), Some(0.0)),
            SmoothSpec::Quadratic { p, c, r } => {
                let p = mat(p, base, "objective.smooth.p")?;
                let l = PAD * p.spectral_norm();
                (SmoothOracle::new(QuadraticFn::new(p, c.clone(), *r)?), Some(l))
            }
            SmoothSpec::LeastSquares { a, b } => {
                let a = mat(a, base, "objective.smooth.a")?;
                let l = a.spectral_norm();
                (SmoothOracle::new(LeastSquaresFn::new(a, b.clone())?), Some(PAD * l * l))
            }
        };
        let mut g = g;
        g.lipschitz_grad = k.lipschitz_grad.or(derived_bg);
        g.strong_convexity = k.strong_convexity;
        let n = g.dim();

        let j = match &self.objective.nonsmooth {
            NonsmoothSpec::Zero => NonsmoothTerm::Zero,
            NonsmoothSpec::L1 { weight } => NonsmoothTerm::L1 { weight: *weight },
            NonsmoothSpec::DiagQuadratic { diag } => NonsmoothTerm::DiagQuadratic { diag: diag.clone() },
        };

        let phi_a = match &self.constraint_map.phi {
            PhiSpec::Linear { a, .. } => Some(mat(a, base, "constraint_map.phi.a")?),
            _ => None,
        };
        let phi = match (&self.constraint_map.phi, &phi_a) {
            (PhiSpec::Zero, _) => PhiMap::Zero,
            (PhiSpec::Linear { b, .. }, Some(a)) => PhiMap::Linear { a: a.clone(), b: b.clone() },
            (PhiSpec::L1 { direction, weights }, _) => PhiMap::L1 { direction: direction.clone(), weights: weights.clone() },
            (PhiSpec::Linear { .. }, None) => unreachable!(),
        };
        // τ is derived only when Θ is affine as a whole
        let (mut theta, affine_part) = match &self.constraint_map.omega {
            OmegaSpec::Zero { m } => (ConeMapOracle::new(ZeroMap { n, m: *m }, phi), Some(DenseMatrix::zeros(*m, n))),
            OmegaSpec::Affine { a, b } => {
                let a = mat(a, base, "constraint_map.omega.a")?;
                let map = QuadraticAffineMap::affine(a.clone(), b.clone())?;
                (ConeMapOracle::new(map, phi), Some(a))
            }
            OmegaSpec::QuadraticAffine { a, b, quad } => {
                let a = mat(a, base, "constraint_map.omega.a")?;
                let rows = a.rows();
                let mut comps = vec![0.0; rows];
                let mut qs = Vec::with_capacity(quad.len());
                for q in quad {
                    let p = mat(&q.p, base, "constraint_map.omega.quad")?;
                    if q.row < rows {
                        comps[q.row] += PAD * p.spectral_norm();
                    }
                    qs.push((q.row, p));
                }
                let map = QuadraticAffineMap::new(a, b.clone(), qs)?;
                let affine = if quad.is_empty() { Some(map.a.clone()) } else { None };
                let mut t = ConeMapOracle::new(map, phi);
                t.b_omega_components = Some(comps);
                (t, affine)
            }
        };
        if theta.b_omega_components.is_none() {
            theta.b_omega = Some(0.0);
        }
        let derived_tau = match (&affine_part, &theta.phi) {
            (Some(a), PhiMap::Zero) => Some(PAD * a.spectral_norm()),
            (Some(a), PhiMap::Linear { a: pa, .. }) if a.rows() == pa.rows() && a.cols() == pa.cols() => {
                let sum: Vec<f64> = a.data().iter().zip(pa.data()).map(|(x, y)| x + y).collect();
                Some(PAD * DenseMatrix::from_row_major(a.rows(), a.cols(), sum)?.spectral_norm())
            }
            _ => None,
        };
        theta.theta_lipschitz = k.tau.or(derived_tau);
        if let Some(b) = k.b_omega {
            theta.b_omega = Some(b);
        }
        if let Some(c) = &k.b_omega_components {
            theta.b_omega_components = Some(c.clone());
        }

        let mut problem = NccpProblem::new(g, j, theta, self.cone.0.clone())?;
        if let Some(set) = &self.set {
            let set = match set {
                SetSpec::Full => FeasibleSet::Full(n),
                SetSpec::Box { lo, hi } => FeasibleSet::Box { lo: lo.clone(), hi: hi.clone() },
                SetSpec::Ball { center, radius } => FeasibleSet::Ball { center: center.clone(), radius: *radius },
            };
            set.validate()?;
            problem = problem.with_set(set)?;
        }
        if let Some(r) = &self.reference {
            problem = problem.with_reference(r.clone())?;
        }
        Ok(problem)
    }
}

/// Writes one SEN-SVM formulation as a spec plus `NCCPMAT1` sidecars named after `stem`.
///
/// Returns the spec path. Sidecars for `A` and `Q` are shared between formulations.
pub fn write_sen_svm_spec(inst: &SenSvmInstance, form: SenSvmFormulation, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let n = inst.dim();
    let a_name = format!("{stem}_A.bin");
    let p_name = format!("{stem}_P.bin");
    write_binary(&dir.join(&a_name), &inst.a)?;
    let mut p = inst.q.clone();
    p.scale(2.0 * (1.0 - inst.alpha));
    let lp = PAD * p.spectral_norm();
    write_binary(&dir.join(&p_name), &p)?;
    let a_ref = MatrixRef::File { path: a_name };
    let p_ref = MatrixRef::File { path: p_name };
    let (omega, phi, cone, comps) = match form {
        SenSvmFormulation::Inequality => (
            OmegaSpec::QuadraticAffine { a: MatrixRef::Inline(vec![vec![0.0; n]]), b: vec![inst.delta], quad: vec![QuadRow { row: 0, p: p_ref }] },
            PhiSpec::L1 { direction: vec![inst.alpha], weights: None },
            ConeJson(ConeSpec::NonnegOrthant(1)),
            vec![lp],
        ),
        SenSvmFormulation::Cone => {
            let mut rows = vec![vec![0.0; n]];
            rows.extend((0..n).map(|i| {
                let mut r = vec![0.0; n];
                r[i] = inst.alpha;
                r
            }));
            let mut b = vec![0.0; n + 1];
            b[0] = inst.delta;
            let mut comps = vec![0.0; n + 1];
            comps[0] = lp;
            (
                OmegaSpec::QuadraticAffine { a: MatrixRef::Inline(rows), b, quad: vec![QuadRow { row: 0, p: p_ref }] },
                PhiSpec::Zero,
                ConeJson(ConeSpec::norm_cone(NormExponent::One, n + 1)),
                comps,
            )
        }
    };
    let spec = ProblemSpec {
        objective: ObjectiveSpec { smooth: SmoothSpec::LeastSquares { a: a_ref, b: inst.b.clone() }, nonsmooth: NonsmoothSpec::Zero },
        constraint_map: ConstraintMapSpec { omega, phi },
        cone,
        set: None,
        constants: Constants { dual_bound: Some(inst.dual_bound(form)), b_omega_components: Some(comps), ..Default::default() },
        reference: Some(inst.reference(form)),
    };
    let suffix = match form {
        SenSvmFormulation::Inequality => "I",
        SenSvmFormulation::Cone => "C",
    };
    let path = dir.join(format!("{stem}_{suffix}.json"));
    fs::write(&path, spec.to_json()?)?;
    Ok(path)
}

/// Rejects specs whose declared constants are negative or non-finite.
pub fn check_constants(c: &Constants) -> Result<()> {
    let scalars = [
        ("lipschitz_grad", c.lipschitz_grad),
        ("strong_convexity", c.strong_convexity),
        ("b_omega", c.b_omega),
        ("tau", c.tau),
        ("dual_bound", c.dual_bound),
    ];
    for (name, v) in scalars {
        if let Some(v) = v {
            if !(v >= 0.0) || !v.is_finite() {
                bail!("constant {name} must be finite and nonnegative, got {v}");
            }
        }
    }
    Ok(())
}
