//! SEN-SVM benchmark: one generated instance, several variants, per-iteration cost ratios.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use nccp_core::mirror_prox::run_mirror_prox;
use nccp_core::structured::{gen_sen_svm, run_sen_svm, SenSvmFormulation, SenSvmInstance};
use nccp_core::vapp::{Clock, EpsMode, RunOutput, SolverConfig, StopRule};
use serde::{Deserialize, Serialize};

use crate::run::{sha256_hex, strip_timing, summarize, thread_cap, write_json, write_output, OutputEntry, RunManifest, WallClock};
use crate::trace::{encode, RunSummary, TraceFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchVariant {
    #[serde(rename = "vapp-m-I")]
    VappMI,
    #[serde(rename = "vapp-m-C")]
    VappMC,
    #[serde(rename = "mirror-prox")]
    MirrorProx,
}

impl BenchVariant {
    pub const ALL: [BenchVariant; 3] = [BenchVariant::VappMI, BenchVariant::VappMC, BenchVariant::MirrorProx];

    pub fn name(self) -> &'static str {
        match self {
            BenchVariant::VappMI => "vapp-m-I",
            BenchVariant::VappMC => "vapp-m-C",
            BenchVariant::MirrorProx => "mirror-prox",
        }
    }
}

impl fmt::Display for BenchVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchVariant {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        BenchVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .with_context(|| format!("unknown benchmark variant {s:?} (expected vapp-m-I, vapp-m-C or mirror-prox)"))
    }
}

/// Benchmark parameters; this is the `config` block of the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchParams {
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub alpha: f64,
    pub seed: u64,
    pub variants: Vec<BenchVariant>,
    pub gamma: f64,
    pub eps0: f64,
    /// Backtracking factor for the VAPP-M runs; `None` means fixed `ε`.
    pub backtrack_eta: Option<f64>,
    pub max_iter: usize,
    pub tol_feas: f64,
    pub tol_obj: f64,
    pub trace_stride: usize,
    pub format: TraceFormat,
    /// Record wall-clock time in the traces (breaks byte-reproducibility).
    pub timing: bool,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            m: 20,
            n: 100,
            s: 3,
            alpha: 0.4,
            seed: 7,
            variants: BenchVariant::ALL.to_vec(),
            gamma: 1.0,
            eps0: 1.0,
            backtrack_eta: Some(0.5),
            max_iter: 50_000,
            tol_feas: 1e-5,
            tol_obj: 1e-5,
            trace_stride: 1,
            format: TraceFormat::Csv,
            timing: false,
        }
    }
}

impl BenchParams {
    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            bail!("no variants requested");
        }
        if self.m == 0 || self.n == 0 || self.s == 0 || self.s > self.n {
            bail!("invalid dimensions m={}, n={}, s={}", self.m, self.n, self.s);
        }
        Ok(())
    }

    /// Solver settings shared by all variants. Stopping looks at the last iterate.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            gamma: self.gamma,
            eps0: self.eps0,
            eps_mode: match self.backtrack_eta {
                Some(eta) => EpsMode::Backtracking { eta },
                None => EpsMode::Fixed,
            },
            dual_bound: None,
            max_iter: self.max_iter,
            tol_feas: self.tol_feas,
            tol_obj: self.tol_obj,
            seed: self.seed,
            stop_rule: StopRule::LastIterate,
            trace_stride: self.trace_stride,
            ..Default::default()
        }
    }
}

/// Runs one benchmark variant on a generated instance.
pub fn run_bench_variant(inst: &SenSvmInstance, variant: BenchVariant, params: &BenchParams) -> Result<(RunOutput, f64)> {
    let cfg = params.solver_config();
    let clock = WallClock::start();
    let out = match variant {
        BenchVariant::VappMI => run_sen_svm(inst, SenSvmFormulation::Inequality, &cfg, &clock)?,
        BenchVariant::VappMC => run_sen_svm(inst, SenSvmFormulation::Cone, &cfg, &clock)?,
        BenchVariant::MirrorProx => {
            let form = SenSvmFormulation::Cone;
            let problem = inst.problem(form)?;
            let mp = SolverConfig { eps0: 0.0, dual_bound: Some(inst.dual_bound(form)), ..cfg };
            run_mirror_prox(&problem, &mp, None, &clock)?
        }
    };
    Ok((out, clock.now_s()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub alpha: f64,
    pub seed: u64,
    pub delta: f64,
    pub dual_bound_inequality: f64,
    pub dual_bound_cone: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSummary {
    pub instance: InstanceInfo,
    pub runs: Vec<RunSummary>,
    /// `a/b` of mean per-iteration step times, keyed `"a/b"`.
    pub cost_ratios: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub summary: BenchSummary,
    pub manifest: RunManifest,
    pub outputs: Vec<(BenchVariant, RunOutput)>,
}

impl BenchReport {
    pub fn all_converged(&self) -> bool {
        self.outputs.iter().all(|(_, o)| o.converged)
    }
}

/// Generates the instance, runs the requested variants (in parallel up to
/// `NCCP_THREADS`) and writes traces, `summary.json` and `manifest.json` to `out_dir`.
pub fn bench_sensvm(params: &BenchParams, out_dir: &Path) -> Result<BenchReport> {
    params.validate()?;
    let inst = gen_sen_svm(params.m, params.n, params.s, params.alpha, params.seed)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let threads = thread_cap();
    let mut results: Vec<Option<Result<(RunOutput, f64)>>> = params.variants.iter().map(|_| None).collect();
    for chunk in (0..params.variants.len()).collect::<Vec<_>>().chunks(threads) {
        if chunk.len() == 1 {
            let i = chunk[0];
            results[i] = Some(run_bench_variant(&inst, params.variants[i], params));
            continue;
        }
        let done: Vec<(usize, Result<(RunOutput, f64)>)> = std::thread::scope(|sc| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&i| {
                    let inst = &inst;
                    let v = params.variants[i];
                    (i, sc.spawn(move || run_bench_variant(inst, v, params)))
                })
                .collect();
            handles.into_iter().map(|(i, h)| (i, h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("benchmark thread panicked"))))).collect()
        });
        for (i, r) in done {
            results[i] = Some(r);
        }
    }

    let mut files: Vec<OutputEntry> = Vec::new();
    let mut runs = Vec::new();
    let mut outputs = Vec::new();
    for (v, r) in params.variants.iter().zip(results) {
        let (mut out, wall) = r.expect("every variant ran").with_context(|| format!("variant {v}"))?;
        if !params.timing {
            strip_timing(&mut out);
        }
        let name = format!("trace_{}.{}", v.name(), params.format.extension());
        files.push(write_output(out_dir, &name, &encode(&out.trace, params.format)?)?);
        runs.push(summarize(v.name(), &out, wall, Some(0.0)));
        outputs.push((*v, out));
    }

    let mut cost_ratios = BTreeMap::new();
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            if b.per_iter_s > 0.0 {
                cost_ratios.insert(format!("{}/{}", a.variant, b.variant), a.per_iter_s / b.per_iter_s);
            }
        }
    }
    let summary = BenchSummary {
        instance: InstanceInfo {
            m: params.m,
            n: params.n,
            s: params.s,
            alpha: params.alpha,
            seed: params.seed,
            delta: inst.delta,
            dual_bound_inequality: inst.dual_bound(SenSvmFormulation::Inequality),
            dual_bound_cone: inst.dual_bound(SenSvmFormulation::Cone),
        },
        runs,
        cost_ratios,
    };
    write_json(out_dir, "summary.json", &summary)?;
    let config = serde_json::to_value(params)?;
    let manifest = RunManifest {
        command: "bench-sensvm".to_string(),
        input_hash: sha256_hex(serde_json::to_string(&config)?.as_bytes()),
        config,
        seed: params.seed,
        outputs: files,
    };
    write_json(out_dir, "manifest.json", &manifest)?;
    Ok(BenchReport { summary, manifest, outputs })
}

/// Benchmark parameters recorded in an earlier manifest.
pub fn params_from_manifest(path: &Path) -> Result<BenchParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let m: RunManifest = serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))?;
    if m.command != "bench-sensvm" {
        bail!("manifest was written by {:?}, not bench-sensvm", m.command);
    }
    Ok(serde_json::from_value(m.config)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchParams {
        BenchParams { m: 4, n: 10, s: 2, max_iter: 200, trace_stride: 10, ..Default::default() }
    }

    #[test]
    fn variant_parse() {
        assert_eq!("vapp-m-c".parse::<BenchVariant>().unwrap(), BenchVariant::VappMC);
        assert!("vapp".parse::<BenchVariant>().is_err());
    }

    #[test]
    fn writes_traces_summary_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let rep = bench_sensvm(&small(), dir.path()).unwrap();
        for f in ["trace_vapp-m-I.csv", "trace_vapp-m-C.csv", "trace_mirror-prox.csv", "summary.json", "manifest.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(rep.manifest.outputs.len(), 3);
        assert_eq!(rep.summary.cost_ratios.len(), 3);
        assert!(rep.summary.cost_ratios.values().all(|r| *r > 0.0));
        let again = params_from_manifest(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(again, small());
    }

    #[test]
    fn empty_variant_list_rejected() {
        let p = BenchParams { variants: vec![], ..small() };
        assert!(bench_sensvm(&p, tempfile::tempdir().unwrap().path()).is_err());
    }
}
