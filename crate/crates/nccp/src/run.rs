//! Variant dispatch, clocks and run manifests.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use nccp_core::mirror_prox::run_mirror_prox;
use nccp_core::oracles::NccpProblem;
use nccp_core::strong::run_strong_with_clock;
use nccp_core::vapp::{run_with_clock, Clock, EpsMode, RunOutput, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::trace::{default_fits, RunSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Vapp,
    VappM,
    VappS,
    VappSm,
    MirrorProx,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Vapp, Variant::VappM, Variant::VappS, Variant::VappSm, Variant::MirrorProx];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Vapp => "vapp",
            Variant::VappM => "vapp-m",
            Variant::VappS => "vapp-s",
            Variant::VappSm => "vapp-sm",
            Variant::MirrorProx => "mirror-prox",
        }
    }

    pub fn needs_dual_bound(self) -> bool {
        matches!(self, Variant::VappM | Variant::VappSm)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).with_context(|| format!("unknown variant {s:?}"))
    }
}

/// Wall clock started at construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::start()
    }
}

impl Clock for WallClock {
    fn now_s(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Runs one variant. The `-M` variants require `config.dual_bound`; the others ignore it
/// except Mirror-Prox, which uses it to bound the multiplier set when present.
pub fn run_variant(problem: &NccpProblem, variant: Variant, config: &SolverConfig, clock: &dyn Clock) -> Result<RunOutput> {
    let mut cfg = config.clone();
    if variant.needs_dual_bound() && cfg.dual_bound.is_none() {
        bail!("{variant} needs a dual bound (pass --dual-bound or set constants.dual_bound)");
    }
    if matches!(variant, Variant::Vapp | Variant::VappS) {
        cfg.dual_bound = None;
    }
    let out = match variant {
        Variant::Vapp | Variant::VappM => run_with_clock(problem, &cfg, None, clock)?,
        Variant::VappS | Variant::VappSm => run_strong_with_clock(problem, &cfg, None, clock)?,
        Variant::MirrorProx => run_mirror_prox(problem, &cfg, None, clock)?,
    };
    Ok(out)
}

/// Picks `ε⁰` when none was given: `1` with backtracking, otherwise 90% of the admissible limit.
pub fn default_eps0(problem: &NccpProblem, variant: Variant, config: &SolverConfig) -> Result<f64> {
    Ok(match (variant, config.eps_mode) {
        (Variant::MirrorProx, _) => 0.0,
        (Variant::VappS | Variant::VappSm, _) => 1.0,
        (_, EpsMode::Backtracking { .. }) => 1.0,
        (_, EpsMode::Fixed) => {
            let lim = config
                .eps_limit(problem)
                .map_err(|e| anyhow::anyhow!("{e}; declare the constant or use --backtrack-eta"))?;
            if lim.is_finite() {
                0.9 * 0.99 * lim
            } else {
                1.0
            }
        }
    })
}

pub fn summarize(variant: &str, out: &RunOutput, wall_time_s: f64, opt_value: Option<f64>) -> RunSummary {
    let last = out.trace.last().cloned().unwrap_or_default();
    RunSummary {
        variant: variant.to_string(),
        converged: out.converged,
        iterations: out.iterations,
        obj: last.obj,
        feas: last.feas,
        obj_ergodic: last.obj_ergodic,
        feas_ergodic: last.feas_ergodic,
        dual_norm: last.dual_norm,
        eps_k: last.eps_k,
        wall_time_s,
        step_time_s: out.step_time_s,
        per_iter_s: if out.iterations > 0 { out.step_time_s / out.iterations as f64 } else { 0.0 },
        rate_fits: default_fits(&out.trace, opt_value),
    }
}

/// Zeroes the wall-clock column so traces are reproducible byte for byte.
pub fn strip_timing(out: &mut RunOutput) {
    for r in &mut out.trace {
        r.wall_time_s = 0.0;
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    /// sha256 over the inputs (spec bytes and matrix files, or the benchmark parameters).
    pub input_hash: String,
    pub outputs: Vec<OutputEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the concatenated files, each prefixed by its length.
pub fn hash_files(paths: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = fs::read(p).with_context(|| format!("hashing {}", p.display()))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// Writes `bytes` under `dir` and returns the manifest entry.
pub fn write_output(dir: &Path, name: &str, bytes: &[u8]) -> Result<OutputEntry> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(OutputEntry { path: name.to_string(), sha256: sha256_hex(bytes) })
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<OutputEntry> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_output(dir, name, &bytes)
}

/// Thread cap from `NCCP_THREADS` (default 1; `0` or garbage fall back to 1).
pub fn thread_cap() -> usize {
    std::env::var("NCCP_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()).filter(|&n| n > 0).unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
        assert!("vapp-x".parse::<Variant>().is_err());
    }

    #[test]
    fn file_hash_depends_on_boundaries() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        fs::write(&a, "ab").unwrap();
        fs::write(&b, "c").unwrap();
        let h1 = hash_files(&[a.clone(), b.clone()]).unwrap();
        fs::write(&a, "a").unwrap();
        fs::write(&b, "bc").unwrap();
        assert_ne!(h1, hash_files(&[a, b]).unwrap());
    }
}
