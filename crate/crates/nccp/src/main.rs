use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nccp::bench::{bench_sensvm, params_from_manifest, BenchParams, BenchVariant};
use nccp::run::{default_eps0, hash_files, run_variant, strip_timing, summarize, write_json, write_output, RunManifest, Variant, WallClock};
use nccp::spec::{load_spec, write_sen_svm_spec};
use nccp::suites::{run_suites, CheckOptions, Suite};
use nccp::trace::{encode, TraceFormat};
use nccp_core::structured::{gen_sen_svm, SenSvmFormulation};
use nccp_core::vapp::{Clock, EpsMode, SolverConfig, StopRule};

#[derive(Parser)]
#[command(name = "nccp", version, about = "VAPP-family solvers for nonlinear convex cone programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a JSON problem spec.
    Solve(SolveArgs),
    /// Generate a SEN-SVM instance and compare VAPP-M (both formulations) with Mirror-Prox.
    BenchSensvm(BenchArgs),
    /// Run the invariant suites.
    Check(CheckArgs),
    /// Write a SEN-SVM instance as two problem specs with binary sidecars.
    GenSensvm(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CliVariant {
    Vapp,
    VappM,
    VappS,
    VappSm,
    MirrorProx,
}

impl From<CliVariant> for Variant {
    fn from(v: CliVariant) -> Self {
        match v {
            CliVariant::Vapp => Variant::Vapp,
            CliVariant::VappM => Variant::VappM,
            CliVariant::VappS => Variant::VappS,
            CliVariant::VappSm => Variant::VappSm,
            CliVariant::MirrorProx => Variant::MirrorProx,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CliFormat {
    Csv,
    Json,
}

impl From<CliFormat> for TraceFormat {
    fn from(f: CliFormat) -> Self {
        match f {
            CliFormat::Csv => TraceFormat::Csv,
            CliFormat::Json => TraceFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CliStop {
    Ergodic,
    Last,
    Either,
}

#[derive(Args)]
struct SolveArgs {
    /// Problem spec (JSON).
    spec: PathBuf,
    #[arg(long, value_enum, default_value = "vapp")]
    variant: CliVariant,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Initial (or fixed) ε; defaults to 1 with backtracking, else 0.89 of the admissible limit.
    #[arg(long)]
    eps0: Option<f64>,
    /// Enable backtracking with this shrink factor.
    #[arg(long)]
    backtrack_eta: Option<f64>,
    /// Multiplier bound M (overrides constants.dual_bound).
    #[arg(long)]
    dual_bound: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol_feas: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol_obj: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: CliFormat,
    /// Output directory for trace, summary and manifest.
    #[arg(long, default_value = "nccp-out")]
    output: PathBuf,
    /// Which iterate the tolerances are checked on.
    #[arg(long, value_enum, default_value = "either")]
    stop_rule: CliStop,
    #[arg(long, default_value_t = 1)]
    trace_stride: usize,
    /// Record wall-clock time in the trace.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    s: usize,
    #[arg(long, default_value_t = 0.4)]
    alpha: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Comma-separated subset of vapp-m-I, vapp-m-C, mirror-prox.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    eps0: f64,
    /// Backtracking factor for VAPP-M; pass 0 for a fixed ε.
    #[arg(long, default_value_t = 0.5)]
    backtrack_eta: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    tol_feas: f64,
    #[arg(long, default_value_t = 1e-5)]
    tol_obj: f64,
    #[arg(long, default_value_t = 1)]
    trace_stride: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: CliFormat,
    #[arg(long, default_value = "nccp-bench")]
    output: PathBuf,
    /// Replay the parameters of an earlier run; other parameter flags are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Comma-separated suites (default: all).
    #[arg(long, value_delimiter = ',')]
    suites: Option<Vec<String>>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Mutation test: form the intermediate multiplier after the primal step.
    #[arg(long, hide = true)]
    inject_misorder: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    s: usize,
    #[arg(long, default_value_t = 0.4)]
    alpha: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "sensvm")]
    output: PathBuf,
}

/// Exit status of a completed command.
enum Outcome {
    Converged,
    IterationCap,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::BenchSensvm(a) => cmd_bench(a),
        Command::Check(a) => cmd_check(a),
        Command::GenSensvm(a) => cmd_gen(a),
    };
    match r {
        Ok(Outcome::Converged) => ExitCode::from(0),
        Ok(Outcome::IterationCap) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_solve(a: SolveArgs) -> Result<Outcome> {
    let loaded = load_spec(&a.spec)?;
    let problem = loaded.spec.build(&loaded.base).context("building the problem")?;
    let variant: Variant = a.variant.into();
    let mut config = SolverConfig {
        gamma: a.gamma,
        eps0: 0.0,
        eps_mode: match a.backtrack_eta {
            Some(eta) => EpsMode::Backtracking { eta },
            None => EpsMode::Fixed,
        },
        dual_bound: a.dual_bound.or(loaded.spec.constants.dual_bound),
        max_iter: a.max_iter,
        tol_feas: a.tol_feas,
        tol_obj: a.tol_obj,
        seed: a.seed,
        stop_rule: match a.stop_rule {
            CliStop::Ergodic => StopRule::Ergodic,
            CliStop::Last => StopRule::LastIterate,
            CliStop::Either => StopRule::Either,
        },
        trace_stride: a.trace_stride,
        ..Default::default()
    };
    config.eps0 = match a.eps0 {
        Some(e) => e,
        None => default_eps0(&problem, variant, &config)?,
    };
    let clock = WallClock::start();
    let mut out = run_variant(&problem, variant, &config, &clock)?;
    let wall = clock.now_s();
    if !a.timing {
        strip_timing(&mut out);
    }
    let format: TraceFormat = a.format.into();
    std::fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    let opt = problem.reference.as_ref().map(|r| r.opt_value);
    let summary = summarize(variant.name(), &out, wall, opt);
    let trace_name = format!("trace.{}", format.extension());
    let outputs = vec![write_output(&a.output, &trace_name, &encode(&out.trace, format)?)?];
    write_json(&a.output, "summary.json", &summary)?;
    let manifest = RunManifest {
        command: format!("solve --variant {variant}"),
        config: serde_json::to_value(&config)?,
        seed: a.seed,
        input_hash: hash_files(&loaded.input_files)?,
        outputs,
    };
    write_json(&a.output, "manifest.json", &manifest)?;
    println!(
        "{variant}: {} after {} iterations, obj {:.6e}, feas {:.3e}, output in {}",
        if out.converged { "converged" } else { "iteration cap" },
        out.iterations,
        summary.obj,
        summary.feas,
        a.output.display()
    );
    Ok(if out.converged { Outcome::Converged } else { Outcome::IterationCap })
}

fn cmd_bench(a: BenchArgs) -> Result<Outcome> {
    let params = match &a.manifest {
        Some(p) => params_from_manifest(p)?,
        None => BenchParams {
            m: a.m,
            n: a.n,
            s: a.s,
            alpha: a.alpha,
            seed: a.seed,
            variants: match &a.variants {
                Some(v) => v.iter().map(|s| s.parse::<BenchVariant>()).collect::<Result<_>>()?,
                None => BenchVariant::ALL.to_vec(),
            },
            gamma: a.gamma,
            eps0: a.eps0,
            backtrack_eta: (a.backtrack_eta > 0.0).then_some(a.backtrack_eta),
            max_iter: a.max_iter,
            tol_feas: a.tol_feas,
            tol_obj: a.tol_obj,
            trace_stride: a.trace_stride,
            format: a.format.into(),
            timing: a.timing,
        },
    };
    let report = bench_sensvm(&params, &a.output)?;
    for r in &report.summary.runs {
        println!(
            "{:<12} {:<9} iters {:>6}  obj {:.3e}  feas {:.3e}  per-iter {:.3e} s",
            r.variant,
            if r.converged { "converged" } else { "cap" },
            r.iterations,
            r.obj,
            r.feas,
            r.per_iter_s
        );
    }
    for (k, v) in &report.summary.cost_ratios {
        println!("cost ratio {k} = {v:.3}");
    }
    Ok(if report.all_converged() { Outcome::Converged } else { Outcome::IterationCap })
}

fn cmd_check(a: CheckArgs) -> Result<Outcome> {
    let suites = match &a.suites {
        Some(v) => v.iter().map(|s| s.parse::<Suite>()).collect::<Result<Vec<_>>>()?,
        None => Suite::ALL.to_vec(),
    };
    let opts = CheckOptions { samples: a.samples, seed: a.seed, misorder_dual: a.inject_misorder };
    let outcomes = run_suites(&suites, &opts);
    for o in &outcomes {
        println!("{o}");
    }
    if outcomes.iter().all(|o| o.passed) {
        Ok(Outcome::Converged)
    } else {
        anyhow::bail!("{} of {} suites failed", outcomes.iter().filter(|o| !o.passed).count(), outcomes.len())
    }
}

fn cmd_gen(a: GenArgs) -> Result<Outcome> {
    let inst = gen_sen_svm(a.m, a.n, a.s, a.alpha, a.seed)?;
    let stem = format!("sensvm_m{}_n{}_s{}_seed{}", a.m, a.n, a.s, a.seed);
    for form in [SenSvmFormulation::Inequality, SenSvmFormulation::Cone] {
        let p = write_sen_svm_spec(&inst, form, Path::new(&a.output), &stem)?;
        println!("{}", p.display());
    }
    Ok(Outcome::Converged)
}
