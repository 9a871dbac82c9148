use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use zermelo::closedloop::{closed_loop_ascent, ghz_pair_basis, LoopConfig};
use zermelo::magnus::{kappa_closed_form, speed_limit_at};
use zermelo::operator::gates::{cnot, hadamard, toffoli};
use zermelo::propagate::{refactorization_report, RefactorizationConfig};
use zermelo::rng::random_hermitian;
use zermelo::specfile::{
    basis_from_json, kappa_from_rows, kappa_to_rows, mask_from_rows, operator_from_json,
    MatrixJson, SamplesJson, SpecFile, SubspaceJson, TargetJson,
};
use zermelo::synthesize::{synthesize, OptimizerConfig, ProtocolKind, SynthesisProblem};
use zermelo::{matrix_exp, Environment, Operator, RandomEnvironmentSpec, Rng, C64};

/// Zermelo navigation experiments: bath refactorization checks, induced
/// couplings, gate synthesis and closed-loop fidelity ascent.
///
/// Every run writes its outputs and a manifest.json (resolved configuration,
/// spec, library version, seed) to the output directory.
#[derive(Parser, Debug)]
#[command(name = "zermelo", version)]
struct Cli {
    /// Directory for report.json, trace.csv, kappa.csv and manifest.json.
    #[arg(long, global = true, env = "ZERMELO_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the bath-induced coupling matrix κ as CSV (j,k,kappa).
    Kappa {
        /// Spec file with systems and a bath section.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Compare the sliced navigation propagator with the factorized form at t_m.
    RefactorizeCheck(RefactorizeArgs),
    /// Optimize a concatenated protocol for a target gate.
    Synthesize(SynthesizeArgs),
    /// Measurement-only fidelity ascent against a finite environment.
    ClosedLoop(ClosedLoopArgs),
    /// Print the minimal refactorization time 2π/ω.
    SpeedLimit {
        /// Spec file with a bath section; its ω is used unless --omega is given.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Bath frequency (default 1).
        #[arg(long)]
        omega: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct RefactorizeArgs {
    /// Spec file with systems and a bath section.
    #[arg(long)]
    spec: PathBuf,
    /// Refactorization index: t_m = 2πm/ω (default 1).
    #[arg(long)]
    m: Option<usize>,
    /// Midpoint slices per bath period (default 10000).
    #[arg(long)]
    slices: Option<usize>,
    /// Probe bath states have every mode occupation at most this (default 0).
    #[arg(long)]
    probe_occupation: Option<usize>,
    /// Residual bound for convergence (default 1e-5).
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GateTarget {
    /// CNOT with qubit 1 controlling qubit 3.
    Cnot13,
    Toffoli,
    /// exp(-iπH) with H drawn from the run seed.
    Random,
    /// Matrix read from --target-file.
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ProtocolArg {
    Sync,
    Async,
}

#[derive(Args, Debug)]
struct SynthesizeArgs {
    /// Spec file with systems and either a bath or an explicit κ.
    #[arg(long)]
    spec: PathBuf,
    /// Target gate (spec default, else toffoli).
    #[arg(long, value_enum)]
    target: Option<GateTarget>,
    /// JSON matrix used with --target file.
    #[arg(long)]
    target_file: Option<PathBuf>,
    /// Concatenation schedule (default sync).
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    /// Number of exponential factors, two per segment (default 92).
    #[arg(long)]
    n_factors: Option<usize>,
    /// Random restarts (default 10).
    #[arg(long)]
    restarts: Option<usize>,
    /// Seed for the restart initializations (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// JSON list of boolean rows; false forces κ_jk = 0.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Compare with the target including its global phase.
    #[arg(long)]
    phase_strict: bool,
    /// Distance at which a restart counts as converged (default 1e-3).
    #[arg(long)]
    tol: Option<f64>,
    /// Iterations per restart (default 3000).
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LoopTarget {
    Toffoli,
    /// Hadamard on the two-dimensional GHZ-pair subspace.
    HadamardDfs,
    /// Matrix read from --target-file.
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SubspaceArg {
    None,
    Ghz2,
}

#[derive(Args, Debug)]
struct ClosedLoopArgs {
    /// Spec file with systems and an environment (random_env or environment).
    #[arg(long)]
    spec: PathBuf,
    /// Draw a fresh environment from this seed instead of the spec file's.
    #[arg(long)]
    env_seed: Option<u64>,
    /// Target unitary (spec default, else toffoli).
    #[arg(long, value_enum)]
    target: Option<LoopTarget>,
    /// JSON matrix used with --target file.
    #[arg(long)]
    target_file: Option<PathBuf>,
    /// Logical subspace (default: the spec file's, or ghz2 for hadamard-dfs and none
    /// otherwise when --target is given).
    #[arg(long, value_enum)]
    subspace: Option<SubspaceArg>,
    /// Control steps (default 576).
    #[arg(long)]
    steps: Option<usize>,
    /// Duration of each step (default 0.1).
    #[arg(long)]
    tau: Option<f64>,
    /// Ascent iterations (default 50).
    #[arg(long)]
    iters: Option<usize>,
    /// `exact` for the Haar average, or a sample count per estimate (default exact).
    #[arg(long)]
    samples: Option<String>,
    /// Seed for initial controls and sampled inputs (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Zero every environment coupling operator.
    #[arg(long)]
    decoupled: bool,
}

enum Failure {
    Usage(String),
    Read(PathBuf, String),
    Invalid(String),
    Write(PathBuf, String),
    NotConverged(String),
}

impl Failure {
    fn report(&self) -> ExitCode {
        match self {
            Failure::Usage(msg) => eprint!("{msg}"),
            Failure::Read(p, e) => eprintln!("error: cannot read {}: {e}", p.display()),
            Failure::Invalid(e) => eprintln!("error: validation failed: {e}"),
            Failure::Write(p, e) => eprintln!("error: cannot write {}: {e}", p.display()),
            Failure::NotConverged(e) => eprintln!("not converged: {e}"),
        }
        ExitCode::from(match self {
            Failure::NotConverged(_) => 2,
            _ => 1,
        })
    }
}

impl From<zermelo::Error> for Failure {
    fn from(e: zermelo::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Outcome<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return Failure::Usage(e.render().to_string()).report(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

fn run(cli: &Cli) -> Outcome<()> {
    let out = Output::new(&cli.out_dir)?;
    match &cli.command {
        Command::Kappa { spec } => kappa(&out, spec),
        Command::RefactorizeCheck(a) => refactorize(&out, a),
        Command::Synthesize(a) => run_synthesis(&out, a),
        Command::ClosedLoop(a) => run_closed_loop(&out, a),
        Command::SpeedLimit { spec, omega } => run_speed_limit(&out, spec.as_deref(), *omega),
    }
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: &Path) -> Outcome<Self> {
        fs::create_dir_all(dir).map_err(|e| Failure::Write(dir.to_path_buf(), e.to_string()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    fn write(&self, name: &str, text: &str) -> Outcome<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| Failure::Write(path, e.to_string()))
    }

    fn json(&self, name: &str, v: &impl Serialize) -> Outcome<()> {
        let mut text = serde_json::to_string_pretty(v).expect("reports serialize");
        text.push('\n');
        self.write(name, &text)
    }

    fn manifest(
        &self,
        subcommand: &str,
        seed: Option<u64>,
        config: Value,
        spec: Option<&SpecFile>,
    ) -> Outcome<()> {
        let m = json!({
            "subcommand": subcommand,
            "library_version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "config": config,
            "spec": spec,
        });
        self.json("manifest.json", &m)
    }
}

fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::Read(path.to_path_buf(), e.to_string()))
}

fn load_spec(path: &Path) -> Outcome<SpecFile> {
    let text = read_text(path)?;
    SpecFile::from_json(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

fn kappa(out: &Output, spec_path: &Path) -> Outcome<()> {
    let spec = load_spec(spec_path)?;
    let k = kappa_closed_form(&spec.require_bath()?)?;
    let csv = k.to_csv();
    print!("{csv}");
    out.write("kappa.csv", &csv)?;
    out.manifest("kappa", None, json!({ "omega": k.omega }), Some(&spec))
}

fn refactorize(out: &Output, a: &RefactorizeArgs) -> Outcome<()> {
    let spec = load_spec(&a.spec)?;
    let sys = spec.system()?;
    let bath = spec.require_bath()?;
    let section = spec.refactorization.clone().unwrap_or_default();
    let defaults = RefactorizationConfig::default();
    let cfg = RefactorizationConfig {
        slices_per_period: a
            .slices
            .or(section.slices_per_period)
            .unwrap_or(defaults.slices_per_period),
        probe_occupation: a
            .probe_occupation
            .or(section.probe_occupation)
            .unwrap_or(defaults.probe_occupation),
        residual_tol: a
            .tol
            .or(section.residual_tol)
            .unwrap_or(defaults.residual_tol),
        ..defaults
    };
    let m = a.m.or(section.m).unwrap_or(1);
    let mu = spec.mu();
    let rep = refactorization_report(&sys, &Environment::Bosonic(bath), &mu, m, &cfg)?;
    let text = serde_json::to_string_pretty(&rep).expect("reports serialize");
    println!("{text}");
    out.json("report.json", &rep)?;
    out.manifest(
        "refactorize-check",
        None,
        json!({ "m": m, "mu": mu, "refactorization": cfg }),
        Some(&spec),
    )?;
    if rep.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!(
            "residual {:.3e} (tolerance {:.1e}), Fock change {:?}",
            rep.residual, cfg.residual_tol, rep.fock_change
        )))
    }
}

fn matrix_file(path: Option<&PathBuf>) -> Outcome<Operator> {
    let path = path.ok_or_else(|| invalid("--target file needs --target-file"))?;
    let rows: MatrixJson = load_json(path)?;
    Ok(operator_from_json(&rows)?)
}

fn random_target(dim: usize, seed: u64) -> Outcome<Operator> {
    // Substream index chosen away from the restart streams.
    let h = random_hermitian(dim, &mut Rng::new(seed).substream(u64::MAX));
    Ok(matrix_exp(&h, C64::new(0.0, -std::f64::consts::PI))?)
}

fn named_gate(name: &str) -> Outcome<Operator> {
    match name {
        "toffoli" => Ok(toffoli()),
        "cnot13" => Ok(cnot(3, 0, 2)),
        "hadamard" => Ok(hadamard()),
        other => Err(invalid(format!("unknown target name {other:?}"))),
    }
}

fn run_synthesis(out: &Output, a: &SynthesizeArgs) -> Outcome<()> {
    let spec = load_spec(&a.spec)?;
    let section = spec.synthesis.clone().unwrap_or_default();
    let sys = spec.system()?;
    let seed = a.seed.or(section.seed).unwrap_or(0);

    let kappa = match &section.kappa {
        Some(rows) => kappa_from_rows(rows)?,
        None => kappa_closed_form(&spec.require_bath()?)?,
    };
    let (target_name, target) = match (a.target, &section.target) {
        (Some(GateTarget::File), _) => ("file".to_string(), matrix_file(a.target_file.as_ref())?),
        (Some(GateTarget::Random), _) => ("random".to_string(), random_target(sys.dim(), seed)?),
        (Some(GateTarget::Toffoli), _) => ("toffoli".to_string(), toffoli()),
        (Some(GateTarget::Cnot13), _) => ("cnot13".to_string(), cnot(3, 0, 2)),
        (None, Some(TargetJson::Name(n))) if n == "random" => {
            ("random".to_string(), random_target(sys.dim(), seed)?)
        }
        (None, Some(TargetJson::Name(n))) => (n.clone(), named_gate(n)?),
        (None, Some(TargetJson::Matrix(m))) => ("matrix".to_string(), operator_from_json(m)?),
        (None, None) => ("toffoli".to_string(), toffoli()),
    };
    let kind = match a.protocol {
        Some(ProtocolArg::Sync) => ProtocolKind::Synchronous,
        Some(ProtocolArg::Async) => ProtocolKind::Asynchronous,
        None => match section.protocol.as_deref() {
            None | Some("sync") => ProtocolKind::Synchronous,
            Some("async") => ProtocolKind::Asynchronous,
            Some(other) => {
                return Err(invalid(format!(
                    "protocol must be sync or async, got {other:?}"
                )))
            }
        },
    };
    let n_factors = a.n_factors.or(section.n_factors).unwrap_or(92);
    let mask = match &a.mask {
        Some(path) => Some(load_json::<Vec<Vec<bool>>>(path)?),
        None => section.mask.clone(),
    };
    let phase_invariant = if a.phase_strict {
        false
    } else {
        section.phase_invariant.unwrap_or(true)
    };
    let defaults = OptimizerConfig::default();
    let opt = OptimizerConfig {
        restarts: a.restarts.or(section.restarts).unwrap_or(defaults.restarts),
        tol_d: a.tol.or(section.tol).unwrap_or(defaults.tol_d),
        max_iters: a
            .max_iters
            .or(section.max_iters)
            .unwrap_or(defaults.max_iters),
        ..defaults
    };

    let mut problem = SynthesisProblem::new(sys, kappa, target.clone(), n_factors, kind)?
        .with_phase_invariant(phase_invariant);
    if let Some(rows) = &mask {
        problem = problem.with_mask(mask_from_rows(rows)?)?;
    }
    let rep = synthesize(&problem, &opt, &Rng::new(seed))?;

    let mut report = serde_json::to_value(&rep).expect("reports serialize");
    if let Value::Object(map) = &mut report {
        map.remove("trace");
        map.insert("target".into(), json!(target_name));
        map.insert(
            "kappa".into(),
            json!(kappa_to_rows(&problem.masked_kappa())),
        );
    }
    out.json("report.json", &report)?;
    out.write("trace.csv", &rep.trace_csv())?;
    let config = json!({
        "target": target_name,
        "target_matrix": zermelo::specfile::matrix_to_json(target.as_array()),
        "protocol": if kind == ProtocolKind::Synchronous { "sync" } else { "async" },
        "n_factors": n_factors,
        "mask": mask,
        "phase_invariant": phase_invariant,
        "optimizer": opt,
    });
    out.manifest("synthesize", Some(seed), config, Some(&spec))?;
    println!(
        "D = {:e} after {} restart(s), best restart {}, converged: {}",
        rep.distance, rep.restarts_run, rep.best_restart, rep.converged
    );
    if rep.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!(
            "best distance {:.3e} above tolerance {:.1e}",
            rep.distance, opt.tol_d
        )))
    }
}

fn run_closed_loop(out: &Output, a: &ClosedLoopArgs) -> Outcome<()> {
    let spec = load_spec(&a.spec)?;
    let section = spec.closed_loop.clone().unwrap_or_default();
    let sys = spec.system()?;
    let seed = a.seed.or(section.seed).unwrap_or(0);

    let env: RandomEnvironmentSpec = match a.env_seed {
        Some(s) => {
            let dim = spec.random_env.as_ref().map_or(3, |r| r.dim);
            RandomEnvironmentSpec::random(dim, sys.len(), &mut Rng::new(s))
        }
        None => spec.environment()?.ok_or_else(|| {
            invalid("closed-loop needs random_env or environment in the spec file, or --env-seed")
        })?,
    };
    let decoupled = a.decoupled || section.decoupled.unwrap_or(false);
    let env = if decoupled { env.decoupled() } else { env };

    let (target_name, target, default_sub) = match (a.target, &section.target) {
        (Some(LoopTarget::File), _) => (
            "file".to_string(),
            matrix_file(a.target_file.as_ref())?,
            SubspaceArg::None,
        ),
        (Some(LoopTarget::Toffoli), _) => ("toffoli".to_string(), toffoli(), SubspaceArg::None),
        (Some(LoopTarget::HadamardDfs), _) => {
            ("hadamard-dfs".to_string(), hadamard(), SubspaceArg::Ghz2)
        }
        (None, Some(TargetJson::Name(n))) if n == "hadamard-dfs" => {
            (n.clone(), hadamard(), SubspaceArg::Ghz2)
        }
        (None, Some(TargetJson::Name(n))) => (n.clone(), named_gate(n)?, SubspaceArg::None),
        (None, Some(TargetJson::Matrix(m))) => (
            "matrix".to_string(),
            operator_from_json(m)?,
            SubspaceArg::None,
        ),
        (None, None) => ("toffoli".to_string(), toffoli(), SubspaceArg::None),
    };
    // A target given on the command line brings its own default subspace.
    let spec_subspace = if a.target.is_some() {
        &None
    } else {
        &section.subspace
    };
    let subspace = match (a.subspace, spec_subspace) {
        (Some(SubspaceArg::None), _) => None,
        (Some(SubspaceArg::Ghz2), _) => Some(ghz_pair_basis(sys.len())),
        (None, Some(SubspaceJson::Name(n))) => match n.as_str() {
            "none" => None,
            "ghz2" => Some(ghz_pair_basis(sys.len())),
            other => {
                return Err(invalid(format!(
                    "subspace must be none, ghz2 or a basis, got {other:?}"
                )))
            }
        },
        (None, Some(SubspaceJson::Basis(b))) => Some(basis_from_json(b)?),
        (None, None) => match default_sub {
            SubspaceArg::None => None,
            SubspaceArg::Ghz2 => Some(ghz_pair_basis(sys.len())),
        },
    };
    let samples = match (&a.samples, &section.samples) {
        (Some(s), _) if s == "exact" => None,
        (Some(s), _) => Some(
            s.parse::<usize>()
                .map_err(|_| invalid(format!("--samples must be exact or a count, got {s:?}")))?,
        ),
        (None, Some(SamplesJson::Count(k))) => Some(*k),
        (None, Some(SamplesJson::Mode(m))) if m == "exact" => None,
        (None, Some(SamplesJson::Mode(m))) => {
            return Err(invalid(format!(
                "samples must be exact or a count, got {m:?}"
            )))
        }
        (None, None) => None,
    };

    let subspace_json = subspace.as_ref().map(|b| {
        b.iter()
            .map(|v| v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    });
    let mut cfg = LoopConfig::new(sys, env, target.clone(), subspace);
    if let Some(n) = a.steps.or(section.steps) {
        cfg.n_steps = n;
    }
    if let Some(t) = a.tau.or(section.tau) {
        cfg.tau = t;
    }
    if let Some(i) = a.iters.or(section.iters) {
        cfg.iterations = i;
    }
    match samples {
        Some(k) => {
            cfg.idealized = false;
            cfg.samples_per_estimate = k;
        }
        None => cfg.idealized = true,
    }
    cfg.validate()?;

    let rep = closed_loop_ascent(&cfg, &Rng::new(seed))?;
    out.json("report.json", &rep)?;
    out.write("trace.csv", &rep.trace_csv())?;
    let config = json!({
        "target": target_name,
        "target_matrix": zermelo::specfile::matrix_to_json(target.as_array()),
        "subspace": subspace_json,
        "env_seed": a.env_seed,
        "decoupled": decoupled,
        "n_steps": cfg.n_steps,
        "tau": cfg.tau,
        "iterations": cfg.iterations,
        "idealized": cfg.idealized,
        "samples_per_estimate": cfg.samples_per_estimate,
        "fd_step": cfg.fd_step,
        "step_cap": cfg.step_cap,
        "memory": cfg.memory,
        "mu_init": cfg.mu_init,
    });
    out.manifest("closed-loop", Some(seed), config, Some(&spec))?;
    println!(
        "F {:.6} -> {:.6} over {} iterations",
        rep.initial_fidelity, rep.final_fidelity, cfg.iterations
    );
    Ok(())
}

fn run_speed_limit(out: &Output, spec_path: Option<&Path>, omega: Option<f64>) -> Outcome<()> {
    let spec = spec_path.map(load_spec).transpose()?;
    let omega = match (omega, &spec) {
        (Some(w), _) => w,
        (None, Some(s)) => s.require_bath()?.omega,
        (None, None) => 1.0,
    };
    if !(omega.is_finite() && omega > 0.0) {
        return Err(invalid("bath frequency must be positive"));
    }
    let t = speed_limit_at(omega);
    println!("{t}");
    out.manifest(
        "speed-limit",
        None,
        json!({ "omega": omega, "speed_limit": t }),
        spec.as_ref(),
    )
}
