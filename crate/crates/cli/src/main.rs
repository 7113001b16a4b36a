//! `qvol`: command-line driver for the volume estimator, chain diagnostics,
//! walk spectra and the estimation simulators.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use qvol_core::annealing::{estimate_volume_with, AnnealConfig};
use qvol_core::chain::{self, discretize_1d_weighted, exponential_weight, min_conductance, FiniteChain, MAX_EXHAUSTIVE};
use qvol_core::nalgebra::DMatrix;
use qvol_core::qestimate::{self, AmplitudeTask, DiscreteVariable};
use qvol_core::reduction::check_equivalence;
use qvol_core::rng::{stream, streams};
use qvol_core::{qwalk, BodySpec, VERSION};

const SCHEMA: u32 = 1;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] qvol_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Lifts any module error into [`CliError`].
trait Lift<T> {
    fn lift(self) -> Result<T, CliError>;
}

impl<T, E: Into<qvol_core::Error>> Lift<T> for Result<T, E> {
    fn lift(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Core(e.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

/// Volume estimation and quantum-walk simulation toolkit.
///
/// Exit codes: 0 success, 1 input or configuration error, 2 success with
/// warnings.
///
/// CSV output (--format csv):
///   volume: stage,a_i,ratio,moment_ratio,queries
///   mix: k,tv,bound
///   spectrum: kind,re,im (kind is W or D)
///   qsim amp-est: trial,y,p_tilde,success
///   other commands print JSON only.
#[derive(Debug, Parser)]
#[command(name = "qvol", version, about, long_about = None, verbatim_doc_comment)]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "QVOL_THREADS", default_value_t = 1)]
    threads: usize,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the volume of a convex body.
    Volume(VolumeArgs),
    /// Mixing of a discretized one-dimensional hit-and-run chain.
    Mix(MixArgs),
    /// Walk-operator spectrum, phase gap and conductance of a chain.
    Spectrum(SpectrumArgs),
    /// Statevector simulations of the estimation circuits.
    #[command(subcommand)]
    Qsim(Qsim),
    /// Check the search-to-volume membership reduction.
    ReductionTest(ReductionArgs),
}

#[derive(Debug, Args, Serialize)]
struct VolumeArgs {
    /// Body spec: a JSON file path or inline JSON.
    #[arg(long)]
    body: String,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Chains per stage; overrides --k-factor.
    #[arg(long)]
    k: Option<usize>,
    /// Multiplier on the default per-stage sample count.
    #[arg(long, default_value_t = 1.0)]
    k_factor: f64,
    /// Hit-and-run steps per chain per stage (default 200·n²).
    #[arg(long)]
    walk_steps: Option<usize>,
    #[arg(long)]
    rounding: bool,
    /// Correct the initial mass by the measured π₀ acceptance rate.
    #[arg(long)]
    mass_correction: bool,
    /// Uniform samples for the pencil ratio (default ⌈100/ε²⌉).
    #[arg(long)]
    xi_samples: Option<usize>,
    /// Include wall time in the report (breaks byte-identical output).
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args, Serialize)]
struct MixArgs {
    /// Chain JSON file; when absent a chain is built from the options below.
    #[arg(long)]
    chain: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    lo: f64,
    #[arg(long, default_value_t = 1.0)]
    hi: f64,
    /// Fine grid spacing.
    #[arg(long, default_value_t = 1.0 / 63.0)]
    eps: f64,
    /// Line spacing (default ε/4).
    #[arg(long)]
    eps_prime: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Start from a point mass at this state.
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long, default_value_t = 500)]
    steps: usize,
}

#[derive(Debug, Args, Serialize)]
struct SpectrumArgs {
    /// Chain JSON file.
    #[arg(long, conflicts_with_all = ["random", "two_state"])]
    chain: Option<PathBuf>,
    /// Random reversible chain with this many states.
    #[arg(long)]
    random: Option<usize>,
    /// Two-state chain with switching probability p.
    #[arg(long)]
    two_state: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Require exhaustive conductance (at most 20 states).
    #[arg(long)]
    exhaustive: bool,
}

#[derive(Debug, Subcommand)]
enum Qsim {
    /// Amplitude estimation on a two-level task.
    AmpEst(AmpEstArgs),
    /// π/3 amplitude amplification with exact reflections.
    Pi3(Pi3Args),
    /// Nondestructive median-of-blocks estimation.
    Nondes(NondesArgs),
    /// Chebyshev mean search over a discrete random variable.
    Chebyshev(ChebyshevArgs),
}

#[derive(Debug, Args, Serialize)]
struct AmpEstArgs {
    #[arg(long)]
    p: f64,
    #[arg(long = "M", default_value_t = 64)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct Pi3Args {
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 1)]
    m: u32,
}

#[derive(Debug, Args, Serialize)]
struct NondesArgs {
    #[arg(long)]
    p: f64,
    #[arg(long = "M", default_value_t = 16)]
    m: usize,
    #[arg(long, default_value_t = 3)]
    copies: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct ChebyshevArgs {
    /// Comma-separated support values.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 3.0])]
    values: Vec<f64>,
    /// Comma-separated probabilities.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.5])]
    probs: Vec<f64>,
    /// Moment bound Δ ≥ √E[X²]/E[X] (default: the exact ratio).
    #[arg(long)]
    delta_u: Option<f64>,
    /// Upper bound H on the mean (default: twice the largest value).
    #[arg(long = "H")]
    h: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct ReductionArgs {
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Outcome {
    json: Value,
    csv: Option<String>,
    warnings: bool,
}

fn envelope(command: &str, config: Value, result: Value) -> Value {
    json!({ "schema": SCHEMA, "version": VERSION, "command": command, "config": config, "result": result })
}

fn read_text(arg: &str) -> Result<String, CliError> {
    if arg.trim_start().starts_with('{') {
        return Ok(arg.to_string());
    }
    std::fs::read_to_string(arg).map_err(|source| CliError::Io { path: arg.to_string(), source })
}

fn load_chain(path: &PathBuf) -> Result<FiniteChain, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    FiniteChain::from_json(&text).lift()
}

fn cmd_volume(args: &VolumeArgs, threads: usize) -> Result<Outcome, CliError> {
    if !(args.eps > 0.0 && args.eps < 0.5) {
        return Err(CliError::Input(format!("--eps must lie in (0, 1/2), got {}", args.eps)));
    }
    let spec = BodySpec::from_json(&read_text(&args.body)?).lift()?;
    let body = spec.to_body().lift()?;
    let mut cfg = AnnealConfig::scaled(body.dim(), args.eps, args.k_factor);
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(w) = args.walk_steps {
        cfg.walk_steps = w;
    }
    cfg.threads = threads;
    cfg.rounding = args.rounding;
    cfg.mass_correction = args.mass_correction;
    cfg.xi_samples = args.xi_samples;
    let mut report = estimate_volume_with(&body, args.eps, args.seed, &cfg).lift()?;
    if !args.timing {
        report.wall_time_s = None;
    }
    let warnings = !report.warnings.is_empty();
    let config = json!({ "args": args, "body": spec, "anneal": cfg, "threads": threads });
    Ok(Outcome { csv: Some(report.stage_csv()), json: envelope("volume", config, serde_json::to_value(&report).expect("report")), warnings })
}

fn cmd_mix(args: &MixArgs) -> Result<Outcome, CliError> {
    let chain = match &args.chain {
        Some(p) => load_chain(p)?,
        None => {
            let ep = args.eps_prime.unwrap_or(args.eps / 4.0);
            let mut c = discretize_1d_weighted(args.lo, args.hi, args.eps, ep, exponential_weight(args.a)).lift()?;
            c.meta.a = args.a;
            c
        }
    };
    let d = chain.len();
    if args.start >= d {
        return Err(CliError::Input(format!("--start {} is out of range for {d} states", args.start)));
    }
    let cond = min_conductance(&chain).lift()?;
    let mut sigma0 = vec![0.0; d];
    sigma0[args.start] = 1.0;
    let big_m = 1.0 / chain.pi[args.start];
    let tv = chain::mixing_tv_curve(&chain, &sigma0, args.steps).lift()?;
    let bound: Vec<f64> = (0..=args.steps).map(|k| chain::lovasz_simonovits_bound(big_m, cond.phi, k)).collect();
    let holds = tv.iter().zip(&bound).all(|(t, b)| *t <= b + chain::TV_RESOLUTION);
    let mut csv = String::from("k,tv,bound\n");
    for k in 0..=args.steps {
        csv.push_str(&format!("{k},{:e},{:e}\n", tv[k], bound[k]));
    }
    let result = json!({
        "states": d, "pi": chain.pi, "conductance": cond, "M": big_m,
        "tv": tv, "bound": bound, "bound_holds": holds,
    });
    Ok(Outcome { json: envelope("mix", json!({ "args": args }), result), csv: Some(csv), warnings: !holds })
}

fn cmd_spectrum(args: &SpectrumArgs) -> Result<Outcome, CliError> {
    let chain = if let Some(p) = &args.chain {
        load_chain(p)?
    } else if let Some(d) = args.random {
        if d < 2 {
            return Err(CliError::Input("--random needs at least 2 states".into()));
        }
        let mut rng = stream(args.seed, streams::MISC);
        chain::random_reversible(d, 0.5, &mut rng)
    } else if let Some(p) = args.two_state {
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::Input("--two-state needs p in [0, 1]".into()));
        }
        let w = DMatrix::from_row_slice(2, 2, &[1.0 - p, p, p, 1.0 - p]);
        FiniteChain::new(vec![vec![0.0], vec![1.0]], w, chain::ChainMeta { kind: "two-state".into(), ..Default::default() }).lift()?
    } else {
        return Err(CliError::Input("give one of --chain, --random or --two-state".into()));
    };
    let d = chain.len();
    if args.exhaustive && d > MAX_EXHAUSTIVE {
        return Err(CliError::Input(format!(
            "--exhaustive enumerates 2^(d-1) subsets and is capped at d = {MAX_EXHAUSTIVE}; this chain has {d} states"
        )));
    }
    if d > qwalk::MAX_STATES {
        return Err(CliError::Input(format!("walk simulation is capped at {} states; this chain has {d}", qwalk::MAX_STATES)));
    }
    let report = qwalk::verify_spectrum(&chain).lift()?;
    let cond = min_conductance(&chain).lift()?;
    let mut csv = String::from("kind,re,im\n");
    for e in &report.eigs_w {
        csv.push_str(&format!("W,{:e},{:e}\n", e[0], e[1]));
    }
    for e in &report.eigs_d {
        csv.push_str(&format!("D,{e:e},0\n"));
    }
    let warnings = !report.passed;
    let result = json!({
        "states": d,
        "eigs_W": report.eigs_w, "eigs_D": report.eigs_d,
        "max_mismatch": report.max_mismatch, "block_residual": report.block_residual,
        "phase_gap": report.phase_gap, "conductance": cond, "passed": report.passed,
    });
    Ok(Outcome { json: envelope("spectrum", json!({ "args": args }), result), csv: Some(csv), warnings })
}

fn check_p(p: f64) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CliError::Input(format!("--p must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn cmd_qsim(q: &Qsim) -> Result<Outcome, CliError> {
    match q {
        Qsim::AmpEst(a) => {
            check_p(a.p)?;
            let task = AmplitudeTask::two_level(a.p).lift()?;
            let runs = qestimate::amplitude_estimate_trials(&task, a.m, a.trials, a.seed).lift()?;
            let bound = qestimate::ae_bound(a.p, a.m);
            let ok: Vec<bool> = runs.iter().map(|r| (r.p_tilde - a.p).abs() <= bound + 1e-12).collect();
            let rate = ok.iter().filter(|b| **b).count() as f64 / runs.len().max(1) as f64;
            let mut csv = String::from("trial,y,p_tilde,success\n");
            for (t, (r, s)) in runs.iter().zip(&ok).enumerate() {
                csv.push_str(&format!("{t},{},{:e},{s}\n", r.y, r.p_tilde));
            }
            let trials: Vec<Value> =
                runs.iter().zip(&ok).map(|(r, s)| json!({ "y": r.y, "p_tilde": r.p_tilde, "success": s })).collect();
            let result = json!({ "p_true": a.p, "M": a.m, "bound": bound, "success_rate": rate, "trials": trials });
            Ok(Outcome { json: envelope("qsim amp-est", json!({ "args": a }), result), csv: Some(csv), warnings: false })
        }
        Qsim::Pi3(a) => {
            check_p(a.p)?;
            let (psi, phi) = qestimate::pi3_instance(a.p);
            let w = qestimate::omega();
            let out = qestimate::pi3_amplify(&psi, &qestimate::phase_reflection(&psi, w), &qestimate::phase_reflection(&phi, w), a.m)
                .lift()?;
            let overlap = phi.dotc(&out.state).norm_sqr();
            let bound = qestimate::pi3_overlap_bound(a.p, a.m);
            let cap = 3u64.pow(a.m);
            let success = overlap >= bound - 1e-12 && out.uses <= cap;
            let result = json!({ "p_true": a.p, "m": a.m, "overlap": overlap, "bound": bound, "uses": out.uses, "use_cap": cap, "success": success });
            Ok(Outcome { json: envelope("qsim pi3", json!({ "args": a }), result), csv: None, warnings: !success })
        }
        Qsim::Nondes(a) => {
            check_p(a.p)?;
            let task = AmplitudeTask::two_level(a.p).lift()?;
            let r = qestimate::nondestructive_estimate(&task, a.copies, a.m, a.seed).lift()?;
            let bound = qestimate::ae_bound(a.p, a.m);
            let success = (r.estimate - a.p).abs() <= bound + 1e-12;
            let result = json!({
                "p_true": a.p, "p_tilde": r.estimate, "bound": bound, "success": success,
                "fidelity": r.fidelity, "median_k": r.median_k, "outcome_probability": r.outcome_probability,
                "restored_norm": r.restored.norm(),
            });
            Ok(Outcome { json: envelope("qsim nondes", json!({ "args": a }), result), csv: None, warnings: false })
        }
        Qsim::Chebyshev(a) => {
            let var = DiscreteVariable::new(a.values.clone(), a.probs.clone()).lift()?;
            let mu = var.mean();
            let delta_u = a.delta_u.unwrap_or_else(|| var.moment_ratio());
            let h = a.h.unwrap_or_else(|| 2.0 * a.values.iter().cloned().fold(0.0, f64::max));
            let r = qestimate::quantum_chebyshev_mean(&var, delta_u, h, a.eps, a.delta, a.seed).lift()?;
            let success = (r.estimate - mu).abs() <= a.eps * mu;
            let result = json!({
                "mu_true": mu, "estimate": r.estimate, "success": success, "delta_u": delta_u, "H": h,
                "b_final": r.b_final, "M_final": r.m_final, "repetitions": r.repetitions, "probes": r.probes,
            });
            Ok(Outcome { json: envelope("qsim chebyshev", json!({ "args": a }), result), csv: None, warnings: false })
        }
    }
}

fn cmd_reduction(args: &ReductionArgs) -> Result<Outcome, CliError> {
    if args.n == 0 || args.n > 20 {
        return Err(CliError::Input("--n must lie in 1..=20".into()));
    }
    let report = check_equivalence(args.n, args.points, args.seed).lift()?;
    let warnings = !report.pass;
    let result = serde_json::to_value(&report).expect("report serializes");
    Ok(Outcome { json: envelope("reduction-test", json!({ "args": args }), result), csv: None, warnings })
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Volume(a) => cmd_volume(a, cli.threads),
        Command::Mix(a) => cmd_mix(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Qsim(q) => cmd_qsim(q),
        Command::ReductionTest(a) => cmd_reduction(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let text = match (cli.format, &outcome.csv) {
        (Format::Csv, Some(csv)) => csv.clone(),
        _ => serde_json::to_string_pretty(&outcome.json).expect("report serializes") + "\n",
    };
    match &cli.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{text}"),
    }
    if outcome.warnings {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
