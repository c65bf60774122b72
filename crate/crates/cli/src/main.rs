use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tdlab::agent::{self, EnvSpec, QFunction, QKind, SarsaConfig};
use tdlab::linalg::{self, Matrix};
use tdlab::mdp::{self, Mdp};
use tdlab::optim::{Hyperparams, OptimizerKind};
use tdlab::precond::{self, AnalysisRow, SplitKind, Variant};
use tdlab::sweep::{self, AnalysisOptions, SweepSpec};
use tdlab::{rng, solver};

const EXIT_USAGE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_VIOLATIONS: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "tdlab", version, about = "Preconditioned TD experiments")]
struct Cli {
    /// Output directory; every run writes manifest.json there first.
    #[arg(long, global = true, env = "TDLAB_OUT", default_value = "tdlab-out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Format of the main table (theory rows, solver trace, learning curve).
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare plain and Jacobi splittings on generated systems.
    Theory(TheoryArgs),
    /// Run the preconditioned linear iteration and report its rate.
    Solve(SolveArgs),
    /// Train Expected SARSA on a toy environment.
    Learn(LearnArgs),
    /// Random hyperparameter search described by a JSON file.
    Sweep(SweepArgs),
    /// Analyse a records.csv produced by `sweep`.
    Stats(StatsArgs),
}

#[derive(Args, Debug, Serialize)]
struct TheoryArgs {
    /// State count, or an inclusive range `A-B` cycled over instances.
    #[arg(long, default_value = "12")]
    n_states: String,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    /// Discount factors, cycled over instances.
    #[arg(long, value_delimiter = ',', default_value = "0.9")]
    gamma: Vec<f64>,
    #[arg(long, default_value = "td0")]
    variant: String,
    /// Successors per state for random processes.
    #[arg(long, default_value_t = 3)]
    branching: usize,
    /// Symmetric doubly stochastic transitions; fills the condition-number columns.
    #[arg(long)]
    symmetric: bool,
}

#[derive(Args, Debug, Serialize)]
struct SolveArgs {
    /// Process as JSON (`{"p": [[..]], "r": [..], "gamma": ..}`).
    #[arg(long, conflicts_with = "generator")]
    mdp: Option<PathBuf>,
    /// `two-state`, `symmetric-two-state`, `random:N[:B]`, `symmetric:N` or `chain:N[:PL[:PR]]`.
    #[arg(long, default_value = "two-state")]
    generator: String,
    /// Discount for generated processes.
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value = "td0")]
    variant: String,
    #[arg(long, default_value = "jacobi")]
    splitting: String,
    /// Step size, or `optimal` for 2/(λmax+λmin) on symmetric systems.
    #[arg(long, default_value = "1")]
    alpha: String,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

#[derive(Args, Debug, Serialize)]
struct LearnArgs {
    /// `gridworld[:WxH]` or `chain[:N[:SLIP]]`.
    #[arg(long, default_value = "gridworld:5x5")]
    env: String,
    /// `tabular`, `linear[:F]` or `mlp[:H[:F]]`.
    #[arg(long, default_value = "tabular")]
    q: String,
    #[arg(long, default_value = "sgd")]
    optimizer: String,
    /// JSON hyperparameters; individual flags override its fields.
    #[arg(long)]
    hyperparams: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Global gradient clip norm, or `none`.
    #[arg(long)]
    clip: Option<String>,
    #[arg(long)]
    bias_correction: bool,
    /// Environment steps per actor.
    #[arg(long, default_value_t = 200_000)]
    steps: u64,
    #[arg(long, default_value_t = 16)]
    actors: usize,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    #[arg(long, default_value_t = 0.01)]
    epsilon_greedy: f64,
    #[arg(long, default_value_t = 1000)]
    log_every: u64,
    #[arg(long)]
    reward_clip: bool,
    /// Store only the first error of each window.
    #[arg(long)]
    first_offset_only: bool,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    spec: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct StatsArgs {
    records: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    top_percentile: f64,
    /// Pairs to test, e.g. `tdprop:sgd,adam:sgd`; all pairs by default.
    #[arg(long, value_delimiter = ',')]
    pairs: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
}

/// Bad input; reported with exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Library parse and validation errors become usage errors.
fn input<T>(r: tdlab::Result<T>) -> anyhow::Result<T> {
    r.map_err(|e| match e {
        tdlab::Error::InvalidArg(_) | tdlab::Error::Parse(_) | tdlab::Error::DimMismatch { .. } | tdlab::Error::NonFiniteInput(_) | tdlab::Error::NotSquare { .. } => usage(e.to_string()),
        other => other.into(),
    })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<tdlab::Error>() {
        Some(tdlab::Error::Diverged { .. }) => EXIT_DIVERGED,
        _ => 1,
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    format: Format,
    config: C,
}

struct Ctx {
    out: PathBuf,
    seed: u64,
    format: Format,
}

impl Ctx {
    fn manifest<C: Serialize>(&self, command: &str, config: C) -> anyhow::Result<()> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let m = Manifest { command, version: env!("CARGO_PKG_VERSION"), seed: self.seed, format: self.format, config };
        std::fs::write(self.out.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(())
    }

    fn path(&self, stem: &str) -> PathBuf {
        let ext = match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        self.out.join(format!("{stem}.{ext}"))
    }

    fn write_json<T: Serialize>(&self, path: &Path, rows: &T) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(rows)? + "\n")?;
        Ok(())
    }
}

fn parse_state_range(s: &str) -> anyhow::Result<(usize, usize)> {
    let bad = || usage(format!("--n-states: expected N or A-B, got '{s}'"));
    let (a, b) = match s.split_once('-') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if a < 2 || b < a {
        return Err(usage(format!("--n-states: need 2 <= A <= B, got '{s}'")));
    }
    Ok((a, b))
}

fn cmd_theory(ctx: &Ctx, args: &TheoryArgs) -> anyhow::Result<u8> {
    let variant: Variant = input(args.variant.parse())?;
    let (lo, hi) = parse_state_range(&args.n_states)?;
    if args.instances == 0 {
        return Err(usage("--instances must be at least 1"));
    }
    if args.gamma.is_empty() || args.gamma.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
        return Err(usage("--gamma values must lie in (0,1)"));
    }
    if args.branching == 0 {
        return Err(usage("--branching must be at least 1"));
    }
    ctx.manifest("theory", args)?;

    let mut rows = Vec::with_capacity(args.instances);
    let (mut t1_violations, mut t2_violations) = (0usize, 0usize);
    for i in 0..args.instances {
        let n = lo + i % (hi - lo + 1);
        let gamma = args.gamma[i % args.gamma.len()];
        let seed = rng::split(ctx.seed, i as u64);
        let m = if args.symmetric {
            mdp::symmetric_mdp(seed, n, gamma)?
        } else {
            mdp::random_mdp(seed, n, args.branching.min(n), gamma)?
        };
        let sys = precond::build_system(&m, variant)?;
        let a = precond::analyze(&sys)?;
        if !a.theorem1_holds() {
            t1_violations += 1;
        }
        if args.symmetric && a.theorem2_holds() != Some(true) {
            t2_violations += 1;
        }
        rows.push(AnalysisRow::new(&sys, seed, &a));
    }
    let path = ctx.path("analysis");
    match ctx.format {
        Format::Csv => precond::write_analysis_csv(&rows, File::create(&path)?)?,
        Format::Json => ctx.write_json(&path, &rows)?,
    }
    let worst = rows.iter().map(|r| r.rho_jacobi - r.rho_plain).fold(f64::NEG_INFINITY, f64::max);
    println!("instances: {}", rows.len());
    println!("rho(jacobi) <= rho(plain) < 1 violations: {t1_violations} (largest rho_jacobi - rho_plain: {worst:.3e})");
    if args.symmetric {
        let worst_k = rows
            .iter()
            .filter_map(|r| Some(r.kappa_jacobi? / r.kappa_plain?))
            .fold(f64::NEG_INFINITY, f64::max);
        println!("kappa(jacobi) <= 2 kappa(plain) violations: {t2_violations} (largest ratio: {worst_k:.4})");
    }
    println!("wrote {}", path.display());
    let total = t1_violations + t2_violations;
    if total > 0 {
        eprintln!("{total} violation(s)");
        return Ok(EXIT_VIOLATIONS);
    }
    Ok(0)
}

fn generated_mdp(spec: &str, seed: u64, gamma: f64) -> anyhow::Result<Mdp> {
    let bad = || usage(format!("unknown generator '{spec}'"));
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let real = |s: &str| s.parse::<f64>().map_err(|_| bad());
    let m = match parts.as_slice() {
        ["two-state"] => Mdp::new(Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.8]])?, vec![1.0, 0.0], gamma),
        ["symmetric-two-state"] => Mdp::new(Matrix::from_rows(&[[0.6, 0.4], [0.4, 0.6]])?, vec![1.0, 0.0], gamma),
        ["random", n] => {
            let n = num(n)?;
            mdp::random_mdp(seed, n, 3.min(n), gamma)
        }
        ["random", n, b] => mdp::random_mdp(seed, num(n)?, num(b)?, gamma),
        ["symmetric", n] => mdp::symmetric_mdp(seed, num(n)?, gamma),
        ["chain", n] => mdp::chain_mdp(num(n)?, 0.5, 0.5, gamma),
        ["chain", n, pl] => {
            let pl = real(pl)?;
            mdp::chain_mdp(num(n)?, pl, 1.0 - pl, gamma)
        }
        ["chain", n, pl, pr] => mdp::chain_mdp(num(n)?, real(pl)?, real(pr)?, gamma),
        _ => return Err(bad()),
    };
    input(m)
}

#[derive(Serialize)]
struct SolveReport {
    n_states: usize,
    alpha: f64,
    splitting: SplitKind,
    predicted_rate: f64,
    empirical_rate: Option<f64>,
    iterations: usize,
    converged: bool,
    final_error: f64,
}

fn cmd_solve(ctx: &Ctx, args: &SolveArgs) -> anyhow::Result<u8> {
    let variant: Variant = input(args.variant.parse())?;
    let kind: SplitKind = input(args.splitting.parse())?;
    if kind == SplitKind::Custom {
        return Err(usage("--splitting must be plain or jacobi"));
    }
    if !(args.tol >= 0.0) {
        return Err(usage("--tol must be nonnegative"));
    }
    let m = match &args.mdp {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            input(Mdp::from_json(&text))?
        }
        None => generated_mdp(&args.generator, ctx.seed, args.gamma)?,
    };
    let sys = input(precond::build_system(&m, variant))?;
    let split = match kind {
        SplitKind::Jacobi => precond::jacobi_split(&sys)?,
        _ => precond::plain_split(&sys),
    };
    let alpha = if args.alpha == "optimal" {
        if !sys.h.is_symmetric(1e-10) {
            return Err(usage(format!(
                "--alpha optimal needs a symmetric system; this one has asymmetry {:.3e} and its spectrum may be complex",
                sys.h.asymmetry()
            )));
        }
        let eigs = match kind {
            SplitKind::Jacobi => precond::jacobi_symmetric_spectrum(&sys.h)?,
            _ => linalg::eigenvalues_symmetric(&sys.h)?,
        };
        let opt = precond::optimal_alpha(&eigs).map_err(|e| usage(format!("--alpha optimal: {e}")))?;
        println!("optimal alpha 2/(lmax+lmin) = {:.6} (lmax {:.6}, lmin {:.6})", opt.alpha_star, eigs.max(), eigs.min());
        opt.alpha_star
    } else {
        let a: f64 = args.alpha.parse().map_err(|_| usage(format!("--alpha: expected a number or 'optimal', got '{}'", args.alpha)))?;
        if !(a >= 0.0) || !a.is_finite() {
            return Err(usage("--alpha must be finite and nonnegative"));
        }
        a
    };
    ctx.manifest("solve", serde_json::json!({ "args": args, "resolved_alpha": alpha, "mdp": m }))?;

    if alpha == 0.0 {
        println!("alpha = 0: the iteration matrix is I, rho = 1, no progress");
        return Ok(0);
    }
    let predicted = precond::iteration_rate(&split, alpha)?;
    let trace = solver::iterate(&sys, &split, alpha, &vec![0.0; sys.n_states()], args.iters, args.tol)?;
    let above = trace.errors.iter().take_while(|&&e| e > solver::ERROR_FLOOR).count();
    let burn_in = solver::DEFAULT_BURN_IN.min(above.saturating_sub(solver::MIN_RATE_WINDOW + 1) / 2);
    let empirical = solver::empirical_rate(&trace, burn_in).ok();

    let path = ctx.path("trace");
    match ctx.format {
        Format::Csv => trace.write_csv(File::create(&path)?)?,
        Format::Json => ctx.write_json(&path, &trace)?,
    }
    let report = SolveReport {
        n_states: sys.n_states(),
        alpha,
        splitting: kind,
        predicted_rate: predicted,
        empirical_rate: empirical,
        iterations: trace.iterations,
        converged: trace.converged,
        final_error: *trace.errors.last().expect("trace has the initial error"),
    };
    ctx.write_json(&ctx.out.join("solve.json"), &report)?;
    match empirical {
        Some(e) => println!("empirical rate {e:.4} vs predicted {predicted:.4}"),
        None => println!("empirical rate unavailable (too few iterations above the error floor); predicted {predicted:.4}"),
    }
    println!("iterations {} converged {} final error {:.3e}", trace.iterations, trace.converged, report.final_error);
    println!("wrote {}", path.display());
    Ok(0)
}

fn learn_hyperparams(args: &LearnArgs) -> anyhow::Result<Hyperparams> {
    let mut hp = match &args.hyperparams {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => Hyperparams { alpha: 0.1, ..Hyperparams::default() },
    };
    if let Some(a) = args.alpha {
        hp.alpha = a;
    }
    if let Some(b) = args.beta1 {
        hp.beta1 = b;
    }
    if let Some(b) = args.beta2 {
        hp.beta2 = b;
    }
    if let Some(e) = args.epsilon {
        hp.epsilon = e;
    }
    if let Some(c) = &args.clip {
        hp.grad_clip_norm = match c.as_str() {
            "none" => None,
            v => Some(v.parse().map_err(|_| usage(format!("--clip: expected a number or 'none', got '{v}'")))?),
        };
    }
    if args.bias_correction {
        hp.bias_correction = true;
    }
    input(hp.validate())?;
    Ok(hp)
}

fn cmd_learn(ctx: &Ctx, args: &LearnArgs) -> anyhow::Result<u8> {
    let env: EnvSpec = input(args.env.parse())?;
    input(env.validate())?;
    let qkind: QKind = input(args.q.parse())?;
    let optimizer: OptimizerKind = input(args.optimizer.parse())?;
    let hp = learn_hyperparams(args)?;
    let cfg = SarsaConfig {
        n: args.n,
        gamma: args.gamma,
        epsilon_greedy: args.epsilon_greedy,
        actors: args.actors,
        all_offsets: !args.first_offset_only,
        reward_clip: args.reward_clip,
        log_every: args.log_every,
        ..SarsaConfig::new(optimizer, hp, args.steps, ctx.seed)
    };
    input(cfg.validate())?;
    ctx.manifest("learn", serde_json::json!({ "env": env, "q": qkind, "sarsa": cfg }))?;

    let q = input(QFunction::new(qkind, &env, rng::split(ctx.seed, 7)))?;
    let res = agent::train(&env, &q, &cfg)?;
    let path = ctx.path("curve");
    match ctx.format {
        Format::Csv => agent::sarsa::write_curve_csv(&res.curve, File::create(&path)?)?,
        Format::Json => ctx.write_json(&path, &res.curve)?,
    }
    println!("steps per actor {} episodes {}", res.steps, res.episode_returns.len());
    println!("avg return {:.4} asymptotic return {:.4}", res.avg_return(), res.asymptotic_return());
    println!("wrote {}", path.display());
    if let Some(msg) = &res.divergence {
        eprintln!("diverged: {msg}");
        return Ok(EXIT_DIVERGED);
    }
    Ok(0)
}

fn cmd_sweep(ctx: &Ctx, args: &SweepArgs) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: SweepSpec = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", args.spec.display())))?;
    let problems = spec.problems();
    if !problems.is_empty() {
        return Err(usage(format!("invalid sweep spec:\n  {}", problems.join("\n  "))));
    }
    ctx.manifest("sweep", serde_json::json!({ "spec": spec, "resolved_ranges": spec.resolved_ranges() }))?;

    let runs = sweep::run_sweep(&spec)?;
    let records: Vec<_> = runs.iter().map(|r| r.record.clone()).collect();
    let opts = AnalysisOptions { seed: ctx.seed, ..AnalysisOptions::default() };
    let summary = sweep::analyze_records(&records, None, &opts)?;
    sweep::write_sweep_outputs(&ctx.out, &runs, &summary)?;
    println!("runs {} diverged {}", records.len(), summary.n_diverged);
    print_summary(&summary);
    println!("wrote {}", ctx.out.display());
    Ok(0)
}

fn parse_pairs(raw: &[String]) -> anyhow::Result<Option<Vec<(OptimizerKind, OptimizerKind)>>> {
    if raw.is_empty() {
        return Ok(None);
    }
    raw.iter()
        .map(|p| {
            let (a, b) = p.split_once(':').ok_or_else(|| usage(format!("--pairs: expected A:B, got '{p}'")))?;
            Ok((input(a.parse())?, input(b.parse())?))
        })
        .collect::<anyhow::Result<Vec<_>>>()
        .map(Some)
}

fn cmd_stats(ctx: &Ctx, args: &StatsArgs) -> anyhow::Result<u8> {
    if !(args.top_percentile > 0.0 && args.top_percentile <= 1.0) {
        return Err(usage("--top-percentile must lie in (0,1]"));
    }
    if !(args.level > 0.0 && args.level < 1.0) || args.bootstrap == 0 {
        return Err(usage("--level must lie in (0,1) and --bootstrap must be positive"));
    }
    let pairs = parse_pairs(&args.pairs)?;
    let file = File::open(&args.records).with_context(|| format!("opening {}", args.records.display()))?;
    let records = input(sweep::read_records_csv(file))?;
    ctx.manifest("stats", args)?;
    let opts = AnalysisOptions { top_q: args.top_percentile, bootstrap_resamples: args.bootstrap, level: args.level, seed: ctx.seed };
    let summary = sweep::analyze_records(&records, pairs.as_deref(), &opts).map_err(|e| match e {
        tdlab::Error::InsufficientData(_) => usage(e.to_string()),
        other => other.into(),
    })?;
    std::fs::write(ctx.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    print_summary(&summary);
    println!("wrote {}", ctx.out.join("summary.json").display());
    Ok(0)
}

fn print_summary(s: &sweep::Summary) {
    let ci = |i: &Option<sweep::Interval>| i.map_or("-".to_string(), |i| format!("{:.3} [{:.3}, {:.3}]", i.point, i.lo, i.hi));
    for (label, sel) in [("all", &s.all), ("top", &s.top)] {
        println!("{label}:");
        for row in &sel.table {
            println!("  {:<7} n={:<4} avg {}  asymptotic {}", row.kind.as_str(), row.n, ci(&row.avg_return), ci(&row.asymptotic_return));
        }
        for p in &sel.pairwise {
            println!("  {} vs {} ({}): p={:.4} {}", p.a, p.b, p.metric, p.p, p.annotation);
        }
    }
    if s.normalization_warning {
        println!("warning: nonpositive maximum return, values left unnormalised");
    }
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let ctx = Ctx { out: cli.out.clone(), seed: cli.seed, format: cli.format };
    match &cli.command {
        Command::Theory(a) => cmd_theory(&ctx, a),
        Command::Solve(a) => cmd_solve(&ctx, a),
        Command::Learn(a) => cmd_learn(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Stats(a) => cmd_stats(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
