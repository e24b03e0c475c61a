//! Command-line surface for the estimator library.
//!
//! Three subcommands drive the library: `estimate` runs the Gaussian
//! staircase benchmark and writes a per-iteration CSV trace (optionally an
//! SVG plot), `oracle` prints closed-form or Monte-Carlo ground truth for
//! the two-point world and the exchangeability inequalities, and `sweep`
//! tabulates exact bias-variance cells or measures CPC/ML-CPC timing parity.
//!
//! Every option resolves as: command-line flag, then config-file key, then
//! the built-in default. The seed additionally falls back to the
//! `MICONTRAST_SEED` environment variable (between config file and default).
//! Config files are flat `key = value` lines with `#` comments; keys match
//! the long flag names.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use crate::critics::{CriticConfig, CriticKind};
use crate::experiments::{
    run_bias_variance_sweep, run_staircase, run_timing_parity, EstimateTrace, ObjectiveRun,
    StaircaseConfig,
};
use crate::objectives::{alpha_min, AlphaSchedule, EstimatorKind, ObjectiveSpec};
use crate::oracles::{
    binary_cpc_oracle, binary_mlcpc_oracle, binary_true_mi, exchangeable_bound_mc,
    gaussian_true_mi, BinaryWorld, PositiveSampler,
};
use crate::numerics::SeededRng;
use clap::{Args, Parser, Subcommand};
use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const SEED_ENV_VAR: &str = "MICONTRAST_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "micontrast",
    about = "Contrastive mutual-information estimators: benchmarks, oracles and sweeps",
    version
)]
struct TopLevel {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Gaussian staircase benchmark and write the estimate trace
    Estimate(EstimateArgs),
    /// Closed-form and Monte-Carlo ground-truth values
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Exact bias-variance sweep over the two-point world, or timing parity
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Clone)]
struct CommonArgs {
    /// Flat `key = value` config file; flags take precedence over its keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (flag > config > MICONTRAST_SEED > 0)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Estimator: cpc or mlcpc
    #[arg(long)]
    objective: Option<String>,
    /// Positive-sample weight: a positive real or `auto` (= alpha_min(n, m))
    #[arg(long)]
    alpha: Option<String>,
    /// Geometric alpha curriculum `start,end,steps` (overrides --alpha)
    #[arg(long)]
    alpha_schedule: Option<String>,
    /// Batch size n
    #[arg(long)]
    n: Option<usize>,
    /// Classes per row m (1 positive + m-1 negatives)
    #[arg(long)]
    m: Option<usize>,
    /// Input dimension d
    #[arg(long)]
    d: Option<usize>,
    /// Comma-separated target MI levels, strictly increasing
    #[arg(long)]
    levels: Option<String>,
    /// Single-level alternative to --levels: fixed correlation in [0, 1)
    #[arg(long)]
    rho: Option<f64>,
    /// Iterations per level
    #[arg(long)]
    iters: Option<usize>,
    /// Critic architecture: joint or separable
    #[arg(long)]
    critic: Option<String>,
    /// Hidden width of the critic MLPs
    #[arg(long)]
    hidden: Option<usize>,
    /// Embedding dimension of the separable critic
    #[arg(long)]
    embed: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Also write an SVG plot next to the CSV
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Subcommand)]
enum OracleCommand {
    /// Exact re-weighted CPC mean/variance with tied negatives (m = n)
    BinaryCpc(BinaryOracleArgs),
    /// Exact re-weighted ML-CPC mean/variance with independent negatives
    BinaryMlcpc(BinaryOracleArgs),
    /// Monte-Carlo check of the exchangeability inequalities
    Exchangeable(ExchangeableArgs),
    /// True mutual information of the binary or Gaussian world
    TrueMi(TrueMiArgs),
}

#[derive(Debug, Args)]
struct BinaryOracleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Probability of the (1, 1) mass
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Classes per row (binary-mlcpc only; binary-cpc ties m = n)
    #[arg(long)]
    m: Option<usize>,
    /// Positive-sample weight: positive real or `auto`
    #[arg(long)]
    alpha: Option<String>,
    /// Critic log-score for matched pairs
    #[arg(long)]
    match_logit: Option<f64>,
    /// Critic log-score for mismatched pairs; omit for the hard critic
    #[arg(long)]
    mismatch_logit: Option<f64>,
}

#[derive(Debug, Args)]
struct ExchangeableArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    alpha: Option<String>,
    /// Monte-Carlo trials
    #[arg(long)]
    trials: Option<usize>,
    /// Positive distribution: exponential or lognormal
    #[arg(long)]
    sampler: Option<String>,
}

#[derive(Debug, Args)]
struct TrueMiArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Two-point world mass at (1, 1)
    #[arg(long)]
    p: Option<f64>,
    /// Gaussian per-dimension correlation
    #[arg(long)]
    rho: Option<f64>,
    /// Gaussian dimension count
    #[arg(long)]
    d: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Two-point world mass at (1, 1)
    #[arg(long)]
    p: Option<f64>,
    /// Comma-separated n = m sizes
    #[arg(long)]
    sizes: Option<String>,
    /// Comma-separated weights, each a positive real or `auto`
    #[arg(long)]
    alphas: Option<String>,
    /// Measure CPC vs ML-CPC wall time instead of oracle bias/variance
    #[arg(long)]
    timing: bool,
    /// Batch size for --timing
    #[arg(long)]
    n: Option<usize>,
    /// Classes per row for --timing
    #[arg(long)]
    m: Option<usize>,
    /// Update count for --timing
    #[arg(long)]
    updates: Option<usize>,
}

/// Usage problems exit 2, runtime failures exit 1.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parsed config file: flat `key = value` pairs.
#[derive(Debug, Default)]
struct ConfigFile {
    entries: HashMap<String, String>,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut entries = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(usage(format!(
                    "config line {} is not `key = value`: {raw:?}",
                    lineno + 1
                )));
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| usage(format!("config key {key} = {raw:?}: {e}"))),
        }
    }
}

/// flag > config > default
fn resolve<T: FromStr + Clone>(
    flag: Option<T>,
    cfg: &ConfigFile,
    key: &str,
    default: T,
) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    Ok(flag.or(cfg.get(key)?).unwrap_or(default))
}

fn resolve_required<T: FromStr + Clone>(
    flag: Option<T>,
    cfg: &ConfigFile,
    key: &str,
) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    flag.or(cfg.get(key)?)
        .ok_or_else(|| usage(format!("missing required option --{key}")))
}

/// flag > config > MICONTRAST_SEED > 0
fn resolve_seed(
    flag: Option<u64>,
    cfg: &ConfigFile,
    env_seed: Option<&str>,
) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = cfg.get::<u64>("seed")? {
        return Ok(s);
    }
    match env_seed {
        Some(raw) => raw
            .parse::<u64>()
            .map_err(|e| usage(format!("{SEED_ENV_VAR}={raw:?}: {e}"))),
        None => Ok(0),
    }
}

fn parse_alpha(raw: &str, n: usize, m: usize) -> Result<f64, CliError> {
    if raw.eq_ignore_ascii_case("auto") {
        return alpha_min(n, m).map_err(usage);
    }
    let v: f64 = raw
        .parse()
        .map_err(|e| usage(format!("alpha {raw:?}: {e}")))?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(usage(format!("alpha must be a positive real, got {raw}")));
    }
    Ok(v)
}

fn parse_objective(raw: &str) -> Result<EstimatorKind, CliError> {
    match raw.to_ascii_lowercase().as_str() {
        "cpc" => Ok(EstimatorKind::Cpc),
        "mlcpc" | "ml-cpc" => Ok(EstimatorKind::MlCpc),
        other => Err(usage(format!("unknown objective {other:?} (cpc|mlcpc)"))),
    }
}

fn parse_critic(raw: &str) -> Result<CriticKind, CliError> {
    match raw.to_ascii_lowercase().as_str() {
        "joint" => Ok(CriticKind::Joint),
        "separable" => Ok(CriticKind::Separable),
        other => Err(usage(format!("unknown critic {other:?} (joint|separable)"))),
    }
}

fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(usage(format!("empty {what} list")));
    }
    items
        .into_iter()
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| usage(format!("{what} item {s:?}: {e}")))
        })
        .collect()
}

fn parse_schedule(raw: &str, total_steps: usize) -> Result<AlphaSchedule, CliError> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    let (start, end, steps) = match parts.as_slice() {
        [s, e] => (s, e, total_steps),
        [s, e, st] => {
            let steps: usize = st
                .parse()
                .map_err(|e| usage(format!("schedule steps {st:?}: {e}")))?;
            (s, e, steps)
        }
        _ => {
            return Err(usage(format!(
                "alpha schedule must be `start,end[,steps]`, got {raw:?}"
            )))
        }
    };
    let start: f64 = start
        .parse()
        .map_err(|e| usage(format!("schedule start: {e}")))?;
    let end: f64 = end.parse().map_err(|e| usage(format!("schedule end: {e}")))?;
    AlphaSchedule::new(start, end, steps).map_err(usage)
}

/// Entry point used by `main` and by tests; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_seed = std::env::var(SEED_ENV_VAR).ok();
    run_with_env(args, env_seed.as_deref())
}

/// Same as [`run`] but with the environment seed passed explicitly so tests
/// can exercise the precedence chain without mutating process state.
pub fn run_with_env<I, T>(args: I, env_seed: Option<&str>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match TopLevel::try_parse_from(args) {
        Ok(p) => p,
        Err(e) => {
            // clap handles --help/--version as "errors" with success codes
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match parsed.command {
        Command::Estimate(args) => cmd_estimate(args, env_seed),
        Command::Oracle(cmd) => cmd_oracle(cmd, env_seed),
        Command::Sweep(args) => cmd_sweep(args, env_seed),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn cmd_estimate(args: EstimateArgs, env_seed: Option<&str>) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;

    let objective_raw: String = resolve_required(args.objective, &cfg, "objective")?;
    let kind = parse_objective(&objective_raw)?;
    let n = resolve(args.n, &cfg, "n", 128)?;
    let m = resolve(args.m, &cfg, "m", 128)?;
    let d = resolve(args.d, &cfg, "d", 20)?;
    let iters = resolve(args.iters, &cfg, "iters", 1000)?;
    let critic_raw: String = resolve(args.critic, &cfg, "critic", "joint".into())?;
    let critic = parse_critic(&critic_raw)?;
    let hidden = resolve(args.hidden, &cfg, "hidden", 256)?;
    let embed = resolve(args.embed, &cfg, "embed", 32)?;
    let lr = resolve(args.lr, &cfg, "lr", 1e-3)?;
    let seed = resolve_seed(args.common.seed, &cfg, env_seed)?;
    let svg = args.svg || cfg.get::<bool>("svg")?.unwrap_or(false);
    let out = resolve(args.common.out, &cfg, "out", PathBuf::from("estimate.csv"))?;

    let rho_opt = match args.rho {
        Some(r) => Some(r),
        None => cfg.get::<f64>("rho")?,
    };
    let levels = match (rho_opt, resolve(args.levels, &cfg, "levels", String::new())?) {
        (Some(rho), raw) if raw.is_empty() => {
            vec![gaussian_true_mi(d, rho).map_err(usage)?]
        }
        (Some(_), _) => {
            return Err(usage("--rho and --levels are mutually exclusive"));
        }
        (None, raw) if raw.is_empty() => vec![2.0, 4.0, 6.0, 8.0, 10.0],
        (None, raw) => parse_list::<f64>(&raw, "levels")?,
    };
    let total_iters = levels.len() * iters;

    let schedule_raw = match args.alpha_schedule {
        Some(s) => Some(s),
        None => cfg.get::<String>("alpha-schedule")?,
    };
    let alpha_raw = match args.alpha {
        Some(a) => Some(a),
        None => cfg.get::<String>("alpha")?,
    };
    let objective = match (schedule_raw, alpha_raw) {
        (Some(sched), None) => ObjectiveRun::Scheduled {
            kind,
            schedule: parse_schedule(&sched, total_iters)?,
        },
        (Some(_), Some(_)) => {
            return Err(usage("--alpha and --alpha-schedule are mutually exclusive"));
        }
        (None, raw) => {
            let alpha = parse_alpha(raw.as_deref().unwrap_or("1.0"), n, m)?;
            ObjectiveRun::Fixed(ObjectiveSpec::new(kind, alpha).map_err(usage)?)
        }
    };

    let staircase = StaircaseConfig {
        d,
        n,
        m,
        levels,
        iters_per_level: iters,
        critic,
        critic_config: CriticConfig {
            hidden_width: hidden,
            hidden_layers: 2,
            embed_dim: embed,
        },
        objective,
        lr,
        seed,
    };

    let trace = run_staircase(&staircase).map_err(runtime)?;
    write_trace_csv(&out, &trace).map_err(runtime)?;
    if svg {
        let svg_path = out.with_extension("svg");
        std::fs::write(&svg_path, trace_svg(&trace)).map_err(runtime)?;
        eprintln!("wrote plot to {}", svg_path.display());
    }
    eprintln!(
        "wrote {} records to {} (objective {kind}, n={n}, m={m}, d={d}, seed {seed})",
        trace.records.len(),
        out.display(),
    );
    Ok(())
}

fn cmd_oracle(cmd: OracleCommand, env_seed: Option<&str>) -> Result<(), CliError> {
    match cmd {
        OracleCommand::BinaryCpc(args) => cmd_binary_oracle(args, EstimatorKind::Cpc),
        OracleCommand::BinaryMlcpc(args) => cmd_binary_oracle(args, EstimatorKind::MlCpc),
        OracleCommand::Exchangeable(args) => cmd_exchangeable(args, env_seed),
        OracleCommand::TrueMi(args) => cmd_true_mi(args),
    }
}

fn build_world(p: f64, match_logit: f64, mismatch_logit: Option<f64>) -> Result<BinaryWorld, CliError> {
    match mismatch_logit {
        None => BinaryWorld::hard(p).map_err(usage),
        Some(ml) => BinaryWorld::soft(p, match_logit, ml).map_err(usage),
    }
}

fn cmd_binary_oracle(args: BinaryOracleArgs, kind: EstimatorKind) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let p: f64 = resolve_required(args.p, &cfg, "p")?;
    let n: usize = resolve_required(args.n, &cfg, "n")?;
    let m: usize = match kind {
        EstimatorKind::Cpc => {
            if args.m.is_some_and(|m| m != n) {
                return Err(usage("binary-cpc ties m = n; do not pass a different --m"));
            }
            n
        }
        EstimatorKind::MlCpc => resolve_required(args.m, &cfg, "m")?,
    };
    let alpha_raw: String = resolve_required(args.alpha, &cfg, "alpha")?;
    let alpha = parse_alpha(&alpha_raw, n, m)?;
    let match_logit = resolve(args.match_logit, &cfg, "match-logit", 0.0)?;
    let mismatch_logit = match args.mismatch_logit {
        Some(v) => Some(v),
        None => cfg.get::<f64>("mismatch-logit")?,
    };
    let world = build_world(p, match_logit, mismatch_logit)?;
    let out = resolve(args.common.out, &cfg, "out", PathBuf::from("oracle.csv"))?;

    let stats = match kind {
        EstimatorKind::Cpc => binary_cpc_oracle(&world, n, alpha),
        EstimatorKind::MlCpc => binary_mlcpc_oracle(&world, n, m, alpha),
    }
    .map_err(usage)?;
    let true_mi = binary_true_mi(p).map_err(usage)?;
    let bound_valid = ObjectiveSpec::new(kind, alpha)
        .map_err(usage)?
        .bound_valid(n, m);

    let mut csv = String::from("objective,p,n,m,alpha,mean,variance,true_mi,bound_valid\n");
    let _ = writeln!(
        csv,
        "{kind},{p},{n},{m},{alpha},{},{},{true_mi},{bound_valid}",
        stats.mean, stats.variance
    );
    std::fs::write(&out, &csv).map_err(runtime)?;
    print!("{csv}");
    Ok(())
}

fn cmd_exchangeable(args: ExchangeableArgs, env_seed: Option<&str>) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let n: usize = resolve_required(args.n, &cfg, "n")?;
    let m: usize = resolve_required(args.m, &cfg, "m")?;
    let alpha_raw: String = resolve_required(args.alpha, &cfg, "alpha")?;
    let alpha = parse_alpha(&alpha_raw, n, m)?;
    let trials = resolve(args.trials, &cfg, "trials", 100_000)?;
    let sampler_raw: String = resolve(args.sampler, &cfg, "sampler", "lognormal".into())?;
    let sampler = match sampler_raw.to_ascii_lowercase().as_str() {
        "exponential" | "exp" => PositiveSampler::Exponential,
        "lognormal" | "log-normal" => PositiveSampler::LogNormal,
        other => {
            return Err(usage(format!(
                "unknown sampler {other:?} (exponential|lognormal)"
            )))
        }
    };
    let seed = resolve_seed(args.common.seed, &cfg, env_seed)?;
    let out = resolve(args.common.out, &cfg, "out", PathBuf::from("oracle.csv"))?;

    let mut rng = SeededRng::new(seed);
    let (estimate, std_error) =
        exchangeable_bound_mc(&mut rng, n, m, alpha, sampler, trials).map_err(runtime)?;

    let sampler_name = match sampler {
        PositiveSampler::Exponential => "exponential",
        PositiveSampler::LogNormal => "lognormal",
    };
    let mut csv = String::from("n,m,alpha,sampler,trials,estimate,std_error\n");
    let _ = writeln!(csv, "{n},{m},{alpha},{sampler_name},{trials},{estimate},{std_error}");
    std::fs::write(&out, &csv).map_err(runtime)?;
    print!("{csv}");
    Ok(())
}

fn cmd_true_mi(args: TrueMiArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let p = match args.p {
        Some(v) => Some(v),
        None => cfg.get::<f64>("p")?,
    };
    let rho = match args.rho {
        Some(v) => Some(v),
        None => cfg.get::<f64>("rho")?,
    };
    let out = resolve(args.common.out, &cfg, "out", PathBuf::from("oracle.csv"))?;
    let csv = match (p, rho) {
        (Some(p), None) => {
            let mi = binary_true_mi(p).map_err(usage)?;
            format!("source,p,true_mi\nbinary,{p},{mi}\n")
        }
        (None, Some(rho)) => {
            let d = resolve(args.d, &cfg, "d", 20)?;
            let mi = gaussian_true_mi(d, rho).map_err(usage)?;
            format!("source,d,rho,true_mi\ngaussian,{d},{rho},{mi}\n")
        }
        _ => {
            return Err(usage(
                "pass exactly one of --p (binary world) or --rho [--d] (Gaussian world)",
            ))
        }
    };
    std::fs::write(&out, &csv).map_err(runtime)?;
    print!("{csv}");
    Ok(())
}

fn cmd_sweep(args: SweepArgs, env_seed: Option<&str>) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let out = resolve(
        args.common.out.clone(),
        &cfg,
        "out",
        PathBuf::from("sweep.csv"),
    )?;
    let timing = args.timing || cfg.get::<bool>("timing")?.unwrap_or(false);
    if timing {
        return cmd_sweep_timing(args, &cfg, &out, env_seed);
    }

    let p = resolve(args.p, &cfg, "p", 0.5)?;
    let sizes_raw: String = resolve(args.sizes, &cfg, "sizes", "3,5,9,17".into())?;
    let sizes: Vec<(usize, usize)> = parse_list::<usize>(&sizes_raw, "sizes")?
        .into_iter()
        .map(|s| (s, s))
        .collect();
    let alphas_raw: String = resolve(args.alphas, &cfg, "alphas", "auto,1.0".into())?;
    let alpha_items: Vec<&str> = alphas_raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if alpha_items.is_empty() {
        return Err(usage("empty alphas list"));
    }

    let mut csv = String::from("n,m,alpha,objective,bias,std\n");
    for &(n, m) in &sizes {
        let alphas: Vec<f64> = alpha_items
            .iter()
            .map(|raw| parse_alpha(raw, n, m))
            .collect::<Result<_, _>>()?;
        let result = run_bias_variance_sweep(p, &[(n, m)], &alphas).map_err(runtime)?;
        for w in &result.warnings {
            eprintln!("warning: {w}");
        }
        for row in &result.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                row.n, row.m, row.alpha, row.objective, row.bias, row.std
            );
        }
    }
    std::fs::write(&out, &csv).map_err(runtime)?;
    print!("{csv}");
    Ok(())
}

fn cmd_sweep_timing(
    args: SweepArgs,
    cfg: &ConfigFile,
    out: &Path,
    env_seed: Option<&str>,
) -> Result<(), CliError> {
    let n = resolve(args.n, cfg, "n", 128)?;
    let m = resolve(args.m, cfg, "m", 128)?;
    let updates = resolve(args.updates, cfg, "updates", 200)?;
    let seed = resolve_seed(args.common.seed, cfg, env_seed)?;

    let staircase = StaircaseConfig {
        n,
        m,
        seed,
        levels: vec![2.0],
        ..StaircaseConfig::default()
    };
    let (cpc_ms, mlcpc_ms) = run_timing_parity(&staircase, updates).map_err(runtime)?;
    let ratio = mlcpc_ms / cpc_ms;
    let mut csv = String::from("objective,updates,median_ms_per_update,parity_ratio\n");
    let _ = writeln!(csv, "cpc,{updates},{cpc_ms},{ratio}");
    let _ = writeln!(csv, "mlcpc,{updates},{mlcpc_ms},{ratio}");
    std::fs::write(out, &csv).map_err(runtime)?;
    print!("{csv}");
    Ok(())
}

/// Write the per-iteration trace: `iter,estimate,smoothed,true_mi,alpha,wall_ms`.
pub fn write_trace_csv(path: &Path, trace: &EstimateTrace) -> std::io::Result<()> {
    let mut csv = String::from("iter,estimate,smoothed,true_mi,alpha,wall_ms\n");
    for r in &trace.records {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.iteration, r.estimate, r.smoothed, r.true_mi, r.alpha, r.wall_ms
        );
    }
    std::fs::write(path, csv)
}

/// Self-contained SVG line plot of a trace: raw estimate, smoothed estimate,
/// and the true-MI staircase.
pub fn trace_svg(trace: &EstimateTrace) -> String {
    const W: f64 = 800.0;
    const H: f64 = 480.0;
    const ML: f64 = 60.0; // left margin
    const MR: f64 = 20.0;
    const MT: f64 = 20.0;
    const MB: f64 = 45.0;

    let count = trace.records.len().max(1);
    let mut y_min = 0.0_f64;
    let mut y_max = f64::MIN;
    for r in &trace.records {
        y_min = y_min.min(r.estimate);
        y_max = y_max.max(r.estimate).max(r.true_mi);
    }
    if !y_max.is_finite() || y_max <= y_min {
        y_max = y_min + 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    let (y_min, y_max) = (y_min - pad, y_max + pad);

    let x_of = |iter: usize| ML + (W - ML - MR) * iter as f64 / (count.max(2) - 1) as f64;
    let y_of = |v: f64| H - MB - (H - MT - MB) * (v - y_min) / (y_max - y_min);

    let polyline = |values: &dyn Fn(&crate::experiments::TraceRecord) -> f64| {
        let mut pts = String::new();
        for r in &trace.records {
            let _ = write!(pts, "{:.2},{:.2} ", x_of(r.iteration), y_of(values(r)));
        }
        pts
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{}" stroke="black"/>"#,
        H - MB
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{ML}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - MB,
        W - MR,
        H - MB
    );
    // y ticks
    for k in 0..=5 {
        let v = y_min + (y_max - y_min) * k as f64 / 5.0;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y:.2}" x2="{ML}" y2="{y:.2}" stroke="black"/>"#,
            ML - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" font-size="12" text-anchor="end">{v:.2}</text>"#,
            ML - 8.0,
            y + 4.0
        );
    }
    // x ticks
    for k in 0..=5 {
        let iter = (count - 1) * k / 5;
        let x = x_of(iter);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{}" font-size="12" text-anchor="middle">{iter}</text>"#,
            H - MB + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">iteration</text>"#,
        (W + ML - MR) / 2.0,
        H - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">nats</text>"#,
        (H - MB + MT) / 2.0,
        (H - MB + MT) / 2.0
    );
    let _ = writeln!(
        svg,
        r##"<polyline fill="none" stroke="#888888" stroke-width="1.5" stroke-dasharray="5,3" points="{}"/>"##,
        polyline(&|r| r.true_mi)
    );
    let _ = writeln!(
        svg,
        r##"<polyline fill="none" stroke="#9ecae1" stroke-width="1" points="{}"/>"##,
        polyline(&|r| r.estimate)
    );
    let _ = writeln!(
        svg,
        r##"<polyline fill="none" stroke="#08519c" stroke-width="2" points="{}"/>"##,
        polyline(&|r| r.smoothed)
    );
    svg.push_str("</svg>\n");
    svg
}
