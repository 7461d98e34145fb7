use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use latecons::harness::{self, Figure, Grid, FIGURE_NS};
use latecons::verify::{self, Thresholds};
use latecons::{oracle, validate_config, ConfigError, EngineError, Fraction, TrialConfig};

#[derive(Parser)]
#[command(name = "sim", version, about = "Consensus under a late blocking adversary")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run trials of one configuration and write one CSV row per trial.
    Run(RunArgs),
    /// Per-cell success rate, mean and p95 rounds of a trial CSV.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bar-chart data for one of the two round-count figures.
    Figure(FigureArgs),
    /// Monte Carlo check of one-round dynamics.
    Verify(VerifyArgs),
    /// Evaluate a closed-form probability.
    Oracle {
        #[command(subcommand)]
        formula: Formula,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    l: Option<String>,
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    adversary: Option<String>,
    #[arg(long)]
    lateness: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    c1: Option<String>,
    #[arg(long)]
    c2: Option<String>,
    #[arg(long)]
    c3: Option<String>,
    #[arg(long)]
    log_base: Option<String>,
    #[arg(long)]
    max_rounds: Option<String>,
    #[arg(long)]
    blocked_reset_mv: Option<String>,
    #[arg(long)]
    initial_bias: Option<String>,
    #[arg(long)]
    block_semantics: Option<String>,
    #[arg(long)]
    continue_after_outcome: Option<String>,
    #[arg(long)]
    mv_domain: Option<String>,
}

impl Overrides {
    fn apply(&self, cfg: &mut TrialConfig) -> Result<(), ConfigError> {
        let pairs = [
            ("n", &self.n),
            ("epsilon", &self.epsilon),
            ("k", &self.k),
            ("l", &self.l),
            ("protocol", &self.protocol),
            ("adversary", &self.adversary),
            ("lateness", &self.lateness),
            ("alpha", &self.alpha),
            ("c1", &self.c1),
            ("c2", &self.c2),
            ("c3", &self.c3),
            ("log_base", &self.log_base),
            ("max_rounds", &self.max_rounds),
            ("blocked_reset_mv", &self.blocked_reset_mv),
            ("initial_bias", &self.initial_bias),
            ("block_semantics", &self.block_semantics),
            ("continue_after_outcome", &self.continue_after_outcome),
            ("mv_domain", &self.mv_domain),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(())
    }
}

#[derive(Args)]
struct RunArgs {
    /// key = value file; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Master seed; trial i runs with a seed derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the round-by-round trajectory of trial 0 here.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Run trials on one thread.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(long)]
    which: Figure,
    /// Build from an existing trial CSV instead of running the grid.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated sizes (default: 128 through 4096).
    #[arg(long, value_delimiter = ',')]
    ns: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(subcommand)]
    check: Check,
}

#[derive(Subcommand)]
enum Check {
    /// Rate of rounds ending with fewer than 3n/4 defined nodes.
    MinDefined {
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, default_value = "1/16")]
        epsilon: Fraction,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = Thresholds::default().max_undefined_violation_rate)]
        max_rate: f64,
    },
    /// Frequency of delta growing by 9/8 in one round.
    Drift {
        #[arg(long, default_value_t = 4096)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2")]
        deltas: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Constant of the lower regime edge c * sqrt(ln n / n).
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = Thresholds::default().min_drift_frequency)]
        min_frequency: f64,
    },
    /// Probability of a jump to |Delta| >= sqrt(n/16) from balance.
    Jump {
        #[arg(long, value_delimiter = ',', default_value = "1024,4096")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = Thresholds::default().min_jump_probability)]
        min_alpha: f64,
    },
    /// Rounds for a minority of n/8 to shrink to log2 n.
    Contraction {
        #[arg(long, value_delimiter = ',', default_value = "1024,4096")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum Formula {
    /// Pr[a node receives exactly j of k*n_t pushed values].
    ReceiveExactly { n: u64, n_t: u64, k: u64, j: u64 },
    /// Pr[a node receives at most 2 values].
    Le2 {
        n: u64,
        n_t: u64,
        #[arg(default_value_t = 6)]
        k: u64,
    },
    /// Pr[a defined node adopts 0].
    PickZero {
        n_t: u64,
        x_t: u64,
        #[arg(default_value_t = 6)]
        k: u64,
    },
    /// 1/2 - 3/2 delta + 2 delta^3.
    DriftExpansion { delta: f64 },
    /// (1 - theta)^2 mean2^2 / mean4.
    PaleyZygmund { mean2: f64, mean4: f64, theta: f64 },
}

enum Failure {
    Config(String),
    Assertion(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(c) => c.into(),
            other => Failure::Other(other.into()),
        }
    }
}

impl From<harness::HarnessError> for Failure {
    fn from(e: harness::HarnessError) -> Self {
        match e {
            harness::HarnessError::Engine(e) => e.into(),
            other => Failure::Other(other.into()),
        }
    }
}

impl From<oracle::OracleError> for Failure {
    fn from(e: oracle::OracleError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot write {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = TrialConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        cfg.apply_kv_text(&text)?;
    }
    args.overrides.apply(&mut cfg)?;
    let cfg = validate_config(cfg)?;
    if let Some(path) = &args.trajectory {
        let first = TrialConfig {
            seed: latecons::rng::derive_trial_seed(args.seed, 0),
            ..cfg.clone()
        };
        let (_, traj) = latecons::run_trial(&first)?;
        std::fs::write(path, traj.to_csv()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let rows = harness::run_experiment_with(&Grid::single(cfg), args.trials, args.seed, !args.serial)?;
    harness::write_csv(&rows, output(&args.out)?)?;
    for s in harness::summarize(&rows) {
        eprintln!(
            "n={} epsilon={} ({},{}) {}: success {}/{}, mean rounds {}",
            s.key.n,
            s.key.epsilon,
            s.key.k,
            s.key.l,
            s.key.protocol,
            s.successes,
            s.trials,
            s.mean_rounds.map_or("-".into(), |m| format!("{m:.3}")),
        );
    }
    Ok(())
}

fn summarize(input: PathBuf, out: Option<PathBuf>) -> Result<(), Failure> {
    let file = File::open(&input).with_context(|| format!("cannot read {}", input.display()))?;
    let rows = harness::read_csv(file)?;
    harness::write_summary_csv(&harness::summarize(&rows), output(&out)?)?;
    Ok(())
}

fn figure(args: FigureArgs) -> Result<(), Failure> {
    let ns = if args.ns.is_empty() { FIGURE_NS.to_vec() } else { args.ns };
    let rows = match &args.input {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
            harness::read_csv(file)?
        }
        None => harness::run_experiment(&args.which.grid(&ns), args.trials, args.seed)?,
    };
    let data = harness::emit_figure_data_for(&harness::summarize(&rows), args.which, &ns)?;
    harness::write_figure_csv(&data, output(&args.out)?)?;
    Ok(())
}

fn verdict(ok: bool, what: &str) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(Failure::Assertion(format!("{what} below threshold")))
    }
}

fn verify_check(check: Check) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    let w = |out: &mut io::StdoutLock, line: String| writeln!(out, "{line}").context("stdout");
    match check {
        Check::MinDefined {
            n,
            epsilon,
            trials,
            seed,
            max_rate,
        } => {
            let r = verify::verify_min_defined(n, epsilon, trials, seed)?;
            w(&mut out, "n,epsilon,trials,rounds,violations,rate,ci_lo,ci_hi,asserted".into())?;
            w(
                &mut out,
                format!(
                    "{},{},{},{},{},{:.6},{:.6},{:.6},{}",
                    r.n, r.epsilon, r.trials, r.rounds, r.violations, r.rate.estimate, r.rate.lo, r.rate.hi, r.asserted
                ),
            )?;
            let th = Thresholds {
                max_undefined_violation_rate: max_rate,
                ..Thresholds::default()
            };
            verdict(r.passes(&th), "defined-node rate")
        }
        Check::Drift {
            n,
            deltas,
            trials,
            seed,
            c,
            min_frequency,
        } => {
            let rows = verify::verify_drift(n, &deltas, trials, seed, c)?;
            w(&mut out, "n,delta,status,start_delta,trials,frequency,ci_lo,ci_hi".into())?;
            let th = Thresholds {
                min_drift_frequency: min_frequency,
                ..Thresholds::default()
            };
            let mut ok = true;
            for r in &rows {
                ok &= r.passes(&th);
                w(
                    &mut out,
                    format!(
                        "{},{},{},{:.6},{},{:.6},{:.6},{:.6}",
                        r.n,
                        r.delta,
                        r.status.label(),
                        r.start_delta,
                        r.frequency.trials,
                        r.frequency.estimate,
                        r.frequency.lo,
                        r.frequency.hi
                    ),
                )?;
            }
            verdict(ok, "drift frequency")
        }
        Check::Jump {
            n,
            trials,
            seed,
            min_alpha,
        } => {
            w(&mut out, "n,trials,alpha_hat,ci_lo,ci_hi".into())?;
            let mut ok = true;
            for n in n {
                let r = verify::estimate_jump(n, trials, seed)?;
                ok &= r.alpha_hat.estimate >= min_alpha;
                w(
                    &mut out,
                    format!(
                        "{},{},{:.6},{:.6},{:.6}",
                        r.n, r.alpha_hat.trials, r.alpha_hat.estimate, r.alpha_hat.lo, r.alpha_hat.hi
                    ),
                )?;
            }
            verdict(ok, "jump probability")
        }
        Check::Contraction { n, trials, seed } => {
            w(&mut out, "n,trials,start_zeros,median_rounds,checked_rounds,bound_rate".into())?;
            let mut ok = true;
            for n in n {
                let r = verify::verify_case1_contraction(n, trials, seed)?;
                ok &= r.median_rounds.is_some() && (r.checked_rounds == 0 || r.bound_holds.estimate >= 0.99);
                w(
                    &mut out,
                    format!(
                        "{},{},{},{},{},{}",
                        r.n,
                        r.trials,
                        r.start_zeros,
                        r.median_rounds.map_or(String::new(), |m| m.to_string()),
                        r.checked_rounds,
                        if r.checked_rounds == 0 {
                            String::new()
                        } else {
                            format!("{:.6}", r.bound_holds.estimate)
                        }
                    ),
                )?;
            }
            verdict(ok, "contraction")
        }
    }
}

fn evaluate(formula: Formula) -> Result<(), Failure> {
    let v = match formula {
        Formula::ReceiveExactly { n, n_t, k, j } => oracle::prob_receive_exactly(n, n_t, k, j)?,
        Formula::Le2 { n, n_t, k } => oracle::prob_le2(n, n_t, k)?,
        Formula::PickZero { n_t, x_t, k } => oracle::prob_pick_zero_pool(k, n_t, x_t)?,
        Formula::DriftExpansion { delta } => oracle::drift_expansion(delta)?,
        Formula::PaleyZygmund { mean2, mean4, theta } => oracle::paley_zygmund(mean2, mean4, theta)?,
    };
    println!("{v:.12e}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Summarize { input, out } => summarize(input, out),
        Command::Figure(args) => figure(args),
        Command::Verify(args) => verify_check(args.check),
        Command::Oracle { formula } => evaluate(formula),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
