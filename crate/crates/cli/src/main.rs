//! `mchtp`: experiment driver for sparse recovery with unknown sparsity.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage or configuration
//! error, 3 numerical domain error, 4 I/O error.

mod theory_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mchtp::experiment::{self, CheckStatus, EpsilonSetting, ExperimentConfig, Mode, RunOptions};
use mchtp::{Algorithm, SignalKind};

#[derive(Parser, Debug)]
#[command(name = "mchtp", version, about = "Sparse recovery with unknown sparsity: experiments and bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo benchmark over fresh random instances.
    Run(ExperimentArgs),
    /// Invariant suite on brute-force-sized instances.
    Validate(ExperimentArgs),
    /// Simulate the sparsity-sampling chain and compare phase-duration laws.
    ChainSim(ChainArgs),
    /// Evaluate a closed-form bound or distribution and print it as JSON.
    Theory(theory_cmd::TheoryArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StructureArg {
    Flat,
    Linear,
    Decaying,
    Gaussian,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Benchmark,
    Validate,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// True sparsity, or a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long)]
    kbar: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    /// Absolute threshold or `auto`.
    #[arg(long)]
    eps: Option<EpsilonSetting>,
    /// Iteration budget.
    #[arg(long = "T", visible_alias = "max-iter")]
    t: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    structure: Option<StructureArg>,
    /// Ratio of the decaying profile.
    #[arg(long)]
    alpha: Option<f64>,
    /// Signal norm.
    #[arg(long)]
    norm: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    normalize_columns: bool,
    /// Comma-separated algorithm names.
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<Algorithm>>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Also write one JSON trace per trial and algorithm.
    #[arg(long)]
    write_traces: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
    #[arg(long, hide = true)]
    corrupt_selection: bool,
}

#[derive(Args, Debug)]
struct ChainArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    kbar: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn build(&self, base: ExperimentConfig) -> anyhow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).map_err(|e| mchtp::Error::Config(format!("{}: {e}", path.display())))?
            }
            None => base,
        };
        macro_rules! set {
            ($field:ident, $val:expr) => {
                if let Some(v) = $val {
                    c.$field = v;
                }
            };
        }
        set!(m, self.m);
        set!(n, self.n);
        set!(k, self.k.clone());
        set!(mu, self.mu);
        set!(epsilon, self.eps);
        set!(max_iter, self.t);
        set!(trials, self.trials);
        set!(seed, self.seed);
        set!(noise_std, self.noise_std);
        set!(algorithms, self.algos.clone());
        if self.kbar.is_some() {
            c.kbar = self.kbar;
        }
        if let Some(norm) = self.norm {
            c.structure.norm = norm;
        }
        if let Some(s) = self.structure {
            c.structure.kind = match s {
                StructureArg::Flat => SignalKind::Flat,
                StructureArg::Linear => SignalKind::Linear,
                StructureArg::Gaussian => SignalKind::Gaussian,
                StructureArg::Decaying => SignalKind::Decaying {
                    alpha: self.alpha.unwrap_or(0.9),
                },
            };
        } else if let (Some(a), SignalKind::Decaying { .. }) = (self.alpha, c.structure.kind) {
            c.structure.kind = SignalKind::Decaying { alpha: a };
        }
        if let Some(m) = self.mode {
            c.mode = match m {
                ModeArg::Benchmark => Mode::Benchmark,
                ModeArg::Validate => Mode::Validate,
            };
        }
        c.normalize_columns |= self.normalize_columns;
        c.corrupt_selection |= self.corrupt_selection;
        Ok(c)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            out: self.out.clone(),
            jobs: self.jobs,
            write_traces: self.write_traces,
        }
    }
}

fn run_benchmark(args: &ExperimentArgs) -> anyhow::Result<ExitCode> {
    let cfg = args.build(ExperimentConfig::default())?;
    if cfg.mode == Mode::Validate {
        return run_validate(args, cfg);
    }
    if args.dry_run {
        println!("{}", serde_json::to_string_pretty(&cfg.resolved()?)?);
        return Ok(ExitCode::SUCCESS);
    }
    let report = experiment::run_benchmark(&cfg, &args.options())?;
    for s in &report.summaries {
        println!(
            "K={:<4} {:<6} mean MSD {:.3e}  median MSD {:.3e}  recovered {:>5.1}%  exact K {:>5.1}%  mean iters {:.1}{}",
            s.k,
            s.algorithm,
            s.mean_final_msd,
            s.median_final_msd,
            100.0 * s.recovery_rate,
            100.0 * s.exact_sparsity_rate,
            s.mean_iterations,
            s.mean_w.map(|w| format!("  mean W {w:.1}")).unwrap_or_default()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn run_validate(args: &ExperimentArgs, cfg: ExperimentConfig) -> anyhow::Result<ExitCode> {
    if args.dry_run {
        let mut c = cfg;
        c.mode = Mode::Validate;
        println!("{}", serde_json::to_string_pretty(&c.resolved()?)?);
        return Ok(ExitCode::SUCCESS);
    }
    let report = experiment::run_validation(&cfg, &args.options())?;
    for c in &report.checks {
        let tag = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Info => "INFO",
        };
        println!("{tag} {}: {}", c.name, c.detail);
    }
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run_chain(args: &ChainArgs) -> anyhow::Result<ExitCode> {
    let d = experiment::run_chain_sim(args.k, args.kbar, args.trials, args.seed, args.out.as_deref())?;
    println!("{}", serde_json::to_string_pretty(&d)?);
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<mchtp::Error>() {
        return match e {
            mchtp::Error::Config(_) | mchtp::Error::Dimension(_) | mchtp::Error::Json(_) => 2,
            mchtp::Error::Domain(_) => 3,
            mchtp::Error::Io(_) | mchtp::Error::Csv(_) => 4,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 4;
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run_benchmark(a),
        Command::Validate(a) => a
            .build(ExperimentConfig::validation())
            .and_then(|mut c| {
                c.mode = Mode::Validate;
                run_validate(a, c)
            }),
        Command::ChainSim(a) => run_chain(a),
        Command::Theory(a) => theory_cmd::run(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
