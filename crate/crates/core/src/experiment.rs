//! Seeded Monte Carlo driver: benchmark runs, the desk-scale validation
//! suite, and chain simulations, together with their CSV/JSON artifacts.
//!
//! Outputs depend only on the configuration, never on the worker count or
//! wall clock. Timings go to a separate `timing.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    audit_trace, run_ghtp, run_htp, run_mchtp, run_msp, run_sp, AlgoConfig, Algorithm, RunTrace, TraceAudit,
};
use crate::analysis::{
    chain_simulate_t1_t3, detect_phases, empirical_pmf, mean, median, msd_curve, tabulate_pmf, tv_distance,
    PhaseReport, Pmf, TrajectoryShape,
};
use crate::error::{Error, Result};
use crate::problem::{signal_ratio, InstanceSpec, ProblemInstance, SignalKind, SignalStructure};
use crate::theory::{
    decay_bound_check, epsilon_bound, t1_pmf, t3_pmf, DecayReport, RicTable, DEFAULT_RIC_GUARD,
};

/// Benchmark-mode threshold when none is given, relative to `‖y‖²`.
pub const BENCHMARK_EPS_REL: f64 = 1e-8;
/// Stopping tolerance of GHTP and MSP relative to `‖y‖²`.
pub const DEFAULT_TOL_REL: f64 = 1e-10;
/// A trial counts as a recovery when its final MSD is at most this.
pub const RECOVERY_MSD: f64 = 1e-12;
/// Fraction of the theoretical threshold ceiling used by `auto` in validate mode.
pub const VALIDATE_EPS_FRACTION: f64 = 0.5;
/// Chain-simulation trials behind the distribution checks of validate mode.
pub const VALIDATE_CHAIN_TRIALS: usize = 10_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Benchmark,
    Validate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonKeyword {
    Auto,
}

/// MCHTP threshold: an absolute value or `"auto"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSetting {
    Absolute(f64),
    Keyword(EpsilonKeyword),
}

impl Default for EpsilonSetting {
    fn default() -> Self {
        Self::Keyword(EpsilonKeyword::Auto)
    }
}

impl std::str::FromStr for EpsilonSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(Self::Keyword(EpsilonKeyword::Auto));
        }
        s.trim()
            .parse::<f64>()
            .map(Self::Absolute)
            .map_err(|_| Error::Config(format!("epsilon must be a number or 'auto', got '{s}'")))
    }
}

/// Everything that determines the artifacts of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    /// True sparsities; every one gets `trials` instances.
    pub k: Vec<usize>,
    pub structure: SignalStructure,
    pub algorithms: Vec<Algorithm>,
    /// Sparsity bound; `None` means `M/2`.
    pub kbar: Option<usize>,
    pub mu: f64,
    pub epsilon: EpsilonSetting,
    /// Iteration budget `T`.
    pub max_iter: usize,
    pub trials: usize,
    /// Trial `i` uses seed `seed + i` for its instance and its MCHTP draws.
    pub seed: u64,
    pub noise_std: f64,
    pub normalize_columns: bool,
    /// GHTP/MSP residual tolerance relative to `‖y‖²`.
    pub tol_rel: f64,
    pub mode: Mode,
    /// Negative-control hook forwarded to MCHTP.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub corrupt_selection: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 256,
            n: 512,
            k: vec![30],
            structure: SignalStructure {
                kind: SignalKind::Gaussian,
                norm: 1.0,
            },
            algorithms: vec![Algorithm::Mchtp, Algorithm::Htp, Algorithm::Ghtp],
            kbar: None,
            mu: 0.3,
            epsilon: EpsilonSetting::default(),
            max_iter: 1000,
            trials: 50,
            seed: 0,
            noise_std: 0.0,
            normalize_columns: false,
            tol_rel: DEFAULT_TOL_REL,
            mode: Mode::Benchmark,
            corrupt_selection: false,
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for validate mode.
    pub fn validation() -> Self {
        Self {
            m: 24,
            n: 40,
            k: vec![3],
            algorithms: vec![Algorithm::Mchtp],
            kbar: Some(6),
            mu: 1.0,
            max_iter: 100,
            trials: 20,
            mode: Mode::Validate,
            ..Self::default()
        }
    }

    pub fn kbar(&self) -> usize {
        self.kbar.unwrap_or(self.m / 2)
    }

    /// Fills in defaults and applies the validate-mode overrides
    /// (`μ = 1`, no noise).
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        c.kbar = Some(c.kbar());
        if c.mode == Mode::Validate {
            c.mu = 1.0;
            c.noise_std = 0.0;
        }
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.m == 0 || self.n == 0 || self.m > self.n {
            return fail(format!("need 1 <= M <= N, got M={}, N={}", self.m, self.n));
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.k.is_empty() {
            return fail("at least one sparsity K is required".into());
        }
        if self.algorithms.is_empty() {
            return fail("at least one algorithm is required".into());
        }
        let kbar = self.kbar();
        for &k in &self.k {
            if k == 0 || k > kbar {
                return fail(format!("need 1 <= K <= K̄ = {kbar}, got K={k}"));
            }
            if self.algorithms.contains(&Algorithm::Sp) && 2 * k > self.m {
                return fail(format!("subspace pursuit needs K <= M/2, got K={k}"));
            }
        }
        if let EpsilonSetting::Absolute(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return fail(format!("epsilon must be positive, got {e}"));
            }
        }
        if self.tol_rel.is_nan() || self.tol_rel < 0.0 {
            return fail("tol_rel must be non-negative".into());
        }
        self.structure.validate()?;
        let probe = AlgoConfig::new(kbar, self.mu, 1.0, self.max_iter, 0);
        probe.validate(self.m, self.n)
    }

    fn instance_spec(&self, k: usize, seed: u64) -> InstanceSpec {
        InstanceSpec {
            m: self.m,
            n: self.n,
            k,
            seed,
            structure: self.structure,
            noise_std: self.noise_std,
            normalize_columns: self.normalize_columns,
            entries: None,
        }
    }
}

/// Where and how to write artifacts; none of this affects their content.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    /// Also write one `trace_<trial>_<algo>.json` per run.
    pub write_traces: bool,
}

/// Result of one algorithm on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Absolute MCHTP threshold used for this instance.
    pub epsilon: f64,
    pub final_msd: f64,
    pub final_sparsity: usize,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phases: Option<PhaseReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub three_phase: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<TraceAudit>,
    #[serde(skip)]
    pub msd: Vec<f64>,
    #[serde(skip)]
    pub residual: Vec<f64>,
    #[serde(skip)]
    pub sparsity: Vec<usize>,
    #[serde(skip)]
    pub elapsed_us: u64,
}

impl TrialOutcome {
    pub fn recovered(&self) -> bool {
        self.final_msd <= RECOVERY_MSD
    }
}

/// Aggregates over the trials of one `(K, algorithm)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoSummary {
    pub k: usize,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub mean_final_msd: f64,
    pub median_final_msd: f64,
    /// Fraction of trials with final MSD <= [`RECOVERY_MSD`].
    pub recovery_rate: f64,
    /// Fraction of trials whose final sparsity equals `K`.
    pub exact_sparsity_rate: f64,
    /// Fraction of trials with the algorithm's own convergence flag set.
    pub convergence_rate: f64,
    pub mean_iterations: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub three_phase_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_violations: Option<usize>,
}

impl AlgoSummary {
    pub fn from_outcomes(k: usize, algorithm: Algorithm, outs: &[&TrialOutcome]) -> Self {
        let n = outs.len() as f64;
        let rate = |f: &dyn Fn(&TrialOutcome) -> bool| outs.iter().filter(|o| f(o)).count() as f64 / n;
        let msd: Vec<f64> = outs.iter().map(|o| o.final_msd).collect();
        let ws: Vec<f64> = outs.iter().filter_map(|o| o.phases.and_then(|p| p.w)).map(|w| w as f64).collect();
        let is_mchtp = algorithm == Algorithm::Mchtp;
        Self {
            k,
            algorithm,
            trials: outs.len(),
            mean_final_msd: mean(&msd).unwrap_or(f64::NAN),
            median_final_msd: median(&msd).unwrap_or(f64::NAN),
            recovery_rate: rate(&|o| o.recovered()),
            exact_sparsity_rate: rate(&|o| o.final_sparsity == k),
            convergence_rate: rate(&|o| o.converged),
            mean_iterations: outs.iter().map(|o| o.iterations as f64).sum::<f64>() / n,
            mean_w: if is_mchtp { mean(&ws) } else { None },
            three_phase_rate: if is_mchtp {
                let conv: Vec<_> = outs.iter().filter(|o| o.phases.is_some_and(|p| p.converged)).collect();
                (!conv.is_empty())
                    .then(|| conv.iter().filter(|o| o.three_phase == Some(true)).count() as f64 / conv.len() as f64)
            } else {
                None
            },
            audit_violations: is_mchtp.then(|| {
                outs.iter()
                    .filter_map(|o| o.audit.as_ref())
                    .map(|a| a.selection_violations.len() + a.nesting_violations.len() + a.sampling_violations.len())
                    .sum()
            }),
        }
    }
}

/// One row of `pmf.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmfRow {
    pub k: usize,
    pub variable: String,
    pub value: u64,
    pub empirical: f64,
    pub theoretical: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionCheck {
    pub k: usize,
    pub kbar: usize,
    pub samples: usize,
    pub t1_tv: f64,
    pub t3_tv: f64,
    pub t1_mean_empirical: f64,
    /// The `(1 − 1/K̄)(K − 1)/(K̄ − K + 1)` term of the waiting time.
    pub t1_mean_closed_form: f64,
    /// Mean of the `T₁` pmf itself.
    pub t1_mean_pmf: f64,
    pub t3_mean_empirical: f64,
    pub t3_mean_theory: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: ExperimentConfig,
    pub summaries: Vec<AlgoSummary>,
    pub outcomes: Vec<TrialOutcome>,
    #[serde(skip)]
    pub pmf: Vec<PmfRow>,
}

/// Turns `‖y‖²` into an absolute threshold in benchmark mode.
fn benchmark_epsilon(setting: EpsilonSetting, y_energy: f64) -> f64 {
    match setting {
        EpsilonSetting::Absolute(e) => e,
        EpsilonSetting::Keyword(EpsilonKeyword::Auto) => BENCHMARK_EPS_REL * y_energy,
    }
}

fn run_algorithm(algo: Algorithm, inst: &ProblemInstance, k: usize, cfg: &AlgoConfig) -> Result<RunTrace> {
    match algo {
        Algorithm::Mchtp => run_mchtp(inst, cfg),
        Algorithm::Htp => run_htp(inst, k, cfg),
        Algorithm::Ghtp => run_ghtp(inst, cfg),
        Algorithm::Sp => run_sp(inst, k, cfg),
        Algorithm::Msp => run_msp(inst, cfg),
    }
}

fn outcome_of(
    trace: &RunTrace,
    inst: &ProblemInstance,
    k: usize,
    trial: usize,
    epsilon: f64,
) -> TrialOutcome {
    let curve = msd_curve(trace, &inst.x);
    let sparsity = trace.sparsities();
    let is_mchtp = trace.algorithm == Algorithm::Mchtp;
    TrialOutcome {
        k,
        trial,
        seed: inst.seed,
        algorithm: trace.algorithm,
        epsilon,
        final_msd: trace.final_estimate.sq_distance(&inst.x) / inst.n() as f64,
        final_sparsity: trace.final_sparsity,
        converged: trace.converged,
        iterations: trace.total_iterations,
        phases: is_mchtp.then(|| detect_phases(trace, k)),
        three_phase: is_mchtp.then(|| TrajectoryShape::of_sequence(&sparsity, k).is_three_phase()),
        audit: is_mchtp.then(|| audit_trace(trace)),
        msd: curve.msd,
        residual: curve.residual,
        sparsity,
        elapsed_us: trace.elapsed_us.iter().sum(),
    }
}

fn trace_file_name(cfg: &ExperimentConfig, k: usize, trial: usize, algo: Algorithm) -> String {
    if cfg.k.len() == 1 {
        format!("trace_{trial}_{algo}.json")
    } else {
        format!("trace_{trial}_{algo}_k{k}.json")
    }
}

fn run_trial(cfg: &ExperimentConfig, opts: &RunOptions, k: usize, trial: usize) -> Result<Vec<TrialOutcome>> {
    let seed = cfg.seed.wrapping_add(trial as u64);
    let inst = ProblemInstance::generate(&cfg.instance_spec(k, seed))?;
    let y_energy = inst.y.norm_squared();
    let epsilon = benchmark_epsilon(cfg.epsilon, y_energy);
    let mut algo_cfg = AlgoConfig::new(cfg.kbar(), cfg.mu, epsilon, cfg.max_iter, seed)
        .with_tol(cfg.tol_rel * y_energy);
    algo_cfg.corrupt_selection = cfg.corrupt_selection;
    cfg.algorithms
        .iter()
        .map(|&algo| {
            // HTP's own stopping rule is support repetition; a residual
            // tolerance would only truncate its trace
            let mut c = algo_cfg.clone();
            if matches!(algo, Algorithm::Htp | Algorithm::Mchtp) {
                c.tol = 0.0;
            }
            let mut trace = run_algorithm(algo, &inst, k, &c)?;
            let out = outcome_of(&trace, &inst, k, trial, epsilon);
            if opts.write_traces {
                if let Some(dir) = &opts.out {
                    trace.elapsed_us.clear();
                    let path = dir.join(trace_file_name(cfg, k, trial, algo));
                    write_json(&path, &TraceFile { config: cfg, instance_seed: seed, trace: &trace })?;
                }
            }
            Ok(out)
        })
        .collect()
}

#[derive(Serialize)]
struct TraceFile<'a> {
    config: &'a ExperimentConfig,
    instance_seed: u64,
    trace: &'a RunTrace,
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every configured algorithm on `trials` fresh instances per `K`.
///
/// Trials execute on `opts.jobs` workers and are collected in trial order.
pub fn run_benchmark(config: &ExperimentConfig, opts: &RunOptions) -> Result<BenchmarkReport> {
    let cfg = config.resolved()?;
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir)?;
    }
    let jobs: Vec<(usize, usize)> = cfg.k.iter().flat_map(|&k| (0..cfg.trials).map(move |t| (k, t))).collect();
    let start = Instant::now();
    let per_trial: Vec<Result<Vec<TrialOutcome>>> =
        with_pool(opts.jobs, || jobs.par_iter().map(|&(k, t)| run_trial(&cfg, opts, k, t)).collect())?;
    let wall_us = start.elapsed().as_micros() as u64;
    let mut outcomes = Vec::new();
    for r in per_trial {
        outcomes.extend(r?);
    }

    let mut summaries = Vec::new();
    let mut pmf = Vec::new();
    for &k in &cfg.k {
        for &algo in &cfg.algorithms {
            let outs: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.k == k && o.algorithm == algo).collect();
            summaries.push(AlgoSummary::from_outcomes(k, algo, &outs));
        }
        pmf.extend(phase_pmf_rows(&cfg, k, &outcomes)?);
    }
    let report = BenchmarkReport {
        config: cfg,
        summaries,
        outcomes,
        pmf,
    };
    if let Some(dir) = &opts.out {
        write_benchmark_artifacts(dir, &report, wall_us)?;
    }
    Ok(report)
}

/// Empirical `T₁`/`T₃` laws of converged MCHTP runs next to the closed forms.
fn phase_pmf_rows(cfg: &ExperimentConfig, k: usize, outcomes: &[TrialOutcome]) -> Result<Vec<PmfRow>> {
    let kbar = cfg.kbar();
    let phases: Vec<PhaseReport> = outcomes
        .iter()
        .filter(|o| o.k == k && o.algorithm == Algorithm::Mchtp)
        .filter_map(|o| o.phases.filter(|p| p.converged))
        .collect();
    let t1: Vec<u64> = phases.iter().filter_map(|p| p.t1).map(|t| t as u64).collect();
    let t3: Vec<u64> = phases.iter().filter_map(|p| p.t3).filter(|&t| t > 0).map(|t| t as u64).collect();
    let mut rows = Vec::new();
    rows.extend(pmf_rows(k, "T1", &t1, |t| t1_pmf(t, k, kbar))?);
    rows.extend(pmf_rows(k, "T3", &t3, |t| t3_pmf(t, kbar))?);
    Ok(rows)
}

fn pmf_rows(k: usize, variable: &str, samples: &[u64], law: impl Fn(u64) -> Result<f64>) -> Result<Vec<PmfRow>> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let emp = empirical_pmf(samples)?;
    let max = *emp.keys().next_back().expect("non-empty");
    let mut rows = Vec::new();
    for value in 1..=max {
        rows.push(PmfRow {
            k,
            variable: variable.to_string(),
            value,
            empirical: emp.get(&value).copied().unwrap_or(0.0),
            theoretical: law(value)?,
        });
    }
    Ok(rows)
}

/// Compares chain-simulated `T₁`/`T₃` samples with their closed-form laws.
pub fn distribution_check(k: usize, kbar: usize, trials: usize, seed: u64) -> Result<(DistributionCheck, Vec<PmfRow>)> {
    let s = chain_simulate_t1_t3(k, kbar, trials, seed)?;
    let emp1 = empirical_pmf(&s.t1)?;
    let emp3 = empirical_pmf(&s.t3)?;
    let max1 = *emp1.keys().next_back().expect("non-empty");
    let max3 = *emp3.keys().next_back().expect("non-empty");
    let law1: Pmf = tabulate_pmf(|t| t1_pmf(t, k, kbar), max1, 1e-12)?;
    let law3: Pmf = tabulate_pmf(|t| t3_pmf(t, kbar), max3, 1e-12)?;
    let d = crate::theory::PhaseDistributions::new(k, kbar)?;
    let avg = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len() as f64;
    let check = DistributionCheck {
        k,
        kbar,
        samples: trials,
        t1_tv: tv_distance(&emp1, &law1),
        t3_tv: tv_distance(&emp3, &law3),
        t1_mean_empirical: avg(&s.t1),
        t1_mean_closed_form: d.p / (1.0 - d.q),
        t1_mean_pmf: 1.0 + d.p / (1.0 - d.q),
        t3_mean_empirical: avg(&s.t3),
        t3_mean_theory: kbar as f64 - 1.0,
    };
    let mut rows = pmf_rows(k, "T1", &s.t1, |t| t1_pmf(t, k, kbar))?;
    rows.extend(pmf_rows(k, "T3", &s.t3, |t| t3_pmf(t, kbar))?);
    Ok((check, rows))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Reported but not asserted: its preconditions are not met.
    Info,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

/// Per-trial facts gathered by the validation suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationTrial {
    pub trial: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// The threshold came from the theoretical ceiling rather than the fallback.
    pub epsilon_guaranteed: bool,
    pub final_sparsity: usize,
    pub audit: TraceAudit,
    pub decay: DecayReport,
    pub shape: TrajectoryShape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config: ExperimentConfig,
    pub checks: Vec<CheckResult>,
    pub trials: Vec<ValidationTrial>,
    pub distributions: DistributionCheck,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
}

/// The validate-mode threshold and whether it carries the monotonicity guarantee.
fn validate_epsilon(cfg: &ExperimentConfig, inst: &ProblemInstance, k: usize, rics: &RicTable) -> Result<(f64, bool)> {
    let fallback = BENCHMARK_EPS_REL * inst.y.norm_squared();
    match cfg.epsilon {
        EpsilonSetting::Absolute(e) => {
            let ceiling = theory_ceiling(inst, k, cfg.kbar(), rics)?;
            Ok((e, ceiling.is_some_and(|c| e < c)))
        }
        EpsilonSetting::Keyword(EpsilonKeyword::Auto) => Ok(match theory_ceiling(inst, k, cfg.kbar(), rics)? {
            Some(c) => (VALIDATE_EPS_FRACTION * c, true),
            None => (fallback, false),
        }),
    }
}

/// The threshold ceiling at `δ_{2K̄+K}` (upper bound), if that RIC admits one.
fn theory_ceiling(inst: &ProblemInstance, k: usize, kbar: usize, rics: &RicTable) -> Result<Option<f64>> {
    let delta = rics.get(2 * kbar + k)?.upper;
    let r = signal_ratio(&inst.x)?;
    Ok(epsilon_bound(delta, k, r.x_min, r.x_max).ok())
}

/// Runs the invariant suite on brute-force-sized instances: trace audits,
/// decay inequalities with exact RICs, phase-I monotonicity, and the
/// phase-duration laws.
pub fn run_validation(config: &ExperimentConfig, opts: &RunOptions) -> Result<ValidationReport> {
    let mut cfg = config.clone();
    cfg.mode = Mode::Validate;
    let cfg = cfg.resolved()?;
    let k = cfg.k[0];
    let kbar = cfg.kbar();
    let max_order = 2 * kbar + k;
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir)?;
    }
    let trials: Vec<Result<ValidationTrial>> = with_pool(opts.jobs, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let seed = cfg.seed.wrapping_add(trial as u64);
                let inst = ProblemInstance::generate(&cfg.instance_spec(k, seed))?;
                let rics = RicTable::brute_force(&inst.phi, max_order, DEFAULT_RIC_GUARD)?;
                let (epsilon, guaranteed) = validate_epsilon(&cfg, &inst, k, &rics)?;
                let mut ac = AlgoConfig::new(kbar, 1.0, epsilon, cfg.max_iter, seed);
                ac.corrupt_selection = cfg.corrupt_selection;
                let trace = run_mchtp(&inst, &ac)?;
                Ok(ValidationTrial {
                    trial,
                    seed,
                    epsilon,
                    epsilon_guaranteed: guaranteed,
                    final_sparsity: trace.final_sparsity,
                    audit: audit_trace(&trace),
                    decay: decay_bound_check(&trace, &inst, &rics)?,
                    shape: TrajectoryShape::of_sequence(&trace.sparsities(), k),
                })
            })
            .collect()
    })?;
    let trials: Vec<ValidationTrial> = trials.into_iter().collect::<Result<_>>()?;
    let (dist, pmf) = distribution_check(k, kbar, VALIDATE_CHAIN_TRIALS, cfg.seed)?;

    let mut checks = Vec::new();
    let mut audit = TraceAudit::default();
    for t in &trials {
        audit.merge(&t.audit);
    }
    checks.push(CheckResult {
        name: "selection-and-nesting".into(),
        status: if audit.passed() { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!(
            "{} records, {} selection / {} nesting / {} sampling violations",
            audit.records,
            audit.selection_violations.len(),
            audit.nesting_violations.len(),
            audit.sampling_violations.len()
        ),
    });

    let sum = |f: fn(&DecayReport) -> usize| trials.iter().map(|t| f(&t.decay)).sum::<usize>();
    let (holds, vacuous, violated, inconclusive) =
        (sum(|d| d.holds), sum(|d| d.vacuous), sum(|d| d.violated), sum(|d| d.inconclusive));
    checks.push(CheckResult {
        name: "decay-inequality".into(),
        status: if violated + inconclusive == 0 { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!("{holds} hold, {vacuous} vacuous (RIC >= 1), {violated} violated, {inconclusive} inconclusive"),
    });

    let guaranteed: Vec<&ValidationTrial> = trials.iter().filter(|t| t.epsilon_guaranteed).collect();
    let monotone = |t: &ValidationTrial| t.shape.nondecreasing_until_t1 && t.shape.stays_above_after_t1;
    let ok_all = trials.iter().filter(|t| monotone(t)).count();
    checks.push(if guaranteed.is_empty() {
        CheckResult {
            name: "phase-one-monotonicity".into(),
            status: CheckStatus::Info,
            detail: format!(
                "not guaranteed: the RIC admits no threshold ceiling in any trial; observed in {ok_all}/{} trials",
                trials.len()
            ),
        }
    } else {
        let ok = guaranteed.iter().filter(|t| monotone(t)).count();
        CheckResult {
            name: "phase-one-monotonicity".into(),
            status: if ok == guaranteed.len() { CheckStatus::Pass } else { CheckStatus::Fail },
            detail: format!("{ok}/{} guaranteed trials monotone", guaranteed.len()),
        }
    });

    checks.push(CheckResult {
        name: "t3-law".into(),
        status: if dist.t3_tv < 0.02 { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!("TV distance {:.4} over {} chain samples", dist.t3_tv, dist.samples),
    });
    checks.push(CheckResult {
        name: "t1-law".into(),
        status: if dist.t1_tv < 0.05 { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!(
            "TV distance {:.4}; empirical mean {:.4}, pmf mean {:.4}, closed-form term {:.4}",
            dist.t1_tv, dist.t1_mean_empirical, dist.t1_mean_pmf, dist.t1_mean_closed_form
        ),
    });

    let report = ValidationReport {
        config: cfg,
        checks,
        trials,
        distributions: dist,
    };
    if let Some(dir) = &opts.out {
        write_json(&dir.join("validate.json"), &report)?;
        write_pmf_csv(&dir.join("pmf.csv"), &report.config, &pmf)?;
    }
    Ok(report)
}

/// Chain-only simulation of the phase-duration laws.
pub fn run_chain_sim(k: usize, kbar: usize, trials: usize, seed: u64, out: Option<&Path>) -> Result<DistributionCheck> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let (check, rows) = distribution_check(k, kbar, trials, seed)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        #[derive(Serialize)]
        struct ChainConfig {
            k: usize,
            kbar: usize,
            trials: usize,
            seed: u64,
        }
        let cfg = ChainConfig { k, kbar, trials, seed };
        write_json(&dir.join("summary.json"), &serde_json::json!({ "config": cfg, "distributions": check }))?;
        write_pmf_csv(&dir.join("pmf.csv"), &cfg, &rows)?;
    }
    Ok(check)
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Opens a CSV file whose first line is `# config: <json>`.
fn csv_with_config<C: Serialize + ?Sized>(path: &Path, config: &C) -> Result<csv::Writer<BufWriter<File>>> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# config: {}", serde_json::to_string(config)?)?;
    Ok(csv::Writer::from_writer(f))
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_pmf_csv<C: Serialize + ?Sized>(path: &Path, config: &C, rows: &[PmfRow]) -> Result<()> {
    let mut w = csv_with_config(path, config)?;
    w.write_record(["k", "variable", "value", "empirical", "theoretical"])?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.variable.clone(),
            r.value.to_string(),
            fmt_f64(r.empirical),
            fmt_f64(r.theoretical),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_benchmark_artifacts(dir: &Path, report: &BenchmarkReport, wall_us: u64) -> Result<()> {
    let cfg = &report.config;
    write_json(
        &dir.join("summary.json"),
        &serde_json::json!({ "config": cfg, "summaries": report.summaries }),
    )?;

    let mut w = csv_with_config(&dir.join("trials.csv"), cfg)?;
    w.write_record([
        "k", "trial", "seed", "algo", "epsilon", "final_msd", "final_sparsity", "converged", "iterations",
    ])?;
    for o in &report.outcomes {
        w.write_record([
            o.k.to_string(),
            o.trial.to_string(),
            o.seed.to_string(),
            o.algorithm.to_string(),
            fmt_f64(o.epsilon),
            fmt_f64(o.final_msd),
            o.final_sparsity.to_string(),
            o.converged.to_string(),
            o.iterations.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv_with_config(&dir.join("msd.csv"), cfg)?;
    w.write_record(["k", "trial", "algo", "t", "msd", "residual", "sparsity"])?;
    for o in &report.outcomes {
        for (i, (m, r)) in o.msd.iter().zip(&o.residual).enumerate() {
            w.write_record([
                o.k.to_string(),
                o.trial.to_string(),
                o.algorithm.to_string(),
                (i + 1).to_string(),
                fmt_f64(*m),
                fmt_f64(*r),
                o.sparsity[i].to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv_with_config(&dir.join("phases.csv"), cfg)?;
    w.write_record(["k", "trial", "T1", "T2", "T3", "W", "converged", "three_phase"])?;
    for o in report.outcomes.iter().filter(|o| o.algorithm == Algorithm::Mchtp) {
        let p = o.phases.expect("MCHTP outcomes carry phases");
        w.write_record([
            o.k.to_string(),
            o.trial.to_string(),
            opt(p.t1),
            opt(p.t2),
            opt(p.t3),
            opt(p.w),
            p.converged.to_string(),
            o.three_phase.unwrap_or(false).to_string(),
        ])?;
    }
    w.flush()?;

    write_pmf_csv(&dir.join("pmf.csv"), cfg, &report.pmf)?;

    let timing: Vec<_> = report
        .outcomes
        .iter()
        .map(|o| serde_json::json!({ "k": o.k, "trial": o.trial, "algo": o.algorithm, "elapsed_us": o.elapsed_us }))
        .collect();
    write_json(&dir.join("timing.json"), &serde_json::json!({ "wall_us": wall_us, "runs": timing }))?;
    Ok(())
}
