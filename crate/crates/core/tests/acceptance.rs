//! Acceptance suite. Every test prints one `criterion N PASS|FAIL` line to
//! stderr (bypassing the test harness capture) and then asserts it.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use mchtp::analysis::TrajectoryShape;
use mchtp::experiment::{
    distribution_check, run_benchmark, run_chain_sim, run_validation, BenchmarkReport, ExperimentConfig, RunOptions, ValidationReport,
};
use mchtp::theory::{epsilon_bound, epsilon_bound_structured, rho_gamma, t1_pmf, t3_pmf, delta_bound};
use mchtp::{
    audit_trace, run_htp, run_mchtp, AlgoConfig, Algorithm, InstanceSpec,
    ProblemInstance, SignalKind, SignalStructure, SupportSet, TraceAudit,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    let _ = writeln!(err, "criterion {criterion} {tag}: {detail}");
}

fn default_run() -> &'static BenchmarkReport {
    static RUN: OnceLock<BenchmarkReport> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = ExperimentConfig {
            algorithms: vec![Algorithm::Mchtp, Algorithm::Htp],
            seed: 20_000,
            ..ExperimentConfig::default()
        };
        assert_eq!((cfg.m, cfg.n, cfg.k[0], cfg.kbar(), cfg.mu, cfg.trials), (256, 512, 30, 128, 0.3, 50));
        run_benchmark(&cfg, &RunOptions::default()).expect("default-setting benchmark")
    })
}

fn validation_run() -> &'static (ValidationReport, f64) {
    static RUN: OnceLock<(ValidationReport, f64)> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = ExperimentConfig {
            seed: 30_000,
            ..ExperimentConfig::validation()
        };
        assert_eq!((cfg.n, cfg.m, cfg.k[0], cfg.kbar(), cfg.trials), (40, 24, 3, 6, 20));
        let start = Instant::now();
        let r = run_validation(&cfg, &RunOptions::default()).expect("validation suite");
        (r, start.elapsed().as_secs_f64())
    })
}

#[test]
fn criterion_1_default_setting_recovery() {
    let r = default_run();
    let of = |a: Algorithm| r.outcomes.iter().filter(move |o| o.algorithm == a);
    let mchtp: Vec<_> = of(Algorithm::Mchtp).collect();
    let htp: Vec<_> = of(Algorithm::Htp).collect();
    let mchtp_ok = mchtp.iter().filter(|o| o.recovered()).count();
    let wrong_k = mchtp.iter().filter(|o| o.recovered() && o.final_sparsity != 30).count();
    let htp_ok = htp.iter().filter(|o| o.recovered()).count();
    let summary = |a: Algorithm| r.summaries.iter().find(|s| s.algorithm == a).unwrap();
    let (m_med, h_med) = (summary(Algorithm::Mchtp).median_final_msd, summary(Algorithm::Htp).median_final_msd);
    let pass = mchtp_ok as f64 >= 0.9 * mchtp.len() as f64
        && wrong_k == 0
        && htp_ok as f64 >= 0.95 * htp.len() as f64
        && m_med <= 10.0 * h_med;
    report(
        1,
        pass,
        &format!(
            "MCHTP MSD <= 1e-12 in {mchtp_ok}/{} trials ({wrong_k} with K_T != 30), HTP in {htp_ok}/{}, \
             median MSD {m_med:.3e} vs {h_med:.3e}",
            mchtp.len(),
            htp.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_sparsity_trajectory_shape() {
    let r = default_run();
    let converged: Vec<_> = r
        .outcomes
        .iter()
        .filter(|o| o.algorithm == Algorithm::Mchtp && o.recovered() && o.final_sparsity == 30)
        .collect();
    // independent re-derivation of the shape from the raw trajectory
    let three_phase = converged
        .iter()
        .filter(|o| {
            let ks = &o.sparsity;
            let t1 = ks.iter().position(|&k| k >= 30);
            t1.is_some_and(|t| {
                ks[..=t].windows(2).all(|w| w[0] <= w[1]) && ks[t..].iter().all(|&k| k >= 30) && ks.last() == Some(&30)
            })
        })
        .count();
    let agree = converged
        .iter()
        .all(|o| o.three_phase == Some(TrajectoryShape::of_sequence(&o.sparsity, 30).is_three_phase()));
    let pass = !converged.is_empty() && three_phase as f64 >= 0.9 * converged.len() as f64 && agree;
    report(2, pass, &format!("three-phase shape in {three_phase}/{} converged trials", converged.len()));
    assert!(pass);
}

/// Closed-form pmf evaluated independently of the library.
fn oracle_t1(t: u64, k: f64, kbar: f64) -> f64 {
    let p = (k - 1.0) / kbar;
    let q = ((k - 2.0) / (kbar - 1.0)).max(0.0);
    if t == 1 {
        1.0 - p
    } else {
        p * q.powi(t as i32 - 2) * (1.0 - q)
    }
}

#[test]
fn criterion_3_phase_duration_laws() {
    let start = Instant::now();
    let d = run_chain_sim(5, 20, 10_000, 77, None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    // the library pmf must match the oracle before the TV numbers mean anything
    for t in 1..50 {
        assert!((t1_pmf(t, 5, 20).unwrap() - oracle_t1(t, 5.0, 20.0)).abs() < 1e-15);
        let r = 1.0f64 / 19.0;
        assert!((t3_pmf(t, 20).unwrap() - r * (1.0 - r).powi(t as i32 - 1)).abs() < 1e-15);
    }
    // Reference: the same statistic for 10,000 exact i.i.d. draws of the
    // geometric law, which measures the finite-sample floor of the TV distance.
    let r = 1.0 / 19.0;
    let geo = rand_distr::Geometric::new(r).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws: Vec<u64> = (0..10_000).map(|_| 1 + rng.sample(geo)).collect();
    let emp = mchtp::analysis::empirical_pmf(&draws).unwrap();
    let law = mchtp::analysis::tabulate_pmf(|t| Ok(r * (1.0f64 - r).powi(t as i32 - 1)), 1000, 1e-15).unwrap();
    let floor = mchtp::analysis::tv_distance(&emp, &law);
    let expected: f64 = law.values().map(|p| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * 1e4)).sqrt()).sum::<f64>() / 2.0;

    let t1_ok = d.t1_tv < 0.05;
    let pass = d.t3_tv < 0.02 && t1_ok && secs < 5.0;
    report(
        3,
        pass,
        &format!(
            "T3 TV {:.4} (need < 0.02; exact i.i.d. geometric draws give {floor:.4}, expected {expected:.4} at n = 10^4), \
             T1 TV {:.4} (< 0.05; no denominator discrepancy observed), \
             T1 mean empirical {:.4} vs pmf {:.4} vs closed-form term {:.4}, {secs:.2}s",
            d.t3_tv, d.t1_tv, d.t1_mean_empirical, d.t1_mean_pmf, d.t1_mean_closed_form
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_decay_inequality_audit() {
    let (r, secs) = validation_run();
    let total: usize = r.trials.iter().map(|t| t.decay.checks.len()).sum();
    let bad: usize = r.trials.iter().map(|t| t.decay.violated + t.decay.inconclusive).sum();
    let holds: usize = r.trials.iter().map(|t| t.decay.holds).sum();
    let vacuous: usize = r.trials.iter().map(|t| t.decay.vacuous).sum();
    let every_trial = r.trials.len() == 20 && r.trials.iter().all(|t| t.decay.passed());
    let pass = bad == 0 && every_trial && *secs <= 600.0;
    report(
        4,
        pass,
        &format!(
            "{total} candidate checks over {} trials: {holds} hold with finite bound, {vacuous} vacuous (RIC >= 1), \
             {bad} violated or inconclusive, {secs:.1}s",
            r.trials.len()
        ),
    );
    assert!(pass);
}

/// Exhaustive best `k`-support by least-squares residual, solved by SVD.
fn best_support(inst: &ProblemInstance, k: usize) -> SupportSet {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut all = Vec::new();
    rec(0, inst.n(), k, &mut Vec::new(), &mut all);
    let mut best = (f64::INFINITY, SupportSet::empty());
    for cols in all {
        let sub = inst.phi.select_columns(&cols);
        let coef = sub.clone().svd(true, true).solve(&inst.y, 1e-14).unwrap();
        let r = (&inst.y - sub * coef).norm_squared();
        if r < best.0 {
            best = (r, SupportSet::new(cols, inst.n()).unwrap());
        }
    }
    best.1
}

/// Exact recovery coefficient `max_{j ∉ S} ‖Φ_S⁺ φ_j‖₁`; below 1 the support
/// is recoverable by greedy selection for every signal on it.
fn exact_recovery_coefficient(inst: &ProblemInstance) -> f64 {
    let s = inst.support();
    let sub = inst.phi.select_columns(s.as_slice());
    let gram: DMatrix<f64> = sub.transpose() * &sub;
    let Some(inv) = gram.try_inverse() else { return f64::INFINITY };
    let pinv = inv * sub.transpose();
    (0..inst.n())
        .filter(|&j| !s.contains(j))
        .map(|j| (&pinv * DVector::from_column_slice(inst.phi.column(j))).abs().sum())
        .fold(0.0, f64::max)
}

struct ToyResult {
    accepted: usize,
    drawn: usize,
    htp_agree: usize,
    mchtp_agree: usize,
    audit: TraceAudit,
}

fn toy_run() -> &'static ToyResult {
    static RUN: OnceLock<ToyResult> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut res = ToyResult { accepted: 0, drawn: 0, htp_agree: 0, mchtp_agree: 0, audit: TraceAudit::default() };
        let mut seed = 50_000u64;
        while res.accepted < 200 {
            let spec = InstanceSpec {
                m: 8,
                n: 12,
                k: 2,
                seed,
                structure: SignalStructure::new(SignalKind::Gaussian, 1.0).unwrap(),
                noise_std: 0.0,
                normalize_columns: true,
                entries: None,
            };
            seed += 1;
            res.drawn += 1;
            let inst = spec.realize().unwrap();
            if exact_recovery_coefficient(&inst) >= 1.0 {
                continue;
            }
            res.accepted += 1;
            let best = best_support(&inst, 2);
            let htp = run_htp(&inst, 2, &AlgoConfig::new(4, 1.0, 1.0, 200, 0)).unwrap();
            if htp.final_estimate.support == best {
                res.htp_agree += 1;
            }
            let cfg = AlgoConfig::new(4, 1.0, 1e-8 * inst.y.norm_squared(), 300, spec.seed);
            let mc = run_mchtp(&inst, &cfg).unwrap();
            res.audit.merge(&audit_trace(&mc));
            if mc.final_sparsity == 2 && mc.final_estimate.support == best {
                res.mchtp_agree += 1;
            }
        }
        res
    })
}

#[test]
fn criterion_7_oracle_equivalence_at_toy_scale() {
    let r = toy_run();
    let pass = r.htp_agree as f64 >= 0.95 * r.accepted as f64 && r.mchtp_agree as f64 >= 0.95 * r.accepted as f64;
    report(
        7,
        pass,
        &format!(
            "exhaustive search agrees with HTP on {}/{} and with converged MCHTP on {}/{} instances \
             (exact recovery coefficient < 1; {} drawn)",
            r.htp_agree, r.accepted, r.mchtp_agree, r.accepted, r.drawn
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_selection_and_nesting_audit() {
    let mut audit = TraceAudit::default();
    for o in &default_run().outcomes {
        if let Some(a) = &o.audit {
            audit.merge(a);
        }
    }
    for t in &validation_run().0.trials {
        audit.merge(&t.audit);
    }
    audit.merge(&toy_run().audit);
    let pass = audit.passed() && audit.records > 0;
    report(
        5,
        pass,
        &format!(
            "{} iteration records: {} selection, {} nesting, {} sampling violations",
            audit.records,
            audit.selection_violations.len(),
            audit.nesting_violations.len(),
            audit.sampling_violations.len()
        ),
    );
    assert!(pass);
}

/// Magnitudes of a profile rescaled to norm `norm`, built element by element.
fn profile(kind: SignalKind, k: usize, norm: f64) -> (f64, f64) {
    let raw: Vec<f64> = (0..k)
        .map(|i| match kind {
            SignalKind::Flat => 1.0,
            SignalKind::Linear => (i + 1) as f64,
            SignalKind::Decaying { alpha } => alpha.powi(i as i32),
            SignalKind::Gaussian => unreachable!(),
        })
        .collect();
    let scale = norm / raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min) * scale;
    let max = raw.iter().copied().fold(0.0, f64::max) * scale;
    (min, max)
}

#[test]
fn criterion_6_theory_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let kind = match rng.random_range(0..3) {
            0 => SignalKind::Flat,
            1 => SignalKind::Linear,
            _ => SignalKind::Decaying { alpha: rng.random_range(0.05..=1.0) },
        };
        let k = rng.random_range(1..=40);
        let norm = rng.random_range(0.1..10.0);
        let (x_min, x_max) = profile(kind, k, norm);
        let bound = delta_bound(k, x_max / x_min).unwrap();
        // stay clear of the boundary, where the squared difference cancels
        let delta = rng.random_range(0.0..0.999) * bound;
        let a = epsilon_bound_structured(kind, delta, k, norm).unwrap();
        let b = epsilon_bound(delta, k, x_min, x_max).unwrap();
        worst = worst.max((a - b).abs() / b);
    }
    let mut pmf_err = 0.0f64;
    for (k, kbar) in [(1, 2), (2, 2), (3, 5), (5, 20), (30, 128), (64, 128)] {
        let s1: f64 = (1..=100_000).map(|t| t1_pmf(t, k, kbar).unwrap()).sum();
        let s3: f64 = (1..=100_000).map(|t| t3_pmf(t, kbar).unwrap()).sum();
        pmf_err = pmf_err.max((s1 - 1.0).abs()).max((s3 - 1.0).abs());
    }
    let edge = 1.0 / 3f64.sqrt();
    let below = rho_gamma(edge - 1e-9).unwrap().0;
    let above = rho_gamma(edge + 1e-9).unwrap().0;
    let oracle_rho = |d: f64| SQRT_2 * d / (1.0 - d * d).sqrt();
    let pass = worst <= 1e-12 && pmf_err <= 1e-10 && below < 1.0 && above > 1.0
        && (below - oracle_rho(edge - 1e-9)).abs() < 1e-15;
    report(
        6,
        pass,
        &format!(
            "structured vs generic threshold: max rel. diff {worst:.2e} over 1000 draws; pmf mass error {pmf_err:.2e}; \
             rho(1/sqrt3 -+ 1e-9) = {below:.12} / {above:.12}"
        ),
    );
    assert!(pass);
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn criterion_8_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        m: 48,
        n: 96,
        k: vec![4, 6],
        algorithms: Algorithm::ALL.to_vec(),
        kbar: Some(16),
        max_iter: 150,
        trials: 3,
        seed: 8,
        ..ExperimentConfig::default()
    };
    let vcfg = ExperimentConfig {
        trials: 2,
        ..ExperimentConfig::validation()
    };
    let mut runs = Vec::new();
    for (i, jobs) in [1, 1, 3].into_iter().enumerate() {
        let dir = tmp.path().join(format!("run{i}"));
        let opts = RunOptions { out: Some(dir.clone()), jobs, write_traces: true };
        run_benchmark(&cfg, &opts).unwrap();
        run_validation(&vcfg, &RunOptions { out: Some(dir.join("validate")), jobs, write_traces: false }).unwrap();
        run_chain_sim(3, 7, 500, 4, Some(&dir.join("chain"))).unwrap();
        let mut all = files(&dir);
        for sub in ["validate", "chain"] {
            for (name, bytes) in files(&dir.join(sub)) {
                all.insert(format!("{sub}/{name}"), bytes);
            }
        }
        runs.push(all);
    }
    let n_files = runs[0].len();
    let pass = n_files > 10 && runs[0] == runs[1] && runs[0] == runs[2];
    report(8, pass, &format!("{n_files} artifacts byte-identical across repeated runs and jobs = 1 / 3"));
    assert!(pass);
    // the in-memory distribution check is deterministic too
    assert_eq!(distribution_check(3, 7, 500, 4).unwrap(), distribution_check(3, 7, 500, 4).unwrap());
}
