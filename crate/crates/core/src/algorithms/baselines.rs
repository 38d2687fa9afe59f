use std::time::Instant;

use nalgebra::DVector;

use super::htp::htp_step;
use super::{elapsed_us, AlgoConfig, Algorithm, Records, RunTrace, SparseEstimate, SparsityLevel, StepRecord};
use crate::error::{domain, Result};
use crate::linalg::{least_squares_on_support, residual_energy, top_k_support, SupportSet};
use crate::problem::ProblemInstance;

/// Default MSP stopping tolerance relative to `‖y‖²`, used when `tol` is 0.
pub const MSP_DEFAULT_REL_TOL: f64 = 1e-6;

fn finish(
    algorithm: Algorithm,
    inst: &ProblemInstance,
    config: &AlgoConfig,
    steps: Vec<StepRecord>,
    elapsed: Vec<u64>,
    converged: bool,
    total_iterations: usize,
) -> RunTrace {
    let last = steps.last().expect("at least one record");
    RunTrace {
        algorithm,
        config: config.clone(),
        measurement_energy: inst.y.norm_squared(),
        final_estimate: last.estimate.clone(),
        final_sparsity: last.sparsity,
        converged,
        total_iterations,
        records: Records::Steps(steps),
        levels: Vec::new(),
        elapsed_us: elapsed,
    }
}

/// Graded HTP: iteration `t` runs an HTP step with sparsity `t`.
///
/// Stops when the residual reaches `tol` (never when `tol` is 0, except for
/// an all-zero measurement vector) or after `min(max_iter, kbar)` iterations.
/// The reported sparsity is the iteration count at the stop.
pub fn run_ghtp(inst: &ProblemInstance, config: &AlgoConfig) -> Result<RunTrace> {
    config.validate(inst.m(), inst.n())?;
    let y_energy = inst.y.norm_squared();
    let budget = config.max_iter.min(config.kbar);
    let mut x = DVector::zeros(inst.n());
    let mut steps = Vec::new();
    let mut elapsed = Vec::new();
    let mut converged = false;
    for t in 1..=budget {
        let start = Instant::now();
        let step = htp_step(&inst.phi, &inst.y, &x, t, config.mu)?;
        steps.push(StepRecord {
            t,
            sparsity: t,
            estimate: SparseEstimate::from_dense(&step.estimate, &step.support),
            residual: step.residual,
        });
        elapsed.push(elapsed_us(start));
        x = step.estimate;
        if (config.tol > 0.0 && step.residual <= config.tol) || y_energy == 0.0 {
            converged = true;
            break;
        }
    }
    let n = steps.len();
    Ok(finish(Algorithm::Ghtp, inst, config, steps, elapsed, converged, n))
}

struct Fit {
    support: SupportSet,
    estimate: DVector<f64>,
    residual: f64,
}

fn fit(inst: &ProblemInstance, support: SupportSet) -> Result<Fit> {
    let estimate = least_squares_on_support(&inst.phi, &inst.y, &support)?.estimate;
    let residual = residual_energy(&inst.phi, &estimate, &inst.y)?;
    Ok(Fit {
        support,
        estimate,
        residual,
    })
}

/// Subspace pursuit with sparsity `k`.
pub fn run_sp(inst: &ProblemInstance, k: usize, config: &AlgoConfig) -> Result<RunTrace> {
    run_sp_from(inst, k, config, None)
}

/// Subspace pursuit started from `initial` (default: top-`k` of `Φᵀy`).
///
/// Each iteration merges the current support with the top-`k` indices of the
/// residual correlation, fits on the union, prunes back to the `k` largest
/// coefficients and refits. The loop ends when the residual stops
/// decreasing, reaches `tol`, or `max_iter` is spent. Record 0 is the
/// initial fit; `total_iterations` counts loop passes.
pub fn run_sp_from(
    inst: &ProblemInstance,
    k: usize,
    config: &AlgoConfig,
    initial: Option<&SupportSet>,
) -> Result<RunTrace> {
    if k == 0 || 2 * k > inst.m() {
        return domain(format!("subspace pursuit needs 1 <= k <= M/2, got k={k}, M={}", inst.m()));
    }
    if config.max_iter == 0 {
        return domain("iteration budget must be positive");
    }
    let start = Instant::now();
    let init = match initial {
        Some(s) => {
            if s.len() != k {
                return domain("initial support must have exactly k elements");
            }
            s.clone()
        }
        None => top_k_support(&inst.phi.tr_mul_vec(&inst.y)?, k)?,
    };
    let mut cur = fit(inst, init)?;
    let mut steps = vec![StepRecord {
        t: 0,
        sparsity: k,
        estimate: SparseEstimate::from_dense(&cur.estimate, &cur.support),
        residual: cur.residual,
    }];
    let mut elapsed = vec![elapsed_us(start)];
    let mut iterations = 0;
    let mut converged = false;
    let done = |res: f64| res == 0.0 || (config.tol > 0.0 && res <= config.tol);
    if done(cur.residual) {
        converged = true;
    }
    while !converged && iterations < config.max_iter {
        let start = Instant::now();
        iterations += 1;
        let r = &inst.y - inst.phi.mul_vec(&cur.estimate)?;
        let expand = top_k_support(&inst.phi.tr_mul_vec(&r)?, k)?;
        let merged = fit(inst, cur.support.union(&expand))?;
        let pruned = top_k_support(&merged.estimate, k)?;
        let next = fit(inst, pruned)?;
        if next.residual >= cur.residual {
            converged = true;
            break;
        }
        cur = next;
        steps.push(StepRecord {
            t: iterations,
            sparsity: k,
            estimate: SparseEstimate::from_dense(&cur.estimate, &cur.support),
            residual: cur.residual,
        });
        elapsed.push(elapsed_us(start));
        if done(cur.residual) {
            converged = true;
        }
    }
    Ok(finish(Algorithm::Sp, inst, config, steps, elapsed, converged, iterations))
}

/// Modified subspace pursuit: runs SP for `k = 1, 2, …, kbar` and stops at
/// the first `k` whose converged residual is at most the tolerance
/// (`tol`, or `1e-6·‖y‖²` when `tol` is 0).
///
/// If no `k` qualifies, the best-residual run is returned with
/// `converged = false`.
pub fn run_msp(inst: &ProblemInstance, config: &AlgoConfig) -> Result<RunTrace> {
    config.validate(inst.m(), inst.n())?;
    let y_energy = inst.y.norm_squared();
    let tol = if config.tol > 0.0 {
        config.tol
    } else {
        MSP_DEFAULT_REL_TOL * y_energy
    };
    let inner_cfg = AlgoConfig {
        tol: 0.0,
        ..config.clone()
    };
    let kmax = config.kbar.min(inst.m() / 2);
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut elapsed = Vec::new();
    let mut levels = Vec::new();
    let mut total = 0;
    let mut best: Option<(f64, SparseEstimate, usize)> = None;
    let mut converged = false;
    for k in 1..=kmax {
        let sp = run_sp(inst, k, &inner_cfg)?;
        total += sp.total_iterations;
        let residual = *sp.residuals().last().expect("sp records");
        levels.push(SparsityLevel {
            k,
            iterations: sp.total_iterations,
            residual,
        });
        if let Records::Steps(inner) = sp.records {
            let offset = steps.len();
            steps.extend(inner.into_iter().enumerate().map(|(i, mut s)| {
                s.t = offset + i + 1;
                s
            }));
        }
        elapsed.extend(sp.elapsed_us);
        if best.as_ref().is_none_or(|b| residual < b.0) {
            best = Some((residual, sp.final_estimate.clone(), k));
        }
        if residual <= tol {
            converged = true;
            break;
        }
    }
    let (_, estimate, k) = best.expect("kbar >= 2 gives at least one level");
    Ok(RunTrace {
        algorithm: Algorithm::Msp,
        config: config.clone(),
        measurement_energy: y_energy,
        final_estimate: estimate,
        final_sparsity: k,
        converged,
        total_iterations: total,
        records: Records::Steps(steps),
        levels,
        elapsed_us: elapsed,
    })
}
