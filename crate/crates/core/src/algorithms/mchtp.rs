use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::htp::htp_steps;
use super::{elapsed_us, AlgoConfig, Algorithm, IterationRecord, Records, RunTrace, SparseEstimate};
use crate::error::Result;
use crate::problem::{seeded_rng, ProblemInstance, RngStream};

/// Residual-energy differences at or below `SELECTION_TIE_TOL · ‖y‖²` are
/// rounding noise. In the "small difference" branch such a tie goes to the
/// smaller sparsity, the candidate with the larger error in exact arithmetic.
pub const SELECTION_TIE_TOL: f64 = 1e-12;

/// Relative tolerance (times `‖y‖²`) used when auditing recorded energies.
pub const AUDIT_TOL: f64 = 1e-9;

/// The MCHTP choice between candidate 0 (carried-over sparsity `k0`) and
/// candidate 1 (sampled sparsity `k1`).
///
/// If `|e1 − e0| > epsilon` the lower error wins, otherwise the higher error
/// wins. Exact ties in the first branch keep candidate 0.
pub fn select_candidate(e0: f64, e1: f64, k0: usize, k1: usize, epsilon: f64, tie_tol: f64) -> u8 {
    let delta = (e1 - e0).abs();
    if delta > epsilon {
        u8::from(e1 < e0)
    } else if delta <= tie_tol {
        u8::from(k1 < k0)
    } else {
        u8::from(e1 > e0)
    }
}

/// Uniform draw from `{1, …, kbar} \ {exclude}`.
pub(crate) fn sample_other<R: Rng>(rng: &mut R, kbar: usize, exclude: usize) -> usize {
    if (1..=kbar).contains(&exclude) {
        let v = rng.random_range(1..kbar);
        if v >= exclude {
            v + 1
        } else {
            v
        }
    } else {
        rng.random_range(1..=kbar)
    }
}

/// Multiple choice hard thresholding pursuit.
///
/// Each iteration runs one HTP step for the carried-over sparsity and for a
/// sparsity drawn uniformly from the remaining values in `1..=kbar`, both from
/// the previous estimate, and keeps one of the two according to
/// [`select_candidate`]. The first iteration compares against the empty
/// support, whose estimate is zero with error `‖y‖²`.
pub fn run_mchtp(inst: &ProblemInstance, config: &AlgoConfig) -> Result<RunTrace> {
    config.validate(inst.m(), inst.n())?;
    let n = inst.n();
    let y_energy = inst.y.norm_squared();
    let tie_tol = SELECTION_TIE_TOL * y_energy;
    let mut rng = seeded_rng(config.seed, RngStream::Algorithm);

    let mut x: DVector<f64> = DVector::zeros(n);
    let mut k_prev = 0usize;
    let mut unchanged = 0usize;
    let mut records = Vec::with_capacity(config.max_iter);
    let mut elapsed = Vec::with_capacity(config.max_iter);
    let mut stopped_early = false;

    for t in 1..=config.max_iter {
        let start = Instant::now();
        let k0 = k_prev;
        let k1 = sample_other(&mut rng, config.kbar, k0);
        let mut cands = htp_steps(&inst.phi, &inst.y, &x, &[k0, k1], config.mu)?;
        let c1 = cands.pop().expect("two candidates");
        let c0 = cands.pop().expect("two candidates");
        let delta_e = (c1.residual - c0.residual).abs();
        let mut chosen = select_candidate(c0.residual, c1.residual, k0, k1, config.epsilon, tie_tol);
        if config.corrupt_selection {
            chosen = 1 - chosen;
        }
        let (k_t, pick) = if chosen == 0 { (k0, &c0) } else { (k1, &c1) };
        let estimate = SparseEstimate::from_dense(&pick.estimate, &pick.support);
        let residual = pick.residual;
        let rank_deficient = c0.rank_deficient || c1.rank_deficient;
        x = pick.estimate.clone();

        unchanged = if k_t == k_prev { unchanged + 1 } else { 0 };
        k_prev = k_t;
        records.push(IterationRecord {
            t,
            k0,
            k1,
            support0: c0.support,
            support1: c1.support,
            e0: c0.residual,
            e1: c1.residual,
            delta_e,
            chosen,
            k_t,
            estimate,
            rank_deficient,
        });
        elapsed.push(elapsed_us(start));

        if config.early_stop && residual <= config.tol && unchanged >= config.stable_window {
            stopped_early = true;
            break;
        }
    }

    let last = records.last().expect("at least one iteration");
    Ok(RunTrace {
        algorithm: Algorithm::Mchtp,
        config: config.clone(),
        measurement_energy: y_energy,
        final_estimate: last.estimate.clone(),
        final_sparsity: last.k_t,
        converged: stopped_early || records.len() == config.max_iter,
        total_iterations: records.len(),
        records: Records::Mchtp(records),
        levels: Vec::new(),
        elapsed_us: elapsed,
    })
}

/// Per-trace tally of the selection-rule and candidate-nesting checks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceAudit {
    pub records: usize,
    /// Records whose choice contradicts the threshold rule.
    pub selection_violations: Vec<usize>,
    /// Records whose candidate supports are not nested or whose larger
    /// candidate has the larger error.
    pub nesting_violations: Vec<usize>,
    /// Records where the sampled sparsity equals the carried one, lies
    /// outside `1..=kbar`, or the chosen sparsity exceeds `kbar`.
    pub sampling_violations: Vec<usize>,
}

impl TraceAudit {
    pub fn passed(&self) -> bool {
        self.selection_violations.is_empty()
            && self.nesting_violations.is_empty()
            && self.sampling_violations.is_empty()
    }

    pub fn merge(&mut self, other: &TraceAudit) {
        self.records += other.records;
        self.selection_violations.extend(&other.selection_violations);
        self.nesting_violations.extend(&other.nesting_violations);
        self.sampling_violations.extend(&other.sampling_violations);
    }
}

/// Checks every record of an MCHTP trace against the selection contract and
/// the nesting of its two candidates. Energies are compared with a slack of
/// [`AUDIT_TOL`]` · ‖y‖²`. Baseline traces audit trivially.
pub fn audit_trace(trace: &RunTrace) -> TraceAudit {
    let Some(records) = trace.mchtp_records() else {
        return TraceAudit::default();
    };
    let slack = AUDIT_TOL * trace.measurement_energy;
    let eps = trace.config.epsilon;
    let mut audit = TraceAudit {
        records: records.len(),
        ..TraceAudit::default()
    };
    for r in records {
        let chosen = r.chosen_energy();
        let lo = r.e0.min(r.e1);
        let hi = r.e0.max(r.e1);
        let delta_ok = (r.delta_e - (r.e1 - r.e0).abs()).abs() <= slack;
        let rule_ok = if r.delta_e > eps {
            chosen <= lo + slack
        } else {
            chosen >= hi - slack
        };
        let k_ok = r.k_t == if r.chosen == 0 { r.k0 } else { r.k1 };
        if !(delta_ok && rule_ok && k_ok) {
            audit.selection_violations.push(r.t);
        }

        let (small, large, e_small, e_large) = if r.k0 < r.k1 {
            (&r.support0, &r.support1, r.e0, r.e1)
        } else {
            (&r.support1, &r.support0, r.e1, r.e0)
        };
        let sizes_ok = r.support0.len() == r.k0 && r.support1.len() == r.k1;
        if !(sizes_ok && small.is_subset_of(large) && e_large <= e_small + slack) {
            audit.nesting_violations.push(r.t);
        }

        if r.k0 == r.k1 || r.k1 == 0 || r.k1 > trace.config.kbar || r.k_t > trace.config.kbar {
            audit.sampling_violations.push(r.t);
        }
    }
    audit
}
