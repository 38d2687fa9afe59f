use std::time::Instant;

use nalgebra::DVector;

use super::{elapsed_us, AlgoConfig, Algorithm, Records, RunTrace, SparseEstimate, StepRecord};
use crate::error::{domain, Error, Result};
use crate::linalg::{ranked_top_k, residual_energy, ColumnQr, DenseMatrix, SupportSet};
use crate::problem::ProblemInstance;

/// Output of one HTP iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct HtpStep {
    pub support: SupportSet,
    pub estimate: DVector<f64>,
    /// `‖y − Φz‖²`.
    pub residual: f64,
    pub rank_deficient: bool,
}

/// `x_prev + μΦᵀ(y − Φx_prev)`.
pub(crate) fn proxy(phi: &DenseMatrix, y: &DVector<f64>, x_prev: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
    if x_prev.len() != phi.cols() {
        return Err(Error::Dimension(format!(
            "estimate length {} != matrix cols {}",
            x_prev.len(),
            phi.cols()
        )));
    }
    let r = y - phi.mul_vec(x_prev)?;
    let mut g = phi.tr_mul_vec(&r)?;
    g *= mu;
    g += x_prev;
    Ok(g)
}

fn check_k(phi: &DenseMatrix, k: usize) -> Result<()> {
    if k > phi.rows() {
        return domain(format!("sparsity {k} exceeds the number of measurements {}", phi.rows()));
    }
    Ok(())
}

/// HTP iterations for several sparsities from one shared proxy.
///
/// The supports are prefixes of one ranked list, so a single QR of the
/// largest support serves every candidate.
pub(crate) fn htp_steps(
    phi: &DenseMatrix,
    y: &DVector<f64>,
    x_prev: &DVector<f64>,
    ks: &[usize],
    mu: f64,
) -> Result<Vec<HtpStep>> {
    for &k in ks {
        check_k(phi, k)?;
    }
    if y.len() != phi.rows() {
        return Err(Error::Dimension("measurement length does not match matrix rows".into()));
    }
    let g = proxy(phi, y, x_prev, mu)?;
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let ranked = ranked_top_k(&g, kmax)?;
    let qr = ColumnQr::new(phi, &ranked);
    ks.iter()
        .map(|&k| {
            let fit = qr.solve_prefix(phi, y, k);
            let estimate = fit.scatter(phi.cols());
            let residual = residual_energy(phi, &estimate, y)?;
            Ok(HtpStep {
                support: SupportSet::from_unsorted(fit.cols),
                estimate,
                residual,
                rank_deficient: fit.rank_deficient,
            })
        })
        .collect()
}

/// One HTP iteration: top-`k` support of the gradient proxy, then least
/// squares on that support.
pub fn htp_step(phi: &DenseMatrix, y: &DVector<f64>, x_prev: &DVector<f64>, k: usize, mu: f64) -> Result<HtpStep> {
    Ok(htp_steps(phi, y, x_prev, &[k], mu)?.remove(0))
}

/// HTP with a fixed sparsity `k`, started from zero.
///
/// Stops after `max_iter` iterations, when the support repeats (every later
/// iterate would be identical), or when the residual drops to `tol`.
pub fn run_htp(inst: &ProblemInstance, k: usize, config: &AlgoConfig) -> Result<RunTrace> {
    config.validate_common()?;
    check_k(&inst.phi, k)?;
    let n = inst.n();
    let mut x = DVector::zeros(n);
    let mut prev_support: Option<SupportSet> = None;
    let mut steps = Vec::new();
    let mut elapsed = Vec::new();
    let mut converged = false;
    for t in 1..=config.max_iter {
        let start = Instant::now();
        let step = htp_step(&inst.phi, &inst.y, &x, k, config.mu)?;
        let repeated = prev_support.as_ref() == Some(&step.support);
        steps.push(StepRecord {
            t,
            sparsity: k,
            estimate: SparseEstimate::from_dense(&step.estimate, &step.support),
            residual: step.residual,
        });
        elapsed.push(elapsed_us(start));
        let small = config.tol > 0.0 && step.residual <= config.tol;
        x = step.estimate;
        if repeated || small || k == 0 {
            converged = true;
            break;
        }
        prev_support = Some(step.support);
    }
    let last = steps.last().expect("at least one iteration");
    Ok(RunTrace {
        algorithm: Algorithm::Htp,
        config: config.clone(),
        measurement_energy: inst.y.norm_squared(),
        final_estimate: last.estimate.clone(),
        final_sparsity: k,
        converged,
        total_iterations: steps.len(),
        records: Records::Steps(steps),
        levels: Vec::new(),
        elapsed_us: elapsed,
    })
}
