//! Closed-form convergence constants, phase-duration laws and an exhaustive
//! restricted-isometry-constant calculator.
//!
//! Notation: `delta` is a restricted isometry constant, `k` the true
//! sparsity, `kbar` the sparsity upper bound handed to MCHTP.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::RunTrace;
use crate::error::{domain, Error, Result};
use crate::linalg::{least_squares_on_support, ranked_top_k, DenseMatrix};
use crate::problem::{ProblemInstance, SignalKind};

/// Largest number of supports [`ric_bruteforce`] will enumerate by default.
pub const DEFAULT_RIC_GUARD: u64 = 1_000_000;

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&delta) {
        return domain(format!("restricted isometry constant must lie in [0, 1), got {delta}"));
    }
    Ok(())
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return domain("sparsity must be at least 1");
    }
    Ok(())
}

/// `a_K(δ) = (1 − δ)/√K − 3√2·δ`.
pub fn a_coef(delta: f64, k: usize) -> f64 {
    (1.0 - delta) / (k as f64).sqrt() - 3.0 * SQRT_2 * delta
}

/// `b(δ) = 5√2·δ`.
pub fn b_coef(delta: f64) -> f64 {
    5.0 * SQRT_2 * delta
}

/// Contraction and amplification factors `(ρ, γ)`:
/// `ρ = √2·δ/√(1 − δ²)`, `γ = √2/√(1 − δ²)`.
pub fn rho_gamma(delta: f64) -> Result<(f64, f64)> {
    check_delta(delta)?;
    let s = (1.0 - delta * delta).sqrt();
    Ok((SQRT_2 * delta / s, SQRT_2 / s))
}

/// Largest RIC for which the sparsity estimate provably never decreases
/// below the true sparsity: `1/(1 + (3 + 5R)·√(2K))`.
pub fn delta_bound(k: usize, ratio: f64) -> Result<f64> {
    check_k(k)?;
    if !ratio.is_finite() || ratio < 1.0 {
        return domain(format!("magnitude ratio must be >= 1, got {ratio}"));
    }
    Ok(1.0 / (1.0 + (3.0 + 5.0 * ratio) * (2.0 * k as f64).sqrt()))
}

/// Threshold ceiling `((1 − δ)/(1 + δ)²)·(a_K(δ)·x_min − b(δ)·x_max)²`.
///
/// Fails when `a_K·x_min − b·x_max <= 0`, i.e. when `δ` violates
/// [`delta_bound`] for this signal.
pub fn epsilon_bound(delta: f64, k: usize, x_min: f64, x_max: f64) -> Result<f64> {
    check_delta(delta)?;
    check_k(k)?;
    if !(x_min > 0.0 && x_max >= x_min) {
        return domain("need 0 < x_min <= x_max");
    }
    let inner = a_coef(delta, k) * x_min - b_coef(delta) * x_max;
    if inner <= 0.0 {
        return domain(format!("delta {delta} violates the RIC condition for K={k}, R={}", x_max / x_min));
    }
    Ok((1.0 - delta) / (1.0 + delta).powi(2) * inner * inner)
}

/// [`epsilon_bound`] written directly in terms of `‖x‖` for the flat, linear
/// and decaying magnitude profiles.
pub fn epsilon_bound_structured(kind: SignalKind, delta: f64, k: usize, x_norm: f64) -> Result<f64> {
    check_delta(delta)?;
    check_k(k)?;
    if x_norm.is_nan() || x_norm <= 0.0 {
        return domain("signal norm must be positive");
    }
    let kf = k as f64;
    let a = a_coef(delta, k);
    let b = b_coef(delta);
    let lead = (1.0 - delta) / (1.0 + delta).powi(2) * x_norm * x_norm;
    let (inner, scale) = match kind {
        SignalKind::Flat => (a - b, 1.0 / kf),
        SignalKind::Linear => (a - kf * b, 6.0 / (kf * (kf + 1.0) * (2.0 * kf + 1.0))),
        SignalKind::Decaying { alpha } => {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return domain(format!("decay ratio must lie in (0, 1], got {alpha}"));
            }
            // (1 − α²)/(1 − α^{2K}) as 1/Σα^{2i}: no cancellation near α = 1
            let a2 = alpha * alpha;
            let energy = 1.0 / (0..k).fold((0.0, 1.0), |(s, p), _| (s + p, p * a2)).0;
            (a * alpha.powi(k as i32 - 1) - b, energy)
        }
        SignalKind::Gaussian => return domain("no closed-form threshold for gaussian magnitudes"),
    };
    if inner <= 0.0 {
        return domain(format!("delta {delta} violates the RIC condition for this structure"));
    }
    Ok(lead * scale * inner * inner)
}

/// Parameters of the phase-duration laws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDistributions {
    /// `(K − 1)/K̄`
    pub p: f64,
    /// `(K − 2)/(K̄ − 1)`, clamped at 0 for `K = 1`.
    pub q: f64,
    /// `1/(K̄ − 1)`
    pub r: f64,
}

impl PhaseDistributions {
    pub fn new(k: usize, kbar: usize) -> Result<Self> {
        check_k(k)?;
        if kbar < 2 {
            return domain("sparsity bound must be at least 2");
        }
        if k > kbar {
            return domain(format!("sparsity {k} exceeds its bound {kbar}"));
        }
        let kf = k as f64;
        let kb = kbar as f64;
        Ok(Self {
            p: (kf - 1.0) / kb,
            q: ((kf - 2.0) / (kb - 1.0)).max(0.0),
            r: 1.0 / (kb - 1.0),
        })
    }
}

/// `P(T₁ = t)`: `1 − p` at `t = 1`, `p·q^(t−2)·(1 − q)` afterwards.
pub fn t1_pmf(t: u64, k: usize, kbar: usize) -> Result<f64> {
    if t == 0 {
        return domain("phase durations start at 1");
    }
    let d = PhaseDistributions::new(k, kbar)?;
    Ok(if t == 1 {
        1.0 - d.p
    } else {
        d.p * d.q.powi((t - 2) as i32) * (1.0 - d.q)
    })
}

/// `P(T₃ = t) = r(1 − r)^(t−1)`.
pub fn t3_pmf(t: u64, kbar: usize) -> Result<f64> {
    if t == 0 {
        return domain("phase durations start at 1");
    }
    if kbar < 2 {
        return domain("sparsity bound must be at least 2");
    }
    let r = 1.0 / (kbar as f64 - 1.0);
    Ok(r * (1.0 - r).powi((t - 1) as i32))
}

/// Mean of [`t1_pmf`] by direct summation up to `cutoff`.
pub fn t1_mean_numeric(k: usize, kbar: usize, cutoff: u64) -> Result<f64> {
    let mut mean = 0.0;
    for t in 1..=cutoff {
        mean += t as f64 * t1_pmf(t, k, kbar)?;
    }
    Ok(mean)
}

/// Upper bound on the length of the fluctuation phase:
/// `⌊max(0, ln G / ln ρ)⌋` with `G = √(ε(1 − δ))/((1 + δ)‖x‖)`.
pub fn t2_upper_bound(epsilon: f64, delta: f64, x_norm: f64) -> Result<u64> {
    check_delta(delta)?;
    if !(epsilon > 0.0 && x_norm > 0.0) {
        return domain("epsilon and the signal norm must be positive");
    }
    let (rho, _) = rho_gamma(delta)?;
    if rho >= 1.0 {
        return domain(format!("contraction violated: rho = {rho} >= 1"));
    }
    let g = (epsilon * (1.0 - delta)).sqrt() / ((1.0 + delta) * x_norm);
    if rho == 0.0 {
        return Ok(0);
    }
    Ok((g.ln() / rho.ln()).max(0.0).floor() as u64)
}

/// The three terms of the waiting-time expression and their sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaitingTime {
    /// `(1 − 1/K̄)(K − 1)/(K̄ − K + 1)`, i.e. `p/(1 − q)`.
    pub t1_term: f64,
    pub t2_term: u64,
    /// `K̄ − 1`, the mean of `T₃`.
    pub t3_term: f64,
    pub total: f64,
    /// Mean of the `T₁` law computed from its pmf, for comparison with `t1_term`.
    pub t1_mean_exact: f64,
}

pub fn expected_waiting_time(k: usize, kbar: usize, epsilon: f64, delta: f64, x_norm: f64) -> Result<WaitingTime> {
    let d = PhaseDistributions::new(k, kbar)?;
    let kf = k as f64;
    let kb = kbar as f64;
    let t1_term = (1.0 - 1.0 / kb) * (kf - 1.0) / (kb - kf + 1.0);
    let t2_term = t2_upper_bound(epsilon, delta, x_norm)?;
    let t3_term = kb - 1.0;
    Ok(WaitingTime {
        t1_term,
        t2_term,
        t3_term,
        total: t1_term + t2_term as f64 + t3_term,
        t1_mean_exact: 1.0 + d.p / (1.0 - d.q),
    })
}

/// Binomial coefficient, saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

fn support_deviation(gram: &DMatrix<f64>, cols: &[usize], scratch: &mut DMatrix<f64>) -> f64 {
    let s = cols.len();
    if s == 1 {
        return (gram[(cols[0], cols[0])] - 1.0).abs();
    }
    for (a, &i) in cols.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            scratch[(a, b)] = gram[(i, j)];
        }
    }
    let eig = scratch.clone().symmetric_eigenvalues();
    let lo = eig.min();
    let hi = eig.max();
    (hi - 1.0).abs().max((1.0 - lo).abs())
}

/// Advances `idx` to the next combination of values in `lo..n`.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let s = idx.len();
    for pos in (0..s).rev() {
        if idx[pos] < n - s + pos {
            idx[pos] += 1;
            for later in pos + 1..s {
                idx[later] = idx[later - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact restricted isometry constant `δ_s`: the largest deviation from 1 of
/// an eigenvalue of `Φ_SᵀΦ_S` over every support of size `s`.
///
/// Orders above `N` are clamped to `N`. Refuses to enumerate more than
/// [`DEFAULT_RIC_GUARD`] supports.
pub fn ric_bruteforce(phi: &DenseMatrix, s: usize) -> Result<f64> {
    ric_bruteforce_with_guard(phi, s, DEFAULT_RIC_GUARD)
}

pub fn ric_bruteforce_with_guard(phi: &DenseMatrix, s: usize, guard: u64) -> Result<f64> {
    let gram = phi.gram();
    ric_from_gram(&gram, s, guard)
}

fn ric_from_gram(gram: &DMatrix<f64>, s: usize, guard: u64) -> Result<f64> {
    let n = gram.ncols();
    if s == 0 {
        return domain("RIC order must be at least 1");
    }
    let s = s.min(n);
    let count = binomial(n, s);
    if count > guard {
        return domain(format!(
            "{count} supports of size {s} exceed the enumeration limit {guard}; use a smaller instance"
        ));
    }
    // Split by the smallest index; max is exact, so the reduction order is irrelevant.
    let best = (0..=n - s)
        .into_par_iter()
        .map(|first| {
            let mut scratch = DMatrix::zeros(s, s);
            let mut rest: Vec<usize> = (first + 1..first + s).collect();
            let mut cols = vec![0; s];
            let mut worst = 0.0f64;
            loop {
                cols[0] = first;
                cols[1..].copy_from_slice(&rest);
                worst = worst.max(support_deviation(gram, &cols, &mut scratch));
                if s == 1 || !next_combination_from(&mut rest, first + 1, n) {
                    break;
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// [`next_combination`] over values `lo..n`.
fn next_combination_from(idx: &mut [usize], lo: usize, n: usize) -> bool {
    for v in idx.iter_mut() {
        *v -= lo;
    }
    let more = next_combination(idx, n - lo);
    for v in idx.iter_mut() {
        *v += lo;
    }
    more
}

/// Rigorous bounds on a restricted isometry constant. Equal bounds mean the
/// value was enumerated exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RicBounds {
    pub lower: f64,
    pub upper: f64,
}

impl RicBounds {
    pub fn exact(v: f64) -> Self {
        Self { lower: v, upper: v }
    }

    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }
}

/// `δ_s` for `s = 1..=max_order`.
///
/// Orders whose support count is within the guard are enumerated exactly.
/// The others get bounds from monotonicity in `s`: the nearest exact order
/// below gives a lower bound, `δ_N` (a single support) an upper bound, and
/// any order above `M` has a singular Gram matrix, hence `δ_s >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RicTable {
    pub n: usize,
    pub m: usize,
    pub values: Vec<RicBounds>,
}

impl RicTable {
    pub fn brute_force(phi: &DenseMatrix, max_order: usize, guard: u64) -> Result<Self> {
        let n = phi.cols();
        let m = phi.rows();
        let gram = phi.gram();
        let delta_n = ric_from_gram(&gram, n, guard.max(1))?;
        let mut values = Vec::with_capacity(max_order);
        let mut floor = 0.0f64;
        for s in 1..=max_order.min(n) {
            let b = if binomial(n, s) <= guard {
                let v = ric_from_gram(&gram, s, guard)?;
                floor = v;
                RicBounds::exact(v)
            } else {
                let lower = if s > m { floor.max(1.0) } else { floor };
                RicBounds { lower, upper: delta_n.max(lower) }
            };
            values.push(b);
        }
        Ok(Self { n, m, values })
    }

    /// A table of exactly known values, `values[s − 1] = δ_s`.
    pub fn from_exact(n: usize, m: usize, values: &[f64]) -> Self {
        Self {
            n,
            m,
            values: values.iter().copied().map(RicBounds::exact).collect(),
        }
    }

    /// Bounds on `δ_s`; orders above `N` read `δ_N`.
    pub fn get(&self, s: usize) -> Result<RicBounds> {
        let s = s.min(self.n);
        if s == 0 {
            return Ok(RicBounds::exact(0.0));
        }
        self.values
            .get(s - 1)
            .copied()
            .ok_or_else(|| Error::Domain(format!("RIC table has no entry for order {s}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayStatus {
    /// Holds even with the RIC lower bounds.
    Holds,
    /// `δ` in the denominator is at least 1: the bound is infinite.
    Vacuous,
    /// Fails even with the RIC upper bounds.
    Violated,
    /// Neither certified nor refuted by the available RIC bounds.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    pub t: usize,
    pub candidate: u8,
    pub chosen: bool,
    /// `‖x_i^t − x‖`
    pub lhs: f64,
    /// Right-hand side evaluated with the RIC lower bounds.
    pub rhs: f64,
    /// `rhs − lhs`
    pub margin: f64,
    pub status: DecayStatus,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub checks: Vec<DecayCheck>,
    pub holds: usize,
    pub vacuous: usize,
    pub violated: usize,
    pub inconclusive: usize,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.violated == 0 && self.inconclusive == 0
    }
}

/// `‖x_S̄‖` where `S` is the top-`k` support of `x`.
fn tail_norm(x: &DVector<f64>, k: usize) -> f64 {
    let k = k.min(x.len());
    let keep = ranked_top_k(x, k).expect("k <= len");
    let kept: f64 = keep.iter().map(|&i| x[i] * x[i]).sum();
    (x.norm_squared() - kept).max(0.0).sqrt()
}

fn decay_rhs(num: f64, den: f64, prev: f64, tail: f64) -> f64 {
    if den >= 1.0 {
        return f64::INFINITY;
    }
    SQRT_2 * (num * prev + tail) / (1.0 - den * den).sqrt()
}

/// Replays an MCHTP trace against the per-candidate decay inequality
///
/// `‖x_i^t − x‖ <= ρ_{t,i}‖x^{t−1} − x‖ + γ_{t,i}‖x_{Γ̄_{t,i}}‖`,
///
/// with `ρ_{t,i} = √2·δ_{K_{t,i}+K_{t−1}+K}/√(1 − δ²_{K_{t,i}+K})`,
/// `γ_{t,i} = √2/√(1 − δ²_{K_{t,i}+K})` and `Γ_{t,i}` the top-`K_{t,i}`
/// support of `x`. The selected candidate's entry is the inequality for `x^t`.
pub fn decay_bound_check(trace: &RunTrace, inst: &ProblemInstance, rics: &RicTable) -> Result<DecayReport> {
    let records = trace
        .mchtp_records()
        .ok_or_else(|| Error::Domain("decay check needs an MCHTP trace".into()))?;
    let k_true = inst.sparsity;
    let n = inst.n();
    let slack = 1e-9 * inst.x.norm().max(1e-300);
    let mut report = DecayReport::default();
    let mut x_prev: DVector<f64> = DVector::zeros(n);
    let mut k_prev = 0usize;
    for r in records {
        let prev_err = (&x_prev - &inst.x).norm();
        for (cand, (k_i, support)) in [(r.k0, &r.support0), (r.k1, &r.support1)].into_iter().enumerate() {
            let est = least_squares_on_support(&inst.phi, &inst.y, support)?.estimate;
            let lhs = (&est - &inst.x).norm();
            let tail = tail_norm(&inst.x, k_i);
            let num = rics.get(k_i + k_prev + k_true)?;
            let den = rics.get(k_i + k_true)?;
            let rhs_lo = decay_rhs(num.lower, den.lower, prev_err, tail);
            let rhs_hi = decay_rhs(num.upper, den.upper, prev_err, tail);
            let status = if den.lower >= 1.0 {
                DecayStatus::Vacuous
            } else if lhs <= rhs_lo + slack {
                DecayStatus::Holds
            } else if lhs > rhs_hi + slack {
                DecayStatus::Violated
            } else {
                DecayStatus::Inconclusive
            };
            match status {
                DecayStatus::Holds => report.holds += 1,
                DecayStatus::Vacuous => report.vacuous += 1,
                DecayStatus::Violated => report.violated += 1,
                DecayStatus::Inconclusive => report.inconclusive += 1,
            }
            report.checks.push(DecayCheck {
                t: r.t,
                candidate: cand as u8,
                chosen: cand as u8 == r.chosen,
                lhs,
                rhs: rhs_lo,
                margin: rhs_lo - lhs,
                status,
            });
        }
        x_prev = r.estimate.to_dense(n);
        k_prev = r.k_t;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn rho_gamma_values() {
        let (rho, gamma) = rho_gamma(0.0).unwrap();
        assert_eq!(rho, 0.0);
        assert_relative_eq!(gamma, SQRT_2);
        let (rho, gamma) = rho_gamma(0.1).unwrap();
        assert_relative_eq!(rho, 0.142134, epsilon = 1e-5);
        assert_relative_eq!(gamma, 1.421338, epsilon = 1e-5);
        let (rho, _) = rho_gamma(1.0 / 3f64.sqrt()).unwrap();
        assert_relative_eq!(rho, 1.0, epsilon = 1e-12);
        assert!(rho_gamma(1.0).is_err());
        assert!(rho_gamma(-0.1).is_err());
    }

    #[test]
    fn delta_bound_values() {
        assert_relative_eq!(delta_bound(1, 1.0).unwrap(), 0.08122, epsilon = 1e-5);
        for k in [1, 5, 30] {
            let flat = 1.0 / (1.0 + 8.0 * (2.0 * k as f64).sqrt());
            assert_relative_eq!(delta_bound(k, 1.0).unwrap(), flat, max_relative = 1e-15);
            let kf = k as f64;
            let lin = 1.0 / (1.0 + (3.0 + 5.0 * kf) * (2.0 * kf).sqrt());
            assert_relative_eq!(delta_bound(k, kf).unwrap(), lin, max_relative = 1e-15);
        }
        assert!(delta_bound(0, 1.0).is_err());
        assert!(delta_bound(3, 0.5).is_err());
    }

    #[test]
    fn epsilon_bound_at_zero_delta() {
        assert_relative_eq!(epsilon_bound(0.0, 4, 0.3, 0.9).unwrap(), 0.09 / 4.0, max_relative = 1e-14);
        assert!(epsilon_bound(0.2, 4, 0.3, 0.9).is_err());
    }

    #[test]
    fn structured_linear_k2() {
        let e = epsilon_bound_structured(SignalKind::Linear, 0.0, 2, 1.0).unwrap();
        assert_relative_eq!(e, 0.1, max_relative = 1e-14);
        let x_min = 0.2f64.sqrt();
        assert_relative_eq!(epsilon_bound(0.0, 2, x_min, 2.0 * x_min).unwrap(), 0.1, max_relative = 1e-14);
    }

    #[test]
    fn structured_flat_matches_printed_form() {
        let (d, k, norm) = (0.01, 3, 2.0);
        let a = a_coef(d, k);
        let b = b_coef(d);
        let printed = (1.0 - d) * norm * norm / (k as f64 * (1.0 + d).powi(2)) * (a - b).powi(2);
        assert_relative_eq!(
            epsilon_bound_structured(SignalKind::Flat, d, k, norm).unwrap(),
            printed,
            max_relative = 1e-14
        );
    }

    #[test]
    fn decaying_limit_is_flat() {
        let flat = epsilon_bound_structured(SignalKind::Flat, 0.005, 4, 1.0).unwrap();
        let one = epsilon_bound_structured(SignalKind::Decaying { alpha: 1.0 }, 0.005, 4, 1.0).unwrap();
        let near = epsilon_bound_structured(SignalKind::Decaying { alpha: 1.0 - 1e-9 }, 0.005, 4, 1.0).unwrap();
        assert_relative_eq!(one, flat, max_relative = 1e-14);
        assert_relative_eq!(near, flat, max_relative = 1e-6);
        assert!(epsilon_bound_structured(SignalKind::Gaussian, 0.0, 4, 1.0).is_err());
    }

    #[test]
    fn decaying_delta_bound_is_tighter() {
        for k in [2, 5, 10] {
            for alpha in [0.3f64, 0.7, 0.95] {
                let r = alpha.powi(1 - k as i32);
                assert!(delta_bound(k, r).unwrap() <= delta_bound(k, 1.0).unwrap());
            }
        }
    }

    #[test]
    fn t1_pmf_values() {
        assert_relative_eq!(t1_pmf(1, 3, 5).unwrap(), 0.6, max_relative = 1e-15);
        assert_relative_eq!(t1_pmf(2, 3, 5).unwrap(), 0.3, max_relative = 1e-15);
        assert_eq!(t1_pmf(1, 1, 9).unwrap(), 1.0);
        assert_eq!(t1_pmf(4, 1, 9).unwrap(), 0.0);
        assert!(t1_pmf(0, 3, 5).is_err());
        assert!(t1_pmf(1, 6, 5).is_err());
        assert!(t1_pmf(1, 1, 1).is_err());
        let total: f64 = (1..=10_000).map(|t| t1_pmf(t, 7, 20).unwrap()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn t3_pmf_values() {
        assert_eq!(t3_pmf(1, 2).unwrap(), 1.0);
        assert_eq!(t3_pmf(2, 2).unwrap(), 0.0);
        assert_relative_eq!(t3_pmf(1, 5).unwrap(), 0.25);
        assert_relative_eq!(t3_pmf(2, 5).unwrap(), 0.1875);
        let mean: f64 = (1..=100_000).map(|t| t as f64 * t3_pmf(t, 5).unwrap()).sum();
        assert_relative_eq!(mean, 4.0, epsilon = 1e-9);
        assert!(t3_pmf(1, 1).is_err());
    }

    #[test]
    fn t2_bound_values() {
        assert_eq!(t2_upper_bound(1e6, 0.1, 1.0).unwrap(), 0);
        assert_eq!(t2_upper_bound(1e-6, 0.1, 1.0).unwrap(), 3);
        assert!(t2_upper_bound(1e-6, 0.6, 1.0).is_err());
        let mut last = u64::MAX;
        for e in [1e-12, 1e-9, 1e-6, 1e-3, 1.0] {
            let b = t2_upper_bound(e, 0.2, 1.0).unwrap();
            assert!(b <= last);
            last = b;
        }
    }

    #[test]
    fn waiting_time_terms() {
        let w = expected_waiting_time(3, 5, 1e-6, 0.1, 1.0).unwrap();
        assert_eq!(w.t2_term, 3);
        assert_relative_eq!(w.total, 0.8 * 2.0 / 3.0 + 3.0 + 4.0, max_relative = 1e-15);
        let w1 = expected_waiting_time(1, 8, 1e-6, 0.1, 1.0).unwrap();
        assert_eq!(w1.t1_term, 0.0);
        assert_relative_eq!(w1.total, 3.0 + 7.0);
    }

    #[test]
    fn t1_term_is_one_less_than_the_pmf_mean() {
        for (k, kbar) in [(3, 5), (5, 20), (30, 128), (2, 2)] {
            let w = expected_waiting_time(k, kbar, 1e-6, 0.1, 1.0).unwrap();
            let numeric = t1_mean_numeric(k, kbar, 20_000).unwrap();
            assert_relative_eq!(numeric, w.t1_mean_exact, max_relative = 1e-10);
            assert_relative_eq!(numeric - 1.0, w.t1_term, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(40, 5), 658_008);
        assert_eq!(binomial(12, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(200, 100), u64::MAX);
    }

    #[test]
    fn ric_of_orthonormal_columns_is_zero() {
        let phi = DenseMatrix::new(DMatrix::identity(6, 6)).unwrap();
        for s in 1..=6 {
            assert!(ric_bruteforce(&phi, s).unwrap() < 1e-14);
        }
    }

    #[test]
    fn ric_three_column_example() {
        let h = FRAC_1_SQRT_2;
        let phi = DenseMatrix::from_row_major(2, 3, &[1.0, 0.0, h, 0.0, 1.0, h]).unwrap();
        // Gram of columns {0, 2}: [[1, h], [h, 1]], eigenvalues 1 ± h
        let direct = DMatrix::from_row_slice(2, 2, &[1.0, h, h, 1.0]).symmetric_eigenvalues();
        assert_relative_eq!(direct.max() - 1.0, h, epsilon = 1e-14);
        assert_relative_eq!(ric_bruteforce(&phi, 2).unwrap(), h, epsilon = 1e-14);
        assert!(ric_bruteforce(&phi, 1).unwrap() < 1e-15);
    }

    #[test]
    fn ric_is_monotone_and_guarded() {
        let phi = crate::problem::gen_gaussian_matrix(8, 14, 3).unwrap();
        let mut last = 0.0;
        for s in 1..=8 {
            let d = ric_bruteforce(&phi, s).unwrap();
            assert!(d >= last);
            last = d;
        }
        assert!(ric_bruteforce_with_guard(&phi, 7, 100).is_err());
        // orders beyond N clamp to N
        assert_eq!(ric_bruteforce(&phi, 30).unwrap(), ric_bruteforce(&phi, 14).unwrap());
    }

    #[test]
    fn ric_table_bounds_bracket_exact_values() {
        let phi = crate::problem::gen_gaussian_matrix(6, 12, 5).unwrap();
        let table = RicTable::brute_force(&phi, 10, 300).unwrap();
        for s in 1..=10 {
            let exact = ric_bruteforce(&phi, s).unwrap();
            let b = table.get(s).unwrap();
            assert!(b.lower <= exact + 1e-12 && exact <= b.upper + 1e-12, "s={s} {b:?} {exact}");
        }
        assert!(table.get(7).unwrap().lower >= 1.0);
        assert!(table.get(11).is_err());
    }
}
