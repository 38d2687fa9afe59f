//! Post-processing of run traces: error curves, sparsity-phase detection and
//! empirical distributions of the phase durations.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::algorithms::{sample_other, RunTrace};
use crate::error::{domain, Result};
use crate::problem::{seeded_rng, RngStream};

/// A probability mass function on the positive integers.
pub type Pmf = BTreeMap<u64, f64>;

/// Per-iteration mean square deviation and residual energy.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    /// `‖x^t − x‖²/N`
    pub msd: Vec<f64>,
    /// `‖y − Φx^t‖²`
    pub residual: Vec<f64>,
}

impl ErrorCurve {
    pub fn final_msd(&self) -> Option<f64> {
        self.msd.last().copied()
    }
}

pub fn msd_curve(trace: &RunTrace, x_true: &DVector<f64>) -> ErrorCurve {
    let n = x_true.len() as f64;
    ErrorCurve {
        msd: trace.estimates().into_iter().map(|e| e.sq_distance(x_true) / n).collect(),
        residual: trace.residuals(),
    }
}

/// Durations of the three sparsity phases of an MCHTP trace.
///
/// With `K_0 = 0` and `L` the trace length:
/// * `t1` is the first `t` with `K_t >= K`;
/// * `t2` is `(last t > t1 with K_t > K_{t−1}) − t1 + 1`, or 0 without such
///   an increase, capped so that `t1 + t2 <= L`;
/// * `t3` runs from the end of phase II to the first `t` after which `K_t`
///   equals `K` until the end of the trace, and is 0 if that happened earlier.
///
/// Phases that cannot be determined are `None`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub t1: Option<usize>,
    pub t2: Option<usize>,
    pub t3: Option<usize>,
    pub w: Option<usize>,
    /// The final sparsity estimate equals the true sparsity.
    pub converged: bool,
}

pub fn detect_phases(trace: &RunTrace, k_true: usize) -> PhaseReport {
    phases_of_sequence(&trace.sparsities(), k_true)
}

/// [`detect_phases`] on a raw sequence `K_1, K_2, …`.
pub fn phases_of_sequence(ks: &[usize], k_true: usize) -> PhaseReport {
    let len = ks.len();
    let converged = ks.last() == Some(&k_true);
    let Some(t1) = ks.iter().position(|&k| k >= k_true).map(|i| i + 1) else {
        return PhaseReport { t1: None, t2: None, t3: None, w: None, converged };
    };
    // ks[i] is K_{i+1}
    let last_increase = (t1 + 1..=len).rev().find(|&t| ks[t - 1] > ks[t - 2]);
    let t2 = last_increase.map_or(0, |t| (t - t1 + 1).min(len - t1));
    if !converged {
        return PhaseReport { t1: Some(t1), t2: Some(t2), t3: None, w: None, converged };
    }
    let lock = ks.iter().rposition(|&k| k != k_true).map_or(1, |i| i + 2);
    let t3 = lock.saturating_sub(t1 + t2);
    PhaseReport {
        t1: Some(t1),
        t2: Some(t2),
        t3: Some(t3),
        w: Some(t1 + t2 + t3),
        converged,
    }
}

/// Shape properties of a sparsity trajectory relative to the true sparsity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryShape {
    pub t1: Option<usize>,
    /// `K_t` never decreases for `t <= t1`.
    pub nondecreasing_until_t1: bool,
    /// `K_t >= K` for every `t >= t1`.
    pub stays_above_after_t1: bool,
    pub terminal_is_k: bool,
}

impl TrajectoryShape {
    pub fn of_sequence(ks: &[usize], k_true: usize) -> Self {
        let t1 = ks.iter().position(|&k| k >= k_true).map(|i| i + 1);
        let head = &ks[..t1.unwrap_or(ks.len())];
        Self {
            t1,
            nondecreasing_until_t1: head.windows(2).all(|w| w[0] <= w[1]),
            stays_above_after_t1: t1.is_some_and(|t| ks[t - 1..].iter().all(|&k| k >= k_true)),
            terminal_is_k: ks.last() == Some(&k_true),
        }
    }

    /// Phase I monotone, never below `K` afterwards, ends at `K`.
    pub fn is_three_phase(&self) -> bool {
        self.nondecreasing_until_t1 && self.stays_above_after_t1 && self.terminal_is_k
    }
}

/// Normalized frequencies of `samples`.
pub fn empirical_pmf(samples: &[u64]) -> Result<Pmf> {
    if samples.is_empty() {
        return domain("cannot build a pmf from no samples");
    }
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for &s in samples {
        *counts.entry(s).or_default() += 1;
    }
    let n = samples.len() as f64;
    Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect())
}

/// Tabulates `f(1), f(2), …` until the remaining mass is below `tail`, and at
/// least up to `min_support`.
pub fn tabulate_pmf(mut f: impl FnMut(u64) -> Result<f64>, min_support: u64, tail: f64) -> Result<Pmf> {
    let mut out = Pmf::new();
    let mut mass = 0.0;
    let mut t = 1;
    while t <= min_support || 1.0 - mass > tail {
        let p = f(t)?;
        mass += p;
        out.insert(t, p);
        t += 1;
        if t > 10_000_000 {
            break;
        }
    }
    Ok(out)
}

/// `½ Σ |p_i − q_i|`, missing keys counting as 0.
pub fn tv_distance(p: &Pmf, q: &Pmf) -> f64 {
    let mut total = 0.0;
    for (k, a) in p {
        total += (a - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, b) in q {
        if !p.contains_key(k) {
            total += b.abs();
        }
    }
    0.5 * total
}

/// Phase-duration samples from the sparsity-sampling chain alone.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    pub t1: Vec<u64>,
    pub t3: Vec<u64>,
}

/// Simulates the candidate-sparsity chain without any linear algebra.
///
/// Phase I: from `K_0 = 0`, draw `K_{t,1}` uniformly from
/// `{1, …, K̄} \ {K_{t−1}}` and keep `K_t = max(K_{t−1}, K_{t,1})` until
/// `K_t >= K`. Phase III: from a state above `K` (or below it when `K = K̄`),
/// draws at or above `K` and below the state replace it, and the phase ends
/// when a draw equals `K`.
pub fn chain_simulate_t1_t3(k: usize, kbar: usize, trials: usize, seed: u64) -> Result<ChainSamples> {
    if kbar < 2 || k == 0 || k > kbar {
        return domain(format!("need 1 <= K <= K̄ and K̄ >= 2, got K={k}, K̄={kbar}"));
    }
    let mut rng = seeded_rng(seed, RngStream::Chain);
    let mut out = ChainSamples {
        t1: Vec::with_capacity(trials),
        t3: Vec::with_capacity(trials),
    };
    for _ in 0..trials {
        let mut state = 0;
        let mut t = 0u64;
        while state < k {
            t += 1;
            state = state.max(sample_other(&mut rng, kbar, state));
        }
        out.t1.push(t);

        let mut state = if k < kbar { kbar } else { k - 1 };
        let mut t = 0u64;
        loop {
            t += 1;
            let draw = sample_other(&mut rng, kbar, state);
            if draw == k {
                break;
            }
            if draw > k && draw < state {
                state = draw;
            }
        }
        out.t3.push(t);
    }
    Ok(out)
}

pub fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Median; the mean of the two middle values for even lengths. NaNs sort last.
pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}
