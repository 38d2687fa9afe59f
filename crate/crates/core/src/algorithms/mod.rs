//! Recovery algorithms: the HTP iteration, MCHTP, and the GHTP / SP / MSP
//! baselines, together with the run traces they produce.

mod baselines;
mod htp;
mod mchtp;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SupportSet;

pub use baselines::{run_ghtp, run_msp, run_sp, run_sp_from};
pub use htp::{htp_step, run_htp, HtpStep};
pub(crate) use mchtp::sample_other;
pub use mchtp::{audit_trace, run_mchtp, select_candidate, TraceAudit, AUDIT_TOL, SELECTION_TIE_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mchtp,
    Htp,
    Ghtp,
    Sp,
    Msp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Self::Mchtp, Self::Htp, Self::Ghtp, Self::Sp, Self::Msp];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mchtp => "mchtp",
            Self::Htp => "htp",
            Self::Ghtp => "ghtp",
            Self::Sp => "sp",
            Self::Msp => "msp",
        }
    }

    /// Whether the algorithm is given the true sparsity.
    pub fn needs_true_sparsity(self) -> bool {
        matches!(self, Self::Htp | Self::Sp)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
    }
}

fn default_window() -> usize {
    10
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Parameters shared by all algorithms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    /// Upper bound on the sparsity.
    pub kbar: usize,
    /// Gradient step size.
    pub mu: f64,
    /// Error-difference threshold of the MCHTP selection rule.
    pub epsilon: f64,
    /// Iteration budget.
    pub max_iter: usize,
    pub seed: u64,
    /// Residual-energy stopping tolerance; 0 disables residual-based stops.
    pub tol: f64,
    /// MCHTP only: stop once the residual is below `tol` and the sparsity
    /// estimate has not changed for `stable_window` iterations.
    #[serde(default)]
    pub early_stop: bool,
    #[serde(default = "default_window")]
    pub stable_window: usize,
    /// Negative-control hook: inverts the MCHTP selection rule.
    #[serde(default, skip_serializing_if = "is_false")]
    pub corrupt_selection: bool,
}

impl AlgoConfig {
    pub fn new(kbar: usize, mu: f64, epsilon: f64, max_iter: usize, seed: u64) -> Self {
        Self {
            kbar,
            mu,
            epsilon,
            max_iter,
            seed,
            tol: 0.0,
            early_stop: false,
            stable_window: default_window(),
            corrupt_selection: false,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Checks the parameter ranges against an `m x n` problem.
    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        if self.kbar < 2 || self.kbar > m.min(n) {
            return Err(Error::Config(format!(
                "sparsity bound must satisfy 2 <= kbar <= min(M, N) = {}, got {}",
                m.min(n),
                self.kbar
            )));
        }
        self.validate_common()
    }

    fn validate_common(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config("step size must be positive".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("threshold epsilon must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("iteration budget must be positive".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::Config("tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// A sparse vector stored as its support and the values on it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseEstimate {
    pub support: SupportSet,
    pub values: Vec<f64>,
}

impl SparseEstimate {
    /// Keeps the entries of `v` indexed by `support`.
    pub fn from_dense(v: &DVector<f64>, support: &SupportSet) -> Self {
        Self {
            values: support.iter().map(|i| v[i]).collect(),
            support: support.clone(),
        }
    }

    pub fn to_dense(&self, n: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n);
        for (i, v) in self.support.iter().zip(&self.values) {
            out[i] = *v;
        }
        out
    }

    /// `‖self − x‖²`.
    pub fn sq_distance(&self, x: &DVector<f64>) -> f64 {
        let mut diff = x.clone();
        for (i, v) in self.support.iter().zip(&self.values) {
            diff[i] -= v;
        }
        diff.norm_squared()
    }
}

/// One MCHTP iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub k0: usize,
    pub k1: usize,
    pub support0: SupportSet,
    pub support1: SupportSet,
    pub e0: f64,
    pub e1: f64,
    pub delta_e: f64,
    /// Index (0 or 1) of the selected candidate.
    pub chosen: u8,
    pub k_t: usize,
    pub estimate: SparseEstimate,
    #[serde(default, skip_serializing_if = "is_false")]
    pub rank_deficient: bool,
}

impl IterationRecord {
    pub fn chosen_energy(&self) -> f64 {
        if self.chosen == 0 {
            self.e0
        } else {
            self.e1
        }
    }
}

/// One iteration of a baseline algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub sparsity: usize,
    pub estimate: SparseEstimate,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "items", rename_all = "lowercase")]
pub enum Records {
    Mchtp(Vec<IterationRecord>),
    Steps(Vec<StepRecord>),
}

/// Result of one inner SP run inside MSP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityLevel {
    pub k: usize,
    pub iterations: usize,
    pub residual: f64,
}

/// Everything an algorithm run produced, in iteration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub config: AlgoConfig,
    /// `‖y‖²` of the instance the run was performed on.
    pub measurement_energy: f64,
    pub records: Records,
    pub final_estimate: SparseEstimate,
    pub final_sparsity: usize,
    /// Algorithm-specific success flag: support stabilized (HTP, SP),
    /// residual below tolerance (GHTP, MSP), budget exhausted or early stop (MCHTP).
    pub converged: bool,
    /// Iterations performed, counting the inner SP iterations of MSP.
    pub total_iterations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<SparsityLevel>,
    /// Wall-clock microseconds per recorded iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub elapsed_us: Vec<u64>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        match &self.records {
            Records::Mchtp(r) => r.len(),
            Records::Steps(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mchtp_records(&self) -> Option<&[IterationRecord]> {
        match &self.records {
            Records::Mchtp(r) => Some(r),
            Records::Steps(_) => None,
        }
    }

    /// Iterate estimates in order.
    pub fn estimates(&self) -> Vec<&SparseEstimate> {
        match &self.records {
            Records::Mchtp(r) => r.iter().map(|r| &r.estimate).collect(),
            Records::Steps(r) => r.iter().map(|r| &r.estimate).collect(),
        }
    }

    /// Sparsity estimate after each iteration.
    pub fn sparsities(&self) -> Vec<usize> {
        match &self.records {
            Records::Mchtp(r) => r.iter().map(|r| r.k_t).collect(),
            Records::Steps(r) => r.iter().map(|r| r.sparsity).collect(),
        }
    }

    /// Residual energy after each iteration.
    pub fn residuals(&self) -> Vec<f64> {
        match &self.records {
            Records::Mchtp(r) => r.iter().map(|r| r.chosen_energy()).collect(),
            Records::Steps(r) => r.iter().map(|r| r.residual).collect(),
        }
    }
}

pub(crate) fn elapsed_us(start: std::time::Instant) -> u64 {
    start.elapsed().as_micros() as u64
}
