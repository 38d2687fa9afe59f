//! Sparse recovery with unknown sparsity.
//!
//! The centerpiece is multiple choice hard thresholding pursuit
//! ([`run_mchtp`]), which estimates the sparsity order and the sparse vector
//! jointly from an upper bound on the sparsity. Around it sit the HTP, GHTP,
//! SP and MSP baselines, closed-form evaluators for the convergence bounds
//! and phase-duration laws ([`theory`]), trace post-processing
//! ([`analysis`]) and a seeded Monte Carlo driver ([`experiment`]).

pub mod algorithms;
pub mod analysis;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod problem;
pub mod theory;

pub use algorithms::{
    audit_trace, htp_step, run_ghtp, run_htp, run_mchtp, run_msp, run_sp, run_sp_from, select_candidate, AlgoConfig, Algorithm,
    HtpStep, IterationRecord, Records, RunTrace, SparseEstimate, StepRecord, TraceAudit,
};
pub use error::{Error, Result};
pub use linalg::{hard_threshold, least_squares_on_support, residual_energy, top_k_support, DenseMatrix, SupportSet};
pub use problem::{
    gen_gaussian_matrix, gen_signal, make_instance, signal_ratio, InstanceSpec, ProblemInstance, SignalKind,
    SignalRatio, SignalStructure,
};
