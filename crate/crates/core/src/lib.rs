//! Markov chains observed through a filter matrix.
//!
//! A filter F marks which transitions i→j are recorded; states that take
//! part in no recorded transition are blanked out. This crate simulates and
//! filters chains, checks sufficient conditions for identifiability of the
//! transition matrix from filtered data, estimates it by EM, and attaches
//! SEM standard errors, Wald tests and confidence intervals.
//!
//! States are 0-based in the API and 1-based in every text format.

pub mod chain;
pub mod em;
pub mod error;
pub mod filter;
pub mod higher_order;
pub mod identifiability;
pub mod inference;
pub mod io;
pub mod matrix;
pub mod oracle;
pub mod sem;

pub use chain::{complete_mle, simulate_chain, transition_counts, CompleteChain, StateSpace};
pub use em::{e_step, m_step, observed_loglik, run_em, split_p, EmOptions, EmResult, FilteredData, SplitMatrices};
pub use error::{ConsistencyError, ConsistencyRule, Error, ParseError, Result};
pub use filter::{
    apply_filter, classify_transitions, dominates, reduction_fraction, validate_consistency, FilterMatrix,
    FilteredChain, TransitionClass,
};
pub use identifiability::{closure_witness, identifiability_verdict, FilterClass, IdentifiabilityVerdict, Verdict};
pub use inference::{chi_square_test, confidence_interval, z_test, ConfidenceInterval, TestReport};
pub use matrix::{CountMatrix, ParamLayout, ParamVector, SupportMask, TransitionMatrix};
pub use sem::{run_sem, SemOptions, SemResult, SemStart};
