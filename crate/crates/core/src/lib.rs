//! Mining overlapping permission request patterns from binary
//! application x permission matrices.
//!
//! Applications are rows of a [`BinaryMatrix`], permissions are columns. A
//! factorization explains the matrix as the Boolean product `z ⊗ u` of an
//! assignment matrix `z` (applications x patterns) and a pattern matrix `u`
//! (patterns x permissions), plus a Bernoulli noise process for whatever
//! the patterns do not explain.
//!
//! * [`engine`] fits the signal/noise mixture by annealed EM.
//! * [`selection`] picks the number of patterns by clustering instability.
//! * [`evaluation`] computes residual rates, pairwise conditional
//!   probabilities, pattern frequencies and category divergences.
//! * [`simulator`] generates planted and independent-request datasets.
//! * [`ingest`] loads application datasets and applies reputation filters.
//! * [`cli`] wires everything into the `permpat` batch commands.
//!
//! Runnable walkthroughs for each capability live in this crate's
//! `examples/` directory.

pub mod cli;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod matrix;
pub mod model;
pub mod selection;
pub mod simulator;

pub use engine::{
    assign_patterns, binarize, boolean_product, em_step, fit, log_likelihood,
    signal_bernoulli_param, tempered_log_likelihood, FitState, PatternClassifier,
};
pub use error::{Error, Result};
pub use matrix::{hamming_distance, BinaryMatrix};
pub use model::{Factorization, FactorizationDocument, FitConfig, ProbMatrix};

/// Derives an independent sub-seed from `base` for stream `stream`
/// (SplitMix64 finalizer over the combined value).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
