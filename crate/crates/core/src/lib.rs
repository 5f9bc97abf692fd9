//! Exact computation and Monte Carlo verification for randomized detection
//! schemes in multidetector networks.
//!
//! `n` detectors each carry a detection probability drawn iid from a finite
//! alphabet. A detection scheme assigns one detector to each of the `r` slots
//! of a round; a randomized scheme is a distribution over such assignments.
//! The crate computes the exact detection law of a fixed (scheme,
//! configuration) pair, scheme-averaged and configuration-averaged statistics,
//! the structural constants that bound them, and an end-to-end harness that
//! classifies scheme families by whether they reach the capacity `1/p_av`.
//!
//! Module map:
//!
//! - [`config_model`]: alphabets, configurations, moments, geometric placement.
//! - [`scheme_model`]: schemes, scheme families, prefix distinctness `a_k`,
//!   pairwise disjointness `b_k`, prefix laws.
//! - [`detection_core`]: survival products, detection pmf, truncated mean,
//!   Bernoulli simulation of a round.
//! - [`ensemble_analysis`]: quenched statistics, configuration averages,
//!   covariance constants and bound checks.
//! - [`capacity_harness`]: achievability mass, sweeps, verdicts, experiment
//!   runner.
//! - [`oracles`]: brute-force enumerations used to cross-check everything else.
//! - [`cli`]: the `detcap` command line.

pub mod capacity_harness;
pub mod cli;
pub mod config_model;
pub mod detection_core;
pub mod ensemble_analysis;
mod error;
pub mod oracles;
pub mod rng;
pub mod scheme_model;
pub mod stats;
pub mod verify;

pub use capacity_harness::{
    AchievabilityTarget, CapacityVerdict, ExperimentConfig, RoundSchedule, Verdict,
};
pub use config_model::{ConfigAlphabet, Configuration, GeometricPlacement, MomentTable};
pub use detection_core::{AlphaSequence, DecisionTrace, DetectionDistribution, DetectionTime};
pub use ensemble_analysis::{EnsembleReport, LemmaConstants, QuenchedStats, TjTerm};
pub use error::{Error, Result};
pub use oracles::OracleBudget;
pub use rng::StreamKey;
pub use scheme_model::{
    FamilyKind, FamilySpec, OffsetLaw, PairwiseDisjointness, PrefixDistinctness, Scheme,
    SchemeFamily, StatMethod,
};
pub use stats::Estimate;
