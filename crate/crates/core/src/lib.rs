//! Acceptance density: preference signals from unlabeled embedding corpora.
//!
//! Accepted responses of a community form dense regions in embedding space.
//! This crate scores a response by the kernel density of accepted responses
//! attached to the nearest stored contexts, evaluates those scores against
//! labeled preference pairs, and turns density rankings of candidate pools
//! into pseudo-preference pairs for preference-optimization trainers.
//!
//! Batch work (pair scoring, bootstrap resampling, permutation tests, pool
//! forging) runs on rayon when the `parallel` feature is enabled, which it is
//! by default. Every result is identical with and without it.

pub mod density;
pub mod error;
pub mod eval;
pub mod forge;
pub mod index;
pub mod ndjson;
pub mod par;
pub mod seed;
pub mod stats;
pub mod store;
pub mod synthetic;

pub use density::{
    global_log_density, local_log_density, log_sum_exp, median_heuristic, query_neighborhood,
    rbf_kernel, BandwidthRule, DensityScore, GlobalReference, KernelBandwidth, Neighborhood,
};
pub use error::{Error, Result};
pub use eval::{
    correlate_agreement, data_efficiency, evaluate, k_sweep, AccuracyReport, CorrelationReport,
    EfficiencyReport, EvalOptions, Label, Method, PairScorer, PreferencePair, SweepReport, TieMode,
};
pub use forge::{
    forge_pools, CandidatePool, ForgeContext, ForgePolicy, PairFlag, PairMode, PseudoPair,
};
pub use index::{IndexKind, Neighbor, NeighborIndex};
pub use store::{
    l2_normalize, load_corpus, write_corpus, ContextRecord, Corpus, CorpusManifest,
    EmbeddingMatrix, ResponseRecord,
};
