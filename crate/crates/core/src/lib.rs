//! Training-free optimizer hint steering.
//!
//! The crate recommends database hint sets for incoming queries without any
//! model training: it embeds the default execution plan, retrieves the
//! nearest previously-optimized plans from a reference store, votes on their
//! winning hint sets, and validates the candidate with a two-neighborhood
//! runtime consistency check. Queries the mapper cannot serve fall back to an
//! exhaustive 128-configuration hint search with timeout pruning and plan
//! caching, whose results feed the reference store for future queries.
//!
//! Everything here is pure computation (`no_std` + `alloc`): plan trees,
//! embeddings, k-NN retrieval, the search and mapping algorithms, evaluation
//! metrics, and a deterministic synthetic executor that stands in for a real
//! DBMS so every algorithm can be verified against brute-force oracles.
//! File formats, the CLI, and the remote embedding client live in the
//! companion `plansteer-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod embed;
pub mod engine;
pub mod eval;
pub mod hints;
pub mod mapping;
pub mod pca;
pub mod pipeline;
pub mod plan;
pub mod search;
pub mod store;
pub mod synth;

pub use embed::{
    euclidean_distance, levenshtein_distance, EmbedError, Embedder, EmbeddingVector, HashEmbedder,
};
pub use engine::{EngineError, Execution, QueryEngine};
pub use eval::{
    assign_folds, build_train_store, hint_frequency, run_ablation, run_crossval, AblationRow,
    AblationTable, CrossvalConfig, CrossvalOutput, CrossvalSummary, EvalError, FoldReport,
    GroundTruth, PercentileBand, QueryOutcome, RetrievalMetric, TrainStore,
};
pub use hints::{HintSet, HINT_COUNT, HINT_NAMES};
pub use mapping::{
    consistency_check, map_plan, vote_candidate, vote_tally, ConsistencyOutcome, MappingDecision,
    MappingError, MappingParams,
};
pub use pca::{pca2, Pca2, PcaError};
pub use pipeline::{
    run_workload, PathTaken, PipelineConfig, PipelineMode, QueryFailure, QueryReport, WorkloadRun,
};
pub use plan::{fingerprint, render_plan_text, ExecutionPlan, Operator, PlanFingerprint, PlanNode};
pub use search::{
    adaptive_search, extract_best, make_reference_triple, HintOutcome, SearchError, SearchMode,
    SearchOptions, SearchResult, TripleBuildError,
};
pub use store::{Neighbor, ReferenceStore, ReferenceTriple, Side, StoreError};
pub use synth::{
    template_label, OracleBest, SynthEngine, SyntheticQuery, SyntheticWorkload, WorkloadError,
    WorkloadParams,
};
