//! End-to-end steering of one query: try the mapped hint set, fall back to
//! the adaptive search, and feed fallback results into the reference store
//! so later queries can take the fast path.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::embed::{EmbedError, Embedder};
use crate::engine::{EngineError, Execution, QueryEngine};
use crate::hints::HintSet;
use crate::mapping::{map_plan, MappingDecision, MappingError, MappingParams};
use crate::search::{adaptive_search, make_reference_triple, SearchError, SearchOptions, TripleBuildError};
use crate::store::{ReferenceStore, StoreError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PipelineMode {
    /// Rejected queries go through the adaptive search and their result is
    /// added to the store.
    Full,
    /// Rejected queries simply run with default hints; the store is never
    /// touched. This is the held-out evaluation protocol.
    MapOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub params: MappingParams,
    pub mode: PipelineMode,
    /// Wall-clock budget for fast-path and default executions.
    pub timeout_ms: f64,
    /// How the fallback search runs.
    pub search: SearchOptions,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            params: MappingParams::default(),
            mode: PipelineMode::Full,
            timeout_ms: 450_000.0,
            search: SearchOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.timeout_ms > 0.0 && self.timeout_ms.is_finite()) {
            return Err(PipelineError::InvalidConfig {
                detail: "timeout_ms must be positive",
            });
        }
        self.params.validate().map_err(PipelineError::Mapping)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathTaken {
    /// Mapped candidate accepted and executed; no search, no store write.
    Fast,
    /// Mapping rejected; adaptive search ran and its triple entered the store.
    Fallback,
    /// Mapping rejected in map-only mode; default hints executed.
    Default,
}

/// What happened to one query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryReport {
    pub query_id: String,
    pub path_taken: PathTaken,
    pub hints_applied: HintSet,
    /// Measured latency; when `timed_out` is set this is the censoring
    /// bound, not a completed measurement.
    pub latency_ms: f64,
    pub timed_out: bool,
    /// Default-plan latency when this run measured it (fallback baseline or
    /// a default-path execution); the fast path never runs the default.
    pub default_latency_ms: Option<f64>,
    pub triple_added: bool,
    pub mapping_decision: MappingDecision,
}

#[derive(Debug)]
pub enum PipelineError {
    InvalidConfig { detail: &'static str },
    Mapping(MappingError),
    Search(SearchError),
    Triple(TripleBuildError),
    Engine(EngineError),
    Embed(EmbedError),
    Store(StoreError),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::InvalidConfig { detail } => write!(f, "invalid pipeline config: {detail}"),
            PipelineError::Mapping(e) => write!(f, "{e}"),
            PipelineError::Search(e) => write!(f, "{e}"),
            PipelineError::Triple(e) => write!(f, "{e}"),
            PipelineError::Engine(e) => write!(f, "{e}"),
            PipelineError::Embed(e) => write!(f, "{e}"),
            PipelineError::Store(e) => write!(f, "{e}"),
        }
    }
}

macro_rules! from_error {
    ($variant:ident, $source:ty) => {
        impl From<$source> for PipelineError {
            fn from(e: $source) -> PipelineError {
                PipelineError::$variant(e)
            }
        }
    };
}

from_error!(Mapping, MappingError);
from_error!(Search, SearchError);
from_error!(Triple, TripleBuildError);
from_error!(Engine, EngineError);
from_error!(Embed, EmbedError);
from_error!(Store, StoreError);

impl core::error::Error for PipelineError {}

/// Steers one query through the fast path / fallback flow.
///
/// An empty store short-circuits the vote (there is nobody to consult), so
/// the decision is a rejection with no candidate and the fallback or the
/// default path runs, depending on the mode.
pub fn process_query(
    query_id: &str,
    engine: &dyn QueryEngine,
    embedder: &dyn Embedder,
    store: &mut ReferenceStore,
    config: &PipelineConfig,
) -> Result<QueryReport, PipelineError> {
    config.validate()?;
    let decision = if store.is_empty() {
        MappingDecision {
            candidate: None,
            accepted: false,
            mean_default_ms: None,
            mean_candidate_ms: None,
            vote_counts: BTreeMap::new(),
        }
    } else {
        let default_plan = engine.plan(&HintSet::DEFAULT)?;
        map_plan(engine, &default_plan, embedder, store, config.params)?
    };

    if decision.accepted {
        let hints = decision.candidate.expect("accepted decisions carry a candidate");
        let (latency_ms, timed_out) = run_bounded(engine, &hints, config.timeout_ms)?;
        return Ok(QueryReport {
            query_id: query_id.to_string(),
            path_taken: PathTaken::Fast,
            hints_applied: hints,
            latency_ms,
            timed_out,
            default_latency_ms: None,
            triple_added: false,
            mapping_decision: decision,
        });
    }

    match config.mode {
        PipelineMode::Full => {
            let result = adaptive_search(engine, &config.search)?;
            let triple = make_reference_triple(query_id, &result, engine, embedder)?;
            store.insert(triple)?;
            Ok(QueryReport {
                query_id: query_id.to_string(),
                path_taken: PathTaken::Fallback,
                hints_applied: result.best_hints,
                // The search already measured the winner; no re-execution.
                latency_ms: result.min_latency_ms,
                timed_out: false,
                default_latency_ms: Some(result.baseline_ms),
                triple_added: true,
                mapping_decision: decision,
            })
        }
        PipelineMode::MapOnly => {
            let (latency_ms, timed_out) = run_bounded(engine, &HintSet::DEFAULT, config.timeout_ms)?;
            Ok(QueryReport {
                query_id: query_id.to_string(),
                path_taken: PathTaken::Default,
                hints_applied: HintSet::DEFAULT,
                latency_ms,
                timed_out,
                default_latency_ms: Some(latency_ms),
                triple_added: false,
                mapping_decision: decision,
            })
        }
    }
}

fn run_bounded(
    engine: &dyn QueryEngine,
    hints: &HintSet,
    timeout_ms: f64,
) -> Result<(f64, bool), PipelineError> {
    match engine.execute(hints, Some(timeout_ms))? {
        Execution::Completed { latency_ms } => Ok((latency_ms, false)),
        Execution::TimedOut => Ok((timeout_ms, true)),
    }
}

/// A query that could not be processed; the workload run continues past it.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryFailure {
    pub query_id: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorkloadRun {
    pub reports: Vec<QueryReport>,
    pub failures: Vec<QueryFailure>,
}

/// Runs `process_query` over a workload in order. Store growth from
/// fallbacks is visible to every later query, which is what lets repeated
/// query shapes migrate from the fallback to the fast path within one run.
pub fn run_workload<E, I>(
    items: I,
    embedder: &dyn Embedder,
    store: &mut ReferenceStore,
    config: &PipelineConfig,
) -> Result<WorkloadRun, PipelineError>
where
    E: QueryEngine,
    I: IntoIterator<Item = (String, E)>,
{
    config.validate()?;
    let mut run = WorkloadRun::default();
    for (query_id, engine) in items {
        match process_query(&query_id, &engine, embedder, store, config) {
            Ok(report) => run.reports.push(report),
            Err(e) => run.failures.push(QueryFailure {
                query_id,
                detail: e.to_string(),
            }),
        }
    }
    Ok(run)
}
