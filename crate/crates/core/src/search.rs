//! Exhaustive hint search with timeout pruning and plan caching.
//!
//! The search walks all 128 hint configurations for one query. The default
//! configuration runs first without any bound and seeds the running
//! threshold; every other configuration is planned, deduplicated against
//! already-measured plans by fingerprint, and only executed if its plan is
//! new, under the current threshold. A run whose latency exceeds the live
//! threshold is aborted and its fingerprint is remembered, so no plan is
//! ever executed twice. The threshold only tightens, which both prunes
//! hopeless configurations early and guarantees the reported minimum is the
//! true minimum over all feasible configurations.
//!
//! Parallel mode models a pool of `workers` executing the same search, as a
//! deterministic event simulation in logical time: the work queue order is a
//! seeded shuffle, workers that reach a plan already in flight join its
//! completion instead of re-executing it, and each run is adjudicated
//! against the threshold as of its completion. The final minimum is
//! schedule-independent; only the per-configuration ledger may differ
//! between schedules.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::{EmbedError, Embedder};
use crate::engine::{EngineError, Execution, QueryEngine};
use crate::hints::HintSet;
use crate::plan::{fingerprint, render_plan_text, PlanFingerprint};
use crate::store::{ReferenceTriple, StoreError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchMode {
    Sequential,
    /// Simulated pool of workers; see the module docs.
    Parallel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchOptions {
    pub mode: SearchMode,
    /// Worker count for parallel mode; ignored when sequential.
    pub workers: usize,
    /// Seed for the parallel work-queue shuffle. The final minimum does not
    /// depend on it; ledgers and timings may.
    pub schedule_seed: u64,
}

impl Default for SearchOptions {
    fn default() -> SearchOptions {
        SearchOptions {
            mode: SearchMode::Sequential,
            workers: 8,
            schedule_seed: 0,
        }
    }
}

/// What happened to one hint configuration during the search.
#[derive(Clone, Debug, PartialEq)]
pub enum HintOutcome {
    /// The default configuration's unbounded baseline run.
    DefaultBaseline { latency_ms: f64 },
    /// Ran to completion under the live threshold.
    Executed { latency_ms: f64 },
    /// Its plan had already been measured; the cached latency was reused.
    Cached { fingerprint: PlanFingerprint },
    /// Aborted over the threshold, or its plan had already been aborted.
    TimedOut,
    /// No plan exists: the configuration disables every join or every scan.
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    /// Latency of the default configuration's baseline run.
    pub baseline_ms: f64,
    /// Minimum completed latency over all configurations.
    pub min_latency_ms: f64,
    /// Canonical hint set reaching the minimum; see [`extract_best`].
    pub best_hints: HintSet,
    /// Fingerprint of the winning plan.
    pub best_fingerprint: PlanFingerprint,
    /// Completed latency per distinct plan fingerprint.
    pub cache: BTreeMap<PlanFingerprint, f64>,
    /// One entry per hint configuration, ascending bitstring order.
    pub outcomes: Vec<(HintSet, HintOutcome)>,
    /// Executor dispatches, aborted runs and the baseline included. Never
    /// exceeds the number of distinct feasible plan fingerprints.
    pub executions: usize,
}

impl SearchResult {
    pub fn outcome_for(&self, hints: &HintSet) -> Option<&HintOutcome> {
        self.outcomes
            .iter()
            .find(|(h, _)| h == hints)
            .map(|(_, o)| o)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SearchError {
    /// The engine failed mid-search; the ledger up to that point survives.
    Engine {
        error: EngineError,
        partial: Vec<(HintSet, HintOutcome)>,
    },
    InvalidOptions { detail: &'static str },
}

impl fmt::Display for SearchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchError::Engine { error, partial } => {
                write!(f, "search aborted after {} configurations: {error}", partial.len())
            }
            SearchError::InvalidOptions { detail } => write!(f, "invalid search options: {detail}"),
        }
    }
}

impl core::error::Error for SearchError {}

struct SearchState {
    t_min: f64,
    cache: BTreeMap<PlanFingerprint, f64>,
    pruned: BTreeSet<PlanFingerprint>,
    outcomes: BTreeMap<HintSet, HintOutcome>,
    executions: usize,
}

impl SearchState {
    fn ledger(&self) -> Vec<(HintSet, HintOutcome)> {
        self.outcomes
            .iter()
            .map(|(h, o)| (*h, o.clone()))
            .collect()
    }
}

fn run_baseline(engine: &dyn QueryEngine, state: &mut SearchState) -> Result<(), SearchError> {
    let fail = |error: EngineError, state: &SearchState| SearchError::Engine {
        error,
        partial: state.ledger(),
    };
    let plan = engine.plan(&HintSet::DEFAULT).map_err(|e| fail(e, state))?;
    state.executions += 1;
    let baseline = match engine.execute(&HintSet::DEFAULT, None) {
        Ok(Execution::Completed { latency_ms }) => latency_ms,
        Ok(Execution::TimedOut) => {
            return Err(fail(
                EngineError::Failed {
                    detail: String::from("engine timed out an unbounded baseline run"),
                },
                state,
            ))
        }
        Err(e) => return Err(fail(e, state)),
    };
    state.t_min = baseline;
    state.cache.insert(fingerprint(&plan), baseline);
    state
        .outcomes
        .insert(HintSet::DEFAULT, HintOutcome::DefaultBaseline { latency_ms: baseline });
    Ok(())
}

fn run_sequential(engine: &dyn QueryEngine, state: &mut SearchState) -> Result<(), SearchError> {
    for hints in HintSet::enumerate_all().into_iter().skip(1) {
        let plan = match engine.plan(&hints) {
            Ok(p) => p,
            Err(EngineError::Infeasible { .. }) => {
                state.outcomes.insert(hints, HintOutcome::Infeasible);
                continue;
            }
            Err(error) => {
                return Err(SearchError::Engine {
                    error,
                    partial: state.ledger(),
                })
            }
        };
        let fp = fingerprint(&plan);
        if state.cache.contains_key(&fp) {
            state.outcomes.insert(hints, HintOutcome::Cached { fingerprint: fp });
            continue;
        }
        if state.pruned.contains(&fp) {
            state.outcomes.insert(hints, HintOutcome::TimedOut);
            continue;
        }
        state.executions += 1;
        match engine.execute(&hints, Some(state.t_min)) {
            Ok(Execution::Completed { latency_ms }) => {
                state.cache.insert(fp, latency_ms);
                if latency_ms < state.t_min {
                    state.t_min = latency_ms;
                }
                state.outcomes.insert(hints, HintOutcome::Executed { latency_ms });
            }
            Ok(Execution::TimedOut) => {
                state.pruned.insert(fp);
                state.outcomes.insert(hints, HintOutcome::TimedOut);
            }
            Err(error) => {
                return Err(SearchError::Engine {
                    error,
                    partial: state.ledger(),
                })
            }
        }
    }
    Ok(())
}

struct InFlight {
    hints: HintSet,
    fingerprint: PlanFingerprint,
    latency_ms: f64,
    completion_time: f64,
    dispatch_seq: usize,
    waiters: Vec<HintSet>,
}

fn run_parallel(
    engine: &dyn QueryEngine,
    workers: usize,
    schedule_seed: u64,
    state: &mut SearchState,
) -> Result<(), SearchError> {
    let mut queue: Vec<HintSet> = HintSet::enumerate_all().into_iter().skip(1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule_seed);
    queue.shuffle(&mut rng);
    let mut next = 0usize;

    let mut in_flight: Vec<InFlight> = Vec::new();
    let mut now = 0.0f64;
    let mut dispatch_seq = 0usize;

    loop {
        // Hand work to free workers. Cache hits, pruned plans, and
        // infeasible configurations resolve instantly and free the worker
        // for the next queue entry; a plan already in flight is joined
        // instead of re-executed, which does occupy the worker.
        let mut busy: usize = in_flight.iter().map(|f| 1 + f.waiters.len()).sum();
        while busy < workers && next < queue.len() {
            let hints = queue[next];
            next += 1;
            let plan = match engine.plan(&hints) {
                Ok(p) => p,
                Err(EngineError::Infeasible { .. }) => {
                    state.outcomes.insert(hints, HintOutcome::Infeasible);
                    continue;
                }
                Err(error) => {
                    return Err(SearchError::Engine {
                        error,
                        partial: state.ledger(),
                    })
                }
            };
            let fp = fingerprint(&plan);
            if state.cache.contains_key(&fp) {
                state.outcomes.insert(hints, HintOutcome::Cached { fingerprint: fp });
                continue;
            }
            if state.pruned.contains(&fp) {
                state.outcomes.insert(hints, HintOutcome::TimedOut);
                continue;
            }
            if let Some(flight) = in_flight.iter_mut().find(|f| f.fingerprint == fp) {
                flight.waiters.push(hints);
                busy += 1;
                continue;
            }
            // The simulation needs the true latency to schedule the
            // completion event; the threshold is applied at adjudication.
            let latency_ms = match engine.execute(&hints, None) {
                Ok(Execution::Completed { latency_ms }) => latency_ms,
                Ok(Execution::TimedOut) => {
                    return Err(SearchError::Engine {
                        error: EngineError::Failed {
                            detail: String::from("engine timed out an unbounded run"),
                        },
                        partial: state.ledger(),
                    })
                }
                Err(error) => {
                    return Err(SearchError::Engine {
                        error,
                        partial: state.ledger(),
                    })
                }
            };
            state.executions += 1;
            in_flight.push(InFlight {
                hints,
                fingerprint: fp,
                latency_ms,
                completion_time: now + latency_ms,
                dispatch_seq,
                waiters: Vec::new(),
            });
            dispatch_seq += 1;
            busy += 1;
        }

        if in_flight.is_empty() {
            debug_assert!(next >= queue.len());
            return Ok(());
        }

        // Advance to the next completion. A run completes iff its latency
        // does not exceed the threshold as of this moment; otherwise it was
        // aborted, and every configuration waiting on the same plan shares
        // that fate.
        let idx = in_flight
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                a.completion_time
                    .total_cmp(&b.completion_time)
                    .then(a.dispatch_seq.cmp(&b.dispatch_seq))
            })
            .map(|(i, _)| i)
            .expect("in_flight is non-empty");
        let done = in_flight.swap_remove(idx);
        now = if done.completion_time > now { done.completion_time } else { now };
        if done.latency_ms > state.t_min {
            state.pruned.insert(done.fingerprint);
            state.outcomes.insert(done.hints, HintOutcome::TimedOut);
            for waiter in done.waiters {
                state.outcomes.insert(waiter, HintOutcome::TimedOut);
            }
        } else {
            state.cache.insert(done.fingerprint.clone(), done.latency_ms);
            if done.latency_ms < state.t_min {
                state.t_min = done.latency_ms;
            }
            state
                .outcomes
                .insert(done.hints, HintOutcome::Executed { latency_ms: done.latency_ms });
            for waiter in done.waiters {
                state.outcomes.insert(
                    waiter,
                    HintOutcome::Cached {
                        fingerprint: done.fingerprint.clone(),
                    },
                );
            }
        }
    }
}

/// Identifies the winner among the configurations tied at `t_min`: the
/// winning plan is the one whose fingerprint reaches `t_min` first in
/// ascending bitstring order, and among the hint sets producing that exact
/// plan the canonical one (fewest disabled operators, then smallest
/// bitstring) is chosen.
pub fn extract_best(
    engine: &dyn QueryEngine,
    t_min: f64,
    cache: &BTreeMap<PlanFingerprint, f64>,
) -> Result<(HintSet, PlanFingerprint), EngineError> {
    let mut winner_fp: Option<PlanFingerprint> = None;
    let mut tied: Vec<HintSet> = Vec::new();
    for hints in HintSet::enumerate_all() {
        let plan = match engine.plan(&hints) {
            Ok(p) => p,
            Err(EngineError::Infeasible { .. }) => continue,
            Err(e) => return Err(e),
        };
        let fp = fingerprint(&plan);
        if cache.get(&fp).copied() != Some(t_min) {
            continue;
        }
        match &winner_fp {
            None => {
                winner_fp = Some(fp);
                tied.push(hints);
            }
            Some(w) if *w == fp => tied.push(hints),
            Some(_) => {}
        }
    }
    let winner_fp = winner_fp.expect("t_min always comes from a cached plan");
    let best = HintSet::canonicalize(tied).expect("winner fingerprint has at least one producer");
    Ok((best, winner_fp))
}

/// Runs the full search for one query. See the module docs for semantics.
pub fn adaptive_search(
    engine: &dyn QueryEngine,
    options: &SearchOptions,
) -> Result<SearchResult, SearchError> {
    if options.mode == SearchMode::Parallel && options.workers == 0 {
        return Err(SearchError::InvalidOptions {
            detail: "parallel search needs at least one worker",
        });
    }
    let mut state = SearchState {
        t_min: 0.0,
        cache: BTreeMap::new(),
        pruned: BTreeSet::new(),
        outcomes: BTreeMap::new(),
        executions: 0,
    };
    run_baseline(engine, &mut state)?;
    let baseline_ms = state.t_min;
    match options.mode {
        SearchMode::Sequential => run_sequential(engine, &mut state)?,
        SearchMode::Parallel => run_parallel(engine, options.workers, options.schedule_seed, &mut state)?,
    }
    let (best_hints, best_fingerprint) =
        extract_best(engine, state.t_min, &state.cache).map_err(|error| SearchError::Engine {
            error,
            partial: state.ledger(),
        })?;
    Ok(SearchResult {
        baseline_ms,
        min_latency_ms: state.t_min,
        best_hints,
        best_fingerprint,
        cache: state.cache,
        outcomes: state.outcomes.into_iter().collect(),
        executions: state.executions,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum TripleBuildError {
    Engine(EngineError),
    Embed(EmbedError),
    Store(StoreError),
}

impl fmt::Display for TripleBuildError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TripleBuildError::Engine(e) => write!(f, "{e}"),
            TripleBuildError::Embed(e) => write!(f, "{e}"),
            TripleBuildError::Store(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for TripleBuildError {}

/// Turns a finished search into a reference triple for the store.
///
/// When no hint set beat the default, the triple is degenerate by contract:
/// the optimized side reuses the default embedding and latency exactly.
pub fn make_reference_triple(
    query_id: &str,
    result: &SearchResult,
    engine: &dyn QueryEngine,
    embedder: &dyn Embedder,
) -> Result<ReferenceTriple, TripleBuildError> {
    let default_plan = engine.plan(&HintSet::DEFAULT).map_err(TripleBuildError::Engine)?;
    let default_vec = embedder
        .embed_text(&render_plan_text(&default_plan))
        .map_err(TripleBuildError::Embed)?;
    let default_fingerprint = fingerprint(&default_plan);
    let (optimized_vec, optimized_latency_ms) = if result.best_hints.is_default() {
        (default_vec.clone(), result.baseline_ms)
    } else {
        let best_plan = engine.plan(&result.best_hints).map_err(TripleBuildError::Engine)?;
        let vec = embedder
            .embed_text(&render_plan_text(&best_plan))
            .map_err(TripleBuildError::Embed)?;
        (vec, result.min_latency_ms)
    };
    let triple = ReferenceTriple {
        query_id: String::from(query_id),
        default_vec,
        default_fingerprint,
        best_hints: result.best_hints,
        optimized_vec,
        default_latency_ms: result.baseline_ms,
        optimized_latency_ms,
    };
    triple.validate().map_err(TripleBuildError::Store)?;
    Ok(triple)
}
