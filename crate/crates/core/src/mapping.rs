//! The fast path: map a default plan to a hint set via nearest neighbors.
//!
//! Given the embedding of an incoming query's default plan, retrieve the N
//! most similar default plans from the reference store and let them vote
//! with their best hint sets. Default votes are counted but never win; a
//! candidate must come from a neighbor that actually found a better plan.
//! The candidate is then screened twice before it is trusted: if it does not
//! change the plan at all it is dropped, and otherwise the two-neighborhood
//! consistency check compares mean latencies around the default and the
//! candidate plan and accepts only a strict improvement.

use alloc::collections::BTreeMap;
use core::fmt;

use crate::embed::{EmbedError, Embedder, EmbeddingVector};
use crate::engine::{EngineError, QueryEngine};
use crate::hints::HintSet;
use crate::plan::{fingerprint, render_plan_text, ExecutionPlan};
use crate::store::{Neighbor, ReferenceStore, Side, StoreError};

/// Neighborhood sizes for the two retrieval stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MappingParams {
    /// N: neighbors consulted in the hint-set vote.
    pub vote_neighbors: usize,
    /// K: neighbors averaged on each side of the consistency check.
    pub check_neighbors: usize,
}

impl Default for MappingParams {
    fn default() -> MappingParams {
        MappingParams {
            vote_neighbors: 16,
            check_neighbors: 16,
        }
    }
}

impl MappingParams {
    pub fn validate(&self) -> Result<(), MappingError> {
        if self.vote_neighbors == 0 || self.check_neighbors == 0 {
            return Err(MappingError::InvalidParams);
        }
        Ok(())
    }
}

/// What the fast path decided for one query, with enough detail to explain
/// the decision afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingDecision {
    /// Winning non-default hint set of the vote, if any neighbor offered one.
    pub candidate: Option<HintSet>,
    /// True only if a candidate existed, changed the plan, and passed the
    /// consistency check.
    pub accepted: bool,
    /// Mean default-side latency of the check neighborhood, when the check ran.
    pub mean_default_ms: Option<f64>,
    /// Mean optimized-side latency around the candidate plan, when the check ran.
    pub mean_candidate_ms: Option<f64>,
    /// Vote tally over all consulted neighbors, default votes included.
    pub vote_counts: BTreeMap<HintSet, usize>,
}

impl MappingDecision {
    fn rejected(candidate: Option<HintSet>, vote_counts: BTreeMap<HintSet, usize>) -> MappingDecision {
        MappingDecision {
            candidate,
            accepted: false,
            mean_default_ms: None,
            mean_candidate_ms: None,
            vote_counts,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MappingError {
    /// Both neighborhood sizes must be at least 1.
    InvalidParams,
    Store(StoreError),
    Embed(EmbedError),
    Engine(EngineError),
}

impl fmt::Display for MappingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MappingError::InvalidParams => f.write_str("neighborhood sizes must be at least 1"),
            MappingError::Store(e) => write!(f, "{e}"),
            MappingError::Embed(e) => write!(f, "{e}"),
            MappingError::Engine(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for MappingError {}

impl From<StoreError> for MappingError {
    fn from(e: StoreError) -> MappingError {
        MappingError::Store(e)
    }
}

impl From<EmbedError> for MappingError {
    fn from(e: EmbedError) -> MappingError {
        MappingError::Embed(e)
    }
}

impl From<EngineError> for MappingError {
    fn from(e: EngineError) -> MappingError {
        MappingError::Engine(e)
    }
}

/// Counts each hint set's supporters among the neighbors.
pub fn vote_tally(neighbors: &[Neighbor<'_>]) -> BTreeMap<HintSet, usize> {
    let mut counts = BTreeMap::new();
    for n in neighbors {
        *counts.entry(n.triple.best_hints).or_insert(0) += 1;
    }
    counts
}

/// The most popular non-default hint set among the neighbors.
///
/// Ties go to the hint set with the closest supporter; if that still ties
/// (the list is sorted by distance, so only exactly equal supporter
/// distances can), the smaller bitstring wins. Returns `None` when every
/// neighbor voted default.
pub fn vote_candidate(neighbors: &[Neighbor<'_>]) -> Option<HintSet> {
    let mut ballots: BTreeMap<HintSet, (usize, f64)> = BTreeMap::new();
    for n in neighbors {
        if n.triple.best_hints.is_default() {
            continue;
        }
        let entry = ballots.entry(n.triple.best_hints).or_insert((0, n.distance));
        entry.0 += 1;
        if n.distance < entry.1 {
            entry.1 = n.distance;
        }
    }
    ballots
        .into_iter()
        .min_by(|(ha, (ca, da)), (hb, (cb, db))| {
            cb.cmp(ca).then(da.total_cmp(db)).then(ha.cmp(hb))
        })
        .map(|(hints, _)| hints)
}

/// Result of the two-neighborhood consistency check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsistencyOutcome {
    pub mean_default_ms: f64,
    pub mean_candidate_ms: f64,
    /// True iff the candidate neighborhood is strictly faster on average.
    pub accepted: bool,
}

fn mean_latency(neighbors: &[Neighbor<'_>], side: Side) -> f64 {
    let sum: f64 = neighbors
        .iter()
        .map(|n| match side {
            Side::Default => n.triple.default_latency_ms,
            Side::Optimized => n.triple.optimized_latency_ms,
        })
        .sum();
    sum / neighbors.len() as f64
}

/// Compares the K-neighborhood of the default plan (default side, default
/// latencies) against the K-neighborhood of the candidate plan (optimized
/// side, optimized latencies). Equal means reject: a candidate has to earn
/// its switch.
pub fn consistency_check(
    default_vec: &EmbeddingVector,
    candidate_vec: &EmbeddingVector,
    store: &ReferenceStore,
    params: MappingParams,
) -> Result<ConsistencyOutcome, MappingError> {
    params.validate()?;
    let around_default = store.knn_default(default_vec, params.check_neighbors)?;
    let around_candidate = store.knn_optimized(candidate_vec, params.check_neighbors)?;
    let mean_default_ms = mean_latency(&around_default, Side::Default);
    let mean_candidate_ms = mean_latency(&around_candidate, Side::Optimized);
    Ok(ConsistencyOutcome {
        mean_default_ms,
        mean_candidate_ms,
        accepted: mean_candidate_ms < mean_default_ms,
    })
}

/// Runs the whole fast path for one query, given its default plan.
///
/// Pure given its inputs: re-running with the same store, embedder, and
/// engine state reproduces the decision bit for bit.
pub fn map_plan(
    engine: &dyn QueryEngine,
    default_plan: &ExecutionPlan,
    embedder: &dyn Embedder,
    store: &ReferenceStore,
    params: MappingParams,
) -> Result<MappingDecision, MappingError> {
    params.validate()?;
    if store.is_empty() {
        return Err(MappingError::Store(StoreError::EmptyStore));
    }
    let default_text = render_plan_text(default_plan);
    let default_vec = embedder.embed_text(&default_text)?;
    let voters = store.knn_default(&default_vec, params.vote_neighbors)?;
    let vote_counts = vote_tally(&voters);
    let candidate = match vote_candidate(&voters) {
        Some(c) => c,
        None => return Ok(MappingDecision::rejected(None, vote_counts)),
    };

    let candidate_plan = engine.plan(&candidate)?;
    if fingerprint(&candidate_plan) == fingerprint(default_plan) {
        // The hints did not move the optimizer; switching would be a no-op
        // risk with no possible gain.
        return Ok(MappingDecision::rejected(Some(candidate), vote_counts));
    }

    let candidate_text = render_plan_text(&candidate_plan);
    let candidate_vec = embedder.embed_text(&candidate_text)?;
    let outcome = consistency_check(&default_vec, &candidate_vec, store, params)?;
    Ok(MappingDecision {
        candidate: Some(candidate),
        accepted: outcome.accepted,
        mean_default_ms: Some(outcome.mean_default_ms),
        mean_candidate_ms: Some(outcome.mean_candidate_ms),
        vote_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use crate::engine::Execution;
    use crate::plan::{Operator, PlanNode};
    use crate::store::ReferenceTriple;

    fn vec_of(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    fn plan_named(op: Operator, rel: &str) -> ExecutionPlan {
        ExecutionPlan::new(PlanNode::scan(op, rel), "q")
    }

    fn triple_at(
        id: &str,
        d: &[f64],
        o: &[f64],
        hints: &str,
        t_def: f64,
        t_opt: f64,
    ) -> ReferenceTriple {
        ReferenceTriple {
            query_id: id.into(),
            default_vec: vec_of(d),
            default_fingerprint: crate::plan::fingerprint(&plan_named(Operator::SeqScan, id)),
            best_hints: HintSet::parse_bits(hints).unwrap(),
            optimized_vec: vec_of(o),
            default_latency_ms: t_def,
            optimized_latency_ms: t_opt,
        }
    }

    #[test]
    fn vote_ignores_default_supporters() {
        let t1 = triple_at("a", &[0.0, 0.0], &[0.0, 0.0], "0000000", 5.0, 5.0);
        let t2 = triple_at("b", &[0.0, 1.0], &[0.0, 1.0], "0000000", 5.0, 5.0);
        let neighbors = [
            Neighbor { triple: &t1, distance: 0.0 },
            Neighbor { triple: &t2, distance: 1.0 },
        ];
        assert_eq!(vote_candidate(&neighbors), None);
        let tally = vote_tally(&neighbors);
        assert_eq!(tally.get(&HintSet::DEFAULT), Some(&2));
    }

    #[test]
    fn vote_picks_the_most_popular_candidate() {
        let default_t = triple_at("d", &[0.0, 0.0], &[0.0, 0.0], "0000000", 5.0, 5.0);
        let a = triple_at("a", &[0.0, 1.0], &[1.0, 1.0], "0000001", 9.0, 4.0);
        let b = triple_at("b", &[0.0, 2.0], &[2.0, 1.0], "0010000", 9.0, 4.0);
        let mut neighbors = Vec::new();
        for i in 0..2 {
            neighbors.push(Neighbor { triple: &default_t, distance: 0.1 * i as f64 });
        }
        for i in 0..9 {
            neighbors.push(Neighbor { triple: &a, distance: 0.2 + 0.1 * i as f64 });
        }
        for i in 0..5 {
            neighbors.push(Neighbor { triple: &b, distance: 0.2 + 0.1 * i as f64 });
        }
        neighbors.sort_by(|x, y| x.distance.total_cmp(&y.distance));
        assert_eq!(vote_candidate(&neighbors), Some(HintSet::parse_bits("0000001").unwrap()));
        let tally = vote_tally(&neighbors);
        assert_eq!(tally.get(&HintSet::parse_bits("0000001").unwrap()), Some(&9));
        assert_eq!(tally.get(&HintSet::parse_bits("0010000").unwrap()), Some(&5));
        assert_eq!(tally.get(&HintSet::DEFAULT), Some(&2));
    }

    #[test]
    fn vote_tie_goes_to_the_closer_supporter() {
        let a = triple_at("a", &[0.0, 1.0], &[1.0, 1.0], "0100000", 9.0, 4.0);
        let b = triple_at("b", &[0.0, 2.0], &[2.0, 1.0], "0000010", 9.0, 4.0);
        let mut neighbors = Vec::new();
        // Six supporters each; b's closest sits at 0.1, a's at 0.3.
        for i in 0..6 {
            neighbors.push(Neighbor { triple: &a, distance: 0.3 + 0.1 * i as f64 });
            neighbors.push(Neighbor { triple: &b, distance: 0.1 + 0.15 * i as f64 });
        }
        neighbors.sort_by(|x, y| x.distance.total_cmp(&y.distance));
        assert_eq!(vote_candidate(&neighbors), Some(HintSet::parse_bits("0000010").unwrap()));
    }

    #[test]
    fn vote_tie_with_equal_distances_takes_smaller_bitstring() {
        let hi = triple_at("hi", &[0.0, 1.0], &[1.0, 1.0], "1000000", 9.0, 4.0);
        let lo = triple_at("lo", &[0.0, 2.0], &[2.0, 1.0], "0000001", 9.0, 4.0);
        let neighbors = [
            Neighbor { triple: &hi, distance: 0.5 },
            Neighbor { triple: &lo, distance: 0.5 },
        ];
        assert_eq!(vote_candidate(&neighbors), Some(HintSet::parse_bits("0000001").unwrap()));
    }

    #[test]
    fn vote_on_empty_neighborhood_is_none() {
        assert_eq!(vote_candidate(&[]), None);
        assert!(vote_tally(&[]).is_empty());
    }

    /// Store laid out so that the default plan's neighborhood is slow and
    /// the candidate plan's neighborhood fast.
    fn check_store() -> ReferenceStore {
        let mut store = ReferenceStore::new();
        store
            .insert(triple_at("s1", &[0.0, 0.0], &[10.0, 10.0], "0000001", 100.0, 10.0))
            .unwrap();
        store
            .insert(triple_at("s2", &[0.1, 0.0], &[10.1, 10.0], "0000001", 120.0, 12.0))
            .unwrap();
        store
            .insert(triple_at("s3", &[0.0, 0.1], &[10.0, 10.1], "0000001", 110.0, 11.0))
            .unwrap();
        store
    }

    #[test]
    fn consistency_accepts_strictly_faster_neighborhood() {
        let store = check_store();
        let params = MappingParams { vote_neighbors: 3, check_neighbors: 3 };
        let outcome = consistency_check(
            &vec_of(&[0.0, 0.0]),
            &vec_of(&[10.0, 10.0]),
            &store,
            params,
        )
        .unwrap();
        assert_eq!(outcome.mean_default_ms, 110.0);
        assert_eq!(outcome.mean_candidate_ms, 11.0);
        assert!(outcome.accepted);
    }

    #[test]
    fn consistency_rejects_equal_means() {
        let mut store = ReferenceStore::new();
        store
            .insert(triple_at("s1", &[0.0, 0.0], &[10.0, 10.0], "0000001", 50.0, 50.0))
            .unwrap();
        let params = MappingParams { vote_neighbors: 1, check_neighbors: 1 };
        let outcome = consistency_check(
            &vec_of(&[0.0, 0.0]),
            &vec_of(&[10.0, 10.0]),
            &store,
            params,
        )
        .unwrap();
        assert_eq!(outcome.mean_default_ms, outcome.mean_candidate_ms);
        assert!(!outcome.accepted, "a tie must not justify switching plans");
    }

    #[test]
    fn params_must_be_positive() {
        let store = check_store();
        let bad = MappingParams { vote_neighbors: 0, check_neighbors: 3 };
        assert_eq!(
            consistency_check(&vec_of(&[0.0, 0.0]), &vec_of(&[0.0, 0.0]), &store, bad).unwrap_err(),
            MappingError::InvalidParams
        );
    }

    /// Tiny engine whose plan depends only on whether seqscan is disabled.
    struct ToyEngine;

    impl QueryEngine for ToyEngine {
        fn plan(&self, hints: &HintSet) -> Result<ExecutionPlan, EngineError> {
            let op = if hints.is_disabled(3) {
                Operator::IndexScan
            } else {
                Operator::SeqScan
            };
            Ok(plan_named(op, "t"))
        }

        fn execute(&self, hints: &HintSet, _timeout_ms: Option<f64>) -> Result<Execution, EngineError> {
            let latency_ms = if hints.is_disabled(3) { 10.0 } else { 100.0 };
            Ok(Execution::Completed { latency_ms })
        }
    }

    /// Builds a store around ToyEngine's two plan texts: neighbors of the
    /// default plan all vote "0001000" and the optimized neighborhoods are
    /// fast, so the fast path should accept.
    fn toy_store(embedder: &HashEmbedder, optimized_fast: bool) -> ReferenceStore {
        let default_text = render_plan_text(&ToyEngine.plan(&HintSet::DEFAULT).unwrap());
        let hinted = HintSet::parse_bits("0001000").unwrap();
        let optimized_text = render_plan_text(&ToyEngine.plan(&hinted).unwrap());
        let d_vec = embedder.embed_text(&default_text).unwrap();
        let o_vec = embedder.embed_text(&optimized_text).unwrap();
        let t_opt = if optimized_fast { 10.0 } else { 100.0 };
        let mut store = ReferenceStore::new();
        for i in 0..4 {
            store
                .insert(ReferenceTriple {
                    query_id: alloc::format!("ref{i}"),
                    default_vec: d_vec.clone(),
                    default_fingerprint: fingerprint(&ToyEngine.plan(&HintSet::DEFAULT).unwrap()),
                    best_hints: hinted,
                    optimized_vec: o_vec.clone(),
                    default_latency_ms: 100.0,
                    optimized_latency_ms: t_opt,
                })
                .unwrap();
        }
        store
    }

    #[test]
    fn map_plan_accepts_a_consistent_candidate() {
        let embedder = HashEmbedder::default();
        let store = toy_store(&embedder, true);
        let default_plan = ToyEngine.plan(&HintSet::DEFAULT).unwrap();
        let params = MappingParams { vote_neighbors: 4, check_neighbors: 4 };
        let decision = map_plan(&ToyEngine, &default_plan, &embedder, &store, params).unwrap();
        assert_eq!(decision.candidate, Some(HintSet::parse_bits("0001000").unwrap()));
        assert!(decision.accepted);
        assert_eq!(decision.mean_default_ms, Some(100.0));
        assert_eq!(decision.mean_candidate_ms, Some(10.0));
        assert_eq!(
            decision.vote_counts.get(&HintSet::parse_bits("0001000").unwrap()),
            Some(&4)
        );
    }

    #[test]
    fn map_plan_rejects_when_candidate_neighborhood_is_not_faster() {
        let embedder = HashEmbedder::default();
        let store = toy_store(&embedder, false);
        let default_plan = ToyEngine.plan(&HintSet::DEFAULT).unwrap();
        let params = MappingParams { vote_neighbors: 4, check_neighbors: 4 };
        let decision = map_plan(&ToyEngine, &default_plan, &embedder, &store, params).unwrap();
        assert_eq!(decision.candidate, Some(HintSet::parse_bits("0001000").unwrap()));
        assert!(!decision.accepted);
    }

    /// Engine whose plan never reacts to hints at all.
    struct InertEngine;

    impl QueryEngine for InertEngine {
        fn plan(&self, _hints: &HintSet) -> Result<ExecutionPlan, EngineError> {
            Ok(plan_named(Operator::SeqScan, "t"))
        }

        fn execute(&self, _hints: &HintSet, _timeout_ms: Option<f64>) -> Result<Execution, EngineError> {
            Ok(Execution::Completed { latency_ms: 50.0 })
        }
    }

    #[test]
    fn map_plan_rejects_candidates_that_do_not_change_the_plan() {
        let embedder = HashEmbedder::default();
        // Store votes for a hint set, but InertEngine's plan is immune.
        let default_plan = InertEngine.plan(&HintSet::DEFAULT).unwrap();
        let d_vec = embedder
            .embed_text(&render_plan_text(&default_plan))
            .unwrap();
        let mut store = ReferenceStore::new();
        store
            .insert(ReferenceTriple {
                query_id: "ref0".into(),
                default_vec: d_vec.clone(),
                default_fingerprint: fingerprint(&default_plan),
                best_hints: HintSet::parse_bits("0000001").unwrap(),
                optimized_vec: d_vec,
                default_latency_ms: 100.0,
                optimized_latency_ms: 10.0,
            })
            .unwrap();
        let params = MappingParams { vote_neighbors: 1, check_neighbors: 1 };
        let decision = map_plan(&InertEngine, &default_plan, &embedder, &store, params).unwrap();
        assert_eq!(decision.candidate, Some(HintSet::parse_bits("0000001").unwrap()));
        assert!(!decision.accepted);
        assert_eq!(decision.mean_default_ms, None, "consistency check must not even run");
    }

    #[test]
    fn map_plan_requires_a_non_empty_store() {
        let embedder = HashEmbedder::default();
        let default_plan = ToyEngine.plan(&HintSet::DEFAULT).unwrap();
        let decision = map_plan(
            &ToyEngine,
            &default_plan,
            &embedder,
            &ReferenceStore::new(),
            MappingParams::default(),
        );
        assert_eq!(decision.unwrap_err(), MappingError::Store(StoreError::EmptyStore));
    }

    #[test]
    fn map_plan_is_reproducible() {
        let embedder = HashEmbedder::default();
        let store = toy_store(&embedder, true);
        let default_plan = ToyEngine.plan(&HintSet::DEFAULT).unwrap();
        let params = MappingParams { vote_neighbors: 4, check_neighbors: 4 };
        let first = map_plan(&ToyEngine, &default_plan, &embedder, &store, params).unwrap();
        let second = map_plan(&ToyEngine, &default_plan, &embedder, &store, params).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.mean_default_ms.map(f64::to_bits), second.mean_default_ms.map(f64::to_bits));
    }

    #[test]
    fn accepted_decisions_never_carry_the_default_set() {
        // vote_candidate skips default votes by construction; exercise the
        // full path with a store that mixes default and non-default voters.
        let embedder = HashEmbedder::default();
        let mut store = toy_store(&embedder, true);
        let default_plan = ToyEngine.plan(&HintSet::DEFAULT).unwrap();
        let d_vec = embedder
            .embed_text(&render_plan_text(&default_plan))
            .unwrap();
        store
            .insert(ReferenceTriple {
                query_id: "self".into(),
                default_vec: d_vec.clone(),
                default_fingerprint: fingerprint(&default_plan),
                best_hints: HintSet::DEFAULT,
                optimized_vec: d_vec,
                default_latency_ms: 100.0,
                optimized_latency_ms: 100.0,
            })
            .unwrap();
        for k in 1..=5 {
            let params = MappingParams { vote_neighbors: k, check_neighbors: k };
            let decision = map_plan(&ToyEngine, &default_plan, &embedder, &store, params).unwrap();
            if let Some(c) = decision.candidate {
                assert!(!c.is_default());
            }
            if decision.accepted {
                assert!(decision.candidate.is_some());
            }
        }
    }
}
