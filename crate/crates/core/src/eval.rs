//! Cross-validated evaluation of the mapping engine on a synthetic workload.
//!
//! Queries are dealt into seeded folds; each fold's reference store is built
//! from the remaining queries using the exact per-query oracle, so fold
//! numbers measure mapping quality rather than search noise. The same folds
//! can be replayed under four variants (embedding or Levenshtein retrieval,
//! consistency check on or off) to show what each stage contributes.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::{levenshtein_distance, EmbedError, Embedder};
use crate::engine::EngineError;
use crate::hints::HintSet;
use crate::mapping::{map_plan, vote_candidate, MappingError, MappingParams};
use crate::plan::{fingerprint, render_plan_text, PlanFingerprint};
use crate::store::{Neighbor, ReferenceStore, ReferenceTriple, Side, StoreError};
use crate::synth::{OracleBest, SyntheticWorkload};

/// Per-query facts shared by every fold and variant: the default plan's
/// identity and latency plus the brute-force optimum. Computed once so an
/// ablation does not re-run the oracle four times over.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub default_ms: Vec<f64>,
    pub default_text: Vec<String>,
    pub default_fingerprint: Vec<PlanFingerprint>,
    pub oracle: Vec<OracleBest>,
}

impl GroundTruth {
    pub fn compute(workload: &SyntheticWorkload) -> Result<GroundTruth, EngineError> {
        let n = workload.queries.len();
        let mut truth = GroundTruth {
            default_ms: Vec::with_capacity(n),
            default_text: Vec::with_capacity(n),
            default_fingerprint: Vec::with_capacity(n),
            oracle: Vec::with_capacity(n),
        };
        for query in &workload.queries {
            let plan = workload.plan(query, &HintSet::DEFAULT)?;
            truth.default_text.push(render_plan_text(&plan));
            truth.default_fingerprint.push(fingerprint(&plan));
            truth.default_ms.push(workload.latency_ms(query, &HintSet::DEFAULT)?);
            truth.oracle.push(workload.oracle_best(query));
        }
        Ok(truth)
    }
}

/// How test queries look up their training neighbors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RetrievalMetric {
    Embedding,
    Levenshtein,
}

impl fmt::Display for RetrievalMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RetrievalMetric::Embedding => "embedding",
            RetrievalMetric::Levenshtein => "levenshtein",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CrossvalConfig {
    pub folds: usize,
    pub fold_seed: u64,
    pub params: MappingParams,
    pub metric: RetrievalMetric,
    pub consistency_check: bool,
    /// Threshold for the timeout counters, in ms. `None` derives one from
    /// the workload: the 0.999 quantile of its default latencies, a cutoff
    /// only the slowest runs cross.
    pub timeout_ms: Option<f64>,
}

impl Default for CrossvalConfig {
    fn default() -> CrossvalConfig {
        CrossvalConfig {
            folds: 10,
            fold_seed: 0,
            params: MappingParams::default(),
            metric: RetrievalMetric::Embedding,
            consistency_check: true,
            timeout_ms: None,
        }
    }
}

#[derive(Debug)]
pub enum EvalError {
    /// Fold count must be between 2 and the number of queries.
    InvalidFoldCount { folds: usize, queries: usize },
    /// Percentile bands slice the workload into ten groups, so ten queries
    /// is the floor.
    TooFewQueries { queries: usize },
    Mapping(MappingError),
    Engine(EngineError),
    Embed(EmbedError),
    Store(StoreError),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::InvalidFoldCount { folds, queries } => write!(
                f,
                "fold count {folds} is outside 2..={queries}"
            ),
            EvalError::TooFewQueries { queries } => write!(
                f,
                "evaluation needs at least ten queries, got {queries}"
            ),
            EvalError::Mapping(e) => write!(f, "{e}"),
            EvalError::Engine(e) => write!(f, "{e}"),
            EvalError::Embed(e) => write!(f, "{e}"),
            EvalError::Store(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for EvalError {}

impl From<MappingError> for EvalError {
    fn from(e: MappingError) -> EvalError {
        EvalError::Mapping(e)
    }
}

impl From<EngineError> for EvalError {
    fn from(e: EngineError) -> EvalError {
        EvalError::Engine(e)
    }
}

impl From<EmbedError> for EvalError {
    fn from(e: EmbedError) -> EvalError {
        EvalError::Embed(e)
    }
}

impl From<StoreError> for EvalError {
    fn from(e: StoreError) -> EvalError {
        EvalError::Store(e)
    }
}

/// Deals query indices into `folds` groups of equal size (within one), in a
/// seeded shuffled order. Returns each query's fold index.
pub fn assign_folds(queries: usize, folds: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    if folds < 2 || folds > queries {
        return Err(EvalError::InvalidFoldCount { folds, queries });
    }
    let mut order: Vec<usize> = (0..queries).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold_of = vec![0usize; queries];
    for (position, &query) in order.iter().enumerate() {
        fold_of[query] = position % folds;
    }
    Ok(fold_of)
}

/// One fold's reference store plus the plan texts behind every triple, kept
/// in insertion order so Levenshtein retrieval scores exactly the entries
/// the vector store holds.
pub struct TrainStore {
    pub store: ReferenceStore,
    pub entries: Vec<TrainEntry>,
}

pub struct TrainEntry {
    pub default_text: String,
    pub optimized_text: String,
}

/// Builds a fold's store from the exact oracle: every training query
/// contributes one triple with its true best hint set and latencies, no
/// timeout pruning in the way.
pub fn build_train_store(
    workload: &SyntheticWorkload,
    truth: &GroundTruth,
    embedder: &dyn Embedder,
    train: &[usize],
) -> Result<TrainStore, EvalError> {
    let mut store = ReferenceStore::new();
    let mut entries = Vec::with_capacity(train.len());
    for &qi in train {
        let query = &workload.queries[qi];
        let best = &truth.oracle[qi];
        let default_text = truth.default_text[qi].clone();
        let default_vec = embedder.embed_text(&default_text)?;
        let (optimized_text, optimized_vec) = if best.best_hints.is_default() {
            (default_text.clone(), default_vec.clone())
        } else {
            let plan = workload.plan(query, &best.best_hints)?;
            let text = render_plan_text(&plan);
            let vec = embedder.embed_text(&text)?;
            (text, vec)
        };
        store.insert(ReferenceTriple {
            query_id: query.query_id.clone(),
            default_vec,
            default_fingerprint: truth.default_fingerprint[qi].clone(),
            best_hints: best.best_hints,
            optimized_vec,
            default_latency_ms: truth.default_ms[qi],
            optimized_latency_ms: best.min_latency_ms,
        })?;
        entries.push(TrainEntry {
            default_text,
            optimized_text,
        });
    }
    Ok(TrainStore { store, entries })
}

/// Memoizes Levenshtein distances between interned plan texts. Plans are
/// template-shaped, so a workload produces only a handful of distinct
/// strings and a full cross-validation touches each pair once.
struct LevCache {
    ids: BTreeMap<String, usize>,
    distances: BTreeMap<(usize, usize), usize>,
}

impl LevCache {
    fn new() -> LevCache {
        LevCache {
            ids: BTreeMap::new(),
            distances: BTreeMap::new(),
        }
    }

    fn intern(&mut self, text: &str) -> usize {
        if let Some(&id) = self.ids.get(text) {
            return id;
        }
        let id = self.ids.len();
        self.ids.insert(text.to_string(), id);
        id
    }

    fn distance(&mut self, a: &str, b: &str) -> usize {
        let (ia, ib) = (self.intern(a), self.intern(b));
        let key = (ia.min(ib), ia.max(ib));
        if let Some(&d) = self.distances.get(&key) {
            return d;
        }
        let d = levenshtein_distance(a, b);
        self.distances.insert(key, d);
        d
    }
}

/// The `k` training entries nearest to `text` by Levenshtein distance over
/// the requested side's plan text, ties broken by insertion order exactly
/// like the vector store.
fn lev_knn<'a>(
    train: &'a TrainStore,
    cache: &mut LevCache,
    text: &str,
    k: usize,
    side: Side,
) -> Vec<Neighbor<'a>> {
    let mut scored: Vec<(usize, usize)> = train
        .entries
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let other = match side {
                Side::Default => &entry.default_text,
                Side::Optimized => &entry.optimized_text,
            };
            (cache.distance(text, other), i)
        })
        .collect();
    scored.sort_unstable();
    scored
        .into_iter()
        .take(k.min(train.entries.len()))
        .map(|(d, i)| Neighbor {
            triple: train.store.get(i).expect("entries parallel the store"),
            distance: d as f64,
        })
        .collect()
}

/// Picks the hint set one variant would run for one test query. Returns the
/// default set whenever no candidate survives the variant's screens.
fn decide(
    workload: &SyntheticWorkload,
    truth: &GroundTruth,
    qi: usize,
    train: &TrainStore,
    embedder: &dyn Embedder,
    config: &CrossvalConfig,
    cache: &mut LevCache,
) -> Result<HintSet, EvalError> {
    let query = &workload.queries[qi];
    match config.metric {
        RetrievalMetric::Embedding => {
            if config.consistency_check {
                // The flagship variant is the shipped fast path itself, not
                // a reimplementation of it.
                let engine = workload.engine_for(query);
                let plan = workload.plan(query, &HintSet::DEFAULT)?;
                let decision = map_plan(&engine, &plan, embedder, &train.store, config.params)?;
                return Ok(match (decision.accepted, decision.candidate) {
                    (true, Some(candidate)) => candidate,
                    _ => HintSet::DEFAULT,
                });
            }
            let probe = embedder.embed_text(&truth.default_text[qi])?;
            let voters = train.store.knn_default(&probe, config.params.vote_neighbors)?;
            let candidate = match vote_candidate(&voters) {
                Some(c) => c,
                None => return Ok(HintSet::DEFAULT),
            };
            let plan = workload.plan(query, &candidate)?;
            if fingerprint(&plan) == truth.default_fingerprint[qi] {
                Ok(HintSet::DEFAULT)
            } else {
                Ok(candidate)
            }
        }
        RetrievalMetric::Levenshtein => {
            let probe_text = &truth.default_text[qi];
            let voters = lev_knn(train, cache, probe_text, config.params.vote_neighbors, Side::Default);
            let candidate = match vote_candidate(&voters) {
                Some(c) => c,
                None => return Ok(HintSet::DEFAULT),
            };
            let plan = workload.plan(query, &candidate)?;
            let candidate_text = render_plan_text(&plan);
            if candidate_text == *probe_text {
                return Ok(HintSet::DEFAULT);
            }
            if !config.consistency_check {
                return Ok(candidate);
            }
            let around_default =
                lev_knn(train, cache, probe_text, config.params.check_neighbors, Side::Default);
            let around_candidate = lev_knn(
                train,
                cache,
                &candidate_text,
                config.params.check_neighbors,
                Side::Optimized,
            );
            let mean_default = around_default
                .iter()
                .map(|n| n.triple.default_latency_ms)
                .sum::<f64>()
                / around_default.len() as f64;
            let mean_candidate = around_candidate
                .iter()
                .map(|n| n.triple.optimized_latency_ms)
                .sum::<f64>()
                / around_candidate.len() as f64;
            if mean_candidate < mean_default {
                Ok(candidate)
            } else {
                Ok(HintSet::DEFAULT)
            }
        }
    }
}

/// Aggregate result of one held-out fold.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldReport {
    pub fold_index: usize,
    pub total_default_ms: f64,
    pub total_chosen_ms: f64,
    pub speedup_pct: f64,
    pub n_faster: usize,
    pub n_slower: usize,
    pub n_unchanged: usize,
    pub n_timeouts: usize,
}

/// Workload-level rollup across all folds.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossvalSummary {
    pub mean_fold_speedup_pct: f64,
    pub total_speedup_pct: f64,
    pub max_achievable_speedup_pct: f64,
    pub frac_faster: f64,
    pub frac_slower: f64,
    pub frac_unchanged: f64,
    pub p90_change_pct: f64,
    pub median_change_pct: f64,
}

/// One decile of the workload ordered by default latency.
#[derive(Clone, Debug, PartialEq)]
pub struct PercentileBand {
    pub upper_bound: f64,
    pub mean_default_ms: f64,
    pub mean_boosted_ms: f64,
    pub boost_pct: f64,
}

/// One test query's outcome under a variant.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryOutcome {
    pub query_id: String,
    pub fold_index: usize,
    pub default_ms: f64,
    pub chosen_ms: f64,
    pub hints_applied: HintSet,
    pub plan_changed: bool,
    pub timed_out: bool,
}

#[derive(Clone, Debug)]
pub struct CrossvalOutput {
    pub folds: Vec<FoldReport>,
    pub summary: CrossvalSummary,
    pub bands: Vec<PercentileBand>,
    /// One row per workload query, in workload order.
    pub outcomes: Vec<QueryOutcome>,
    /// The threshold the timeout counters actually used.
    pub timeout_ms: f64,
}

fn speedup_pct(total_default: f64, total_chosen: f64) -> f64 {
    100.0 * (total_default - total_chosen) / total_default
}

fn derived_timeout(truth: &GroundTruth) -> f64 {
    let mut sorted = truth.default_ms.clone();
    sorted.sort_by(f64::total_cmp);
    nearest_rank(&sorted, 0.999)
}

/// Nearest-rank quantile over an ascending slice.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = (libm::ceil(p * n as f64) as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Runs one variant over every fold. Each query is tested exactly once,
/// against a store built from all queries outside its fold.
pub fn run_crossval(
    workload: &SyntheticWorkload,
    truth: &GroundTruth,
    embedder: &dyn Embedder,
    config: &CrossvalConfig,
) -> Result<CrossvalOutput, EvalError> {
    let n = workload.queries.len();
    if n < 10 {
        return Err(EvalError::TooFewQueries { queries: n });
    }
    config.params.validate()?;
    let fold_of = assign_folds(n, config.folds, config.fold_seed)?;
    let timeout_ms = config.timeout_ms.unwrap_or_else(|| derived_timeout(truth));
    let mut cache = LevCache::new();
    let mut outcomes: Vec<Option<QueryOutcome>> = vec![None; n];
    let mut folds = Vec::with_capacity(config.folds);

    for fold_index in 0..config.folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold_index).collect();
        let store = build_train_store(workload, truth, embedder, &train)?;
        let mut total_default_ms = 0.0;
        let mut total_chosen_ms = 0.0;
        let (mut n_faster, mut n_slower, mut n_unchanged, mut n_timeouts) = (0, 0, 0, 0);

        for qi in (0..n).filter(|&i| fold_of[i] == fold_index) {
            let chosen = decide(workload, truth, qi, &store, embedder, config, &mut cache)?;
            let query = &workload.queries[qi];
            let chosen_ms = workload.latency_ms(query, &chosen)?;
            let default_ms = truth.default_ms[qi];
            let plan_changed = !chosen.is_default()
                && fingerprint(&workload.plan(query, &chosen)?) != truth.default_fingerprint[qi];
            let timed_out = chosen_ms > timeout_ms;
            if !plan_changed {
                n_unchanged += 1;
            } else if chosen_ms < default_ms {
                n_faster += 1;
            } else {
                n_slower += 1;
            }
            if timed_out {
                n_timeouts += 1;
            }
            total_default_ms += default_ms;
            total_chosen_ms += chosen_ms;
            outcomes[qi] = Some(QueryOutcome {
                query_id: query.query_id.clone(),
                fold_index,
                default_ms,
                chosen_ms,
                hints_applied: chosen,
                plan_changed,
                timed_out,
            });
        }

        folds.push(FoldReport {
            fold_index,
            total_default_ms,
            total_chosen_ms,
            speedup_pct: speedup_pct(total_default_ms, total_chosen_ms),
            n_faster,
            n_slower,
            n_unchanged,
            n_timeouts,
        });
    }

    let outcomes: Vec<QueryOutcome> = outcomes
        .into_iter()
        .map(|o| o.expect("every query lands in exactly one fold"))
        .collect();
    let summary = summarize(&folds, &outcomes, truth);
    let bands = percentile_bands(&outcomes);
    Ok(CrossvalOutput {
        folds,
        summary,
        bands,
        outcomes,
        timeout_ms,
    })
}

fn summarize(folds: &[FoldReport], outcomes: &[QueryOutcome], truth: &GroundTruth) -> CrossvalSummary {
    let n = outcomes.len();
    let total_default: f64 = outcomes.iter().map(|o| o.default_ms).sum();
    let total_chosen: f64 = outcomes.iter().map(|o| o.chosen_ms).sum();
    let total_best: f64 = truth.oracle.iter().map(|o| o.min_latency_ms).sum();
    let faster = outcomes
        .iter()
        .filter(|o| o.plan_changed && o.chosen_ms < o.default_ms)
        .count();
    let slower = outcomes
        .iter()
        .filter(|o| o.plan_changed && o.chosen_ms >= o.default_ms)
        .count();
    let unchanged = n - faster - slower;
    let mut changes: Vec<f64> = outcomes
        .iter()
        .map(|o| 100.0 * (o.default_ms - o.chosen_ms) / o.default_ms)
        .collect();
    changes.sort_by(f64::total_cmp);
    CrossvalSummary {
        mean_fold_speedup_pct: folds.iter().map(|f| f.speedup_pct).sum::<f64>() / folds.len() as f64,
        total_speedup_pct: speedup_pct(total_default, total_chosen),
        max_achievable_speedup_pct: speedup_pct(total_default, total_best),
        frac_faster: faster as f64 / n as f64,
        frac_slower: slower as f64 / n as f64,
        frac_unchanged: unchanged as f64 / n as f64,
        p90_change_pct: nearest_rank(&changes, 0.9),
        median_change_pct: nearest_rank(&changes, 0.5),
    }
}

/// Ten equal-count slices (within one query, the remainder going to the
/// last slices) of the workload ordered by default latency, comparing
/// default and chosen mean latencies per slice.
fn percentile_bands(outcomes: &[QueryOutcome]) -> Vec<PercentileBand> {
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| {
        outcomes[a]
            .default_ms
            .total_cmp(&outcomes[b].default_ms)
            .then(a.cmp(&b))
    });
    let n = order.len();
    let base = n / 10;
    let remainder = n % 10;
    let mut bands = Vec::with_capacity(10);
    let mut start = 0;
    for i in 0..10 {
        let size = base + usize::from(i >= 10 - remainder);
        let slice = &order[start..start + size];
        start += size;
        let mean_default_ms =
            slice.iter().map(|&qi| outcomes[qi].default_ms).sum::<f64>() / size as f64;
        let mean_boosted_ms =
            slice.iter().map(|&qi| outcomes[qi].chosen_ms).sum::<f64>() / size as f64;
        bands.push(PercentileBand {
            upper_bound: (i + 1) as f64 / 10.0,
            mean_default_ms,
            mean_boosted_ms,
            boost_pct: speedup_pct(mean_default_ms, mean_boosted_ms),
        });
    }
    bands
}

/// One variant's headline numbers in the ablation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub metric: RetrievalMetric,
    pub consistency_check: bool,
    pub total_speedup_pct: f64,
    pub n_timeouts: usize,
}

#[derive(Clone, Debug)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub timeout_ms: f64,
}

/// Replays identical folds under all four retrieval/consistency variants.
/// The timeout threshold is resolved once up front so the counts compare
/// like for like.
pub fn run_ablation(
    workload: &SyntheticWorkload,
    truth: &GroundTruth,
    embedder: &dyn Embedder,
    base: &CrossvalConfig,
) -> Result<AblationTable, EvalError> {
    let timeout_ms = base.timeout_ms.unwrap_or_else(|| derived_timeout(truth));
    let mut rows = Vec::with_capacity(4);
    for metric in [RetrievalMetric::Levenshtein, RetrievalMetric::Embedding] {
        for consistency_check in [false, true] {
            let config = CrossvalConfig {
                metric,
                consistency_check,
                timeout_ms: Some(timeout_ms),
                ..*base
            };
            let output = run_crossval(workload, truth, embedder, &config)?;
            rows.push(AblationRow {
                metric,
                consistency_check,
                total_speedup_pct: output.summary.total_speedup_pct,
                n_timeouts: output.folds.iter().map(|f| f.n_timeouts).sum(),
            });
        }
    }
    Ok(AblationTable { rows, timeout_ms })
}

/// Frequency table of hint sets, most common first, ties in bitstring
/// order. The counts always sum to the number of inputs.
pub fn hint_frequency<I: IntoIterator<Item = HintSet>>(hints: I) -> Vec<(HintSet, usize)> {
    let mut counts: BTreeMap<HintSet, usize> = BTreeMap::new();
    for h in hints {
        *counts.entry(h).or_insert(0) += 1;
    }
    let mut rows: Vec<(HintSet, usize)> = counts.into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use crate::synth::WorkloadParams;

    fn small_workload(queries: usize) -> SyntheticWorkload {
        let params = WorkloadParams {
            template_count: 6,
            query_count: queries,
            derived_template_count: 1,
            ..WorkloadParams::default()
        };
        SyntheticWorkload::generate(11, params).unwrap()
    }

    fn embedder() -> HashEmbedder {
        HashEmbedder::new(64)
    }

    #[test]
    fn folds_partition_evenly() {
        let fold_of = assign_folds(23, 5, 7).unwrap();
        assert_eq!(fold_of.len(), 23);
        let mut sizes = [0usize; 5];
        for &f in &fold_of {
            sizes[f] += 1;
        }
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert_eq!(*sizes.iter().max().unwrap() - *sizes.iter().min().unwrap(), 1);
        assert_eq!(assign_folds(23, 5, 7).unwrap(), fold_of);
        assert_ne!(assign_folds(23, 5, 8).unwrap(), fold_of);
    }

    #[test]
    fn fold_count_bounds_are_enforced() {
        assert!(matches!(
            assign_folds(10, 1, 0),
            Err(EvalError::InvalidFoldCount { folds: 1, queries: 10 })
        ));
        assert!(matches!(
            assign_folds(10, 11, 0),
            Err(EvalError::InvalidFoldCount { folds: 11, queries: 10 })
        ));
        assert!(assign_folds(10, 10, 0).is_ok());
    }

    #[test]
    fn train_store_mirrors_the_oracle() {
        let workload = small_workload(40);
        let truth = GroundTruth::compute(&workload).unwrap();
        let emb = embedder();
        let train: Vec<usize> = (0..20).collect();
        let store = build_train_store(&workload, &truth, &emb, &train).unwrap();
        assert_eq!(store.store.len(), 20);
        assert_eq!(store.entries.len(), 20);
        for (i, &qi) in train.iter().enumerate() {
            let triple = store.store.get(i).unwrap();
            assert_eq!(triple.query_id, workload.queries[qi].query_id);
            assert_eq!(triple.best_hints, truth.oracle[qi].best_hints);
            assert_eq!(triple.optimized_latency_ms, truth.oracle[qi].min_latency_ms);
            if triple.best_hints.is_default() {
                assert_eq!(store.entries[i].optimized_text, store.entries[i].default_text);
                assert_eq!(triple.optimized_latency_ms, triple.default_latency_ms);
            } else {
                assert_ne!(store.entries[i].optimized_text, store.entries[i].default_text);
            }
        }
    }

    #[test]
    fn crossval_counts_add_up() {
        let workload = small_workload(60);
        let truth = GroundTruth::compute(&workload).unwrap();
        let emb = embedder();
        let config = CrossvalConfig {
            folds: 5,
            ..CrossvalConfig::default()
        };
        let out = run_crossval(&workload, &truth, &emb, &config).unwrap();

        assert_eq!(out.folds.len(), 5);
        assert_eq!(out.outcomes.len(), 60);
        let mut total = 0;
        for fold in &out.folds {
            assert_eq!(fold.fold_index, total / 12);
            let members = fold.n_faster + fold.n_slower + fold.n_unchanged;
            assert_eq!(members, 12);
            total += members;
            let pooled: f64 = out
                .outcomes
                .iter()
                .filter(|o| o.fold_index == fold.fold_index)
                .map(|o| o.chosen_ms)
                .sum();
            assert!((pooled - fold.total_chosen_ms).abs() < 1e-9);
        }
        assert_eq!(total, 60);

        let s = &out.summary;
        assert!((s.frac_faster + s.frac_slower + s.frac_unchanged - 1.0).abs() < 1e-12);
        assert!(s.total_speedup_pct <= s.max_achievable_speedup_pct + 1e-9);
        for o in &out.outcomes {
            assert_eq!(o.plan_changed, !o.hints_applied.is_default());
        }
    }

    #[test]
    fn percentile_bands_cover_the_workload() {
        let workload = small_workload(63);
        let truth = GroundTruth::compute(&workload).unwrap();
        let emb = embedder();
        let out = run_crossval(&workload, &truth, &emb, &CrossvalConfig { folds: 7, ..CrossvalConfig::default() }).unwrap();

        assert_eq!(out.bands.len(), 10);
        for (i, band) in out.bands.iter().enumerate() {
            assert!((band.upper_bound - (i + 1) as f64 / 10.0).abs() < 1e-12);
            assert!(band.mean_default_ms > 0.0);
            assert!(band.mean_boosted_ms > 0.0);
        }
        for pair in out.bands.windows(2) {
            assert!(pair[0].mean_default_ms <= pair[1].mean_default_ms);
        }
        let band_total: f64 = out
            .bands
            .iter()
            .map(|b| b.mean_default_ms)
            .zip([6usize, 6, 6, 6, 6, 6, 6, 7, 7, 7])
            .map(|(mean, size)| mean * size as f64)
            .sum();
        let true_total: f64 = truth.default_ms.iter().sum();
        assert!((band_total - true_total).abs() < 1e-6);
    }

    #[test]
    fn chosen_latencies_are_replayable() {
        let workload = small_workload(40);
        let truth = GroundTruth::compute(&workload).unwrap();
        let emb = embedder();
        let config = CrossvalConfig {
            folds: 4,
            ..CrossvalConfig::default()
        };
        let out = run_crossval(&workload, &truth, &emb, &config).unwrap();
        for (qi, outcome) in out.outcomes.iter().enumerate() {
            let query = &workload.queries[qi];
            assert_eq!(outcome.query_id, query.query_id);
            let replay = workload.latency_ms(query, &outcome.hints_applied).unwrap();
            assert_eq!(replay, outcome.chosen_ms);
            assert_eq!(outcome.default_ms, truth.default_ms[qi]);
        }
        let rerun = run_crossval(&workload, &truth, &emb, &config).unwrap();
        assert_eq!(rerun.outcomes, out.outcomes);
    }

    #[test]
    fn levenshtein_variant_runs_the_same_folds() {
        let workload = small_workload(40);
        let truth = GroundTruth::compute(&workload).unwrap();
        let emb = embedder();
        let base = CrossvalConfig {
            folds: 4,
            ..CrossvalConfig::default()
        };
        let lev = CrossvalConfig {
            metric: RetrievalMetric::Levenshtein,
            ..base
        };
        let out_emb = run_crossval(&workload, &truth, &emb, &base).unwrap();
        let out_lev = run_crossval(&workload, &truth, &emb, &lev).unwrap();
        for (a, b) in out_emb.outcomes.iter().zip(&out_lev.outcomes) {
            assert_eq!(a.fold_index, b.fold_index);
            assert_eq!(a.default_ms, b.default_ms);
        }
    }

    #[test]
    fn consistency_off_accepts_every_surviving_candidate() {
        let workload = small_workload(50);
        let truth = GroundTruth::compute(&workload).unwrap();
        let emb = embedder();
        let on = CrossvalConfig {
            folds: 5,
            ..CrossvalConfig::default()
        };
        let off = CrossvalConfig {
            consistency_check: false,
            ..on
        };
        let out_on = run_crossval(&workload, &truth, &emb, &on).unwrap();
        let out_off = run_crossval(&workload, &truth, &emb, &off).unwrap();
        for (a, b) in out_on.outcomes.iter().zip(&out_off.outcomes) {
            if a.plan_changed {
                // The check only ever filters candidates, so anything it
                // passed must also appear when it is disabled.
                assert_eq!(a.hints_applied, b.hints_applied);
            }
        }
        let changed_on = out_on.outcomes.iter().filter(|o| o.plan_changed).count();
        let changed_off = out_off.outcomes.iter().filter(|o| o.plan_changed).count();
        assert!(changed_on <= changed_off);
    }

    #[test]
    fn ablation_covers_the_grid_once() {
        let workload = small_workload(40);
        let truth = GroundTruth::compute(&workload).unwrap();
        let emb = embedder();
        let base = CrossvalConfig {
            folds: 4,
            ..CrossvalConfig::default()
        };
        let table = run_ablation(&workload, &truth, &emb, &base).unwrap();
        assert_eq!(table.rows.len(), 4);
        assert!(table.timeout_ms > 0.0);
        let mut seen = Vec::new();
        for row in &table.rows {
            seen.push((row.metric, row.consistency_check));
        }
        seen.sort_by_key(|&(m, c)| (m == RetrievalMetric::Embedding, c));
        assert_eq!(
            seen,
            vec![
                (RetrievalMetric::Levenshtein, false),
                (RetrievalMetric::Levenshtein, true),
                (RetrievalMetric::Embedding, false),
                (RetrievalMetric::Embedding, true),
            ]
        );
    }

    #[test]
    fn huge_threshold_counts_no_timeouts() {
        let workload = small_workload(40);
        let truth = GroundTruth::compute(&workload).unwrap();
        let emb = embedder();
        let config = CrossvalConfig {
            folds: 4,
            timeout_ms: Some(1e18),
            ..CrossvalConfig::default()
        };
        let out = run_crossval(&workload, &truth, &emb, &config).unwrap();
        assert_eq!(out.timeout_ms, 1e18);
        assert!(out.folds.iter().all(|f| f.n_timeouts == 0));
        assert!(out.outcomes.iter().all(|o| !o.timed_out));
    }

    #[test]
    fn derived_threshold_sits_at_the_top_of_the_default_range() {
        let workload = small_workload(50);
        let truth = GroundTruth::compute(&workload).unwrap();
        let emb = embedder();
        let config = CrossvalConfig {
            folds: 5,
            ..CrossvalConfig::default()
        };
        let out = run_crossval(&workload, &truth, &emb, &config).unwrap();
        let above = truth
            .default_ms
            .iter()
            .filter(|&&t| t > out.timeout_ms)
            .count();
        assert_eq!(above, 0);
        assert!(truth.default_ms.contains(&out.timeout_ms));
    }

    #[test]
    fn too_few_queries_is_an_error() {
        let params = WorkloadParams {
            template_count: 4,
            query_count: 8,
            derived_template_count: 1,
            ..WorkloadParams::default()
        };
        let workload = SyntheticWorkload::generate(3, params).unwrap();
        let truth = GroundTruth::compute(&workload).unwrap();
        let emb = embedder();
        let config = CrossvalConfig {
            folds: 2,
            ..CrossvalConfig::default()
        };
        assert!(matches!(
            run_crossval(&workload, &truth, &emb, &config),
            Err(EvalError::TooFewQueries { queries: 8 })
        ));
    }

    #[test]
    fn frequency_table_sorts_and_sums() {
        let a = HintSet::parse_bits("0000001").unwrap();
        let b = HintSet::parse_bits("0000010").unwrap();
        let rows = hint_frequency([a, b, HintSet::DEFAULT, b, a, b]);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0], (b, 3));
        assert_eq!(rows[1], (a, 2));
        assert_eq!(rows[2], (HintSet::DEFAULT, 1));
        assert_eq!(rows.iter().map(|r| r.1).sum::<usize>(), 6);

        let tied = hint_frequency([b, a, a, b]);
        assert_eq!(tied[0], (a, 2));
        assert_eq!(tied[1], (b, 2));
    }

    #[test]
    fn quantile_rule_is_nearest_rank() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(nearest_rank(&sorted, 0.5), 2.0);
        assert_eq!(nearest_rank(&sorted, 0.9), 4.0);
        assert_eq!(nearest_rank(&sorted, 0.999), 4.0);
        assert_eq!(nearest_rank(&[7.5], 0.5), 7.5);
    }
}
