//! The reference store: everything the engine remembers about past queries.
//!
//! Each entry is one fully-searched query: embeddings of its default and
//! optimized plans, the canonical best hint set, and both latencies. The
//! store answers exact k-nearest-neighbor queries over either embedding
//! side by linear scan, which at the sizes involved (thousands of entries)
//! is both simple and fast enough, and has no recall error to reason about.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::embed::{euclidean_distance, EmbeddingVector};
use crate::hints::HintSet;
use crate::plan::PlanFingerprint;

/// One remembered query: default plan, best hint set, optimized plan.
///
/// If no hint set beat the default, `best_hints` is the default set and the
/// optimized side duplicates the default side exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTriple {
    pub query_id: String,
    pub default_vec: EmbeddingVector,
    pub default_fingerprint: PlanFingerprint,
    pub best_hints: HintSet,
    pub optimized_vec: EmbeddingVector,
    pub default_latency_ms: f64,
    pub optimized_latency_ms: f64,
}

impl ReferenceTriple {
    /// Checks the structural invariants every stored triple must satisfy.
    pub fn validate(&self) -> Result<(), StoreError> {
        if !self.default_latency_ms.is_finite() || !self.optimized_latency_ms.is_finite() {
            return Err(StoreError::InvariantViolation {
                query_id: self.query_id.clone(),
                detail: "latencies must be finite",
            });
        }
        if self.default_latency_ms < 0.0 || self.optimized_latency_ms < 0.0 {
            return Err(StoreError::InvariantViolation {
                query_id: self.query_id.clone(),
                detail: "latencies must be non-negative",
            });
        }
        if self.optimized_latency_ms > self.default_latency_ms {
            return Err(StoreError::InvariantViolation {
                query_id: self.query_id.clone(),
                detail: "optimized latency exceeds default latency",
            });
        }
        if self.default_vec.dimension() != self.optimized_vec.dimension() {
            return Err(StoreError::InvariantViolation {
                query_id: self.query_id.clone(),
                detail: "default and optimized embeddings differ in dimension",
            });
        }
        if self.best_hints.is_default() {
            if self.optimized_vec != self.default_vec {
                return Err(StoreError::InvariantViolation {
                    query_id: self.query_id.clone(),
                    detail: "default-best triple must reuse the default embedding",
                });
            }
            if self.optimized_latency_ms != self.default_latency_ms {
                return Err(StoreError::InvariantViolation {
                    query_id: self.query_id.clone(),
                    detail: "default-best triple must reuse the default latency",
                });
            }
        }
        Ok(())
    }
}

/// One k-NN hit: a stored triple and its distance from the probe.
#[derive(Clone, Copy, Debug)]
pub struct Neighbor<'a> {
    pub triple: &'a ReferenceTriple,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StoreError {
    EmptyStore,
    DimensionMismatch { expected: usize, got: usize },
    InvariantViolation { query_id: String, detail: &'static str },
}

impl fmt::Display for StoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreError::EmptyStore => f.write_str("reference store is empty"),
            StoreError::DimensionMismatch { expected, got } => {
                write!(f, "embedding dimension {got} does not match the store's {expected}")
            }
            StoreError::InvariantViolation { query_id, detail } => {
                write!(f, "invalid reference triple for {query_id:?}: {detail}")
            }
        }
    }
}

impl core::error::Error for StoreError {}

/// Which embedding side of the triples a retrieval runs against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Default,
    Optimized,
}

/// In-memory store of reference triples, ordered by insertion.
///
/// The embedding dimension is pinned by the first inserted triple; every
/// later triple and every probe must match it.
#[derive(Clone, Debug, Default)]
pub struct ReferenceStore {
    triples: Vec<ReferenceTriple>,
    dimension: Option<usize>,
}

impl ReferenceStore {
    pub fn new() -> ReferenceStore {
        ReferenceStore::default()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Embedding dimension of the stored triples; `None` while empty.
    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReferenceTriple> {
        self.triples.iter()
    }

    pub fn get(&self, index: usize) -> Option<&ReferenceTriple> {
        self.triples.get(index)
    }

    pub fn insert(&mut self, triple: ReferenceTriple) -> Result<(), StoreError> {
        triple.validate()?;
        match self.dimension {
            None => self.dimension = Some(triple.default_vec.dimension()),
            Some(expected) => {
                if triple.default_vec.dimension() != expected {
                    return Err(StoreError::DimensionMismatch {
                        expected,
                        got: triple.default_vec.dimension(),
                    });
                }
            }
        }
        self.triples.push(triple);
        Ok(())
    }

    /// The `k` nearest triples to `probe` by Euclidean distance over the
    /// chosen embedding side, ascending; equal distances keep insertion
    /// order. Asking for more neighbors than the store holds returns all of
    /// them.
    pub fn knn(
        &self,
        probe: &EmbeddingVector,
        k: usize,
        side: Side,
    ) -> Result<Vec<Neighbor<'_>>, StoreError> {
        if self.triples.is_empty() {
            return Err(StoreError::EmptyStore);
        }
        let expected = self.dimension.expect("non-empty store has a dimension");
        if probe.dimension() != expected {
            return Err(StoreError::DimensionMismatch {
                expected,
                got: probe.dimension(),
            });
        }
        let mut scored: Vec<(f64, usize)> = self
            .triples
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let side_vec = match side {
                    Side::Default => &t.default_vec,
                    Side::Optimized => &t.optimized_vec,
                };
                let d = euclidean_distance(probe, side_vec)
                    .expect("store insert pinned the dimension");
                (d, i)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(scored
            .into_iter()
            .take(k.min(self.triples.len()))
            .map(|(distance, i)| Neighbor {
                triple: &self.triples[i],
                distance,
            })
            .collect())
    }

    pub fn knn_default(
        &self,
        probe: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<Neighbor<'_>>, StoreError> {
        self.knn(probe, k, Side::Default)
    }

    pub fn knn_optimized(
        &self,
        probe: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<Neighbor<'_>>, StoreError> {
        self.knn(probe, k, Side::Optimized)
    }
}
