//! Plan text embeddings and the distances used for retrieval.
//!
//! The built-in embedder needs no network and no model weights: it hashes
//! character 3-grams and operator-name tokens of the rendered plan text into
//! a fixed number of signed buckets and L2-normalizes the result. Plans that
//! share operators and relation names land close together, and the unit norm
//! makes the distance insensitive to plan text length. A remote embedding
//! service can be plugged in through the [`Embedder`] trait; retrieval code
//! only sees vectors.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// A dense embedding. Construction checks that every value is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<EmbeddingVector, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::EmptyVector);
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(EmbedError::NonFiniteValue { value: *bad });
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v * v).sum())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EmbedError {
    /// Embedding input must contain at least one non-whitespace character.
    EmptyText,
    EmptyVector,
    NonFiniteValue { value: f64 },
    /// The remote provider could not be reached or kept failing.
    RemoteUnavailable { detail: String },
    /// The remote provider answered with a payload outside the wire contract.
    RemoteSchema { detail: String },
}

impl fmt::Display for EmbedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedError::EmptyText => f.write_str("cannot embed empty text"),
            EmbedError::EmptyVector => f.write_str("embedding vector must not be empty"),
            EmbedError::NonFiniteValue { value } => {
                write!(f, "embedding vector holds non-finite value {value}")
            }
            EmbedError::RemoteUnavailable { detail } => {
                write!(f, "remote embedding provider unavailable: {detail}")
            }
            EmbedError::RemoteSchema { detail } => {
                write!(f, "remote embedding response violates the wire contract: {detail}")
            }
        }
    }
}

impl core::error::Error for EmbedError {}

/// Anything that turns plan text into vectors of a fixed dimension.
pub trait Embedder {
    fn dimension(&self) -> usize;

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    /// Batch embedding; same order as the input. The default implementation
    /// just loops, network-backed implementations batch for real.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed_text(t)).collect()
    }
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(tag: u8, bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    hash ^= tag as u64;
    hash = hash.wrapping_mul(FNV_PRIME);
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

const TAG_TRIGRAM: u8 = 0x01;
const TAG_TOKEN: u8 = 0x02;

/// Weight of one operator/relation token relative to one character 3-gram.
/// Tokens are rare and meaningful, 3-grams numerous and noisy; the skew
/// keeps operator identity dominant without losing textural detail.
const TOKEN_WEIGHT: f64 = 8.0;

/// Deterministic local embedder: signed feature hashing over character
/// 3-grams plus line tokens of the plan text, L2-normalized.
///
/// Identical text gives bit-identical vectors on every platform, because the
/// only arithmetic is FNV-1a hashing and a fixed-order summation.
#[derive(Clone, Debug)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIMENSION: usize = 256;

    pub fn new(dimension: usize) -> HashEmbedder {
        assert!(dimension >= 2, "embedding dimension must be at least 2");
        HashEmbedder { dimension }
    }

    fn add_feature(&self, buckets: &mut [f64], tag: u8, bytes: &[u8], weight: f64) {
        let h = fnv1a(tag, bytes);
        let bucket = ((h >> 1) % self.dimension as u64) as usize;
        let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
        buckets[bucket] += sign * weight;
    }
}

impl Default for HashEmbedder {
    fn default() -> HashEmbedder {
        HashEmbedder::new(HashEmbedder::DEFAULT_DIMENSION)
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut buckets = alloc::vec![0.0f64; self.dimension];
        let bytes = text.as_bytes();
        for window in bytes.windows(3) {
            self.add_feature(&mut buckets, TAG_TRIGRAM, window, 1.0);
        }
        for line in text.lines() {
            let token = line.trim_start();
            if !token.is_empty() {
                self.add_feature(&mut buckets, TAG_TOKEN, token.as_bytes(), TOKEN_WEIGHT);
            }
        }
        let norm = libm::sqrt(buckets.iter().map(|v| v * v).sum());
        if norm == 0.0 {
            // Signed hashing cancelled every bucket. Practically unreachable
            // for plan text, but normalizing would divide by zero, so fall
            // back to a deterministic basis vector.
            let bucket = (fnv1a(TAG_TOKEN, bytes) % self.dimension as u64) as usize;
            buckets[bucket] = 1.0;
        } else {
            for v in buckets.iter_mut() {
                *v /= norm;
            }
        }
        EmbeddingVector::new(buckets)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DimensionMismatch {
    pub left: usize,
    pub right: usize,
}

impl fmt::Display for DimensionMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "embedding dimensions differ: {} vs {}", self.left, self.right)
    }
}

impl core::error::Error for DimensionMismatch {}

/// Plain Euclidean distance between two vectors of equal dimension. Vectors
/// are taken as they are; nothing is re-normalized here.
pub fn euclidean_distance(
    u: &EmbeddingVector,
    v: &EmbeddingVector,
) -> Result<f64, DimensionMismatch> {
    if u.dimension() != v.dimension() {
        return Err(DimensionMismatch {
            left: u.dimension(),
            right: v.dimension(),
        });
    }
    let sum: f64 = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok(libm::sqrt(sum))
}

/// Levenshtein edit distance over characters, unit costs. Two-row dynamic
/// program, O(|a|·|b|) time and O(min(|a|,|b|)) space.
pub fn levenshtein_distance(a: &str, b: &str) -> usize {
    let long: Vec<char> = a.chars().collect();
    let short: Vec<char> = b.chars().collect();
    let (long, short) = if long.len() >= short.len() {
        (long, short)
    } else {
        (short, long)
    };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = alloc::vec![0usize; short.len() + 1];
    for (i, &lc) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &sc) in short.iter().enumerate() {
            let substitute = prev[j] + usize::from(lc != sc);
            let delete = prev[j + 1] + 1;
            let insert = cur[j] + 1;
            cur[j + 1] = substitute.min(delete).min(insert);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}
