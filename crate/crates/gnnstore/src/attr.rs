//! Deduplicated attribute storage with a bounded LRU front cache.
//!
//! Attributes are fixed-arity numeric vectors. Structure and attributes are
//! stored separately: adjacency records and vertices carry only an entry
//! index into one of these tables.

use std::collections::HashMap;

use crate::lru::LruCache;
use crate::types::{GraphError, Result};

/// Content hash of an attribute vector; collisions resolved by full compare.
fn content_hash(attr: &[f64]) -> u64 {
    let mut acc = crate::types::STABLE_HASH_SEED;
    for v in attr {
        acc = crate::types::stable_hash(acc ^ v.to_bits());
    }
    acc
}

pub struct AttributeIndex {
    arity: usize,
    entries: Vec<Vec<f64>>,
    lookup: HashMap<u64, Vec<usize>>,
    cache: LruCache<usize, Vec<f64>>,
}

impl AttributeIndex {
    pub fn new(arity: usize, cache_capacity: usize) -> Self {
        AttributeIndex {
            arity,
            entries: Vec::new(),
            lookup: HashMap::new(),
            cache: LruCache::new(cache_capacity),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache.hits()
    }

    pub fn cache_misses(&self) -> u64 {
        self.cache.misses()
    }

    /// Total bytes of distinct attribute payloads (8 bytes per value).
    pub fn payload_bytes(&self) -> u64 {
        self.entries.iter().map(|e| 8 * e.len() as u64).sum()
    }

    /// Interns an attribute vector, returning the entry index. Idempotent:
    /// an identical vector always maps to the same index.
    pub fn intern(&mut self, attr: &[f64]) -> Result<usize> {
        if attr.len() != self.arity {
            return Err(GraphError::ArityMismatch { expected: self.arity, got: attr.len() });
        }
        let h = content_hash(attr);
        if let Some(candidates) = self.lookup.get(&h) {
            for &idx in candidates {
                if self.entries[idx] == attr {
                    return Ok(idx);
                }
            }
        }
        let idx = self.entries.len();
        self.entries.push(attr.to_vec());
        self.lookup.entry(h).or_default().push(idx);
        Ok(idx)
    }

    /// Fetches an attribute vector through the LRU cache, recording a hit
    /// or a miss. Misses insert the entry, evicting the LRU victim if full.
    pub fn get(&mut self, idx: usize) -> Result<Vec<f64>> {
        if idx >= self.entries.len() {
            return Err(GraphError::IndexOutOfRange { idx, len: self.entries.len() });
        }
        if let Some(v) = self.cache.get(&idx) {
            return Ok(v.clone());
        }
        let v = self.entries[idx].clone();
        self.cache.insert(idx, v.clone());
        Ok(v)
    }

    /// Direct read that bypasses the cache; safe for concurrent readers of a
    /// frozen index.
    pub fn get_uncached(&self, idx: usize) -> Result<&[f64]> {
        self.entries
            .get(idx)
            .map(|v| v.as_slice())
            .ok_or(GraphError::IndexOutOfRange { idx, len: self.entries.len() })
    }
}
