//! Traverse / neighborhood / negative samplers.
//!
//! The sampler bodies are pure functions over shard data, driven by
//! counter-derived RNG streams: every draw is keyed by (request seed, query
//! vertex, hop, draw index), so results are identical whether a vertex is
//! served from its owner, from a cache replica, or through the bucket
//! engine.

pub mod engine;

use crate::store::{AdjacencyRecord, ShardedGraph};
use crate::types::{mix_seed, EdgeType, GraphError, Result, VertexId};

/// Where a sampled item's parent adjacency was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Local,
    Cache,
    Remote,
}

/// Uniform in [0,1) derived from a stable hash of the given words.
pub fn unit_uniform(parts: &[u64]) -> f64 {
    (mix_seed(parts) >> 11) as f64 / (1u64 << 53) as f64
}

/// Weighted pick among records of the given edge type, proportional to
/// `sampling_weight`. Returns None when no record matches (or all weights
/// are zero).
pub fn weighted_pick<'a>(
    records: &'a [AdjacencyRecord],
    edge_type: Option<EdgeType>,
    u: f64,
) -> Option<&'a AdjacencyRecord> {
    weighted_pick_with(records, edge_type, u, |r| r.sampling_weight)
}

/// Same pick with a weight override, used by the engine to apply pending
/// weight updates on top of cached snapshots.
pub fn weighted_pick_with<'a>(
    records: &'a [AdjacencyRecord],
    edge_type: Option<EdgeType>,
    u: f64,
    weight_of: impl Fn(&AdjacencyRecord) -> f64,
) -> Option<&'a AdjacencyRecord> {
    let mut total = 0.0;
    for r in records {
        if edge_type.map_or(true, |t| r.edge_type == t) {
            total += weight_of(r);
        }
    }
    if total <= 0.0 {
        return None;
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut last = None;
    for r in records {
        if edge_type.map_or(true, |t| r.edge_type == t) {
            acc += weight_of(r);
            last = Some(r);
            if target < acc {
                return Some(r);
            }
        }
    }
    last // guard against rounding at u -> 1
}

/// Uniform batch with replacement over sources that have at least one
/// out-edge of the edge type.
pub fn traverse_sample(
    shard: &ShardedGraph,
    edge_type: EdgeType,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<VertexId>> {
    let eligible = shard.eligible_sources(edge_type);
    if eligible.is_empty() {
        return Err(GraphError::EmptyDomain);
    }
    Ok((0..batch_size)
        .map(|i| {
            let u = unit_uniform(&[seed, 0x7261_7665, i as u64]);
            eligible[(u * eligible.len() as f64) as usize % eligible.len()]
        })
        .collect())
}

/// Read access to adjacency records across whatever shard layout the caller
/// runs with, plus the provenance of each read relative to an origin shard.
pub trait NeighborAccess {
    fn records(&self, v: VertexId) -> Option<&[AdjacencyRecord]>;
    fn provenance(&self, origin_shard: usize, v: VertexId) -> Provenance;
}

/// View over a full set of shards; every vertex resolves at its owner.
pub struct MultiShardView<'a> {
    pub shards: &'a [ShardedGraph],
}

impl<'a> MultiShardView<'a> {
    pub fn new(shards: &'a [ShardedGraph]) -> Self {
        MultiShardView { shards }
    }

    pub fn owner(&self, v: VertexId) -> Option<usize> {
        self.shards.iter().position(|g| g.is_owned(v))
    }
}

impl NeighborAccess for MultiShardView<'_> {
    fn records(&self, v: VertexId) -> Option<&[AdjacencyRecord]> {
        self.shards.iter().find_map(|g| {
            if g.is_owned(v) {
                Some(g.adjacency.get(&v).map(Vec::as_slice).unwrap_or(&[]))
            } else {
                None
            }
        })
    }

    fn provenance(&self, origin_shard: usize, v: VertexId) -> Provenance {
        let origin = &self.shards[origin_shard];
        if origin.is_owned(v) {
            Provenance::Local
        } else if origin.cached_adj.contains_key(&v) {
            Provenance::Cache
        } else {
            Provenance::Remote
        }
    }
}

/// One sampled context item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextItem {
    pub vertex: VertexId,
    pub provenance: Provenance,
}

/// Per query vertex, per hop, exactly `hop_nums[hop]` items.
pub type Contexts = Vec<Vec<Vec<ContextItem>>>;

/// Multi-hop neighborhood sampling with replacement. Hop j draws
/// `hop_nums[j]` items; draw i expands the (i mod len)-th item of the
/// previous hop. A parent without matching out-edges pads with itself.
pub fn neighborhood_sample<V: NeighborAccess>(
    view: &V,
    origin_shard: usize,
    vertices: &[VertexId],
    edge_type: Option<EdgeType>,
    hop_nums: &[usize],
    seed: u64,
) -> Contexts {
    vertices
        .iter()
        .map(|&qv| {
            let mut hops: Vec<Vec<ContextItem>> = Vec::with_capacity(hop_nums.len());
            let mut prev: Vec<VertexId> = vec![qv];
            for (j, &num) in hop_nums.iter().enumerate() {
                let mut items = Vec::with_capacity(num);
                for i in 0..num {
                    let parent = prev[i % prev.len()];
                    let provenance = view.provenance(origin_shard, parent);
                    let picked = view.records(parent).and_then(|records| {
                        let u = unit_uniform(&[seed, qv.0, j as u64 + 1, i as u64]);
                        weighted_pick(records, edge_type, u).map(|r| r.neighbor)
                    });
                    // Self-loop padding for deficient neighborhoods.
                    let vertex = picked.unwrap_or(parent);
                    items.push(ContextItem { vertex, provenance });
                }
                prev = items.iter().map(|it| it.vertex).collect();
                hops.push(items);
            }
            hops
        })
        .collect()
}

/// Negative samples for each query vertex: draws from the shard's vertices
/// of the edge type's destination types, excluding the query vertex and its
/// out-neighbors under that type, with probability proportional to
/// degree^0.75.
pub fn negative_sample(
    shard: &ShardedGraph,
    vertices: &[VertexId],
    edge_type: EdgeType,
    neg_num: usize,
    seed: u64,
) -> Result<Vec<Vec<VertexId>>> {
    negative_sample_with(shard, |v| shard.records_of(v).map(|r| r.to_vec()), vertices, edge_type, neg_num, seed)
}

/// Negative sampling with an injected adjacency lookup, so the engine can
/// supply records from a bucket-owned slice.
pub fn negative_sample_with(
    shard: &ShardedGraph,
    records_of: impl Fn(VertexId) -> Option<Vec<AdjacencyRecord>>,
    vertices: &[VertexId],
    edge_type: EdgeType,
    neg_num: usize,
    seed: u64,
) -> Result<Vec<Vec<VertexId>>> {
    let dst_types: Vec<crate::types::VertexType> = shard
        .dst_types(edge_type)
        .map(|s| s.iter().copied().collect())
        .unwrap_or_else(|| shard.vertex_type.values().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect());
    // Merged candidate pool with cumulative degree^0.75 weights.
    let mut pool: Vec<VertexId> = Vec::new();
    let mut cum: Vec<f64> = Vec::new();
    let mut acc = 0.0;
    for t in dst_types {
        if let Some((ids, cums)) = shard.neg_candidates(t) {
            let mut prev = 0.0;
            for (i, &v) in ids.iter().enumerate() {
                let w = cums[i] - prev;
                prev = cums[i];
                acc += w;
                pool.push(v);
                cum.push(acc);
            }
        }
    }
    let total = acc;

    let mut out = Vec::with_capacity(vertices.len());
    for &qv in vertices {
        let mut excluded: std::collections::HashSet<VertexId> = std::collections::HashSet::new();
        excluded.insert(qv);
        if let Some(records) = records_of(qv) {
            for r in &records {
                if r.edge_type == edge_type {
                    excluded.insert(r.neighbor);
                }
            }
        }
        let mut negs = Vec::with_capacity(neg_num);
        for i in 0..neg_num {
            let mut picked = None;
            if total > 0.0 && !pool.is_empty() {
                for attempt in 0..200u64 {
                    let u = unit_uniform(&[seed, 0x6e65_67, qv.0, i as u64, attempt]);
                    let target = u * total;
                    let idx = cum.partition_point(|&c| c <= target).min(pool.len() - 1);
                    let cand = pool[idx];
                    if !excluded.contains(&cand) {
                        picked = Some(cand);
                        break;
                    }
                }
            }
            let cand = match picked {
                Some(c) => c,
                None => {
                    // Rejection stalled: enumerate the surviving candidates.
                    let survivors: Vec<(VertexId, f64)> = pool
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| !excluded.contains(v))
                        .map(|(idx, &v)| {
                            let w = cum[idx] - if idx == 0 { 0.0 } else { cum[idx - 1] };
                            (v, w)
                        })
                        .collect();
                    let mass: f64 = survivors.iter().map(|(_, w)| w).sum();
                    if survivors.is_empty() {
                        return Err(GraphError::CandidateExhausted(qv));
                    }
                    if mass <= 0.0 {
                        // all surviving weights zero: uniform among survivors
                        let u = unit_uniform(&[seed, 0x6e65_6775, qv.0, i as u64]);
                        survivors[(u * survivors.len() as f64) as usize % survivors.len()].0
                    } else {
                        let u = unit_uniform(&[seed, 0x6e65_6775, qv.0, i as u64]);
                        let target = u * mass;
                        let mut a = 0.0;
                        let mut chosen = survivors[survivors.len() - 1].0;
                        for (v, w) in &survivors {
                            a += w;
                            if target < a {
                                chosen = *v;
                                break;
                            }
                        }
                        chosen
                    }
                }
            };
            negs.push(cand);
        }
        out.push(negs);
    }
    Ok(out)
}

/// Bucket id for a vertex given the sorted group range starts of its shard.
pub fn route(v: VertexId, group_starts: &[VertexId]) -> usize {
    if group_starts.len() <= 1 {
        return 0;
    }
    match group_starts.binary_search(&v) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) => i - 1,
    }
}
