//! One shard of an attributed heterogeneous graph: out-adjacency per owned
//! vertex, separated attribute tables, and replicated neighborhoods of
//! important remote vertices.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use crate::attr::AttributeIndex;
use crate::partition::PartitionPlan;
use crate::types::{EdgeType, GraphError, Result, VertexId, VertexType};

/// One out-edge of a vertex. `weight` is the immutable input weight,
/// `sampling_weight` is the mutable weight used by the samplers and is
/// initialized to `weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyRecord {
    pub neighbor: VertexId,
    pub edge_type: EdgeType,
    pub weight: f64,
    pub edge_attr_idx: usize,
    pub sampling_weight: f64,
}

/// Space accounting comparing attribute-embedded adjacency storage against
/// the separated index representation actually used.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StorageReport {
    pub combined_bytes: u64,
    pub separated_bytes: u64,
    /// owned vertex count
    pub n: u64,
    /// average out-degree
    pub n_d: f64,
    /// average attribute length (values)
    pub n_l: f64,
    /// number of distinct attributes (vertex + edge)
    pub n_a: u64,
}

/// Width of one stored index/id in bytes for the accounting model.
pub const INDEX_WIDTH_BYTES: u64 = 8;

/// Replicated neighborhood of a remote vertex: distinct out-neighbor ids at
/// each hop 1..=h, relative to the cached vertex.
pub type RemoteHops = Vec<Vec<VertexId>>;

pub struct ShardedGraph {
    pub shard_id: usize,
    pub plan: Arc<PartitionPlan>,
    pub owned_vertices: BTreeSet<VertexId>,
    /// Out-edges of owned vertices, sorted by (neighbor, edge_type).
    pub adjacency: HashMap<VertexId, Vec<AdjacencyRecord>>,
    pub vertex_type: HashMap<VertexId, VertexType>,
    pub vertex_attr_idx: HashMap<VertexId, usize>,
    pub attr_v: AttributeIndex,
    pub attr_e: AttributeIndex,
    /// Per-hop out-neighbor sets of cached remote vertices.
    pub remote_cache: HashMap<VertexId, RemoteHops>,
    /// Adjacency snapshots backing the remote cache: records for every cached
    /// vertex and its expansion frontier, so deeper hops resolve locally.
    pub cached_adj: HashMap<VertexId, Vec<AdjacencyRecord>>,
    /// Sources with at least one out-edge of the given type, sorted.
    eligible_sources: BTreeMap<EdgeType, Vec<VertexId>>,
    /// Vertex types observed as destinations of each edge type.
    dst_types: BTreeMap<EdgeType, BTreeSet<VertexType>>,
    /// Local in-neighbors (src, edge_type) per vertex, for negative exclusion.
    in_neighbors: HashMap<VertexId, Vec<(VertexId, EdgeType)>>,
    /// Negative-sampling candidates per vertex type with cumulative
    /// degree^0.75 weights.
    neg_candidates: BTreeMap<VertexType, (Vec<VertexId>, Vec<f64>)>,
    sealed: bool,
}

impl ShardedGraph {
    pub fn new(shard_id: usize, plan: Arc<PartitionPlan>, v_arity: usize, e_arity: usize, attr_cache_capacity: usize) -> Self {
        ShardedGraph {
            shard_id,
            plan,
            owned_vertices: BTreeSet::new(),
            adjacency: HashMap::new(),
            vertex_type: HashMap::new(),
            vertex_attr_idx: HashMap::new(),
            attr_v: AttributeIndex::new(v_arity, attr_cache_capacity),
            attr_e: AttributeIndex::new(e_arity, attr_cache_capacity),
            remote_cache: HashMap::new(),
            cached_adj: HashMap::new(),
            eligible_sources: BTreeMap::new(),
            dst_types: BTreeMap::new(),
            in_neighbors: HashMap::new(),
            neg_candidates: BTreeMap::new(),
            sealed: false,
        }
    }

    pub fn add_vertex(&mut self, v: VertexId, vtype: VertexType, attr: &[f64]) -> Result<()> {
        let idx = self.attr_v.intern(attr)?;
        self.owned_vertices.insert(v);
        self.vertex_type.insert(v, vtype);
        self.vertex_attr_idx.insert(v, idx);
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        src: VertexId,
        dst: VertexId,
        edge_type: EdgeType,
        weight: f64,
        attr: &[f64],
    ) -> Result<()> {
        if weight < 0.0 {
            return Err(GraphError::Invalid(format!("negative edge weight on ({src},{dst})")));
        }
        let idx = self.attr_e.intern(attr)?;
        self.owned_vertices.insert(src);
        self.adjacency.entry(src).or_default().push(AdjacencyRecord {
            neighbor: dst,
            edge_type,
            weight,
            edge_attr_idx: idx,
            sampling_weight: weight,
        });
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(Vec::len).sum()
    }

    /// Finishes the build: sorts adjacency deterministically and derives the
    /// sampler support structures. `global_types` supplies types of vertices
    /// owned elsewhere.
    pub fn seal(&mut self, global_types: &HashMap<VertexId, VertexType>) {
        for records in self.adjacency.values_mut() {
            records.sort_by_key(|r| (r.neighbor, r.edge_type.0));
        }
        self.eligible_sources.clear();
        self.dst_types.clear();
        self.in_neighbors.clear();
        let mut degree: HashMap<VertexId, u64> = HashMap::new();
        for (&src, records) in &self.adjacency {
            *degree.entry(src).or_default() += records.len() as u64;
            for r in records {
                let e = self.eligible_sources.entry(r.edge_type).or_default();
                if e.last() != Some(&src) {
                    e.push(src);
                }
                if let Some(&t) = global_types.get(&r.neighbor).or_else(|| self.vertex_type.get(&r.neighbor)) {
                    self.dst_types.entry(r.edge_type).or_default().insert(t);
                }
                self.in_neighbors.entry(r.neighbor).or_default().push((src, r.edge_type));
                *degree.entry(r.neighbor).or_default() += 1;
            }
        }
        for list in self.eligible_sources.values_mut() {
            list.sort();
            list.dedup();
        }
        self.neg_candidates.clear();
        for &v in &self.owned_vertices {
            let t = match self.vertex_type.get(&v) {
                Some(&t) => t,
                None => VertexType(0),
            };
            let d = degree.get(&v).copied().unwrap_or(0);
            let w = (d as f64).powf(0.75);
            let (vs, cum) = self.neg_candidates.entry(t).or_insert_with(|| (Vec::new(), Vec::new()));
            vs.push(v);
            let prev = cum.last().copied().unwrap_or(0.0);
            cum.push(prev + w);
        }
        self.sealed = true;
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn is_owned(&self, v: VertexId) -> bool {
        self.owned_vertices.contains(&v)
    }

    /// Out-edges of `v` as stored on this shard: owned adjacency, or the
    /// cached snapshot for a replicated remote vertex. Order is deterministic
    /// (sorted by neighbor id, then edge type).
    pub fn neighbors(&self, v: VertexId, edge_type: Option<EdgeType>) -> Result<Vec<AdjacencyRecord>> {
        let records = if self.is_owned(v) {
            self.adjacency.get(&v).map(Vec::as_slice).unwrap_or(&[])
        } else if let Some(cached) = self.cached_adj.get(&v) {
            cached.as_slice()
        } else {
            return Err(GraphError::NotLocal { vertex: v, owner: self.plan.vertex_shard(v)? });
        };
        Ok(match edge_type {
            Some(t) => records.iter().filter(|r| r.edge_type == t).cloned().collect(),
            None => records.to_vec(),
        })
    }

    /// Borrowing variant used on the sampling hot path; `None` when the
    /// vertex is neither owned nor cached.
    pub fn records_of(&self, v: VertexId) -> Option<&[AdjacencyRecord]> {
        if self.is_owned(v) {
            Some(self.adjacency.get(&v).map(Vec::as_slice).unwrap_or(&[]))
        } else {
            self.cached_adj.get(&v).map(Vec::as_slice)
        }
    }

    pub fn eligible_sources(&self, edge_type: EdgeType) -> &[VertexId] {
        self.eligible_sources.get(&edge_type).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn dst_types(&self, edge_type: EdgeType) -> Option<&BTreeSet<VertexType>> {
        self.dst_types.get(&edge_type)
    }

    pub fn in_neighbors_of(&self, v: VertexId) -> &[(VertexId, EdgeType)] {
        self.in_neighbors.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn neg_candidates(&self, t: VertexType) -> Option<(&[VertexId], &[f64])> {
        self.neg_candidates.get(&t).map(|(v, c)| (v.as_slice(), c.as_slice()))
    }

    /// Splits the sorted owned vertex set into `groups` contiguous ranges and
    /// returns the range start ids (first entry is the minimum id).
    pub fn group_starts(&self, groups: usize) -> Vec<VertexId> {
        let owned: Vec<VertexId> = self.owned_vertices.iter().copied().collect();
        if owned.is_empty() || groups <= 1 {
            return vec![VertexId(0)];
        }
        let per = owned.len().div_ceil(groups);
        owned.chunks(per).map(|c| c[0]).collect()
    }

    /// Space accounting per the combined-vs-separated storage model.
    pub fn storage_report(&self) -> StorageReport {
        let n = self.owned_vertices.len() as u64;
        let mut records: u64 = 0;
        let mut combined: u64 = 0;
        let mut attr_values: u64 = 0;
        let mut attr_count: u64 = 0;
        for (&v, &idx) in &self.vertex_attr_idx {
            let _ = v;
            let len = self.attr_v.get_uncached(idx).map(|a| a.len()).unwrap_or(0) as u64;
            combined += 8 * len;
            attr_values += len;
            attr_count += 1;
        }
        for recs in self.adjacency.values() {
            for r in recs {
                records += 1;
                let len = self.attr_e.get_uncached(r.edge_attr_idx).map(|a| a.len()).unwrap_or(0) as u64;
                combined += 8 * len;
                attr_values += len;
                attr_count += 1;
            }
        }
        let separated = self.attr_v.payload_bytes()
            + self.attr_e.payload_bytes()
            + INDEX_WIDTH_BYTES * (records + n);
        StorageReport {
            combined_bytes: combined,
            separated_bytes: separated,
            n,
            n_d: if n > 0 { records as f64 / n as f64 } else { 0.0 },
            n_l: if attr_count > 0 { attr_values as f64 / attr_count as f64 } else { 0.0 },
            // zero-arity tables hold a single empty payload; not a real attribute
            n_a: [&self.attr_v, &self.attr_e]
                .iter()
                .filter(|a| a.arity() > 0)
                .map(|a| a.len() as u64)
                .sum(),
        }
    }
}
