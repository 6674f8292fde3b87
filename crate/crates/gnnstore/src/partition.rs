//! Edge-to-shard assignment under pluggable strategies, concurrent shard
//! building, and the offline global degree pass.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::store::ShardedGraph;
use crate::types::{stable_hash, EdgeType, GraphError, Result, VertexId, VertexType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Strategy {
    EdgeCutHash,
    VertexCutGreedy,
    Grid2d,
    StreamingGreedy,
    ExternalFile,
}

#[derive(Debug, Clone)]
pub struct VertexInput {
    pub id: VertexId,
    pub vtype: VertexType,
    pub attr: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EdgeInput {
    pub src: VertexId,
    pub dst: VertexId,
    pub edge_type: EdgeType,
    pub weight: f64,
    pub attr: Vec<f64>,
}

/// Largest divisor of p that is <= sqrt(p); the worker grid is r x c.
fn grid_dims(p: usize) -> (usize, usize) {
    let mut r = 1;
    for d in 1..=p {
        if d * d > p {
            break;
        }
        if p % d == 0 {
            r = d;
        }
    }
    (r, p / r)
}

pub struct PartitionPlan {
    pub p: usize,
    pub strategy: Strategy,
    /// Streaming-greedy load penalty.
    pub lambda: f64,
    grid: (usize, usize),
    /// Vertex -> shard for streaming / external plans (and canonical owners
    /// for vertex cut).
    vertex_assign: HashMap<VertexId, usize>,
    /// Edge -> shard for vertex-cut plans.
    edge_assign: HashMap<(u64, u64, u16), usize>,
    finalized: bool,
}

impl PartitionPlan {
    pub fn new(p: usize, strategy: Strategy) -> Self {
        assert!(p >= 1, "at least one shard");
        let finalized = matches!(strategy, Strategy::EdgeCutHash | Strategy::Grid2d);
        PartitionPlan {
            p,
            strategy,
            lambda: 1.0,
            grid: grid_dims(p),
            vertex_assign: HashMap::new(),
            edge_assign: HashMap::new(),
            finalized,
        }
    }

    pub fn external(p: usize, mapping: HashMap<VertexId, usize>) -> Result<Self> {
        for (&v, &s) in &mapping {
            if s >= p {
                return Err(GraphError::Invalid(format!("vertex {v} mapped to shard {s} >= p={p}")));
            }
        }
        let mut plan = PartitionPlan::new(p, Strategy::ExternalFile);
        plan.vertex_assign = mapping;
        plan.finalized = true;
        Ok(plan)
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    /// Shard owning vertex `v` under this plan.
    pub fn vertex_shard(&self, v: VertexId) -> Result<usize> {
        if self.p == 1 {
            return Ok(0);
        }
        match self.strategy {
            Strategy::EdgeCutHash => Ok((stable_hash(v.0) % self.p as u64) as usize),
            Strategy::Grid2d => {
                let (r, c) = self.grid;
                let h = stable_hash(v.0);
                Ok(((h % r as u64) * c as u64 + h % c as u64) as usize)
            }
            Strategy::StreamingGreedy | Strategy::ExternalFile | Strategy::VertexCutGreedy => self
                .vertex_assign
                .get(&v)
                .copied()
                .ok_or(GraphError::UnmappedVertex(v)),
        }
    }

    /// Shard storing the edge. Source-partitioned strategies assign by the
    /// source vertex; grid-2d by both endpoints; vertex cut by the frozen
    /// per-edge assignment.
    pub fn assign(&self, src: VertexId, dst: VertexId, edge_type: EdgeType) -> Result<usize> {
        if self.p == 1 {
            return Ok(0);
        }
        match self.strategy {
            Strategy::EdgeCutHash | Strategy::StreamingGreedy | Strategy::ExternalFile => {
                self.vertex_shard(src)
            }
            Strategy::Grid2d => {
                let (r, c) = self.grid;
                Ok(((stable_hash(src.0) % r as u64) * c as u64 + stable_hash(dst.0) % c as u64)
                    as usize)
            }
            Strategy::VertexCutGreedy => self
                .edge_assign
                .get(&(src.0, dst.0, edge_type.0))
                .copied()
                .ok_or(GraphError::UnmappedVertex(src)),
        }
    }

    /// Runs the one-pass greedy assignments for streaming / vertex-cut plans.
    /// Hash and grid plans need no finalization.
    pub fn finalize(&mut self, edges: &[EdgeInput], vertices: &[VertexInput]) -> Result<()> {
        match self.strategy {
            Strategy::EdgeCutHash | Strategy::Grid2d => {}
            Strategy::ExternalFile => {
                for e in edges {
                    for v in [e.src, e.dst] {
                        if !self.vertex_assign.contains_key(&v) {
                            return Err(GraphError::UnmappedVertex(v));
                        }
                    }
                }
            }
            Strategy::StreamingGreedy => self.finalize_streaming(edges, vertices),
            Strategy::VertexCutGreedy => self.finalize_vertex_cut(edges),
        }
        self.finalized = true;
        Ok(())
    }

    fn finalize_streaming(&mut self, edges: &[EdgeInput], vertices: &[VertexInput]) {
        let mut loads = vec![0u64; self.p];
        let mut seen_nbrs: HashMap<VertexId, Vec<VertexId>> = HashMap::new();
        let place = |v: VertexId,
                         assign: &mut HashMap<VertexId, usize>,
                         loads: &mut Vec<u64>,
                         seen: &HashMap<VertexId, Vec<VertexId>>,
                         lambda: f64| {
            if assign.contains_key(&v) {
                return;
            }
            let mut nbr_counts = vec![0u64; self.p];
            if let Some(nbrs) = seen.get(&v) {
                for n in nbrs {
                    if let Some(&s) = assign.get(n) {
                        nbr_counts[s] += 1;
                    }
                }
            }
            let min_load = *loads.iter().min().unwrap();
            let mut best = 0usize;
            let mut best_key = (f64::NEG_INFINITY, 0u64, u64::MAX);
            for s in 0..self.p {
                let score = nbr_counts[s] as f64 - lambda * (loads[s] - min_load) as f64;
                // Tie-break: more placed neighbors, then lighter load.
                let key = (score, nbr_counts[s], u64::MAX - loads[s]);
                if key > best_key {
                    best_key = key;
                    best = s;
                }
            }
            assign.insert(v, best);
            loads[best] += 1;
        };
        for e in edges {
            seen_nbrs.entry(e.src).or_default().push(e.dst);
            seen_nbrs.entry(e.dst).or_default().push(e.src);
            place(e.src, &mut self.vertex_assign, &mut loads, &seen_nbrs, self.lambda);
            place(e.dst, &mut self.vertex_assign, &mut loads, &seen_nbrs, self.lambda);
        }
        for v in vertices {
            place(v.id, &mut self.vertex_assign, &mut loads, &seen_nbrs, self.lambda);
        }
    }

    fn finalize_vertex_cut(&mut self, edges: &[EdgeInput]) {
        // PowerGraph-style greedy: prefer a shard already holding replicas of
        // both endpoints, then of one, then the least loaded.
        let mut replicas: HashMap<VertexId, HashSet<usize>> = HashMap::new();
        let mut loads = vec![0u64; self.p];
        for e in edges {
            let ru = replicas.get(&e.src).cloned().unwrap_or_default();
            let rv = replicas.get(&e.dst).cloned().unwrap_or_default();
            let pick_least = |set: &HashSet<usize>, loads: &[u64]| -> usize {
                let mut best = usize::MAX;
                let mut best_load = u64::MAX;
                let mut shards: Vec<usize> = set.iter().copied().collect();
                shards.sort_unstable();
                for s in shards {
                    if loads[s] < best_load {
                        best_load = loads[s];
                        best = s;
                    }
                }
                best
            };
            let inter: HashSet<usize> = ru.intersection(&rv).copied().collect();
            let shard = if !inter.is_empty() {
                pick_least(&inter, &loads)
            } else if !ru.is_empty() || !rv.is_empty() {
                let union: HashSet<usize> = ru.union(&rv).copied().collect();
                pick_least(&union, &loads)
            } else {
                let all: HashSet<usize> = (0..self.p).collect();
                pick_least(&all, &loads)
            };
            loads[shard] += 1;
            self.edge_assign.insert((e.src.0, e.dst.0, e.edge_type.0), shard);
            replicas.entry(e.src).or_default().insert(shard);
            replicas.entry(e.dst).or_default().insert(shard);
        }
        // Canonical owner: smallest shard holding a replica.
        for (v, set) in replicas {
            let owner = set.into_iter().min().expect("non-empty replica set");
            self.vertex_assign.insert(v, owner);
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PartitionQuality {
    pub crossing_edges: u64,
    /// max shard load / mean shard load; 1.0 for an empty graph.
    pub balance: f64,
    pub shard_edge_counts: Vec<u64>,
}

pub struct BuildConfig {
    pub v_arity: usize,
    pub e_arity: usize,
    pub attr_cache_capacity: usize,
    /// When true, validate |vertex types| >= 2 or |edge types| >= 2.
    pub declared_heterogeneous: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            v_arity: 0,
            e_arity: 0,
            attr_cache_capacity: 1024,
            declared_heterogeneous: false,
        }
    }
}

/// Delivers every vertex to its owner and every edge to its assigned shard,
/// building all shards concurrently (one builder thread per shard).
pub fn partition(
    vertices: &[VertexInput],
    edges: &[EdgeInput],
    mut plan: PartitionPlan,
    cfg: &BuildConfig,
) -> Result<(Vec<ShardedGraph>, PartitionQuality, Arc<PartitionPlan>)> {
    if !plan.is_finalized() {
        plan.finalize(edges, vertices)?;
    }
    if cfg.declared_heterogeneous {
        let vt: HashSet<u16> = vertices.iter().map(|v| v.vtype.0).collect();
        let et: HashSet<u16> = edges.iter().map(|e| e.edge_type.0).collect();
        if vt.len() < 2 && et.len() < 2 {
            return Err(GraphError::Invalid(
                "graph declared heterogeneous but has a single vertex type and a single edge type"
                    .into(),
            ));
        }
    }
    let plan = Arc::new(plan);
    let global_types: HashMap<VertexId, VertexType> =
        vertices.iter().map(|v| (v.id, v.vtype)).collect();
    let global_types = Arc::new(global_types);

    enum Msg {
        Vertex(VertexInput),
        Edge(EdgeInput),
    }

    let mut senders = Vec::with_capacity(plan.p);
    let mut handles = Vec::with_capacity(plan.p);
    for shard_id in 0..plan.p {
        let (tx, rx) = crossbeam_channel::unbounded::<Msg>();
        senders.push(tx);
        let plan = Arc::clone(&plan);
        let types = Arc::clone(&global_types);
        let (v_arity, e_arity, cache) = (cfg.v_arity, cfg.e_arity, cfg.attr_cache_capacity);
        handles.push(std::thread::spawn(move || -> Result<ShardedGraph> {
            let mut g = ShardedGraph::new(shard_id, plan, v_arity, e_arity, cache);
            for msg in rx {
                match msg {
                    Msg::Vertex(v) => g.add_vertex(v.id, v.vtype, &v.attr)?,
                    Msg::Edge(e) => g.add_edge(e.src, e.dst, e.edge_type, e.weight, &e.attr)?,
                }
            }
            g.seal(&types);
            Ok(g)
        }));
    }

    let route = |senders: &[crossbeam_channel::Sender<Msg>]| -> Result<(u64, Vec<u64>)> {
        let mut counts = vec![0u64; plan.p];
        let mut crossing = 0u64;
        for v in vertices {
            let owner = plan.vertex_shard(v.id)?;
            senders[owner]
                .send(Msg::Vertex(v.clone()))
                .map_err(|_| GraphError::Invalid("builder thread terminated".into()))?;
        }
        for e in edges {
            let shard = plan.assign(e.src, e.dst, e.edge_type)?;
            counts[shard] += 1;
            if plan.vertex_shard(e.src)? != plan.vertex_shard(e.dst)? {
                crossing += 1;
            }
            senders[shard]
                .send(Msg::Edge(e.clone()))
                .map_err(|_| GraphError::Invalid("builder thread terminated".into()))?;
        }
        Ok((crossing, counts))
    };
    let routed = route(&senders);
    drop(senders);
    let mut shards = Vec::with_capacity(plan.p);
    let mut first_err = None;
    for h in handles {
        match h.join().expect("builder thread panicked") {
            Ok(g) => shards.push(g),
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    // Routing or builder failure aborts the build; partial shards discarded.
    let (crossing, shard_edge_counts) = routed?;
    if let Some(e) = first_err {
        return Err(e);
    }

    shards.sort_by_key(|g| g.shard_id);
    let total: u64 = shard_edge_counts.iter().sum();
    let balance = if total == 0 {
        1.0
    } else {
        let mean = total as f64 / plan.p as f64;
        *shard_edge_counts.iter().max().unwrap() as f64 / mean
    };
    let quality = PartitionQuality { crossing_edges: crossing, balance, shard_edge_counts };
    Ok((shards, quality, plan))
}

/// Per-vertex distinct-neighbor counts within 1..=h directed hops, the
/// offline pass feeding the importance metric. `d_in[k-1]` counts distinct
/// vertices that reach the vertex within k hops, excluding itself.
#[derive(Debug, Clone)]
pub struct DegreeStats {
    pub d_in: Vec<u64>,
    pub d_out: Vec<u64>,
}

pub fn global_degree_pass(
    edges: &[(VertexId, VertexId)],
    h: usize,
) -> HashMap<VertexId, DegreeStats> {
    assert!(h >= 1);
    // Compact ids.
    let mut ids: Vec<VertexId> = Vec::new();
    let mut index: HashMap<VertexId, u32> = HashMap::new();
    let idx_of = |v: VertexId, ids: &mut Vec<VertexId>, index: &mut HashMap<VertexId, u32>| {
        *index.entry(v).or_insert_with(|| {
            ids.push(v);
            (ids.len() - 1) as u32
        })
    };
    let mut pairs = Vec::with_capacity(edges.len());
    for &(s, d) in edges {
        let si = idx_of(s, &mut ids, &mut index);
        let di = idx_of(d, &mut ids, &mut index);
        pairs.push((si, di));
    }
    let n = ids.len();
    let csr = |forward: bool| -> (Vec<u32>, Vec<u32>) {
        let mut deg = vec![0u32; n + 1];
        for &(s, d) in &pairs {
            let from = if forward { s } else { d };
            deg[from as usize + 1] += 1;
        }
        for i in 0..n {
            deg[i + 1] += deg[i];
        }
        let mut adj = vec![0u32; pairs.len()];
        let mut cursor = deg.clone();
        for &(s, d) in &pairs {
            let (from, to) = if forward { (s, d) } else { (d, s) };
            adj[cursor[from as usize] as usize] = to;
            cursor[from as usize] += 1;
        }
        (deg, adj)
    };
    let (out_off, out_adj) = csr(true);
    let (in_off, in_adj) = csr(false);

    let bfs_counts = |off: &[u32], adj: &[u32]| -> Vec<Vec<u64>> {
        let mut counts = vec![Vec::with_capacity(h); n];
        let mut stamp = vec![0u32; n];
        let mut cur = 0u32;
        let mut frontier: Vec<u32> = Vec::new();
        let mut next: Vec<u32> = Vec::new();
        for v in 0..n {
            cur += 1;
            stamp[v] = cur; // exclude self even on cycles
            frontier.clear();
            frontier.push(v as u32);
            let mut total = 0u64;
            for _ in 0..h {
                next.clear();
                for &u in &frontier {
                    let (a, b) = (off[u as usize] as usize, off[u as usize + 1] as usize);
                    for &w in &adj[a..b] {
                        if stamp[w as usize] != cur {
                            stamp[w as usize] = cur;
                            next.push(w);
                            total += 1;
                        }
                    }
                }
                counts[v].push(total);
                std::mem::swap(&mut frontier, &mut next);
            }
        }
        counts
    };
    let outs = bfs_counts(&out_off, &out_adj);
    let ins = bfs_counts(&in_off, &in_adj);
    ids.iter()
        .enumerate()
        .map(|(i, &v)| (v, DegreeStats { d_in: ins[i].clone(), d_out: outs[i].clone() }))
        .collect()
}
