//! Bucketed sampling engine: per shard, owned vertices are split into
//! contiguous id groups, each served by one consumer thread behind a bounded
//! MPSC channel. Any number of producers may issue requests concurrently.
//!
//! Multi-hop expansion is driven by the client one hop at a time: consumers
//! answer single-hop draws and never wait on each other, so cross-shard
//! expansion cannot deadlock. Each draw is keyed by (seed, query vertex,
//! hop, slot), which makes engine results bit-identical to the sequential
//! sampler regardless of bucket count or request interleaving.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;

use crossbeam_channel::{bounded, Receiver, Sender};

use crate::sampling::{
    negative_sample_with, route, traverse_sample, unit_uniform, weighted_pick_with, ContextItem,
    Contexts, Provenance,
};
use crate::store::{AdjacencyRecord, ShardedGraph};
use crate::types::{EdgeType, GraphError, Result, VertexId};

pub const DEFAULT_QUEUE_CAPACITY: usize = 1 << 16;
pub const DEFAULT_UPDATE_EPSILON: f64 = 1e-6;

/// One sampling-weight adjustment for a directed edge.
#[derive(Debug, Clone, Copy)]
pub struct WeightUpdate {
    pub src: VertexId,
    pub dst: VertexId,
    pub edge_type: EdgeType,
    pub grad: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateOutcome {
    pub applied: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    /// Wait until the update is applied; later samples observe it.
    Sync,
    /// Fire and forget; applied when the owning consumer drains it.
    Async,
}

struct ExpandEntry {
    slot: usize,
    query: VertexId,
    hop: u64,
    draw: u64,
    parent: VertexId,
}

enum BucketMsg {
    Traverse {
        edge_type: EdgeType,
        batch_size: usize,
        seed: u64,
        reply: Sender<Result<Vec<VertexId>>>,
    },
    Expand {
        edge_type: Option<EdgeType>,
        seed: u64,
        entries: Vec<ExpandEntry>,
        reply: Sender<Vec<(usize, VertexId)>>,
    },
    Negative {
        edge_type: EdgeType,
        neg_num: usize,
        seed: u64,
        vertices: Vec<VertexId>,
        reply: Sender<Result<Vec<Vec<VertexId>>>>,
    },
    Update {
        updates: Vec<WeightUpdate>,
        reply: Option<Sender<UpdateOutcome>>,
    },
}

/// Absolute post-update sampling weights, keyed by edge. Consumers read it
/// when serving draws so cached replicas observe updates applied at the
/// owner.
struct Overlay {
    map: RwLock<HashMap<(u64, u64, u16), f64>>,
    dirty: AtomicBool,
}

struct Consumer {
    shard_id: usize,
    slice: HashMap<VertexId, Vec<AdjacencyRecord>>,
    shared: Arc<ShardedGraph>,
    overlay: Arc<Overlay>,
    eta: f64,
    eps: f64,
}

impl Consumer {
    fn records(&self, v: VertexId) -> Option<&[AdjacencyRecord]> {
        self.slice
            .get(&v)
            .map(Vec::as_slice)
            .or_else(|| self.shared.cached_adj.get(&v).map(Vec::as_slice))
            .or_else(|| {
                // owned on this shard but isolated (vertex-only record)
                if self.shared.is_owned(v) {
                    Some(&[] as &[AdjacencyRecord])
                } else {
                    None
                }
            })
    }

    fn run(mut self, rx: Receiver<BucketMsg>) -> (usize, HashMap<VertexId, Vec<AdjacencyRecord>>) {
        for msg in rx {
            match msg {
                BucketMsg::Traverse { edge_type, batch_size, seed, reply } => {
                    let _ = reply.send(traverse_sample(&self.shared, edge_type, batch_size, seed));
                }
                BucketMsg::Expand { edge_type, seed, entries, reply } => {
                    let overlay = if self.overlay.dirty.load(Ordering::Acquire) {
                        Some(self.overlay.map.read().unwrap())
                    } else {
                        None
                    };
                    let mut out = Vec::with_capacity(entries.len());
                    for e in &entries {
                        let picked = self.records(e.parent).and_then(|records| {
                            let u = unit_uniform(&[seed, e.query.0, e.hop, e.draw]);
                            weighted_pick_with(records, edge_type, u, |r| {
                                overlay
                                    .as_ref()
                                    .and_then(|m| {
                                        m.get(&(e.parent.0, r.neighbor.0, r.edge_type.0)).copied()
                                    })
                                    .unwrap_or(r.sampling_weight)
                            })
                            .map(|r| r.neighbor)
                        });
                        out.push((e.slot, picked.unwrap_or(e.parent)));
                    }
                    let _ = reply.send(out);
                }
                BucketMsg::Negative { edge_type, neg_num, seed, vertices, reply } => {
                    let res = negative_sample_with(
                        &self.shared,
                        |v| self.records(v).map(|r| r.to_vec()),
                        &vertices,
                        edge_type,
                        neg_num,
                        seed,
                    );
                    let _ = reply.send(res);
                }
                BucketMsg::Update { updates, reply } => {
                    let mut outcome = UpdateOutcome::default();
                    for u in updates {
                        let rec = self.slice.get_mut(&u.src).and_then(|recs| {
                            recs.iter_mut()
                                .find(|r| r.neighbor == u.dst && r.edge_type == u.edge_type)
                        });
                        match rec {
                            Some(r) => {
                                r.sampling_weight =
                                    (r.sampling_weight - self.eta * u.grad).max(self.eps);
                                self.overlay
                                    .map
                                    .write()
                                    .unwrap()
                                    .insert((u.src.0, u.dst.0, u.edge_type.0), r.sampling_weight);
                                self.overlay.dirty.store(true, Ordering::Release);
                                outcome.applied += 1;
                            }
                            None => outcome.rejected += 1,
                        }
                    }
                    if let Some(reply) = reply {
                        let _ = reply.send(outcome);
                    }
                }
            }
        }
        (self.shard_id, self.slice)
    }
}

pub struct EngineConfig {
    pub buckets_per_shard: usize,
    pub queue_capacity: usize,
    /// Weight-update learning rate.
    pub eta: f64,
    /// Lower clamp keeping sampling weights positive.
    pub eps: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            buckets_per_shard: 2,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            eta: 0.01,
            eps: DEFAULT_UPDATE_EPSILON,
        }
    }
}

pub struct ShardEngine {
    shared: Vec<Arc<ShardedGraph>>,
    bucket_tx: Vec<Vec<Sender<BucketMsg>>>,
    group_starts: Vec<Vec<VertexId>>,
    overlay: Arc<Overlay>,
    handles: Mutex<Vec<JoinHandle<(usize, HashMap<VertexId, Vec<AdjacencyRecord>>)>>>,
}

impl ShardEngine {
    pub fn new(mut graphs: Vec<ShardedGraph>, cfg: &EngineConfig) -> Self {
        assert!(cfg.buckets_per_shard >= 1);
        let overlay = Arc::new(Overlay {
            map: RwLock::new(HashMap::new()),
            dirty: AtomicBool::new(false),
        });
        let mut shared = Vec::with_capacity(graphs.len());
        let mut bucket_tx = Vec::with_capacity(graphs.len());
        let mut group_starts = Vec::with_capacity(graphs.len());
        let mut handles = Vec::new();
        for g in &mut graphs {
            let starts = g.group_starts(cfg.buckets_per_shard);
            let adjacency = std::mem::take(&mut g.adjacency);
            let mut slices: Vec<HashMap<VertexId, Vec<AdjacencyRecord>>> =
                (0..starts.len()).map(|_| HashMap::new()).collect();
            for (v, recs) in adjacency {
                slices[route(v, &starts)].insert(v, recs);
            }
            group_starts.push(starts);
            let plan = Arc::clone(&g.plan);
            let arc = Arc::new(std::mem::replace(g, ShardedGraph::new(0, plan, 0, 0, 0)));
            let mut txs = Vec::with_capacity(slices.len());
            for slice in slices {
                let (tx, rx) = bounded(cfg.queue_capacity);
                txs.push(tx);
                let consumer = Consumer {
                    shard_id: arc.shard_id,
                    slice,
                    shared: Arc::clone(&arc),
                    overlay: Arc::clone(&overlay),
                    eta: cfg.eta,
                    eps: cfg.eps,
                };
                handles.push(std::thread::spawn(move || consumer.run(rx)));
            }
            bucket_tx.push(txs);
            shared.push(arc);
        }
        ShardEngine { shared, bucket_tx, group_starts, overlay, handles: Mutex::new(handles) }
    }

    pub fn num_shards(&self) -> usize {
        self.shared.len()
    }

    /// Shard and bucket serving reads of `v`'s adjacency, relative to the
    /// shard the query originates on.
    fn serving_bucket(&self, origin_shard: usize, v: VertexId) -> (usize, usize) {
        let origin = &self.shared[origin_shard];
        if origin.is_owned(v) || origin.cached_adj.contains_key(&v) {
            return (origin_shard, route(v, &self.group_starts[origin_shard]));
        }
        let shard = self
            .shared
            .iter()
            .position(|g| g.is_owned(v))
            .or_else(|| origin.plan.vertex_shard(v).ok())
            .unwrap_or(origin_shard)
            .min(self.shared.len() - 1);
        (shard, route(v, &self.group_starts[shard]))
    }

    fn provenance(&self, origin_shard: usize, v: VertexId) -> Provenance {
        let origin = &self.shared[origin_shard];
        if origin.is_owned(v) {
            Provenance::Local
        } else if origin.cached_adj.contains_key(&v) {
            Provenance::Cache
        } else {
            Provenance::Remote
        }
    }

    pub fn traverse(
        &self,
        shard: usize,
        edge_type: EdgeType,
        batch_size: usize,
        seed: u64,
    ) -> Result<Vec<VertexId>> {
        let bucket = (seed as usize) % self.bucket_tx[shard].len();
        let (reply, rx) = bounded(1);
        self.bucket_tx[shard][bucket]
            .send(BucketMsg::Traverse { edge_type, batch_size, seed, reply })
            .map_err(|_| GraphError::Invalid("engine bucket closed".into()))?;
        rx.recv().map_err(|_| GraphError::Invalid("engine bucket dropped reply".into()))?
    }

    /// Multi-hop neighborhood sampling through the buckets; identical output
    /// to the sequential sampler under the same seed.
    pub fn neighborhood(
        &self,
        origin_shard: usize,
        vertices: &[VertexId],
        edge_type: Option<EdgeType>,
        hop_nums: &[usize],
        seed: u64,
    ) -> Result<Contexts> {
        let mut contexts: Contexts = vertices
            .iter()
            .map(|_| Vec::with_capacity(hop_nums.len()))
            .collect();
        let mut prev: Vec<Vec<VertexId>> = vertices.iter().map(|&v| vec![v]).collect();
        for (j, &num) in hop_nums.iter().enumerate() {
            // slot: (query index, draw index) flattened
            let mut parents: Vec<(VertexId, VertexId)> = Vec::with_capacity(vertices.len() * num);
            for (qi, &qv) in vertices.iter().enumerate() {
                for i in 0..num {
                    parents.push((qv, prev[qi][i % prev[qi].len()]));
                }
            }
            let mut grouped: HashMap<(usize, usize), Vec<ExpandEntry>> = HashMap::new();
            for (slot, &(qv, parent)) in parents.iter().enumerate() {
                let key = self.serving_bucket(origin_shard, parent);
                grouped.entry(key).or_default().push(ExpandEntry {
                    slot,
                    query: qv,
                    hop: j as u64 + 1,
                    draw: (slot % num) as u64,
                    parent,
                });
            }
            let mut drawn: Vec<Option<VertexId>> = vec![None; parents.len()];
            let mut pending = Vec::new();
            for ((s, b), entries) in grouped {
                let (reply, rx) = bounded(1);
                self.bucket_tx[s][b]
                    .send(BucketMsg::Expand { edge_type, seed, entries, reply })
                    .map_err(|_| GraphError::Invalid("engine bucket closed".into()))?;
                pending.push(rx);
            }
            for rx in pending {
                let batch = rx
                    .recv()
                    .map_err(|_| GraphError::Invalid("engine bucket dropped reply".into()))?;
                for (slot, v) in batch {
                    drawn[slot] = Some(v);
                }
            }
            for (qi, _) in vertices.iter().enumerate() {
                let mut items = Vec::with_capacity(num);
                for i in 0..num {
                    let slot = qi * num + i;
                    let parent = parents[slot].1;
                    items.push(ContextItem {
                        vertex: drawn[slot].expect("every slot answered"),
                        provenance: self.provenance(origin_shard, parent),
                    });
                }
                prev[qi] = items.iter().map(|it| it.vertex).collect();
                contexts[qi].push(items);
            }
        }
        Ok(contexts)
    }

    /// Negative samples served by the owner bucket of each query vertex.
    pub fn negative(
        &self,
        shard: usize,
        vertices: &[VertexId],
        edge_type: EdgeType,
        neg_num: usize,
        seed: u64,
    ) -> Result<Vec<Vec<VertexId>>> {
        let mut grouped: HashMap<usize, Vec<(usize, VertexId)>> = HashMap::new();
        for (i, &v) in vertices.iter().enumerate() {
            grouped.entry(route(v, &self.group_starts[shard])).or_default().push((i, v));
        }
        let mut out: Vec<Vec<VertexId>> = vec![Vec::new(); vertices.len()];
        let mut pending = Vec::new();
        for (bucket, batch) in grouped {
            let (idxs, vs): (Vec<usize>, Vec<VertexId>) = batch.into_iter().unzip();
            let (reply, rx) = bounded(1);
            self.bucket_tx[shard][bucket]
                .send(BucketMsg::Negative { edge_type, neg_num, seed, vertices: vs, reply })
                .map_err(|_| GraphError::Invalid("engine bucket closed".into()))?;
            pending.push((idxs, rx));
        }
        for (idxs, rx) in pending {
            let batch = rx
                .recv()
                .map_err(|_| GraphError::Invalid("engine bucket dropped reply".into()))??;
            for (i, negs) in idxs.into_iter().zip(batch) {
                out[i] = negs;
            }
        }
        Ok(out)
    }

    /// Routes each update to the bucket owning its source vertex. Sync mode
    /// waits until every bucket has applied its batch.
    pub fn update_weights(&self, updates: Vec<WeightUpdate>, mode: UpdateMode) -> Result<UpdateOutcome> {
        let mut grouped: HashMap<(usize, usize), Vec<WeightUpdate>> = HashMap::new();
        for u in updates {
            let shard = self
                .shared
                .iter()
                .position(|g| g.is_owned(u.src))
                .or_else(|| self.shared[0].plan.vertex_shard(u.src).ok())
                .unwrap_or(0)
                .min(self.shared.len() - 1);
            grouped
                .entry((shard, route(u.src, &self.group_starts[shard])))
                .or_default()
                .push(u);
        }
        let mut total = UpdateOutcome::default();
        let mut pending = Vec::new();
        for ((s, b), batch) in grouped {
            let reply = match mode {
                UpdateMode::Sync => {
                    let (tx, rx) = bounded(1);
                    pending.push(rx);
                    Some(tx)
                }
                UpdateMode::Async => None,
            };
            self.bucket_tx[s][b]
                .send(BucketMsg::Update { updates: batch, reply })
                .map_err(|_| GraphError::Invalid("engine bucket closed".into()))?;
        }
        for rx in pending {
            let o = rx
                .recv()
                .map_err(|_| GraphError::Invalid("engine bucket dropped reply".into()))?;
            total.applied += o.applied;
            total.rejected += o.rejected;
        }
        Ok(total)
    }

    /// Stops all consumers and reassembles the shards, with every pending
    /// weight update folded into both owned adjacency and cache snapshots.
    pub fn shutdown(self) -> Vec<ShardedGraph> {
        let ShardEngine { shared, bucket_tx, overlay, handles, .. } = self;
        drop(bucket_tx);
        let mut slices: HashMap<usize, Vec<HashMap<VertexId, Vec<AdjacencyRecord>>>> =
            HashMap::new();
        for h in handles.into_inner().unwrap() {
            let (shard_id, slice) = h.join().expect("consumer thread panicked");
            slices.entry(shard_id).or_default().push(slice);
        }
        let overlay = overlay.map.read().unwrap().clone();
        let mut graphs: Vec<ShardedGraph> = shared
            .into_iter()
            .map(|arc| Arc::try_unwrap(arc).ok().expect("all consumer handles joined"))
            .collect();
        for g in &mut graphs {
            for slice in slices.remove(&g.shard_id).unwrap_or_default() {
                g.adjacency.extend(slice);
            }
            for (&v, recs) in g.cached_adj.iter_mut() {
                for r in recs {
                    if let Some(&w) = overlay.get(&(v.0, r.neighbor.0, r.edge_type.0)) {
                        r.sampling_weight = w;
                    }
                }
            }
        }
        graphs.sort_by_key(|g| g.shard_id);
        graphs
    }
}
