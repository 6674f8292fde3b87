//! Importance-based selection of vertices whose out-neighborhoods get
//! replicated on every shard that references them.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::partition::DegreeStats;
use crate::store::ShardedGraph;
use crate::types::VertexId;

/// Benefit/cost ratio of caching a vertex's k-hop out-neighborhood.
/// A pure sink (reachable but expanding to nothing) is free to cache, so it
/// gets an infinite score; a fully isolated count pair scores zero.
pub fn importance(d_in: u64, d_out: u64) -> f64 {
    if d_out > 0 {
        d_in as f64 / d_out as f64
    } else if d_in > 0 {
        f64::INFINITY
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct ImportanceStats {
    pub v: VertexId,
    pub d_in: Vec<u64>,
    pub d_out: Vec<u64>,
    pub imp: Vec<f64>,
}

/// Derives per-vertex importance from the global degree pass.
pub fn importance_stats(degrees: &HashMap<VertexId, DegreeStats>) -> Vec<ImportanceStats> {
    let mut out: Vec<ImportanceStats> = degrees
        .iter()
        .map(|(&v, d)| ImportanceStats {
            v,
            d_in: d.d_in.clone(),
            d_out: d.d_out.clone(),
            imp: d
                .d_in
                .iter()
                .zip(&d.d_out)
                .map(|(&i, &o)| importance(i, o))
                .collect(),
        })
        .collect();
    out.sort_by_key(|s| s.v);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CachePolicy {
    Importance,
    Random,
    Lru,
}

#[derive(Debug, Clone)]
pub struct CachePolicyConfig {
    pub h: usize,
    pub tau: Vec<f64>,
    pub policy: CachePolicy,
    pub seed: u64,
}

impl CachePolicyConfig {
    pub fn importance(h: usize, tau: f64) -> Self {
        CachePolicyConfig { h, tau: vec![tau; h], policy: CachePolicy::Importance, seed: 0 }
    }
}

/// Per-hop cache sets. Importance: v is in the hop-k set iff its hop-k
/// importance clears tau_k (and it is not fully isolated at that hop).
/// Random: a uniform set of the same size per hop, for equal-budget
/// comparisons. Lru: empty, the runtime cache populates itself.
pub fn select_cache_set(stats: &[ImportanceStats], cfg: &CachePolicyConfig) -> Vec<HashSet<VertexId>> {
    assert!(cfg.tau.len() >= cfg.h, "one threshold per hop");
    let mut sets: Vec<HashSet<VertexId>> = Vec::with_capacity(cfg.h);
    for k in 0..cfg.h {
        let selected: HashSet<VertexId> = stats
            .iter()
            .filter(|s| {
                (s.d_in[k] > 0 || s.d_out[k] > 0) && s.imp[k] >= cfg.tau[k]
            })
            .map(|s| s.v)
            .collect();
        sets.push(selected);
    }
    match cfg.policy {
        CachePolicy::Importance => sets,
        CachePolicy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            sets.iter()
                .map(|set| {
                    let mut pool: Vec<VertexId> = stats.iter().map(|s| s.v).collect();
                    pool.shuffle(&mut rng);
                    pool.into_iter().take(set.len()).collect()
                })
                .collect()
        }
        CachePolicy::Lru => vec![HashSet::new(); cfg.h],
    }
}

/// Replicates the 1..=k-hop out-neighborhood of each selected vertex on every
/// shard that references it (has it as an edge destination) without owning
/// it. Also snapshots adjacency for the expansion frontier so deeper hops
/// resolve without leaving the shard.
pub fn materialize_cache(shards: &mut [ShardedGraph], sets: &[HashSet<VertexId>]) {
    // Max selected hop per vertex.
    let mut depth: HashMap<VertexId, usize> = HashMap::new();
    for (k, set) in sets.iter().enumerate() {
        for &v in set {
            let d = depth.entry(v).or_insert(0);
            *d = (*d).max(k + 1);
        }
    }
    if depth.is_empty() {
        return;
    }
    // Owner lookup across shards.
    let owner_of: HashMap<VertexId, usize> = shards
        .iter()
        .enumerate()
        .flat_map(|(i, g)| g.owned_vertices.iter().map(move |&v| (v, i)))
        .collect();
    // Which shards reference each selected vertex as a destination.
    let mut referenced: HashMap<VertexId, HashSet<usize>> = HashMap::new();
    for (i, g) in shards.iter().enumerate() {
        for recs in g.adjacency.values() {
            for r in recs {
                if depth.contains_key(&r.neighbor) {
                    referenced.entry(r.neighbor).or_default().insert(i);
                }
            }
        }
    }

    struct Planned {
        hops: Vec<Vec<VertexId>>,
        closure: Vec<VertexId>,
    }
    let records_of = |shards: &[ShardedGraph], v: VertexId| -> Vec<crate::store::AdjacencyRecord> {
        owner_of
            .get(&v)
            .and_then(|&i| shards[i].adjacency.get(&v))
            .cloned()
            .unwrap_or_default()
    };

    let mut plans: Vec<(VertexId, Planned)> = Vec::new();
    let mut selected: Vec<(VertexId, usize)> = depth.iter().map(|(&v, &k)| (v, k)).collect();
    selected.sort();
    for (v, k) in selected {
        let mut seen: HashSet<VertexId> = HashSet::new();
        seen.insert(v);
        let mut frontier = vec![v];
        let mut hops: Vec<Vec<VertexId>> = Vec::with_capacity(k);
        let mut closure: Vec<VertexId> = vec![v];
        for hop in 0..k {
            let mut next = Vec::new();
            for &u in &frontier {
                for r in records_of(shards, u) {
                    if seen.insert(r.neighbor) {
                        next.push(r.neighbor);
                    }
                }
            }
            next.sort();
            if hop + 1 < k {
                closure.extend(next.iter().copied());
            }
            hops.push(next.clone());
            frontier = next;
        }
        plans.push((v, Planned { hops, closure }));
    }

    for (v, plan) in plans {
        let owner = owner_of.get(&v).copied();
        let targets: Vec<usize> = referenced
            .get(&v)
            .map(|set| set.iter().copied().filter(|&s| Some(s) != owner).collect())
            .unwrap_or_default();
        for s in targets {
            let closure_records: Vec<(VertexId, Vec<crate::store::AdjacencyRecord>)> = plan
                .closure
                .iter()
                .filter(|&&u| !shards[s].is_owned(u))
                .map(|&u| (u, records_of(shards, u)))
                .collect();
            let g = &mut shards[s];
            g.remote_cache.insert(v, plan.hops.clone());
            for (u, recs) in closure_records {
                g.cached_adj.entry(u).or_insert(recs);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn importance_values() {
        assert_eq!(importance(4, 4), 1.0);
        assert_eq!(importance(1, 5), 0.2);
        assert!(importance(3, 0).is_infinite());
        assert_eq!(importance(0, 0), 0.0);
    }

    fn stats_fixture() -> Vec<ImportanceStats> {
        // (d_in, d_out) per vertex at one hop
        let raw = [(0u64, 0u64), (2, 4), (4, 2), (3, 0), (0, 5)];
        raw.iter()
            .enumerate()
            .map(|(i, &(di, do_))| ImportanceStats {
                v: VertexId(i as u64),
                d_in: vec![di],
                d_out: vec![do_],
                imp: vec![importance(di, do_)],
            })
            .collect()
    }

    #[test]
    fn tau_zero_selects_all_non_isolated() {
        let cfg = CachePolicyConfig::importance(1, 0.0);
        let sets = select_cache_set(&stats_fixture(), &cfg);
        // vertex 0 is isolated; everything else has in or out flow
        assert_eq!(sets[0].len(), 4);
        assert!(!sets[0].contains(&VertexId(0)));
    }

    #[test]
    fn tau_infinite_selects_only_sinks() {
        let cfg = CachePolicyConfig::importance(1, f64::INFINITY);
        let sets = select_cache_set(&stats_fixture(), &cfg);
        assert_eq!(sets[0].len(), 1);
        assert!(sets[0].contains(&VertexId(3)));
    }

    #[test]
    fn random_policy_matches_budget() {
        let imp = select_cache_set(&stats_fixture(), &CachePolicyConfig::importance(1, 0.5));
        let mut cfg = CachePolicyConfig::importance(1, 0.5);
        cfg.policy = CachePolicy::Random;
        cfg.seed = 7;
        let rand_sets = select_cache_set(&stats_fixture(), &cfg);
        assert_eq!(imp[0].len(), rand_sets[0].len());
        // deterministic under the seed
        let again = select_cache_set(&stats_fixture(), &cfg);
        assert_eq!(rand_sets[0], again[0]);
    }

    #[test]
    fn monotone_in_tau() {
        let stats = stats_fixture();
        let mut prev = usize::MAX;
        for tau in [0.0, 0.2, 0.5, 1.0, 2.0, f64::INFINITY] {
            let sets = select_cache_set(&stats, &CachePolicyConfig::importance(1, tau));
            assert!(sets[0].len() <= prev);
            prev = sets[0].len();
        }
    }
}
