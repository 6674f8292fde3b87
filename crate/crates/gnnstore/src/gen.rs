//! Deterministic synthetic graph generators for fixtures and benchmarks.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::partition::{EdgeInput, VertexInput};
use crate::types::{EdgeType, GraphError, Result, VertexId, VertexType};

#[derive(Debug, Clone, PartialEq)]
pub enum GraphModel {
    /// Directed growth with degree-proportional attachment. Each new vertex
    /// creates `m_per` edges. With probability `orient_prob` an edge points
    /// new -> old and the old endpoint is drawn proportional to in-degree
    /// plus one; otherwise it points old -> new and the old endpoint is
    /// drawn proportional to out-degree plus one. In- and out-hubs therefore
    /// grow independently and both tails are heavy.
    PreferentialAttachment { n: u64, m_per: usize, orient_prob: f64 },
    ErdosRenyi { n: u64, m: u64 },
    /// Stochastic block model with equal-size contiguous communities.
    Sbm { n: u64, communities: usize, intra_p: f64, inter_p: f64 },
    Path { n: u64 },
    Star { n: u64 },
    Clique { n: u64 },
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub model: GraphModel,
    pub seed: u64,
    /// Vertex attribute arity; values drawn from a small categorical pool so
    /// attribute dedup has something to do.
    pub v_arity: usize,
    pub e_arity: usize,
    pub attr_pool: u64,
    /// When set, vertices alternate between two types and edges between two
    /// edge types.
    pub hetero: bool,
}

impl SyntheticSpec {
    pub fn new(model: GraphModel, seed: u64) -> Self {
        SyntheticSpec { model, seed, v_arity: 4, e_arity: 2, attr_pool: 16, hetero: false }
    }
}

pub struct SyntheticGraph {
    pub vertices: Vec<VertexInput>,
    pub edges: Vec<EdgeInput>,
}

fn attr(rng: &mut ChaCha8Rng, arity: usize, pool: u64) -> Vec<f64> {
    (0..arity).map(|_| rng.gen_range(0..pool.max(1)) as f64).collect()
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = match spec.model {
        GraphModel::PreferentialAttachment { n, .. }
        | GraphModel::ErdosRenyi { n, .. }
        | GraphModel::Sbm { n, .. }
        | GraphModel::Path { n }
        | GraphModel::Star { n }
        | GraphModel::Clique { n } => n,
    };
    if n == 0 {
        return Err(GraphError::Invalid("empty graph requested".into()));
    }
    let mut pairs: Vec<(u64, u64)> = Vec::new();
    match spec.model {
        GraphModel::Path { n } => {
            for i in 0..n.saturating_sub(1) {
                pairs.push((i, i + 1));
            }
        }
        GraphModel::Star { n } => {
            for i in 1..n {
                pairs.push((0, i));
            }
        }
        GraphModel::Clique { n } => {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        pairs.push((i, j));
                    }
                }
            }
        }
        GraphModel::ErdosRenyi { n, m } => {
            if n < 2 || m > n * (n - 1) {
                return Err(GraphError::Invalid(format!("infeasible ER spec n={n} m={m}")));
            }
            let mut seen = HashSet::with_capacity(m as usize);
            while (pairs.len() as u64) < m {
                let s = rng.gen_range(0..n);
                let d = rng.gen_range(0..n);
                if s != d && seen.insert((s, d)) {
                    pairs.push((s, d));
                }
            }
        }
        GraphModel::Sbm { n, communities, intra_p, inter_p } => {
            if communities == 0 {
                return Err(GraphError::Invalid("sbm needs >= 1 community".into()));
            }
            let block = |v: u64| (v as usize * communities / n as usize).min(communities - 1);
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let p = if block(i) == block(j) { intra_p } else { inter_p };
                    if rng.gen_bool(p) {
                        pairs.push((i, j));
                    }
                }
            }
        }
        GraphModel::PreferentialAttachment { n, m_per, orient_prob } => {
            if m_per == 0 {
                return Err(GraphError::Invalid("m_per must be >= 1".into()));
            }
            let m0 = (m_per as u64 + 1).min(n);
            // Sampling from these lists realizes attachment proportional to
            // (degree + 1): every vertex enters each list once at birth and
            // edges append their endpoint on the matching side.
            let mut in_list: Vec<u64> = Vec::new();
            let mut out_list: Vec<u64> = Vec::new();
            // Seed component: a small directed cycle.
            for i in 0..m0 {
                in_list.push(i);
                out_list.push(i);
                let j = (i + 1) % m0;
                if m0 > 1 {
                    pairs.push((i, j));
                    out_list.push(i);
                    in_list.push(j);
                }
            }
            for v in m0..n {
                let mut chosen: HashSet<u64> = HashSet::new();
                let wanted = m_per.min(v as usize);
                let mut guard = 0;
                let mut new_in = Vec::new();
                let mut new_out = Vec::new();
                while chosen.len() < wanted && guard < 100 * m_per {
                    guard += 1;
                    if rng.gen_bool(orient_prob) {
                        let t = in_list[rng.gen_range(0..in_list.len())];
                        if t == v || !chosen.insert(t) {
                            continue;
                        }
                        pairs.push((v, t));
                        new_out.push(v);
                        new_in.push(t);
                    } else {
                        let t = out_list[rng.gen_range(0..out_list.len())];
                        if t == v || !chosen.insert(t) {
                            continue;
                        }
                        pairs.push((t, v));
                        new_out.push(t);
                        new_in.push(v);
                    }
                }
                in_list.push(v);
                out_list.push(v);
                in_list.extend(new_in);
                out_list.extend(new_out);
            }
        }
    }

    let vertices = (0..n)
        .map(|i| VertexInput {
            id: VertexId(i),
            vtype: if spec.hetero { VertexType((i % 2) as u16) } else { VertexType(0) },
            attr: attr(&mut rng, spec.v_arity, spec.attr_pool),
        })
        .collect();
    let edges = pairs
        .into_iter()
        .enumerate()
        .map(|(i, (s, d))| EdgeInput {
            src: VertexId(s),
            dst: VertexId(d),
            edge_type: if spec.hetero { EdgeType((i % 2) as u16) } else { EdgeType(0) },
            weight: 1.0,
            attr: attr(&mut rng, spec.e_arity, spec.attr_pool),
        })
        .collect();
    Ok(SyntheticGraph { vertices, edges })
}
