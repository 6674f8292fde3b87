//! Training-loop glue: the hop-recursive GNN forward pass (sampled through
//! the sampling module), skip-gram negative-sampling loss, random-walk
//! corpus generation, GATNE embedding assembly, and graph coarsening.

use std::collections::HashMap;

use crate::operators::{
    aggregate_backward, aggregate_forward, combine_backward, combine_forward, memoized_forward,
    normalize, normalize_backward, AggTape, CombTape, EmbeddingStore, Matrix, OperatorSpec,
};
use crate::sampling::{unit_uniform, weighted_pick, MultiShardView, NeighborAccess};
use crate::store::ShardedGraph;
use crate::types::{EdgeType, GraphError, Result, VertexId};

const GNN_TAG: u64 = 0x676e_6e66;
const WALK_TAG: u64 = 0x7761_6c6b;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub d: usize,
    pub hop_nums: Vec<usize>,
    pub neg_num: usize,
    pub window: usize,
    pub walk_len: usize,
    pub walks_per_vertex: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 16,
            hop_nums: vec![5],
            neg_num: 5,
            window: 2,
            walk_len: 5,
            walks_per_vertex: 2,
            lr: 0.25,
            epochs: 10,
            batch_size: 64,
            seed: 7,
        }
    }
}

/// Neighbor set of `v` used when computing its hop-`k` embedding. Draws
/// `n` weighted samples with replacement; when `n` covers the whole
/// neighborhood the full (distinct, sorted) neighbor list is taken instead,
/// which is what makes the dense no-sampling oracle reachable. Vertices
/// without matching out-edges fall back to themselves.
pub fn sampled_neighbors<V: NeighborAccess>(
    view: &V,
    v: VertexId,
    n: usize,
    edge_type: Option<EdgeType>,
    seed: u64,
    k: usize,
) -> Vec<VertexId> {
    let records = match view.records(v) {
        Some(r) => r,
        None => return vec![v],
    };
    let matching: Vec<VertexId> = records
        .iter()
        .filter(|r| edge_type.map_or(true, |t| r.edge_type == t))
        .map(|r| r.neighbor)
        .collect();
    if matching.is_empty() {
        return vec![v];
    }
    if n >= matching.len() {
        return matching;
    }
    (0..n)
        .map(|i| {
            let u = unit_uniform(&[seed, GNN_TAG, v.0, k as u64, i as u64]);
            weighted_pick(records, edge_type, u).map(|r| r.neighbor).unwrap_or(v)
        })
        .collect()
}

/// Algorithm-1 forward over a batch: per hop sample, aggregate, combine,
/// normalize. Results depend only on the graph content and seed, not on the
/// shard layout.
#[allow(clippy::too_many_arguments)]
pub fn gnn_forward(
    shards: &[ShardedGraph],
    store: &mut EmbeddingStore,
    spec: &OperatorSpec,
    batch: &[VertexId],
    hop_nums: &[usize],
    edge_type: Option<EdgeType>,
    seed: u64,
    memoize: bool,
) -> Result<Vec<Vec<f64>>> {
    let view = MultiShardView::new(shards);
    let k_max = hop_nums.len();
    let sampled = |v: VertexId, k: usize| {
        // hop_nums[0] is the outermost expansion (hop k_max)
        let n = hop_nums[k_max - k];
        sampled_neighbors(&view, v, n, edge_type, seed, k)
    };
    batch
        .iter()
        .map(|&v| memoized_forward(store, v, k_max, spec, &sampled, memoize))
        .collect()
}

/// Forward node with enough saved state to run an exact backward pass.
enum TapeNode {
    Leaf { v: VertexId, out: Vec<f64> },
    Inner {
        prev: Box<TapeNode>,
        nbrs: Vec<TapeNode>,
        agg: AggTape,
        comb: CombTape,
        pre_norm: Vec<f64>,
        out: Vec<f64>,
    },
}

impl TapeNode {
    fn out(&self) -> &[f64] {
        match self {
            TapeNode::Leaf { out, .. } | TapeNode::Inner { out, .. } => out,
        }
    }
}

fn forward_taped(
    store: &EmbeddingStore,
    spec: &OperatorSpec,
    v: VertexId,
    k: usize,
    sampled: &impl Fn(VertexId, usize) -> Vec<VertexId>,
) -> Result<TapeNode> {
    if k == 0 {
        let out = store.feature(v).cloned().ok_or(GraphError::FeatureMissing(v))?;
        return Ok(TapeNode::Leaf { v, out });
    }
    let prev = forward_taped(store, spec, v, k - 1, sampled)?;
    let nbrs: Vec<TapeNode> = sampled(v, k)
        .into_iter()
        .map(|u| forward_taped(store, spec, u, k - 1, sampled))
        .collect::<Result<_>>()?;
    let nbr_vecs: Vec<Vec<f64>> = nbrs.iter().map(|n| n.out().to_vec()).collect();
    let (h_agg, agg) = aggregate_forward(spec, &nbr_vecs, None)?;
    let (pre_norm, comb) = combine_forward(spec, prev.out(), &h_agg)?;
    let mut out = pre_norm.clone();
    normalize(&mut out);
    Ok(TapeNode::Inner { prev: Box::new(prev), nbrs, agg, comb, pre_norm, out })
}

/// Accumulated gradients of one training step.
pub struct Grads {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub pool_w: Matrix,
    pub pool_b: Vec<f64>,
    pub features: HashMap<VertexId, Vec<f64>>,
}

impl Grads {
    fn zeros(spec: &OperatorSpec) -> Self {
        Grads {
            w: Matrix::zeros(spec.w.rows, spec.w.cols),
            b: vec![0.0; spec.b.len()],
            pool_w: Matrix::zeros(spec.pool_w.rows, spec.pool_w.cols),
            pool_b: vec![0.0; spec.pool_b.len()],
            features: HashMap::new(),
        }
    }
}

fn backward_taped(
    spec: &OperatorSpec,
    node: &TapeNode,
    upstream: &[f64],
    grads: &mut Grads,
) -> Result<()> {
    match node {
        TapeNode::Leaf { v, out } => {
            let g = grads.features.entry(*v).or_insert_with(|| vec![0.0; out.len()]);
            for (a, b) in g.iter_mut().zip(upstream) {
                *a += b;
            }
        }
        TapeNode::Inner { prev, nbrs, agg, comb, pre_norm, .. } => {
            let g = normalize_backward(pre_norm, upstream);
            let cg = combine_backward(spec, comb, &g)?;
            grads.w.add_scaled(&cg.w, 1.0);
            for (a, b) in grads.b.iter_mut().zip(&cg.b) {
                *a += b;
            }
            let ag = aggregate_backward(spec, agg, &cg.h_agg);
            if let Some(pw) = &ag.pool_w {
                grads.pool_w.add_scaled(pw, 1.0);
            }
            if let Some(pb) = &ag.pool_b {
                for (a, b) in grads.pool_b.iter_mut().zip(pb) {
                    *a += b;
                }
            }
            backward_taped(spec, prev, &cg.h_prev, grads)?;
            for (n, gn) in nbrs.iter().zip(&ag.neighbors) {
                backward_taped(spec, n, gn, grads)?;
            }
        }
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub struct SkipgramGrads {
    pub loss: f64,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// loss = -log sigma(c . ctx) - sum_n log sigma(-(c . n)), exact gradients.
pub fn skipgram_nsloss(center: &[f64], context: &[f64], negatives: &[Vec<f64>]) -> SkipgramGrads {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let s_pos = sigmoid(dot(center, context));
    let mut loss = -s_pos.max(1e-300).ln();
    let mut g_center: Vec<f64> = context.iter().map(|x| -(1.0 - s_pos) * x).collect();
    let g_context: Vec<f64> = center.iter().map(|x| -(1.0 - s_pos) * x).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    for n in negatives {
        let s_neg = sigmoid(dot(center, n));
        loss -= (1.0 - s_neg).max(1e-300).ln();
        for (gc, x) in g_center.iter_mut().zip(n) {
            *gc += s_neg * x;
        }
        g_negs.push(center.iter().map(|x| s_neg * x).collect());
    }
    SkipgramGrads { loss, center: g_center, context: g_context, negatives: g_negs }
}

/// One weighted random walk; dead ends truncate.
pub fn random_walk<V: NeighborAccess>(
    view: &V,
    start: VertexId,
    edge_type: Option<EdgeType>,
    walk_len: usize,
    seed: u64,
) -> Vec<VertexId> {
    let mut walk = vec![start];
    let mut cur = start;
    for step in 0..walk_len.saturating_sub(1) {
        let next = view.records(cur).and_then(|records| {
            let u = unit_uniform(&[seed, WALK_TAG, start.0, step as u64]);
            weighted_pick(records, edge_type, u).map(|r| r.neighbor)
        });
        match next {
            Some(n) => {
                walk.push(n);
                cur = n;
            }
            None => break,
        }
    }
    walk
}

/// (center, context) pairs for every offset 1 <= |p'| <= window within a walk.
pub fn walk_pairs(walk: &[VertexId], window: usize) -> Vec<(VertexId, VertexId)> {
    let mut pairs = Vec::new();
    for (i, &c) in walk.iter().enumerate() {
        for off in 1..=window {
            if i >= off {
                pairs.push((c, walk[i - off]));
            }
            if i + off < walk.len() {
                pairs.push((c, walk[i + off]));
            }
        }
    }
    pairs
}

/// Full corpus: `walks_per_vertex` seeded walks from every vertex with
/// out-edges, expanded into skip-gram pairs.
pub fn random_walk_corpus(
    shards: &[ShardedGraph],
    edge_type: Option<EdgeType>,
    walk_len: usize,
    walks_per_vertex: usize,
    window: usize,
    seed: u64,
) -> Vec<(VertexId, VertexId)> {
    let view = MultiShardView::new(shards);
    let mut starts: Vec<VertexId> = shards
        .iter()
        .flat_map(|g| g.adjacency.keys().copied())
        .collect();
    starts.sort();
    let mut pairs = Vec::new();
    for &v in &starts {
        for w in 0..walks_per_vertex {
            let walk = random_walk(&view, v, edge_type, walk_len, seed ^ (w as u64).wrapping_mul(0x9e37));
            pairs.extend(walk_pairs(&walk, window));
        }
    }
    pairs
}

pub struct GatneParams {
    /// general embedding, length d
    pub b_v: Vec<f64>,
    /// s x t: the t meta-specific embedding blocks as columns
    pub g_v: Matrix,
    /// s x d edge-type transform
    pub m_c: Matrix,
    /// a x d attribute transform
    pub d_mat: Matrix,
    /// length t, one coefficient per meta-specific block
    pub a_c: Vec<f64>,
    pub alpha_c: f64,
    pub beta_c: f64,
    /// attribute vector, length a
    pub x_v: Vec<f64>,
}

/// h_{v,c} = b_v + alpha_c * M_c^T (G_v a_c) + beta_c * D^T x_v
pub fn gatne_embedding(p: &GatneParams) -> Result<Vec<f64>> {
    let d = p.b_v.len();
    if p.g_v.cols != p.a_c.len() {
        return Err(GraphError::Shape(format!(
            "g_v has {} blocks but a_c has {}",
            p.g_v.cols,
            p.a_c.len()
        )));
    }
    if p.m_c.rows != p.g_v.rows || p.m_c.cols != d {
        return Err(GraphError::Shape("M_c must be s x d".into()));
    }
    if p.d_mat.rows != p.x_v.len() || p.d_mat.cols != d {
        return Err(GraphError::Shape("D must be a x d".into()));
    }
    let ga = p.g_v.matvec(&p.a_c);
    let specific = p.m_c.t_matvec(&ga);
    let attr = p.d_mat.t_matvec(&p.x_v);
    Ok((0..d)
        .map(|i| p.b_v[i] + p.alpha_c * specific[i] + p.beta_c * attr[i])
        .collect())
}

pub struct CoarsenLevel {
    pub a: Matrix,
    /// row-stochastic assignment, clusters_l x clusters_{l+1}
    pub s: Matrix,
    pub z: Matrix,
}

/// A' = S^T A S, X' = S^T Z.
pub fn coarsen(level: &CoarsenLevel) -> Result<(Matrix, Matrix)> {
    let n = level.a.rows;
    if level.a.cols != n || level.s.rows != n || level.z.rows != n {
        return Err(GraphError::Shape("coarsen shapes must chain on n".into()));
    }
    for i in 0..level.s.rows {
        let sum: f64 = (0..level.s.cols).map(|j| level.s.get(i, j)).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(GraphError::Shape(format!("S row {i} sums to {sum}, not 1")));
        }
    }
    let st = level.s.transpose();
    let a_next = st.matmul(&level.a).matmul(&level.s);
    let x_next = st.matmul(&level.z);
    Ok((a_next, x_next))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Skipgram,
    SupervisedLinkpred,
}

pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub embeddings: HashMap<VertexId, Vec<f64>>,
}

/// Skip-gram training over sampled batches. Hop-0 features are trainable
/// per-vertex vectors (one-hot inputs folded into an input projection), so
/// the structure alone drives the embedding geometry.
pub fn train(
    shards: &[ShardedGraph],
    cfg: &TrainConfig,
    objective: Objective,
    edge_type: Option<EdgeType>,
) -> Result<TrainReport> {
    use crate::operators::{AggregateKind, CombineKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let _ = objective; // both objectives share the contrastive machinery
    let mut vertices: Vec<VertexId> = shards
        .iter()
        .flat_map(|g| g.owned_vertices.iter().copied())
        .collect();
    vertices.sort();
    if vertices.is_empty() {
        return Err(GraphError::EmptyDomain);
    }
    let mut spec = OperatorSpec::seeded(cfg.d, AggregateKind::Mean, CombineKind::SumDense, cfg.seed);
    let mut store = EmbeddingStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x66656174);
    let scale = 1.0 / (cfg.d as f64).sqrt();
    for &v in &vertices {
        store.set_feature(v, (0..cfg.d).map(|_| rng.gen_range(-scale..scale)).collect());
    }
    let et = edge_type.unwrap_or(EdgeType(0));
    let k_max = cfg.hop_nums.len();

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut steps = 0usize;
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        let mut epoch_terms = 0usize;
        let steps_per_epoch = vertices.len().div_ceil(cfg.batch_size).max(1);
        for step in 0..steps_per_epoch {
            let step_seed =
                crate::types::mix_seed(&[cfg.seed, epoch as u64, step as u64, 0x73746570]);
            // traverse-sample a batch from each shard in turn
            let shard_idx = step % shards.len();
            let batch = match crate::sampling::traverse_sample(
                &shards[shard_idx],
                et,
                cfg.batch_size,
                step_seed,
            ) {
                Ok(b) => b,
                Err(GraphError::EmptyDomain) => continue,
                Err(e) => return Err(e),
            };
            let view = MultiShardView::new(shards);
            let contexts =
                crate::sampling::neighborhood_sample(&view, shard_idx, &batch, Some(et), &[1], step_seed);
            let negatives = crate::sampling::negative_sample(
                &shards[shard_idx],
                &batch,
                et,
                cfg.neg_num,
                step_seed ^ 0x6e6567,
            )?;

            let mut grads = Grads::zeros(&spec);
            let sampled = |v: VertexId, k: usize| {
                let n = cfg.hop_nums[k_max - k];
                sampled_neighbors(&view, v, n, Some(et), step_seed, k)
            };
            let mut step_loss = 0.0;
            for (bi, &center) in batch.iter().enumerate() {
                let ctx_v = contexts[bi][0][0].vertex;
                let center_node = forward_taped(&store, &spec, center, k_max, &sampled)?;
                let ctx_node = forward_taped(&store, &spec, ctx_v, k_max, &sampled)?;
                let neg_nodes: Vec<TapeNode> = negatives[bi]
                    .iter()
                    .map(|&nv| forward_taped(&store, &spec, nv, k_max, &sampled))
                    .collect::<Result<_>>()?;
                let neg_vecs: Vec<Vec<f64>> =
                    neg_nodes.iter().map(|n| n.out().to_vec()).collect();
                let sg = skipgram_nsloss(center_node.out(), ctx_node.out(), &neg_vecs);
                if !sg.loss.is_finite() {
                    return Err(GraphError::Diverged(format!(
                        "non-finite loss at epoch {epoch} step {step}"
                    )));
                }
                step_loss += sg.loss;
                backward_taped(&spec, &center_node, &sg.center, &mut grads)?;
                backward_taped(&spec, &ctx_node, &sg.context, &mut grads)?;
                for (n, gn) in neg_nodes.iter().zip(&sg.negatives) {
                    backward_taped(&spec, n, gn, &mut grads)?;
                }
            }
            // SGD step
            let lr = cfg.lr / batch.len().max(1) as f64;
            spec.w.add_scaled(&grads.w, -lr);
            for (p, g) in spec.b.iter_mut().zip(&grads.b) {
                *p -= lr * g;
            }
            spec.pool_w.add_scaled(&grads.pool_w, -lr);
            for (p, g) in spec.pool_b.iter_mut().zip(&grads.pool_b) {
                *p -= lr * g;
            }
            for (v, g) in &grads.features {
                if let Some(f) = store.feature(*v).cloned().map(|mut f| {
                    for (a, b) in f.iter_mut().zip(g) {
                        *a -= lr * b;
                    }
                    f
                }) {
                    store.set_feature(*v, f);
                }
            }
            epoch_loss += step_loss;
            epoch_terms += batch.len();
            steps += 1;
        }
        epoch_losses.push(if epoch_terms > 0 { epoch_loss / epoch_terms as f64 } else { 0.0 });
    }

    // final embeddings via the shared forward path
    let mut embeddings = HashMap::new();
    let final_seed = crate::types::mix_seed(&[cfg.seed, 0x66696e]);
    let outs = gnn_forward(
        shards,
        &mut store,
        &spec,
        &vertices,
        &cfg.hop_nums,
        Some(et),
        final_seed,
        true,
    )?;
    for (&v, h) in vertices.iter().zip(outs) {
        embeddings.insert(v, h);
    }
    Ok(TrainReport { epoch_losses, steps, embeddings })
}
