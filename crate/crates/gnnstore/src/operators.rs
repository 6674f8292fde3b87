//! Aggregate / Combine operators with explicit forward and backward passes,
//! plus the per-hop embedding memo shared across a mini-batch.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::{GraphError, Result, VertexId};

/// Dense row-major matrix. Small and hand-rolled on purpose: every consumer
/// of this type also needs exact, inspectable backward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map(Vec::len).unwrap_or(0);
        assert!(rows.iter().all(|row| row.len() == c));
        Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn seeded_uniform(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec shape");
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// self^T * x
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "t_matvec shape");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] += self.data[i * self.cols + j] * x[i];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Matrix, s: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateKind {
    Mean,
    WeightedMean,
    MaxPool,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineKind {
    ConcatDense,
    SumDense,
}

#[derive(Debug, Clone)]
pub struct OperatorSpec {
    pub d: usize,
    pub aggregate_kind: AggregateKind,
    pub combine_kind: CombineKind,
    /// Combine dense layer: d x 2d for concat, d x d for sum.
    pub w: Matrix,
    pub b: Vec<f64>,
    /// Max-pool shared transform, d x d.
    pub pool_w: Matrix,
    pub pool_b: Vec<f64>,
}

impl OperatorSpec {
    pub fn seeded(d: usize, aggregate_kind: AggregateKind, combine_kind: CombineKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d as f64).sqrt();
        let w_cols = match combine_kind {
            CombineKind::ConcatDense => 2 * d,
            CombineKind::SumDense => d,
        };
        OperatorSpec {
            d,
            aggregate_kind,
            combine_kind,
            w: Matrix::seeded_uniform(d, w_cols, scale, &mut rng),
            b: (0..d).map(|_| rng.gen_range(-scale..scale)).collect(),
            pool_w: Matrix::seeded_uniform(d, d, scale, &mut rng),
            pool_b: (0..d).map(|_| rng.gen_range(-scale..scale)).collect(),
        }
    }

    /// Identity-parameter spec: combine is a plain rectified sum/concat-half,
    /// max-pool transform is the identity. Used by hand-evaluable tests.
    pub fn identity(d: usize, aggregate_kind: AggregateKind, combine_kind: CombineKind) -> Self {
        let w = match combine_kind {
            CombineKind::SumDense => Matrix::identity(d),
            CombineKind::ConcatDense => {
                // [I | I]: output = relu(h_prev + h_agg)
                let mut m = Matrix::zeros(d, 2 * d);
                for i in 0..d {
                    m.set(i, i, 1.0);
                    m.set(i, d + i, 1.0);
                }
                m
            }
        };
        OperatorSpec {
            d,
            aggregate_kind,
            combine_kind,
            w,
            b: vec![0.0; d],
            pool_w: Matrix::identity(d),
            pool_b: vec![0.0; d],
        }
    }

    fn check_shapes(&self) -> Result<()> {
        let want_cols = match self.combine_kind {
            CombineKind::ConcatDense => 2 * self.d,
            CombineKind::SumDense => self.d,
        };
        if self.w.rows != self.d || self.w.cols != want_cols || self.b.len() != self.d {
            return Err(GraphError::Shape(format!(
                "combine params {}x{} (+bias {}) incompatible with d={} {:?}",
                self.w.rows,
                self.w.cols,
                self.b.len(),
                self.d,
                self.combine_kind
            )));
        }
        Ok(())
    }
}

/// Saved forward state for the aggregate backward pass.
#[derive(Debug, Clone)]
pub enum AggTape {
    Mean { n: usize },
    WeightedMean { weights: Vec<f64>, wsum: f64 },
    Sum { n: usize },
    /// Per output coordinate, the index of the winning neighbor; inputs kept
    /// for the transform parameter gradients.
    MaxPool { argmax: Vec<usize>, inputs: Vec<Vec<f64>> },
}

pub fn aggregate_forward(
    spec: &OperatorSpec,
    neighbors: &[Vec<f64>],
    weights: Option<&[f64]>,
) -> Result<(Vec<f64>, AggTape)> {
    if neighbors.is_empty() {
        return Err(GraphError::EmptyNeighborhood);
    }
    let d = neighbors[0].len();
    if neighbors.iter().any(|h| h.len() != d) {
        return Err(GraphError::Shape("ragged neighbor vectors".into()));
    }
    match spec.aggregate_kind {
        AggregateKind::Mean => {
            let n = neighbors.len();
            let mut out = vec![0.0; d];
            for h in neighbors {
                for (o, x) in out.iter_mut().zip(h) {
                    *o += x;
                }
            }
            out.iter_mut().for_each(|o| *o /= n as f64);
            Ok((out, AggTape::Mean { n }))
        }
        AggregateKind::WeightedMean => {
            let weights: Vec<f64> = match weights {
                Some(w) if w.len() == neighbors.len() => w.to_vec(),
                Some(_) => return Err(GraphError::Shape("one weight per neighbor".into())),
                None => vec![1.0; neighbors.len()],
            };
            let wsum: f64 = weights.iter().sum();
            if wsum <= 0.0 {
                return Err(GraphError::Shape("non-positive weight total".into()));
            }
            let mut out = vec![0.0; d];
            for (h, &w) in neighbors.iter().zip(&weights) {
                for (o, x) in out.iter_mut().zip(h) {
                    *o += w * x;
                }
            }
            out.iter_mut().for_each(|o| *o /= wsum);
            Ok((out, AggTape::WeightedMean { weights, wsum }))
        }
        AggregateKind::Sum => {
            let mut out = vec![0.0; d];
            for h in neighbors {
                for (o, x) in out.iter_mut().zip(h) {
                    *o += x;
                }
            }
            Ok((out, AggTape::Sum { n: neighbors.len() }))
        }
        AggregateKind::MaxPool => {
            if spec.pool_w.rows != spec.pool_w.cols || spec.pool_w.cols != d {
                return Err(GraphError::Shape("pool transform must be d x d".into()));
            }
            let mut out = vec![f64::NEG_INFINITY; d];
            let mut argmax = vec![0usize; d];
            for (i, h) in neighbors.iter().enumerate() {
                let t: Vec<f64> = spec
                    .pool_w
                    .matvec(h)
                    .iter()
                    .zip(&spec.pool_b)
                    .map(|(a, b)| a + b)
                    .collect();
                for (j, &v) in t.iter().enumerate() {
                    if v > out[j] {
                        out[j] = v;
                        argmax[j] = i;
                    }
                }
            }
            Ok((out, AggTape::MaxPool { argmax, inputs: neighbors.to_vec() }))
        }
    }
}

pub fn aggregate(
    spec: &OperatorSpec,
    neighbors: &[Vec<f64>],
    weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    aggregate_forward(spec, neighbors, weights).map(|(out, _)| out)
}

pub struct AggGrads {
    pub neighbors: Vec<Vec<f64>>,
    pub pool_w: Option<Matrix>,
    pub pool_b: Option<Vec<f64>>,
}

pub fn aggregate_backward(spec: &OperatorSpec, tape: &AggTape, upstream: &[f64]) -> AggGrads {
    match tape {
        AggTape::Mean { n } => AggGrads {
            neighbors: vec![upstream.iter().map(|g| g / *n as f64).collect(); *n],
            pool_w: None,
            pool_b: None,
        },
        AggTape::WeightedMean { weights, wsum } => AggGrads {
            neighbors: weights
                .iter()
                .map(|w| upstream.iter().map(|g| g * w / wsum).collect())
                .collect(),
            pool_w: None,
            pool_b: None,
        },
        AggTape::Sum { n } => AggGrads {
            neighbors: vec![upstream.to_vec(); *n],
            pool_w: None,
            pool_b: None,
        },
        AggTape::MaxPool { argmax, inputs } => {
            let d = upstream.len();
            // The winner of coordinate j receives upstream[j] through row j of
            // the transform.
            let mut nbr_grads = vec![vec![0.0; inputs[0].len()]; inputs.len()];
            let mut gw = Matrix::zeros(spec.pool_w.rows, spec.pool_w.cols);
            let mut gb = vec![0.0; d];
            for j in 0..d {
                let i = argmax[j];
                gb[j] += upstream[j];
                for c in 0..spec.pool_w.cols {
                    gw.data[j * spec.pool_w.cols + c] += upstream[j] * inputs[i][c];
                    nbr_grads[i][c] += upstream[j] * spec.pool_w.get(j, c);
                }
            }
            AggGrads { neighbors: nbr_grads, pool_w: Some(gw), pool_b: Some(gb) }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CombTape {
    /// The dense-layer input: concat(h_prev, h_agg) or their sum.
    x: Vec<f64>,
    /// Rectifier activation mask.
    active: Vec<bool>,
}

pub fn combine_forward(
    spec: &OperatorSpec,
    h_prev: &[f64],
    h_agg: &[f64],
) -> Result<(Vec<f64>, CombTape)> {
    spec.check_shapes()?;
    if h_prev.len() != spec.d || h_agg.len() != spec.d {
        return Err(GraphError::Shape(format!(
            "combine inputs {} / {} vs d={}",
            h_prev.len(),
            h_agg.len(),
            spec.d
        )));
    }
    let x: Vec<f64> = match spec.combine_kind {
        CombineKind::ConcatDense => h_prev.iter().chain(h_agg).copied().collect(),
        CombineKind::SumDense => h_prev.iter().zip(h_agg).map(|(a, b)| a + b).collect(),
    };
    let z: Vec<f64> = spec.w.matvec(&x).iter().zip(&spec.b).map(|(a, b)| a + b).collect();
    let active: Vec<bool> = z.iter().map(|&v| v > 0.0).collect();
    let out = z.iter().map(|&v| v.max(0.0)).collect();
    Ok((out, CombTape { x, active }))
}

pub fn combine(spec: &OperatorSpec, h_prev: &[f64], h_agg: &[f64]) -> Result<Vec<f64>> {
    combine_forward(spec, h_prev, h_agg).map(|(out, _)| out)
}

pub struct CombGrads {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub h_agg: Vec<f64>,
}

pub fn combine_backward(spec: &OperatorSpec, tape: &CombTape, upstream: &[f64]) -> Result<CombGrads> {
    if upstream.len() != spec.d {
        return Err(GraphError::StateMissing);
    }
    let dz: Vec<f64> = upstream
        .iter()
        .zip(&tape.active)
        .map(|(&g, &a)| if a { g } else { 0.0 })
        .collect();
    let mut gw = Matrix::zeros(spec.w.rows, spec.w.cols);
    for i in 0..spec.w.rows {
        for j in 0..spec.w.cols {
            gw.data[i * spec.w.cols + j] = dz[i] * tape.x[j];
        }
    }
    let dx = spec.w.t_matvec(&dz);
    let (h_prev, h_agg) = match spec.combine_kind {
        CombineKind::ConcatDense => (dx[..spec.d].to_vec(), dx[spec.d..].to_vec()),
        CombineKind::SumDense => (dx.clone(), dx),
    };
    Ok(CombGrads { w: gw, b: dz, h_prev, h_agg })
}

/// Scales to unit Euclidean norm; the zero vector stays zero.
pub fn normalize(v: &mut [f64]) {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Backward through `y = x / ||x||`: dy/dx = (I - y yᵀ)/||x||.
pub fn normalize_backward(pre_norm: &[f64], upstream: &[f64]) -> Vec<f64> {
    let norm: f64 = pre_norm.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return upstream.to_vec();
    }
    let y: Vec<f64> = pre_norm.iter().map(|x| x / norm).collect();
    let dot: f64 = y.iter().zip(upstream).map(|(a, b)| a * b).sum();
    y.iter().zip(upstream).map(|(yi, g)| (g - dot * yi) / norm).collect()
}

/// Per-vertex hop-0 features and the epoch-versioned ĥ^(k) memo. Memoized
/// entries are valid only within the epoch they were computed in; bumping
/// the epoch (after a parameter step) invalidates everything at once.
#[derive(Default)]
pub struct EmbeddingStore {
    features: HashMap<VertexId, Vec<f64>>,
    memo: HashMap<(VertexId, usize), (u64, Vec<f64>)>,
    epoch: u64,
    pub computed: u64,
    pub reused: u64,
}

impl EmbeddingStore {
    pub fn new() -> Self {
        EmbeddingStore::default()
    }

    pub fn set_feature(&mut self, v: VertexId, x: Vec<f64>) {
        self.features.insert(v, x);
    }

    pub fn feature(&self, v: VertexId) -> Option<&Vec<f64>> {
        self.features.get(&v)
    }

    pub fn bump_epoch(&mut self) {
        self.epoch += 1;
    }

    pub fn reset_stats(&mut self) {
        self.computed = 0;
        self.reused = 0;
    }

    pub fn normalize_all_features(&mut self) {
        for v in self.features.values_mut() {
            normalize(v);
        }
    }
}

/// Recursive hop-k embedding with per-(vertex, hop) memoization. `sampled`
/// supplies the neighbor set drawn for each vertex at each hop. With
/// `memoize` off every expansion recomputes, which is what the benchmark
/// compares against; outputs are identical either way.
pub fn memoized_forward(
    store: &mut EmbeddingStore,
    v: VertexId,
    k: usize,
    spec: &OperatorSpec,
    sampled: &impl Fn(VertexId, usize) -> Vec<VertexId>,
    memoize: bool,
) -> Result<Vec<f64>> {
    if k == 0 {
        return store.features.get(&v).cloned().ok_or(GraphError::FeatureMissing(v));
    }
    if memoize {
        if let Some((epoch, h)) = store.memo.get(&(v, k)) {
            if *epoch == store.epoch {
                store.reused += 1;
                return Ok(h.clone());
            }
        }
    }
    let nbrs = sampled(v, k);
    let h_prev = memoized_forward(store, v, k - 1, spec, sampled, memoize)?;
    let nbr_vecs: Vec<Vec<f64>> = nbrs
        .iter()
        .map(|&u| memoized_forward(store, u, k - 1, spec, sampled, memoize))
        .collect::<Result<_>>()?;
    let h_agg = aggregate(spec, &nbr_vecs, None)?;
    let mut out = combine(spec, &h_prev, &h_agg)?;
    normalize(&mut out);
    store.computed += 1;
    if memoize {
        store.memo.insert((v, k), (store.epoch, out.clone()));
    }
    Ok(out)
}
