//! Command-line surface: generation, build orchestration, statistics,
//! benchmarks and training. Exit codes: 0 success, 2 usage, 3 data error,
//! 4 divergence.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use gnnstore::bench;
use gnnstore::gen::{generate, GraphModel, SyntheticSpec};
use gnnstore::io;
use gnnstore::operators::{AggregateKind, CombineKind, OperatorSpec};
use gnnstore::partition::{
    global_degree_pass, partition, BuildConfig, PartitionPlan, Strategy,
};
use gnnstore::runtime::{train, Objective, TrainConfig};
use gnnstore::sampling::engine::{EngineConfig, ShardEngine};
use gnnstore::store::ShardedGraph;
use gnnstore::types::{mix_seed, EdgeType, GraphError, VertexId};

type Result<T> = std::result::Result<T, GraphError>;

#[derive(Parser)]
#[command(name = "gnnstore", about = "Sharded graph store, sampler and GNN trainer")]
struct Cli {
    /// Base RNG seed for everything downstream.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Number of shards.
    #[arg(long, global = true, default_value_t = 1)]
    shards: usize,
    /// key=value file overriding the global flags (keys: seed, shards).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic graph into vertex/edge TSV files.
    Gen {
        /// pa | er | sbm | path | star | clique
        #[arg(long)]
        model: String,
        #[arg(long)]
        n: u64,
        /// er: edge count
        #[arg(long)]
        m: Option<u64>,
        /// pa: edges per new vertex
        #[arg(long, default_value_t = 4)]
        m_per: usize,
        /// pa: probability a new edge points new -> old
        #[arg(long, default_value_t = 0.5)]
        orient_prob: f64,
        #[arg(long, default_value_t = 2)]
        communities: usize,
        #[arg(long, default_value_t = 0.2)]
        intra_p: f64,
        #[arg(long, default_value_t = 0.01)]
        inter_p: f64,
        #[arg(long)]
        hetero: bool,
        #[arg(long)]
        vertices_out: PathBuf,
        #[arg(long)]
        edges_out: PathBuf,
    },
    /// Partition and build shards; prints quality, storage and timing.
    Build {
        #[arg(long)]
        vertices: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        /// hash | vcut | grid2d | stream | file:<path>
        #[arg(long, default_value = "hash")]
        partition: String,
        #[arg(long, default_value_t = 0)]
        v_arity: usize,
        #[arg(long, default_value_t = 0)]
        e_arity: usize,
        /// Validate that the input really is heterogeneous.
        #[arg(long)]
        hetero: bool,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Per-vertex k-hop degree and importance CSV.
    DegreeStats {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, default_value_t = 2)]
        hops: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cached-fraction sweep over importance thresholds.
    CacheStats {
        #[arg(long)]
        edges: PathBuf,
        /// start:end:step
        #[arg(long, default_value = "0.05:0.45:0.05")]
        tau_sweep: String,
        #[arg(long, default_value_t = 2)]
        hops: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remote-fetch comparison of importance / random / lru cache policies.
    BenchCache {
        #[arg(long)]
        vertices: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        tau: f64,
        #[arg(long, default_value_t = 2)]
        hops: usize,
        #[arg(long, default_value_t = 32)]
        queries: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        /// comma-separated per-hop sample sizes
        #[arg(long, default_value = "2,2")]
        hop_nums: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sampling latency percentiles through the bucket engine.
    SampleBench {
        #[arg(long)]
        vertices: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        /// traverse | neighborhood | negative
        #[arg(long, default_value = "neighborhood")]
        kind: String,
        #[arg(long, default_value_t = 512)]
        batch: usize,
        #[arg(long, default_value = "2,2")]
        hops: String,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 2)]
        buckets: usize,
        #[arg(long, default_value_t = 5)]
        neg: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Operator wall time and computed/reused counters, memoize on vs off.
    OpBench {
        #[arg(long)]
        vertices: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        /// on | off | both
        #[arg(long, default_value = "both")]
        memoize: String,
        #[arg(long, default_value_t = 512)]
        batch: usize,
        #[arg(long, default_value = "4,4")]
        hops: String,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Skip-gram training with an embedding dump.
    Train {
        #[arg(long)]
        vertices: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        /// skipgram | supervised-linkpred
        #[arg(long, default_value = "skipgram")]
        objective: String,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value = "5")]
        hop_nums: String,
        #[arg(long, default_value_t = 5)]
        neg: usize,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0.25)]
        lr: f64,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long)]
        emb_out: PathBuf,
    },
    /// Summarize a bench CSV with derived verdict lines.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn parse_hops(s: &str) -> Result<Vec<usize>> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| usage(format!("bad hop count {t:?}"))))
        .collect::<Result<_>>()?;
    if v.is_empty() || v.iter().any(|&n| n == 0) {
        return Err(usage("hop sample sizes must be >= 1".into()));
    }
    Ok(v)
}

fn usage(msg: String) -> GraphError {
    GraphError::Invalid(format!("usage: {msg}"))
}

fn parse_strategy(s: &str) -> Result<(Strategy, Option<PathBuf>)> {
    Ok(match s {
        "hash" => (Strategy::EdgeCutHash, None),
        "vcut" => (Strategy::VertexCutGreedy, None),
        "grid2d" => (Strategy::Grid2d, None),
        "stream" => (Strategy::StreamingGreedy, None),
        other => match other.strip_prefix("file:") {
            Some(p) => (Strategy::ExternalFile, Some(PathBuf::from(p))),
            None => return Err(usage(format!("unknown partition strategy {other:?}"))),
        },
    })
}

fn build_from_files(
    vertices: &Path,
    edges: &Path,
    shards: usize,
    strategy: &str,
    v_arity: usize,
    e_arity: usize,
    hetero: bool,
) -> Result<(Vec<ShardedGraph>, gnnstore::partition::PartitionQuality)> {
    let vs = io::load_vertices(vertices)?;
    let es = io::load_edges(edges)?;
    let (strat, plan_path) = parse_strategy(strategy)?;
    let plan = match plan_path {
        Some(p) => PartitionPlan::external(shards, io::load_plan(&p)?)?,
        None => PartitionPlan::new(shards, strat),
    };
    let cfg = BuildConfig {
        v_arity,
        e_arity,
        attr_cache_capacity: 1024,
        declared_heterogeneous: hetero,
    };
    let (built, quality, _) = partition(&vs, &es, plan, &cfg)?;
    Ok((built, quality))
}

fn infer_arity(path: &Path) -> Result<(usize, usize)> {
    // arity of the first data row; files written by `gen` are uniform
    let vs = io::load_vertices(path)?;
    Ok((vs.first().map(|v| v.attr.len()).unwrap_or(0), 0))
}

fn run(cli: Cli) -> Result<()> {
    let mut seed = cli.seed;
    let mut shards = cli.shards;
    if let Some(cfg_path) = &cli.config {
        for (k, v) in io::load_config(cfg_path)? {
            match k.as_str() {
                "seed" => {
                    seed = v.parse().map_err(|_| usage(format!("bad config seed {v:?}")))?
                }
                "shards" => {
                    shards = v.parse().map_err(|_| usage(format!("bad config shards {v:?}")))?
                }
                other => return Err(usage(format!("unknown config key {other:?}"))),
            }
        }
    }
    if shards == 0 {
        return Err(usage("--shards must be >= 1".into()));
    }

    match cli.cmd {
        Cmd::Gen {
            model,
            n,
            m,
            m_per,
            orient_prob,
            communities,
            intra_p,
            inter_p,
            hetero,
            vertices_out,
            edges_out,
        } => {
            let model = match model.as_str() {
                "pa" => GraphModel::PreferentialAttachment { n, m_per, orient_prob },
                "er" => GraphModel::ErdosRenyi {
                    n,
                    m: m.ok_or_else(|| usage("er model needs --m".into()))?,
                },
                "sbm" => GraphModel::Sbm { n, communities, intra_p, inter_p },
                "path" => GraphModel::Path { n },
                "star" => GraphModel::Star { n },
                "clique" => GraphModel::Clique { n },
                other => return Err(usage(format!("unknown model {other:?}"))),
            };
            let mut spec = SyntheticSpec::new(model, seed);
            spec.hetero = hetero;
            let g = generate(&spec)?;
            io::write_vertices(&vertices_out, &g.vertices)?;
            io::write_edges(&edges_out, &g.edges)?;
            println!(
                "generated {} vertices, {} edges -> {}, {}",
                g.vertices.len(),
                g.edges.len(),
                vertices_out.display(),
                edges_out.display()
            );
        }
        Cmd::Build { vertices, edges, partition: strat, v_arity, e_arity, hetero, manifest } => {
            let t0 = Instant::now();
            let (built, quality) =
                build_from_files(&vertices, &edges, shards, &strat, v_arity, e_arity, hetero)?;
            let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
            let total_edges: usize = built.iter().map(|g| g.edge_count()).sum();
            println!("shards: {}", built.len());
            println!("edges stored: {total_edges}");
            println!("crossing edges: {}", quality.crossing_edges);
            println!("balance: {:.4}", quality.balance);
            for g in &built {
                let r = g.storage_report();
                println!(
                    "shard {}: vertices={} edges={} combined_bytes={} separated_bytes={}",
                    g.shard_id,
                    r.n,
                    g.edge_count(),
                    r.combined_bytes,
                    r.separated_bytes
                );
            }
            println!("build wall ms: {wall_ms:.1}");
            if let Some(mpath) = manifest {
                let m = bench::RunManifest {
                    command: "build".into(),
                    config: vec![
                        ("shards".into(), shards.to_string()),
                        ("partition".into(), strat),
                    ],
                    seed,
                    input_digests: vec![
                        (vertices.display().to_string(), bench::sha256_file(&vertices)?),
                        (edges.display().to_string(), bench::sha256_file(&edges)?),
                    ],
                    output_files: vec![],
                    wall_ms,
                };
                bench::write_manifest(&mpath, &m)?;
            }
        }
        Cmd::DegreeStats { edges, hops, out } => {
            let es = io::load_edges(&edges)?;
            let pairs: Vec<(VertexId, VertexId)> = es.iter().map(|e| (e.src, e.dst)).collect();
            let degrees = global_degree_pass(&pairs, hops);
            bench::write_degree_stats_csv(&out, &degrees)?;
            println!("degree stats for {} vertices -> {}", degrees.len(), out.display());
        }
        Cmd::CacheStats { edges, tau_sweep, hops, out } => {
            let parts: Vec<&str> = tau_sweep.split(':').collect();
            if parts.len() != 3 {
                return Err(usage(format!("--tau-sweep wants start:end:step, got {tau_sweep:?}")));
            }
            let (start, end, step): (f64, f64, f64) = (
                parts[0].parse().map_err(|_| usage("bad sweep start".into()))?,
                parts[1].parse().map_err(|_| usage("bad sweep end".into()))?,
                parts[2].parse().map_err(|_| usage("bad sweep step".into()))?,
            );
            if step <= 0.0 || end < start {
                return Err(usage("sweep needs step > 0 and end >= start".into()));
            }
            let mut taus = Vec::new();
            let mut t = start;
            while t <= end + 1e-9 {
                taus.push(t);
                t += step;
            }
            let es = io::load_edges(&edges)?;
            let pairs: Vec<(VertexId, VertexId)> = es.iter().map(|e| (e.src, e.dst)).collect();
            let degrees = global_degree_pass(&pairs, hops);
            let rows = bench::cache_stats_sweep(&degrees, hops, &taus);
            bench::write_cache_stats_csv(&out, &rows)?;
            println!("{} sweep points -> {}", rows.len(), out.display());
        }
        Cmd::BenchCache { vertices, edges, tau, hops, queries, batch, hop_nums, out } => {
            let hop_nums = parse_hops(&hop_nums)?;
            let es = io::load_edges(&edges)?;
            let pairs: Vec<(VertexId, VertexId)> = es.iter().map(|e| (e.src, e.dst)).collect();
            let degrees = global_degree_pass(&pairs, hops);
            let (v_arity, e_arity) = infer_arity(&vertices)?;
            let cfg = bench::CacheBenchConfig {
                h: hops,
                tau,
                seed,
                queries_per_shard: queries,
                batch,
                hop_nums,
                edge_type: EdgeType(0),
            };
            let vpath = vertices.clone();
            let epath = edges.clone();
            let rows = bench::bench_cache(
                &move || {
                    build_from_files(&vpath, &epath, shards, "hash", v_arity, e_arity, false)
                        .map(|(s, _)| s)
                },
                &degrees,
                &cfg,
            )?;
            bench::write_cache_bench_csv(&out, &rows)?;
            for r in &rows {
                println!(
                    "{}: cached={} remote={}/{} wall_ms={:.1}",
                    r.policy, r.cached_vertices, r.remote_fetches, r.total_reads, r.wall_ms
                );
            }
        }
        Cmd::SampleBench { vertices, edges, kind, batch, hops, iters, buckets, neg, out } => {
            let hop_nums = parse_hops(&hops)?;
            let (v_arity, e_arity) = infer_arity(&vertices)?;
            let (built, _) =
                build_from_files(&vertices, &edges, shards, "hash", v_arity, e_arity, false)?;
            let engine = ShardEngine::new(
                built,
                &EngineConfig { buckets_per_shard: buckets, ..Default::default() },
            );
            let et = EdgeType(0);
            let mut samples = Vec::with_capacity(iters);
            for i in 0..iters {
                let s = mix_seed(&[seed, i as u64]);
                let shard = i % engine.num_shards();
                let t0 = Instant::now();
                match kind.as_str() {
                    "traverse" => {
                        engine.traverse(shard, et, batch, s)?;
                    }
                    "neighborhood" => {
                        let vs = engine.traverse(shard, et, batch, s)?;
                        engine.neighborhood(shard, &vs, Some(et), &hop_nums, s)?;
                    }
                    "negative" => {
                        let vs = engine.traverse(shard, et, batch, s)?;
                        engine.negative(shard, &vs, et, neg, s)?;
                    }
                    other => return Err(usage(format!("unknown bench kind {other:?}"))),
                }
                samples.push(t0.elapsed().as_secs_f64() * 1e6);
            }
            engine.shutdown();
            let row = bench::latency_row(&kind, samples);
            println!(
                "{}: p50={:.1}us p90={:.1}us p99={:.1}us",
                row.kind, row.p50_us, row.p90_us, row.p99_us
            );
            bench::write_latency_csv(&out, &[row])?;
        }
        Cmd::OpBench { vertices, edges, memoize, batch, hops, dim, out } => {
            let hop_nums = parse_hops(&hops)?;
            let (v_arity, e_arity) = infer_arity(&vertices)?;
            let (built, _) =
                build_from_files(&vertices, &edges, shards, "hash", v_arity, e_arity, false)?;
            let spec = OperatorSpec::seeded(dim, AggregateKind::Mean, CombineKind::SumDense, seed);
            let mut all: Vec<VertexId> = built
                .iter()
                .flat_map(|g| g.owned_vertices.iter().copied())
                .collect();
            all.sort();
            let batch_vertices: Vec<VertexId> = (0..batch)
                .map(|i| {
                    let u = gnnstore::sampling::unit_uniform(&[seed, 0x6261_7463, i as u64]);
                    all[(u * all.len() as f64) as usize % all.len()]
                })
                .collect();
            let modes: Vec<bool> = match memoize.as_str() {
                "on" => vec![true],
                "off" => vec![false],
                "both" => vec![true, false],
                other => return Err(usage(format!("unknown memoize mode {other:?}"))),
            };
            let mut rows = Vec::new();
            for m in modes {
                let row = bench::op_bench(&built, &spec, &batch_vertices, &hop_nums, seed, m)?;
                println!(
                    "memoize {}: wall_ms={:.1} computed={} reused={}",
                    if m { "on" } else { "off" },
                    row.wall_ms,
                    row.computed,
                    row.reused
                );
                rows.push(row);
            }
            bench::write_op_bench_csv(&out, &rows)?;
        }
        Cmd::Train { vertices, edges, objective, dim, hop_nums, neg, epochs, lr, batch, emb_out } => {
            let hop_nums = parse_hops(&hop_nums)?;
            let objective = match objective.as_str() {
                "skipgram" => Objective::Skipgram,
                "supervised-linkpred" => Objective::SupervisedLinkpred,
                other => return Err(usage(format!("unknown objective {other:?}"))),
            };
            let (v_arity, e_arity) = infer_arity(&vertices)?;
            let (built, _) =
                build_from_files(&vertices, &edges, shards, "hash", v_arity, e_arity, false)?;
            let cfg = TrainConfig {
                d: dim,
                hop_nums,
                neg_num: neg,
                lr,
                epochs,
                batch_size: batch,
                seed,
                ..Default::default()
            };
            let report = train(&built, &cfg, objective, None)?;
            for (i, l) in report.epoch_losses.iter().enumerate() {
                println!("epoch {i}: loss {l:.6}");
            }
            io::write_embeddings(&emb_out, &report.embeddings)?;
            println!("{} embeddings -> {}", report.embeddings.len(), emb_out.display());
        }
        Cmd::Report { input } => {
            print!("{}", bench::report(&input)?);
        }
    }
    Ok(())
}

fn exit_code(err: &GraphError) -> i32 {
    match err {
        GraphError::Diverged(_) => 4,
        GraphError::Invalid(msg) if msg.starts_with("usage:") => 2,
        _ => 3,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
