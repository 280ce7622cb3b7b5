//! Command-line driver. Every flag can also be set through a `SIMTEXT_*`
//! environment variable. Progress goes to stderr as JSON lines; reports go
//! to stdout as one JSON document.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{ensure, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::cluster::{self, ClusterScore, Partition, Stop};
use crate::data::{encode_pgm, load_dataset, Canvas, ImageSample, PairSampler};
use crate::manifold::{
    load_index, read_embeddings_tsv, save_index, select_similarity_threshold, write_embeddings_tsv, EmbeddingRow,
    ManifoldIndex, DEFAULT_K,
};
use crate::network::{euclidean, load_checkpoint, save_checkpoint, train, Adadelta, Head, Network, NetworkSpec, TrainConfig};
use crate::service::{self, Annotation, ServiceItem};
use crate::workflow::{
    self, grid_search, write_audit_jsonl, Engine, EngineConfig, Grid, MetricsSnapshot, Mode, SimulatedOracle,
    Thresholds, WorkItem,
};

/// Derives an independent seed for the named stream from the global seed:
/// FNV-1a of the name, xor the seed, finished with splitmix64.
pub fn stream_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = (h ^ seed).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Parser, Debug)]
#[command(name = "simtext", version, about = "Similarity-based text recognition with human verification")]
pub struct Cli {
    /// Global seed; every component derives its own stream from it.
    #[arg(long, global = true, env = "SIMTEXT_SEED", default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a network (optionally pretraining on IDX digits) and write a checkpoint.
    Train(TrainArgs),
    /// Embed a dataset and write the embedding TSV.
    Embed(EmbedArgs),
    /// Build a KNN index from an embedding TSV.
    KnnBuild(KnnBuildArgs),
    /// Select the pair-similarity threshold on sampled pairs and report errors.
    EvalSim(EvalSimArgs),
    /// Run the labeling workflow against a simulated annotator.
    Simulate(SimulateArgs),
    /// Search the confidence thresholds on a validation set.
    GridSearch(GridSearchArgs),
    /// Cluster embeddings and score them against truth.
    ClusterEval(ClusterEvalArgs),
    /// Serve the annotation task queue over HTTP.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Use only the first N samples.
    #[arg(long, env = "SIMTEXT_LIMIT")]
    pub limit: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory (manifest.jsonl or IDX files).
    #[arg(long, env = "SIMTEXT_DATA")]
    pub data: PathBuf,
    /// IDX directory used for a pretraining phase before `--data`.
    #[arg(long, env = "SIMTEXT_PRETRAIN_IDX")]
    pub pretrain_idx: Option<PathBuf>,
    #[arg(long, env = "SIMTEXT_EPOCHS", default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, env = "SIMTEXT_PRETRAIN_EPOCHS")]
    pub pretrain_epochs: Option<usize>,
    #[arg(long, env = "SIMTEXT_PAIRS_PER_EPOCH", default_value_t = 20_000)]
    pub pairs_per_epoch: usize,
    /// Input canvas as HxW; defaults to 28x28 for IDX data and 28x56 otherwise.
    #[arg(long, env = "SIMTEXT_CANVAS")]
    pub canvas: Option<String>,
    #[arg(long, env = "SIMTEXT_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub data_args: DataArgs,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long, env = "SIMTEXT_CHECKPOINT")]
    pub checkpoint: PathBuf,
    #[arg(long, env = "SIMTEXT_DATA")]
    pub data: PathBuf,
    #[arg(long, env = "SIMTEXT_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub data_args: DataArgs,
}

#[derive(Args, Debug)]
pub struct KnnBuildArgs {
    #[arg(long, env = "SIMTEXT_EMBEDDINGS")]
    pub embeddings: PathBuf,
    #[arg(long, env = "SIMTEXT_OUT")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalSimArgs {
    #[arg(long, env = "SIMTEXT_CHECKPOINT")]
    pub checkpoint: PathBuf,
    #[arg(long, env = "SIMTEXT_PAIRS_FROM")]
    pub pairs_from: PathBuf,
    /// Number of pairs, half similar and half dissimilar.
    #[arg(long, env = "SIMTEXT_PAIRS", default_value_t = 5000)]
    pub pairs: usize,
    #[command(flatten)]
    pub data_args: DataArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Robotic,
    Assistive,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Robotic => Mode::Robotic,
            ModeArg::Assistive => Mode::Assistive,
        }
    }
}

#[derive(Args, Debug)]
pub struct EngineArgs {
    #[arg(long, env = "SIMTEXT_CHECKPOINT")]
    pub checkpoint: PathBuf,
    #[arg(long, env = "SIMTEXT_INDEX")]
    pub index: PathBuf,
    #[arg(long, env = "SIMTEXT_K", default_value_t = DEFAULT_K)]
    pub k: usize,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, env = "SIMTEXT_TEST")]
    pub test: PathBuf,
    #[arg(long, env = "SIMTEXT_MODE", value_enum, default_value_t = ModeArg::Robotic)]
    pub mode: ModeArg,
    #[arg(long, env = "SIMTEXT_THETA1", default_value_t = 0.94)]
    pub theta1: f64,
    #[arg(long, env = "SIMTEXT_THETA2", default_value_t = 0.99)]
    pub theta2: f64,
    /// Probability that a simulated annotator answers wrongly.
    #[arg(long, env = "SIMTEXT_ORACLE_ERROR", default_value_t = 0.0)]
    pub oracle_error: f64,
    /// Keep the dictionary fixed during the run.
    #[arg(long, env = "SIMTEXT_FREEZE_DICTIONARY")]
    pub freeze_dictionary: bool,
    #[arg(long, env = "SIMTEXT_OUT_METRICS")]
    pub out_metrics: Option<PathBuf>,
    #[arg(long, env = "SIMTEXT_OUT_AUDIT")]
    pub out_audit: Option<PathBuf>,
    #[command(flatten)]
    pub data_args: DataArgs,
}

#[derive(Args, Debug)]
pub struct GridSearchArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, env = "SIMTEXT_VALIDATION")]
    pub validation: PathBuf,
    #[arg(long, env = "SIMTEXT_TARGET_HCFN", default_value_t = workflow::DEFAULT_TARGET_HCFN)]
    pub target_hcfn: f64,
    #[arg(long, env = "SIMTEXT_GRID_LO", default_value_t = 0.5)]
    pub grid_lo: f64,
    #[arg(long, env = "SIMTEXT_GRID_HI", default_value_t = 1.0)]
    pub grid_hi: f64,
    #[arg(long, env = "SIMTEXT_GRID_STEP", default_value_t = 0.01)]
    pub grid_step: f64,
    #[command(flatten)]
    pub data_args: DataArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Kmeans,
    Agglomerative,
    Dbscan,
}

#[derive(Args, Debug)]
pub struct ClusterEvalArgs {
    #[arg(long, env = "SIMTEXT_EMBEDDINGS")]
    pub embeddings: PathBuf,
    #[arg(long, env = "SIMTEXT_ALGO", value_enum, default_value_t = Algo::Agglomerative)]
    pub algo: Algo,
    /// Embedding head to cluster: feat, relu, conv2 or ip.
    #[arg(long, env = "SIMTEXT_HEAD", default_value = "feat")]
    pub head: String,
    /// Partition JSON (`{"item": cluster}`); defaults to the TSV labels.
    #[arg(long, env = "SIMTEXT_TRUTH")]
    pub truth: Option<PathBuf>,
    /// Cluster count for k-means and agglomerative; defaults to the number of truth classes.
    #[arg(long, env = "SIMTEXT_CLUSTERS")]
    pub clusters: Option<usize>,
    /// Agglomerative distance threshold; overrides `--clusters`.
    #[arg(long, env = "SIMTEXT_DISTANCE")]
    pub distance: Option<f64>,
    /// DBSCAN radius; defaults to the median 4-NN distance.
    #[arg(long, env = "SIMTEXT_EPS")]
    pub eps: Option<f64>,
    #[arg(long, env = "SIMTEXT_MIN_PTS", default_value_t = cluster::DBSCAN_MIN_PTS)]
    pub min_pts: usize,
    #[arg(long, env = "SIMTEXT_MAX_ITER", default_value_t = 100)]
    pub max_iter: usize,
    /// Write the predicted partition here.
    #[arg(long, env = "SIMTEXT_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, env = "SIMTEXT_DATA")]
    pub data: PathBuf,
    #[arg(long, env = "SIMTEXT_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "SIMTEXT_LEASE_TTL_SECS", default_value_t = 600)]
    pub lease_ttl_secs: u64,
    #[arg(long, env = "SIMTEXT_MODE", value_enum, default_value_t = ModeArg::Robotic)]
    pub mode: ModeArg,
    #[arg(long, env = "SIMTEXT_THETA1", default_value_t = 0.94)]
    pub theta1: f64,
    #[arg(long, env = "SIMTEXT_THETA2", default_value_t = 0.99)]
    pub theta2: f64,
    #[command(flatten)]
    pub data_args: DataArgs,
}

fn log(event: serde_json::Value) {
    let _ = writeln!(std::io::stderr(), "{event}");
}

fn emit<T: Serialize>(report: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, report)?;
    writeln!(out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn parse_canvas(s: &str) -> anyhow::Result<Canvas> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("canvas `{s}` is not HxW"))?;
    Ok(Canvas::new(h.trim().parse()?, w.trim().parse()?)?)
}

fn load(dir: &Path, canvas: Canvas, limit: Option<usize>) -> anyhow::Result<Vec<ImageSample>> {
    let mut samples = load_dataset(dir, canvas).with_context(|| format!("loading {}", dir.display()))?;
    if let Some(n) = limit {
        samples.truncate(n);
    }
    ensure!(!samples.is_empty(), "{} contains no samples", dir.display());
    Ok(samples)
}

fn embed_all(net: &Network, samples: &[ImageSample]) -> anyhow::Result<Vec<EmbeddingRow>> {
    samples
        .iter()
        .map(|s| {
            Ok(EmbeddingRow {
                id: s.id.clone(),
                label: s.label.clone(),
                embedding: net.embed(&s.pixels)?,
            })
        })
        .collect()
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Train(a) => cmd_train(a, seed),
        Command::Embed(a) => cmd_embed(a),
        Command::KnnBuild(a) => cmd_knn_build(a),
        Command::EvalSim(a) => cmd_eval_sim(a, seed),
        Command::Simulate(a) => cmd_simulate(a, seed),
        Command::GridSearch(a) => cmd_grid_search(a),
        Command::ClusterEval(a) => cmd_cluster_eval(a, seed),
        Command::Serve(a) => cmd_serve(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}

fn cmd_train(a: TrainArgs, seed: u64) -> anyhow::Result<()> {
    let canvas = match &a.canvas {
        Some(c) => parse_canvas(c)?,
        None if a.data.join("manifest.jsonl").is_file() => Canvas::TEXT,
        None => Canvas::DIGIT,
    };
    let data = load(&a.data, canvas, a.data_args.limit)?;
    let spec = NetworkSpec::for_canvas(canvas);
    let mut net = Network::new(spec, stream_seed(seed, "init"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "pairs"));

    if let Some(dir) = &a.pretrain_idx {
        let digits = load(dir, canvas, a.data_args.limit)?;
        let mut opt = Adadelta::with_defaults(&net.params);
        let config = TrainConfig {
            epochs: a.pretrain_epochs.unwrap_or(a.epochs),
            pairs_per_epoch: a.pairs_per_epoch,
        };
        train(&mut net, &mut opt, &digits, config, &mut rng, |r| {
            log(json!({"event": "epoch", "phase": "pretrain", "epoch": r.epoch, "steps": r.steps, "mean_loss": r.mean_loss}))
        })?;
    }
    let mut opt = Adadelta::with_defaults(&net.params);
    let config = TrainConfig {
        epochs: a.epochs,
        pairs_per_epoch: a.pairs_per_epoch,
    };
    let reports = train(&mut net, &mut opt, &data, config, &mut rng, |r| {
        log(json!({"event": "epoch", "phase": "train", "epoch": r.epoch, "steps": r.steps, "mean_loss": r.mean_loss}))
    })?;
    save_checkpoint(&net, &a.out)?;
    log(json!({"event": "checkpoint", "path": a.out.display().to_string(), "parameters": net.params.parameter_count()}));
    emit(&json!({
        "checkpoint": a.out.display().to_string(),
        "canvas": canvas,
        "epochs": reports.len(),
        "mean_loss": reports.iter().map(|r| r.mean_loss).collect::<Vec<_>>(),
    }))
}

fn cmd_embed(a: EmbedArgs) -> anyhow::Result<()> {
    let net = load_checkpoint(&a.checkpoint)?;
    let data = load(&a.data, net.spec.canvas(), a.data_args.limit)?;
    let rows = embed_all(&net, &data)?;
    fs::write(&a.out, write_embeddings_tsv(&rows)?).with_context(|| format!("writing {}", a.out.display()))?;
    emit(&json!({"embeddings": a.out.display().to_string(), "rows": rows.len()}))
}

fn read_tsv(path: &Path) -> anyhow::Result<Vec<EmbeddingRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = read_embeddings_tsv(&text, path)?;
    ensure!(!rows.is_empty(), "{} has no rows", path.display());
    Ok(rows)
}

fn cmd_knn_build(a: KnnBuildArgs) -> anyhow::Result<()> {
    let rows = read_tsv(&a.embeddings)?;
    let index = ManifoldIndex::from_entries(rows.iter().map(EmbeddingRow::entry))?;
    save_index(&index, &a.out)?;
    emit(&json!({"index": a.out.display().to_string(), "entries": index.len(), "dim": index.dim()}))
}

fn cmd_eval_sim(a: EvalSimArgs, seed: u64) -> anyhow::Result<()> {
    let net = load_checkpoint(&a.checkpoint)?;
    let data = load(&a.pairs_from, net.spec.canvas(), a.data_args.limit)?;
    let sampler = PairSampler::new(&data)?;
    let feats: HashMap<&str, Vec<f64>> = data
        .iter()
        .map(|s| Ok((s.id.as_str(), net.embed(&s.pixels)?.feat)))
        .collect::<crate::error::Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "eval-pairs"));
    let mut scored = Vec::with_capacity(a.pairs);
    for i in 0..a.pairs {
        let p = if i % 2 == 0 { sampler.similar(&mut rng) } else { sampler.dissimilar(&mut rng) };
        scored.push((euclidean(&feats[p.a.id.as_str()], &feats[p.b.id.as_str()]), p.y));
    }
    let choice = select_similarity_threshold(&scored)?;
    emit(&json!({
        "pairs": scored.len(),
        "theta_sim": choice.theta,
        "fp_rate": choice.fp_rate,
        "fn_rate": choice.fn_rate,
        "objective": choice.objective,
        "error": choice.error,
    }))
}

fn engine_parts(e: &EngineArgs) -> anyhow::Result<(Network, ManifoldIndex)> {
    Ok((load_checkpoint(&e.checkpoint)?, load_index(&e.index)?))
}

/// Work-item ids are prefixed with the dataset directory's name so they
/// cannot collide with dictionary ids taken from another directory.
fn item_id(dir: &Path, id: &str) -> String {
    match dir.file_name() {
        Some(name) => format!("{}/{id}", name.to_string_lossy()),
        None => id.to_string(),
    }
}

fn work_items(net: &Network, dir: &Path, samples: &[ImageSample]) -> anyhow::Result<Vec<WorkItem>> {
    samples
        .iter()
        .map(|s| {
            Ok(WorkItem {
                id: item_id(dir, &s.id),
                feat: net.embed(&s.pixels)?.feat,
                truth: Some(s.label.clone()),
            })
        })
        .collect()
}

fn cmd_simulate(a: SimulateArgs, seed: u64) -> anyhow::Result<()> {
    let (net, index) = engine_parts(&a.engine)?;
    let test = load(&a.test, net.spec.canvas(), a.data_args.limit)?;
    let items = work_items(&net, &a.test, &test)?;
    let vocabulary: BTreeSet<String> = index
        .entries()
        .iter()
        .map(|e| e.label.clone())
        .chain(test.iter().map(|s| s.label.clone()))
        .collect();
    let mut oracle = SimulatedOracle::new(a.oracle_error, stream_seed(seed, "oracle"), vocabulary)?;
    let mut config = EngineConfig::new(Thresholds::new(a.theta1, a.theta2)?, a.mode.into());
    config.k = a.engine.k;
    config.update_dictionary = !a.freeze_dictionary;
    let mut engine = Engine::new(index, config)?;
    let report = workflow::run(&mut engine, items, &mut oracle)?;
    let snapshot = MetricsSnapshot::of(&report.counters);
    if let Some(path) = &a.out_audit {
        let mut buf = Vec::new();
        write_audit_jsonl(&report.records, &mut buf)?;
        fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.out_metrics {
        write_json(path, &snapshot)?;
    }
    emit(&json!({
        "metrics": snapshot.metrics,
        "counters": snapshot.counters,
        "parked": report.parked,
        "wrong_final_labels": report.records.iter().filter(|r| r.truth.as_ref() != Some(&r.final_label)).count(),
    }))
}

fn cmd_grid_search(a: GridSearchArgs) -> anyhow::Result<()> {
    let (net, index) = engine_parts(&a.engine)?;
    let validation = load(&a.validation, net.spec.canvas(), a.data_args.limit)?;
    let k = a.engine.k.min(index.len());
    let mut scored = Vec::with_capacity(validation.len());
    for s in &validation {
        let p = index.knn_predict(&net.embed(&s.pixels)?.feat, k)?;
        scored.push((p.confidence, p.label == s.label));
    }
    let grid = Grid {
        lo: a.grid_lo,
        hi: a.grid_hi,
        step: a.grid_step,
    };
    let result = grid_search(&scored, grid, a.target_hcfn)?;
    if !result.feasible {
        log(json!({"event": "warning", "message": "no grid point meets the HCFN target; reporting the minimum-HCFN point"}));
    }
    emit(&result)
}

fn cmd_cluster_eval(a: ClusterEvalArgs, seed: u64) -> anyhow::Result<()> {
    let rows = read_tsv(&a.embeddings)?;
    let head: Head = a.head.parse()?;
    let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
    let vectors: Vec<Vec<f64>> = rows.iter().map(|r| r.embedding.head(head).to_vec()).collect();
    let truth = match &a.truth {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let map: HashMap<String, usize> = serde_json::from_str(&text)?;
            let raw = ids
                .iter()
                .map(|id| map.get(id).copied().with_context(|| format!("truth has no entry for `{id}`")))
                .collect::<anyhow::Result<Vec<_>>>()?;
            Partition::from_raw(ids.clone(), &raw)?
        }
        None => Partition::from_raw(ids.clone(), &rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>())?,
    };
    let k = a.clusters.unwrap_or(truth.n_clusters());
    let (labels, params) = match a.algo {
        Algo::Kmeans => {
            let r = cluster::kmeans(&vectors, k, stream_seed(seed, "kmeans"), a.max_iter)?;
            let inertia = r.inertia();
            (r.labels, json!({"k": k, "max_iter": a.max_iter, "inertia": inertia}))
        }
        Algo::Agglomerative => {
            let stop = match a.distance {
                Some(d) => Stop::Distance(d),
                None => Stop::Clusters(k),
            };
            (cluster::agglomerative(&vectors, stop)?, json!({"linkage": "average", "stop": stop}))
        }
        Algo::Dbscan => {
            let eps = match a.eps {
                Some(e) => e,
                None => cluster::median_knn_distance(&vectors, 4.min(vectors.len().saturating_sub(1)).max(1))?,
            };
            let r = cluster::dbscan(&vectors, eps, a.min_pts)?;
            (r.labels, json!({"eps": eps, "min_pts": a.min_pts, "noise": r.noise}))
        }
    };
    let predicted = Partition::new(ids, labels)?;
    if let Some(path) = &a.out {
        write_json(path, &predicted.to_map())?;
    }
    let score = ClusterScore {
        algorithm: serde_json::to_value(a.algo)?.as_str().unwrap_or_default().to_string(),
        params,
        head: head.name().to_string(),
        n_clusters: predicted.n_clusters(),
        ari: cluster::adjusted_rand_index(&predicted, &truth)?,
    };
    emit(&score)
}

fn cmd_serve(a: ServeArgs) -> anyhow::Result<()> {
    let (net, index) = engine_parts(&a.engine)?;
    let data = load(&a.data, net.spec.canvas(), a.data_args.limit)?;
    let mut items = Vec::with_capacity(data.len());
    for s in &data {
        items.push(ServiceItem {
            item: WorkItem {
                id: item_id(&a.data, &s.id),
                feat: net.embed(&s.pixels)?.feat,
                truth: None,
            },
            image: encode_pgm(s.pixels.data(), s.height(), s.width()),
        });
    }
    let mut config = EngineConfig::new(Thresholds::new(a.theta1, a.theta2)?, a.mode.into());
    config.k = a.engine.k;
    let engine = Engine::new(index, config)?;
    let state = Annotation::new(engine, items, Duration::from_secs(a.lease_ttl_secs))?;
    log(json!({"event": "serving", "port": a.port, "queue_depth": state.queue_depth(), "auto_accepted": state.audit().len()}));
    let shared = Arc::new(Mutex::new(state));
    let addr = SocketAddr::from(([0, 0, 0, 0], a.port));
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(service::serve(shared, addr))?;
    Ok(())
}

/// Entry point for the binary: runs and maps failures to exit code 1.
pub fn main_from_env() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            log(json!({"event": "error", "message": format!("{e:#}")}));
            1
        }
    }
}
