//! Subcommands of the `itoo` binary. Each prints a human summary, or one
//! JSON document (JSON lines for traces and top-k reports) under `--json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use itoo_core::engine::{
    synthetic_uploads, write_fixture_files, Engine, EngineConfig, FixtureSpec, IngestBatch, UploadRequest,
};
use itoo_core::ingest::{read_embeddings, write_embeddings, EmbeddingSet};
use itoo_core::metric::{read_labels, self_retrieval_topk, train, EmbeddingTable, TrainConfig, DEFAULT_KS};
use itoo_core::model::{ItemId, OotdId, SuperCategory, UserId};
use itoo_core::pipeline::{execute_dag, SyntheticGarment, TaskDag, TaskOutcome, TraceEvent};

/// Fashion visual search and OOTD recommendation engine.
#[derive(Debug, Parser)]
#[command(name = "itoo", version)]
pub struct Cli {
    /// Key-value config file; `ITOO_*` environment variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print machine-readable JSON instead of a summary.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset, a metric-learning labels file and a config.
    Fixtures(FixturesArgs),
    /// Load metadata, embedding and interaction files into the data directory.
    Ingest(IngestArgs),
    /// Build or query the visual search index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Train an embedding table with the N-pair contrastive loss.
    Train(TrainArgs),
    /// Top-k self-retrieval accuracy of an embedding table.
    Eval(EvalArgs),
    /// Feed, similar-style OOTDs and style leaders.
    #[command(subcommand)]
    Recommend(RecommendCommand),
    /// Run OOTD uploads through the analysis pipeline.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Execute a task DAG file.
    #[command(subcommand)]
    Dag(DagCommand),
    /// Serve the JSON API.
    Serve(ServeArgs),
    /// Store counts and snapshot version.
    Status,
    /// Print the effective configuration.
    Config,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = FixtureSpec::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = FixtureSpec::default().users)]
    pub users: usize,
    #[arg(long, default_value_t = FixtureSpec::default().items)]
    pub items: u64,
    #[arg(long, default_value_t = FixtureSpec::default().ootds)]
    pub ootds: u64,
    #[arg(long, default_value_t = FixtureSpec::default().events)]
    pub events: usize,
    /// Classes in the generated labels file.
    #[arg(long, default_value_t = 200)]
    pub label_classes: u32,
    #[arg(long, default_value_t = 3)]
    pub images_per_class: u64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory holding metadata.jsonl, embeddings.bin and interactions.csv.
    #[arg(long, conflicts_with_all = ["metadata", "embeddings", "interactions"])]
    pub dir: Option<PathBuf>,
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub interactions: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Rebuild the snapshot: staged partitions, or everything with --full.
    Build {
        #[arg(long)]
        full: bool,
    },
    /// Nearest items to an indexed item or to a vector.
    Query(QueryArgs),
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Super-category partition to search; required with --vector.
    #[arg(long = "super")]
    pub super_category: Option<SuperCategory>,
    #[arg(long, required_unless_present = "vector", conflicts_with = "vector")]
    pub item_id: Option<u64>,
    /// Comma-separated query vector.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub vector: Option<Vec<f32>>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub ef: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// CSV with header image_id,class_id[,source].
    #[arg(long)]
    pub labels: PathBuf,
    /// Output embedding table.
    #[arg(long)]
    pub out: PathBuf,
    /// Starting table; random unit rows when absent.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    pub lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().temperature)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS.to_vec())]
    pub ks: Vec<usize>,
}

#[derive(Debug, Subcommand)]
pub enum RecommendCommand {
    /// Curated OOTD feed of a user.
    Feed {
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// OOTDs with the most similar style.
    Similar {
        #[arg(long)]
        ootd: u64,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Style leaders a user might follow.
    Leaders {
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum PipelineCommand {
    /// Upload synthetic OOTDs, or one OOTD built from --garment flags.
    Run(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Number of random synthetic uploads.
    #[arg(long, conflicts_with_all = ["garment", "uploader"], required_unless_present = "garment")]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `sub_category:shade`, repeatable.
    #[arg(long, requires = "uploader")]
    pub garment: Vec<String>,
    #[arg(long)]
    pub uploader: Option<String>,
    #[arg(long)]
    pub hashtag: Vec<String>,
    /// Rebuild the snapshot after the uploads.
    #[arg(long)]
    pub rebuild: bool,
}

#[derive(Debug, Subcommand)]
pub enum DagCommand {
    /// Run every task of a `task: dep dep` file; each task sleeps and then succeeds.
    Run(DagArgs),
}

#[derive(Debug, Args)]
pub struct DagArgs {
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub workers: usize,
    #[arg(long, default_value_t = 20)]
    pub sleep_ms: u64,
    /// Make this task fail, repeatable.
    #[arg(long)]
    pub fail: Vec<String>,
    /// Write the JSON-lines schedule trace here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address; defaults to `serve.addr` from the config.
    #[arg(long)]
    pub addr: Option<String>,
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<EngineConfig> {
    Ok(EngineConfig::load(path)?)
}

fn open_engine(cli: &Cli) -> anyhow::Result<Engine> {
    let cfg = load_config(cli.config.as_deref())?;
    let dir = cfg.data_dir.clone();
    Engine::open(cfg).with_context(|| format!("opening data directory {}", dir.display()))
}

fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce() -> String) -> anyhow::Result<()> {
    if json {
        println!("{}", serde_json::to_string(value)?);
    } else {
        print!("{}", human());
    }
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Fixtures(a) => fixtures(&cli, a),
        Command::Ingest(a) => ingest(&cli, a),
        Command::Index(IndexCommand::Build { full }) => {
            let engine = open_engine(&cli)?;
            let report = engine.rebuild(*full)?;
            emit(cli.json, &report, || {
                let d = &report.data;
                let parts: Vec<String> = d.rebuilt_partitions.iter().map(|s| s.to_string()).collect();
                format!(
                    "snapshot v{}: {} items, {} ootds, {} users, {} events; rebuilt partitions: {}\n",
                    d.version,
                    d.counts.items,
                    d.counts.ootds,
                    d.counts.users,
                    d.counts.events,
                    if parts.is_empty() { "none".into() } else { parts.join(", ") }
                )
            })
        }
        Command::Index(IndexCommand::Query(a)) => index_query(&cli, a),
        Command::Train(a) => train_cmd(&cli, a),
        Command::Eval(a) => eval_cmd(&cli, a),
        Command::Recommend(r) => recommend(&cli, r),
        Command::Pipeline(PipelineCommand::Run(a)) => pipeline_run(&cli, a),
        Command::Dag(DagCommand::Run(a)) => dag_run(&cli, a),
        Command::Serve(a) => {
            let engine = Arc::new(open_engine(&cli)?);
            let addr = a.addr.clone().unwrap_or_else(|| engine.config().serve_addr.clone());
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(crate::api::serve(engine, &addr))
        }
        Command::Status => {
            let engine = open_engine(&cli)?;
            let status = engine.status();
            emit(cli.json, &status, || {
                let d = &status.data;
                format!(
                    "snapshot v{} built {}\nitems {}  ootds {}  users {}  events {}\nstaged {}  live events {}\n",
                    status.snapshot_version,
                    d.built_at.to_rfc3339(),
                    d.counts.items,
                    d.counts.ootds,
                    d.counts.users,
                    d.counts.events,
                    d.staged,
                    d.live_events
                )
            })
        }
        Command::Config => {
            let cfg = load_config(cli.config.as_deref())?;
            let text = cfg.to_text();
            if cli.json {
                let pairs: BTreeMap<&str, &str> =
                    text.lines().filter_map(|l| l.split_once(" = ")).collect();
                println!("{}", serde_json::to_string(&pairs)?);
            } else {
                print!("{text}");
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct FixturesReport {
    counts: itoo_core::engine::StoreCounts,
    labels: PathBuf,
    label_images: usize,
    config: PathBuf,
}

fn fixtures(cli: &Cli, a: &FixturesArgs) -> anyhow::Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let spec = FixtureSpec { users: a.users, items: a.items, ootds: a.ootds, events: a.events, seed: a.seed, ..Default::default() };
    let hierarchy = itoo_core::model::CategoryHierarchy::default();
    let counts = write_fixture_files(&a.out, &spec, &cfg.layout, &hierarchy)?;

    let labels = a.out.join("labels.csv");
    let mut text = String::from("image_id,class_id\n");
    for c in 0..a.label_classes {
        for j in 0..a.images_per_class {
            writeln!(text, "{},{c}", c as u64 * a.images_per_class + j)?;
        }
    }
    std::fs::write(&labels, text).with_context(|| format!("writing {}", labels.display()))?;

    let config = a.out.join("itoo.conf");
    let conf = format!(
        "# Generated by `itoo fixtures`. Paths are relative to this file.\ndata_dir = data\nclock = {}\n",
        itoo_core::ingest::format_timestamp(&spec.now)
    );
    std::fs::write(&config, conf).with_context(|| format!("writing {}", config.display()))?;

    let report = FixturesReport { counts, labels, label_images: (a.label_classes as u64 * a.images_per_class) as usize, config };
    emit(cli.json, &report, || {
        format!(
            "wrote {} items, {} ootds, {} users, {} events to {}\nlabels: {} ({} images)\nconfig: {}\n",
            counts.items,
            counts.ootds,
            counts.users,
            counts.events,
            a.out.display(),
            report.labels.display(),
            report.label_images,
            report.config.display()
        )
    })
}

fn ingest(cli: &Cli, a: &IngestArgs) -> anyhow::Result<()> {
    let engine = open_engine(cli)?;
    let layout = &engine.config().layout;
    let batch = match &a.dir {
        Some(dir) => {
            if !dir.is_dir() {
                bail!("{} is not a directory", dir.display());
            }
            IngestBatch::from_dir(dir, layout)?
        }
        None => {
            if a.metadata.is_none() && a.embeddings.is_none() && a.interactions.is_none() {
                bail!("nothing to ingest: pass --dir or at least one of --metadata, --embeddings, --interactions");
            }
            for p in [&a.metadata, &a.embeddings, &a.interactions].into_iter().flatten() {
                if !p.exists() {
                    bail!("{}: no such file", p.display());
                }
            }
            IngestBatch::from_files(a.metadata.as_deref(), a.embeddings.as_deref(), a.interactions.as_deref(), layout)?
        }
    };
    let added = itoo_core::engine::StoreCounts {
        items: batch.metadata.items.len(),
        ootds: batch.metadata.ootds.len(),
        users: batch.metadata.users.len(),
        events: batch.events.len(),
    };
    let totals = engine.ingest(batch)?;
    #[derive(Serialize)]
    struct Report {
        snapshot_version: u64,
        added: itoo_core::engine::StoreCounts,
        totals: itoo_core::engine::StoreCounts,
        staged: usize,
    }
    let report = Report { snapshot_version: totals.snapshot_version, added, totals: totals.data, staged: engine.status().data.staged };
    emit(cli.json, &report, || {
        format!(
            "added {} items, {} ootds, {} users, {} events; {} items wait for `index build`\n",
            added.items, added.ootds, added.users, added.events, report.staged
        )
    })
}

fn index_query(cli: &Cli, a: &QueryArgs) -> anyhow::Result<()> {
    let engine = open_engine(cli)?;
    let hits = match (a.item_id, &a.vector) {
        (Some(id), _) => {
            let hits = engine.similar_items(ItemId(id), a.k, a.ef)?;
            if let Some(sc) = a.super_category {
                let located = engine.generation().catalog.locate(id);
                if located != Some(sc) {
                    bail!("item {id} is indexed under {}, not {sc}", located.map_or("nothing".into(), |l| l.to_string()));
                }
            }
            hits
        }
        (None, Some(v)) => {
            let sc = a.super_category.ok_or_else(|| anyhow!("--super is required with --vector"))?;
            engine.search(sc, v, a.k, a.ef)?
        }
        (None, None) => bail!("pass --item-id or --vector"),
    };
    emit(cli.json, &hits, || {
        let mut s = format!("snapshot v{}\n", hits.snapshot_version);
        for (rank, h) in hits.data.iter().enumerate() {
            let _ = writeln!(s, "{:>3}  item {:<8} {:.6}  {}", rank + 1, h.item_id.to_string(), h.score, h.sub_category);
        }
        s
    })
}

fn write_table(path: &Path, table: &EmbeddingTable) -> anyhow::Result<()> {
    let mut set = EmbeddingSet::new(table.dim());
    for (id, row) in table.to_f32() {
        set.insert(id, row)?;
    }
    write_embeddings(path, &set).with_context(|| format!("writing {}", path.display()))
}

fn read_table(path: &Path) -> anyhow::Result<EmbeddingTable> {
    let set = read_embeddings(path, None).with_context(|| format!("reading {}", path.display()))?;
    let mut table = EmbeddingTable::new(set.dim)?;
    for (id, row) in set.vectors {
        table.insert(id, row.into_iter().map(f64::from).collect())?;
    }
    Ok(table)
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> anyhow::Result<()> {
    let labels = read_labels(&a.labels).with_context(|| format!("reading {}", a.labels.display()))?;
    let initial = match &a.init {
        Some(p) => read_table(p)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            EmbeddingTable::random(labels.images().map(|(i, _)| i), a.dim, &mut rng)?
        }
    };
    let cfg = TrainConfig {
        batch_size: a.batch_size,
        temperature: a.temperature,
        lr: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        ..Default::default()
    };
    let outcome = train(&initial, &labels, &cfg)?;
    write_table(&a.out, &outcome.table)?;
    #[derive(Serialize)]
    struct Report<'a> {
        images: usize,
        dim: usize,
        epochs: usize,
        steps: usize,
        loss_curve: &'a [f64],
        out: &'a Path,
    }
    let report = Report {
        images: outcome.table.len(),
        dim: outcome.table.dim(),
        epochs: a.epochs,
        steps: outcome.steps,
        loss_curve: &outcome.loss_curve,
        out: &a.out,
    };
    emit(cli.json, &report, || {
        let first = outcome.loss_curve.first().copied().unwrap_or(f64::NAN);
        let last = outcome.loss_curve.last().copied().unwrap_or(f64::NAN);
        format!(
            "trained {} images (d={}) for {} epochs, {} steps; probe loss {first:.4} -> {last:.4}\nwrote {}\n",
            report.images,
            report.dim,
            a.epochs,
            outcome.steps,
            a.out.display()
        )
    })
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> anyhow::Result<()> {
    let table = read_table(&a.table)?;
    let labels = read_labels(&a.labels).with_context(|| format!("reading {}", a.labels.display()))?;
    let report = self_retrieval_topk(&table, &labels, &a.ks)?;
    if cli.json {
        print!("{}", report.to_jsonl());
    } else {
        for r in &report.results {
            println!("top-{:<3} {:.4}  ({} queries)", r.k, r.accuracy, r.n_queries);
        }
        if report.excluded_queries > 0 {
            println!("{} queries without another image of their class were left out", report.excluded_queries);
        }
    }
    Ok(())
}

fn recommend(cli: &Cli, r: &RecommendCommand) -> anyhow::Result<()> {
    let engine = open_engine(cli)?;
    match r {
        RecommendCommand::Feed { user, k } => {
            let feed = engine.feed(&UserId::new(user.clone()), *k)?;
            emit(cli.json, &feed, || feed_text(&feed))
        }
        RecommendCommand::Similar { ootd, k } => {
            let similar = engine.similar_ootds(OotdId(*ootd), *k)?;
            emit(cli.json, &similar, || feed_text(&similar))
        }
        RecommendCommand::Leaders { user, k } => {
            let leaders = engine.leaders(&UserId::new(user.clone()), *k)?;
            emit(cli.json, &leaders, || {
                let mut s = format!("snapshot v{}\n", leaders.snapshot_version);
                for (rank, l) in leaders.data.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        "{:>3}  {:<10} {:.6}  {:<8} followers {} uploads {}",
                        rank + 1,
                        l.user_id.to_string(),
                        l.score,
                        l.source.as_str(),
                        l.followers,
                        l.uploads
                    );
                }
                s
            })
        }
    }
}

fn feed_text(feed: &itoo_core::engine::Versioned<Vec<itoo_core::engine::FeedCard>>) -> String {
    let mut s = format!("snapshot v{}\n", feed.snapshot_version);
    for (rank, c) in feed.data.iter().enumerate() {
        let tags: Vec<&str> = c.hashtags.iter().map(String::as_str).collect();
        let _ = writeln!(
            s,
            "{:>3}  ootd {:<6} {:.6}  {:<8} by {:<8} #{}",
            rank + 1,
            c.ootd_id.to_string(),
            c.score,
            c.source.as_str(),
            c.uploader.to_string(),
            tags.join(" #")
        );
    }
    s
}

fn parse_garment(raw: &str) -> anyhow::Result<SyntheticGarment> {
    let (sub, shade) = raw.split_once(':').ok_or_else(|| anyhow!("--garment '{raw}': expected sub_category:shade"))?;
    let shade = shade.trim().parse::<u8>().map_err(|e| anyhow!("--garment '{raw}': shade: {e}"))?;
    Ok(SyntheticGarment { sub_category: sub.trim().to_string(), shade })
}

fn pipeline_run(cli: &Cli, a: &PipelineArgs) -> anyhow::Result<()> {
    let engine = open_engine(cli)?;
    let requests = match a.synthetic {
        Some(n) => {
            let users: Vec<UserId> = engine.stores().users.keys().cloned().collect();
            if users.is_empty() {
                bail!("synthetic uploads need at least one user; ingest users first");
            }
            synthetic_uploads(n, a.seed, &users, engine.hierarchy())
        }
        None => {
            let uploader = a.uploader.clone().ok_or_else(|| anyhow!("--uploader is required with --garment"))?;
            let garments = a.garment.iter().map(|g| parse_garment(g)).collect::<anyhow::Result<_>>()?;
            vec![UploadRequest { uploader: UserId::new(uploader), hashtags: a.hashtag.clone(), garments, image: None }]
        }
    };
    let mut reports = Vec::with_capacity(requests.len());
    for req in &requests {
        reports.push(engine.upload_ootd(req)?.data);
    }
    let rebuild = if a.rebuild { Some(engine.rebuild(false)?.data) } else { None };
    #[derive(Serialize)]
    struct Report {
        snapshot_version: u64,
        uploads: Vec<itoo_core::engine::UploadReport>,
        rebuild: Option<itoo_core::engine::RebuildReport>,
    }
    let report = Report { snapshot_version: engine.version(), uploads: reports, rebuild };
    emit(cli.json, &report, || {
        let mut s = String::new();
        for u in &report.uploads {
            let subs: Vec<&str> = u.analysis.crops.iter().map(|c| c.sub_category.as_str()).collect();
            let _ = writeln!(
                s,
                "ootd {}: {} detections, {} crops [{}], {} errors",
                u.ootd_id,
                u.analysis.detections,
                u.analysis.crops.len(),
                subs.join(", "),
                u.analysis.errors.len()
            );
        }
        match &report.rebuild {
            Some(r) => {
                let _ = writeln!(s, "rebuilt snapshot v{}", r.version);
            }
            None => {
                let _ = writeln!(s, "new crops become searchable after `index build`");
            }
        }
        s
    })
}

#[derive(Serialize)]
struct DagReport {
    completion_order: Vec<String>,
    outcomes: BTreeMap<String, TaskOutcome<String>>,
    trace: Vec<TraceEvent>,
}

fn dag_run(cli: &Cli, a: &DagArgs) -> anyhow::Result<()> {
    let dag = TaskDag::load(&a.file)?;
    for f in &a.fail {
        if dag.deps_of(f).is_none() {
            bail!("--fail {f}: no such task in {}", a.file.display());
        }
    }
    let sleep = Duration::from_millis(a.sleep_ms);
    let run = execute_dag(&dag, a.workers, |task, _inputs| {
        std::thread::sleep(sleep);
        if a.fail.iter().any(|f| f == task) {
            Err(format!("task '{task}' was told to fail"))
        } else {
            Ok(task.to_string())
        }
    })?;
    if let Some(path) = &a.trace {
        std::fs::write(path, run.trace_jsonl()).with_context(|| format!("writing {}", path.display()))?;
    }
    let outcomes = run
        .outcomes
        .iter()
        .map(|(t, o)| {
            let o = match o {
                TaskOutcome::Succeeded { output } => TaskOutcome::Succeeded { output: output.to_string() },
                TaskOutcome::Failed { error } => TaskOutcome::Failed { error: error.clone() },
                TaskOutcome::Skipped { failed_dependency } => {
                    TaskOutcome::Skipped { failed_dependency: failed_dependency.clone() }
                }
            };
            (t.clone(), o)
        })
        .collect();
    let report = DagReport { completion_order: run.completion_order.clone(), outcomes, trace: run.trace.clone() };
    emit(cli.json, &report, || {
        let mut s = String::new();
        for e in &report.trace {
            let _ = writeln!(s, "{:<16} worker {}  {:>8}us .. {:>8}us", e.task, e.worker, e.start, e.end);
        }
        for (t, o) in &report.outcomes {
            match o {
                TaskOutcome::Failed { error } => {
                    let _ = writeln!(s, "{t}: failed: {error}");
                }
                TaskOutcome::Skipped { failed_dependency } => {
                    let _ = writeln!(s, "{t}: skipped, '{failed_dependency}' failed");
                }
                TaskOutcome::Succeeded { .. } => {}
            }
        }
        s
    })?;
    let unfinished = report.outcomes.values().filter(|o| !matches!(o, TaskOutcome::Succeeded { .. })).count();
    if unfinished > 0 {
        bail!("{unfinished} of {} tasks did not succeed", report.outcomes.len());
    }
    Ok(())
}
