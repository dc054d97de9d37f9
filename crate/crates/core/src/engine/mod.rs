//! Engine state behind the CLI and the service: persistent stores, the
//! append-only interaction log, versioned recommender and index snapshots
//! swapped atomically, the upload pipeline and the rebuild DAG.
//!
//! Readers take the current [`Generation`] and the interactions logged after
//! it was built, so every answer comes from exactly one snapshot version
//! plus the live overlay. Mutations are serialized by a single writer and
//! reach disk before they are acknowledged.

mod config;
mod fixtures;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::sync::{Arc, Mutex, MutexGuard, RwLock, RwLockReadGuard};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use config::{env_var_name, EngineConfig, CONFIG_KEYS, ENV_PREFIX};
pub use fixtures::{fixture_batch, synthetic_uploads, write_fixture_files, FixtureSpec, FIXTURE_TAGS};
pub use store::{DataDir, IngestBatch, Prepared, StoreCounts, Stores, EMBEDDINGS_FILE, INTERACTIONS_FILE, METADATA_FILE};

use crate::error::{Error, Result};
use crate::ingest::{RasterImage, Metadata};
use crate::model::{
    AttributeTag, CategoryHierarchy, InteractionEvent, InteractionKind, ItemEmbeddings, ItemId, ItemMeta, ItemRecord,
    OotdId, OotdPost, SuperCategory, UserId, UserProfile,
};
use crate::pipeline::{
    execute_dag, render_synthetic_ootd, run_ootd_pipeline, stub_plugins, AnalyzedCrop, AnalyzedOotd, PluginSet,
    ProjectionEmbedder, StagingArea, SyntheticGarment, TaskDag, TaskOutcome, TraceEvent,
};
use crate::stylerec::{curate_feed, similar_ootds, suggest_style_leaders, RecContext, RecSnapshot, Source};
use crate::vecindex::{rebuild_catalog, IndexCatalog, VectorsBySuper};

/// One immutable build of the recommender snapshot and the index catalog.
#[derive(Debug, PartialEq)]
pub struct Generation {
    pub version: u64,
    pub built_at: DateTime<Utc>,
    /// Log events folded into `rec`; later ones form the live overlay.
    pub events_at_build: usize,
    pub rec: RecSnapshot,
    pub catalog: IndexCatalog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GenerationManifest {
    version: u64,
    built_at: DateTime<Utc>,
    events_at_build: usize,
    counts: StoreCounts,
}

const REC_FILE: &str = "recommender.json";
const CATALOG_DIR: &str = "catalog";
const MANIFEST_FILE: &str = "manifest.json";

fn save_generation(
    dir: &DataDir,
    version: u64,
    built_at: DateTime<Utc>,
    events_at_build: usize,
    counts: StoreCounts,
    rec: &RecSnapshot,
    catalog: &IndexCatalog,
) -> Result<()> {
    let path = dir.snapshot(version);
    if path.exists() {
        fs::remove_dir_all(&path)?;
    }
    fs::create_dir_all(&path)?;
    rec.save(&path.join(REC_FILE))?;
    catalog.save(&path.join(CATALOG_DIR))?;
    let manifest = GenerationManifest { version, built_at, events_at_build, counts };
    fs::write(path.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn load_generation(dir: &DataDir, version: u64) -> Result<Generation> {
    let path = dir.snapshot(version);
    let manifest: GenerationManifest = serde_json::from_slice(&fs::read(path.join(MANIFEST_FILE))?)?;
    if manifest.version != version {
        return Err(Error::Schema(format!("snapshot directory v{version} holds version {}", manifest.version)));
    }
    Ok(Generation {
        version,
        built_at: manifest.built_at,
        events_at_build: manifest.events_at_build,
        rec: RecSnapshot::load(&path.join(REC_FILE))?,
        catalog: IndexCatalog::load(&path.join(CATALOG_DIR))?,
    })
}

/// A response tagged with the snapshot version that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub snapshot_version: u64,
    pub data: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedCard {
    pub ootd_id: OotdId,
    pub image_ref: String,
    pub uploader: UserId,
    pub hashtags: BTreeSet<String>,
    pub sub_categories: Vec<String>,
    pub source: Source,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemHit {
    pub item_id: ItemId,
    pub score: f32,
    pub sub_category: String,
    pub super_category: SuperCategory,
}

/// An OOTD with the items it is made of.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OotdDetail {
    pub ootd: OotdPost,
    pub image_ref: String,
    pub items: Vec<ItemSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemSummary {
    pub item_id: ItemId,
    pub sub_category: String,
    pub super_category: SuperCategory,
    pub color_tag: Option<String>,
    /// Whether the item is in the current index snapshot.
    pub indexed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderCard {
    pub user_id: UserId,
    pub score: f64,
    pub source: Source,
    pub followers: usize,
    pub uploads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB bytes.
    pub pixels: Vec<u8>,
}

/// An OOTD upload: either synthetic garments to render or a raw image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UploadRequest {
    pub uploader: UserId,
    #[serde(default)]
    pub hashtags: Vec<String>,
    #[serde(default)]
    pub garments: Vec<SyntheticGarment>,
    #[serde(default)]
    pub image: Option<ImagePayload>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UploadReport {
    pub ootd_id: OotdId,
    pub item_ids: Vec<ItemId>,
    pub analysis: AnalyzedOotd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RebuildReport {
    pub version: u64,
    pub built_at: DateTime<Utc>,
    pub rebuilt_partitions: Vec<SuperCategory>,
    pub counts: StoreCounts,
    pub trace: Vec<TraceEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineStatus {
    pub counts: StoreCounts,
    pub staged: usize,
    pub live_events: usize,
    pub built_at: DateTime<Utc>,
    pub indexed: BTreeMap<SuperCategory, usize>,
}

/// Rebuild tasks: the recommender snapshot and the index partitions are
/// independent until both are persisted.
pub const REBUILD_DAG: &str = "recommender:\nvectors:\ncatalog: vectors\npersist: recommender catalog\n";

enum BuildOutput {
    Rec(RecSnapshot),
    Vectors(VectorsBySuper),
    Catalog(IndexCatalog),
    Persisted,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub struct Engine {
    cfg: EngineConfig,
    dir: DataDir,
    hierarchy: CategoryHierarchy,
    plugins: PluginSet,
    stores: RwLock<Stores>,
    current: RwLock<Arc<Generation>>,
    staging: StagingArea,
    writer: Mutex<()>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("data_dir", &self.dir).field("version", &self.version()).finish_non_exhaustive()
    }
}

impl Engine {
    /// Loads the stores and the current snapshot, building the first
    /// snapshot if there is none. Items missing from the loaded catalog are
    /// staged for the next rebuild.
    pub fn open(cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        let dir = DataDir::new(&cfg.data_dir);
        fs::create_dir_all(dir.root())?;
        let hierarchy = CategoryHierarchy::default();
        let stores = Stores::load(&dir, &cfg.layout, &hierarchy)?;
        let mut plugins = stub_plugins(cfg.plugin_seed, &hierarchy)?;
        plugins.embedder = Box::new(ProjectionEmbedder::new(cfg.layout.search_dim, 4, cfg.plugin_seed)?);
        let placeholder = Generation {
            version: 0,
            built_at: cfg.now(),
            events_at_build: 0,
            rec: RecSnapshot::build(&[], &[], &[], &[], cfg.now(), &cfg.rec)?,
            catalog: IndexCatalog::empty(cfg.index, cfg.now())?,
        };
        let engine = Self {
            dir,
            hierarchy,
            plugins,
            stores: RwLock::new(stores),
            current: RwLock::new(Arc::new(placeholder)),
            staging: StagingArea::new(),
            writer: Mutex::new(()),
            cfg,
        };
        match engine.dir.current_version()? {
            Some(v) => {
                let generation = load_generation(&engine.dir, v)?;
                if generation.catalog.config() != &engine.cfg.index {
                    return Err(Error::Config {
                        key: "index".into(),
                        message: format!("snapshot v{v} was built with {:?}; run a full rebuild", generation.catalog.config()),
                    });
                }
                let events = engine.read_stores().events.len();
                if generation.events_at_build > events {
                    return Err(Error::Schema(format!(
                        "snapshot v{v} covers {} events but the log holds {events}",
                        generation.events_at_build
                    )));
                }
                *engine.current.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(generation);
                engine.stage_unindexed()?;
            }
            None => {
                engine.rebuild(true)?;
            }
        }
        Ok(engine)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn hierarchy(&self) -> &CategoryHierarchy {
        &self.hierarchy
    }

    pub fn plugins(&self) -> &PluginSet {
        &self.plugins
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.cfg.now()
    }

    pub fn generation(&self) -> Arc<Generation> {
        self.current.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn version(&self) -> u64 {
        self.generation().version
    }

    fn read_stores(&self) -> RwLockReadGuard<'_, Stores> {
        self.stores.read().unwrap_or_else(|p| p.into_inner())
    }

    fn lock_writer(&self) -> MutexGuard<'_, ()> {
        self.writer.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// A copy of the stores, for inspection and tests.
    pub fn stores(&self) -> Stores {
        self.read_stores().clone()
    }

    pub fn status(&self) -> Versioned<EngineStatus> {
        let generation = self.generation();
        let stores = self.read_stores();
        let indexed = generation.catalog.entries().map(|(sc, e)| (sc, e.index.len())).collect();
        Versioned {
            snapshot_version: generation.version,
            data: EngineStatus {
                counts: stores.counts(),
                staged: self.staging.len(),
                live_events: stores.events.len() - generation.events_at_build,
                built_at: generation.built_at,
                indexed,
            },
        }
    }

    fn stage_unindexed(&self) -> Result<()> {
        let generation = self.generation();
        let stores = self.read_stores();
        for item in stores.items.values() {
            let sc = self.hierarchy.require_super(&item.sub_category)?;
            if !generation.catalog.index(sc).contains(item.item_id.0) {
                self.staging.stage(sc, item.item_id.0, item.embeddings.search.clone())?;
            }
        }
        Ok(())
    }

    fn stage_items<'a>(&self, items: impl IntoIterator<Item = &'a ItemRecord>) -> Result<()> {
        for item in items {
            let sc = self.hierarchy.require_super(&item.sub_category)?;
            self.staging.stage(sc, item.item_id.0, item.embeddings.search.clone())?;
        }
        Ok(())
    }

    /// Validates, persists and absorbs a batch. New items are staged for
    /// the next rebuild; new OOTDs and users reach the recommender then too.
    pub fn ingest(&self, batch: IngestBatch) -> Result<Versioned<StoreCounts>> {
        let _w = self.lock_writer();
        let prepared = self.read_stores().prepare(batch, &self.cfg.layout, &self.hierarchy)?;
        let now = self.now();
        if let Some(e) = prepared.events.iter().find(|e| e.timestamp > now) {
            return Err(Error::FutureEvents { now: now.to_rfc3339(), detail: format!("{} at {}", e.user_id, e.timestamp) });
        }
        self.read_stores().persist(&self.dir, &prepared, &self.cfg.layout)?;
        let added = StoreCounts {
            items: prepared.items.len(),
            ootds: prepared.ootds.len(),
            users: prepared.users.len(),
            events: prepared.events.len(),
        };
        self.stage_items(prepared.items.values())?;
        self.stores.write().unwrap_or_else(|p| p.into_inner()).absorb(prepared);
        Ok(Versioned { snapshot_version: self.version(), data: added })
    }

    pub fn add_item(&self, meta: ItemMeta, embeddings: ItemEmbeddings) -> Result<Versioned<ItemId>> {
        let id = meta.item_id;
        let mut set = crate::ingest::EmbeddingSet::new(self.cfg.layout.total());
        let block: Vec<f32> = embeddings.concat_f32();
        set.insert(id.0, block)?;
        let batch = IngestBatch { metadata: Metadata { items: vec![meta], ..Default::default() }, embeddings: Some(set), events: vec![] };
        let v = self.ingest(batch)?;
        Ok(Versioned { snapshot_version: v.snapshot_version, data: id })
    }

    pub fn add_user(&self, profile: UserProfile) -> Result<Versioned<UserId>> {
        let id = profile.user_id.clone();
        let batch = IngestBatch { metadata: Metadata { users: vec![profile], ..Default::default() }, ..Default::default() };
        let v = self.ingest(batch)?;
        Ok(Versioned { snapshot_version: v.snapshot_version, data: id })
    }

    /// Appends a view, like or follow to the log; the next read overlays it.
    pub fn record_interaction(&self, user: &UserId, kind: InteractionKind, target: &str) -> Result<Versioned<InteractionEvent>> {
        if kind == InteractionKind::Upload {
            return Err(Error::contract("uploads are recorded by the upload call"));
        }
        let event = InteractionEvent::new(self.now(), user.clone(), kind, target)?;
        let batch = IngestBatch { events: vec![event.clone()], ..Default::default() };
        let v = self.ingest(batch)?;
        Ok(Versioned { snapshot_version: v.snapshot_version, data: event })
    }

    /// Runs the analysis pipeline on an upload and stores the OOTD, its
    /// crops as items and an upload event. The crops are staged for the
    /// next index rebuild.
    pub fn upload_ootd(&self, req: &UploadRequest) -> Result<Versioned<UploadReport>> {
        let _w = self.lock_writer();
        let image = match (&req.image, req.garments.is_empty()) {
            (Some(img), true) => RasterImage::new(img.width, img.height, img.pixels.clone())?,
            (None, false) => render_synthetic_ootd(&req.garments, &self.hierarchy)?,
            _ => return Err(Error::contract("an upload needs exactly one of 'garments' and 'image'")),
        };
        let (ootd_id, first_item) = {
            let stores = self.read_stores();
            if !stores.users.contains_key(&req.uploader) {
                return Err(Error::UnknownUser(req.uploader.0.clone()));
            }
            let ootd = stores.ootds.keys().next_back().map_or(1, |o| o.0 + 1);
            let item = stores.items.keys().next_back().map_or(1, |i| i.0 + 1);
            (OotdId(ootd), item)
        };
        let scratch = StagingArea::new();
        let analysis =
            run_ootd_pipeline(ootd_id, &image, &self.plugins, &self.hierarchy, &self.cfg.pipeline, first_item, &scratch)?;
        let items: Vec<ItemRecord> = analysis.crops.iter().map(|c| self.crop_record(c)).collect::<Result<_>>()?;
        let now = self.now();
        let post = OotdPost::new(ootd_id, req.uploader.clone(), items.iter().map(|i| i.item_id).collect(), &req.hashtags, now)?;
        let event = InteractionEvent::new(now, req.uploader.clone(), InteractionKind::Upload, &ootd_id.to_string())?;
        let prepared = Prepared {
            items: items.iter().map(|i| (i.item_id, i.clone())).collect(),
            ootds: [(ootd_id, post)].into(),
            users: BTreeMap::new(),
            events: vec![event],
        };
        self.read_stores().persist(&self.dir, &prepared, &self.cfg.layout)?;
        for (sc, vectors) in scratch.staged() {
            for (id, v) in vectors {
                self.staging.stage(sc, id, v)?;
            }
        }
        self.stores.write().unwrap_or_else(|p| p.into_inner()).absorb(prepared);
        let report = UploadReport { ootd_id, item_ids: items.iter().map(|i| i.item_id).collect(), analysis };
        Ok(Versioned { snapshot_version: self.version(), data: report })
    }

    /// Item record for an analyzed crop. The classifier block is the
    /// confidence at the sub-category's slot and the tagger block counts
    /// hashed tags, so uploaded items carry all three representations.
    fn crop_record(&self, crop: &AnalyzedCrop) -> Result<ItemRecord> {
        let layout = &self.cfg.layout;
        let mut classifier = vec![0f32; layout.classifier_dim];
        if let Some(slot) = self.hierarchy.sub_categories().position(|(s, _)| s == crop.sub_category) {
            if !classifier.is_empty() {
                let n = classifier.len();
                classifier[slot % n] = crop.classifier_confidence as f32;
            }
        }
        let mut tagger = vec![0f32; layout.tagger_dim];
        if !tagger.is_empty() {
            let n = tagger.len() as u64;
            for t in &crop.tags {
                tagger[(fnv1a(format!("{}={}", t.group, t.value).as_bytes()) % n) as usize] += 1.0;
            }
        }
        let meta = ItemMeta {
            item_id: crop.item_id,
            sub_category: crop.sub_category.clone(),
            color_tag: crop.tags.iter().find(|t| t.group == "color").map(|t| t.value.clone()),
            attribute_tags: crop.tags.iter().cloned().collect::<BTreeSet<AttributeTag>>(),
        };
        ItemRecord::new(meta, ItemEmbeddings { classifier, tagger, search: crop.vector.clone() }, layout, &self.hierarchy)
    }

    /// Builds a new generation through the rebuild DAG, persists it, points
    /// CURRENT at it and swaps it in. `full` rebuilds every index partition;
    /// otherwise only partitions with staged items are rebuilt.
    pub fn rebuild(&self, full: bool) -> Result<Versioned<RebuildReport>> {
        let _w = self.lock_writer();
        let stores = self.stores();
        let previous = self.generation();
        let now = self.now();
        let version = previous.version + 1;
        let staged = self.staging.staged();
        let partitions: Vec<SuperCategory> =
            if full { SuperCategory::ALL.to_vec() } else { staged.keys().copied().collect() };
        let counts = stores.counts();
        let items: Vec<ItemRecord> = stores.items.values().cloned().collect();
        let ootds: Vec<OotdPost> = stores.ootds.values().cloned().collect();
        let users: Vec<UserProfile> = stores.users.values().cloned().collect();
        let base_catalog = if full { IndexCatalog::empty(self.cfg.index, now)? } else { previous.catalog.clone() };

        let dag = TaskDag::parse(REBUILD_DAG, std::path::Path::new("rebuild"))?;
        let build = |task: &str, inputs: &BTreeMap<String, Arc<BuildOutput>>| -> Result<BuildOutput> {
            let out = match task {
                "recommender" => BuildOutput::Rec(RecSnapshot::build(&items, &ootds, &users, &stores.events, now, &self.cfg.rec)?),
                "vectors" => {
                    let mut by_super: VectorsBySuper = partitions.iter().map(|sc| (*sc, BTreeMap::new())).collect();
                    for item in &items {
                        let sc = self.hierarchy.require_super(&item.sub_category)?;
                        if let Some(part) = by_super.get_mut(&sc) {
                            part.insert(item.item_id.0, item.embeddings.search.clone());
                        }
                    }
                    BuildOutput::Vectors(by_super)
                }
                "catalog" => match inputs.get("vectors").map(|a| a.as_ref()) {
                    Some(BuildOutput::Vectors(v)) => BuildOutput::Catalog(rebuild_catalog(&base_catalog, v, now)?),
                    _ => return Err(Error::contract("catalog task lacks its vectors")),
                },
                "persist" => match (inputs.get("recommender").map(|a| a.as_ref()), inputs.get("catalog").map(|a| a.as_ref())) {
                    (Some(BuildOutput::Rec(rec)), Some(BuildOutput::Catalog(catalog))) => {
                        save_generation(&self.dir, version, now, counts.events, counts, rec, catalog)?;
                        BuildOutput::Persisted
                    }
                    _ => return Err(Error::contract("persist task lacks its inputs")),
                },
                other => return Err(Error::contract(format!("unknown rebuild task '{other}'"))),
            };
            Ok(out)
        };
        let run = execute_dag(&dag, self.cfg.rebuild_workers, |t, i| build(t, i).map_err(|e| e.to_string()))?;
        if let Some((task, outcome)) = run.outcomes.iter().find(|(_, o)| !matches!(o, TaskOutcome::Succeeded { .. })) {
            return Err(Error::contract(format!("rebuild task '{task}' {}", describe(outcome))));
        }
        let trace = run.trace.clone();
        let mut outputs = run.outcomes;
        let mut take = |name: &str| match outputs.remove(name) {
            Some(TaskOutcome::Succeeded { output }) => {
                Arc::try_unwrap(output).map_err(|_| Error::contract(format!("rebuild output '{name}' is still shared")))
            }
            _ => Err(Error::contract(format!("rebuild output '{name}' is missing"))),
        };
        let (BuildOutput::Rec(rec), BuildOutput::Catalog(catalog)) = (take("recommender")?, take("catalog")?) else {
            return Err(Error::contract("rebuild outputs have unexpected kinds"));
        };
        self.dir.set_current(version)?;
        let generation = Generation { version, built_at: now, events_at_build: counts.events, rec, catalog };
        *self.current.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(generation);
        self.staging.clear();
        self.dir.prune(self.cfg.keep_snapshots)?;
        let report = RebuildReport { version, built_at: now, rebuilt_partitions: partitions, counts, trace };
        Ok(Versioned { snapshot_version: version, data: report })
    }

    fn feed_card(&self, generation: &Generation, stores: &Stores, o: OotdId, score: f64, source: Source) -> Result<FeedCard> {
        let entry = generation.rec.ootd(o)?;
        let sub_categories = stores
            .ootds
            .get(&o)
            .map(|p| p.item_ids.iter().filter_map(|i| stores.items.get(i)).map(|i| i.sub_category.clone()).collect())
            .unwrap_or_default();
        Ok(FeedCard {
            ootd_id: o,
            image_ref: format!("ootd:{o}"),
            uploader: entry.uploader.clone(),
            hashtags: entry.hashtags.clone(),
            sub_categories,
            source,
            score,
        })
    }

    /// The curated feed of `user` with the live overlay.
    pub fn feed(&self, user: &UserId, k: usize) -> Result<Versioned<Vec<FeedCard>>> {
        let generation = self.generation();
        let stores = self.read_stores();
        let live = &stores.events[generation.events_at_build..];
        let ctx = RecContext::new(&generation.rec, self.now(), &generation.rec.config).with_live(live);
        let feed = curate_feed(&ctx, user, k)?;
        let cards = feed
            .into_iter()
            .map(|r| self.feed_card(&generation, &stores, r.id, r.score, r.source))
            .collect::<Result<_>>()?;
        Ok(Versioned { snapshot_version: generation.version, data: cards })
    }

    pub fn ootd_detail(&self, ootd: OotdId) -> Result<Versioned<OotdDetail>> {
        let generation = self.generation();
        let stores = self.read_stores();
        let post = stores.ootds.get(&ootd).ok_or(Error::UnknownOotd(ootd.0))?;
        let items = post
            .item_ids
            .iter()
            .map(|id| {
                let item = stores.items.get(id).ok_or(Error::UnknownItem(id.0))?;
                Ok(ItemSummary {
                    item_id: *id,
                    sub_category: item.sub_category.clone(),
                    super_category: self.hierarchy.require_super(&item.sub_category)?,
                    color_tag: item.color_tag.clone(),
                    indexed: generation.catalog.locate(id.0).is_some(),
                })
            })
            .collect::<Result<_>>()?;
        let data = OotdDetail { ootd: post.clone(), image_ref: format!("ootd:{ootd}"), items };
        Ok(Versioned { snapshot_version: generation.version, data })
    }

    /// OOTDs with the most similar style to `ootd`.
    pub fn similar_ootds(&self, ootd: OotdId, k: usize) -> Result<Versioned<Vec<FeedCard>>> {
        let generation = self.generation();
        let stores = self.read_stores();
        let similar = similar_ootds(&generation.rec, ootd, k, &generation.rec.config)?;
        let cards = similar
            .into_iter()
            .map(|s| self.feed_card(&generation, &stores, s.id, s.score, Source::Cf))
            .collect::<Result<_>>()?;
        Ok(Versioned { snapshot_version: generation.version, data: cards })
    }

    pub fn leaders(&self, user: &UserId, k: usize) -> Result<Versioned<Vec<LeaderCard>>> {
        let generation = self.generation();
        let stores = self.read_stores();
        let live = &stores.events[generation.events_at_build..];
        let ctx = RecContext::new(&generation.rec, self.now(), &generation.rec.config).with_live(live);
        let followers = generation.rec.followers();
        let cards = suggest_style_leaders(&ctx, user, k)?
            .into_iter()
            .map(|r| LeaderCard {
                followers: followers.get(&r.id).map_or(0, |f| f.len()),
                uploads: generation.rec.users.get(&r.id).map_or(0, |u| u.uploads.len()),
                user_id: r.id,
                score: r.score,
                source: r.source,
            })
            .collect();
        Ok(Versioned { snapshot_version: generation.version, data: cards })
    }

    fn hits(&self, stores: &Stores, sc: SuperCategory, found: Vec<crate::vecindex::ScoredId>) -> Vec<ItemHit> {
        found
            .into_iter()
            .map(|s| ItemHit {
                item_id: ItemId(s.id),
                score: s.score,
                sub_category: stores.items.get(&ItemId(s.id)).map(|i| i.sub_category.clone()).unwrap_or_default(),
                super_category: sc,
            })
            .collect()
    }

    /// Nearest indexed items to a query vector within one super-category.
    pub fn search(&self, sc: SuperCategory, query: &[f32], k: usize, ef: Option<usize>) -> Result<Versioned<Vec<ItemHit>>> {
        let generation = self.generation();
        let found = generation.catalog.search(sc, query, k, ef)?;
        let hits = self.hits(&self.read_stores(), sc, found);
        Ok(Versioned { snapshot_version: generation.version, data: hits })
    }

    /// Nearest items to an indexed item, the item itself excluded.
    pub fn similar_items(&self, item: ItemId, k: usize, ef: Option<usize>) -> Result<Versioned<Vec<ItemHit>>> {
        let generation = self.generation();
        let stores = self.read_stores();
        let record = stores.items.get(&item).ok_or(Error::UnknownItem(item.0))?;
        let sc = generation.catalog.locate(item.0).ok_or_else(|| {
            Error::contract(format!("item {item} is not indexed yet; it becomes searchable after the next rebuild"))
        })?;
        let ef = ef.map(|e| e.max(k + 1));
        let found = generation.catalog.search(sc, &record.embeddings.search, k + 1, ef)?;
        let found = found.into_iter().filter(|s| s.id != item.0).take(k).collect();
        Ok(Versioned { snapshot_version: generation.version, data: self.hits(&stores, sc, found) })
    }
}

fn describe<T>(o: &TaskOutcome<T>) -> String {
    match o {
        TaskOutcome::Succeeded { .. } => "succeeded".into(),
        TaskOutcome::Failed { error } => format!("failed: {error}"),
        TaskOutcome::Skipped { failed_dependency } => format!("skipped after '{failed_dependency}' failed"),
    }
}
