use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    append_interactions, append_metadata, read_embeddings, read_interactions, read_metadata, write_embeddings,
    EmbeddingSet, Metadata, MetadataRecord,
};
use crate::model::{
    CategoryHierarchy, EmbeddingLayout, InteractionEvent, ItemId, ItemRecord, OotdId, OotdPost, Target, UserId,
    UserProfile,
};

pub const METADATA_FILE: &str = "metadata.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const INTERACTIONS_FILE: &str = "interactions.csv";
const SNAPSHOTS_DIR: &str = "snapshots";
const CURRENT_FILE: &str = "CURRENT";

/// File layout of a data directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn metadata(&self) -> PathBuf {
        self.root.join(METADATA_FILE)
    }

    pub fn embeddings(&self) -> PathBuf {
        self.root.join(EMBEDDINGS_FILE)
    }

    pub fn interactions(&self) -> PathBuf {
        self.root.join(INTERACTIONS_FILE)
    }

    pub fn snapshot(&self, version: u64) -> PathBuf {
        self.root.join(SNAPSHOTS_DIR).join(format!("v{version:06}"))
    }

    pub fn current_version(&self) -> Result<Option<u64>> {
        let path = self.root.join(CURRENT_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => text
                .trim()
                .parse()
                .map(Some)
                .map_err(|e| Error::parse(&path, 1, format!("bad snapshot version: {e}"))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Points CURRENT at `version` with a write-then-rename.
    pub fn set_current(&self, version: u64) -> Result<()> {
        let tmp = self.root.join(format!("{CURRENT_FILE}.tmp"));
        fs::write(&tmp, format!("{version}\n"))?;
        fs::File::open(&tmp)?.sync_all()?;
        fs::rename(&tmp, self.root.join(CURRENT_FILE))?;
        Ok(())
    }

    /// Removes snapshot directories older than the newest `keep`.
    pub fn prune(&self, keep: usize) -> Result<()> {
        let dir = self.root.join(SNAPSHOTS_DIR);
        let Ok(entries) = fs::read_dir(&dir) else { return Ok(()) };
        let mut versions: Vec<(u64, PathBuf)> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().to_string();
                name.strip_prefix('v').and_then(|v| v.parse().ok()).map(|v| (v, e.path()))
            })
            .collect();
        versions.sort();
        let drop = versions.len().saturating_sub(keep);
        for (_, path) in versions.into_iter().take(drop) {
            fs::remove_dir_all(path)?;
        }
        Ok(())
    }
}

/// Items, OOTDs, users and the interaction log, validated against each other.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Stores {
    pub items: BTreeMap<ItemId, ItemRecord>,
    pub ootds: BTreeMap<OotdId, OotdPost>,
    pub users: BTreeMap<UserId, UserProfile>,
    /// Append order, which is also the on-disk order.
    pub events: Vec<InteractionEvent>,
}

/// Records to add in one step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestBatch {
    pub metadata: Metadata,
    pub embeddings: Option<EmbeddingSet>,
    pub events: Vec<InteractionEvent>,
}

impl IngestBatch {
    /// Reads whichever of the three standard files exist in `dir`.
    pub fn from_dir(dir: &Path, layout: &EmbeddingLayout) -> Result<Self> {
        let d = DataDir::new(dir);
        Self::from_files(
            Some(d.metadata()).filter(|p| p.exists()).as_deref(),
            Some(d.embeddings()).filter(|p| p.exists()).as_deref(),
            Some(d.interactions()).filter(|p| p.exists()).as_deref(),
            layout,
        )
    }

    pub fn from_files(
        metadata: Option<&Path>,
        embeddings: Option<&Path>,
        interactions: Option<&Path>,
        layout: &EmbeddingLayout,
    ) -> Result<Self> {
        Ok(Self {
            metadata: metadata.map(read_metadata).transpose()?.unwrap_or_default(),
            embeddings: embeddings.map(|p| read_embeddings(p, Some(layout.total()))).transpose()?,
            events: interactions.map(read_interactions).transpose()?.unwrap_or_default(),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreCounts {
    pub items: usize,
    pub ootds: usize,
    pub users: usize,
    pub events: usize,
}

impl Stores {
    pub fn counts(&self) -> StoreCounts {
        StoreCounts { items: self.items.len(), ootds: self.ootds.len(), users: self.users.len(), events: self.events.len() }
    }

    /// Loads and cross-checks the three files of a data directory; missing
    /// files are empty stores.
    pub fn load(dir: &DataDir, layout: &EmbeddingLayout, hierarchy: &CategoryHierarchy) -> Result<Self> {
        let batch = IngestBatch::from_dir(dir.root(), layout)?;
        let mut stores = Stores::default();
        let prepared = stores.prepare(batch, layout, hierarchy)?;
        stores.absorb(prepared);
        Ok(stores)
    }

    /// Validates a batch against the current contents without changing them.
    pub fn prepare(&self, batch: IngestBatch, layout: &EmbeddingLayout, hierarchy: &CategoryHierarchy) -> Result<Prepared> {
        let mut vectors = batch.embeddings.map(|e| e.vectors).unwrap_or_default();
        let mut items = BTreeMap::new();
        for meta in batch.metadata.items {
            let id = meta.item_id;
            if self.items.contains_key(&id) || items.contains_key(&id) {
                return Err(Error::Schema(format!("item {id} is defined twice")));
            }
            let block = vectors.remove(&id.0).ok_or_else(|| Error::Schema(format!("item {id} has no embedding record")))?;
            items.insert(id, ItemRecord::new(meta, layout.split(&block)?, layout, hierarchy)?);
        }
        if let Some(stray) = vectors.keys().next() {
            return Err(Error::Schema(format!("embedding record {stray} has no item metadata")));
        }
        let mut users = BTreeMap::new();
        for u in batch.metadata.users {
            if self.users.contains_key(&u.user_id) || users.contains_key(&u.user_id) {
                return Err(Error::Schema(format!("user '{}' is defined twice", u.user_id)));
            }
            users.insert(u.user_id.clone(), u.normalized()?);
        }
        let has_user = |u: &UserId| self.users.contains_key(u) || users.contains_key(u);
        let mut ootds = BTreeMap::new();
        for o in batch.metadata.ootds {
            if self.ootds.contains_key(&o.ootd_id) || ootds.contains_key(&o.ootd_id) {
                return Err(Error::Schema(format!("ootd {} is defined twice", o.ootd_id)));
            }
            if !has_user(&o.uploader_id) {
                return Err(Error::UnknownUser(o.uploader_id.0.clone()));
            }
            if let Some(i) = o.item_ids.iter().find(|i| !self.items.contains_key(i) && !items.contains_key(i)) {
                return Err(Error::UnknownItem(i.0));
            }
            ootds.insert(o.ootd_id, o.normalized()?);
        }
        let has_ootd = |o: &OotdId| self.ootds.contains_key(o) || ootds.contains_key(o);
        for u in users.values() {
            if let Some(v) = u.follows.iter().find(|v| !has_user(v)) {
                return Err(Error::UnknownUser(v.0.clone()));
            }
            if let Some(r) = u.recent_interactions.iter().find(|r| !has_ootd(&r.ootd_id)) {
                return Err(Error::UnknownOotd(r.ootd_id.0));
            }
        }
        for e in &batch.events {
            if !has_user(&e.user_id) {
                return Err(Error::UnknownUser(e.user_id.0.clone()));
            }
            match &e.target {
                Target::Ootd(o) if !has_ootd(o) => return Err(Error::UnknownOotd(o.0)),
                Target::User(v) if !has_user(v) => return Err(Error::UnknownUser(v.0.clone())),
                _ => {}
            }
        }
        Ok(Prepared { items, ootds, users, events: batch.events })
    }

    pub fn absorb(&mut self, p: Prepared) {
        self.items.extend(p.items);
        self.ootds.extend(p.ootds);
        self.users.extend(p.users);
        self.events.extend(p.events);
    }

    /// Appends a prepared batch to the data directory files.
    pub fn persist(&self, dir: &DataDir, p: &Prepared, layout: &EmbeddingLayout) -> Result<()> {
        fs::create_dir_all(dir.root())?;
        let mut records: Vec<MetadataRecord> = Vec::new();
        records.extend(p.users.values().cloned().map(MetadataRecord::User));
        records.extend(p.items.values().map(|i| MetadataRecord::Item(i.meta())));
        records.extend(p.ootds.values().cloned().map(MetadataRecord::Ootd));
        if !records.is_empty() {
            append_metadata(&dir.metadata(), &records)?;
        }
        if !p.items.is_empty() || !dir.embeddings().exists() {
            let mut set = EmbeddingSet::new(layout.total());
            for (id, item) in self.items.iter().chain(&p.items) {
                set.insert(id.0, item.embeddings.concat_f32())?;
            }
            write_embeddings(&dir.embeddings(), &set)?;
        }
        if !p.events.is_empty() {
            append_interactions(&dir.interactions(), &p.events)?;
        }
        Ok(())
    }

    pub fn newest_event(&self) -> Option<DateTime<Utc>> {
        self.events.iter().map(|e| e.timestamp).max()
    }
}

/// A validated batch, ready to be persisted and absorbed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prepared {
    pub items: BTreeMap<ItemId, ItemRecord>,
    pub ootds: BTreeMap<OotdId, OotdPost>,
    pub users: BTreeMap<UserId, UserProfile>,
    pub events: Vec<InteractionEvent>,
}
