use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::hnsw::{HnswIndex, HnswParams, ScoredId};
use super::sharded::ShardedIndex;
use crate::error::{Error, Result};
use crate::model::SuperCategory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub dim: usize,
    pub params: HnswParams,
    pub shards: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self { dim: 128, params: HnswParams::default(), shards: 1 }
    }
}

#[derive(Debug, PartialEq)]
pub struct CatalogEntry {
    pub index: ShardedIndex,
    pub built_at: DateTime<Utc>,
}

/// One live index per super-category. Entries are shared between catalog
/// generations when a rebuild leaves them untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexCatalog {
    config: IndexConfig,
    entries: BTreeMap<SuperCategory, Arc<CatalogEntry>>,
}

pub type VectorsBySuper = BTreeMap<SuperCategory, BTreeMap<u64, Vec<f32>>>;

#[derive(Serialize, Deserialize)]
struct CatalogManifest {
    config: IndexConfig,
    built_at: BTreeMap<SuperCategory, DateTime<Utc>>,
}

impl IndexCatalog {
    pub fn empty(config: IndexConfig, now: DateTime<Utc>) -> Result<Self> {
        let no_vectors = BTreeMap::new();
        let entries = SuperCategory::ALL
            .iter()
            .map(|&sc| {
                let index = ShardedIndex::build(&no_vectors, config.dim, config.params, config.shards)?;
                Ok((sc, Arc::new(CatalogEntry { index, built_at: now })))
            })
            .collect::<Result<_>>()?;
        Ok(Self { config, entries })
    }

    pub fn build(config: IndexConfig, vectors: &VectorsBySuper, now: DateTime<Utc>) -> Result<Self> {
        rebuild_catalog(&Self::empty(config, now)?, vectors, now)
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn entry(&self, sc: SuperCategory) -> &CatalogEntry {
        &self.entries[&sc]
    }

    pub fn index(&self, sc: SuperCategory) -> &ShardedIndex {
        &self.entries[&sc].index
    }

    pub fn entries(&self) -> impl Iterator<Item = (SuperCategory, &CatalogEntry)> {
        self.entries.iter().map(|(sc, e)| (*sc, e.as_ref()))
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(|e| e.index.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Which super-category index holds `id`, if any.
    pub fn locate(&self, id: u64) -> Option<SuperCategory> {
        self.entries.iter().find(|(_, e)| e.index.contains(id)).map(|(sc, _)| *sc)
    }

    pub fn search(&self, sc: SuperCategory, query: &[f32], k: usize, ef_search: Option<usize>) -> Result<Vec<ScoredId>> {
        let index = self.index(sc);
        index.search(query, k, ef_search.unwrap_or_else(|| index.default_ef()))
    }

    /// Writes `<super>-<shard>.hnsw` files plus `catalog.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut built_at = BTreeMap::new();
        for (sc, entry) in &self.entries {
            for (i, shard) in entry.index.shards().iter().enumerate() {
                shard.save(&dir.join(format!("{}-{i}.hnsw", sc.as_str())))?;
            }
            built_at.insert(*sc, entry.built_at);
        }
        let manifest = CatalogManifest { config: self.config, built_at };
        crate::ingest::write_atomically(&dir.join("catalog.json"), |w| {
            serde_json::to_writer_pretty(&mut *w, &manifest)?;
            Ok(())
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: CatalogManifest = serde_json::from_slice(&std::fs::read(dir.join("catalog.json"))?)?;
        let config = manifest.config;
        let mut entries = BTreeMap::new();
        for sc in SuperCategory::ALL {
            let built_at = *manifest
                .built_at
                .get(&sc)
                .ok_or_else(|| Error::Schema(format!("catalog manifest lacks '{}'", sc.as_str())))?;
            let shards = (0..config.shards)
                .map(|i| HnswIndex::load(&dir.join(format!("{}-{i}.hnsw", sc.as_str()))))
                .collect::<Result<Vec<_>>>()?;
            if let Some(s) = shards.iter().find(|s| s.dim() != config.dim) {
                return Err(Error::DimensionMismatch { expected: config.dim, found: s.dim() });
            }
            entries.insert(sc, Arc::new(CatalogEntry { index: ShardedIndex::from_shards(shards)?, built_at }));
        }
        Ok(Self { config, entries })
    }
}

/// Builds fresh indexes for the supplied super-categories, one thread each,
/// and carries the rest over unchanged. Any failure returns an error and the
/// caller's catalog stays as it was.
pub fn rebuild_catalog(catalog: &IndexCatalog, new_vectors: &VectorsBySuper, now: DateTime<Utc>) -> Result<IndexCatalog> {
    let config = catalog.config;
    let built: Vec<(SuperCategory, Result<ShardedIndex>)> = std::thread::scope(|s| {
        let handles: Vec<_> = new_vectors
            .iter()
            .map(|(&sc, vectors)| {
                (sc, s.spawn(move || ShardedIndex::build(vectors, config.dim, config.params, config.shards)))
            })
            .collect();
        handles
            .into_iter()
            .map(|(sc, h)| (sc, h.join().expect("index build panicked")))
            .collect()
    });
    let mut entries = catalog.entries.clone();
    for (sc, result) in built {
        let index = result.map_err(|e| match e {
            Error::ZeroVectors(ids) => Error::Contract(format!(
                "rebuild of '{}' rejected zero vectors for ids {ids:?}",
                sc.as_str()
            )),
            other => other,
        })?;
        entries.insert(sc, Arc::new(CatalogEntry { index, built_at: now }));
    }
    Ok(IndexCatalog { config, entries })
}

/// Shared handle to the current catalog. Readers grab an `Arc` and never see
/// a half-built generation.
#[derive(Debug)]
pub struct LiveCatalog {
    current: RwLock<Arc<IndexCatalog>>,
}

impl LiveCatalog {
    pub fn new(catalog: IndexCatalog) -> Self {
        Self { current: RwLock::new(Arc::new(catalog)) }
    }

    pub fn snapshot(&self) -> Arc<IndexCatalog> {
        self.current.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn swap(&self, next: IndexCatalog) -> Arc<IndexCatalog> {
        let mut guard = self.current.write().unwrap_or_else(|p| p.into_inner());
        std::mem::replace(&mut *guard, Arc::new(next))
    }

    /// Builds off to the side from the current generation, then swaps.
    pub fn rebuild(&self, new_vectors: &VectorsBySuper, now: DateTime<Utc>) -> Result<Arc<IndexCatalog>> {
        let next = rebuild_catalog(&self.snapshot(), new_vectors, now)?;
        self.swap(next);
        Ok(self.snapshot())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t(h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2021, 3, 1, h, 0, 0).unwrap()
    }

    fn cfg() -> IndexConfig {
        IndexConfig { dim: 4, params: HnswParams { m: 4, ef_construction: 16, ef_search: 8, seed: 2 }, shards: 2 }
    }

    fn vecs(base: u64, n: u64) -> BTreeMap<u64, Vec<f32>> {
        (base..base + n)
            .map(|id| (id, vec![1.0 + (id % 7) as f32, (id % 5) as f32, (id % 3) as f32 - 1.0, 0.25]))
            .collect()
    }

    #[test]
    fn always_one_index_per_super() {
        let cat = IndexCatalog::empty(cfg(), t(0)).unwrap();
        assert_eq!(cat.entries().count(), 6);
        assert!(cat.is_empty());
        let data: VectorsBySuper = [(SuperCategory::Top, vecs(0, 30))].into();
        let cat = IndexCatalog::build(cfg(), &data, t(1)).unwrap();
        assert_eq!(cat.entries().count(), 6);
        assert_eq!(cat.index(SuperCategory::Top).len(), 30);
        assert_eq!(cat.locate(7), Some(SuperCategory::Top));
        assert_eq!(cat.locate(700), None);
    }

    #[test]
    fn adding_shoes_touches_only_shoes() {
        let data: VectorsBySuper = [(SuperCategory::Top, vecs(0, 40)), (SuperCategory::Shoes, vecs(1000, 20))].into();
        let live = LiveCatalog::new(IndexCatalog::build(cfg(), &data, t(1)).unwrap());
        let before = live.snapshot();
        let mut shoes = vecs(1000, 20);
        shoes.extend(vecs(5000, 100));
        let after = live.rebuild(&[(SuperCategory::Shoes, shoes)].into(), t(2)).unwrap();
        for id in 5000..5100 {
            assert!(after.index(SuperCategory::Shoes).contains(id));
            assert_eq!(after.locate(id), Some(SuperCategory::Shoes));
        }
        assert_eq!(after.entry(SuperCategory::Top), before.entry(SuperCategory::Top));
        assert_eq!(after.entry(SuperCategory::Top).built_at, t(1));
        assert_eq!(after.entry(SuperCategory::Shoes).built_at, t(2));
        // the old generation is still intact for readers holding it
        assert_eq!(before.index(SuperCategory::Shoes).len(), 20);
    }

    #[test]
    fn failed_rebuild_keeps_old_catalog() {
        let data: VectorsBySuper = [(SuperCategory::Bag, vecs(0, 10))].into();
        let live = LiveCatalog::new(IndexCatalog::build(cfg(), &data, t(1)).unwrap());
        let before = live.snapshot();
        let mut poisoned = vecs(0, 12);
        poisoned.insert(11, vec![0.0; 4]);
        let err = live.rebuild(&[(SuperCategory::Bag, poisoned)].into(), t(2)).unwrap_err();
        assert!(err.to_string().contains("11"), "{err}");
        assert!(Arc::ptr_eq(&before, &live.snapshot()));
    }

    #[test]
    fn identical_rebuild_same_results_and_disk_round_trip() {
        let data: VectorsBySuper = [(SuperCategory::Outer, vecs(0, 60))].into();
        let a = IndexCatalog::build(cfg(), &data, t(1)).unwrap();
        let b = rebuild_catalog(&a, &data, t(3)).unwrap();
        let q = [0.5, 1.0, -0.5, 0.2];
        assert_eq!(
            a.search(SuperCategory::Outer, &q, 5, None).unwrap(),
            b.search(SuperCategory::Outer, &q, 5, None).unwrap()
        );
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let back = IndexCatalog::load(dir.path()).unwrap();
        assert_eq!(a, back);
    }
}
