use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::bbox::{postprocess_detections, BoundingBox, PostprocessConfig};
use super::plugins::{Classification, PluginKind, PluginSet};
use crate::error::{Error, Result};
use crate::ingest::RasterImage;
use crate::model::{AttributeTag, CategoryHierarchy, ItemId, OotdId, SuperCategory};
use crate::vecindex::{rebuild_catalog, IndexCatalog, VectorsBySuper};

/// Applies `f` to every item on `workers` scoped threads and returns the
/// results in input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let done: Vec<Vec<(usize, R)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            break out;
                        }
                        out.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("pipeline worker panicked")).collect()
    });
    for (i, r) in done.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots.into_iter().map(|r| r.expect("every index is claimed once")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub postprocess: PostprocessConfig,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { postprocess: PostprocessConfig::default(), workers: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzedCrop {
    pub item_id: ItemId,
    pub bbox: BoundingBox,
    pub sub_category: String,
    pub classifier_confidence: f64,
    pub tags: BTreeSet<AttributeTag>,
    pub vector: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropError {
    /// Detection index, or `None` for image-level stages and the fallback crop.
    pub detection: Option<usize>,
    pub stage: PluginKind,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzedOotd {
    pub ootd_id: OotdId,
    pub detections: usize,
    pub crops: Vec<AnalyzedCrop>,
    pub errors: Vec<CropError>,
}

/// Vectors waiting for the next index rebuild, one locked partition per
/// super-category.
#[derive(Debug)]
pub struct StagingArea {
    partitions: BTreeMap<SuperCategory, Mutex<BTreeMap<u64, Vec<f32>>>>,
}

impl Default for StagingArea {
    fn default() -> Self {
        Self { partitions: SuperCategory::ALL.iter().map(|sc| (*sc, Mutex::new(BTreeMap::new()))).collect() }
    }
}

impl StagingArea {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stage(&self, sc: SuperCategory, id: u64, vector: Vec<f32>) -> Result<()> {
        let mut part = self.partitions[&sc].lock().unwrap_or_else(|p| p.into_inner());
        if part.contains_key(&id) {
            return Err(Error::contract(format!("item {id} is already staged for '{}'", sc.as_str())));
        }
        part.insert(id, vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.partitions.values().map(|p| p.lock().unwrap_or_else(|e| e.into_inner()).len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        for p in self.partitions.values() {
            p.lock().unwrap_or_else(|e| e.into_inner()).clear();
        }
    }

    pub fn staged(&self) -> VectorsBySuper {
        self.partitions
            .iter()
            .map(|(sc, p)| (*sc, p.lock().unwrap_or_else(|e| e.into_inner()).clone()))
            .filter(|(_, m)| !m.is_empty())
            .collect()
    }

    /// Rebuilds the partitions with staged vectors from their current
    /// contents plus the staged ones, and clears the staging area on success.
    pub fn apply(&self, catalog: &IndexCatalog, now: DateTime<Utc>) -> Result<IndexCatalog> {
        let mut merged = self.staged();
        for (sc, staged) in &mut merged {
            let index = catalog.index(*sc);
            for id in index.ids() {
                if staged.contains_key(&id) {
                    return Err(Error::contract(format!("item {id} is already indexed under '{}'", sc.as_str())));
                }
                let v = index.vector_of(id).expect("listed id has a vector").to_vec();
                staged.insert(id, v);
            }
        }
        let next = rebuild_catalog(catalog, &merged, now)?;
        self.clear();
        Ok(next)
    }
}

struct CropAnalysis {
    classification: std::result::Result<Classification, String>,
    tags: std::result::Result<BTreeSet<AttributeTag>, String>,
}

fn classify_and_tag(plugins: &PluginSet, crop: &RasterImage) -> CropAnalysis {
    std::thread::scope(|s| {
        let tagging = s.spawn(|| plugins.tagger.tag(crop).map_err(|e| e.to_string()));
        let classification = plugins.classifier.classify(crop).map_err(|e| e.to_string());
        let tags = tagging.join().unwrap_or_else(|_| Err("tagger panicked".into()));
        CropAnalysis { classification, tags }
    })
}

fn crop_of(image: &RasterImage, b: &BoundingBox) -> Result<RasterImage> {
    image.crop(b.x, b.y, b.w, b.h)
}

/// detect → crop → (classify ∥ tag) per crop → post-process → embed → stage.
///
/// Kept crops get consecutive item ids starting at `first_item_id` and are
/// staged under their box's super-category. Plugin failures on a crop are
/// recorded and the crop is skipped; a failing detector is treated as
/// detecting nothing.
pub fn run_ootd_pipeline(
    ootd_id: OotdId,
    image: &RasterImage,
    plugins: &PluginSet,
    hierarchy: &CategoryHierarchy,
    cfg: &PipelineConfig,
    first_item_id: u64,
    staging: &StagingArea,
) -> Result<AnalyzedOotd> {
    let size = (image.width(), image.height());
    let mut errors = Vec::new();
    let detections = match plugins.detector.detect(image) {
        Ok(boxes) => boxes,
        Err(e) => {
            errors.push(CropError { detection: None, stage: PluginKind::Detector, message: e.to_string() });
            Vec::new()
        }
    };
    let mut valid: Vec<(usize, BoundingBox, RasterImage)> = Vec::new();
    for (i, b) in detections.iter().enumerate() {
        match b.check(size).and_then(|_| crop_of(image, b)) {
            Ok(crop) => valid.push((i, *b, crop)),
            Err(e) => errors.push(CropError { detection: Some(i), stage: PluginKind::Detector, message: e.to_string() }),
        }
    }

    let analyses = parallel_map(&valid, cfg.workers, |(_, _, crop)| classify_and_tag(plugins, crop));
    let mut boxes = Vec::new();
    let mut labels = Vec::new();
    let mut per_box: Vec<(usize, f64, BTreeSet<AttributeTag>, &RasterImage)> = Vec::new();
    for ((i, b, crop), a) in valid.iter().zip(analyses) {
        let tags = a.tags.unwrap_or_else(|message| {
            errors.push(CropError { detection: Some(*i), stage: PluginKind::Tagger, message });
            BTreeSet::new()
        });
        match a.classification {
            Ok(c) => {
                boxes.push(*b);
                labels.push(c.sub_category);
                per_box.push((*i, c.confidence, tags, crop));
            }
            Err(message) => errors.push(CropError { detection: Some(*i), stage: PluginKind::Classifier, message }),
        }
    }

    let mut whole: Option<(f64, BTreeSet<AttributeTag>)> = None;
    let kept = postprocess_detections(&boxes, &labels, hierarchy, &cfg.postprocess, size, || {
        let a = classify_and_tag(plugins, image);
        let c = a.classification.map_err(|m| Error::contract(format!("whole-image classification failed: {m}")))?;
        let tags = a.tags.unwrap_or_else(|message| {
            errors.push(CropError { detection: None, stage: PluginKind::Tagger, message });
            BTreeSet::new()
        });
        whole = Some((c.confidence, tags));
        Ok((c.sub_category, c.confidence))
    })?;

    struct Pending<'a> {
        detection: Option<usize>,
        bbox: BoundingBox,
        sub_category: String,
        confidence: f64,
        tags: BTreeSet<AttributeTag>,
        crop: std::borrow::Cow<'a, RasterImage>,
    }
    let pending: Vec<Pending> = kept
        .into_iter()
        .map(|k| match k.detection {
            Some(d) => {
                let (i, confidence, tags, crop) = &per_box[d];
                Pending {
                    detection: Some(*i),
                    bbox: k.bbox,
                    sub_category: k.sub_category,
                    confidence: *confidence,
                    tags: tags.clone(),
                    crop: std::borrow::Cow::Borrowed(*crop),
                }
            }
            None => {
                let (confidence, tags) = whole.clone().unwrap_or_default();
                Pending {
                    detection: None,
                    bbox: k.bbox,
                    sub_category: k.sub_category,
                    confidence,
                    tags,
                    crop: std::borrow::Cow::Borrowed(image),
                }
            }
        })
        .collect();

    let dim = plugins.embedder.dim();
    let vectors = parallel_map(&pending, cfg.workers, |p| {
        let v = plugins.embedder.embed(&p.crop)?;
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
        }
        Ok(v)
    });
    let mut crops = Vec::new();
    let mut next_id = first_item_id;
    for (p, v) in pending.into_iter().zip(vectors) {
        match v {
            Ok(vector) => {
                staging.stage(p.bbox.super_category, next_id, vector.clone())?;
                crops.push(AnalyzedCrop {
                    item_id: ItemId(next_id),
                    bbox: p.bbox,
                    sub_category: p.sub_category,
                    classifier_confidence: p.confidence,
                    tags: p.tags,
                    vector,
                });
                next_id += 1;
            }
            Err(e) => errors.push(CropError { detection: p.detection, stage: PluginKind::Embedder, message: e.to_string() }),
        }
    }
    Ok(AnalyzedOotd { ootd_id, detections: detections.len(), crops, errors })
}
