use std::collections::BTreeSet;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::store::{DataDir, IngestBatch, StoreCounts};
use super::UploadRequest;
use crate::error::Result;
use crate::ingest::{append_interactions, append_metadata, parse_timestamp, write_embeddings, EmbeddingSet, Metadata, MetadataRecord};
use crate::model::{
    AttributeTag, CategoryHierarchy, Demographics, EmbeddingLayout, Gender, InteractionEvent, InteractionKind, ItemId,
    ItemMeta, OotdId, OotdPost, SuperCategory, UserId, UserProfile,
};
use crate::pipeline::SyntheticGarment;

pub const FIXTURE_TAGS: [&str; 8] = ["denim", "street", "minimal", "vintage", "casual", "office", "sporty", "lovely"];
const COLORS: [&str; 8] = ["black", "white", "gray", "red", "blue", "green", "beige", "navy"];
const PATTERNS: [&str; 4] = ["solid", "stripe", "check", "floral"];

/// Size and seed of the synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub users: usize,
    pub items: u64,
    pub ootds: u64,
    pub events: usize,
    pub seed: u64,
    /// Every timestamp is at or before this instant.
    pub now: DateTime<Utc>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            users: 20,
            items: 240,
            ootds: 60,
            events: 600,
            seed: 11,
            now: parse_timestamp("2026-03-01T00:00:00Z").expect("valid fixture time"),
        }
    }
}

fn unit(v: Vec<f64>) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| (x / n) as f32).collect()
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

pub fn user_name(i: usize) -> UserId {
    UserId::new(format!("u{:02}", i + 1))
}

/// Users `u01..`, items `1..=items` (item `i` belongs to super-category
/// `i mod 6` in hierarchy order), OOTDs `1..=ootds` and a time-sorted log of
/// views, likes and follows. Users favor OOTDs carrying their preference
/// tags, so the interactions have learnable structure.
pub fn fixture_batch(spec: &FixtureSpec, layout: &EmbeddingLayout, hierarchy: &CategoryHierarchy) -> Result<IngestBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let subs: Vec<(&str, SuperCategory)> = hierarchy.sub_categories().collect();
    let centroids: Vec<Vec<f64>> = subs.iter().map(|_| gaussian(&mut rng, layout.search_dim, 1.0)).collect();
    let mut meta = Metadata::default();
    let mut embeddings = EmbeddingSet::new(layout.total());

    let users: Vec<UserId> = (0..spec.users).map(user_name).collect();
    for (i, u) in users.iter().enumerate() {
        let gender = [Gender::Female, Gender::Male, Gender::Other][rng.random_range(0..3)];
        let mut profile = UserProfile::new(u.clone(), Demographics { gender, birth_year: rng.random_range(1975..=2005) });
        profile.preference_tags = FIXTURE_TAGS.choose_multiple(&mut rng, 2).map(|t| t.to_string()).collect();
        let follows = rng.random_range(0..=3usize);
        for _ in 0..follows {
            let j = rng.random_range(0..users.len());
            if j != i {
                profile.follows.insert(users[j].clone());
            }
        }
        meta.users.push(profile);
    }

    let mut by_super: Vec<Vec<ItemId>> = vec![Vec::new(); SuperCategory::ALL.len()];
    for id in 1..=spec.items {
        let slot = (id % SuperCategory::ALL.len() as u64) as usize;
        let sc = SuperCategory::ALL[slot];
        let choices: Vec<usize> = (0..subs.len()).filter(|&k| subs[k].1 == sc).collect();
        let k = *choices.choose(&mut rng).expect("every super-category has subs");
        let search: Vec<f64> =
            centroids[k].iter().zip(gaussian(&mut rng, layout.search_dim, 0.6)).map(|(c, n)| c + n).collect();
        let mut classifier = gaussian(&mut rng, layout.classifier_dim, 0.05);
        if !classifier.is_empty() {
            let n = classifier.len();
            classifier[k % n] += 1.0;
        }
        let color = rng.random_range(0..COLORS.len());
        let mut tagger = gaussian(&mut rng, layout.tagger_dim, 0.1);
        if !tagger.is_empty() {
            let n = tagger.len();
            tagger[color % n] += 1.0;
        }
        let mut block: Vec<f32> = classifier.iter().map(|x| *x as f32).collect();
        block.extend(tagger.iter().map(|x| *x as f32));
        block.extend(unit(search));
        embeddings.insert(id, block)?;
        let attribute_tags: BTreeSet<AttributeTag> = [
            AttributeTag::new("color", COLORS[color]),
            AttributeTag::new("pattern", *PATTERNS.choose(&mut rng).expect("patterns")),
        ]
        .into();
        meta.items.push(ItemMeta {
            item_id: ItemId(id),
            sub_category: subs[k].0.to_string(),
            color_tag: Some(COLORS[color].to_string()),
            attribute_tags,
        });
        by_super[slot].push(ItemId(id));
    }

    let window = Duration::days(30);
    for id in 1..=spec.ootds {
        let uploader = users[rng.random_range(0..users.len())].clone();
        let mut slots: Vec<usize> = (0..by_super.len()).filter(|s| !by_super[*s].is_empty()).collect();
        slots.shuffle(&mut rng);
        let take = rng.random_range(2..=4usize).min(slots.len()).max(1);
        let items: Vec<ItemId> = slots[..take].iter().map(|s| *by_super[*s].choose(&mut rng).expect("non-empty")).collect();
        let tag_count = rng.random_range(1..=2);
        let mut tags: BTreeSet<String> = FIXTURE_TAGS.choose_multiple(&mut rng, tag_count).map(|t| t.to_string()).collect();
        let has_jeans = items.iter().any(|i| meta.items[(i.0 - 1) as usize].sub_category == "jeans");
        if has_jeans {
            tags.insert("denim".into());
        }
        let age = Duration::seconds(rng.random_range(0..window.num_seconds()));
        meta.ootds.push(OotdPost::new(OotdId(id), uploader, items, &tags, spec.now - age)?);
    }

    let mut events = Vec::with_capacity(spec.events);
    if !meta.ootds.is_empty() && users.len() > 1 {
        while events.len() < spec.events {
            let ui = rng.random_range(0..users.len());
            let user = &meta.users[ui];
            if rng.random::<f64>() < 0.08 {
                let vi = rng.random_range(0..users.len());
                if vi == ui {
                    continue;
                }
                let at = spec.now - Duration::seconds(rng.random_range(0..window.num_seconds()));
                events.push(InteractionEvent::new(at, user.user_id.clone(), InteractionKind::Follow, users[vi].as_str())?);
                continue;
            }
            let weights: Vec<f64> = meta
                .ootds
                .iter()
                .map(|o| if o.hashtags.iter().any(|t| user.preference_tags.contains(t)) { 4.0 } else { 1.0 })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = meta.ootds.len() - 1;
            for (j, w) in weights.iter().enumerate() {
                if pick < *w {
                    chosen = j;
                    break;
                }
                pick -= w;
            }
            let post = &meta.ootds[chosen];
            if post.uploader_id == user.user_id {
                continue;
            }
            let span = (spec.now - post.created_at).num_seconds().max(1);
            let at = post.created_at + Duration::seconds(rng.random_range(0..span));
            let kind = if rng.random::<f64>() < 0.3 { InteractionKind::Like } else { InteractionKind::View };
            events.push(InteractionEvent::new(at, user.user_id.clone(), kind, &post.ootd_id.to_string())?);
        }
    }
    events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.user_id.cmp(&b.user_id)));
    Ok(IngestBatch { metadata: meta, embeddings: Some(embeddings), events })
}

/// Writes the fixture as the three standard files under `dir`.
pub fn write_fixture_files(
    dir: &Path,
    spec: &FixtureSpec,
    layout: &EmbeddingLayout,
    hierarchy: &CategoryHierarchy,
) -> Result<StoreCounts> {
    let batch = fixture_batch(spec, layout, hierarchy)?;
    let d = DataDir::new(dir);
    std::fs::create_dir_all(dir)?;
    for p in [d.metadata(), d.interactions()] {
        if p.exists() {
            std::fs::remove_file(&p)?;
        }
    }
    let mut records: Vec<MetadataRecord> = Vec::new();
    records.extend(batch.metadata.users.iter().cloned().map(MetadataRecord::User));
    records.extend(batch.metadata.items.iter().cloned().map(MetadataRecord::Item));
    records.extend(batch.metadata.ootds.iter().cloned().map(MetadataRecord::Ootd));
    append_metadata(&d.metadata(), &records)?;
    let embeddings = batch.embeddings.clone().unwrap_or_else(|| EmbeddingSet::new(layout.total()));
    write_embeddings(&d.embeddings(), &embeddings)?;
    append_interactions(&d.interactions(), &batch.events)?;
    Ok(StoreCounts {
        items: batch.metadata.items.len(),
        ootds: batch.metadata.ootds.len(),
        users: batch.metadata.users.len(),
        events: batch.events.len(),
    })
}

/// Random synthetic uploads: one to four garments from distinct
/// super-categories, random shades and one or two fixture hashtags.
pub fn synthetic_uploads(n: usize, seed: u64, uploaders: &[UserId], hierarchy: &CategoryHierarchy) -> Vec<UploadRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subs: Vec<(&str, SuperCategory)> = hierarchy.sub_categories().collect();
    (0..n)
        .map(|_| {
            let mut supers = SuperCategory::ALL.to_vec();
            supers.shuffle(&mut rng);
            let count = rng.random_range(1..=4usize);
            let garments = supers[..count]
                .iter()
                .map(|sc| {
                    let choices: Vec<&str> = subs.iter().filter(|(_, s)| s == sc).map(|(name, _)| *name).collect();
                    SyntheticGarment {
                        sub_category: choices.choose(&mut rng).expect("subs").to_string(),
                        shade: rng.random(),
                    }
                })
                .collect();
            let tag_count = rng.random_range(1..=2);
            let hashtags = FIXTURE_TAGS.choose_multiple(&mut rng, tag_count).map(|t| t.to_string()).collect();
            UploadRequest { uploader: uploaders[rng.random_range(0..uploaders.len())].clone(), hashtags, garments, image: None }
        })
        .collect()
}
