//! Desk-scale stand-ins for a crawled training set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::eval::self_retrieval_topk;
use super::table::{EmbeddingTable, LabelSet};
use super::train::{train, TrainConfig};
use crate::error::Result;
use crate::ingest::color_separate;
use crate::model::ItemId;

/// `classes × per_class` images with random rows; image `c * per_class + j`
/// belongs to class `c`.
pub fn random_classes(classes: u32, per_class: u64, dim: usize, seed: u64) -> Result<(EmbeddingTable, LabelSet)> {
    let labels = LabelSet::new(
        (0..classes).flat_map(|c| (0..per_class).map(move |j| (c as u64 * per_class + j, c, None))),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = EmbeddingTable::random(labels.images().map(|(i, _)| i), dim, &mut rng)?;
    Ok((table, labels))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorExperimentConfig {
    pub items: u64,
    pub colors_per_item: u64,
    pub images_per_color: u64,
    pub dim: usize,
    /// Offset on the coordinate that encodes color, relative to a unit base row.
    pub color_strength: f64,
    /// Expected norm of the per-image noise.
    pub noise: f64,
    pub train: TrainConfig,
}

impl Default for ColorExperimentConfig {
    fn default() -> Self {
        Self {
            items: 100,
            colors_per_item: 2,
            images_per_color: 2,
            dim: 32,
            color_strength: 0.3,
            noise: 0.5,
            train: TrainConfig { epochs: 40, batch_size: 16, ..Default::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColorVariantData {
    pub table: EmbeddingTable,
    /// One class per retail item.
    pub merged: LabelSet,
    /// One class per (item, color) pair.
    pub separated: LabelSet,
}

/// Images of color variants. A row is the item's base vector plus a color
/// code on dedicated coordinates plus noise, so color is linearly separable
/// but weak compared with item identity.
pub fn color_variant_data(cfg: &ColorExperimentConfig, seed: u64) -> Result<ColorVariantData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable::new(cfg.dim)?;
    let mut tagged: Vec<(u64, ItemId, Option<String>)> = Vec::new();
    let color_dims = (cfg.colors_per_item as usize).min(cfg.dim);
    let mut next_image = 0u64;
    // base rows and noise have expected norms 1 and `noise`
    let coord_scale = 1.0 / (cfg.dim as f64).sqrt();
    for item in 0..cfg.items {
        let base: Vec<f64> = (0..cfg.dim)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                e * coord_scale
            })
            .collect();
        for color in 0..cfg.colors_per_item {
            for _ in 0..cfg.images_per_color {
                let mut row: Vec<f64> = base
                    .iter()
                    .map(|b| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        b + cfg.noise * coord_scale * e
                    })
                    .collect();
                row[color as usize % color_dims] += cfg.color_strength * (1.0 + rng.random::<f64>() * 0.1);
                table.insert(next_image, row)?;
                tagged.push((next_image, ItemId(item), Some(format!("color{color}"))));
                next_image += 1;
            }
        }
    }
    let with_color: Vec<(ItemId, Option<String>)> = tagged.iter().map(|(_, i, c)| (*i, c.clone())).collect();
    let without_color: Vec<(ItemId, Option<String>)> = tagged.iter().map(|(_, i, _)| (*i, None)).collect();
    let build = |classes: Vec<crate::ingest::ClassLabel>| {
        LabelSet::new(tagged.iter().zip(classes).map(|((img, _, _), l)| (*img, l.class_id, None)))
    };
    Ok(ColorVariantData {
        merged: build(color_separate(&without_color))?,
        separated: build(color_separate(&with_color))?,
        table,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorSeparationResult {
    pub seed: u64,
    pub separated_top1: f64,
    pub merged_top1: f64,
}

/// Trains once with item-level labels and once with color-separated labels
/// from the same start, then scores both by top-1 with exact-variant ground
/// truth, where only the same item in the same color counts as a hit.
pub fn run_color_separation(cfg: &ColorExperimentConfig, seed: u64) -> Result<ColorSeparationResult> {
    let data = color_variant_data(cfg, seed)?;
    let tcfg = TrainConfig { seed, ..cfg.train.clone() };
    let merged = train(&data.table, &data.merged, &tcfg)?;
    let separated = train(&data.table, &data.separated, &tcfg)?;
    let top1 = |t: &EmbeddingTable| -> Result<f64> {
        Ok(self_retrieval_topk(t, &data.separated, &[1])?.accuracy(1).unwrap_or(0.0))
    };
    Ok(ColorSeparationResult { seed, separated_top1: top1(&separated.table)?, merged_top1: top1(&merged.table)? })
}
