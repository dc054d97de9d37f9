use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{CategoryHierarchy, ItemId, SuperCategory};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropLabel {
    pub crop_id: u64,
    pub detector_super: SuperCategory,
    pub classifier_sub: String,
}

/// Keeps crops whose classifier sub-category belongs to the detector's
/// super-category, preserving input order.
pub fn category_consistency_filter(hierarchy: &CategoryHierarchy, crops: &[CropLabel]) -> Result<Vec<u64>> {
    let mut kept = Vec::new();
    for crop in crops {
        if hierarchy.require_super(&crop.classifier_sub)? == crop.detector_super {
            kept.push(crop.crop_id);
        }
    }
    Ok(kept)
}

/// Per-item majority vote on classifier sub-categories: keeps the crops of
/// each item whose sub-category is the most frequent one for that item.
/// Ties go to the lexicographically smallest sub-category.
pub fn majority_sub_category_filter(crops: &[(u64, ItemId, String)]) -> Vec<u64> {
    let mut votes: BTreeMap<ItemId, BTreeMap<&str, usize>> = BTreeMap::new();
    for (_, item, sub) in crops {
        *votes.entry(*item).or_default().entry(sub.as_str()).or_default() += 1;
    }
    let winners: HashMap<ItemId, &str> = votes
        .iter()
        .map(|(item, counts)| {
            let best = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(s, _)| *s)
                .unwrap_or_default();
            (*item, best)
        })
        .collect();
    crops
        .iter()
        .filter(|(_, item, sub)| winners.get(item) == Some(&sub.as_str()))
        .map(|(crop, _, _)| *crop)
        .collect()
}

/// Same-item class used for metric learning.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassLabel {
    pub class_id: u32,
    pub source_item_id: ItemId,
    pub color_tag: Option<String>,
}

/// Assigns one class per distinct `(item, color)` pair, numbered in order of
/// first appearance. Returns one label per input, in input order.
pub fn color_separate(items: &[(ItemId, Option<String>)]) -> Vec<ClassLabel> {
    let mut classes: HashMap<(ItemId, Option<&str>), u32> = HashMap::new();
    items
        .iter()
        .map(|(item, color)| {
            let next = classes.len() as u32;
            let class_id = *classes.entry((*item, color.as_deref())).or_insert(next);
            ClassLabel {
                class_id,
                source_item_id: *item,
                color_tag: color.clone(),
            }
        })
        .collect()
}
