use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ItemId, ItemRecord, OotdId, OotdPost};

/// Arithmetic mean of the concatenated item vectors per sub-category.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubCategoryMeans {
    pub means: BTreeMap<String, Vec<f64>>,
    pub counts: BTreeMap<String, usize>,
}

impl SubCategoryMeans {
    pub fn compute<'a>(items: impl IntoIterator<Item = &'a ItemRecord>) -> Result<Self> {
        let mut sums: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for item in items {
            let v = item.embeddings.item_vector().0;
            let sum = sums.entry(item.sub_category.clone()).or_insert_with(|| vec![0.0; v.len()]);
            if sum.len() != v.len() {
                return Err(Error::DimensionMismatch { expected: sum.len(), found: v.len() });
            }
            sum.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
            *counts.entry(item.sub_category.clone()).or_default() += 1;
        }
        let means = sums
            .into_iter()
            .map(|(sub, sum)| {
                let n = counts[&sub] as f64;
                let mean = sum.into_iter().map(|s| s / n).collect();
                (sub, mean)
            })
            .collect();
        Ok(Self { means, counts })
    }

    pub fn get(&self, sub: &str) -> Result<&[f64]> {
        self.means.get(sub).map(Vec::as_slice).ok_or_else(|| Error::MissingMean(sub.to_string()))
    }
}

/// ṽ = v − v̄ of the item's sub-category.
pub fn item_style_vector(item: &ItemRecord, means: &SubCategoryMeans) -> Result<Vec<f64>> {
    let v = item.embeddings.item_vector().0;
    let mean = means.get(&item.sub_category)?;
    if mean.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: mean.len(), found: v.len() });
    }
    Ok(v.iter().zip(mean).map(|(x, m)| x - m).collect())
}

/// Mean of the style vectors of the outfit's items.
pub fn ootd_style_vector(ootd: &OotdPost, item_styles: &BTreeMap<ItemId, Vec<f64>>) -> Result<Vec<f64>> {
    if ootd.item_ids.is_empty() {
        return Err(Error::contract(format!("ootd {} has no items", ootd.ootd_id)));
    }
    let vectors = ootd
        .item_ids
        .iter()
        .map(|id| item_styles.get(id).ok_or(Error::UnknownItem(id.0)))
        .collect::<Result<Vec<_>>>()?;
    mean_of(&vectors)
}

fn mean_of(vectors: &[&Vec<f64>]) -> Result<Vec<f64>> {
    let dim = vectors[0].len();
    let mut out = vec![0.0; dim];
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
        }
        out.iter_mut().zip(v.iter()).for_each(|(o, x)| *o += x);
    }
    let n = vectors.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// w_m = ((H − m + 1) / H)^α for m = 1..=count, where m = 1 is the most recent.
pub fn recency_weights(history: usize, alpha: f64, count: usize) -> Vec<f64> {
    let h = history as f64;
    (1..=count.min(history)).map(|m| ((h - m as f64 + 1.0) / h).powf(alpha)).collect()
}

/// Recency-weighted average of the style vectors of `recent` (newest first),
/// truncated to the `history` most recent.
pub fn user_style_vector(
    recent: &[OotdId],
    ootd_styles: &BTreeMap<OotdId, Vec<f64>>,
    history: usize,
    alpha: f64,
) -> Result<Option<Vec<f64>>> {
    if recent.is_empty() {
        return Ok(None);
    }
    let weights = recency_weights(history, alpha, recent.len());
    let total: f64 = weights.iter().sum();
    let mut out: Option<Vec<f64>> = None;
    for (o, w) in recent.iter().zip(&weights) {
        let style = ootd_styles.get(o).ok_or(Error::UnknownOotd(o.0))?;
        let acc = out.get_or_insert_with(|| vec![0.0; style.len()]);
        if acc.len() != style.len() {
            return Err(Error::DimensionMismatch { expected: acc.len(), found: style.len() });
        }
        acc.iter_mut().zip(style).for_each(|(a, s)| *a += w / total * s);
    }
    Ok(out)
}
