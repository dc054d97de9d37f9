use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::table::{EmbeddingTable, LabelSet};
use crate::error::{Error, Result};
use crate::vecindex::ShardedIndex;

pub const DEFAULT_KS: [usize; 4] = [1, 5, 10, 20];

/// Something that ranks gallery images for a query vector.
pub trait Gallery: Sync {
    /// Up to `k` gallery ids, nearest first, never including `exclude`.
    fn nearest(&self, query: &[f64], k: usize, exclude: Option<u64>) -> Result<Vec<u64>>;
    fn ids(&self) -> Vec<u64>;
}

/// Exhaustive cosine ranking with ties broken by ascending id.
pub struct ExactGallery {
    ids: Vec<u64>,
    unit: Vec<Vec<f64>>,
}

impl ExactGallery {
    pub fn new(table: &EmbeddingTable, ids: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut out = Self { ids: Vec::new(), unit: Vec::new() };
        let mut ids: Vec<u64> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        for id in ids {
            let row = table.row(id)?;
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            out.unit.push(if norm > 0.0 { row.iter().map(|x| x / norm).collect() } else { row.to_vec() });
            out.ids.push(id);
        }
        Ok(out)
    }
}

impl Gallery for ExactGallery {
    fn nearest(&self, query: &[f64], k: usize, exclude: Option<u64>) -> Result<Vec<u64>> {
        let qn = query.iter().map(|x| x * x).sum::<f64>().sqrt();
        let qn = if qn > 0.0 { qn } else { 1.0 };
        let mut scored: Vec<(f64, u64)> = self
            .ids
            .iter()
            .zip(&self.unit)
            .filter(|(id, _)| Some(**id) != exclude)
            .map(|(id, u)| (u.iter().zip(query).map(|(a, b)| a * b).sum::<f64>() / qn, *id))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().take(k).map(|(_, id)| id).collect())
    }

    fn ids(&self) -> Vec<u64> {
        self.ids.clone()
    }
}

/// Approximate ranking through a vector index.
pub struct IndexGallery<'a> {
    pub index: &'a ShardedIndex,
    pub ef_search: usize,
}

impl Gallery for IndexGallery<'_> {
    fn nearest(&self, query: &[f64], k: usize, exclude: Option<u64>) -> Result<Vec<u64>> {
        let q: Vec<f32> = query.iter().map(|&x| x as f32).collect();
        let want = k + usize::from(exclude.is_some());
        let hits = self.index.search(&q, want, self.ef_search.max(want))?;
        Ok(hits.into_iter().map(|h| h.id).filter(|id| Some(*id) != exclude).take(k).collect())
    }

    fn ids(&self) -> Vec<u64> {
        self.index.ids()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKResult {
    pub k: usize,
    pub accuracy: f64,
    pub n_queries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKReport {
    pub results: Vec<TopKResult>,
    /// Queries left out because the gallery holds no other image of their class.
    pub excluded_queries: usize,
}

impl TopKReport {
    pub fn accuracy(&self, k: usize) -> Option<f64> {
        self.results.iter().find(|r| r.k == k).map(|r| r.accuracy)
    }

    /// One JSON object per k.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let line = serde_json::json!({
                "k": r.k,
                "accuracy": r.accuracy,
                "n_queries": r.n_queries,
                "excluded_queries": self.excluded_queries,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// Fraction of queries with a same-class gallery image in the top k.
///
/// With `leave_one_out` each query is removed from its own ranking, which is
/// how a table is scored against itself. Otherwise queries must not be in
/// the gallery.
pub fn evaluate_topk(
    gallery: &dyn Gallery,
    queries: &[(u64, Vec<f64>)],
    labels: &LabelSet,
    ks: &[usize],
    leave_one_out: bool,
    workers: usize,
) -> Result<TopKReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::contract("ks must be non-empty and positive"));
    }
    let gallery_ids = gallery.ids();
    let mut class_count: BTreeMap<u32, usize> = BTreeMap::new();
    for id in &gallery_ids {
        let class = labels.class_of(*id).ok_or_else(|| Error::contract(format!("gallery image {id} has no label")))?;
        *class_count.entry(class).or_default() += 1;
    }

    let mut eligible = Vec::new();
    let mut excluded = 0;
    for (id, v) in queries {
        let class = labels.class_of(*id).ok_or_else(|| Error::contract(format!("query image {id} has no label")))?;
        let in_gallery = gallery_ids.binary_search(id).is_ok();
        if in_gallery && !leave_one_out {
            return Err(Error::contract(format!("query image {id} is also in the gallery")));
        }
        let available = class_count.get(&class).copied().unwrap_or(0) - usize::from(in_gallery);
        if available == 0 {
            excluded += 1;
        } else {
            eligible.push((*id, class, v.as_slice()));
        }
    }

    let kmax = *ks.iter().max().unwrap_or(&1);
    // rank of the first same-class hit per query, or None when outside kmax
    let first_hit = |chunk: &[(u64, u32, &[f64])]| -> Result<Vec<Option<usize>>> {
        chunk
            .iter()
            .map(|(id, class, v)| {
                let ranked = gallery.nearest(v, kmax, leave_one_out.then_some(*id))?;
                Ok(ranked.iter().position(|g| labels.class_of(*g) == Some(*class)))
            })
            .collect()
    };
    let workers = workers.max(1);
    let chunk = eligible.len().div_ceil(workers).max(1);
    let ranks: Vec<Option<usize>> = std::thread::scope(|s| {
        let handles: Vec<_> = eligible.chunks(chunk).map(|c| s.spawn(move || first_hit(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect();

    let n = ranks.len();
    let results = ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|r| r.is_some_and(|r| r < k)).count();
            TopKResult { k, accuracy: if n == 0 { 0.0 } else { hits as f64 / n as f64 }, n_queries: n }
        })
        .collect();
    Ok(TopKReport { results, excluded_queries: excluded })
}

/// Every labeled image queries all the others.
pub fn self_retrieval_topk(table: &EmbeddingTable, labels: &LabelSet, ks: &[usize]) -> Result<TopKReport> {
    let ids: Vec<u64> = labels.images().map(|(i, _)| i).collect();
    let gallery = ExactGallery::new(table, ids.iter().copied())?;
    let queries: Vec<(u64, Vec<f64>)> = ids.iter().map(|&i| Ok((i, table.row(i)?.to_vec()))).collect::<Result<_>>()?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    evaluate_topk(&gallery, &queries, labels, ks, true, workers)
}
