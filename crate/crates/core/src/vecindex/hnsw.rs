//! Hierarchical navigable small-world graph over unit vectors.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Max neighbors per node on upper layers; layer 0 allows `2 * m`.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 64,
            seed: 0x17_00_2021,
        }
    }
}

impl HnswParams {
    pub fn level_multiplier(&self) -> f64 {
        1.0 / (self.m as f64).ln()
    }

    pub fn max_degree(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }

    fn check(&self) -> Result<()> {
        if self.m < 2 || self.ef_construction == 0 || self.ef_search == 0 {
            return Err(Error::contract(format!("invalid HNSW params {self:?}")));
        }
        Ok(())
    }
}

/// A search hit: external id and cosine score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredId {
    pub id: u64,
    pub score: f32,
}

/// Score descending, id ascending.
pub fn rank_order(a: &ScoredId, b: &ScoredId) -> Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Normalizes in f64 and stores as f32. Returns `None` for zero or non-finite vectors.
pub(crate) fn unit(v: &[f32]) -> Option<Vec<f32>> {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|&x| (x as f64 / norm) as f32).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Cand {
    dist: f32,
    node: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Self { marks: vec![0; n], epoch: 0 }
    }

    fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
    }

    /// Returns true the first time `node` is seen in this epoch.
    fn insert(&mut self, node: u32) -> bool {
        let slot = &mut self.marks[node as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HnswIndex {
    pub(crate) params: HnswParams,
    pub(crate) dim: usize,
    pub(crate) ids: Vec<u64>,
    /// Flat `len × dim` buffer of unit vectors.
    pub(crate) vectors: Vec<f32>,
    /// `links[node][layer]`; a node lives on layers `0..links[node].len()`.
    pub(crate) links: Vec<Vec<Vec<u32>>>,
    pub(crate) entry_point: Option<u32>,
}

impl HnswIndex {
    pub fn empty(dim: usize, params: HnswParams) -> Self {
        Self {
            params,
            dim,
            ids: Vec::new(),
            vectors: Vec::new(),
            links: Vec::new(),
            entry_point: None,
        }
    }

    /// Builds an index. Vectors are normalized; insertion follows ascending
    /// id order and level draws come from `params.seed`, so the same input
    /// always produces the same graph.
    pub fn build(vectors: &BTreeMap<u64, Vec<f32>>, dim: usize, params: HnswParams) -> Result<Self> {
        params.check()?;
        let mut zero = Vec::new();
        let mut units = Vec::with_capacity(vectors.len());
        for (&id, v) in vectors {
            if v.len() != dim {
                return Err(Error::Schema(format!(
                    "vector {id} has dimension {}, index dimension is {dim}",
                    v.len()
                )));
            }
            match unit(v) {
                Some(u) => units.push((id, u)),
                None => zero.push(id),
            }
        }
        if !zero.is_empty() {
            return Err(Error::ZeroVectors(zero));
        }

        let mut index = Self::empty(dim, params);
        index.ids.reserve(units.len());
        index.vectors.reserve(units.len() * dim);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut visited = Visited::new(units.len());
        let ml = params.level_multiplier();
        for (id, u) in units {
            let r: f64 = rng.random();
            let level = (-(1.0 - r).ln() * ml).floor() as usize;
            index.insert(id, &u, level, &mut visited);
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn contains(&self, id: u64) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    /// Stored unit vector for an external id.
    pub fn vector_of(&self, id: u64) -> Option<&[f32]> {
        self.ids.binary_search(&id).ok().map(|n| self.vector(n as u32))
    }

    pub fn top_layer(&self) -> Option<usize> {
        self.entry_point.map(|ep| self.links[ep as usize].len() - 1)
    }

    pub fn vector_bytes(&self) -> usize {
        self.vectors.len() * std::mem::size_of::<f32>()
    }

    pub fn edge_count(&self) -> usize {
        self.links.iter().flatten().map(Vec::len).sum()
    }

    /// Mean number of layers per node.
    pub fn avg_layers(&self) -> f64 {
        if self.links.is_empty() {
            return 0.0;
        }
        self.links.iter().map(Vec::len).sum::<usize>() as f64 / self.links.len() as f64
    }

    #[inline]
    fn vector(&self, node: u32) -> &[f32] {
        let start = node as usize * self.dim;
        &self.vectors[start..start + self.dim]
    }

    #[inline]
    fn dist(&self, q: &[f32], node: u32) -> f32 {
        1.0 - dot(q, self.vector(node))
    }

    fn insert(&mut self, id: u64, v: &[f32], level: usize, visited: &mut Visited) {
        // ids arrive sorted, so internal order matches id order
        let node = self.ids.len() as u32;
        self.ids.push(id);
        self.vectors.extend_from_slice(v);
        self.links.push(vec![Vec::new(); level + 1]);
        visited.reset(self.ids.len());

        let Some(ep) = self.entry_point else {
            self.entry_point = Some(node);
            return;
        };
        let top = self.links[ep as usize].len() - 1;
        let mut ep = Cand { dist: self.dist(v, ep), node: ep };
        for layer in (level + 1..=top).rev() {
            ep = self.greedy(v, ep, layer);
        }

        let mut entries = vec![ep];
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(v, &entries, self.params.ef_construction, layer, visited);
            let neighbors = self.select_neighbors(&found, self.params.m);
            self.links[node as usize][layer] = neighbors.iter().map(|c| c.node).collect();
            for nb in &neighbors {
                self.connect(nb.node, node, layer);
            }
            entries = found;
        }
        if level > top {
            self.entry_point = Some(node);
        }
    }

    fn connect(&mut self, from: u32, to: u32, layer: usize) {
        let cap = self.params.max_degree(layer);
        let list = &mut self.links[from as usize][layer];
        list.push(to);
        if list.len() <= cap {
            return;
        }
        let base = self.vector(from).to_vec();
        let mut cands: Vec<Cand> = self.links[from as usize][layer]
            .iter()
            .map(|&n| Cand { dist: self.dist(&base, n), node: n })
            .collect();
        cands.sort();
        let kept = self.select_neighbors(&cands, cap);
        self.links[from as usize][layer] = kept.into_iter().map(|c| c.node).collect();
    }

    /// Diversity heuristic: a candidate is kept when it is closer to the base
    /// than to every already-kept neighbor. Pruned candidates backfill any
    /// remaining slots. `sorted` must be ordered by distance ascending.
    fn select_neighbors(&self, sorted: &[Cand], m: usize) -> Vec<Cand> {
        let mut kept: Vec<Cand> = Vec::with_capacity(m);
        let mut pruned = Vec::new();
        for &c in sorted {
            if kept.len() >= m {
                break;
            }
            let cv = self.vector(c.node);
            let diverse = kept.iter().all(|k| 1.0 - dot(cv, self.vector(k.node)) > c.dist);
            if diverse {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    fn greedy(&self, q: &[f32], mut cur: Cand, layer: usize) -> Cand {
        loop {
            let mut improved = false;
            for &n in &self.links[cur.node as usize][layer] {
                let d = self.dist(q, n);
                if d < cur.dist {
                    cur = Cand { dist: d, node: n };
                    improved = true;
                }
            }
            if !improved {
                return cur;
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` candidates sorted by distance.
    fn search_layer(&self, q: &[f32], entries: &[Cand], ef: usize, layer: usize, visited: &mut Visited) -> Vec<Cand> {
        visited.reset(self.ids.len());
        let mut frontier: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();
        let mut best: BinaryHeap<Cand> = BinaryHeap::new();
        for &e in entries {
            if visited.insert(e.node) {
                frontier.push(Reverse(e));
                best.push(e);
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(Reverse(c)) = frontier.pop() {
            let worst = best.peek().map_or(f32::INFINITY, |w| w.dist);
            if c.dist > worst && best.len() >= ef {
                break;
            }
            for &n in &self.links[c.node as usize][layer] {
                if !visited.insert(n) {
                    continue;
                }
                let d = self.dist(q, n);
                let worst = best.peek().map_or(f32::INFINITY, |w| w.dist);
                if best.len() < ef || d < worst {
                    let cand = Cand { dist: d, node: n };
                    frontier.push(Reverse(cand));
                    best.push(cand);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    fn check_query(&self, query: &[f32], k: usize) -> Result<Option<Vec<f32>>> {
        if query.len() != self.dim {
            return Err(Error::Schema(format!(
                "query has dimension {}, index dimension is {}",
                query.len(),
                self.dim
            )));
        }
        if k == 0 {
            return Err(Error::contract("k must be at least 1"));
        }
        Ok(unit(query))
    }

    /// Approximate top-`k` by cosine. When `ef_search` covers the whole index
    /// the scan is exhaustive and exact.
    pub fn search(&self, query: &[f32], k: usize, ef_search: usize) -> Result<Vec<ScoredId>> {
        let Some(q) = self.check_query(query, k)? else {
            return Ok(self.zero_query(k));
        };
        let Some(ep) = self.entry_point else {
            return Ok(Vec::new());
        };
        if ef_search >= self.len() {
            return Ok(self.exact_unit(&q, k));
        }
        let top = self.links[ep as usize].len() - 1;
        let mut cur = Cand { dist: self.dist(&q, ep), node: ep };
        for layer in (1..=top).rev() {
            cur = self.greedy(&q, cur, layer);
        }
        let mut visited = Visited::new(self.len());
        let found = self.search_layer(&q, &[cur], ef_search.max(k), 0, &mut visited);
        let mut hits: Vec<ScoredId> = found
            .iter()
            .map(|c| ScoredId { id: self.ids[c.node as usize], score: dot(&q, self.vector(c.node)) })
            .collect();
        hits.sort_by(rank_order);
        hits.truncate(k);
        Ok(hits)
    }

    /// Brute-force top-`k` over every stored vector.
    pub fn exact_search(&self, query: &[f32], k: usize) -> Result<Vec<ScoredId>> {
        match self.check_query(query, k)? {
            Some(q) => Ok(self.exact_unit(&q, k)),
            None => Ok(self.zero_query(k)),
        }
    }

    fn exact_unit(&self, q: &[f32], k: usize) -> Vec<ScoredId> {
        let mut hits: Vec<ScoredId> = (0..self.len() as u32)
            .map(|n| ScoredId { id: self.ids[n as usize], score: dot(q, self.vector(n)) })
            .collect();
        hits.sort_by(rank_order);
        hits.truncate(k);
        hits
    }

    // a zero query is equidistant from everything: score 0, id order
    fn zero_query(&self, k: usize) -> Vec<ScoredId> {
        self.ids.iter().take(k).map(|&id| ScoredId { id, score: 0.0 }).collect()
    }

    /// Walks the whole graph and reports every broken structural invariant.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let n = self.len();
        if self.vectors.len() != n * self.dim {
            problems.push(format!("vector buffer holds {} floats for {n} nodes", self.vectors.len()));
            return problems;
        }
        if self.links.len() != n {
            problems.push(format!("{} link lists for {n} nodes", self.links.len()));
            return problems;
        }
        if self.ids.windows(2).any(|w| w[0] >= w[1]) {
            problems.push("ids are not strictly ascending".into());
        }
        match self.entry_point {
            None if n > 0 => problems.push("non-empty index without entry point".into()),
            Some(ep) if ep as usize >= n => problems.push(format!("entry point {ep} out of range")),
            Some(ep) => {
                let top = self.links[ep as usize].len();
                if let Some(node) = self.links.iter().position(|l| l.len() > top) {
                    problems.push(format!("node {node} is above the entry point's top layer"));
                }
            }
            None => {}
        }
        for node in 0..n {
            let norm = dot(self.vector(node as u32), self.vector(node as u32)).sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                problems.push(format!("node {node} has norm {norm}"));
            }
            if self.links[node].is_empty() {
                problems.push(format!("node {node} is on no layer"));
            }
            for (layer, nbrs) in self.links[node].iter().enumerate() {
                if nbrs.len() > self.params.max_degree(layer) {
                    problems.push(format!("node {node} has degree {} on layer {layer}", nbrs.len()));
                }
                for &nb in nbrs {
                    if nb as usize >= n || nb as usize == node {
                        problems.push(format!("node {node} has bad neighbor {nb} on layer {layer}"));
                    } else if self.links[nb as usize].len() <= layer {
                        // every layer-l node must also exist on layers below it
                        problems.push(format!("node {node} links to {nb} on layer {layer} where it does not live"));
                    }
                }
            }
        }
        problems
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn random_vectors(n: usize, dim: usize, seed: u64) -> BTreeMap<u64, Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n as u64)
            .map(|id| {
                let v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                (id * 3 + 1, v)
            })
            .collect()
    }

    fn small_params() -> HnswParams {
        HnswParams { m: 8, ef_construction: 64, ef_search: 32, seed: 7 }
    }

    #[test]
    fn empty_and_single() {
        let idx = HnswIndex::build(&BTreeMap::new(), 4, small_params()).unwrap();
        assert!(idx.search(&[1.0, 0.0, 0.0, 0.0], 3, 10).unwrap().is_empty());

        let one: BTreeMap<u64, Vec<f32>> = [(42, vec![0.0, 2.0, 0.0, 0.0])].into();
        let idx = HnswIndex::build(&one, 4, small_params()).unwrap();
        for q in [[1.0, 0.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0], [0.3, 0.3, 0.3, 0.3]] {
            let hits = idx.search(&q, 5, 8).unwrap();
            assert_eq!(hits.len(), 1);
            assert_eq!(hits[0].id, 42);
        }
    }

    #[test]
    fn rejects_zero_and_mismatched_vectors() {
        let bad: BTreeMap<u64, Vec<f32>> = [(1, vec![1.0, 0.0]), (2, vec![0.0, 0.0]), (3, vec![0.0; 2])].into();
        match HnswIndex::build(&bad, 2, small_params()) {
            Err(Error::ZeroVectors(ids)) => assert_eq!(ids, vec![2, 3]),
            other => panic!("expected zero-vector error, got {other:?}"),
        }
        let bad: BTreeMap<u64, Vec<f32>> = [(1, vec![1.0, 0.0, 3.0])].into();
        assert!(matches!(HnswIndex::build(&bad, 2, small_params()), Err(Error::Schema(_))));
        let ok: BTreeMap<u64, Vec<f32>> = [(1, vec![1.0, 0.0])].into();
        let idx = HnswIndex::build(&ok, 2, small_params()).unwrap();
        assert!(matches!(idx.search(&[1.0], 1, 4), Err(Error::Schema(_))));
        assert!(idx.search(&[1.0, 0.0], 0, 4).is_err());
    }

    #[test]
    fn self_retrieval_and_large_k() {
        let vectors = random_vectors(300, 16, 1);
        let idx = HnswIndex::build(&vectors, 16, small_params()).unwrap();
        assert!(idx.validate().is_empty(), "{:?}", idx.validate());
        for (id, v) in vectors.iter().take(50) {
            let hits = idx.search(v, 1, 32).unwrap();
            assert_eq!(hits[0].id, *id);
            assert!((hits[0].score - 1.0).abs() < 1e-6);
        }
        let all = idx.search(&vectors[&1], 1000, 32).unwrap();
        assert!(all.len() <= 300);
        let exhaustive = idx.search(&vectors[&1], 1000, 300).unwrap();
        assert_eq!(exhaustive.len(), 300);
        assert!(exhaustive.windows(2).all(|w| rank_order(&w[0], &w[1]) != Ordering::Greater));
    }

    #[test]
    fn thousand_item_recall_against_brute_force() {
        let vectors = random_vectors(1000, 32, 2);
        let params = HnswParams { m: 16, ef_construction: 200, ef_search: 64, seed: 11 };
        let idx = HnswIndex::build(&vectors, 32, params).unwrap();
        let queries = random_vectors(100, 32, 99);
        let mut overlap = 0usize;
        for q in queries.values() {
            let truth: Vec<u64> = brute_force(&vectors, q, 10);
            let got = idx.search(q, 10, 64).unwrap();
            overlap += got.iter().filter(|h| truth.contains(&h.id)).count();
        }
        let avg = overlap as f64 / 100.0;
        assert!(avg >= 9.5, "average overlap {avg}");
    }

    // independent oracle in f64, no shared code with the index
    fn brute_force(vectors: &BTreeMap<u64, Vec<f32>>, q: &[f32], k: usize) -> Vec<u64> {
        let norm = |v: &[f32]| v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        let qn = norm(q);
        let mut scored: Vec<(f64, u64)> = vectors
            .iter()
            .map(|(id, v)| {
                let d: f64 = v.iter().zip(q).map(|(&a, &b)| a as f64 * b as f64).sum();
                (d / (norm(v) * qn), *id)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.into_iter().take(k).map(|(_, id)| id).collect()
    }

    #[test]
    fn deterministic_builds() {
        let vectors = random_vectors(200, 8, 5);
        let a = HnswIndex::build(&vectors, 8, small_params()).unwrap();
        let b = HnswIndex::build(&vectors, 8, small_params()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn memory_accounting() {
        let vectors = random_vectors(500, 12, 6);
        let p = small_params();
        let idx = HnswIndex::build(&vectors, 12, p).unwrap();
        assert_eq!(idx.vector_bytes(), 500 * 12 * 4);
        let bound = 500.0 * (2.0 * p.m as f64 + p.m as f64 * idx.avg_layers());
        assert!((idx.edge_count() as f64) <= bound);
    }

    #[test]
    fn recall_does_not_drop_with_wider_beam() {
        let vectors = random_vectors(3000, 24, 8);
        let params = HnswParams { m: 8, ef_construction: 40, ef_search: 10, seed: 3 };
        let idx = HnswIndex::build(&vectors, 24, params).unwrap();
        let queries = random_vectors(500, 24, 1234);
        let truths: Vec<Vec<u64>> = queries.values().map(|q| brute_force(&vectors, q, 10)).collect();
        let recall = |ef: usize| {
            let mut hit = 0;
            for (q, t) in queries.values().zip(&truths) {
                hit += idx.search(q, 10, ef).unwrap().iter().filter(|h| t.contains(&h.id)).count();
            }
            hit as f64 / (10 * queries.len()) as f64
        };
        let r: Vec<f64> = [10, 40, 160].into_iter().map(recall).collect();
        assert!(r[0] <= r[1] && r[1] <= r[2], "{r:?}");
    }
}
