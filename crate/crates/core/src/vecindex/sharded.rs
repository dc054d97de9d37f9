use std::collections::BTreeMap;

use super::hnsw::{rank_order, HnswIndex, HnswParams, ScoredId};
use crate::error::{Error, Result};

/// splitmix64 finalizer; spreads sequential ids evenly over shards.
pub fn shard_hash(id: u64) -> u64 {
    let mut z = id.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn shard_of(id: u64, shard_count: usize) -> usize {
    (shard_hash(id) % shard_count as u64) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShardedIndex {
    shards: Vec<HnswIndex>,
}

impl ShardedIndex {
    /// Partitions by id hash and builds every shard, one thread per shard.
    pub fn build(vectors: &BTreeMap<u64, Vec<f32>>, dim: usize, params: HnswParams, shard_count: usize) -> Result<Self> {
        if shard_count == 0 {
            return Err(Error::contract("shard count must be at least 1"));
        }
        let mut parts: Vec<BTreeMap<u64, Vec<f32>>> = vec![BTreeMap::new(); shard_count];
        for (&id, v) in vectors {
            parts[shard_of(id, shard_count)].insert(id, v.clone());
        }
        let built: Vec<Result<HnswIndex>> = std::thread::scope(|s| {
            let handles: Vec<_> = parts
                .iter()
                .map(|part| s.spawn(move || HnswIndex::build(part, dim, params)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("shard build panicked")).collect()
        });
        // report every zero vector across shards, not just the first shard's
        let mut zero = Vec::new();
        let mut shards = Vec::with_capacity(shard_count);
        for r in built {
            match r {
                Ok(idx) => shards.push(idx),
                Err(Error::ZeroVectors(ids)) => zero.extend(ids),
                Err(e) => return Err(e),
            }
        }
        if !zero.is_empty() {
            zero.sort_unstable();
            return Err(Error::ZeroVectors(zero));
        }
        Ok(Self { shards })
    }

    pub fn from_shards(shards: Vec<HnswIndex>) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::contract("a sharded index needs at least one shard"));
        }
        let dim = shards[0].dim();
        let n = shards.len();
        for (i, s) in shards.iter().enumerate() {
            if s.dim() != dim {
                return Err(Error::Schema(format!("shard {i} has dimension {}, expected {dim}", s.dim())));
            }
            if let Some(&id) = s.ids().iter().find(|&&id| shard_of(id, n) != i) {
                return Err(Error::Schema(format!("id {id} stored in shard {i} but hashes elsewhere")));
            }
        }
        Ok(Self { shards })
    }

    pub fn shards(&self) -> &[HnswIndex] {
        &self.shards
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    pub fn dim(&self) -> usize {
        self.shards[0].dim()
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(HnswIndex::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: u64) -> bool {
        self.shards[shard_of(id, self.shards.len())].contains(id)
    }

    pub fn vector_of(&self, id: u64) -> Option<&[f32]> {
        self.shards[shard_of(id, self.shards.len())].vector_of(id)
    }

    pub fn ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.shards.iter().flat_map(|s| s.ids().iter().copied()).collect();
        ids.sort_unstable();
        ids
    }

    pub fn default_ef(&self) -> usize {
        self.shards[0].params().ef_search
    }

    /// Queries each shard with `k` and merges. Passing `ef_search >= len()`
    /// makes every shard scan exhaustively.
    pub fn search(&self, query: &[f32], k: usize, ef_search: usize) -> Result<Vec<ScoredId>> {
        if self.shards.len() == 1 {
            return self.shards[0].search(query, k, ef_search);
        }
        let lists = self
            .shards
            .iter()
            .map(|s| s.search(query, k, ef_search))
            .collect::<Result<Vec<_>>>()?;
        Ok(merge_top_k(lists, k))
    }
}

pub fn search_sharded(index: &ShardedIndex, query: &[f32], k: usize, ef_search: usize) -> Result<Vec<ScoredId>> {
    index.search(query, k, ef_search)
}

/// Merges per-shard result lists by (score desc, id asc) and keeps `k`.
pub fn merge_top_k(lists: Vec<Vec<ScoredId>>, k: usize) -> Vec<ScoredId> {
    let mut all: Vec<ScoredId> = lists.into_iter().flatten().collect();
    all.sort_by(rank_order);
    all.dedup_by_key(|h| h.id);
    all.truncate(k);
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn vectors(n: usize, dim: usize, seed: u64) -> BTreeMap<u64, Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n as u64)
            .map(|id| (id + 100, (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()))
            .collect()
    }

    fn params() -> HnswParams {
        HnswParams { m: 8, ef_construction: 48, ef_search: 24, seed: 5 }
    }

    #[test]
    fn shards_partition_ids() {
        let v = vectors(400, 8, 1);
        let s = ShardedIndex::build(&v, 8, params(), 3).unwrap();
        assert_eq!(s.len(), 400);
        assert_eq!(s.ids(), v.keys().copied().collect::<Vec<_>>());
        for id in v.keys() {
            let holders = s.shards().iter().filter(|sh| sh.contains(*id)).count();
            assert_eq!(holders, 1);
            assert!(s.contains(*id));
        }
        assert!(s.shards().iter().all(|sh| !sh.is_empty()));
    }

    #[test]
    fn one_shard_matches_plain_search() {
        let v = vectors(300, 8, 2);
        let plain = HnswIndex::build(&v, 8, params()).unwrap();
        let sharded = ShardedIndex::build(&v, 8, params(), 1).unwrap();
        let q = &v[&150];
        assert_eq!(plain.search(q, 10, 24).unwrap(), sharded.search(q, 10, 24).unwrap());
    }

    #[test]
    fn exhaustive_sharded_matches_brute_force() {
        let v = vectors(500, 8, 3);
        let sharded = ShardedIndex::build(&v, 8, params(), 2).unwrap();
        let queries = vectors(20, 8, 4);
        for q in queries.values() {
            let got: Vec<u64> = sharded.search(q, 10, 500).unwrap().iter().map(|h| h.id).collect();
            // f64 oracle
            let qn = q.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            let mut scored: Vec<(f64, u64)> = v
                .iter()
                .map(|(id, x)| {
                    let xn = x.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
                    let d: f64 = x.iter().zip(q).map(|(&a, &b)| a as f64 * b as f64).sum();
                    (d / (xn * qn), *id)
                })
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let want: Vec<u64> = scored.iter().take(10).map(|p| p.1).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn merge_contract() {
        let a = vec![ScoredId { id: 1, score: 0.9 }, ScoredId { id: 3, score: 0.5 }, ScoredId { id: 5, score: 0.1 }];
        let b = vec![ScoredId { id: 2, score: 0.9 }, ScoredId { id: 4, score: 0.7 }, ScoredId { id: 6, score: 0.2 }];
        let merged = merge_top_k(vec![a, b], 5);
        assert_eq!(merged.iter().map(|h| h.id).collect::<Vec<_>>(), vec![1, 2, 4, 3, 6]);
    }

    #[test]
    fn zero_vectors_reported_across_shards() {
        let mut v = vectors(50, 4, 9);
        for id in [101, 120, 133] {
            v.insert(id, vec![0.0; 4]);
        }
        match ShardedIndex::build(&v, 4, params(), 4) {
            Err(Error::ZeroVectors(ids)) => assert_eq!(ids, vec![101, 120, 133]),
            other => panic!("{other:?}"),
        }
    }
}
