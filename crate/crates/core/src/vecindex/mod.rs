//! Cosine nearest-neighbor search: HNSW graphs, hash sharding with merged
//! top-k, and the per-super-category catalog that is rebuilt and swapped
//! as a whole.

mod catalog;
mod hnsw;
mod sharded;
mod snapshot;

pub use catalog::{rebuild_catalog, CatalogEntry, IndexCatalog, IndexConfig, LiveCatalog, VectorsBySuper};
pub use hnsw::{rank_order, HnswIndex, HnswParams, ScoredId};
pub use sharded::{merge_top_k, search_sharded, shard_hash, shard_of, ShardedIndex};
pub use snapshot::{SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
