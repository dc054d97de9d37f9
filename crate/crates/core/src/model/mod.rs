//! Domain types, the category hierarchy and the similarity primitives every
//! other module builds on.

mod hierarchy;
mod similarity;
mod types;

pub use hierarchy::{CategoryHierarchy, HierarchyViolation, SuperCategory, SUB_CATEGORY_COUNT};
pub use similarity::{cosine_similarity, jaccard_similarity, l2_norm};
pub use types::*;
