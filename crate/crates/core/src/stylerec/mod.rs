//! Style-based recommendation: item, OOTD and user style vectors, semantic
//! and decayed TF-IDF similarities, the curated feed and style-leader
//! suggestion, all read from an immutable [`RecSnapshot`].
//!
//! Term frequency is the decayed raw count Σ kind_weight·β^d over a user's
//! views and likes of an OOTD, with d the whole days since the event. The
//! inverse document frequency treats users as documents and is smoothed as
//! ln((1 + U) / (1 + df)) + 1.

mod config;
mod curate;
mod leaders;
mod semantic;
mod snapshot;
mod style;
mod tfidf;

#[cfg(test)]
mod tests;

pub use config::{FeedMix, LeaderMix, RecConfig};
pub use curate::{
    cfcbf_list, cfcbf_user_similarity, curate_feed, fallback_feed, item_similarity, neighbors, ootd_similarity,
    quota_interleave, quotas, rank, recommend_item_based, recommend_user_based, segment_best, similar_ootds,
    weekly_best, Ranked, RankedOotd, RankedUser, RecContext, SimilarOotd, Source,
};
pub use leaders::{suggest_style_leaders, FollowGraph};
pub use semantic::{semantic_ootd_similarity, semantic_user_similarity};
pub use snapshot::{distinct_history, ActingUser, OotdEntry, RecSnapshot, UserEntry, REC_SNAPSHOT_FORMAT};
pub use style::{item_style_vector, ootd_style_vector, recency_weights, user_style_vector, SubCategoryMeans};
pub use tfidf::{
    cfcbf_blend, check_not_future, decay_factor, shrunk_cosine, smoothed_idf, term_frequencies, KindWeights,
    TfidfModel, TfidfProfile,
};
