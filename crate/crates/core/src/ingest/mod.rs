//! Dataset preparation: descriptive-image splitting, perceptual-hash
//! deduplication, label filtering and color separation, plus the loaders for
//! embeddings, interaction logs and metadata.

mod files;
mod labels;
mod phash;
mod raster;

pub use files::*;
pub use labels::{
    category_consistency_filter, color_separate, majority_sub_category_filter, ClassLabel, CropLabel,
};
pub use phash::{average_hash, dedup, dedup_hashes, PerceptualHash};
pub use raster::{split_descriptive_image, RasterImage};
