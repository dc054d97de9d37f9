use std::collections::BTreeSet;

use crate::error::Result;
use crate::model::{cosine_similarity, jaccard_similarity};

/// λ·cos(style) + (1 − λ)·jaccard(hashtags).
pub fn semantic_ootd_similarity(
    style_a: &[f64],
    tags_a: &BTreeSet<String>,
    style_b: &[f64],
    tags_b: &BTreeSet<String>,
    lambda_o: f64,
) -> Result<f64> {
    let cos = cosine_similarity(style_a, style_b)?;
    Ok(lambda_o * cos + (1.0 - lambda_o) * jaccard_similarity(tags_a, tags_b))
}

/// λ·cos(style) + (1 − λ)·jaccard(preference tags). When either user has
/// no style vector yet, only the tag term is used, i.e. λ is taken as 0.
pub fn semantic_user_similarity(
    style_a: Option<&[f64]>,
    tags_a: &BTreeSet<String>,
    style_b: Option<&[f64]>,
    tags_b: &BTreeSet<String>,
    lambda_u: f64,
) -> Result<f64> {
    let jac = jaccard_similarity(tags_a, tags_b);
    match (style_a, style_b) {
        (Some(a), Some(b)) => Ok(lambda_u * cosine_similarity(a, b)? + (1.0 - lambda_u) * jac),
        _ => Ok(jac),
    }
}
