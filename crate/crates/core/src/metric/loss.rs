use std::collections::BTreeMap;

use super::batch::NPairBatch;
use super::table::EmbeddingTable;
use crate::error::{Error, Result};

struct Normalized {
    unit: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

fn normalize_rows(table: &EmbeddingTable, ids: &[u64]) -> Result<Normalized> {
    let mut unit = Vec::with_capacity(ids.len());
    let mut norms = Vec::with_capacity(ids.len());
    for &id in ids {
        let row = table.row(id)?;
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::contract(format!("row {id} has norm {norm}; cosine is undefined")));
        }
        unit.push(row.iter().map(|x| x / norm).collect());
        norms.push(norm);
    }
    Ok(Normalized { unit, norms })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax rows of `S / τ` plus the per-anchor loss, computed with logsumexp.
fn forward(z: &Normalized, p: &Normalized, tau: f64) -> (Vec<Vec<f64>>, f64) {
    let n = z.unit.len();
    let mut probs = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 0..n {
        let logits: Vec<f64> = (0..n).map(|j| dot(&z.unit[i], &p.unit[j]) / tau).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - logits[i];
        probs.push(logits.iter().map(|l| (l - lse).exp()).collect());
    }
    (probs, total / n as f64)
}

/// Mean over anchors of `-log softmax_j(cos(z_i, z_j+) / τ)[i]`.
pub fn nt_xent_loss(table: &EmbeddingTable, batch: &NPairBatch) -> Result<f64> {
    batch.check()?;
    let z = normalize_rows(table, &batch.anchors)?;
    let p = normalize_rows(table, &batch.positives)?;
    Ok(forward(&z, &p, batch.temperature).1)
}

/// Loss together with its gradient for every anchor and positive row.
pub fn nt_xent_loss_and_gradient(table: &EmbeddingTable, batch: &NPairBatch) -> Result<(f64, BTreeMap<u64, Vec<f64>>)> {
    batch.check()?;
    let z = normalize_rows(table, &batch.anchors)?;
    let p = normalize_rows(table, &batch.positives)?;
    let (probs, loss) = forward(&z, &p, batch.temperature);
    let n = batch.n();
    let d = table.dim();
    let scale = 1.0 / (n as f64 * batch.temperature);

    // dL/dS_ij = (P_ij - [i == j]) / (N τ)
    let mut gz = vec![vec![0.0; d]; n];
    let mut gp = vec![vec![0.0; d]; n];
    for i in 0..n {
        for j in 0..n {
            let g = (probs[i][j] - if i == j { 1.0 } else { 0.0 }) * scale;
            for k in 0..d {
                gz[i][k] += g * p.unit[j][k];
                gp[j][k] += g * z.unit[i][k];
            }
        }
    }

    let mut grads = BTreeMap::new();
    for (ids, g, norm) in [(&batch.anchors, gz, &z), (&batch.positives, gp, &p)] {
        for (idx, gi) in g.into_iter().enumerate() {
            grads.insert(ids[idx], through_normalization(&norm.unit[idx], norm.norms[idx], &gi));
        }
    }
    Ok((loss, grads))
}

/// Gradient w.r.t. the raw row x for x̂ = x / |x|: (g - x̂ (x̂·g)) / |x|.
fn through_normalization(unit: &[f64], norm: f64, g: &[f64]) -> Vec<f64> {
    let proj = dot(unit, g);
    unit.iter().zip(g).map(|(u, gi)| (gi - u * proj) / norm).collect()
}

pub fn nt_xent_gradient(table: &EmbeddingTable, batch: &NPairBatch) -> Result<BTreeMap<u64, Vec<f64>>> {
    Ok(nt_xent_loss_and_gradient(table, batch)?.1)
}
