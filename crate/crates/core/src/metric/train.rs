use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{draw_pair, sample_npair_batch, NPairBatch, SamplingWeights};
use super::loss::{nt_xent_loss, nt_xent_loss_and_gradient};
use super::table::{EmbeddingTable, LabelSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Pairs per batch.
    pub batch_size: usize,
    pub temperature: f64,
    pub lr: f64,
    pub epochs: usize,
    pub weights: SamplingWeights,
    pub seed: u64,
    /// Fixed batches, drawn once, on which the loss curve is measured.
    pub probe_batches: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            temperature: 0.1,
            lr: 0.1,
            epochs: 100,
            weights: SamplingWeights::default(),
            seed: 0,
            probe_batches: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub table: EmbeddingTable,
    /// Probe loss before training followed by one value per epoch.
    pub loss_curve: Vec<f64>,
    /// Running minimum of `loss_curve`.
    pub smoothed_curve: Vec<f64>,
    /// Mean training-batch loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

/// Resamples the class pool for one epoch: a class of weight w appears
/// floor(w) times plus once more with probability frac(w). The shuffled pool
/// is cut into batches whose classes are distinct.
pub fn epoch_batches<R: Rng>(labels: &LabelSet, cfg: &TrainConfig, rng: &mut R) -> Result<Vec<NPairBatch>> {
    let mut pool = Vec::new();
    for class in labels.pairable_classes() {
        let w = cfg.weights.class_weight(labels, class);
        let mut copies = w.floor() as usize;
        if rng.random::<f64>() < w.fract() {
            copies += 1;
        }
        pool.extend(std::iter::repeat_n(class, copies));
    }
    pool.shuffle(rng);

    let mut groups: Vec<Vec<u32>> = Vec::new();
    let mut current: Vec<u32> = Vec::with_capacity(cfg.batch_size);
    let mut deferred: Vec<u32> = Vec::new();
    for class in pool {
        if current.contains(&class) {
            deferred.push(class);
            continue;
        }
        current.push(class);
        if current.len() == cfg.batch_size {
            groups.push(std::mem::take(&mut current));
            // deferred classes get first claim on the next batch
            let mut still = Vec::new();
            for c in deferred.drain(..) {
                if current.len() < cfg.batch_size && !current.contains(&c) {
                    current.push(c);
                } else {
                    still.push(c);
                }
            }
            deferred = still;
            if current.len() == cfg.batch_size {
                groups.push(std::mem::take(&mut current));
            }
        }
    }
    if current.len() >= 2 {
        groups.push(current);
    }

    groups
        .into_iter()
        .map(|classes| {
            let (anchors, positives) = classes.iter().map(|&c| draw_pair(labels, c, rng)).unzip();
            NPairBatch::new(anchors, positives, cfg.temperature)
        })
        .collect()
}

/// Plain SGD on the table. Deterministic for a fixed seed.
pub fn train(table: &EmbeddingTable, labels: &LabelSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.batch_size < 2 {
        return Err(Error::contract("batch size must be at least 2"));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::contract(format!("learning rate must be finite and non-negative, got {}", cfg.lr)));
    }
    cfg.weights.check()?;
    for (image, _) in labels.images() {
        table.row(image)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_probe = cfg.batch_size.min(labels.pairable_classes().len());
    let probes = (0..cfg.probe_batches)
        .map(|_| sample_npair_batch(labels, n_probe, cfg.temperature, &SamplingWeights::default(), &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let probe_loss = |t: &EmbeddingTable| -> Result<f64> {
        if probes.is_empty() {
            return Ok(f64::NAN);
        }
        let mut sum = 0.0;
        for b in &probes {
            sum += nt_xent_loss(t, b)?;
        }
        Ok(sum / probes.len() as f64)
    };

    let mut table = table.clone();
    let mut loss_curve = vec![probe_loss(&table)?];
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(labels, cfg, &mut rng)?;
        let mut sum = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let degenerate = batch.anchors.iter().chain(&batch.positives).find(|id| {
                let sq: f64 = table.get(**id).map_or(1.0, |r| r.iter().map(|x| x * x).sum());
                sq == 0.0 || !sq.is_finite()
            });
            if let Some(id) = degenerate {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    detail: format!("row {id} has a zero or non-finite norm, lr {}, temperature {}", cfg.lr, cfg.temperature),
                });
            }
            let (loss, grads) = nt_xent_loss_and_gradient(&table, batch)?;
            let bad_grad = grads.values().flatten().any(|g| !g.is_finite());
            let bad_step = grads
                .iter()
                .any(|(id, g)| table.row(*id).is_ok_and(|r| r.iter().zip(g).any(|(x, gx)| !(x - cfg.lr * gx).is_finite())));
            if !loss.is_finite() || bad_grad || bad_step {
                let max_norm = table
                    .rows()
                    .values()
                    .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    detail: format!(
                        "loss {loss}, non-finite gradient {bad_grad}, non-finite step {bad_step}, lr {}, temperature {}, largest row norm {max_norm:.3e}",
                        cfg.lr, cfg.temperature
                    ),
                });
            }
            table.apply_gradient(&grads, cfg.lr)?;
            sum += loss;
            steps += 1;
        }
        epoch_loss.push(if batches.is_empty() { f64::NAN } else { sum / batches.len() as f64 });
        let probe = probe_loss(&table).map_err(|e| Error::Diverged {
            epoch,
            batch: batches.len(),
            detail: format!("probe loss failed: {e}, lr {}", cfg.lr),
        })?;
        loss_curve.push(probe);
    }
    let smoothed_curve = loss_curve
        .iter()
        .scan(f64::INFINITY, |m, &l| {
            *m = m.min(l);
            Some(*m)
        })
        .collect();
    Ok(TrainOutcome { table, loss_curve, smoothed_curve, epoch_loss, steps })
}
