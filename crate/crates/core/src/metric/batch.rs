use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample_weighted;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::table::LabelSet;
use crate::error::{Error, Result};

/// N anchor/positive pairs; the positives of other pairs act as negatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NPairBatch {
    pub anchors: Vec<u64>,
    pub positives: Vec<u64>,
    pub temperature: f64,
}

impl NPairBatch {
    pub fn new(anchors: Vec<u64>, positives: Vec<u64>, temperature: f64) -> Result<Self> {
        let batch = Self { anchors, positives, temperature };
        batch.check()?;
        Ok(batch)
    }

    pub fn n(&self) -> usize {
        self.anchors.len()
    }

    pub fn check(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::contract(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.anchors.len() != self.positives.len() {
            return Err(Error::contract("anchors and positives differ in length"));
        }
        if self.anchors.len() < 2 {
            return Err(Error::contract("an N-pair batch needs N >= 2"));
        }
        let distinct: BTreeSet<u64> = self.anchors.iter().chain(&self.positives).copied().collect();
        if distinct.len() != 2 * self.anchors.len() {
            return Err(Error::contract("batch images must be distinct"));
        }
        Ok(())
    }

    /// Checks that each pair shares a class and that the N classes differ.
    pub fn check_labels(&self, labels: &LabelSet) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (&a, &p) in self.anchors.iter().zip(&self.positives) {
            let ca = labels.class_of(a).ok_or_else(|| Error::contract(format!("image {a} has no label")))?;
            if labels.class_of(p) != Some(ca) {
                return Err(Error::contract(format!("images {a} and {p} are not in the same class")));
            }
            if !seen.insert(ca) {
                return Err(Error::contract(format!("class {ca} appears twice in the batch")));
            }
        }
        Ok(())
    }
}

/// Per-source multipliers for under/over-sampling. Sources not listed weigh 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingWeights(pub BTreeMap<String, f64>);

impl SamplingWeights {
    pub fn weight(&self, source: &str) -> f64 {
        self.0.get(source).copied().unwrap_or(1.0)
    }

    pub fn check(&self) -> Result<()> {
        match self.0.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            Some((s, w)) => Err(Error::contract(format!("sampling weight for '{s}' is {w}"))),
            None => Ok(()),
        }
    }

    pub fn class_weight(&self, labels: &LabelSet, class: u32) -> f64 {
        self.weight(labels.class_source(class).unwrap_or_default())
    }
}

/// Picks a positive pair from a class: two distinct images, uniformly.
pub(crate) fn draw_pair<R: Rng>(labels: &LabelSet, class: u32, rng: &mut R) -> (u64, u64) {
    let images = labels.images_of(class);
    let pair = rand::seq::index::sample(rng, images.len(), 2);
    (images[pair.index(0)], images[pair.index(1)])
}

/// N distinct classes drawn without replacement, each with probability
/// proportional to its source weight, then one anchor/positive pair per class.
pub fn sample_npair_batch<R: Rng>(
    labels: &LabelSet,
    n: usize,
    temperature: f64,
    weights: &SamplingWeights,
    rng: &mut R,
) -> Result<NPairBatch> {
    weights.check()?;
    if n < 2 {
        return Err(Error::contract("an N-pair batch needs N >= 2"));
    }
    let candidates: Vec<(u32, f64)> = labels
        .pairable_classes()
        .into_iter()
        .map(|c| (c, weights.class_weight(labels, c)))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    if candidates.len() < n {
        return Err(Error::Sampling(format!(
            "need {n} classes with at least two images, found {}",
            candidates.len()
        )));
    }
    let picked = sample_weighted(rng, candidates.len(), |i| candidates[i].1, n)
        .map_err(|e| Error::Sampling(e.to_string()))?;
    let (mut anchors, mut positives) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in picked.iter() {
        let (a, p) = draw_pair(labels, candidates[i].0, rng);
        anchors.push(a);
        positives.push(p);
    }
    NPairBatch::new(anchors, positives, temperature)
}
