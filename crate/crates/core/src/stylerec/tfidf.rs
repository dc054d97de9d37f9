use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::format_timestamp;
use crate::model::{InteractionEvent, InteractionKind, OotdId, UserId};

/// Weights of the feedback kinds in the term frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindWeights {
    pub view: f64,
    pub like: f64,
}

impl Default for KindWeights {
    fn default() -> Self {
        Self { view: 1.0, like: 3.0 }
    }
}

impl KindWeights {
    pub fn of(&self, kind: InteractionKind) -> f64 {
        match kind {
            InteractionKind::View => self.view,
            InteractionKind::Like => self.like,
            InteractionKind::Upload | InteractionKind::Follow => 0.0,
        }
    }
}

/// Sparse decayed TF-IDF row of one user; an absent key means 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TfidfProfile {
    pub weights: BTreeMap<OotdId, f64>,
}

impl TfidfProfile {
    pub fn get(&self, o: OotdId) -> f64 {
        self.weights.get(&o).copied().unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.weights.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &TfidfProfile) -> f64 {
        let (small, large) =
            if self.weights.len() <= other.weights.len() { (self, other) } else { (other, self) };
        small.weights.iter().map(|(o, w)| w * large.get(*o)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// β^d with d the whole days elapsed from `at` to `now`.
pub fn decay_factor(beta: f64, at: DateTime<Utc>, now: DateTime<Utc>) -> Result<f64> {
    if at > now {
        return Err(Error::FutureEvents {
            now: format_timestamp(&now),
            detail: format!("event at {}", format_timestamp(&at)),
        });
    }
    let days = (now - at).num_days();
    Ok(beta.powi(days.min(i32::MAX as i64) as i32))
}

/// ln((1 + U) / (1 + df)) + 1.
pub fn smoothed_idf(users: usize, df: usize) -> f64 {
    ((1.0 + users as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// dot(r1, r2) / (‖r1‖‖r2‖ + h); 0 when the denominator vanishes.
pub fn shrunk_cosine(r1: &TfidfProfile, r2: &TfidfProfile, h: f64) -> f64 {
    let denom = r1.norm() * r2.norm() + h;
    if denom == 0.0 {
        0.0
    } else {
        r1.dot(r2) / denom
    }
}

/// λ_CF · cf + (1 − λ_CF) · semantic.
pub fn cfcbf_blend(lambda_cf: f64, cf: f64, semantic: f64) -> f64 {
    lambda_cf * cf + (1.0 - lambda_cf) * semantic
}

/// Users as documents, OOTDs as terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub built_at: DateTime<Utc>,
    pub beta: f64,
    pub kind_weights: KindWeights,
    /// Number of users with at least one view or like.
    pub users: usize,
    pub df: BTreeMap<OotdId, usize>,
    pub rows: BTreeMap<UserId, TfidfProfile>,
    /// Transposed rows: OOTD → user → weight.
    pub columns: BTreeMap<OotdId, BTreeMap<UserId, f64>>,
}

/// Rejects events after `now`, listing how many there are and the first few.
pub fn check_not_future<'a>(events: impl IntoIterator<Item = &'a InteractionEvent>, now: DateTime<Utc>) -> Result<()> {
    let future: Vec<&InteractionEvent> = events.into_iter().filter(|e| e.timestamp > now).collect();
    if future.is_empty() {
        return Ok(());
    }
    let sample: Vec<String> = future
        .iter()
        .take(3)
        .map(|e| format!("{} {} {} at {}", e.user_id, e.kind, e.target, format_timestamp(&e.timestamp)))
        .collect();
    Err(Error::FutureEvents {
        now: format_timestamp(&now),
        detail: format!("{} event(s), e.g. {}", future.len(), sample.join("; ")),
    })
}

/// Decayed raw term frequencies of one user's feedback events.
pub fn term_frequencies<'a>(
    events: impl IntoIterator<Item = &'a InteractionEvent>,
    now: DateTime<Utc>,
    beta: f64,
    weights: KindWeights,
) -> Result<BTreeMap<OotdId, f64>> {
    let mut tf: BTreeMap<OotdId, f64> = BTreeMap::new();
    for e in events {
        let Some(o) = e.ootd() else { continue };
        if !e.kind.is_feedback() {
            continue;
        }
        *tf.entry(o).or_default() += weights.of(e.kind) * decay_factor(beta, e.timestamp, now)?;
    }
    Ok(tf)
}

impl TfidfModel {
    pub fn build(events: &[InteractionEvent], now: DateTime<Utc>, beta: f64, weights: KindWeights) -> Result<Self> {
        check_not_future(events, now)?;
        let mut by_user: BTreeMap<&UserId, Vec<&InteractionEvent>> = BTreeMap::new();
        for e in events.iter().filter(|e| e.kind.is_feedback() && e.ootd().is_some()) {
            by_user.entry(&e.user_id).or_default().push(e);
        }
        let mut tfs: BTreeMap<UserId, BTreeMap<OotdId, f64>> = BTreeMap::new();
        let mut df: BTreeMap<OotdId, usize> = BTreeMap::new();
        for (user, evs) in by_user {
            let tf = term_frequencies(evs, now, beta, weights)?;
            for o in tf.keys() {
                *df.entry(*o).or_default() += 1;
            }
            tfs.insert(user.clone(), tf);
        }
        let users = tfs.len();
        let mut rows = BTreeMap::new();
        let mut columns: BTreeMap<OotdId, BTreeMap<UserId, f64>> = BTreeMap::new();
        for (user, tf) in tfs {
            let row: BTreeMap<OotdId, f64> =
                tf.into_iter().map(|(o, t)| (o, t * smoothed_idf(users, df[&o]))).collect();
            for (o, w) in &row {
                columns.entry(*o).or_default().insert(user.clone(), *w);
            }
            rows.insert(user, TfidfProfile { weights: row });
        }
        Ok(Self { built_at: now, beta, kind_weights: weights, users, df, rows, columns })
    }

    pub fn idf(&self, o: OotdId) -> f64 {
        smoothed_idf(self.users, self.df.get(&o).copied().unwrap_or(0))
    }

    /// idf used when re-weighting a live row: an OOTD nobody had interacted
    /// with at build time counts as df = 1, the acting user.
    pub fn live_idf(&self, o: OotdId) -> f64 {
        smoothed_idf(self.users, self.df.get(&o).copied().unwrap_or(1).max(1))
    }

    pub fn row(&self, u: &UserId) -> Option<&TfidfProfile> {
        self.rows.get(u)
    }

    /// Re-weights decayed term frequencies computed at request time with the
    /// build-time document frequencies.
    pub fn reweight(&self, tf: BTreeMap<OotdId, f64>) -> TfidfProfile {
        TfidfProfile { weights: tf.into_iter().map(|(o, t)| (o, t * self.live_idf(o))).collect() }
    }

    /// Shrunk cosine between two OOTD columns, with `acting`'s entries taken
    /// from `live_row` instead of the build-time rows.
    pub fn column_cosine(&self, a: OotdId, b: OotdId, h: f64, acting: Option<(&UserId, &TfidfProfile)>) -> f64 {
        let empty = BTreeMap::new();
        let ca = self.columns.get(&a).unwrap_or(&empty);
        let cb = self.columns.get(&b).unwrap_or(&empty);
        let skip = acting.map(|(u, _)| u);
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (u, wa) in ca {
            if Some(u) == skip {
                continue;
            }
            na += wa * wa;
            if let Some(wb) = cb.get(u) {
                dot += wa * wb;
            }
        }
        for (u, wb) in cb {
            if Some(u) != skip {
                nb += wb * wb;
            }
        }
        if let Some((_, row)) = acting {
            let (wa, wb) = (row.get(a), row.get(b));
            dot += wa * wb;
            na += wa * wa;
            nb += wb * wb;
        }
        let denom = na.sqrt() * nb.sqrt() + h;
        if denom == 0.0 {
            0.0
        } else {
            dot / denom
        }
    }

    pub fn users_of(&self, o: OotdId) -> BTreeSet<&UserId> {
        self.columns.get(&o).map(|c| c.keys().collect()).unwrap_or_default()
    }
}
