use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::config::RecConfig;
use super::semantic::{semantic_ootd_similarity, semantic_user_similarity};
use super::snapshot::{ActingUser, RecSnapshot};
use super::style::recency_weights;
use super::tfidf::{cfcbf_blend, decay_factor, shrunk_cosine, TfidfProfile};
use crate::error::{Error, Result};
use crate::model::{InteractionKind, OotdId, Segment, Target, UserId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Cf,
    Weekly,
    Segment,
    Latent,
    Graph,
    Popular,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Cf => "cf",
            Source::Weekly => "weekly",
            Source::Segment => "segment",
            Source::Latent => "latent",
            Source::Graph => "graph",
            Source::Popular => "popular",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranked<T> {
    pub id: T,
    pub score: f64,
    pub source: Source,
}

pub type RankedOotd = Ranked<OotdId>;
pub type RankedUser = Ranked<UserId>;

/// Sorts by score descending then id ascending, and keeps the first `k`.
pub fn rank<T: Ord>(mut list: Vec<Ranked<T>>, k: usize) -> Vec<Ranked<T>> {
    list.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    list.truncate(k);
    list
}

/// A request against a snapshot: live events recorded since the build and
/// the request clock.
#[derive(Clone, Copy, Debug)]
pub struct RecContext<'a> {
    pub snapshot: &'a RecSnapshot,
    pub live: &'a [crate::model::InteractionEvent],
    pub now: DateTime<Utc>,
    pub cfg: &'a RecConfig,
}

impl<'a> RecContext<'a> {
    pub fn new(snapshot: &'a RecSnapshot, now: DateTime<Utc>, cfg: &'a RecConfig) -> Self {
        Self { snapshot, live: &[], now, cfg }
    }

    pub fn with_live(mut self, live: &'a [crate::model::InteractionEvent]) -> Self {
        self.live = live;
        self
    }

    pub fn acting_user(&self, u: &UserId) -> Result<ActingUser> {
        self.snapshot.acting_user(u, self.live, self.now, self.cfg)
    }

    /// Likes at or before `now` from the snapshot and the live log.
    fn likes(&self) -> Vec<(OotdId, &'a UserId, DateTime<Utc>)> {
        let mut out: Vec<(OotdId, &UserId, DateTime<Utc>)> = Vec::new();
        for (u, e) in &self.snapshot.users {
            for f in e.feedback.iter().filter(|f| f.kind == InteractionKind::Like) {
                out.push((f.ootd_id, u, f.timestamp));
            }
        }
        for e in self.live.iter().filter(|e| e.kind == InteractionKind::Like) {
            if let Target::Ootd(o) = e.target {
                out.push((o, &e.user_id, e.timestamp));
            }
        }
        out.retain(|(o, _, ts)| *ts <= self.now && self.snapshot.ootds.contains_key(o));
        out
    }
}

/// Blended CF/semantic similarity between two users of the snapshot, from build-time rows and styles.
pub fn cfcbf_user_similarity(snapshot: &RecSnapshot, u1: &UserId, u2: &UserId, cfg: &RecConfig) -> Result<f64> {
    let (a, b) = (snapshot.user(u1)?, snapshot.user(u2)?);
    let empty = TfidfProfile::default();
    let ra = snapshot.tfidf.row(u1).unwrap_or(&empty);
    let rb = snapshot.tfidf.row(u2).unwrap_or(&empty);
    let cf = shrunk_cosine(ra, rb, cfg.shrinkage);
    let sem = semantic_user_similarity(
        a.style.as_deref(),
        &a.preference_tags,
        b.style.as_deref(),
        &b.preference_tags,
        cfg.lambda_u,
    )?;
    Ok(cfcbf_blend(cfg.lambda_cf, cf, sem))
}

/// Blended CF/semantic similarity between the acting user's live state and a snapshot user.
fn acting_similarity(ctx: &RecContext, me: &ActingUser, v: &UserId) -> Result<f64> {
    let other = ctx.snapshot.user(v)?;
    let empty = TfidfProfile::default();
    let rv = ctx.snapshot.tfidf.row(v).unwrap_or(&empty);
    let cf = shrunk_cosine(&me.row, rv, ctx.cfg.shrinkage);
    let sem = semantic_user_similarity(
        me.style.as_deref(),
        &me.preference_tags,
        other.style.as_deref(),
        &other.preference_tags,
        ctx.cfg.lambda_u,
    )?;
    Ok(cfcbf_blend(ctx.cfg.lambda_cf, cf, sem))
}

/// Semantic similarity between two snapshot OOTDs.
pub fn ootd_similarity(snapshot: &RecSnapshot, a: OotdId, b: OotdId, lambda_o: f64) -> Result<f64> {
    let (ea, eb) = (snapshot.ootd(a)?, snapshot.ootd(b)?);
    semantic_ootd_similarity(&ea.style, &ea.hashtags, &eb.style, &eb.hashtags, lambda_o)
}

fn cold_start(me: &ActingUser) -> Result<()> {
    if me.history.is_empty() {
        Err(Error::ColdStart(me.id.0.clone()))
    } else {
        Ok(())
    }
}

/// Top `neighbor_count` users by blended similarity with positive similarity.
pub fn neighbors(ctx: &RecContext, me: &ActingUser) -> Result<Vec<(UserId, f64)>> {
    let mut scored = Vec::new();
    for v in ctx.snapshot.users.keys().filter(|v| **v != me.id) {
        let s = acting_similarity(ctx, me, v)?;
        if s > 0.0 {
            scored.push(Ranked { id: v.clone(), score: s, source: Source::Cf });
        }
    }
    Ok(rank(scored, ctx.cfg.neighbor_count).into_iter().map(|r| (r.id, r.score)).collect())
}

/// User-based list: Σ over neighbors of similarity × the neighbor's decayed
/// TF-IDF weight, skipping OOTDs the user has seen or uploaded.
pub fn recommend_user_based(ctx: &RecContext, me: &ActingUser, k: usize) -> Result<Vec<RankedOotd>> {
    cold_start(me)?;
    let mut scores: BTreeMap<OotdId, f64> = BTreeMap::new();
    for (v, sim) in neighbors(ctx, me)? {
        let Some(row) = ctx.snapshot.tfidf.row(&v) else { continue };
        for (o, w) in &row.weights {
            if !me.excluded(*o) {
                *scores.entry(*o).or_default() += sim * w;
            }
        }
    }
    let list = scores.into_iter().filter(|(_, s)| *s > 0.0).map(|(id, score)| Ranked { id, score, source: Source::Cf });
    Ok(rank(list.collect(), k))
}

/// Item-level blend: shrunk cosine of the OOTDs' user columns mixed with their semantic similarity.
pub fn item_similarity(ctx: &RecContext, me: Option<&ActingUser>, a: OotdId, b: OotdId) -> Result<f64> {
    let acting = me.map(|m| (&m.id, &m.row));
    let cf = ctx.snapshot.tfidf.column_cosine(a, b, ctx.cfg.shrinkage, acting);
    let sem = ootd_similarity(ctx.snapshot, a, b, ctx.cfg.lambda_o)?;
    Ok(cfcbf_blend(ctx.cfg.lambda_cf, cf, sem))
}

/// Item-based list: recency-weighted average of the item-level similarity
/// to the `history` most recent OOTDs, positive scores only.
pub fn recommend_item_based(ctx: &RecContext, me: &ActingUser, k: usize) -> Result<Vec<RankedOotd>> {
    cold_start(me)?;
    let recent: Vec<OotdId> = me.history.iter().take(ctx.cfg.history).copied().collect();
    let weights = recency_weights(ctx.cfg.history, ctx.cfg.alpha, recent.len());
    let total: f64 = weights.iter().sum();
    let mut list = Vec::new();
    for o in ctx.snapshot.ootds.keys().filter(|o| !me.excluded(**o)) {
        let mut score = 0.0;
        for (h, w) in recent.iter().zip(&weights) {
            score += w / total * item_similarity(ctx, Some(me), *o, *h)?;
        }
        if score > 0.0 {
            list.push(Ranked { id: *o, score, source: Source::Cf });
        }
    }
    Ok(rank(list, k))
}

/// The CF-CBF list: user-based and item-based lists interleaved by
/// `user_based_share`.
pub fn cfcbf_list(ctx: &RecContext, me: &ActingUser, k: usize) -> Result<Vec<RankedOotd>> {
    let user = recommend_user_based(ctx, me, k)?;
    let item = recommend_item_based(ctx, me, k)?;
    let share = ctx.cfg.user_based_share;
    Ok(quota_interleave(&[(share, user), (1.0 - share, item)], k))
}

fn by_score_then_recency(ctx: &RecContext, scores: BTreeMap<OotdId, f64>, me: &ActingUser, source: Source) -> Vec<RankedOotd> {
    let mut list: Vec<(OotdId, f64, DateTime<Utc>)> = ctx
        .snapshot
        .ootds
        .iter()
        .filter(|(o, e)| !me.excluded(**o) && e.created_at <= ctx.now)
        .map(|(o, e)| (*o, scores.get(o).copied().unwrap_or(0.0), e.created_at))
        .collect();
    list.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
    list.into_iter().map(|(id, score, _)| Ranked { id, score, source }).collect()
}

/// Every eligible OOTD ranked by decayed likes over the trailing window,
/// then newest first.
pub fn weekly_best(ctx: &RecContext, me: &ActingUser) -> Result<Vec<RankedOotd>> {
    let start = ctx.now - Duration::days(ctx.cfg.weekly_window_days);
    let mut scores: BTreeMap<OotdId, f64> = BTreeMap::new();
    for (o, _, ts) in ctx.likes() {
        if ts > start {
            *scores.entry(o).or_default() += decay_factor(ctx.cfg.beta, ts, ctx.now)?;
        }
    }
    Ok(by_score_then_recency(ctx, scores, me, Source::Weekly))
}

/// Every eligible OOTD ranked by decayed likes from users of `segment`, then newest first.
pub fn segment_best(ctx: &RecContext, me: &ActingUser, segment: Segment) -> Result<Vec<RankedOotd>> {
    let mut scores: BTreeMap<OotdId, f64> = BTreeMap::new();
    for (o, u, ts) in ctx.likes() {
        let Some(entry) = ctx.snapshot.users.get(u) else { continue };
        if entry.demographics.segment(ctx.now) == segment {
            *scores.entry(o).or_default() += decay_factor(ctx.cfg.beta, ts, ctx.now)?;
        }
    }
    Ok(by_score_then_recency(ctx, scores, me, Source::Segment))
}

/// floor(r·k) per source, remaining slots to the largest fractional parts
/// (earlier sources first on ties).
pub fn quotas(ratios: &[f64], k: usize) -> Vec<usize> {
    let total: f64 = ratios.iter().sum();
    if total <= 0.0 {
        return vec![0; ratios.len()];
    }
    let exact: Vec<f64> = ratios.iter().map(|r| r / total * k as f64).collect();
    let mut q: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = k.saturating_sub(q.iter().sum());
    let mut order: Vec<usize> = (0..ratios.len()).filter(|&i| ratios[i] > 0.0).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle().take(order.len() * k.max(1)) {
        if left == 0 {
            break;
        }
        q[i] += 1;
        left -= 1;
    }
    q
}

/// Round-robin over the sources, each taking its next unplaced item until
/// its quota is met; duplicates keep their earliest slot. Slots left by
/// exhausted sources are then filled round-robin from every source with a
/// positive ratio.
pub fn quota_interleave<T: Clone + Ord>(sources: &[(f64, Vec<Ranked<T>>)], k: usize) -> Vec<Ranked<T>> {
    let ratios: Vec<f64> = sources.iter().map(|(r, _)| *r).collect();
    let quota = quotas(&ratios, k);
    let mut cursor = vec![0usize; sources.len()];
    let mut taken = vec![0usize; sources.len()];
    let mut placed: BTreeSet<T> = BTreeSet::new();
    let mut out = Vec::with_capacity(k);
    let next = |i: usize, cursor: &mut Vec<usize>, placed: &mut BTreeSet<T>| -> Option<Ranked<T>> {
        let list = &sources[i].1;
        while cursor[i] < list.len() {
            let item = &list[cursor[i]];
            cursor[i] += 1;
            if placed.insert(item.id.clone()) {
                return Some(item.clone());
            }
        }
        None
    };
    let mut progressed = true;
    while out.len() < k && progressed {
        progressed = false;
        for i in 0..sources.len() {
            if out.len() == k {
                break;
            }
            if taken[i] < quota[i] {
                if let Some(item) = next(i, &mut cursor, &mut placed) {
                    out.push(item);
                    taken[i] += 1;
                    progressed = true;
                }
            }
        }
    }
    progressed = true;
    while out.len() < k && progressed {
        progressed = false;
        for i in (0..sources.len()).filter(|&i| ratios[i] > 0.0) {
            if out.len() == k {
                break;
            }
            if let Some(item) = next(i, &mut cursor, &mut placed) {
                out.push(item);
                progressed = true;
            }
        }
    }
    out
}

/// The weekly/segment interleave served to stale and cold-start users.
pub fn fallback_feed(ctx: &RecContext, me: &ActingUser, k: usize) -> Result<Vec<RankedOotd>> {
    let (w, s) = fallback_ratios(ctx.cfg);
    let weekly = weekly_best(ctx, me)?;
    let segment = segment_best(ctx, me, me.segment)?;
    Ok(quota_interleave(&[(w, weekly), (s, segment)], k))
}

fn fallback_ratios(cfg: &RecConfig) -> (f64, f64) {
    let (w, s) = (cfg.mix.weekly_best, cfg.mix.segment_best);
    if w + s > 0.0 {
        (w / (w + s), s / (w + s))
    } else {
        (0.5, 0.5)
    }
}

/// The curated feed: CF-CBF, weekly best and segment best interleaved by the
/// configured ratios. A user with no interaction weight above `eps_decay`
/// gets the fallback interleave.
pub fn curate_feed(ctx: &RecContext, u: &UserId, k: usize) -> Result<Vec<RankedOotd>> {
    let me = ctx.acting_user(u)?;
    if me.is_stale(ctx.cfg.eps_decay) || ctx.cfg.mix.cfcbf == 0.0 {
        return fallback_feed(ctx, &me, k);
    }
    let cf = cfcbf_list(ctx, &me, k)?;
    let weekly = weekly_best(ctx, &me)?;
    let segment = segment_best(ctx, &me, me.segment)?;
    let mix = ctx.cfg.mix;
    Ok(quota_interleave(&[(mix.cfcbf, cf), (mix.weekly_best, weekly), (mix.segment_best, segment)], k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarOotd {
    pub id: OotdId,
    pub score: f64,
}

/// OOTDs ranked by semantic similarity to `o`.
pub fn similar_ootds(snapshot: &RecSnapshot, o: OotdId, k: usize, cfg: &RecConfig) -> Result<Vec<SimilarOotd>> {
    snapshot.ootd(o)?;
    let mut list = Vec::new();
    for other in snapshot.ootds.keys().filter(|x| **x != o) {
        list.push(Ranked { id: *other, score: ootd_similarity(snapshot, o, *other, cfg.lambda_o)?, source: Source::Cf });
    }
    Ok(rank(list, k).into_iter().map(|r| SimilarOotd { id: r.id, score: r.score }).collect())
}
