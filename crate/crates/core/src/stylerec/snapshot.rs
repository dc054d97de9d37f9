use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::config::RecConfig;
use super::style::{item_style_vector, ootd_style_vector, user_style_vector, SubCategoryMeans};
use super::tfidf::{check_not_future, decay_factor, term_frequencies, KindWeights, TfidfModel, TfidfProfile};
use crate::error::{Error, Result};
use crate::ingest::write_atomically;
use crate::model::{
    Demographics, InteractionEvent, InteractionKind, ItemId, ItemRecord, OotdId, OotdPost, RecentInteraction, Segment,
    Target, UserId, UserProfile,
};

pub const REC_SNAPSHOT_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OotdEntry {
    pub uploader: UserId,
    pub hashtags: BTreeSet<String>,
    pub created_at: DateTime<Utc>,
    pub style: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserEntry {
    pub demographics: Demographics,
    pub preference_tags: BTreeSet<String>,
    pub follows: BTreeSet<UserId>,
    /// View and like events, newest first.
    pub feedback: Vec<RecentInteraction>,
    /// Own uploads, newest first.
    pub uploads: Vec<OotdId>,
    /// Style of the recent view/like history; `None` for cold-start users.
    pub style: Option<Vec<f64>>,
    /// Style of the recent upload history.
    pub upload_style: Option<Vec<f64>>,
}

/// Everything the recommender reads, computed by the batch job at `built_at`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecSnapshot {
    pub format: u32,
    pub built_at: DateTime<Utc>,
    pub config: RecConfig,
    pub means: SubCategoryMeans,
    pub item_styles: BTreeMap<ItemId, Vec<f64>>,
    pub ootds: BTreeMap<OotdId, OotdEntry>,
    pub users: BTreeMap<UserId, UserEntry>,
    pub tfidf: TfidfModel,
}

/// Distinct OOTDs of a newest-first feedback list, keeping the newest occurrence.
pub fn distinct_history(feedback: &[RecentInteraction]) -> Vec<OotdId> {
    let mut seen = BTreeSet::new();
    feedback.iter().filter(|f| seen.insert(f.ootd_id)).map(|f| f.ootd_id).collect()
}

fn newest_first(feedback: &mut Vec<RecentInteraction>) {
    feedback.sort_by(|a, b| b.timestamp.cmp(&a.timestamp).then(a.ootd_id.cmp(&b.ootd_id)).then(a.kind.cmp(&b.kind)));
}

fn as_event(user: &UserId, f: &RecentInteraction) -> InteractionEvent {
    InteractionEvent { timestamp: f.timestamp, user_id: user.clone(), kind: f.kind, target: Target::Ootd(f.ootd_id) }
}

fn history_style(
    history: &[OotdId],
    ootds: &BTreeMap<OotdId, OotdEntry>,
    cfg: &RecConfig,
) -> Result<Option<Vec<f64>>> {
    let recent: Vec<OotdId> = history.iter().take(cfg.history).copied().collect();
    let styles: BTreeMap<OotdId, Vec<f64>> = recent
        .iter()
        .map(|o| ootds.get(o).map(|e| (*o, e.style.clone())).ok_or(Error::UnknownOotd(o.0)))
        .collect::<Result<_>>()?;
    user_style_vector(&recent, &styles, cfg.history, cfg.alpha)
}

impl RecSnapshot {
    /// Builds the snapshot. Feedback is the union of the event log and the
    /// profiles' recent interactions; the follow graph is the union of the
    /// profiles' follow sets and follow events.
    pub fn build(
        items: &[ItemRecord],
        ootds: &[OotdPost],
        users: &[UserProfile],
        events: &[InteractionEvent],
        now: DateTime<Utc>,
        cfg: &RecConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        check_not_future(events, now)?;
        let means = SubCategoryMeans::compute(items)?;
        let item_styles: BTreeMap<ItemId, Vec<f64>> =
            items.iter().map(|i| Ok((i.item_id, item_style_vector(i, &means)?))).collect::<Result<_>>()?;
        let mut ootd_entries = BTreeMap::new();
        for o in ootds {
            let style = ootd_style_vector(o, &item_styles)?;
            let entry = OotdEntry {
                uploader: o.uploader_id.clone(),
                hashtags: o.hashtags.clone(),
                created_at: o.created_at,
                style,
            };
            if ootd_entries.insert(o.ootd_id, entry).is_some() {
                return Err(Error::contract(format!("duplicate ootd {}", o.ootd_id)));
            }
        }

        let mut user_entries: BTreeMap<UserId, UserEntry> = BTreeMap::new();
        for p in users {
            let entry = UserEntry {
                demographics: p.demographics,
                preference_tags: p.preference_tags.clone(),
                follows: p.follows.clone(),
                feedback: p.recent_interactions.iter().filter(|r| r.kind.is_feedback()).cloned().collect(),
                uploads: Vec::new(),
                style: None,
                upload_style: None,
            };
            if user_entries.insert(p.user_id.clone(), entry).is_some() {
                return Err(Error::contract(format!("duplicate user '{}'", p.user_id)));
            }
        }
        for e in events {
            let entry = user_entries.get_mut(&e.user_id).ok_or_else(|| Error::UnknownUser(e.user_id.0.clone()))?;
            match &e.target {
                Target::User(v) if e.kind == InteractionKind::Follow => {
                    entry.follows.insert(v.clone());
                }
                Target::Ootd(o) if e.kind.is_feedback() => {
                    if !ootd_entries.contains_key(o) {
                        return Err(Error::UnknownOotd(o.0));
                    }
                    entry.feedback.push(RecentInteraction { ootd_id: *o, kind: e.kind, timestamp: e.timestamp });
                }
                _ => {}
            }
        }
        let known: BTreeSet<UserId> = user_entries.keys().cloned().collect();
        for (u, entry) in &mut user_entries {
            if let Some(stray) = entry.follows.iter().find(|v| !known.contains(*v)) {
                return Err(Error::UnknownUser(stray.0.clone()));
            }
            if let Some(r) = entry.feedback.iter().find(|r| !ootd_entries.contains_key(&r.ootd_id)) {
                return Err(Error::UnknownOotd(r.ootd_id.0));
            }
            if entry.follows.contains(u) {
                return Err(Error::contract(format!("user '{u}' follows themselves")));
            }
            newest_first(&mut entry.feedback);
            entry.feedback.dedup();
        }

        let mut uploads: Vec<(&OotdPost, &UserId)> = ootds.iter().map(|o| (o, &o.uploader_id)).collect();
        uploads.sort_by(|a, b| b.0.created_at.cmp(&a.0.created_at).then(a.0.ootd_id.cmp(&b.0.ootd_id)));
        for (o, u) in uploads {
            user_entries.get_mut(u).ok_or_else(|| Error::UnknownUser(u.0.clone()))?.uploads.push(o.ootd_id);
        }

        let mut all_feedback = Vec::new();
        for (u, entry) in &mut user_entries {
            check_not_future(entry.feedback.iter().map(|f| as_event(u, f)).collect::<Vec<_>>().iter(), now)?;
            entry.style = history_style(&distinct_history(&entry.feedback), &ootd_entries, cfg)?;
            entry.upload_style = history_style(&entry.uploads, &ootd_entries, cfg)?;
            all_feedback.extend(entry.feedback.iter().map(|f| as_event(u, f)));
        }
        let tfidf = TfidfModel::build(&all_feedback, now, cfg.beta, kind_weights(cfg))?;
        Ok(Self {
            format: REC_SNAPSHOT_FORMAT,
            built_at: now,
            config: cfg.clone(),
            means,
            item_styles,
            ootds: ootd_entries,
            users: user_entries,
            tfidf,
        })
    }

    pub fn user(&self, u: &UserId) -> Result<&UserEntry> {
        self.users.get(u).ok_or_else(|| Error::UnknownUser(u.0.clone()))
    }

    pub fn ootd(&self, o: OotdId) -> Result<&OotdEntry> {
        self.ootds.get(&o).ok_or(Error::UnknownOotd(o.0))
    }

    /// Followers of every user, derived from the follow sets.
    pub fn followers(&self) -> BTreeMap<&UserId, BTreeSet<&UserId>> {
        let mut out: BTreeMap<&UserId, BTreeSet<&UserId>> = self.users.keys().map(|u| (u, BTreeSet::new())).collect();
        for (u, e) in &self.users {
            for v in &e.follows {
                out.entry(v).or_default().insert(u);
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomically(path, |w| {
            serde_json::to_writer(&mut *w, self)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let snap: RecSnapshot = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))?;
        if snap.format != REC_SNAPSHOT_FORMAT {
            return Err(Error::parse(
                path,
                1,
                format!("snapshot format {} is not supported (expected {REC_SNAPSHOT_FORMAT})", snap.format),
            ));
        }
        Ok(snap)
    }

    /// State of `u` at request time: the snapshot entry plus `live` events
    /// newer than the snapshot, re-decayed to `now`. OOTDs the snapshot does
    /// not know are skipped until the next rebuild.
    pub fn acting_user(
        &self,
        u: &UserId,
        live: &[InteractionEvent],
        now: DateTime<Utc>,
        cfg: &RecConfig,
    ) -> Result<ActingUser> {
        let entry = self.user(u)?;
        let mine: Vec<&InteractionEvent> = live.iter().filter(|e| &e.user_id == u).collect();
        let mut feedback = entry.feedback.clone();
        let mut follows = entry.follows.clone();
        for e in &mine {
            match &e.target {
                Target::Ootd(o) if e.kind.is_feedback() && self.ootds.contains_key(o) => {
                    feedback.push(RecentInteraction { ootd_id: *o, kind: e.kind, timestamp: e.timestamp })
                }
                Target::User(v) if e.kind == InteractionKind::Follow => {
                    follows.insert(v.clone());
                }
                _ => {}
            }
        }
        newest_first(&mut feedback);
        let as_events: Vec<InteractionEvent> = feedback.iter().map(|f| as_event(u, f)).collect();
        check_not_future(&as_events, now)?;
        let history = distinct_history(&feedback);
        let style = history_style(&history, &self.ootds, cfg)?;
        let row = self.tfidf.reweight(term_frequencies(&as_events, now, cfg.beta, kind_weights(cfg))?);
        let freshness = match feedback.first() {
            Some(f) => decay_factor(cfg.beta, f.timestamp, now)?,
            None => 0.0,
        };
        Ok(ActingUser {
            id: u.clone(),
            segment: entry.demographics.segment(now),
            preference_tags: entry.preference_tags.clone(),
            follows,
            seen: history.iter().copied().collect(),
            own: entry.uploads.iter().copied().collect(),
            history,
            style,
            row,
            freshness,
        })
    }
}

pub(crate) fn kind_weights(cfg: &RecConfig) -> KindWeights {
    KindWeights { view: cfg.view_weight, like: cfg.like_weight }
}

/// The requesting user's state, recomputed per request.
#[derive(Clone, Debug, PartialEq)]
pub struct ActingUser {
    pub id: UserId,
    pub segment: Segment,
    pub preference_tags: BTreeSet<String>,
    pub follows: BTreeSet<UserId>,
    /// Distinct view/like OOTDs, newest first.
    pub history: Vec<OotdId>,
    pub seen: BTreeSet<OotdId>,
    pub own: BTreeSet<OotdId>,
    pub style: Option<Vec<f64>>,
    pub row: TfidfProfile,
    /// Largest β^d over the user's feedback; 0 without feedback.
    pub freshness: f64,
}

impl ActingUser {
    /// True when no interaction weight reaches `eps`, including cold start.
    pub fn is_stale(&self, eps: f64) -> bool {
        self.history.is_empty() || self.freshness < eps
    }

    pub fn excluded(&self, o: OotdId) -> bool {
        self.seen.contains(&o) || self.own.contains(&o)
    }
}
