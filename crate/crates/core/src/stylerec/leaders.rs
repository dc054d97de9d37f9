use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::curate::{quota_interleave, rank, RankedUser, RecContext, Ranked, Source};
use super::snapshot::RecSnapshot;
use crate::error::Result;
use crate::model::{cosine_similarity, InteractionKind, Target, UserId};
use crate::vecindex::shard_hash;

/// Directed follow graph: an edge u → v means u follows v.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FollowGraph {
    out_edges: BTreeMap<UserId, Vec<UserId>>,
    in_edges: BTreeMap<UserId, Vec<UserId>>,
}

impl FollowGraph {
    pub fn from_edges<'a>(edges: impl IntoIterator<Item = (&'a UserId, &'a UserId)>) -> Self {
        let mut out: BTreeMap<UserId, BTreeSet<UserId>> = BTreeMap::new();
        let mut inn: BTreeMap<UserId, BTreeSet<UserId>> = BTreeMap::new();
        for (u, v) in edges {
            if u != v {
                out.entry(u.clone()).or_default().insert(v.clone());
                inn.entry(v.clone()).or_default().insert(u.clone());
            }
        }
        let flatten = |m: BTreeMap<UserId, BTreeSet<UserId>>| m.into_iter().map(|(k, s)| (k, s.into_iter().collect())).collect();
        Self { out_edges: flatten(out), in_edges: flatten(inn) }
    }

    /// Snapshot follow sets plus follow events from the live log.
    pub fn from_context(ctx: &RecContext) -> Self {
        let mut edges: Vec<(&UserId, &UserId)> =
            ctx.snapshot.users.iter().flat_map(|(u, e)| e.follows.iter().map(move |v| (u, v))).collect();
        for e in ctx.live.iter().filter(|e| e.kind == InteractionKind::Follow) {
            if let Target::User(v) = &e.target {
                edges.push((&e.user_id, v));
            }
        }
        Self::from_edges(edges)
    }

    pub fn following(&self, u: &UserId) -> &[UserId] {
        self.out_edges.get(u).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn followers(&self, u: &UserId) -> &[UserId] {
        self.in_edges.get(u).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nodes one walk step can reach from `u`: its followees, or its
    /// followers when it follows nobody.
    pub fn step_choices(&self, u: &UserId) -> &[UserId] {
        let out = self.following(u);
        if out.is_empty() {
            self.followers(u)
        } else {
            out
        }
    }

    /// Endpoints of `walks` two-step walks from `u` with their frequencies.
    /// Walks that get stuck contribute nothing.
    pub fn walk_endpoints(&self, u: &UserId, walks: usize, seed: u64) -> BTreeMap<UserId, usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ shard_hash(fnv1a(u.as_str().as_bytes())));
        let mut counts = BTreeMap::new();
        for _ in 0..walks {
            let first = self.step_choices(u);
            if first.is_empty() {
                break;
            }
            let mid = &first[rng.random_range(0..first.len())];
            let second = self.step_choices(mid);
            if second.is_empty() {
                continue;
            }
            let end = &second[rng.random_range(0..second.len())];
            *counts.entry(end.clone()).or_default() += 1;
        }
        counts
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn follower_counts(snapshot: &RecSnapshot, graph: &FollowGraph) -> BTreeMap<UserId, f64> {
    snapshot.users.keys().map(|u| (u.clone(), graph.followers(u).len() as f64)).collect()
}

/// Suggested style leaders for `u`: latent style matches, two-step walk
/// endpoints, segment peers and popular users, mixed by `leader_mix`. The
/// user and everyone they already follow are never suggested. A user with
/// neither history nor graph neighborhood gets popular users only.
pub fn suggest_style_leaders(ctx: &RecContext, u: &UserId, k: usize) -> Result<Vec<RankedUser>> {
    let me = ctx.acting_user(u)?;
    let graph = FollowGraph::from_context(ctx);
    let eligible = |v: &UserId| v != u && !me.follows.contains(v);

    let mut latent = Vec::new();
    if let Some(style) = &me.style {
        for (v, entry) in ctx.snapshot.users.iter().filter(|(v, _)| eligible(v)) {
            if let Some(uploads) = &entry.upload_style {
                latent.push(Ranked { id: v.clone(), score: cosine_similarity(style, uploads)?, source: Source::Latent });
            }
        }
    }
    let walks = ctx.cfg.walks.max(1);
    let walked: Vec<RankedUser> = graph
        .walk_endpoints(u, walks, ctx.cfg.walk_seed)
        .into_iter()
        .filter(|(v, _)| eligible(v))
        .map(|(id, n)| Ranked { id, score: n as f64 / walks as f64, source: Source::Graph })
        .collect();
    let followers = follower_counts(ctx.snapshot, &graph);
    let popular_of = |filter: &dyn Fn(&UserId) -> bool, source: Source| -> Vec<RankedUser> {
        let list = followers
            .iter()
            .filter(|(v, _)| eligible(v) && filter(v))
            .map(|(id, n)| Ranked { id: id.clone(), score: *n, source })
            .collect();
        rank(list, usize::MAX)
    };
    let popular = popular_of(&|_| true, Source::Popular);
    if latent.is_empty() && walked.is_empty() {
        return Ok(quota_interleave(&[(1.0, popular)], k));
    }
    let segment = popular_of(
        &|v| ctx.snapshot.users.get(v).is_some_and(|e| e.demographics.segment(ctx.now) == me.segment),
        Source::Segment,
    );
    let mix = ctx.cfg.leader_mix;
    Ok(quota_interleave(
        &[
            (mix.latent, rank(latent, usize::MAX)),
            (mix.graph, rank(walked, usize::MAX)),
            (mix.segment, segment),
            (mix.popular, popular),
        ],
        k,
    ))
}
