use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;

use super::*;
use crate::error::Error;
use crate::model::{
    CategoryHierarchy, Demographics, EmbeddingLayout, Gender, InteractionEvent, InteractionKind, ItemEmbeddings, ItemId,
    ItemMeta, ItemRecord, OotdId, OotdPost, UserId, UserProfile,
};

fn now() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 5, 1, 12, 0, 0).unwrap()
}

fn uid(s: &str) -> UserId {
    UserId::new(s)
}

#[derive(Default, Clone)]
struct Fx {
    items: Vec<ItemRecord>,
    ootds: Vec<OotdPost>,
    users: Vec<UserProfile>,
    events: Vec<InteractionEvent>,
}

impl Fx {
    fn user(&mut self, id: &str, gender: Gender, birth_year: i32, tags: &[&str]) -> &mut Self {
        let mut p = UserProfile::new(uid(id), Demographics { gender, birth_year });
        p.preference_tags = tags.iter().map(|t| t.to_string()).collect();
        self.users.push(p);
        self
    }

    fn ootd(&mut self, id: u64, uploader: &str, v: [f32; 4], tags: &[&str], days_ago: i64) -> &mut Self {
        let layout = EmbeddingLayout { classifier_dim: 0, tagger_dim: 0, search_dim: 4 };
        let meta = ItemMeta {
            item_id: ItemId(id),
            sub_category: "t-shirt".into(),
            color_tag: None,
            attribute_tags: Default::default(),
        };
        let emb = ItemEmbeddings { classifier: vec![], tagger: vec![], search: v.to_vec() };
        self.items.push(ItemRecord::new(meta, emb, &layout, &CategoryHierarchy::default()).unwrap());
        self.ootds.push(OotdPost {
            ootd_id: OotdId(id),
            uploader_id: uid(uploader),
            item_ids: vec![ItemId(id)],
            hashtags: tags.iter().map(|t| t.to_string()).collect(),
            created_at: now() - Duration::days(days_ago),
        });
        self
    }

    fn ev(&mut self, user: &str, kind: InteractionKind, o: u64, days_ago: i64) -> &mut Self {
        let ts = now() - Duration::days(days_ago);
        self.events.push(InteractionEvent::new(ts, uid(user), kind, &o.to_string()).unwrap());
        self
    }

    fn follow(&mut self, u: &str, v: &str) -> &mut Self {
        self.events.push(InteractionEvent::new(now(), uid(u), InteractionKind::Follow, v).unwrap());
        self
    }

    fn scaled(&self, c: f32) -> Fx {
        let mut out = self.clone();
        for it in &mut out.items {
            it.embeddings.search.iter_mut().for_each(|x| *x *= c);
        }
        out
    }

    fn snapshot(&self, cfg: &RecConfig) -> RecSnapshot {
        RecSnapshot::build(&self.items, &self.ootds, &self.users, &self.events, now(), cfg).unwrap()
    }
}

/// A, B and D are in the same segment; A and B share two OOTDs and B also liked o9.
fn three_users() -> Fx {
    let mut fx = Fx::default();
    fx.user("A", Gender::Female, 1995, &["casual", "denim"])
        .user("B", Gender::Female, 1996, &["casual", "denim"])
        .user("C", Gender::Male, 1980, &["formal"])
        .user("D", Gender::Female, 1994, &["street"])
        .user("E", Gender::Male, 1990, &[]);
    fx.ootd(1, "E", [1.0, 0.0, 0.0, 0.0], &["casual"], 20)
        .ootd(2, "E", [0.0, 1.0, 0.0, 0.0], &["denim"], 19)
        .ootd(5, "E", [0.0, 0.0, 0.0, 1.0], &["formal"], 18)
        .ootd(7, "D", [0.2, 0.9, 0.0, 0.0], &["denim", "street"], 3)
        .ootd(8, "D", [0.0, 0.0, 0.5, 0.5], &["street"], 2)
        .ootd(9, "E", [0.0, 0.0, 1.0, 0.0], &["casual"], 10);
    fx.ev("A", InteractionKind::View, 1, 1)
        .ev("A", InteractionKind::View, 2, 2)
        .ev("B", InteractionKind::View, 1, 1)
        .ev("B", InteractionKind::View, 2, 1)
        .ev("B", InteractionKind::Like, 9, 2)
        .ev("C", InteractionKind::View, 5, 3)
        .ev("D", InteractionKind::Like, 8, 1)
        .ev("C", InteractionKind::Like, 7, 2);
    fx
}

#[test]
fn user_based_ranks_the_neighbors_like_first() {
    let cfg = RecConfig::default();
    let snap = three_users().snapshot(&cfg);
    let ctx = RecContext::new(&snap, now(), &cfg);
    let me = ctx.acting_user(&uid("A")).unwrap();
    let list = recommend_user_based(&ctx, &me, 10).unwrap();
    assert_eq!(list[0].id, OotdId(9), "{list:?}");
    assert!(list.iter().all(|r| r.id != OotdId(1) && r.id != OotdId(2)));
    assert!(list.windows(2).all(|w| w[0].score >= w[1].score));
}

#[test]
fn seen_and_own_never_recommended() {
    let cfg = RecConfig::default();
    let snap = three_users().snapshot(&cfg);
    let ctx = RecContext::new(&snap, now(), &cfg);
    for u in ["A", "B", "C", "D"] {
        let me = ctx.acting_user(&uid(u)).unwrap();
        let mut lists = recommend_user_based(&ctx, &me, 10).unwrap();
        lists.extend(recommend_item_based(&ctx, &me, 10).unwrap());
        lists.extend(curate_feed(&ctx, &uid(u), 10).unwrap());
        for r in lists {
            assert!(!me.seen.contains(&r.id) && !me.own.contains(&r.id), "{u}: {r:?}");
        }
    }
}

#[test]
fn single_user_has_no_neighbors_and_cold_start_is_signalled() {
    let mut fx = Fx::default();
    fx.user("A", Gender::Female, 1990, &["x"]).ootd(1, "A", [1.0, 0.0, 0.0, 0.0], &[], 1).ootd(
        2,
        "A",
        [0.0, 1.0, 0.0, 0.0],
        &[],
        1,
    );
    fx.ev("A", InteractionKind::View, 1, 0);
    let cfg = RecConfig::default();
    let snap = fx.snapshot(&cfg);
    let ctx = RecContext::new(&snap, now(), &cfg);
    let me = ctx.acting_user(&uid("A")).unwrap();
    assert!(recommend_user_based(&ctx, &me, 5).unwrap().is_empty());

    let snap = three_users().snapshot(&cfg);
    let ctx = RecContext::new(&snap, now(), &cfg);
    let cold = ctx.acting_user(&uid("E")).unwrap();
    assert!(matches!(recommend_user_based(&ctx, &cold, 5), Err(Error::ColdStart(u)) if u == "E"));
    assert!(matches!(recommend_item_based(&ctx, &cold, 5), Err(Error::ColdStart(_))));
    // the feed still serves something
    assert!(!curate_feed(&ctx, &uid("E"), 5).unwrap().is_empty());
}

#[test]
fn item_based_prefers_similar_outfits() {
    let cfg = RecConfig::default();
    let snap = three_users().snapshot(&cfg);
    let ctx = RecContext::new(&snap, now(), &cfg);
    let me = ctx.acting_user(&uid("A")).unwrap();
    // B co-viewed o9 with A's history, so the CF term puts it first
    let list = recommend_item_based(&ctx, &me, 10).unwrap();
    assert_eq!(ids(&list), vec![OotdId(9), OotdId(7)], "{list:?}");
    // on semantics alone o7, sharing the denim tag and most of o2's style, wins
    let semantic = RecConfig { lambda_cf: 0.0, ..cfg.clone() };
    let ctx = RecContext::new(&snap, now(), &semantic);
    let list = recommend_item_based(&ctx, &me, 10).unwrap();
    assert_eq!(list[0].id, OotdId(7), "{list:?}");
}

fn plain_cosine(a: &TfidfProfile, b: &TfidfProfile) -> f64 {
    let keys: BTreeSet<&OotdId> = a.weights.keys().chain(b.weights.keys()).collect();
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for k in keys {
        let (x, y) = (a.weights.get(k).copied().unwrap_or(0.0), b.weights.get(k).copied().unwrap_or(0.0));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

#[test]
fn blend_endpoints_are_exact() {
    let base = RecConfig::default();
    let snap = three_users().snapshot(&base);
    let users: Vec<UserId> = ["A", "B", "C", "D"].iter().map(|u| uid(u)).collect();
    for u1 in &users {
        for u2 in &users {
            let cf_only = RecConfig { lambda_cf: 1.0, shrinkage: 0.0, ..base.clone() };
            let expected = plain_cosine(snap.tfidf.row(u1).unwrap(), snap.tfidf.row(u2).unwrap());
            assert_eq!(cfcbf_user_similarity(&snap, u1, u2, &cf_only).unwrap(), expected);

            let sem_only = RecConfig { lambda_cf: 0.0, ..base.clone() };
            let (e1, e2) = (snap.user(u1).unwrap(), snap.user(u2).unwrap());
            let sem = semantic_user_similarity(
                e1.style.as_deref(),
                &e1.preference_tags,
                e2.style.as_deref(),
                &e2.preference_tags,
                base.lambda_u,
            )
            .unwrap();
            assert_eq!(cfcbf_user_similarity(&snap, u1, u2, &sem_only).unwrap(), sem);
        }
    }
    let identical = RecConfig { lambda_cf: 1.0, shrinkage: 0.0, ..base.clone() };
    assert!((cfcbf_user_similarity(&snap, &uid("A"), &uid("A"), &identical).unwrap() - 1.0).abs() < 1e-12);
    let h10 = RecConfig { lambda_cf: 1.0, shrinkage: 10.0, ..base };
    let (a, b) = (uid("A"), uid("B"));
    assert!(cfcbf_user_similarity(&snap, &a, &b, &h10).unwrap() < cfcbf_user_similarity(&snap, &a, &b, &identical).unwrap());
}

fn ids<T: Clone>(list: &[Ranked<T>]) -> Vec<T> {
    list.iter().map(|r| r.id.clone()).collect()
}

fn labelled(prefix: u64, n: u64, source: Source) -> Vec<RankedOotd> {
    (0..n).map(|i| Ranked { id: OotdId(prefix + i), score: (n - i) as f64, source }).collect()
}

#[test]
fn quota_interleave_pattern() {
    let cf = labelled(100, 10, Source::Cf);
    let weekly = labelled(200, 10, Source::Weekly);
    let segment = labelled(300, 10, Source::Segment);
    let out = quota_interleave(&[(0.6, cf), (0.2, weekly), (0.2, segment)], 10);
    let expected: Vec<u64> = vec![100, 200, 300, 101, 201, 301, 102, 103, 104, 105];
    assert_eq!(ids(&out).iter().map(|o| o.0).collect::<Vec<_>>(), expected);
    assert_eq!(quotas(&[0.6, 0.2, 0.2], 10), vec![6, 2, 2]);
    assert_eq!(quotas(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
    assert_eq!(quotas(&[0.5, 0.5], 3), vec![2, 1]);
    assert_eq!(quotas(&[1.0, 0.0, 0.0], 4), vec![4, 0, 0]);
}

#[test]
fn quota_interleave_dedups_and_backfills() {
    let a = labelled(1, 3, Source::Cf);
    let b = labelled(1, 6, Source::Weekly);
    let out = quota_interleave(&[(0.5, a), (0.5, b)], 6);
    // duplicates keep the earliest slot; the exhausted first source is backfilled
    assert_eq!(ids(&out).iter().map(|o| o.0).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
    assert_eq!(out[0].source, Source::Cf);
    assert_eq!(out[1].source, Source::Weekly);
    let none = quota_interleave(&[(1.0, Vec::<RankedOotd>::new()), (0.0, labelled(1, 3, Source::Weekly))], 3);
    assert!(none.is_empty());
}

#[test]
fn pure_cf_ratio_serves_the_cf_list() {
    let cfg = RecConfig { mix: FeedMix { cfcbf: 1.0, weekly_best: 0.0, segment_best: 0.0 }, ..Default::default() };
    let snap = three_users().snapshot(&cfg);
    let ctx = RecContext::new(&snap, now(), &cfg);
    let me = ctx.acting_user(&uid("A")).unwrap();
    let feed = curate_feed(&ctx, &uid("A"), 3).unwrap();
    assert_eq!(feed, cfcbf_list(&ctx, &me, 3).unwrap());
    assert!(feed.iter().all(|r| r.source == Source::Cf));
}

#[test]
fn stale_user_gets_the_global_interleave() {
    let mut fx = three_users();
    fx.user("F", Gender::Female, 1995, &["casual"]).ev("F", InteractionKind::Like, 7, 200);
    let cfg = RecConfig::default();
    let snap = fx.snapshot(&cfg);
    let ctx = RecContext::new(&snap, now(), &cfg);
    let me = ctx.acting_user(&uid("F")).unwrap();
    assert!(me.freshness < cfg.eps_decay && !me.history.is_empty());
    let feed = curate_feed(&ctx, &uid("F"), 4).unwrap();
    assert_eq!(feed, fallback_feed(&ctx, &me, 4).unwrap());
    assert!(feed.iter().all(|r| r.source != Source::Cf));
    // one new like makes the user active again
    let live = vec![InteractionEvent::new(now(), uid("F"), InteractionKind::Like, "9").unwrap()];
    let ctx = RecContext::new(&snap, now(), &cfg).with_live(&live);
    assert!(!ctx.acting_user(&uid("F")).unwrap().is_stale(cfg.eps_decay));
}

#[test]
fn weekly_best_window_and_ties() {
    let mut fx = three_users();
    fx.user("G", Gender::Male, 2001, &[]).ev("G", InteractionKind::Like, 5, 8).ev("G", InteractionKind::Like, 2, 0);
    fx.user("H", Gender::Male, 2002, &[]);
    let cfg = RecConfig::default();
    let snap = fx.snapshot(&cfg);
    let ctx = RecContext::new(&snap, now(), &cfg);
    let me = ctx.acting_user(&uid("H")).unwrap();
    let weekly = weekly_best(&ctx, &me).unwrap();
    let score = |o: u64| weekly.iter().find(|r| r.id == OotdId(o)).unwrap().score;
    // like of o2 today, o8 one day ago, o7 two days ago; the o5 like is outside the window
    assert_eq!(score(2), 1.0);
    assert!((score(8) - 0.9).abs() < 1e-15);
    assert!((score(7) - 0.81).abs() < 1e-12);
    assert!((score(9) - 0.81).abs() < 1e-12);
    assert_eq!(score(5), 0.0);
    // o7 and o9 tie on score; the newer o7 comes first
    assert_eq!(ids(&weekly).iter().map(|o| o.0).collect::<Vec<_>>(), vec![2, 8, 7, 9, 5, 1]);
    // H shares a segment with G only, whose older like still counts there
    let seg = segment_best(&ctx, &me, me.segment).unwrap();
    assert_eq!(ids(&seg).iter().map(|o| o.0).collect::<Vec<_>>(), vec![2, 5, 8, 7, 9, 1]);
    assert!((seg[1].score - 0.9f64.powi(8)).abs() < 1e-12);
}

#[test]
fn live_likes_are_visible_immediately() {
    let cfg = RecConfig::default();
    let snap = three_users().snapshot(&cfg);
    let later = now() + Duration::hours(1);
    let live = vec![InteractionEvent::new(later, uid("A"), InteractionKind::Like, "8").unwrap()];
    let ctx = RecContext::new(&snap, later, &cfg).with_live(&live);
    let me = ctx.acting_user(&uid("A")).unwrap();
    assert_eq!(me.history[0], OotdId(8));
    assert_eq!(me.freshness, 1.0);
    assert!(me.row.get(OotdId(8)) > 0.0);
    assert!(curate_feed(&ctx, &uid("A"), 10).unwrap().iter().all(|r| r.id != OotdId(8)));
    // without the overlay o8 is still on offer
    let plain = RecContext::new(&snap, later, &cfg);
    assert!(curate_feed(&plain, &uid("A"), 10).unwrap().iter().any(|r| r.id == OotdId(8)));
}

#[test]
fn scaling_embeddings_keeps_the_feed_order() {
    let cfg = RecConfig::default();
    let fx = three_users();
    let base = fx.snapshot(&cfg);
    for c in [0.25f32, 3.0, 17.0] {
        let scaled = fx.scaled(c).snapshot(&cfg);
        for u in ["A", "B", "C", "D", "E"] {
            let a = curate_feed(&RecContext::new(&base, now(), &cfg), &uid(u), 6).unwrap();
            let b = curate_feed(&RecContext::new(&scaled, now(), &cfg), &uid(u), 6).unwrap();
            assert_eq!(ids(&a), ids(&b), "user {u}, scale {c}");
        }
    }
}

#[test]
fn similar_ootds_rank_by_semantic_similarity() {
    let cfg = RecConfig::default();
    let snap = three_users().snapshot(&cfg);
    let list = similar_ootds(&snap, OotdId(2), 3, &cfg).unwrap();
    assert_eq!(list[0].id, OotdId(7));
    assert!(list.iter().all(|s| s.id != OotdId(2)));
    assert!(matches!(similar_ootds(&snap, OotdId(404), 3, &cfg), Err(Error::UnknownOotd(404))));
}

#[test]
fn snapshot_round_trip_and_format_check() {
    let cfg = RecConfig::default();
    let snap = three_users().snapshot(&cfg);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rec.json");
    snap.save(&path).unwrap();
    assert_eq!(RecSnapshot::load(&path).unwrap(), snap);
    let mut old = snap.clone();
    old.format = 99;
    old.save(&path).unwrap();
    assert!(matches!(RecSnapshot::load(&path), Err(Error::Parse { .. })));
}

#[test]
fn snapshot_build_rejects_bad_references() {
    let cfg = RecConfig::default();
    let mut fx = three_users();
    fx.ev("nobody", InteractionKind::View, 1, 0);
    assert!(matches!(
        RecSnapshot::build(&fx.items, &fx.ootds, &fx.users, &fx.events, now(), &cfg),
        Err(Error::UnknownUser(u)) if u == "nobody"
    ));
    let mut fx = three_users();
    fx.ev("A", InteractionKind::View, 404, 0);
    assert!(matches!(
        RecSnapshot::build(&fx.items, &fx.ootds, &fx.users, &fx.events, now(), &cfg),
        Err(Error::UnknownOotd(404))
    ));
}

#[test]
fn two_step_candidates_and_exclusions() {
    let mut fx = Fx::default();
    for u in ["u", "a", "b", "c", "d"] {
        fx.user(u, Gender::Female, 1990, &[]);
    }
    fx.follow("u", "a").follow("a", "b").follow("a", "c").follow("d", "b");
    let cfg = RecConfig::default();
    let snap = fx.snapshot(&cfg);
    let ctx = RecContext::new(&snap, now(), &cfg);
    let graph = FollowGraph::from_context(&ctx);
    let ends: BTreeSet<UserId> = graph.walk_endpoints(&uid("u"), 1000, 3).into_keys().collect();
    assert_eq!(ends, [uid("b"), uid("c")].into());
    let leaders = suggest_style_leaders(&ctx, &uid("u"), 10).unwrap();
    assert!(leaders.iter().all(|r| r.id != uid("u") && r.id != uid("a")));
    assert!(leaders.iter().any(|r| r.id == uid("b") && r.source == Source::Graph));

    // following a suggested leader removes them
    let live = vec![InteractionEvent::new(now(), uid("u"), InteractionKind::Follow, "b").unwrap()];
    let ctx = RecContext::new(&snap, now(), &cfg).with_live(&live);
    assert!(suggest_style_leaders(&ctx, &uid("u"), 10).unwrap().iter().all(|r| r.id != uid("b")));
}

#[test]
fn latent_leaders_follow_style() {
    let mut fx = Fx::default();
    fx.user("u", Gender::Female, 1990, &[])
        .user("match", Gender::Male, 1970, &[])
        .user("other", Gender::Male, 1970, &[]);
    fx.ootd(1, "match", [1.0, 0.0, 0.0, 0.0], &[], 5)
        .ootd(2, "other", [0.0, 1.0, 0.0, 0.0], &[], 5)
        .ootd(3, "match", [1.0, 0.0, 0.0, 0.0], &[], 4)
        .ootd(4, "other", [0.0, 0.0, 1.0, 0.0], &[], 4);
    fx.ev("u", InteractionKind::Like, 3, 1);
    let cfg = RecConfig::default();
    let snap = fx.snapshot(&cfg);
    let ctx = RecContext::new(&snap, now(), &cfg);
    let leaders = suggest_style_leaders(&ctx, &uid("u"), 2).unwrap();
    assert_eq!(leaders[0].id, uid("match"));
    assert_eq!(leaders[0].source, Source::Latent);
    assert!(leaders[0].score > 0.99);
}

#[test]
fn isolated_user_gets_popular_users() {
    let mut fx = three_users();
    fx.user("loner", Gender::Other, 2000, &[]).follow("A", "D").follow("B", "D").follow("C", "E");
    let cfg = RecConfig::default();
    let snap = fx.snapshot(&cfg);
    let ctx = RecContext::new(&snap, now(), &cfg);
    let leaders = suggest_style_leaders(&ctx, &uid("loner"), 3).unwrap();
    assert!(leaders.iter().all(|r| r.source == Source::Popular));
    assert_eq!(ids(&leaders), vec![uid("D"), uid("E"), uid("A")]);
}

/// Exhaustive two-step endpoints under the walk's step rule.
fn two_hop_oracle(edges: &BTreeSet<(usize, usize)>, u: usize) -> BTreeSet<usize> {
    let step = |x: usize| -> Vec<usize> {
        let out: Vec<usize> = edges.iter().filter(|(a, _)| *a == x).map(|(_, b)| *b).collect();
        if out.is_empty() {
            edges.iter().filter(|(_, b)| *b == x).map(|(a, _)| *a).collect()
        } else {
            out
        }
    };
    step(u).into_iter().flat_map(step).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn walks_cover_the_two_hop_set(raw in prop::collection::btree_set((0usize..20, 0usize..20), 0..50), seed in any::<u64>()) {
        let edges: BTreeSet<(usize, usize)> = raw.into_iter().filter(|(a, b)| a != b).collect();
        let names: Vec<UserId> = (0..20).map(|i| uid(&format!("n{i}"))).collect();
        let graph = FollowGraph::from_edges(edges.iter().map(|(a, b)| (&names[*a], &names[*b])));
        for u in 0..20 {
            let got: BTreeSet<UserId> = graph.walk_endpoints(&names[u], 20_000, seed).into_keys().collect();
            let want: BTreeSet<UserId> = two_hop_oracle(&edges, u).into_iter().map(|i| names[i].clone()).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn similarities_stay_in_range(
        vs in prop::collection::vec(prop::array::uniform4(-3.0f32..3.0), 6),
        likes in prop::collection::vec((0usize..4, 0usize..6, 0i64..30), 1..25),
        lambda_cf in 0.0f64..1.0,
        h in 0.0f64..5.0,
    ) {
        let mut fx = Fx::default();
        for u in 0..4 {
            fx.user(&format!("u{u}"), Gender::Female, 1990, &[["a", "b", "c"][u % 3]]);
        }
        for (i, v) in vs.iter().enumerate() {
            fx.ootd(i as u64, "u0", *v, &[["a", "b"][i % 2]], 40);
        }
        for (u, o, d) in &likes {
            fx.ev(&format!("u{u}"), InteractionKind::Like, *o as u64, *d);
        }
        let cfg = RecConfig { lambda_cf, shrinkage: h, ..Default::default() };
        let snap = fx.snapshot(&cfg);
        for a in snap.users.keys() {
            for b in snap.users.keys() {
                let s = cfcbf_user_similarity(&snap, a, b, &cfg).unwrap();
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
                let sem_only_tags = RecConfig { lambda_u: 0.0, ..cfg.clone() };
                let t = cfcbf_user_similarity(&snap, a, b, &sem_only_tags).unwrap();
                prop_assert!((0.0..=1.0 + 1e-12).contains(&t));
            }
        }
        let ctx = RecContext::new(&snap, now(), &cfg);
        for o1 in snap.ootds.keys() {
            for o2 in snap.ootds.keys() {
                let s = item_similarity(&ctx, None, *o1, *o2).unwrap();
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
            }
        }
    }
}

#[test]
fn weights_and_idf_of_the_fixture() {
    let cfg = RecConfig::default();
    let snap = three_users().snapshot(&cfg);
    // o1 and o2 each have df 2 of U = 4 users with feedback
    assert_eq!(snap.tfidf.users, 4);
    let idf = smoothed_idf(4, 2);
    let a = snap.tfidf.row(&uid("A")).unwrap();
    assert!((a.get(OotdId(1)) - 0.9 * idf).abs() < 1e-12);
    assert!((a.get(OotdId(2)) - 0.81 * idf).abs() < 1e-12);
    let history: BTreeMap<&str, Vec<u64>> = snap
        .users
        .iter()
        .map(|(u, e)| (u.as_str(), distinct_history(&e.feedback).iter().map(|o| o.0).collect()))
        .collect();
    assert_eq!(history["A"], vec![1, 2]);
    assert_eq!(history["B"], vec![1, 2, 9]);
}
