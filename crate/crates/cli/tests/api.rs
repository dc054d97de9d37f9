use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use itoo_cli::api::router;
use itoo_core::engine::{fixture_batch, Engine, EngineConfig, FixtureSpec};

fn fixture_app(dir: &std::path::Path) -> (Router, Arc<Engine>) {
    let cfg = EngineConfig { data_dir: dir.to_path_buf(), clock: Some(FixtureSpec::default().now), ..Default::default() };
    let engine = Engine::open(cfg).unwrap();
    let batch = fixture_batch(&FixtureSpec::default(), &engine.config().layout, engine.hierarchy()).unwrap();
    engine.ingest(batch).unwrap();
    engine.rebuild(true).unwrap();
    let engine = Arc::new(engine);
    (router(engine.clone()), engine)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    raw(app, req).await
}

async fn raw(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("non-JSON body ({e}): {bytes:?}"));
    (status, value)
}

fn ids(feed: &Value) -> Vec<u64> {
    feed["data"].as_array().unwrap().iter().map(|c| c["ootd_id"].as_u64().unwrap()).collect()
}

fn tagged(feed: &Value, tag: &str) -> usize {
    feed["data"].as_array().unwrap().iter().filter(|c| c["hashtags"].as_array().unwrap().iter().any(|t| t == tag)).count()
}

#[tokio::test]
async fn every_response_carries_the_snapshot_version() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, engine) = fixture_app(tmp.path());
    let v = engine.version();
    let (s, status) = call(&app, "GET", "/status", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(status["snapshot_version"], v);
    assert_eq!(status["data"]["counts"], json!({"items": 240, "ootds": 60, "users": 20, "events": 600}));

    for uri in ["/users/u03/feed?k=10", "/users/u03/leaders", "/items/42/similar?k=5", "/ootds/7", "/ootds/7/similar?k=3"] {
        let (s, body) = call(&app, "GET", uri, None).await;
        assert_eq!(s, StatusCode::OK, "{uri}: {body}");
        assert_eq!(body["snapshot_version"], v, "{uri}");
        assert!(body["data"].is_array() || body["data"].is_object());
    }
}

#[tokio::test]
async fn feed_cards_use_the_documented_field_names() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = fixture_app(tmp.path());
    let (_, feed) = call(&app, "GET", "/users/u03/feed?k=10", None).await;
    let cards = feed["data"].as_array().unwrap();
    assert_eq!(cards.len(), 10);
    let sources: BTreeSet<&str> = ["cf", "weekly", "segment"].into();
    for c in cards {
        let keys: BTreeSet<&str> = c.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["hashtags", "image_ref", "ootd_id", "score", "source", "sub_categories", "uploader"].into());
        assert!(sources.contains(c["source"].as_str().unwrap()));
        assert_eq!(c["image_ref"], format!("ootd:{}", c["ootd_id"]));
    }
    let (_, leaders) = call(&app, "GET", "/users/u03/leaders?k=5", None).await;
    let keys: BTreeSet<&str> = leaders["data"][0].as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["followers", "score", "source", "uploads", "user_id"].into());
    let (_, hits) = call(&app, "GET", "/items/42/similar?k=10", None).await;
    let hits = hits["data"].as_array().unwrap();
    assert_eq!(hits.len(), 10);
    assert!(hits.iter().all(|h| h["super_category"] == "top"));
    let scores: Vec<f64> = hits.iter().map(|h| h["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[tokio::test]
async fn unknown_ids_are_404_with_a_json_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = fixture_app(tmp.path());
    for (uri, kind) in [
        ("/users/u1/feed", "unknown_user"),
        ("/users/nobody/leaders", "unknown_user"),
        ("/items/99999/similar", "unknown_item"),
        ("/ootds/99999", "unknown_ootd"),
        ("/ootds/99999/similar", "unknown_ootd"),
        ("/no/such/route", "no_route"),
    ] {
        let (s, body) = call(&app, "GET", uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["error"]["kind"], kind, "{uri}");
        assert!(!body["error"]["message"].as_str().unwrap().is_empty());
    }
    let (_, body) = call(&app, "GET", "/users/u1/feed", None).await;
    assert!(body["error"]["message"].as_str().unwrap().contains("unknown user"));
}

#[tokio::test]
async fn malformed_requests_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, engine) = fixture_app(tmp.path());
    let before = engine.stores();

    let (s, body) = call(&app, "POST", "/interactions", Some(json!({"kind": "like", "target": "3"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["kind"], "malformed_request");
    assert_eq!(body["error"]["field"], "user_id");

    let (s, body) =
        call(&app, "POST", "/interactions", Some(json!({"user_id": "u01", "kind": "poke", "target": "3"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(body["error"]["message"].as_str().unwrap().contains("poke"));
    assert!(body["error"]["field"].is_null());

    let (s, body) = call(
        &app,
        "POST",
        "/interactions",
        Some(json!({"user_id": "u01", "kind": "like", "target": "3", "extra": 1})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["field"], "extra");

    let (s, body) = call(&app, "GET", "/users/u03/feed?k=ten", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["field"], "k");
    let (s, _) = call(&app, "GET", "/users/u03/feed?k=0", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, body) = call(&app, "GET", "/items/abc/similar", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["field"], "item_id");

    let req = Request::builder().method("POST").uri("/ootds").body(Body::from("{not json")).unwrap();
    let (s, body) = raw(&app, req).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["kind"], "malformed_request");

    let (s, body) = call(&app, "POST", "/interactions", Some(json!({"user_id": "u01", "kind": "upload", "target": "3"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["field"], "kind");

    let (s, body) = call(
        &app,
        "POST",
        "/search",
        Some(json!({"super_category": "top", "vector": [1.0, 0.0]})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["kind"], "schema");

    let (s, body) = call(
        &app,
        "POST",
        "/ootds",
        Some(json!({"uploader": "u01", "garments": [{"sub_category": "spacesuit", "shade": 3}]})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    assert_eq!(engine.stores(), before, "rejected requests leave the stores untouched");
}

#[tokio::test]
async fn new_users_and_items_are_accepted_and_duplicates_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, engine) = fixture_app(tmp.path());
    let user = json!({"user_id": "newbie", "demographics": {"gender": "female", "birth_year": 1999}, "preference_tags": ["denim"]});
    let (s, body) = call(&app, "POST", "/users", Some(user.clone())).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["data"], "newbie");
    let (s, body) = call(&app, "POST", "/users", Some(user)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["kind"], "schema");

    let layout = engine.config().layout;
    let mut search = vec![0.0f32; layout.search_dim];
    search[0] = 1.0;
    let item = json!({
        "item_id": 5000,
        "sub_category": "jeans",
        "color_tag": "blue",
        "embeddings": {
            "classifier": vec![0.1f32; layout.classifier_dim],
            "tagger": vec![0.1f32; layout.tagger_dim],
            "search": search,
        }
    });
    let (s, body) = call(&app, "POST", "/items", Some(item)).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["data"], 5000);
    let (s, body) = call(&app, "GET", "/items/5000/similar", None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "not searchable before a rebuild: {body}");
    let (s, rebuilt) = call(&app, "POST", "/rebuild", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(rebuilt["data"]["rebuilt_partitions"], json!(["bottom"]));
    let (s, body) = call(&app, "GET", "/items/5000/similar?k=3", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["snapshot_version"], rebuilt["snapshot_version"]);
    assert!(body["data"].as_array().unwrap().iter().all(|h| h["super_category"] == "bottom"));
}

#[tokio::test]
async fn uploaded_ootd_is_retrievable_after_rebuild() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = fixture_app(tmp.path());
    let upload = json!({
        "uploader": "u02",
        "hashtags": ["denim", "street"],
        "garments": [{"sub_category": "jeans", "shade": 40}, {"sub_category": "t-shirt", "shade": 200}]
    });
    let (s, report) = call(&app, "POST", "/ootds", Some(upload)).await;
    assert_eq!(s, StatusCode::OK, "{report}");
    let ootd = report["data"]["ootd_id"].as_u64().unwrap();
    let crops = report["data"]["analysis"]["crops"].as_array().unwrap().clone();
    assert_eq!(crops.len(), 2);

    let (s, _) = call(&app, "GET", &format!("/ootds/{ootd}/similar"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "not in the recommender until the rebuild");
    let (s, _) = call(&app, "POST", "/rebuild", Some(json!({"full": false}))).await;
    assert_eq!(s, StatusCode::OK);

    let (s, similar) = call(&app, "GET", &format!("/ootds/{ootd}/similar?k=5"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(similar["data"].as_array().unwrap().len(), 5);
    let (_, detail) = call(&app, "GET", &format!("/ootds/{ootd}"), None).await;
    assert_eq!(detail["data"]["ootd"]["hashtags"], json!(["denim", "street"]));
    assert!(detail["data"]["items"].as_array().unwrap().iter().all(|i| i["indexed"] == true));
    for crop in &crops {
        let query = json!({"super_category": crop["bbox"]["super_category"], "vector": crop["vector"], "k": 5});
        let (s, hits) = call(&app, "POST", "/search", Some(query)).await;
        assert_eq!(s, StatusCode::OK);
        assert!(hits["data"].as_array().unwrap().iter().any(|h| h["item_id"] == crop["item_id"]));
    }
}

#[tokio::test]
async fn likes_shift_the_next_feed_toward_the_liked_tag() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, engine) = fixture_app(tmp.path());
    let stores = engine.stores();
    let user = "u04";
    let (_, before) = call(&app, "GET", &format!("/users/{user}/feed?k=10"), None).await;
    let v = before["snapshot_version"].clone();
    let tag = "vintage";
    let shown: BTreeSet<u64> = ids(&before).into_iter().collect();
    let seen: BTreeSet<u64> = stores
        .events
        .iter()
        .filter(|e| e.user_id.as_str() == user)
        .map(|e| e.target.to_string().parse().unwrap_or(0))
        .collect();
    let liked: Vec<u64> = stores
        .ootds
        .values()
        .filter(|o| o.hashtags.contains(tag) && o.uploader_id.as_str() != user)
        .map(|o| o.ootd_id.0)
        .filter(|id| !shown.contains(id) && !seen.contains(id))
        .take(3)
        .collect();
    assert_eq!(liked.len(), 3);
    for id in &liked {
        let (s, ack) = call(
            &app,
            "POST",
            "/interactions",
            Some(json!({"user_id": user, "kind": "like", "target": id.to_string()})),
        )
        .await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(ack["snapshot_version"], v);
        assert_eq!(ack["data"]["kind"], "like");
    }
    let (_, after) = call(&app, "GET", &format!("/users/{user}/feed?k=10"), None).await;
    assert_eq!(after["snapshot_version"], v, "the overlay works without a rebuild");
    assert!(ids(&after).iter().all(|id| !liked.contains(id)));
    assert!(
        tagged(&after, tag) > tagged(&before, tag),
        "'{tag}' cards in top-10: before {}, after {}",
        tagged(&before, tag),
        tagged(&after, tag)
    );
}

#[tokio::test]
async fn following_a_suggested_leader_removes_it() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = fixture_app(tmp.path());
    let (_, leaders) = call(&app, "GET", "/users/u05/leaders?k=5", None).await;
    let leader = leaders["data"][0]["user_id"].as_str().unwrap().to_string();
    let (s, _) =
        call(&app, "POST", "/interactions", Some(json!({"user_id": "u05", "kind": "follow", "target": leader}))).await;
    assert_eq!(s, StatusCode::OK);
    let (_, again) = call(&app, "GET", "/users/u05/leaders?k=5", None).await;
    assert!(again["data"].as_array().unwrap().iter().all(|l| l["user_id"] != leader.as_str()));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_reads_during_rebuild_see_one_version() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, engine) = fixture_app(tmp.path());
    let upload = json!({"uploader": "u02", "garments": [{"sub_category": "skirt", "shade": 90}]});
    call(&app, "POST", "/ootds", Some(upload)).await;
    let (_, old) = call(&app, "GET", "/users/u07/feed", None).await;
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let app = app.clone();
            tokio::spawn(async move {
                let mut out = Vec::new();
                for _ in 0..10 {
                    out.push(call(&app, "GET", "/users/u07/feed", None).await.1);
                }
                out
            })
        })
        .collect();
    let (s, _) = call(&app, "POST", "/rebuild", None).await;
    assert_eq!(s, StatusCode::OK);
    let (_, new) = call(&app, "GET", "/users/u07/feed", None).await;
    assert_eq!(new["snapshot_version"], engine.version());
    for r in readers {
        for body in r.await.unwrap() {
            assert!(body == old || body == new, "a response mixed snapshot versions: {body}");
        }
    }
}
