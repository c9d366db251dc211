use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use npcbench::config::Config;
use npcbench::fixtures;
use npcbench::taskgen::{generate_episode, Task};
use npcbench::verify::SessionStore;
use npcbench::world::World;
use npcbench_cli::server::router;

fn five_objects_store(seed: u64) -> SessionStore {
    let cfg = Config::default();
    let w = Arc::new(World::build(fixtures::scene("five_objects"), &cfg).unwrap());
    SessionStore::new(vec![w], vec![], seed)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), 1 << 24).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn every_payload_carries_schema_version() {
    let app = router(five_objects_store(1));
    for (m, uri, body) in [
        ("GET", "/scenes", None),
        ("GET", "/scenes/five_objects/bev", None),
        ("POST", "/verify/referring/start", Some(json!({}))),
        ("GET", "/verify/accuracy", None),
        ("GET", "/scenes/missing/bev", None),
    ] {
        let (_, v) = call(&app, m, uri, body).await;
        assert_eq!(v["schema_version"], json!(1), "{uri}");
    }
}

#[tokio::test]
async fn scenes_and_bev() {
    let app = router(five_objects_store(1));
    let (s, v) = call(&app, "GET", "/scenes", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["scenes"][0]["scene_id"], "five_objects");
    let (s, v) = call(&app, "GET", "/scenes/five_objects/bev", None).await;
    assert_eq!(s, StatusCode::OK);
    let ids: Vec<&str> = v["objects"].as_array().unwrap().iter().map(|o| o["instance_id"].as_str().unwrap()).collect();
    assert_eq!(ids.len(), 5);
    assert!(ids.contains(&"chair/1") && ids.contains(&"table/1"));
    let (s, v) = call(&app, "GET", "/scenes/nowhere/bev", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["kind"], "not_found");
}

#[tokio::test]
async fn referring_round_scores_and_rejects_reselection() {
    // Rounds are seeded, so an identical store started the same way picks
    // the same target.
    let mut twin = five_objects_store(5);
    let expected = twin.start_referring("five_objects").unwrap();
    let truth = twin.select(&expected.round_id, &expected.candidate_ids[0]).unwrap().true_target;

    let app = router(five_objects_store(5));
    let (s, start) = call(&app, "POST", "/verify/referring/start", Some(json!({"scene_id": "five_objects"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(start["description"], json!(expected.description));
    let round = start["round_id"].as_str().unwrap().to_string();

    let (_, view) = call(&app, "GET", &format!("/verify/rounds/{round}"), None).await;
    assert!(view["true_target"].is_null(), "target leaked before selection: {view}");

    let uri = format!("/verify/referring/{round}/select");
    let (s, sel) = call(&app, "POST", &uri, Some(json!({"instance_id": truth}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(sel["correct"], json!(true));
    assert_eq!(sel["running_accuracy"], json!(1.0));

    let (s, v) = call(&app, "POST", &uri, Some(json!({"instance_id": truth}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"]["kind"], "conflict");

    let (s, _) = call(&app, "POST", "/verify/referring/r999999/select", Some(json!({"instance_id": truth}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/verify/rounds/r999999", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (_, acc) = call(&app, "GET", "/verify/accuracy", None).await;
    assert_eq!(acc["referring"]["correct"], json!(1));
    assert_eq!(acc["referring"]["total"], json!(1));
}

#[tokio::test]
async fn wrong_selection_lowers_running_accuracy() {
    let mut twin = five_objects_store(9);
    let expected = twin.start_referring("five_objects").unwrap();
    let truth = twin.select(&expected.round_id, &expected.candidate_ids[0]).unwrap().true_target;
    let wrong = expected.candidate_ids.iter().find(|c| **c != truth).expect("round has a distractor").clone();

    let app = router(five_objects_store(9));
    let (_, start) = call(&app, "POST", "/verify/referring/start", Some(json!({}))).await;
    let round = start["round_id"].as_str().unwrap();
    let uri = format!("/verify/referring/{round}/select");
    let (s, _) = call(&app, "POST", &uri, Some(json!({"instance_id": "no/such"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (_, sel) = call(&app, "POST", &uri, Some(json!({"instance_id": wrong}))).await;
    assert_eq!(sel["correct"], json!(false));
    assert_eq!(sel["true_target"], json!(truth));
    assert_eq!(sel["running_accuracy"], json!(0.0));
    let (_, view) = call(&app, "GET", &format!("/verify/rounds/{round}"), None).await;
    assert_eq!(view["true_target"], json!(truth));
}

#[tokio::test]
async fn grounding_round_resolves_chair_near_table() {
    let app = router(five_objects_store(1));
    let body = json!({"scene_id": "five_objects", "description": "the chair near the table", "expected": "chair/1"});
    let (s, g) = call(&app, "POST", "/verify/grounding/start", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(g["selected_instance"], "chair/1");
    assert_eq!(g["correct"], json!(true));
    let (_, acc) = call(&app, "GET", "/verify/accuracy", None).await;
    assert_eq!(acc["grounding"]["correct"], json!(1));
    assert_eq!(acc["grounding"]["accuracy"], json!(1.0));
}

#[tokio::test]
async fn malformed_body_is_a_client_error() {
    let app = router(five_objects_store(1));
    let (s, _) = call_raw(&app, "/verify/grounding/start", "{not json").await;
    assert!(s.is_client_error());
}

async fn call_raw(app: &Router, uri: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method("POST").uri(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let s = resp.status();
    (s, to_bytes(resp.into_body(), 1 << 20).await.unwrap().to_vec())
}

#[tokio::test]
async fn dialogue_allows_three_rounds_then_conflicts() {
    let cfg = Config::default();
    let w = Arc::new(World::build(fixtures::scene("apartment_a"), &cfg).unwrap());
    let ep = generate_episode(w.clone(), &cfg, Task::SocialLoconav, 21).unwrap();
    let id = ep.episode_id.clone();
    let app = router(SessionStore::new(vec![w], vec![ep], 1));

    let (s, t) = call(&app, "GET", &format!("/dialogue/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(t["messages"].as_array().unwrap().len(), 0);

    let uri = format!("/dialogue/{id}/message");
    for left in [2, 1, 0] {
        let (s, r) = call(&app, "POST", &uri, Some(json!({"text": "Can you tell me more about it?"}))).await;
        assert_eq!(s, StatusCode::OK, "{r}");
        assert_eq!(r["remaining_rounds"], json!(left));
        assert!(!r["reply"].as_str().unwrap().is_empty());
    }
    let (s, r) = call(&app, "POST", &uri, Some(json!({"text": "One more?"}))).await;
    assert_eq!(s, StatusCode::CONFLICT, "{r}");

    let (_, t) = call(&app, "GET", &format!("/dialogue/{id}"), None).await;
    assert_eq!(t["schema_version"], json!(1));
    assert_eq!(t["rounds"].as_array().unwrap().len(), 3);

    let (s, _) = call(&app, "POST", "/dialogue/unknown/message", Some(json!({"text": "hi"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}
