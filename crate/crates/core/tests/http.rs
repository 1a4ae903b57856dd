// SPDX-License-Identifier: Apache-2.0

mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use parking_lot::RwLock;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::{open, project_dir};
use scenegraph_core::service::{router, Project};

struct Api {
    app: Router,
    _dir: tempfile::TempDir,
    root: std::path::PathBuf,
}

impl Api {
    fn new(ids: &[&str]) -> Self {
        let dir = project_dir(ids, 100, 100);
        let root = dir.path().to_path_buf();
        let project = open(&root);
        Api { app: router(Arc::new(RwLock::new(project))), _dir: dir, root }
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>, Option<String>) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(v) => req.header("content-type", "application/json").body(Body::from(serde_json::to_vec(&v).unwrap())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let ctype = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string());
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes, ctype)
    }

    async fn json(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes, _) = self.call(method, uri, body).await;
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    async fn created(&self, uri: &str, body: Value) -> String {
        let (status, v) = self.json(Method::POST, uri, Some(body)).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }
}

#[tokio::test]
async fn read_endpoints() {
    let api = Api::new(&["a", "b"]);
    let (s, cfg) = api.json(Method::GET, "/api/config", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(cfg["object_categories"].as_array().unwrap().len(), 34);

    let (_, list) = api.json(Method::GET, "/api/images", None).await;
    assert_eq!(list.as_array().unwrap().len(), 2);
    assert_eq!(list[0]["image_id"], "a");

    let (s, img) = api.json(Method::GET, "/api/images/b", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((img["width"].as_u64(), img["has_bitmap"].as_bool()), (Some(100), Some(true)));

    let (s, bytes, ctype) = api.call(Method::GET, "/api/images/a/bitmap", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("image/png"));
    assert_eq!(&bytes[1..4], b"PNG");

    let (s, err) = api.json(Method::GET, "/api/images/zzz", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "UnknownImage");

    let (_, stats) = api.json(Method::GET, "/api/stats", None).await;
    assert_eq!(stats["images"], 2);
    assert!(stats["pct_in_graph"].is_null());

    let (_, prior) = api.json(Method::GET, "/api/prior", None).await;
    assert_eq!(prior["total_annotations"], 0);
}

#[tokio::test]
async fn scripted_session() {
    let api = Api::new(&["a"]);
    let car = api.created("/api/images/a/instances", json!({"category": "car", "bbox": [10, 10, 30, 20]})).await;
    let road = api.created("/api/images/a/instances", json!({"category": "road", "bbox": [0, 15, 100, 100]})).await;
    let car2 = api
        .created(
            "/api/images/a/instances",
            json!({"category": "car", "bbox": [50, 5, 70, 16],
                   "attributes": [{"attribute": "orientation", "value": "leftward"}]}),
        )
        .await;
    assert_eq!((car.as_str(), road.as_str(), car2.as_str()), ("i1", "i2", "i3"));

    let (s, r) = api
        .json(Method::POST, "/api/images/a/recommend", Some(json!({"subject_ref": car, "object_ref": road, "k": 3})))
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["recommendations"][0]["source"], "rule");
    assert_eq!(r["features"], json!(["contact", "subject_left", "subject_above", "subject_smaller"]));

    let (s, a) = api
        .json(
            Method::POST,
            "/api/images/a/relationships",
            Some(json!({"subject_ref": car, "predicate": "driving on", "object_ref": road})),
        )
        .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(a["warnings"], json!([]));
    let rid = a["id"].as_str().unwrap().to_string();

    let (_, r) =
        api.json(Method::POST, "/api/images/a/recommend", Some(json!({"subject_ref": car2, "object_ref": road}))).await;
    assert_eq!(r["recommendations"][0]["predicate"], "driving on");
    assert_eq!(r["recommendations"][0]["source"], "prior");

    let (s, e) = api
        .json(
            Method::POST,
            "/api/images/a/relationships",
            Some(json!({"subject_ref": car, "predicate": "driving on", "object_ref": road})),
        )
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["code"], "DuplicateTriple");

    let (_, g) = api.json(Method::GET, "/api/images/a/scenegraph", None).await;
    assert_eq!(g["nodes"].as_array().unwrap().len(), 3);
    assert_eq!(g["edges"][0]["predicate"], "driving on");

    let (s, _) = api.json(Method::DELETE, &format!("/api/images/a/relationships/{rid}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let (_, prior) = api.json(Method::GET, "/api/prior", None).await;
    assert_eq!(prior["total_annotations"], 0);

    let (s, x) = api.json(Method::POST, "/api/export", Some(json!({"format": "merged"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(x["images"], 1);
    assert!(api.root.join("export/merged.json").exists());

    assert!(Project::verify(&api.root).unwrap().is_clean());
}

#[tokio::test]
async fn entity_crud() {
    let api = Api::new(&["a"]);
    let p1 = api.created("/api/images/a/instances", json!({"category": "person", "bbox": [0, 0, 5, 10]})).await;
    let p2 = api.created("/api/images/a/instances", json!({"category": "person", "bbox": [6, 0, 11, 10]})).await;
    let c = api.created("/api/images/a/clusters", json!({"member_ids": [p1, p2]})).await;
    let g = api.created("/api/images/a/regions", json!({"bbox": [0, 0, 50, 50], "label": "crossing"})).await;

    let (s, _) = api
        .json(
            Method::PUT,
            &format!("/api/images/a/instances/{p1}/attributes"),
            Some(json!({"attributes": [{"attribute": "orientation", "value": "forward"}]})),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    let (s, e) = api
        .json(
            Method::PUT,
            &format!("/api/images/a/instances/{p1}/attributes"),
            Some(json!({"attributes": [{"attribute": "orientation", "value": "sideways"}]})),
        )
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["code"], "UnknownAttributeValue");

    let (s, _) = api
        .json(
            Method::PUT,
            &format!("/api/images/a/instances/{p2}"),
            Some(json!({"id": p2, "category": "person", "bbox": [6, 0, 12, 10]})),
        )
        .await;
    assert_eq!(s, StatusCode::OK);

    let (_, doc) = api.json(Method::GET, "/api/images/a/annotation", None).await;
    assert_eq!(doc["clusters"][0]["id"], c.as_str());
    assert_eq!(doc["regions"][0]["label"], "crossing");
    assert_eq!(doc["instances"][1]["bbox"], json!([6, 0, 12, 10]));

    for uri in [
        format!("/api/images/a/clusters/{c}"),
        format!("/api/images/a/regions/{g}"),
        format!("/api/images/a/instances/{p1}"),
    ] {
        let (s, v) = api.json(Method::DELETE, &uri, None).await;
        assert_eq!(s, StatusCode::OK, "{uri}: {v}");
    }
    let (_, doc) = api.json(Method::GET, "/api/images/a/annotation", None).await;
    assert_eq!(doc["instances"].as_array().unwrap().len(), 1);
    assert!(doc["clusters"].as_array().unwrap().is_empty());

    let (s, e) = api.json(Method::DELETE, "/api/images/a/regions/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(e["code"], "UnknownEntity");
}

#[tokio::test]
async fn put_annotation_roundtrip() {
    let api = Api::new(&["a"]);
    let doc = json!({
        "image": {"image_id": "a", "width": 100, "height": 100, "file_name": "a.png", "camera": "front"},
        "instances": [
            {"id": "y", "category": "road", "bbox": [0, 50, 100, 100]},
            {"id": "x", "category": "car", "bbox": [10, 40, 20, 55]}
        ],
        "relationships": [{"id": "r", "subject_ref": "x", "predicate": "on", "object_ref": "y"}]
    });
    let (s, v) = api.json(Method::PUT, "/api/images/a/annotation", Some(doc)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (_, got) = api.json(Method::GET, "/api/images/a/annotation", None).await;
    assert_eq!(got["image"]["camera"], "front");
    assert_eq!(got["instances"][0]["id"], "x");
    assert!(got["relationships"][0]["features"].as_array().unwrap().contains(&json!("contact")));

    let (s, e) = api.json(Method::PUT, "/api/images/a/annotation", Some(json!({"image": {"image_id": "a"}}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["code"], "SchemaError");
}

#[tokio::test]
async fn error_bodies_carry_codes() {
    let api = Api::new(&["a"]);
    let (s, bytes, _) = api.call(Method::POST, "/api/images/a/recommend", None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let e: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(e["code"], "BadRequest");

    let (s, e) =
        api.json(Method::POST, "/api/images/a/recommend", Some(json!({"subject_ref": "i1", "object_ref": "i1"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["code"], "SelfLoop");

    let (s, e) =
        api.json(Method::POST, "/api/images/a/recommend", Some(json!({"subject_ref": "i1", "object_ref": "i2"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(e["code"], "UnknownEntity");

    let (s, e) = api
        .json(Method::POST, "/api/images/a/instances", Some(json!({"category": "dragon", "bbox": [0, 0, 1, 1]})))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["code"], "UnknownCategory");
    assert_eq!(e["details"]["category"], "dragon");

    let (s, e) = api
        .json(Method::POST, "/api/export", Some(json!({"format": "merged", "split_assignment": {"a": "dev"}})))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["code"], "UnknownSplitLabel");
}

#[tokio::test]
async fn concurrent_writers_are_serialized() {
    let api = Api::new(&["a"]);
    let mut handles = Vec::new();
    for k in 0..16u32 {
        let app = api.app.clone();
        handles.push(tokio::spawn(async move {
            let body = json!({"category": "car", "bbox": [k, 0, k + 5, 5]});
            let req = Request::builder()
                .method(Method::POST)
                .uri("/api/images/a/instances")
                .body(Body::from(serde_json::to_vec(&body).unwrap()))
                .unwrap();
            app.oneshot(req).await.unwrap().status()
        }));
    }
    for h in handles {
        assert_eq!(h.await.unwrap(), StatusCode::CREATED);
    }
    let (_, doc) = api.json(Method::GET, "/api/images/a/annotation", None).await;
    assert_eq!(doc["instances"].as_array().unwrap().len(), 16);
    let log = std::fs::read_to_string(api.root.join("mutations.log")).unwrap();
    let seqs: Vec<u64> =
        log.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, (1..=17).collect::<Vec<_>>());
    assert!(Project::verify(&api.root).unwrap().is_clean());
}
