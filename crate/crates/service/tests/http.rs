use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use cpcp_service::{router, SessionStore, DEFAULT_MAX_UPLOAD_BYTES};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn cars() -> Vec<u8> {
    std::fs::read(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/cars.csv")).unwrap()
}

fn app() -> Router {
    router(Arc::new(SessionStore::new()), DEFAULT_MAX_UPLOAD_BYTES)
}

async fn send(
    app: &Router,
    method: Method,
    uri: &str,
    body: Body,
    ctype: &str,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, ctype)
        .body(body)
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (
        status,
        res.into_body().collect().await.unwrap().to_bytes().to_vec(),
    )
}

async fn send_json(app: &Router, method: Method, uri: &str, body: Value) -> (StatusCode, Value) {
    let (s, b) = send(
        app,
        method,
        uri,
        Body::from(body.to_string()),
        "application/json",
    )
    .await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    send(app, Method::GET, uri, Body::empty(), "text/plain").await
}

async fn upload_cars(app: &Router) -> String {
    let (status, body) = send(
        app,
        Method::POST,
        "/datasets?name=cars",
        Body::from(cars()),
        "text/csv",
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let v: Value = serde_json::from_slice(&body).unwrap();
    v["dataset_id"].as_str().unwrap().to_owned()
}

#[tokio::test]
async fn upload_reports_schema() {
    let app = app();
    let (status, body) = send(
        &app,
        Method::POST,
        "/datasets?name=cars",
        Body::from(cars()),
        "text/csv",
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["row_count"], 392);
    assert_eq!(v["name"], "cars");
    assert_eq!(v["schema"].as_array().unwrap().len(), 7);
    assert_eq!(v["schema"][1]["name"], "cylinders");
    assert_eq!(v["schema"][1]["kind"], "numeric");
    assert_eq!(v["schema"][1]["min"], 3.0);

    let id = v["dataset_id"].as_str().unwrap();
    let (status, again) = get(&app, &format!("/datasets/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&again).unwrap(), v);
}

#[tokio::test]
async fn multipart_upload() {
    let app = app();
    let boundary = "XyZ";
    let mut body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"cars.csv\"\r\nContent-Type: text/csv\r\n\r\n"
    )
    .into_bytes();
    body.extend(cars());
    body.extend(format!("\r\n--{boundary}--\r\n").into_bytes());
    let ctype = format!("multipart/form-data; boundary={boundary}");
    let (status, body) = send(&app, Method::POST, "/datasets", Body::from(body), &ctype).await;
    assert_eq!(status, StatusCode::CREATED);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["name"], "cars.csv");
    assert_eq!(v["row_count"], 392);
}

#[tokio::test]
async fn bad_uploads() {
    let app = app();
    let (status, body) = send(
        &app,
        Method::POST,
        "/datasets",
        Body::from("a,b\n1,2\n3\n"),
        "text/csv",
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["error"], "RaggedRow");

    let (status, body) = send(&app, Method::POST, "/datasets", Body::empty(), "text/csv").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(
        serde_json::from_slice::<Value>(&body).unwrap()["error"],
        "EmptyFile"
    );

    let small = router(Arc::new(SessionStore::new()), 1024);
    let (status, _) = send(
        &small,
        Method::POST,
        "/datasets",
        Body::from(cars()),
        "text/csv",
    )
    .await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn view_lifecycle() {
    let app = app();
    let id = upload_cars(&app).await;
    let (status, v) = send_json(
        &app,
        Method::POST,
        &format!("/datasets/{id}/views"),
        json!({"axis_order": ["cylinders", "horsepower", "weight", "acceleration"], "k": 3}),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["version"], 1);
    assert_eq!(v["layout"]["pairs"].as_array().unwrap().len(), 3);
    let view = v["view_id"].as_str().unwrap().to_owned();

    let (status, layout) = get(&app, &format!("/views/{view}/layout")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        serde_json::from_slice::<Value>(&layout).unwrap(),
        v["layout"]
    );
    assert_eq!(get(&app, &format!("/views/{view}/layout")).await.1, layout);

    let (status, v2) = send_json(
        &app,
        Method::PATCH,
        &format!("/views/{view}"),
        json!({"version": 1, "op": "split_cluster", "axis": "weight", "position": 3000.0}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v2["version"], 2);
    assert_eq!(
        v2["state"]["configs"]["weight"]["bins"]["boundaries"]
            .as_array()
            .unwrap()
            .len(),
        5
    );

    let (status, conflict) = send_json(
        &app,
        Method::PATCH,
        &format!("/views/{view}"),
        json!({"version": 1, "op": "merge_at_boundary", "axis": "weight", "index": 1}),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(conflict["error"], "VersionConflict");
    assert_eq!(conflict["current_version"], 2);

    let (status, bad) = send_json(
        &app,
        Method::PATCH,
        &format!("/views/{view}"),
        json!({"version": 2, "op": "move_boundary", "axis": "weight", "index": 0, "value": 1.0}),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(bad["error"], "NotInterior");

    let (status, svg) = get(&app, &format!("/views/{view}/svg")).await;
    assert_eq!(status, StatusCode::OK);
    let svg = String::from_utf8(svg).unwrap();
    assert!(svg.contains("<svg") && svg.trim_end().ends_with("</svg>"));
    let bundles = v2["layout"]["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["bundles"].as_array().unwrap().len())
        .sum::<usize>();
    assert_eq!(svg.matches(r#"class="bundle""#).count(), bundles);
}

#[tokio::test]
async fn error_statuses() {
    let app = app();
    let id = upload_cars(&app).await;
    let views = format!("/datasets/{id}/views");

    let (status, v) = send_json(
        &app,
        Method::POST,
        &views,
        json!({"axis_order": ["mpg"], "k": 0}),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "InvalidK");

    let (status, v) = send_json(
        &app,
        Method::POST,
        &views,
        json!({"axis_order": ["colour"]}),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "UnknownAxis");

    let (status, v) = send_json(&app, Method::POST, &views, json!({"axes": ["mpg"]})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "InvalidRequest");

    let (status, v) = send_json(
        &app,
        Method::POST,
        "/datasets/missing/views",
        json!({"axis_order": ["mpg"]}),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "UnknownDataset");

    for uri in [
        "/views/missing",
        "/views/missing/layout",
        "/views/missing/svg",
        "/datasets/missing",
    ] {
        assert_eq!(get(&app, uri).await.0, StatusCode::NOT_FOUND, "{uri}");
    }
    let (status, _) = send_json(
        &app,
        Method::PATCH,
        "/views/missing",
        json!({"version": 1, "op": "reorder_axes", "axis_order": []}),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cross_origin_preflight() {
    let app = app();
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/views/x")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "PATCH")
        .body(Body::empty())
        .unwrap();
    let res = app.oneshot(req).await.unwrap();
    assert!(res.status().is_success());
    assert!(res
        .headers()
        .contains_key(header::ACCESS_CONTROL_ALLOW_ORIGIN));
}
