use std::net::SocketAddr;
use std::sync::Arc;

use pfl::metrics::dominates;
use pfl::model::ModelFile;
use pfl::problems::{ProblemId, ProblemSpec};
use pfl::scalarize::ScalarKind;
use pfl::serve::{router, ServeState};
use pfl::train::{train_phn, RunConfig};
use reqwest::StatusCode;
use serde_json::{json, Value};

async fn start(id: ProblemId, iterations: usize) -> String {
    let problem = ProblemSpec::new(id).unwrap();
    let mut config = RunConfig::phn(&problem, ScalarKind::Utility);
    config.iterations = iterations;
    let (model, _) = train_phn(config.clone()).unwrap();
    let state = Arc::new(ServeState::new(ModelFile::new(&config, &model)).unwrap());
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0)))
        .await
        .unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, router(state)).await });
    base
}

async fn infer(client: &reqwest::Client, base: &str, body: Value) -> (StatusCode, Value) {
    let resp = client
        .post(format!("{base}/api/infer"))
        .json(&body)
        .send()
        .await
        .unwrap();
    (resp.status(), resp.json().await.unwrap())
}

#[tokio::test]
async fn health_and_meta() {
    let base = start(ProblemId::Ex72, 10).await;
    let client = reqwest::Client::new();
    let health: Value = client
        .get(format!("{base}/api/health"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(health["status"], "ok");
    let meta: Value = client
        .get(format!("{base}/api/meta"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(meta["problem"], "ex7.2");
    assert_eq!(meta["m"], 2);
    assert_eq!(meta["n"], 2);
    assert_eq!(meta["scalarization"]["kind"], "utility");
    assert_eq!(meta["training"]["iterations"], 10);
    assert_eq!(meta["hv_ref"], json!([2.0, 2.0]));
    assert_eq!(meta["eps_default"], 1e-3);
}

#[tokio::test]
async fn infer_recomputes_objectives_from_solution() {
    let base = start(ProblemId::Ex72, 500).await;
    let client = reqwest::Client::new();
    let (status, body) = infer(&client, &base, json!({ "preference": [0.3, 0.7] })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["normalized"], false);
    let x: Vec<f64> = serde_json::from_value(body["solution"].clone()).unwrap();
    let f: Vec<f64> = serde_json::from_value(body["objectives"].clone()).unwrap();
    assert_eq!(
        ProblemSpec::new(ProblemId::Ex72).unwrap().evaluate_values(&x).unwrap(),
        f
    );
    assert!(body["latency_us"].is_u64());
}

#[tokio::test]
async fn unnormalized_preferences_are_rescaled() {
    let base = start(ProblemId::Ex72, 10).await;
    let client = reqwest::Client::new();
    let (status, body) = infer(&client, &base, json!({ "preference": [2.0, 2.0] })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["preference"], json!([0.5, 0.5]));
    assert_eq!(body["normalized"], true);

    // zero is clamped up to the floor, not rejected
    let (status, body) = infer(&client, &base, json!({ "preference": [0.0, 1.0] })).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["preference"][0].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn malformed_bodies_are_bad_requests() {
    let base = start(ProblemId::Ex72, 10).await;
    let client = reqwest::Client::new();
    let raw = client
        .post(format!("{base}/api/infer"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(raw.status(), StatusCode::BAD_REQUEST);
    assert_eq!(raw.json::<Value>().await.unwrap()["field"], "body");

    let (status, body) = infer(&client, &base, json!({ "weights": [0.5, 0.5] })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "preference");

    let (status, body) = infer(&client, &base, json!({ "preference": [0.5, "half"] })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "preference[1]");
}

#[tokio::test]
async fn invalid_preferences_are_unprocessable() {
    let base = start(ProblemId::Ex72, 10).await;
    let client = reqwest::Client::new();
    for (pref, field) in [
        (json!([0.2, 0.3, 0.5]), "preference"),
        (json!([0.5, -0.1]), "preference[1]"),
        (json!([]), "preference"),
    ] {
        let (status, body) = infer(&client, &base, json!({ "preference": pref })).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{pref}");
        assert_eq!(body["field"], field);
        assert!(body["error"].is_string());
    }
    // overflowing literals cannot be represented as finite reals
    let resp = client
        .post(format!("{base}/api/infer"))
        .header("content-type", "application/json")
        .body(r#"{"preference": [1e999, 1]}"#)
        .send()
        .await
        .unwrap();
    assert!(resp.status().is_client_error());
}

#[tokio::test]
async fn front_counts_and_limits() {
    let base = start(ProblemId::Ex72, 2000).await;
    let client = reqwest::Client::new();
    let get = |q: &'static str| {
        let client = client.clone();
        let url = format!("{base}/api/front{q}");
        async move { client.get(url).send().await.unwrap() }
    };
    let default: Vec<Value> = get("").await.json().await.unwrap();
    assert_eq!(default.len(), 25);
    let seven: Vec<Value> = get("?count=7").await.json().await.unwrap();
    assert_eq!(seven.len(), 7);
    for q in ["?count=0", "?count=10001"] {
        assert_eq!(get(q).await.status(), StatusCode::UNPROCESSABLE_ENTITY, "{q}");
    }
    assert_eq!(get("?count=ten").await.status(), StatusCode::BAD_REQUEST);

    let points: Vec<Vec<f64>> = default
        .iter()
        .map(|e| serde_json::from_value(e["objectives"].clone()).unwrap())
        .collect();
    let mut pairs = 0;
    let mut clean = 0;
    for i in 0..points.len() {
        for j in 0..points.len() {
            if i != j {
                pairs += 1;
                clean += usize::from(!dominates(&points[i], &points[j]));
            }
        }
    }
    assert!(clean as f64 >= 0.9 * pairs as f64, "{clean}/{pairs}");
}

#[tokio::test]
async fn cross_origin_requests_are_allowed() {
    let base = start(ProblemId::Ex72, 10).await;
    let resp = reqwest::Client::new()
        .get(format!("{base}/api/meta"))
        .header("origin", "http://localhost:5173")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_agree() {
    let base = start(ProblemId::Ex72, 200).await;
    let client = reqwest::Client::new();
    let tasks: Vec<_> = (0..100)
        .map(|_| {
            let client = client.clone();
            let base = base.clone();
            tokio::spawn(async move {
                let (_, mut body) = infer(&client, &base, json!({ "preference": [0.25, 0.75] })).await;
                body.as_object_mut().unwrap().remove("latency_us");
                body.to_string()
            })
        })
        .collect();
    let mut bodies = Vec::new();
    for t in tasks {
        bodies.push(t.await.unwrap());
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}
