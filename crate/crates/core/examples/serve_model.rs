//! Train a small model, serve it on a free port and query it over HTTP.
//!
//!     cargo run --release --example serve_model

use std::net::SocketAddr;
use std::sync::Arc;

use pfl::model::ModelFile;
use pfl::problems::{ProblemId, ProblemSpec};
use pfl::scalarize::ScalarKind;
use pfl::serve::{router, ServeState};
use pfl::train::{train_phn, RunConfig};
use serde_json::{json, Value};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = ProblemSpec::new(ProblemId::Ex72)?;
    let mut config = RunConfig::phn(&problem, ScalarKind::Utility);
    config.iterations = 3000;
    let (model, _) = train_phn(config.clone())?;
    let state = Arc::new(ServeState::new(ModelFile::new(&config, &model))?);

    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await?;
    let base = format!("http://{}", listener.local_addr()?);
    tokio::spawn(async move { axum::serve(listener, router(state)).await });

    let client = reqwest::Client::new();
    let meta: Value = client.get(format!("{base}/api/meta")).send().await?.json().await?;
    println!("meta: {meta}");
    let answer: Value = client
        .post(format!("{base}/api/infer"))
        .json(&json!({ "preference": [2.0, 2.0] }))
        .send()
        .await?
        .json()
        .await?;
    println!("infer (2, 2): {answer}");
    let front: Vec<Value> = client
        .get(format!("{base}/api/front?count=5"))
        .send()
        .await?
        .json()
        .await?;
    for entry in front {
        println!("front: {entry}");
    }
    let rejected = client
        .post(format!("{base}/api/infer"))
        .json(&json!({ "preference": [1.0] }))
        .send()
        .await?;
    println!("wrong length -> {} {}", rejected.status(), rejected.text().await?);
    Ok(())
}
