use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = fpp_server::router().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, v)
}

const MU_CONSTANT: &str = "\
[experiment]
name = mu
dimension = 2
seed = 3

[distribution]
kind = constant
value = 1

[grids]
n = 1, 2, 4

[samples]
count = 3

[targets]
direction = 1, 0
";

#[tokio::test]
async fn health() {
    let (s, v) = call("GET", "/healthz", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, Value::String("ok".into()));
}

#[tokio::test]
async fn run_constant_mu() {
    let (s, v) = call("POST", "/v1/run", Some(json!({"config": MU_CONSTANT}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["exit_code"], 0);
    let mus: Vec<&Value> = v["records"].as_array().unwrap().iter().filter(|r| r["statistic"] == "mu").collect();
    assert_eq!(mus.len(), 1);
    assert_eq!(mus[0]["value"], 1.0);
}

#[tokio::test]
async fn validate_reports_usage_error() {
    let (s, v) = call("POST", "/v1/validate", Some(json!({"config": "[experiment]\nname = nope\n"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["exit_code"], 1);
    let (_, v) = call("POST", "/v1/validate", Some(json!({"config": MU_CONSTANT}))).await;
    assert_eq!(v["exit_code"], 0);
}

#[tokio::test]
async fn plot_rejects_unknown_kind() {
    let (s, v) = call("POST", "/v1/plot", Some(json!({"records": [], "kind": "histogram"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("histogram"));
    let (s, v) = call("POST", "/v1/plot", Some(json!({"records": [], "kind": "shape"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["tsv"], "angle\tt\tradius\n");
}

#[tokio::test]
async fn passage_time_constant() {
    let body = json!({
        "distribution": {"kind": "constant", "value": 1.0},
        "seed": 0,
        "from": [0, 0],
        "to": [3, -2]
    });
    let (s, v) = call("POST", "/v1/passage-time", Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["value"], 5.0);
    assert_eq!(v["certified"], true);
}

#[tokio::test]
async fn pc_and_moments() {
    let (s, v) = call("GET", "/v1/pc/2", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["value"], 0.5);
    let (s, _) = call("GET", "/v1/pc/1", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let body = json!({"distribution": {"kind": "pareto", "alpha": 0.9, "scale": 1.0}, "d": 2});
    let (s, v) = call("POST", "/v1/moments", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["report"]["a1_holds"], false);
    let body = json!({"distribution": {"kind": "pareto", "alpha": 1.1, "scale": 1.0}, "d": 2});
    let (_, v) = call("POST", "/v1/moments", Some(body)).await;
    assert_eq!(v["report"]["a1_holds"], true);
}
