use std::time::Duration;

use assure_dx_core::par::Execution;
use assure_dx_core::run::{self, vap_config};
use assure_dx_core::schema;
use assure_dx_service::settings::Settings;
use assure_dx_service::{app, router, AppState};
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn service() -> Router {
    let settings =
        Settings::from_lookup(|k| (k == "ASSURE_DX_WORKERS").then(|| "2".into())).unwrap();
    app(&settings)
}

async fn call(
    app: Router,
    method: Method,
    path: &str,
    body: Option<Value>,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(path)
        .header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let res = app.oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn post(path: &str, body: Value) -> (StatusCode, Value) {
    let (status, bytes) = call(service(), Method::POST, path, Some(body)).await;
    (status, serde_json::from_slice(&bytes).expect("json body"))
}

fn vap_body() -> Value {
    vap_config().to_value()
}

fn curve_body(nt_max: Value) -> Value {
    let mut b = vap_body();
    b.as_object_mut().unwrap().remove("output");
    b["nT_max"] = nt_max;
    b
}

fn validate(name: &str, instance: &Value) {
    let schema = schema::all()
        .into_iter()
        .find(|(n, _)| *n == name)
        .unwrap()
        .1;
    let validator = jsonschema::validator_for(&serde_json::to_value(schema).unwrap()).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(instance)
        .map(|e| e.to_string())
        .collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

#[tokio::test]
async fn health_reports_version() {
    let (status, bytes) = call(service(), Method::GET, "/api/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(
        v,
        json!({"status": "ok", "engine_version": run::ENGINE_VERSION})
    );
    validate("health", &v);
}

#[tokio::test]
async fn curve_matches_the_runner() {
    let (status, v) = post("/api/v1/assurance-curve", curve_body(json!(150))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    validate("curve-response", &v);
    assert_eq!(v["result"]["curve"]["n_star"], 104);
    assert_eq!(
        v["result"]["curve"]["points"].as_array().unwrap().len(),
        150
    );
    assert_eq!(v["engine_version"], run::ENGINE_VERSION);
    assert!(v["compute_ms"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["inputs_echo"]["nT_max"], 150);

    let direct = run::run_curve(&vap_config(), Execution::Sequential).unwrap();
    assert_eq!(v["result"], serde_json::to_value(direct).unwrap());
}

#[tokio::test]
async fn curve_limits() {
    let (status, v) = post("/api/v1/assurance-curve", curve_body(json!(0))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "nT_max");
    let (status, _) = post("/api/v1/assurance-curve", curve_body(json!(5001))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post("/api/v1/assurance-curve", curve_body(json!(5000))).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn schema_violations_are_400() {
    let mut body = vap_body();
    body["design"]["colour"] = json!("red");
    let (status, v) = post("/api/v1/sample-size", body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "invalid_request");
    assert_eq!(v["field"], "design.colour");

    let mut body = vap_body();
    body["design"]["width"] = json!("narrow");
    let (status, v) = post("/api/v1/sample-size", body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "design.width");

    let (status, bytes) = call(service(), Method::POST, "/api/v1/sample-size", None).await;
    assert_eq!(
        status,
        StatusCode::BAD_REQUEST,
        "{}",
        String::from_utf8_lossy(&bytes)
    );
}

#[tokio::test]
async fn sample_size_outcomes() {
    let (status, v) = post("/api/v1/sample-size", vap_body()).await;
    assert_eq!(status, StatusCode::OK);
    validate("sample-size-response", &v);
    assert_eq!(v["result"]["n_star"], 104);

    let mut capped = vap_body();
    capped["study"]["cap"] = json!(50);
    let (status, v) = post("/api/v1/sample-size", capped).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "not_found");
    assert_eq!(v["cap"], 50);
    assert_eq!(v["target"], 0.8);

    let mut loose = vap_body();
    loose["design"]["width"] = json!(0.999);
    let (_, v) = post("/api/v1/sample-size", loose).await;
    assert_eq!(v["result"]["n_star"], 1);
}

#[tokio::test]
async fn parity_with_the_runners() {
    let mut cfg = vap_config();
    cfg.study.sensitivity.n_angles = 8;
    let body = cfg.to_value();
    let exec = Execution::default();

    let (_, v) = post("/api/v1/sample-size", body.clone()).await;
    assert_eq!(
        v["result"],
        serde_json::to_value(run::run_sample_size(&cfg, exec).unwrap()).unwrap()
    );
    assert_eq!(v["inputs_echo"], body);

    let (_, v) = post("/api/v1/prior-sensitivity", body.clone()).await;
    validate("sensitivity-response", &v);
    assert_eq!(
        v["result"],
        serde_json::to_value(run::run_sensitivity(&cfg, exec).unwrap()).unwrap()
    );

    let (_, v) = post("/api/v1/conflict-check", body.clone()).await;
    validate("conflict-response", &v);
    assert_eq!(
        v["result"],
        serde_json::to_value(run::run_conflict(&cfg).unwrap()).unwrap()
    );
}

#[tokio::test]
async fn sensitivity_edges() {
    let mut body = vap_body();
    body["study"]["sensitivity"]["epsilon"] = json!(1.0);
    let (status, v) = post("/api/v1/prior-sensitivity", body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "infeasible");

    let mut body = vap_body();
    body["study"]["sensitivity"] = json!({"vary": ["sens"], "epsilon": 0.0, "n_angles": 8});
    let (status, v) = post("/api/v1/prior-sensitivity", body).await;
    assert_eq!(status, StatusCode::OK);
    let r = &v["result"]["reports"][0];
    assert_eq!(r["n_min"], r["n_max"]);

    let mut body = vap_body();
    body["study"]["sensitivity"]["n_angles"] = json!(100_000);
    let (status, _) = post("/api/v1/prior-sensitivity", body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn conflict_series() {
    let (status, v) = post("/api/v1/conflict-check", vap_body()).await;
    assert_eq!(status, StatusCode::OK);
    let checks = v["result"]["checks"].as_array().unwrap();
    let p = checks[0]["report"]["percentile"].as_f64().unwrap();
    assert!((0.985..=0.995).contains(&p));
    for c in checks {
        let total: f64 = c["pmf"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    let mut all_positive = vap_body();
    all_positive["study"]["conflict"]["observed"] =
        json!({"n11": 53, "n12": 55, "n21": 0, "n22": 42});
    let (_, v) = post("/api/v1/conflict-check", all_positive).await;
    assert_eq!(v["result"]["checks"][1]["report"]["percentile"], 1.0);
}

fn small_grid() -> Value {
    json!({"study": {"seed": 3, "compare": {"grid": {"sens": [0.8], "prev": [0.3, 0.7], "reps": 1000}}}})
}

#[tokio::test]
async fn compare_streams_progress_then_the_result() {
    let (status, bytes) = call(
        service(),
        Method::POST,
        "/api/v1/compare",
        Some(small_grid()),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let lines: Vec<Value> = String::from_utf8(bytes)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let (last, progress) = lines.split_last().unwrap();
    assert!(!progress.is_empty());
    assert!(progress.iter().all(|e| e["event"] == "progress"));
    let total = progress[0]["total"].as_u64().unwrap();
    assert_eq!(progress.last().unwrap()["done"].as_u64().unwrap(), total);
    assert_eq!(last["event"], "result");
    validate("compare-response", &last["response"]);

    let (status, plain) = post("/api/v1/compare?stream=false", small_grid()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(plain["result"], last["response"]["result"]);
    assert_eq!(plain["result"]["mode"], "grid");
}

#[tokio::test]
async fn compare_timeout_cancels() {
    let slow = router(AppState::new(1, Duration::ZERO));
    let body = json!({"study": {"compare": {"mode": "width", "width": {"reps": 200}}}});
    let (status, bytes) = call(
        slow.clone(),
        Method::POST,
        "/api/v1/compare?stream=false",
        Some(body.clone()),
    )
    .await;
    assert_eq!(
        status,
        StatusCode::GATEWAY_TIMEOUT,
        "{}",
        String::from_utf8_lossy(&bytes)
    );

    let (status, bytes) = call(slow, Method::POST, "/api/v1/compare", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    let text = String::from_utf8(bytes).unwrap();
    let last: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["event"], "error");
    assert_eq!(last["status"], 504);
}

#[tokio::test]
async fn compare_guards() {
    let (status, v) = post(
        "/api/v1/compare",
        json!({"study": {"compare": {"mode": "width", "width": {"reps": 100_000}}}}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "study.compare.width.reps");
    let (status, _) = post(
        "/api/v1/compare",
        json!({"study": {"compare": {"grid": {"reps": 10}}}}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn concurrent_identical_requests_agree() {
    let app = service();
    let body = curve_body(json!(300));
    let calls = (0..6).map(|_| {
        call(
            app.clone(),
            Method::POST,
            "/api/v1/assurance-curve",
            Some(body.clone()),
        )
    });
    let results: Vec<Value> = futures_util::future::join_all(calls)
        .await
        .into_iter()
        .map(|(s, b)| {
            assert_eq!(s, StatusCode::OK);
            serde_json::from_slice::<Value>(&b).unwrap()["result"].clone()
        })
        .collect();
    assert!(results.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn cors_preflight() {
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/api/v1/sample-size")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .header("access-control-request-headers", "content-type")
        .body(Body::empty())
        .unwrap();
    let res = service().oneshot(req).await.unwrap();
    assert!(res.status().is_success());
    assert_eq!(res.headers()["access-control-allow-origin"], "*");
}
