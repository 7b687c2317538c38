use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tapestry_core::dataio::{parse_subset_code, standardize_and_anomalize, Season, SeasonStamp};
use tapestry_core::scenario::{evaluate_scenario, Assignment, Category, HistogramSpec};
use tapestry_core::synth::{generate, SynthConfig};
use tapestry_core::tapestry::{build_tapestry, Tapestry, TapestryConfig};
use tapestry_service::app;
use tower::ServiceExt;

fn tapestry() -> Tapestry {
    let run = generate(&SynthConfig { seed: 4, ..Default::default() }, 300).unwrap();
    let s = standardize_and_anomalize(&run.observed_series().unwrap(), 1000..=1059).unwrap();
    let coding = parse_subset_code("123", 3).unwrap();
    let cfg = TapestryConfig { n_views: 8, n_draws: 8, ..Default::default() };
    build_tapestry(&s, SeasonStamp::new(1061, Season::Summer), &coding, 0, cfg).unwrap()
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let req = Request::post(uri).header("content-type", "application/json").body(body.into()).unwrap();
    call(app, req).await
}

#[tokio::test]
async fn metadata() {
    let t = tapestry();
    let app = app(t.clone());
    let (status, v) = get(&app, "/tapestry").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["k"], 4);
    assert_eq!(v["threads"], 64);
    assert_eq!(v["anchor"], "1061:Summer");
    assert_eq!(v["target"], "x");
    assert_eq!(v["category_bounds"].as_array().unwrap().len(), 4);
    assert_eq!(v["category_bounds"][0]["season"], "Fall");
}

#[tokio::test]
async fn empty_scenario_equals_density() {
    let app = app(tapestry());
    let (status, sc) = post(&app, "/scenario", r#"{"assignments": [], "bins": 12}"#).await;
    assert_eq!(status, StatusCode::OK);
    let summaries = sc["summaries"].as_array().unwrap();
    assert_eq!(summaries.len(), 4);
    for (i, s) in summaries.iter().enumerate() {
        let (status, d) = get(&app, &format!("/density?horizon={}&bins=12", i + 1)).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(&d["summary"], s);
    }
}

#[tokio::test]
async fn scenario_matches_in_process_results() {
    let t = tapestry();
    let app = app(t.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mut assignments = vec![];
        for h in 1..=3 {
            if rng.random_bool(0.5) {
                assignments.push(Assignment { horizon: h, category: Category::ALL[rng.random_range(0..3)] });
            }
        }
        let alpha: f64 = rng.random_range(0.01..1.0);
        let body = json!({ "assignments": assignments, "alpha": alpha, "bins": 15 });
        let (status, v) = post(&app, "/scenario", body.to_string()).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        let expect = evaluate_scenario(&t, &assignments, alpha, &HistogramSpec { bins: 15, range: None }).unwrap();
        let got = v["summaries"].as_array().unwrap();
        assert_eq!(got.len(), expect.len());
        for (g, e) in got.iter().zip(&expect) {
            let p = &g["probabilities"];
            assert_eq!(p["low"].as_f64().unwrap().to_bits(), e.probabilities.low.to_bits());
            assert_eq!(p["medium"].as_f64().unwrap().to_bits(), e.probabilities.medium.to_bits());
            assert_eq!(p["high"].as_f64().unwrap().to_bits(), e.probabilities.high.to_bits());
            assert_eq!(g, &serde_json::to_value(e).unwrap());
        }
        // stateless: the same body gives the same response
        assert_eq!(post(&app, "/scenario", body.to_string()).await.1, v);
    }
}

#[tokio::test]
async fn all_in_category_threads_leave_histograms_unchanged() {
    let mut t = tapestry();
    let b = t.bounds_at(1).unwrap();
    let mid = 0.5 * (b.lower + b.upper);
    for th in &mut t.threads {
        th.predictions[0][0] = mid;
    }
    let app = app(t);
    let (_, base) = post(&app, "/scenario", r#"{"assignments": []}"#).await;
    let (status, cond) =
        post(&app, "/scenario", r#"{"assignments": [{"horizon": 1, "category": "Medium"}], "alpha": 0.3}"#).await;
    assert_eq!(status, StatusCode::OK);
    let base = base["summaries"].as_array().unwrap();
    let cond = cond["summaries"].as_array().unwrap();
    assert_eq!(cond.len(), 3);
    for (c, b) in cond.iter().zip(&base[1..]) {
        let (cm, bm) = (c["histogram"]["mass"].as_array().unwrap(), b["histogram"]["mass"].as_array().unwrap());
        for (x, y) in cm.iter().zip(bm) {
            assert!((x.as_f64().unwrap() - y.as_f64().unwrap()).abs() < 1e-12);
        }
    }
}

#[tokio::test]
async fn observe_creates_snapshots() {
    let t = tapestry();
    let app = app(t.clone());
    let (status, v) = post(&app, "/observe", r#"{"horizon": 1, "value": 0.4}"#).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["snapshot"], 1);
    assert_eq!(v["parent"], 0);

    let (_, one) = get(&app, "/tapestry?snapshot=1").await;
    assert_eq!(one["observations"][0]["horizon"], 1);
    let (_, zero) = get(&app, "/tapestry").await;
    assert_eq!(zero["observations"].as_array().unwrap().len(), 0);

    // the snapshot's weights match in-process reweighting
    let expect = t.reweight(1, 0.4).unwrap();
    let (_, d) = get(&app, "/density?horizon=2&snapshot=1").await;
    let st = tapestry_core::scenario::ScenarioState::new(&expect, 0.1).unwrap();
    let s = st.conditional_summary(2, &HistogramSpec::default()).unwrap();
    assert_eq!(d["summary"], serde_json::to_value(&s).unwrap());

    let (status, v) = post(&app, "/observe", r#"{"snapshot": 1, "horizon": 1, "value": 0.0}"#).await;
    assert_eq!(status, StatusCode::CONFLICT, "{v}");
    assert_eq!(v["error"], "already_observed");
    let (status, _) = post(&app, "/observe", r#"{"snapshot": 1, "horizon": 3, "value": 0.0}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, v) = post(&app, "/observe", r#"{"snapshot": 1, "horizon": 2, "value": -0.2}"#).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["snapshot"], 2);

    // scenarios on an observed snapshot start after the observed horizons
    let (_, sc) = post(&app, "/scenario", r#"{"snapshot": 2, "assignments": []}"#).await;
    assert_eq!(sc["summaries"][0]["horizon"], 3);
}

#[tokio::test]
async fn bad_requests() {
    let app = app(tapestry());
    for (uri, body) in [
        ("/scenario", "{not json"),
        ("/scenario", r#"{"assignments": [{"horizon": 9, "category": "Low"}]}"#),
        ("/scenario", r#"{"assignments": [{"horizon": 1, "category": "Huge"}]}"#),
        ("/scenario", r#"{"assignments": [], "alpha": -1}"#),
        ("/scenario", r#"{"assignments": [], "bins": 0}"#),
        ("/observe", r#"{"horizon": 1}"#),
        ("/observe", r#"{"horizon": 0, "value": 1.0}"#),
        ("/observe", r#"{"horizon": 1, "value": 1.0, "values": [1.0]}"#),
    ] {
        let (status, v) = post(&app, uri, body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri} {body}: {v}");
        assert!(v["error"].is_string());
    }
    for uri in ["/density?horizon=0", "/density?horizon=5", "/density", "/density?horizon=x"] {
        assert_eq!(get(&app, uri).await.0, StatusCode::BAD_REQUEST, "{uri}");
    }
    assert_eq!(get(&app, "/tapestry?snapshot=7").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cors_preflight() {
    let app = app(tapestry());
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/scenario")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .header("access-control-request-headers", "content-type")
        .body(Body::empty())
        .unwrap();
    let res = app.oneshot(req).await.unwrap();
    assert!(res.status().is_success());
    assert_eq!(res.headers()["access-control-allow-origin"], "*");
}
