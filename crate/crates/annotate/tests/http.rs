use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use stance_annotate::{router, AnnotationService, AppState, HumanLabel};
use stance_core::classify::StanceResult;
use stance_core::corpus::{BibRecord, RecordSet, Status};
use stance_core::gateway::Gateway;
use stance_core::irr::{cohen_kappa, LabelVector};
use stance_core::{Confidence, StanceLabel};
use tower::ServiceExt;

fn records(n: usize) -> RecordSet {
    let recs = (0..n)
        .map(|i| {
            let mut r = BibRecord::new(format!("rec{i:03}"));
            r.title = Some(format!("Persistent symptoms study {i}"));
            r.abstract_text = Some(format!("Abstract text number {i} on treated patients."));
            let original = StanceLabel::TARGETS[i % 3];
            let revised = StanceLabel::TARGETS[(i / 2) % 3];
            r.status = Status::Classified { label: revised };
            r.stance_original = Some(StanceResult {
                record_id: r.record_id.clone(),
                label: original,
                confidence: Confidence::Medium,
                reason: format!("The study frames outcome {i} one way."),
            });
            r.stance_revised = Some(StanceResult {
                record_id: r.record_id.clone(),
                label: revised,
                confidence: Confidence::High,
                reason: format!("On review, outcome {i} reads another way."),
            });
            r
        })
        .collect();
    RecordSet::new(recs).unwrap()
}

fn app(dir: &std::path::Path) -> (axum::Router, Arc<AnnotationService>) {
    let service = Arc::new(AnnotationService::open(dir, records(60), Gateway::mock(1)).unwrap());
    let tokens: BTreeMap<String, String> = [("tok-a", "rater-a"), ("tok-b", "rater-b")]
        .into_iter()
        .map(|(t, r)| (t.to_string(), r.to_string()))
        .collect();
    let state = AppState {
        service: service.clone(),
        tokens: Arc::new(tokens),
    };
    (router(state), service)
}

async fn call(
    app: &axum::Router,
    method: &str,
    uri: &str,
    token: Option<&str>,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

/// True when a string value anywhere outside the option lists equals one of
/// `needles`, or a key names machine output.
fn leaks(v: &Value, needles: &[&str]) -> bool {
    match v {
        Value::String(s) => needles.contains(&s.as_str()),
        Value::Array(a) => a.iter().any(|x| leaks(x, needles)),
        Value::Object(m) => m.iter().any(|(k, x)| {
            if k == "label_options" || k == "confidence_options" {
                return false;
            }
            k.contains("machine") || k.contains("provenance") || k.contains("stance") || leaks(x, needles)
        }),
        _ => false,
    }
}

#[tokio::test]
async fn scripted_ten_item_session() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let (st, body) = call(&app, "GET", "/health", None, None).await;
    assert_eq!((st, body["status"].as_str()), (StatusCode::OK, Some("ok")));

    let (st, created) = call(
        &app,
        "POST",
        "/sessions",
        Some("tok-a"),
        Some(json!({"rater_id": "rater-a", "n": 10, "seed": 42})),
    )
    .await;
    assert_eq!(st, StatusCode::OK, "{created}");
    let sid = created["session_id"].as_str().unwrap().to_string();
    assert_eq!(created["total"], 10);

    let needles: Vec<&str> = StanceLabel::ALL
        .iter()
        .map(|l| l.as_str())
        .chain(Confidence::ALL.iter().map(|c| c.as_str()))
        .chain(["revised", "alternative", "original"])
        .collect();
    let mut seen = Vec::new();
    for k in 0..10 {
        let (st, next) = call(&app, "GET", &format!("/sessions/{sid}/next"), Some("tok-a"), None).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(next["status"], "item");
        assert!(!leaks(&next, &needles), "machine output leaked: {next}");
        // stable on re-fetch
        let (_, again) = call(&app, "GET", &format!("/sessions/{sid}/next"), Some("tok-a"), None).await;
        assert_eq!(again, next);
        let item = &next["item"];
        assert_eq!(item["justification_options"].as_array().unwrap().len(), 2);
        assert_eq!(item["label_options"].as_array().unwrap().len(), 5);
        let item_id = item["item_id"].as_str().unwrap().to_string();
        let label = StanceLabel::TARGETS[k % 3].as_str();
        let (st, ack) = call(
            &app,
            "POST",
            &format!("/sessions/{sid}/labels"),
            Some("tok-a"),
            Some(json!({"item_id": item_id, "label": label, "confidence": "High", "justification_choice": k % 2})),
        )
        .await;
        assert_eq!(st, StatusCode::OK, "{ack}");
        assert_eq!(ack["cursor"], k + 1);
        seen.push(item_id);
    }
    let (_, done) = call(&app, "GET", &format!("/sessions/{sid}/next"), Some("tok-a"), None).await;
    assert_eq!(done["status"], "done");

    let (st, dup) = call(
        &app,
        "POST",
        &format!("/sessions/{sid}/labels"),
        Some("tok-a"),
        Some(json!({"item_id": seen[0], "label": "Neutral", "confidence": "High", "justification_choice": 0})),
    )
    .await;
    assert_eq!(
        (st, dup["code"].as_str()),
        (StatusCode::CONFLICT, Some("duplicate_error"))
    );

    let (st, irr) = call(
        &app,
        "GET",
        &format!("/sessions/{sid}/irr?reference=machine_revised"),
        Some("tok-a"),
        None,
    )
    .await;
    assert_eq!(st, StatusCode::OK, "{irr}");

    // offline recomputation from the stored labels
    let text = std::fs::read_to_string(dir.path().join("labels.jsonl")).unwrap();
    let stored: Vec<HumanLabel> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(stored.len(), 10);
    let recs = records(60);
    let human = LabelVector::new(
        "h",
        stored.iter().map(|l| (l.item_id.clone(), l.label.as_str().to_string())),
    )
    .unwrap();
    let machine = LabelVector::new(
        "m",
        stored.iter().map(|l| {
            let r = recs.get(&l.item_id).unwrap();
            (
                l.item_id.clone(),
                r.stance_revised.as_ref().unwrap().label.as_str().to_string(),
            )
        }),
    )
    .unwrap();
    let offline = cohen_kappa(&human, &machine).unwrap().kappa;
    assert_eq!(irr["stance"]["kappa"].as_f64().unwrap().to_bits(), offline.to_bits());
}

#[tokio::test]
async fn auth_and_error_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let body = json!({"rater_id": "rater-a", "n": 5, "seed": 1});
    let (st, err) = call(&app, "POST", "/sessions", None, Some(body.clone())).await;
    assert_eq!(
        (st, err["code"].as_str()),
        (StatusCode::UNAUTHORIZED, Some("unauthorized"))
    );
    let (st, _) = call(&app, "POST", "/sessions", Some("bad"), Some(body.clone())).await;
    assert_eq!(st, StatusCode::UNAUTHORIZED);
    let (st, _) = call(&app, "POST", "/sessions", Some("tok-b"), Some(body.clone())).await;
    assert_eq!(st, StatusCode::FORBIDDEN);
    let (st, created) = call(&app, "POST", "/sessions", Some("tok-a"), Some(body)).await;
    assert_eq!(st, StatusCode::OK);
    let sid = created["session_id"].as_str().unwrap();
    let (st, _) = call(&app, "GET", &format!("/sessions/{sid}/next"), Some("tok-b"), None).await;
    assert_eq!(st, StatusCode::FORBIDDEN);
    let (st, err) = call(&app, "GET", "/sessions/missing/next", Some("tok-a"), None).await;
    assert_eq!((st, err["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (st, err) = call(
        &app,
        "POST",
        "/sessions",
        Some("tok-a"),
        Some(json!({"rater_id": "rater-a", "n": 61, "seed": 1})),
    )
    .await;
    assert_eq!(
        (st, err["code"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("sample_error"))
    );
    let (st, err) = call(&app, "GET", &format!("/sessions/{sid}/irr"), Some("tok-a"), None).await;
    assert_eq!(
        (st, err["code"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("insufficient_data"))
    );
    let (st, err) = call(
        &app,
        "GET",
        &format!("/sessions/{sid}/irr?reference=bogus"),
        Some("tok-a"),
        None,
    )
    .await;
    assert_eq!(
        (st, err["code"].as_str()),
        (StatusCode::BAD_REQUEST, Some("validation_error"))
    );
    let (_, next) = call(&app, "GET", &format!("/sessions/{sid}/next"), Some("tok-a"), None).await;
    let item = next["item"]["item_id"].as_str().unwrap();
    let (st, err) = call(
        &app,
        "POST",
        &format!("/sessions/{sid}/labels"),
        Some("tok-a"),
        Some(json!({"item_id": item, "label": "Maybe", "confidence": "High", "justification_choice": 0})),
    )
    .await;
    assert_eq!(
        (st, err["code"].as_str()),
        (StatusCode::BAD_REQUEST, Some("validation_error"))
    );
}

#[tokio::test]
async fn paired_raters_and_resume_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let sid_a;
    let first;
    {
        let (app, _) = app(dir.path());
        let (_, a) = call(
            &app,
            "POST",
            "/sessions",
            Some("tok-a"),
            Some(json!({"rater_id": "rater-a", "n": 6, "seed": 9})),
        )
        .await;
        let (_, b) = call(
            &app,
            "POST",
            "/sessions",
            Some("tok-b"),
            Some(json!({"rater_id": "rater-b", "n": 6, "seed": 9})),
        )
        .await;
        sid_a = a["session_id"].as_str().unwrap().to_string();
        let sid_b = b["session_id"].as_str().unwrap().to_string();
        for k in 0..6 {
            for (sid, tok) in [(&sid_a, "tok-a"), (&sid_b, "tok-b")] {
                let (_, next) = call(&app, "GET", &format!("/sessions/{sid}/next"), Some(tok), None).await;
                let item = next["item"]["item_id"].as_str().unwrap().to_string();
                let label = if tok == "tok-a" || k % 2 == 0 {
                    "Neutral"
                } else {
                    "Supports CLD"
                };
                let (st, _) = call(
                    &app,
                    "POST",
                    &format!("/sessions/{sid}/labels"),
                    Some(tok),
                    Some(json!({"item_id": item, "label": label, "confidence": "Low", "justification_choice": 0})),
                )
                .await;
                assert_eq!(st, StatusCode::OK);
                if k == 2 {
                    break;
                }
            }
        }
        let (st, irr) = call(
            &app,
            "GET",
            &format!("/sessions/{sid_a}/irr?reference=other_rater:{sid_b}"),
            Some("tok-a"),
            None,
        )
        .await;
        assert_eq!(st, StatusCode::OK, "{irr}");
        assert_eq!(irr["n_items"], 5);
        first = call(&app, "GET", &format!("/sessions/{sid_a}/next"), Some("tok-a"), None)
            .await
            .1;
    }
    let (app, _) = app(dir.path());
    let (_, resumed) = call(
        &app,
        "POST",
        "/sessions",
        Some("tok-a"),
        Some(json!({"rater_id": "rater-a", "n": 6, "seed": 9})),
    )
    .await;
    assert_eq!(resumed["session_id"].as_str(), Some(sid_a.as_str()));
    assert_eq!(resumed["cursor"], 6);
    let (_, after) = call(&app, "GET", &format!("/sessions/{sid_a}/next"), Some("tok-a"), None).await;
    assert_eq!(after, first);
}
