//! The HTTP contract, exercised in-process through the router.

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use vernqa_service::store::Stores;
use vernqa_service::testkit::{write_fixture, FixtureFiles, TWO_BLOB_NOTES};
use vernqa_service::{router, AppState, Settings, StartupError};

const DISCLAIMER_PHRASE: &str = "preliminary information, not a medical diagnosis";

struct Fixture {
    _dir: tempfile::TempDir,
    files: FixtureFiles,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let files = write_fixture(dir.path(), 16, 15).unwrap();
    Fixture { _dir: dir, files }
}

impl Fixture {
    fn state(&self) -> Arc<AppState> {
        Arc::new(AppState::from_config(&self.files.config).unwrap())
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes)
        .unwrap_or_else(|e| panic!("{uri}: body is not JSON ({e}): {bytes:?}"));
    (status, v)
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", uri, Some(&body.to_string())).await
}

fn check_schema(name: &str, v: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../docs/schemas")
        .join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    if let Err(e) = validator.validate(v) {
        panic!("{name}: {e}\n{v:#}");
    }
}

fn check_error(status: StatusCode, v: &Value, want_status: StatusCode, want_code: &str) {
    assert_eq!(status, want_status, "{v}");
    check_schema("error", v);
    assert_eq!(v["error_code"], want_code, "{v}");
}

#[tokio::test]
async fn health_and_ask_contract() {
    let fx = fixture();
    let app = router(fx.state());

    let (s, v) = call(&app, "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    check_schema("health", &v);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["index_size"], 16);

    for (body, k) in [
        (
            json!({"question": "what should i do about fever in a child ?"}),
            5,
        ),
        (
            json!({"question": "how do i treat cough for an adult ?", "top_k": 2, "lang": "en"}),
            2,
        ),
        (
            json!({"question": "fiebre en niño", "lang": "es", "top_k": 40}),
            16,
        ),
    ] {
        let (s, v) = post(&app, "/v1/ask", body.clone()).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        check_schema("ask_response", &v);
        assert!(!v["answer"].as_str().unwrap().trim().is_empty());
        assert_eq!(v["hits"].as_array().unwrap().len(), k);
        assert!(v["disclaimer"]
            .as_str()
            .unwrap()
            .contains(DISCLAIMER_PHRASE));
        assert_eq!(v["lang"], body.get("lang").cloned().unwrap_or(json!("en")));
        assert!(v.get("session_id").is_none());
        let ranks: Vec<u64> = v["hits"]
            .as_array()
            .unwrap()
            .iter()
            .map(|h| h["rank"].as_u64().unwrap())
            .collect();
        assert_eq!(ranks, (1..=k as u64).collect::<Vec<_>>());
    }

    let (s, v) = post(&app, "/v1/ask", json!({"lang": "en"})).await;
    check_error(s, &v, StatusCode::BAD_REQUEST, "bad_request");
    let (s, v) = call(&app, "POST", "/v1/ask", Some("{\"question\": ")).await;
    check_error(s, &v, StatusCode::BAD_REQUEST, "bad_request");
    let (s, v) = post(&app, "/v1/ask", json!({"question": 7})).await;
    check_error(s, &v, StatusCode::BAD_REQUEST, "bad_request");
    let (s, v) = post(&app, "/v1/ask", json!({"question": "   "})).await;
    check_error(s, &v, StatusCode::UNPROCESSABLE_ENTITY, "empty_question");
    let (s, v) = post(&app, "/v1/ask", json!({"question": "fever", "lang": "fr"})).await;
    check_error(
        s,
        &v,
        StatusCode::UNPROCESSABLE_ENTITY,
        "unsupported_language",
    );
    let (s, v) = post(&app, "/v1/ask", json!({"question": "fever", "top_k": 0})).await;
    check_error(s, &v, StatusCode::UNPROCESSABLE_ENTITY, "invalid_top_k");
    let (s, v) = call(&app, "GET", "/v2/nothing", None).await;
    check_error(s, &v, StatusCode::NOT_FOUND, "not_found");
}

#[tokio::test]
async fn ask_then_get_session_returns_both_turns_in_order() {
    let fx = fixture();
    let app = router(fx.state());

    let (s, created) = call(&app, "POST", "/v1/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED);
    check_schema("session_created", &created);
    let sid = created["session_id"].as_str().unwrap().to_string();

    let (s, empty) = call(&app, "GET", &format!("/v1/sessions/{sid}"), None).await;
    assert_eq!(s, StatusCode::OK);
    check_schema("session_record", &empty);
    assert_eq!(empty["turns"], json!([]));

    let q1 = "how do i treat rash for a toddler ?";
    let (s, a1) = post(&app, "/v1/ask", json!({"question": q1, "session_id": sid})).await;
    assert_eq!(s, StatusCode::OK);
    check_schema("ask_response", &a1);
    assert_eq!(a1["session_id"], sid.as_str());
    let q2 = "fiebre para niño";
    let (s, a2) = post(
        &app,
        "/v1/ask",
        json!({"question": q2, "lang": "es", "session_id": sid}),
    )
    .await;
    assert_eq!(s, StatusCode::OK);

    let (s, rec) = call(&app, "GET", &format!("/v1/sessions/{sid}"), None).await;
    assert_eq!(s, StatusCode::OK);
    check_schema("session_record", &rec);
    let turns = rec["turns"].as_array().unwrap();
    let got: Vec<(&str, &str, &str)> = turns
        .iter()
        .map(|t| {
            (
                t["role"].as_str().unwrap(),
                t["text"].as_str().unwrap(),
                t["lang"].as_str().unwrap(),
            )
        })
        .collect();
    assert_eq!(
        got,
        [
            ("user", q1, "en"),
            ("assistant", a1["answer"].as_str().unwrap(), "en"),
            ("user", q2, "es"),
            ("assistant", a2["answer"].as_str().unwrap(), "es"),
        ]
    );
    let stamps: Vec<&str> = turns
        .iter()
        .map(|t| t["timestamp"].as_str().unwrap())
        .collect();
    let parsed: Vec<chrono::DateTime<chrono::Utc>> =
        stamps.iter().map(|s| s.parse().unwrap()).collect();
    assert!(parsed.windows(2).all(|w| w[0] <= w[1]), "{stamps:?}");

    // Failed asks leave the history alone.
    let (s, _) = post(&app, "/v1/ask", json!({"question": "", "session_id": sid})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (_, again) = call(&app, "GET", &format!("/v1/sessions/{sid}"), None).await;
    assert_eq!(again["turns"].as_array().unwrap().len(), 4);

    let (s, v) = call(&app, "GET", "/v1/sessions/does-not-exist", None).await;
    check_error(s, &v, StatusCode::NOT_FOUND, "unknown_session");
    let (s, v) = post(
        &app,
        "/v1/ask",
        json!({"question": "fever", "session_id": "does-not-exist"}),
    )
    .await;
    check_error(s, &v, StatusCode::NOT_FOUND, "unknown_session");
}

#[tokio::test]
async fn ehr_and_sessions_survive_restart() {
    let fx = fixture();
    let (sid, answer) = {
        let app = router(fx.state());
        let (s, v) = post(
            &app,
            "/v1/ehr/p-17",
            json!({"text": "Cough for two weeks. Gave honey."}),
        )
        .await;
        assert_eq!(s, StatusCode::CREATED);
        check_schema("ehr_stored", &v);
        assert_eq!(
            (v["patient_id"].as_str(), v["doc_id"].as_str()),
            (Some("p-17"), Some("doc-1"))
        );
        let (s, v) = post(
            &app,
            "/v1/ehr/p-17",
            json!({"text": "Fever resolved.", "doc_id": "visit-2"}),
        )
        .await;
        assert_eq!(s, StatusCode::CREATED);
        assert_eq!(v["doc_id"], "visit-2");

        let (s, v) = post(
            &app,
            "/v1/ehr/p-17",
            json!({"text": "Again.", "doc_id": "visit-2"}),
        )
        .await;
        check_error(s, &v, StatusCode::CONFLICT, "duplicate_doc");
        let (s, v) = post(&app, "/v1/ehr/p-17", json!({"text": " \n"})).await;
        check_error(s, &v, StatusCode::UNPROCESSABLE_ENTITY, "empty_text");
        let (s, v) = post(&app, "/v1/ehr/p-17", json!({"doc_id": "x"})).await;
        check_error(s, &v, StatusCode::BAD_REQUEST, "bad_request");

        let (_, created) = call(&app, "POST", "/v1/sessions", None).await;
        let sid = created["session_id"].as_str().unwrap().to_string();
        let (_, a) = post(
            &app,
            "/v1/ask",
            json!({"question": "earache in an infant ?", "session_id": sid}),
        )
        .await;
        (sid, a["answer"].as_str().unwrap().to_string())
    };

    // A fresh state replays both stores from the data directory.
    let app = router(fx.state());
    let (s, list) = call(&app, "GET", "/v1/ehr/p-17", None).await;
    assert_eq!(s, StatusCode::OK);
    check_schema("ehr_list", &list);
    let docs: Vec<(&str, &str)> = list["documents"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| (d["doc_id"].as_str().unwrap(), d["text"].as_str().unwrap()))
        .collect();
    assert_eq!(
        docs,
        [
            ("doc-1", "Cough for two weeks. Gave honey."),
            ("visit-2", "Fever resolved.")
        ]
    );

    let (s, v) = post(&app, "/v1/summarize", json!({"patient_id": "p-17"})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    check_schema("summarize_response", &v);
    let all = ["Cough for two weeks.", "Gave honey.", "Fever resolved."];
    let picked: Vec<&str> = v["summary_sentences"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap())
        .collect();
    assert!(picked.iter().all(|p| all.contains(p)), "{picked:?}");
    assert_eq!(v["k_used"], 2);

    let (s, v) = post(
        &app,
        "/v1/ehr/p-17",
        json!({"text": "Dup.", "doc_id": "visit-2"}),
    )
    .await;
    check_error(s, &v, StatusCode::CONFLICT, "duplicate_doc");
    let (s, v) = post(&app, "/v1/ehr/p-17", json!({"text": "Third visit."})).await;
    assert_eq!(
        (s, v["doc_id"].as_str()),
        (StatusCode::CREATED, Some("doc-3"))
    );

    let (_, rec) = call(&app, "GET", &format!("/v1/sessions/{sid}"), None).await;
    check_schema("session_record", &rec);
    assert_eq!(rec["turns"][1]["text"], answer.as_str());
}

#[tokio::test]
async fn summarize_contract() {
    let fx = fixture();
    let app = router(fx.state());

    post(
        &app,
        "/v1/ehr/solo",
        json!({"text": "Takes metformin daily."}),
    )
    .await;
    let (s, v) = post(&app, "/v1/summarize", json!({"patient_id": "solo"})).await;
    assert_eq!(s, StatusCode::OK);
    check_schema("summarize_response", &v);
    assert_eq!(
        v,
        json!({"summary_sentences": ["Takes metformin daily."], "k_used": 1})
    );

    let (s, v) = post(
        &app,
        "/v1/summarize",
        json!({"text": "Rash on arm. Itchy at night! Better now?"}),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    check_schema("summarize_response", &v);

    let (s, v) = post(&app, "/v1/summarize", json!({"patient_id": "nobody"})).await;
    check_error(s, &v, StatusCode::NOT_FOUND, "unknown_patient");
    let (s, v) = call(&app, "GET", "/v1/ehr/nobody", None).await;
    check_error(s, &v, StatusCode::NOT_FOUND, "unknown_patient");
    let (s, v) = post(&app, "/v1/summarize", json!({"text": "  "})).await;
    check_error(s, &v, StatusCode::UNPROCESSABLE_ENTITY, "empty_text");
    let (s, v) = post(
        &app,
        "/v1/summarize",
        json!({"text": "a.", "patient_id": "solo"}),
    )
    .await;
    check_error(s, &v, StatusCode::BAD_REQUEST, "bad_request");
    let (s, v) = post(&app, "/v1/summarize", json!({})).await;
    check_error(s, &v, StatusCode::BAD_REQUEST, "bad_request");
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Globally optimal 2-means partition by enumeration; returns the member
/// nearest each centroid, ascending.
fn exhaustive_two_means(points: &[Vec<f64>]) -> Vec<usize> {
    let n = points.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 1..(1u32 << n) - 1 {
        let label = |i: usize| (mask >> i) & 1;
        let centroid = |c: u32| {
            let m: Vec<&Vec<f64>> = (0..n)
                .filter(|&i| label(i) == c)
                .map(|i| &points[i])
                .collect();
            (0..points[0].len())
                .map(|d| m.iter().map(|p| p[d]).sum::<f64>() / m.len() as f64)
                .collect::<Vec<_>>()
        };
        let cs = [centroid(0), centroid(1)];
        let cost: f64 = (0..n).map(|i| sq(&points[i], &cs[label(i) as usize])).sum();
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            let mut reps: Vec<usize> = (0..2)
                .map(|c| {
                    (0..n)
                        .filter(|&i| label(i) == c)
                        .min_by(|&a, &b| {
                            sq(&points[a], &cs[c as usize])
                                .total_cmp(&sq(&points[b], &cs[c as usize]))
                                .then(a.cmp(&b))
                        })
                        .unwrap()
                })
                .collect();
            reps.sort_unstable();
            best = Some((cost, reps));
        }
    }
    best.unwrap().1
}

#[tokio::test]
async fn two_blob_notes_summarize_to_one_sentence_per_blob() {
    let fx = fixture();
    let state = fx.state();
    let app = router(state.clone());
    for note in TWO_BLOB_NOTES {
        let (s, _) = post(&app, "/v1/ehr/blobby", json!({ "text": note })).await;
        assert_eq!(s, StatusCode::CREATED);
    }
    let (s, v) = post(&app, "/v1/summarize", json!({"patient_id": "blobby"})).await;
    assert_eq!(s, StatusCode::OK);
    check_schema("summarize_response", &v);
    assert_eq!(v["k_used"], 2);
    let picked: Vec<&str> = v["summary_sentences"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap())
        .collect();

    let pipeline = state.pipeline().unwrap();
    let points: Vec<Vec<f64>> = TWO_BLOB_NOTES
        .iter()
        .map(|t| pipeline.embed_sentence(t).unwrap())
        .collect();
    let want: Vec<&str> = exhaustive_two_means(&points)
        .into_iter()
        .map(|i| TWO_BLOB_NOTES[i])
        .collect();
    assert_eq!(picked, want);
    // Even positions are fever notes, odd ones knee notes.
    let pos: Vec<usize> = picked
        .iter()
        .map(|p| TWO_BLOB_NOTES.iter().position(|t| t == p).unwrap())
        .collect();
    assert_eq!(pos.iter().filter(|&&i| i % 2 == 0).count(), 1, "{picked:?}");
}

#[tokio::test]
async fn not_ready_state_answers_503() {
    let fx = fixture();
    let stores = Stores::open(fx.files.config.data_dir.clone()).unwrap();
    let state = Arc::new(AppState::new(
        None,
        stores,
        Settings::from(&fx.files.config),
    ));
    let app = router(state.clone());

    let (s, v) = call(&app, "GET", "/health", None).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    check_schema("health", &v);
    assert_eq!(v["status"], "not_ready");
    let (s, v) = post(&app, "/v1/ask", json!({"question": "fever"})).await;
    check_error(s, &v, StatusCode::SERVICE_UNAVAILABLE, "not_ready");
    let (s, v) = post(&app, "/v1/summarize", json!({"text": "Fever."})).await;
    check_error(s, &v, StatusCode::SERVICE_UNAVAILABLE, "not_ready");
    // Storage does not need the model.
    let (s, _) = post(&app, "/v1/ehr/p", json!({"text": "Note."})).await;
    assert_eq!(s, StatusCode::CREATED);

    state.swap_pipeline(Some(fx.files.config.load_pipeline().unwrap()));
    let (s, v) = post(&app, "/v1/ask", json!({"question": "fever"})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
}

#[test]
fn startup_refuses_missing_artifacts() {
    let fx = fixture();
    std::fs::remove_file(&fx.files.config.index_path).unwrap();
    match AppState::from_config(&fx.files.config) {
        Err(StartupError::MissingArtifact { kind, .. }) => assert_eq!(kind, "index"),
        Err(e) => panic!("wrong error {e}"),
        Ok(_) => panic!("started without an index"),
    }
    let mut cfg = fx.files.config.clone();
    cfg.adapters[0].dictionary = cfg.data_dir.join("missing.tsv");
    assert!(matches!(
        cfg.load_pipeline(),
        Err(StartupError::MissingArtifact { .. })
    ));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_do_not_interleave() {
    let fx = fixture();
    let app = router(fx.state());
    let mut sids = Vec::new();
    for _ in 0..6 {
        let (_, v) = call(&app, "POST", "/v1/sessions", None).await;
        sids.push(v["session_id"].as_str().unwrap().to_string());
    }
    let mut tasks = Vec::new();
    for (n, sid) in sids.iter().enumerate() {
        let app = app.clone();
        let sid = sid.clone();
        tasks.push(tokio::spawn(async move {
            for i in 0..5 {
                let q = format!("fever in a child session {n} turn {i} ?");
                let (s, _) = post(&app, "/v1/ask", json!({"question": q, "session_id": sid})).await;
                assert_eq!(s, StatusCode::OK);
            }
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
    for (n, sid) in sids.iter().enumerate() {
        let (_, rec) = call(&app, "GET", &format!("/v1/sessions/{sid}"), None).await;
        let turns = rec["turns"].as_array().unwrap();
        assert_eq!(turns.len(), 10);
        for (i, pair) in turns.chunks(2).enumerate() {
            assert_eq!(pair[0]["role"], "user");
            assert_eq!(pair[1]["role"], "assistant");
            assert_eq!(
                pair[0]["text"],
                format!("fever in a child session {n} turn {i} ?")
            );
        }
    }
}
