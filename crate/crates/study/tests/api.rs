use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use prosody_core::audio::write_wav;
use prosody_core::jsonl::write_jsonl;
use prosody_core::manifest::{Dataset, ManifestEntry};
use prosody_core::synth;
use prosody_core::triad::{consensus_filter, Judgment, PairChoice, Triad};
use prosody_study::http::TriadView;
use prosody_study::{open_app, SessionView};
use serde_json::json;
use tower::ServiceExt;

fn build_study(dir: &Path, n_triads: usize) -> Vec<Triad> {
    std::fs::create_dir_all(dir.join("clips")).unwrap();
    let mut entries = Vec::new();
    for i in 0..6 {
        let id = format!("clip{i}");
        let mut w = synth::sine(150.0 + 20.0 * i as f64, 0.3, 16_000, 0.5);
        w.clip_id = id.clone();
        write_wav(dir.join(format!("clips/{id}.wav")), &w).unwrap();
        entries.push(ManifestEntry {
            clip_id: id.clone(),
            dataset: Dataset::FiCa,
            lexical_form: "yeah".into(),
            speaker_id: "s".into(),
            wav_path: format!("clips/{id}.wav"),
            emb_paths: Default::default(),
        });
    }
    write_jsonl(dir.join("manifest.jsonl"), &entries).unwrap();
    let mut triads = Vec::new();
    'outer: for a in 0..6 {
        for b in a + 1..6 {
            for c in b + 1..6 {
                if triads.len() == n_triads {
                    break 'outer;
                }
                triads.push(Triad {
                    triad_id: format!("t{:02}", triads.len()),
                    dataset: Dataset::FiCa,
                    lexical_form: "yeah".into(),
                    clips: [format!("clip{a}"), format!("clip{b}"), format!("clip{c}")],
                });
            }
        }
    }
    write_jsonl(dir.join("triads.jsonl"), &triads).unwrap();
    triads
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<serde_json::Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

/// Runs a full session; ordinary triads get `answer`, the attention check
/// gets the identical pair when `attentive`.
async fn run_rater(app: &Router, rater: &str, answer: PairChoice, attentive: bool) -> SessionView {
    let (status, body) = call(app, "POST", "/api/session", Some(json!({ "rater_id": rater }))).await;
    assert_eq!(status, StatusCode::CREATED);
    let session: SessionView = serde_json::from_slice(&body).unwrap();
    assert_eq!(session.tasks.len(), 21);
    for id in &session.tasks {
        let (status, body) = call(app, "GET", &format!("/api/triad/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let t: TriadView = serde_json::from_slice(&body).unwrap();
        let identical = PairChoice::ALL.into_iter().find(|p| {
            let (i, j) = p.positions();
            t.clips[i] == t.clips[j]
        });
        let choice = match identical {
            Some(p) if attentive => p,
            Some(p) => PairChoice::ALL.into_iter().find(|q| *q != p).unwrap(),
            None => answer,
        };
        let (status, _) = call(
            app,
            "POST",
            "/api/judgment",
            Some(json!({ "triad_id": id, "rater_id": rater, "chosen_pair": choice })),
        )
        .await;
        assert_eq!(status, StatusCode::CREATED, "judging {id}");
    }
    session
}

async fn export(app: &Router) -> Vec<Judgment> {
    let (status, body) = call(app, "GET", "/api/export", None).await;
    assert_eq!(status, StatusCode::OK);
    String::from_utf8(body)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[tokio::test]
async fn unanimous_raters_yield_consensus() {
    let dir = tempfile::tempdir().unwrap();
    let triads = build_study(dir.path(), 20);
    let app = open_app(dir.path(), None, None).unwrap();
    assert!(export(&app).await.is_empty());
    for r in ["r1", "r2", "r3"] {
        run_rater(&app, r, PairChoice::AC, true).await;
    }
    let judgments = export(&app).await;
    assert_eq!(judgments.len(), 60);
    let consensus = consensus_filter(&judgments, &triads, 3);
    assert_eq!(consensus.len(), 20);
    assert!(consensus.iter().all(|c| c.consensus_pair == PairChoice::AC));

    let (status, _) = call(&app, "POST", "/api/session", Some(json!({ "rater_id": "r4" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let restarted = open_app(dir.path(), None, None).unwrap();
    assert_eq!(export(&restarted).await, judgments);
}

#[tokio::test]
async fn failed_attention_check_voids_session() {
    let dir = tempfile::tempdir().unwrap();
    build_study(dir.path(), 20);
    let app = open_app(dir.path(), None, None).unwrap();
    run_rater(&app, "careful", PairChoice::AB, true).await;
    run_rater(&app, "careless", PairChoice::AB, false).await;
    let judgments = export(&app).await;
    assert_eq!(judgments.len(), 20);
    assert!(judgments.iter().all(|j| j.rater_id == "careful"));
}

#[tokio::test]
async fn judgment_and_audio_errors() {
    let dir = tempfile::tempdir().unwrap();
    build_study(dir.path(), 20);
    let app = open_app(dir.path(), None, None).unwrap();
    let (_, body) = call(&app, "POST", "/api/session", Some(json!({ "rater_id": "r" }))).await;
    let s: SessionView = serde_json::from_slice(&body).unwrap();
    let j = json!({ "triad_id": s.tasks[0], "rater_id": "r", "chosen_pair": "AB" });
    assert_eq!(call(&app, "POST", "/api/judgment", Some(j.clone())).await.0, StatusCode::CREATED);
    assert_eq!(call(&app, "POST", "/api/judgment", Some(j)).await.0, StatusCode::CONFLICT);
    let unknown = json!({ "triad_id": "zz", "rater_id": "r", "chosen_pair": "AB" });
    assert_eq!(call(&app, "POST", "/api/judgment", Some(unknown)).await.0, StatusCode::NOT_FOUND);
    let stranger = json!({ "triad_id": s.tasks[1], "rater_id": "x", "chosen_pair": "AB" });
    assert_eq!(call(&app, "POST", "/api/judgment", Some(stranger)).await.0, StatusCode::FORBIDDEN);

    let on_disk = std::fs::read(dir.path().join("clips/clip0.wav")).unwrap();
    let (status, a) = call(&app, "GET", "/api/audio/clip0", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(a, on_disk);
    assert_eq!(call(&app, "GET", "/api/audio/clip0", None).await.1, on_disk);
    assert_eq!(call(&app, "GET", "/api/audio/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/", None).await.0, StatusCode::OK);
}

#[test]
fn bad_data_dir_is_missing_data() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        open_app(&dir.path().join("absent"), None, None),
        Err(prosody_study::StudyError::MissingData(_))
    ));
    build_study(dir.path(), 3);
    std::fs::remove_file(dir.path().join("clips/clip1.wav")).unwrap();
    assert!(matches!(open_app(dir.path(), None, None), Err(prosody_study::StudyError::MissingData(_))));
}
