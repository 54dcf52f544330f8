mod common;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::Engine;
use common::{bin, edit_config, s, synth};
use hazardscope::captions::{CaptionBackend, CaptionError, CaptionRequest, PromptId, RetryPolicy};
use hazardscope::hazards::MAX_TOPK;
use hazardscope_cli::service::{HttpCaptioner, HttpClassifier};
use serde_json::{json, Value};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

fn request(image: &[u8], prompt: PromptId) -> CaptionRequest<'_> {
    CaptionRequest {
        video_id: "v",
        track_id: "1",
        crop_rank: 0,
        prompt,
        image_png: image,
    }
}

/// Answers captions, failing the first attempt of every distinct body.
fn flaky_captioner(calls: Arc<AtomicUsize>) -> String {
    let seen = Mutex::new(HashMap::<Vec<u8>, usize>::new());
    common::serve(move |path, body| {
        calls.fetch_add(1, Ordering::SeqCst);
        if path != "/caption" {
            return (404, "{}".into());
        }
        let Ok(req) = serde_json::from_slice::<Value>(body) else {
            return (400, "{}".into());
        };
        let image = base64::engine::general_purpose::STANDARD
            .decode(req["image_png_base64"].as_str().unwrap_or(""))
            .unwrap_or_default();
        if !image.starts_with(PNG_MAGIC) {
            return (400, r#"{"error":"not a png"}"#.into());
        }
        let mut seen = seen.lock().unwrap();
        let n = seen.entry(body.to_vec()).or_default();
        *n += 1;
        if *n == 1 {
            return (500, r#"{"error":"warming up"}"#.into());
        }
        let prompt = req["prompt"].as_str().unwrap_or("");
        let text = if prompt == PromptId::Categories.text() {
            "deer road animal"
        } else if prompt == PromptId::Sentence.text() {
            "A deer on the road."
        } else {
            return (400, r#"{"error":"unknown prompt"}"#.into());
        };
        (200, json!({ "text": text }).to_string())
    })
}

fn classifier() -> String {
    common::serve(|path, body| {
        if path != "/classify" || !body.starts_with(PNG_MAGIC) {
            return (400, "{}".into());
        }
        (200, r#"{"topk":[["bus",0.05],["deer",0.9],["dog",0.05]]}"#.into())
    })
}

#[test]
fn captioner_retries_transient_failures() {
    let calls = Arc::new(AtomicUsize::new(0));
    let url = flaky_captioner(Arc::clone(&calls));
    let captioner = HttpCaptioner::new(&url, Duration::from_secs(10)).unwrap();
    let png = [PNG_MAGIC, b"rest"].concat();

    let once = captioner.caption(&request(&png, PromptId::Sentence));
    assert!(
        matches!(once, Err(CaptionError::Transport(ref m)) if m.contains("500")),
        "{once:?}"
    );
    assert_eq!(
        captioner.caption(&request(&png, PromptId::Sentence)).unwrap(),
        "A deer on the road."
    );

    let retried = RetryPolicy::immediate(2)
        .run(|| captioner.caption(&request(&png, PromptId::Categories)))
        .unwrap();
    assert_eq!(retried, "deer road animal");
    assert_eq!(calls.load(Ordering::SeqCst), 4);
}

#[test]
fn captioner_rejects_malformed_answers() {
    let url = common::serve(|_, _| (200, r#"{"caption":"x"}"#.into()));
    let captioner = HttpCaptioner::new(&url, Duration::from_secs(10)).unwrap();
    let err = captioner.caption(&request(PNG_MAGIC, PromptId::Sentence)).unwrap_err();
    assert!(
        matches!(err, CaptionError::Transport(ref m) if m.contains("malformed")),
        "{err:?}"
    );
}

#[test]
fn classifier_sorts_and_truncates() {
    let url = common::serve(|_, _| {
        let topk: Vec<(String, f64)> = (0..12).map(|i| (format!("c{i:02}"), f64::from(i) / 66.0)).collect();
        (200, json!({ "topk": topk }).to_string())
    });
    let got = HttpClassifier::new(&url, Duration::from_secs(10))
        .unwrap()
        .classify(PNG_MAGIC)
        .unwrap();
    assert_eq!(got.len(), MAX_TOPK);
    let labels: Vec<_> = got.iter().map(|(l, _)| l.as_str()).collect();
    assert_eq!(
        labels,
        ["c11", "c10", "c09", "c08", "c07", "c06", "c05", "c04", "c03", "c02"]
    );
}

#[test]
fn live_record_then_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(&tmp.path().join("data"), 42);
    let cache = tmp.path().join("recorded.jsonl");
    edit_config(&config, |c| {
        c["paths"]["predictions"] = json!(null);
        c["paths"]["caption_cache"] = json!(s(&cache));
        c["captions"]["mode"] = json!("record");
        c["captions"]["retry_attempts"] = json!(2);
    });
    let calls = Arc::new(AtomicUsize::new(0));
    let live = tmp.path().join("live");
    let out = bin()
        .args(["run", "--config", s(&config), "--out", s(&live)])
        .env("HAZARDSCOPE_CAPTIONER_URL", flaky_captioner(Arc::clone(&calls)))
        .env("HAZARDSCOPE_CLASSIFIER_URL", classifier())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let recorded = std::fs::read_to_string(&cache).unwrap();
    let lines = recorded.lines().count();
    assert!(lines > 0);
    // Identical crops share a request body, so only the first of them fails.
    let calls = calls.load(Ordering::SeqCst);
    assert!(
        calls > lines && calls <= 2 * lines,
        "{calls} calls for {lines} captions"
    );
    let predictions = std::fs::read_to_string(live.join("predictions.jsonl")).unwrap();
    assert!(predictions.lines().all(|l| l.contains("deer")));

    let submission = std::fs::read_to_string(live.join("submission.csv")).unwrap();
    assert!(submission.contains("deer road animal"));

    edit_config(&config, |c| c["captions"]["mode"] = json!("replay"));
    let predictions_path = live.join("predictions.jsonl");
    edit_config(&config, |c| c["paths"]["predictions"] = json!(s(&predictions_path)));
    let replay = tmp.path().join("replay");
    common::ok(&["run", "--config", s(&config), "--out", s(&replay)]);
    assert_eq!(
        submission,
        std::fs::read_to_string(replay.join("submission.csv")).unwrap()
    );
}
