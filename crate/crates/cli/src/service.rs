//! HTTP clients for the captioning and classification services.
//!
//! Captioner: `POST {base}/caption` with JSON
//! `{"image_png_base64": ..., "prompt": ...}`, answering `{"text": ...}`.
//! Classifier: `POST {base}/classify` with the PNG bytes as body, answering
//! `{"topk": [[label, probability], ...]}`.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use hazardscope::captions::{CaptionBackend, CaptionError, CaptionRequest};
use hazardscope::hazards::MAX_TOPK;
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

fn client(timeout: Duration) -> Result<reqwest::blocking::Client, PipelineError> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| PipelineError::Backend(format!("cannot build HTTP client: {e}")))
}

fn endpoint(base: &str, path: &str) -> String {
    format!("{}/{path}", base.trim_end_matches('/'))
}

/// Sends a request and returns the body of a 2xx answer.
fn exchange(req: reqwest::blocking::RequestBuilder, url: &str) -> Result<String, String> {
    let resp = req.send().map_err(|e| format!("{url}: {e}"))?;
    let status = resp.status();
    let body = resp.text().map_err(|e| format!("{url}: reading body: {e}"))?;
    if !status.is_success() {
        let snippet: String = body.chars().take(200).collect();
        return Err(format!("{url}: HTTP {status}: {snippet}"));
    }
    Ok(body)
}

#[derive(Serialize)]
struct CaptionBody<'a> {
    image_png_base64: String,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CaptionAnswer {
    text: String,
}

pub struct HttpCaptioner {
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpCaptioner {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, PipelineError> {
        Ok(Self {
            client: client(timeout)?,
            url: endpoint(base_url, "caption"),
        })
    }
}

impl CaptionBackend for HttpCaptioner {
    fn caption(&self, request: &CaptionRequest<'_>) -> Result<String, CaptionError> {
        let body = serde_json::to_string(&CaptionBody {
            image_png_base64: base64::engine::general_purpose::STANDARD.encode(request.image_png),
            prompt: request.prompt.text(),
        })
        .expect("caption body serializes");
        let req = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        let text = exchange(req, &self.url).map_err(CaptionError::Transport)?;
        let answer: CaptionAnswer = serde_json::from_str(&text)
            .map_err(|e| CaptionError::Transport(format!("{}: malformed answer: {e}", self.url)))?;
        Ok(answer.text)
    }
}

#[derive(Deserialize)]
struct ClassifyAnswer {
    topk: Vec<(String, f64)>,
}

pub struct HttpClassifier {
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpClassifier {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, PipelineError> {
        Ok(Self {
            client: client(timeout)?,
            url: endpoint(base_url, "classify"),
        })
    }

    /// Top labels for one crop, most probable first, at most [`MAX_TOPK`].
    pub fn classify(&self, image_png: &[u8]) -> Result<Vec<(String, f64)>, PipelineError> {
        let req = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "image/png")
            .body(image_png.to_vec());
        let text = exchange(req, &self.url).map_err(PipelineError::Backend)?;
        let mut answer: ClassifyAnswer = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Backend(format!("{}: malformed answer: {e}", self.url)))?;
        answer
            .topk
            .sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        answer.topk.truncate(MAX_TOPK);
        Ok(answer.topk)
    }
}

/// Caps the number of concurrent calls into a backend shared by workers.
pub struct Bounded<B> {
    inner: B,
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl<B> Bounded<B> {
    pub fn new(inner: B, limit: usize) -> Self {
        Self {
            inner,
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn with<R>(&self, f: impl FnOnce(&B) -> R) -> R {
        {
            let mut n = self.in_flight.lock().expect("in-flight counter poisoned");
            while *n >= self.limit {
                n = self.freed.wait(n).expect("in-flight counter poisoned");
            }
            *n += 1;
        }
        let out = f(&self.inner);
        *self.in_flight.lock().expect("in-flight counter poisoned") -= 1;
        self.freed.notify_one();
        out
    }
}

impl<B: CaptionBackend> CaptionBackend for Bounded<B> {
    fn caption(&self, request: &CaptionRequest<'_>) -> Result<String, CaptionError> {
        self.with(|b| b.caption(request))
    }
}
