use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CaptionError, PromptId};

/// One captioning request: a PNG crop plus the prompt to apply.
#[derive(Debug, Clone, Copy)]
pub struct CaptionRequest<'a> {
    pub video_id: &'a str,
    pub track_id: &'a str,
    pub crop_rank: usize,
    pub prompt: PromptId,
    pub image_png: &'a [u8],
}

impl CaptionRequest<'_> {
    pub fn key(&self) -> String {
        cache_key(self.video_id, self.track_id, self.crop_rank, self.prompt)
    }
}

pub trait CaptionBackend: Send + Sync {
    fn caption(&self, request: &CaptionRequest<'_>) -> Result<String, CaptionError>;
}

/// Hex SHA-256 of the unit-separator-joined request identity.
pub fn cache_key(video_id: &str, track_id: &str, crop_rank: usize, prompt: PromptId) -> String {
    let mut h = Sha256::new();
    h.update(format!(
        "{video_id}\x1f{track_id}\x1f{crop_rank}\x1f{}",
        prompt.as_str()
    ));
    hex::encode(h.finalize())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheRecord {
    key: String,
    text: String,
}

/// One cache JSONL line, newline included.
pub fn cache_line(key: &str, text: &str) -> String {
    let mut line = serde_json::to_string(&CacheRecord {
        key: key.into(),
        text: text.into(),
    })
    .expect("cache record serializes");
    line.push('\n');
    line
}

/// Answers from a recorded cache; misses are errors. Later lines win over
/// earlier ones with the same key.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    entries: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn open(path: &Path) -> Result<Self, CaptionError> {
        let text = std::fs::read_to_string(path).map_err(|source| CaptionError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, CaptionError> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: CacheRecord = serde_json::from_str(line).map_err(|e| CaptionError::Cache {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.insert(rec.key, rec.text);
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, key: String, text: String) {
        self.entries.insert(key, text);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl CaptionBackend for ReplayBackend {
    fn caption(&self, req: &CaptionRequest<'_>) -> Result<String, CaptionError> {
        let key = req.key();
        self.entries.get(&key).cloned().ok_or_else(|| CaptionError::CacheMiss {
            video_id: req.video_id.into(),
            track_id: req.track_id.into(),
            crop_rank: req.crop_rank,
            prompt: req.prompt,
            key,
        })
    }
}

/// Forwards to `inner` and appends every successful answer to a cache file.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    file: Mutex<File>,
}

impl<B: CaptionBackend> RecordingBackend<B> {
    pub fn new(inner: B, path: &Path) -> Result<Self, CaptionError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| CaptionError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }
}

impl<B: CaptionBackend> CaptionBackend for RecordingBackend<B> {
    fn caption(&self, req: &CaptionRequest<'_>) -> Result<String, CaptionError> {
        let text = self.inner.caption(req)?;
        let line = cache_line(&req.key(), &text);
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes()).map_err(|source| CaptionError::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(text)
    }
}

/// Attempts with exponential backoff between transient failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub initial_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// `attempts` tries without sleeping.
    pub fn immediate(attempts: usize) -> Self {
        Self {
            attempts,
            initial_delay: Duration::ZERO,
        }
    }

    pub fn run<R>(&self, mut f: impl FnMut() -> Result<R, CaptionError>) -> Result<R, CaptionError> {
        let mut delay = self.initial_delay;
        let mut attempt = 1;
        loop {
            match f() {
                Err(e) if e.is_transient() && attempt < self.attempts.max(1) => {
                    log::debug!("attempt {attempt} failed: {e}; retrying in {delay:?}");
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}
