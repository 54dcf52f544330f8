//! Five-word hazard captions from a vision-language backend.
//!
//! The largest square crops of a track are captioned with two fixed prompts
//! and the resulting words are ranked by frequency.

mod backend;
mod words;

use std::io::Cursor;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

use crate::ingest::{crop_square, load_rgb_frame, FrameStore, IngestError, Tracklet};
use crate::Scalar;

pub use backend::{
    cache_key, cache_line, CaptionBackend, CaptionRequest, RecordingBackend, ReplayBackend, RetryPolicy,
};
pub use words::{aggregate_words, tokenize, AggregatedCaption};

pub const DEFAULT_CROP_COUNT: usize = 5;
pub const DEFAULT_TAKE: usize = 5;

pub const CATEGORIES_PROMPT: &str = "Propose 5 most likely class labels of the object, the context of the image is traffic and unusual hazards such as various animals on the road. Write only the class names separated by spaces.";
pub const SENTENCE_PROMPT: &str =
    "Considering the context of traffic, caption the hazard in one short sentence of max 30 characters and 6 words.";

#[derive(Debug, Error)]
pub enum CaptionError {
    #[error("caption backend transport error: {0}")]
    Transport(String),
    #[error("replay cache has no entry for {video_id}/{track_id} crop {crop_rank} prompt {prompt} (key {key})")]
    CacheMiss {
        video_id: String,
        track_id: String,
        crop_rank: usize,
        prompt: PromptId,
        key: String,
    },
    #[error("{}:{line}: {message}", path.display())]
    Cache {
        path: std::path::PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("track {0} has no detections")]
    EmptyTracklet(String),
    #[error("track {track_id}, frame {frame_index}: {source}")]
    Frame {
        track_id: String,
        frame_index: usize,
        #[source]
        source: IngestError,
    },
    #[error("PNG encoding failed: {0}")]
    Encode(#[from] image::ImageError),
}

impl CaptionError {
    /// Whether another attempt could succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, CaptionError::Transport(_))
    }
}

/// Prompt identity; the derived order is the processing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PromptId {
    Categories,
    Sentence,
}

impl PromptId {
    pub const ALL: [PromptId; 2] = [PromptId::Categories, PromptId::Sentence];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptId::Categories => "categories",
            PromptId::Sentence => "sentence",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            PromptId::Categories => CATEGORIES_PROMPT,
            PromptId::Sentence => SENTENCE_PROMPT,
        }
    }
}

impl std::fmt::Display for PromptId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One square crop of a track; `rank` 1 is the largest box.
#[derive(Debug, Clone)]
pub struct Crop {
    pub rank: usize,
    pub frame_index: usize,
    pub image: RgbImage,
}

/// Backend answer for one (crop, prompt) pair. `text` is `None` when the
/// request failed or returned only whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCaption {
    pub track_id: String,
    pub crop_rank: usize,
    pub prompt: PromptId,
    pub text: Option<String>,
    pub error: Option<String>,
}

impl RawCaption {
    pub fn ok(track_id: &str, crop_rank: usize, prompt: PromptId, text: &str) -> Self {
        Self {
            track_id: track_id.into(),
            crop_rank,
            prompt,
            text: Some(text.into()),
            error: None,
        }
    }

    pub fn failed(&self) -> bool {
        self.text.is_none()
    }
}

/// Indices into `tracklet.detections` of the `count` largest boxes, largest
/// first; equal areas keep the earlier frame first.
pub fn largest_detections<T: Scalar>(tracklet: &Tracklet<T>, count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..tracklet.detections.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&tracklet.detections[a], &tracklet.detections[b]);
        db.bbox
            .area()
            .partial_cmp(&da.bbox.area())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(da.frame_index.cmp(&db.frame_index))
    });
    order.truncate(count);
    order
}

/// Square crops around the `count` largest boxes of a track.
pub fn select_largest_crops<T: Scalar>(
    tracklet: &Tracklet<T>,
    frames: &FrameStore,
    count: usize,
) -> Result<Vec<Crop>, CaptionError> {
    if tracklet.detections.is_empty() {
        return Err(CaptionError::EmptyTracklet(tracklet.track_id.clone()));
    }
    largest_detections(tracklet, count)
        .into_iter()
        .enumerate()
        .map(|(i, idx)| {
            let det = &tracklet.detections[idx];
            let wrap = |source| CaptionError::Frame {
                track_id: tracklet.track_id.clone(),
                frame_index: det.frame_index,
                source,
            };
            let frame = load_rgb_frame(frames, det.frame_index).map_err(wrap)?;
            let image = crop_square(&frame, &det.bbox).map_err(wrap)?;
            Ok(Crop {
                rank: i + 1,
                frame_index: det.frame_index,
                image,
            })
        })
        .collect()
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>, CaptionError> {
    let mut buf = Cursor::new(Vec::new());
    image.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

/// Requests one caption per (crop, prompt) in processing order. Backend
/// failures are retried per `retry` and then recorded on the caption.
pub fn caption_crops(
    video_id: &str,
    track_id: &str,
    crops: &[Crop],
    backend: &dyn CaptionBackend,
    retry: &RetryPolicy,
) -> Result<Vec<RawCaption>, CaptionError> {
    let mut ordered: Vec<&Crop> = crops.iter().collect();
    ordered.sort_by_key(|c| c.rank);
    let mut out = Vec::with_capacity(crops.len() * PromptId::ALL.len());
    for crop in ordered {
        let png = encode_png(&crop.image)?;
        for prompt in PromptId::ALL {
            let req = CaptionRequest {
                video_id,
                track_id,
                crop_rank: crop.rank,
                prompt,
                image_png: &png,
            };
            let (text, error) = match retry.run(|| backend.caption(&req)) {
                Ok(t) if t.trim().is_empty() => (None, Some("empty caption".to_string())),
                Ok(t) => (Some(t), None),
                Err(e) => {
                    log::warn!("{video_id}/{track_id} crop {} {prompt}: {e}", crop.rank);
                    (None, Some(e.to_string()))
                }
            };
            out.push(RawCaption {
                track_id: track_id.into(),
                crop_rank: crop.rank,
                prompt,
                text,
                error,
            });
        }
    }
    Ok(out)
}

/// Crops, captions and aggregates one track.
pub fn caption_track<T: Scalar>(
    video_id: &str,
    tracklet: &Tracklet<T>,
    frames: &FrameStore,
    backend: &dyn CaptionBackend,
    retry: &RetryPolicy,
) -> Result<(Vec<RawCaption>, AggregatedCaption), CaptionError> {
    let crops = select_largest_crops(tracklet, frames, DEFAULT_CROP_COUNT)?;
    let raw = caption_crops(video_id, &tracklet.track_id, &crops, backend, retry)?;
    let agg = aggregate_words(&tracklet.track_id, &raw, DEFAULT_TAKE);
    Ok((raw, agg))
}
