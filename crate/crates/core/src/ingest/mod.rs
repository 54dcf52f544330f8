//! Annotation, ground-truth and frame ingestion.
//!
//! Videos arrive as JSON annotation files (one bounding box per object per
//! frame, tied together by a track id) plus an optional directory of frame
//! images. Everything here is immutable once constructed.

mod annotations;
mod crop;
mod frames;
mod ground_truth;

use std::path::PathBuf;

use thiserror::Error;

use crate::Scalar;

pub use annotations::{annotations_to_json, build_tracklets, parse_annotations, parse_annotations_str};
pub use crop::{crop_square, square_window, CropWindow};
pub use frames::{load_gray_frame, load_rgb_frame, FrameStore};
pub use ground_truth::{ground_truth_to_json, parse_ground_truth, parse_ground_truth_str, GroundTruth};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}: malformed JSON at line {line}, column {column}: {message}")]
    Json {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("video {video_id}, frame {frame_index}, track {track_id}: invalid bounding box ({reason})")]
    InvalidBox {
        video_id: String,
        frame_index: usize,
        track_id: String,
        reason: String,
    },
    #[error("video {video_id}: track {track_id} appears twice in frame {frame_index}")]
    DuplicateDetection {
        video_id: String,
        frame_index: usize,
        track_id: String,
    },
    #[error("video {video_id}: frame {frame_index} listed more than once")]
    DuplicateFrame { video_id: String, frame_index: usize },
    #[error("duplicate video id {0}")]
    DuplicateVideo(String),
    #[error("video {video_id}: invalid frame size {width}x{height}")]
    InvalidDimensions { video_id: String, width: u32, height: u32 },
    #[error("video {video_id}: {what} has {got} frames, annotations have {expected}")]
    LengthMismatch {
        video_id: String,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("video {video_id}: hazard entry for frame {frame_index} is outside 0..{frame_count}")]
    FrameOutOfRange {
        video_id: String,
        frame_index: usize,
        frame_count: usize,
    },
    #[error("ground truth references video {0} which has no annotations")]
    UnknownVideo(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: cannot decode frame: {source}", path.display())]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("video {video_id}: no image for frame {frame_index}")]
    MissingFrame { video_id: String, frame_index: usize },
    #[error("video {video_id}, frame {frame_index}: image is {got_width}x{got_height}, expected {width}x{height}")]
    FrameSize {
        video_id: String,
        frame_index: usize,
        width: u32,
        height: u32,
        got_width: u32,
        got_height: u32,
    },
    #[error("bounding box ({x1}, {y1}, {x2}, {y2}) lies outside the {width}x{height} frame")]
    CropOutside {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        width: u32,
        height: u32,
    },
}

/// Axis-aligned box in pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<T> {
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Scalar> BoundingBox<T> {
    /// Validates finiteness and corner ordering.
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Result<Self, String> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        if x2 < x1 {
            return Err(format!("x2 {x2} < x1 {x1}"));
        }
        if y2 < y1 {
            return Err(format!("y2 {y2} < y1 {y1}"));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> T {
        (self.x2 - self.x1).abs()
    }

    pub fn height(&self) -> T {
        (self.y2 - self.y1).abs()
    }

    /// `|x2 − x1|·|y2 − y1|`
    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> (T, T) {
        let half = T::lit(0.5);
        ((self.x1 + self.x2) * half, (self.y1 + self.y2) * half)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            x1: self.x1 * s,
            y1: self.y1 * s,
            x2: self.x2 * s,
            y2: self.y2 * s,
        }
    }

    pub fn translated(&self, dx: T, dy: T) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub frame_index: usize,
    pub track_id: String,
    pub bbox: BoundingBox<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnnotations<T> {
    pub frame_index: usize,
    pub detections: Vec<Detection<T>>,
}

/// One video's annotations. `frames[i].frame_index == i` for every `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoAnnotations<T> {
    pub video_id: String,
    pub width: u32,
    pub height: u32,
    pub frames: Vec<FrameAnnotations<T>>,
}

impl<T: Scalar> VideoAnnotations<T> {
    /// Number of frames `N`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn detections(&self) -> impl Iterator<Item = &Detection<T>> {
        self.frames.iter().flat_map(|f| f.detections.iter())
    }

    pub fn detection(&self, frame_index: usize, track_id: &str) -> Option<&Detection<T>> {
        self.frames
            .get(frame_index)?
            .detections
            .iter()
            .find(|d| d.track_id == track_id)
    }

    pub fn frame_center(&self) -> (T, T) {
        (
            T::of_usize(self.width as usize) / T::lit(2.0),
            T::of_usize(self.height as usize) / T::lit(2.0),
        )
    }
}

/// All detections sharing one track id, ordered by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet<T> {
    pub track_id: String,
    pub detections: Vec<Detection<T>>,
}

impl<T: Scalar> Tracklet<T> {
    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}
