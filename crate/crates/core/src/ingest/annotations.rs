use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoundingBox, Detection, FrameAnnotations, IngestError, Tracklet, VideoAnnotations};
use crate::Scalar;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    videos: Vec<RawVideo>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVideo {
    video_id: String,
    width: u32,
    height: u32,
    frames: Vec<RawFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    frame_index: usize,
    detections: Vec<RawDetection>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    track_id: String,
    bbox: [f64; 4],
}

pub(crate) fn json_error(source_name: &str, err: serde_json::Error) -> IngestError {
    IngestError::Json {
        source_name: source_name.to_owned(),
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Reads an annotation file. Frames missing from the file are materialized empty.
pub fn parse_annotations<T: Scalar>(path: &Path) -> Result<Vec<VideoAnnotations<T>>, IngestError> {
    let text = read_text(path)?;
    parse_annotations_str(&text, &path.display().to_string())
}

/// Parses annotation JSON; `source_name` only feeds error messages.
pub fn parse_annotations_str<T: Scalar>(
    text: &str,
    source_name: &str,
) -> Result<Vec<VideoAnnotations<T>>, IngestError> {
    let raw: RawFile = serde_json::from_str(text).map_err(|e| json_error(source_name, e))?;
    let mut seen = HashSet::new();
    let mut videos = Vec::with_capacity(raw.videos.len());
    for video in raw.videos {
        if !seen.insert(video.video_id.clone()) {
            return Err(IngestError::DuplicateVideo(video.video_id));
        }
        videos.push(convert_video(video)?);
    }
    Ok(videos)
}

fn convert_video<T: Scalar>(raw: RawVideo) -> Result<VideoAnnotations<T>, IngestError> {
    let RawVideo {
        video_id,
        width,
        height,
        frames: raw_frames,
    } = raw;
    if width == 0 || height == 0 {
        return Err(IngestError::InvalidDimensions {
            video_id,
            width,
            height,
        });
    }

    let mut by_index: BTreeMap<usize, Vec<Detection<T>>> = BTreeMap::new();
    for frame in raw_frames {
        if by_index.contains_key(&frame.frame_index) {
            return Err(IngestError::DuplicateFrame {
                video_id,
                frame_index: frame.frame_index,
            });
        }
        let mut tracks = BTreeSet::new();
        let mut detections = Vec::with_capacity(frame.detections.len());
        for det in frame.detections {
            if !tracks.insert(det.track_id.clone()) {
                return Err(IngestError::DuplicateDetection {
                    video_id,
                    frame_index: frame.frame_index,
                    track_id: det.track_id,
                });
            }
            let [x1, y1, x2, y2] = det.bbox.map(T::lit);
            let bbox = BoundingBox::new(x1, y1, x2, y2).map_err(|reason| IngestError::InvalidBox {
                video_id: video_id.clone(),
                frame_index: frame.frame_index,
                track_id: det.track_id.clone(),
                reason,
            })?;
            detections.push(Detection {
                frame_index: frame.frame_index,
                track_id: det.track_id,
                bbox,
            });
        }
        by_index.insert(frame.frame_index, detections);
    }

    let count = by_index.keys().next_back().map_or(0, |last| last + 1);
    let mut frames: Vec<FrameAnnotations<T>> = (0..count)
        .map(|frame_index| FrameAnnotations {
            frame_index,
            detections: Vec::new(),
        })
        .collect();
    for (index, detections) in by_index {
        frames[index].detections = detections;
    }

    Ok(VideoAnnotations {
        video_id,
        width,
        height,
        frames,
    })
}

/// Serializes videos back to the annotation schema. Empty frames are kept.
pub fn annotations_to_json<T: Scalar>(videos: &[VideoAnnotations<T>]) -> String {
    let raw = RawFile {
        videos: videos
            .iter()
            .map(|v| RawVideo {
                video_id: v.video_id.clone(),
                width: v.width,
                height: v.height,
                frames: v
                    .frames
                    .iter()
                    .map(|f| RawFrame {
                        frame_index: f.frame_index,
                        detections: f
                            .detections
                            .iter()
                            .map(|d| RawDetection {
                                track_id: d.track_id.clone(),
                                bbox: [d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2].map(Scalar::to_f64_lossy),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("annotation schema serializes")
}

/// Groups detections by track id. Tracklets come back sorted by track id.
pub fn build_tracklets<T: Scalar>(video: &VideoAnnotations<T>) -> Vec<Tracklet<T>> {
    let mut by_track: BTreeMap<&str, Vec<Detection<T>>> = BTreeMap::new();
    for det in video.detections() {
        by_track.entry(&det.track_id).or_default().push(det.clone());
    }
    by_track
        .into_iter()
        .map(|(track_id, detections)| Tracklet {
            track_id: track_id.to_owned(),
            detections,
        })
        .collect()
}
