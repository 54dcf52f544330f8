use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::annotations::{json_error, read_text};
use super::{IngestError, VideoAnnotations};
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
    reaction: Vec<bool>,
    #[serde(default)]
    hazards: Vec<RawHazards>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHazards {
    frame_index: usize,
    #[serde(default)]
    tracks: Vec<String>,
    #[serde(default)]
    classes: Vec<String>,
}

/// Per-frame labels of one video: reaction flag, hazard track set and hazard class set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub video_id: String,
    pub reaction: Vec<bool>,
    pub hazard_tracks: Vec<BTreeSet<String>>,
    pub hazard_classes: Vec<BTreeSet<String>>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.reaction.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reaction.is_empty()
    }
}

pub fn parse_ground_truth<T: Scalar>(
    path: &Path,
    annotations: &[VideoAnnotations<T>],
) -> Result<Vec<GroundTruth>, IngestError> {
    let text = read_text(path)?;
    parse_ground_truth_str(&text, &path.display().to_string(), annotations)
}

/// Parses and validates ground truth against the annotated frame counts.
/// Hazard track ids absent from the annotations only produce a warning: they
/// still count in the metric denominators.
pub fn parse_ground_truth_str<T: Scalar>(
    text: &str,
    source_name: &str,
    annotations: &[VideoAnnotations<T>],
) -> Result<Vec<GroundTruth>, IngestError> {
    let raw: RawFile = serde_json::from_str(text).map_err(|e| json_error(source_name, e))?;
    let by_id: HashMap<&str, &VideoAnnotations<T>> = annotations.iter().map(|v| (v.video_id.as_str(), v)).collect();

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(raw.videos.len());
    for video in raw.videos {
        if !seen.insert(video.video_id.clone()) {
            return Err(IngestError::DuplicateVideo(video.video_id));
        }
        let Some(ann) = by_id.get(video.video_id.as_str()) else {
            return Err(IngestError::UnknownVideo(video.video_id));
        };
        let n = ann.len();
        if video.reaction.len() != n {
            return Err(IngestError::LengthMismatch {
                video_id: video.video_id,
                what: "reaction series",
                expected: n,
                got: video.reaction.len(),
            });
        }
        let mut hazard_tracks = vec![BTreeSet::new(); n];
        let mut hazard_classes = vec![BTreeSet::new(); n];
        for entry in video.hazards {
            if entry.frame_index >= n {
                return Err(IngestError::FrameOutOfRange {
                    video_id: video.video_id,
                    frame_index: entry.frame_index,
                    frame_count: n,
                });
            }
            for track in &entry.tracks {
                if ann.detection(entry.frame_index, track).is_none() {
                    log::warn!(
                        "video {}: hazard track {track} has no detection in frame {}",
                        video.video_id,
                        entry.frame_index
                    );
                }
            }
            hazard_tracks[entry.frame_index].extend(entry.tracks);
            hazard_classes[entry.frame_index].extend(entry.classes);
        }
        out.push(GroundTruth {
            video_id: video.video_id,
            reaction: video.reaction,
            hazard_tracks,
            hazard_classes,
        });
    }
    Ok(out)
}

/// Serializes ground truth; frames without hazards are omitted from `hazards`.
pub fn ground_truth_to_json(truth: &[GroundTruth]) -> String {
    let raw = RawFile {
        videos: truth
            .iter()
            .map(|gt| RawVideo {
                video_id: gt.video_id.clone(),
                reaction: gt.reaction.clone(),
                hazards: gt
                    .hazard_tracks
                    .iter()
                    .zip(&gt.hazard_classes)
                    .enumerate()
                    .filter(|(_, (t, c))| !t.is_empty() || !c.is_empty())
                    .map(|(frame_index, (t, c))| RawHazards {
                        frame_index,
                        tracks: t.iter().cloned().collect(),
                        classes: c.iter().cloned().collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("ground truth schema serializes")
}
