//! Hazard track selection.
//!
//! A base strategy proposes tracks per frame (closest to the frame centre, or
//! every annotated track); optional filters then drop tracks whose aggregated
//! classifier label is ordinary traffic or that barely move.

mod classify;
mod filters;
mod proximity;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ingest::{build_tracklets, VideoAnnotations};
use crate::Scalar;

pub use classify::{
    area_weighted_scores, normalize_label, parse_predictions, parse_predictions_str, predictions_to_jsonl,
    whitelist_filter, ClassPrediction, TrackClassScore, Whitelist, DEFAULT_WHITELIST, MAX_TOPK,
};
pub use filters::{trajectory_size_filter, DisplacementMeasure, ExtentMeasure, TrajectoryRule};
pub use proximity::{all_tracks, nearest_k_tracks};

#[derive(Debug, Error)]
pub enum HazardError {
    #[error("nearest-k selection needs k >= 1")]
    ZeroK,
    #[error("{source_name}:{line}: {message}")]
    Prediction {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("prediction for track {track_id} at frame {frame_index} has no matching detection")]
    UnknownDetection { track_id: String, frame_index: usize },
    #[error("whitelist filter enabled but no class predictions were supplied for video {0}")]
    MissingPredictions(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HazardEntry {
    pub track_id: String,
    /// Class label or caption attached by later stages.
    pub label: Option<String>,
}

impl HazardEntry {
    pub fn new(track_id: impl Into<String>) -> Self {
        Self {
            track_id: track_id.into(),
            label: None,
        }
    }
}

/// Ordered hazard entries for every frame of one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HazardSelection {
    pub video_id: String,
    pub frames: Vec<Vec<HazardEntry>>,
}

impl HazardSelection {
    pub fn empty(video_id: impl Into<String>, n: usize) -> Self {
        Self {
            video_id: video_id.into(),
            frames: vec![Vec::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Distinct track ids, sorted.
    pub fn track_ids(&self) -> BTreeSet<&str> {
        self.frames.iter().flatten().map(|e| e.track_id.as_str()).collect()
    }

    /// Keeps entries for which `keep` returns true, leaving frame order intact.
    pub fn retain(&mut self, mut keep: impl FnMut(&mut HazardEntry) -> bool) {
        for frame in &mut self.frames {
            frame.retain_mut(&mut keep);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseStrategy {
    NearestK(usize),
    AllTracks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HazardFilter {
    Whitelist,
    TrajectorySize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardConfig {
    pub base: BaseStrategy,
    /// Applied in order.
    pub filters: Vec<HazardFilter>,
    pub whitelist: Whitelist,
    pub trajectory: TrajectoryRule,
}

impl Default for HazardConfig {
    fn default() -> Self {
        Self {
            base: BaseStrategy::AllTracks,
            filters: vec![HazardFilter::Whitelist, HazardFilter::TrajectorySize],
            whitelist: Whitelist::default(),
            trajectory: TrajectoryRule::default(),
        }
    }
}

/// Base strategy followed by the configured filters. `predictions` must
/// cover this video when the whitelist filter is enabled.
pub fn select_hazards<T: Scalar>(
    video: &VideoAnnotations<T>,
    config: &HazardConfig,
    predictions: Option<&[ClassPrediction<T>]>,
) -> Result<HazardSelection, HazardError> {
    let mut selection = match config.base {
        BaseStrategy::NearestK(k) => nearest_k_tracks(video, k)?,
        BaseStrategy::AllTracks => all_tracks(video),
    };
    if config.filters.is_empty() {
        return Ok(selection);
    }
    let tracklets = build_tracklets(video);
    for filter in &config.filters {
        selection = match filter {
            HazardFilter::Whitelist => {
                let preds = predictions.ok_or_else(|| HazardError::MissingPredictions(video.video_id.clone()))?;
                let scores = area_weighted_scores(preds, &tracklets)?;
                whitelist_filter(&selection, &scores, &config.whitelist)
            }
            HazardFilter::TrajectorySize => trajectory_size_filter(&selection, &tracklets, &config.trajectory),
        };
    }
    Ok(selection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{BoundingBox, Detection, FrameAnnotations};

    fn moving_video() -> VideoAnnotations<f64> {
        let frames = (0..4)
            .map(|i| {
                let x = f64::from(i) * 40.0;
                FrameAnnotations {
                    frame_index: i as usize,
                    detections: vec![
                        Detection {
                            frame_index: i as usize,
                            track_id: "a".into(),
                            bbox: BoundingBox::new(x, 0.0, x + 10.0, 10.0).unwrap(),
                        },
                        Detection {
                            frame_index: i as usize,
                            track_id: "b".into(),
                            bbox: BoundingBox::new(50.0 + x, 50.0, 60.0 + x, 60.0).unwrap(),
                        },
                    ],
                }
            })
            .collect();
        VideoAnnotations {
            video_id: "v".into(),
            width: 200,
            height: 100,
            frames,
        }
    }

    fn preds(label: &str) -> Vec<ClassPrediction<f64>> {
        ["a", "b"]
            .iter()
            .flat_map(|t| {
                (0..4).map(move |f| ClassPrediction {
                    video_id: "v".into(),
                    track_id: (*t).into(),
                    frame_index: f,
                    topk: vec![(label.into(), 0.9)],
                })
            })
            .collect()
    }

    #[test]
    fn no_filters_is_all_tracks() {
        let v = moving_video();
        let cfg = HazardConfig {
            filters: vec![],
            ..HazardConfig::default()
        };
        assert_eq!(select_hazards(&v, &cfg, None).unwrap(), all_tracks(&v));
    }

    #[test]
    fn all_buses_filtered_out() {
        let v = moving_video();
        let cfg = HazardConfig {
            filters: vec![HazardFilter::Whitelist],
            ..HazardConfig::default()
        };
        let sel = select_hazards(&v, &cfg, Some(&preds("bus"))).unwrap();
        assert!(sel.frames.iter().all(Vec::is_empty));
        let kept = select_hazards(&v, &cfg, Some(&preds("kangaroo"))).unwrap();
        assert_eq!(kept.frames[0].len(), 2);
        assert_eq!(kept.frames[0][0].label.as_deref(), Some("kangaroo"));
    }

    #[test]
    fn nearest_one_is_baseline() {
        let v = moving_video();
        let cfg = HazardConfig {
            base: BaseStrategy::NearestK(1),
            filters: vec![],
            ..HazardConfig::default()
        };
        let sel = select_hazards(&v, &cfg, None).unwrap();
        assert_eq!(sel, nearest_k_tracks(&v, 1).unwrap());
        assert!(sel.frames.iter().all(|f| f.len() == 1));
    }

    #[test]
    fn whitelist_without_predictions_errors() {
        let v = moving_video();
        assert!(matches!(
            select_hazards(&v, &HazardConfig::default(), None),
            Err(HazardError::MissingPredictions(_))
        ));
    }
}
