//! Reaction, detection and classification accuracies and their macro mean.
//!
//! Every accuracy is a per-frame mean. For detection and classification a
//! frame with an empty truth set scores 1 when the prediction is also empty
//! and is skipped otherwise; a video whose frames are all skipped scores 0.
//! Classes are compared as token sets using [`tokenize`].

use std::collections::BTreeSet;

use thiserror::Error;

use crate::captions::tokenize;
use crate::hazards::HazardSelection;
use crate::ingest::GroundTruth;
use crate::reaction::ReactionSeries;
use crate::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("video {video_id}: {what} has {got} frames, ground truth has {expected}")]
    LengthMismatch {
        video_id: String,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("video {0} has no frames")]
    Empty(String),
    #[error("no prediction for video {0}")]
    MissingVideo(String),
}

fn check_len(truth: &GroundTruth, what: &'static str, got: usize) -> Result<(), MetricsError> {
    if truth.is_empty() {
        return Err(MetricsError::Empty(truth.video_id.clone()));
    }
    if got != truth.len() {
        return Err(MetricsError::LengthMismatch {
            video_id: truth.video_id.clone(),
            what,
            expected: truth.len(),
            got,
        });
    }
    Ok(())
}

/// Fraction of frames whose reaction flag matches.
pub fn reaction_accuracy<T: Scalar>(pred: &ReactionSeries, truth: &GroundTruth) -> Result<T, MetricsError> {
    check_len(truth, "reaction series", pred.len())?;
    let hits = pred
        .values()
        .iter()
        .zip(&truth.reaction)
        .filter(|(a, b)| a == b)
        .count();
    Ok(T::of_usize(hits) / T::of_usize(truth.len()))
}

/// Mean over scored frames of `|truth ∩ pred| / |truth|`.
fn set_recall<T: Scalar>(pairs: impl Iterator<Item = (BTreeSet<String>, BTreeSet<String>)>) -> T {
    let mut sum = T::zero();
    let mut counted = 0usize;
    for (truth, pred) in pairs {
        if truth.is_empty() {
            if pred.is_empty() {
                sum += T::one();
                counted += 1;
            }
            continue;
        }
        let hit = truth.intersection(&pred).count();
        sum += T::of_usize(hit) / T::of_usize(truth.len());
        counted += 1;
    }
    if counted == 0 {
        T::zero()
    } else {
        sum / T::of_usize(counted)
    }
}

pub fn detection_accuracy<T: Scalar>(pred: &HazardSelection, truth: &GroundTruth) -> Result<T, MetricsError> {
    check_len(truth, "hazard selection", pred.len())?;
    Ok(set_recall(truth.hazard_tracks.iter().zip(&pred.frames).map(
        |(t, p)| (t.clone(), p.iter().map(|e| e.track_id.clone()).collect()),
    )))
}

/// Token set of a collection of labels.
pub fn token_set<'a>(labels: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
    labels.into_iter().flat_map(tokenize).collect()
}

pub fn classification_accuracy<T: Scalar>(pred: &HazardSelection, truth: &GroundTruth) -> Result<T, MetricsError> {
    check_len(truth, "hazard selection", pred.len())?;
    Ok(set_recall(truth.hazard_classes.iter().zip(&pred.frames).map(
        |(t, p)| {
            (
                token_set(t.iter().map(String::as_str)),
                token_set(p.iter().filter_map(|e| e.label.as_deref())),
            )
        },
    )))
}

pub fn macro_accuracy<T: Scalar>(reaction: T, detection: T, classification: T) -> T {
    (reaction + detection + classification) / T::lit(3.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores<T> {
    pub a_reaction: T,
    pub a_detection: T,
    pub a_classific: T,
    pub a_macro: T,
}

impl<T: Scalar> Scores<T> {
    pub fn new(a_reaction: T, a_detection: T, a_classific: T) -> Self {
        Self {
            a_reaction,
            a_detection,
            a_classific,
            a_macro: macro_accuracy(a_reaction, a_detection, a_classific),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoScores<T> {
    pub video_id: String,
    pub scores: Scores<T>,
}

/// Per-video scores sorted by video id, plus their unweighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<T> {
    pub videos: Vec<VideoScores<T>>,
    pub overall: Scores<T>,
}

/// Predictions for one video.
#[derive(Debug, Clone, Copy)]
pub struct VideoPrediction<'a> {
    pub reaction: &'a ReactionSeries,
    pub hazards: &'a HazardSelection,
}

pub fn score_video<T: Scalar>(pred: VideoPrediction<'_>, truth: &GroundTruth) -> Result<Scores<T>, MetricsError> {
    Ok(Scores::new(
        reaction_accuracy(pred.reaction, truth)?,
        detection_accuracy(pred.hazards, truth)?,
        classification_accuracy(pred.hazards, truth)?,
    ))
}

/// Scores every ground-truth video. `lookup` returns the predictions for a
/// video id.
pub fn evaluate<'a, T: Scalar>(
    truths: &[GroundTruth],
    mut lookup: impl FnMut(&str) -> Option<VideoPrediction<'a>>,
) -> Result<EvalReport<T>, MetricsError> {
    let mut ordered: Vec<&GroundTruth> = truths.iter().collect();
    ordered.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let mut videos = Vec::with_capacity(ordered.len());
    for truth in ordered {
        let pred = lookup(&truth.video_id).ok_or_else(|| MetricsError::MissingVideo(truth.video_id.clone()))?;
        videos.push(VideoScores {
            video_id: truth.video_id.clone(),
            scores: score_video(pred, truth)?,
        });
    }
    let mean = |f: fn(&Scores<T>) -> T| {
        if videos.is_empty() {
            return T::zero();
        }
        let sum: T = videos.iter().map(|v| f(&v.scores)).fold(T::zero(), |a, b| a + b);
        sum / T::of_usize(videos.len())
    };
    let overall = Scores::new(mean(|s| s.a_reaction), mean(|s| s.a_detection), mean(|s| s.a_classific));
    Ok(EvalReport { videos, overall })
}

fn scores_json<T: Scalar>(s: &Scores<T>) -> serde_json::Value {
    serde_json::json!({
        "a_reaction": s.a_reaction.to_f64_lossy(),
        "a_detection": s.a_detection.to_f64_lossy(),
        "a_classific": s.a_classific.to_f64_lossy(),
        "a_macro": s.a_macro.to_f64_lossy(),
    })
}

impl<T: Scalar> EvalReport<T> {
    pub fn to_json(&self) -> serde_json::Value {
        let videos: Vec<_> = self
            .videos
            .iter()
            .map(|v| {
                let mut o = scores_json(&v.scores);
                o["video_id"] = v.video_id.clone().into();
                o
            })
            .collect();
        serde_json::json!({ "videos": videos, "overall": scores_json(&self.overall) })
    }

    /// One line per video.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("video_id,a_reaction,a_detection,a_classific,a_macro\n");
        for v in &self.videos {
            let s = &v.scores;
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                v.video_id,
                s.a_reaction.to_f64_lossy(),
                s.a_detection.to_f64_lossy(),
                s.a_classific.to_f64_lossy(),
                s.a_macro.to_f64_lossy()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazards::HazardEntry;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn truth(reaction: Vec<bool>, tracks: Vec<&[&str]>, classes: Vec<&[&str]>) -> GroundTruth {
        GroundTruth {
            video_id: "v".into(),
            reaction,
            hazard_tracks: tracks.into_iter().map(set).collect(),
            hazard_classes: classes.into_iter().map(set).collect(),
        }
    }

    fn sel(frames: Vec<Vec<(&str, Option<&str>)>>) -> HazardSelection {
        HazardSelection {
            video_id: "v".into(),
            frames: frames
                .into_iter()
                .map(|f| {
                    f.into_iter()
                        .map(|(t, l)| HazardEntry {
                            track_id: t.into(),
                            label: l.map(String::from),
                        })
                        .collect()
                })
                .collect(),
        }
    }

    #[test]
    fn reaction_examples() {
        let t = truth(vec![false, false, true, true], vec![&[]; 4], vec![&[]; 4]);
        let same = ReactionSeries::from_values("v", t.reaction.clone()).unwrap();
        assert_eq!(reaction_accuracy::<f64>(&same, &t).unwrap(), 1.0);
        let three = ReactionSeries::from_step("v", Some(1), 4);
        assert_eq!(reaction_accuracy::<f64>(&three, &t).unwrap(), 0.75);
        let t2 = truth(vec![false, true], vec![&[]; 2], vec![&[]; 2]);
        let comp = ReactionSeries::from_values("v", vec![true, false]).unwrap_err();
        assert!(matches!(comp, crate::reaction::ReactionError::NotMonotone(1)));
        let all_true = ReactionSeries::from_step("v", Some(0), 1);
        let t3 = truth(vec![false], vec![&[]], vec![&[]]);
        assert_eq!(reaction_accuracy::<f64>(&all_true, &t3).unwrap(), 0.0);
        assert!(matches!(
            reaction_accuracy::<f64>(&three, &t2),
            Err(MetricsError::LengthMismatch {
                expected: 2,
                got: 4,
                ..
            })
        ));
    }

    #[test]
    fn detection_examples() {
        let t = truth(vec![false], vec![&["a", "b"]], vec![&[]]);
        assert_eq!(
            detection_accuracy::<f64>(&sel(vec![vec![("a", None)]]), &t).unwrap(),
            0.5
        );
        let sup = sel(vec![vec![("a", None), ("b", None), ("c", None)]]);
        assert_eq!(detection_accuracy::<f64>(&sup, &t).unwrap(), 1.0);
        assert_eq!(
            detection_accuracy::<f64>(&sel(vec![vec![("z", None)]]), &t).unwrap(),
            0.0
        );
    }

    #[test]
    fn empty_truth_frames() {
        let t = truth(vec![false; 3], vec![&[], &[], &["a"]], vec![&[]; 3]);
        // frame 0 empty/empty scores 1, frame 1 spurious is skipped, frame 2 hit
        let p = sel(vec![vec![], vec![("x", None)], vec![("a", None)]]);
        assert_eq!(detection_accuracy::<f64>(&p, &t).unwrap(), 1.0);
        let p = sel(vec![vec![("x", None)], vec![("x", None)], vec![]]);
        assert_eq!(detection_accuracy::<f64>(&p, &t).unwrap(), 0.0);
        let t = truth(vec![false], vec![&[]], vec![&[]]);
        assert_eq!(
            detection_accuracy::<f64>(&sel(vec![vec![("x", None)]]), &t).unwrap(),
            0.0
        );
    }

    #[test]
    fn classification_examples() {
        let t = truth(vec![false], vec![&["a"]], vec![&["dog"]]);
        let p = sel(vec![vec![("a", Some("Dog cat"))]]);
        assert_eq!(classification_accuracy::<f64>(&p, &t).unwrap(), 1.0);
        let t = truth(vec![false], vec![&["a"]], vec![&["dog", "leash"]]);
        let p = sel(vec![vec![("a", Some("dog."))]]);
        assert_eq!(classification_accuracy::<f64>(&p, &t).unwrap(), 0.5);
        let p = sel(vec![vec![("a", Some("bus"))]]);
        assert_eq!(classification_accuracy::<f64>(&p, &t).unwrap(), 0.0);
    }

    #[test]
    fn macro_examples() {
        assert!((macro_accuracy(0.9, 0.6, 0.3_f64) - 0.6).abs() < 1e-15);
        assert_eq!(macro_accuracy(1.0, 1.0, 1.0_f64), 1.0);
        assert_eq!(macro_accuracy(0.0, 0.0, 0.0_f64), 0.0);
    }

    #[test]
    fn evaluate_sorts_and_averages() {
        let mut t1 = truth(vec![false, true], vec![&["a"], &["a"]], vec![&["dog"], &["dog"]]);
        t1.video_id = "b".into();
        let mut t2 = truth(vec![false, false], vec![&[], &[]], vec![&[], &[]]);
        t2.video_id = "a".into();
        let r_b = ReactionSeries::from_step("b", Some(1), 2);
        let h_b = sel(vec![vec![("a", Some("dog"))], vec![]]);
        let r_a = ReactionSeries::from_step("a", None, 2);
        let h_a = sel(vec![vec![], vec![]]);
        let report: EvalReport<f64> = evaluate(&[t1.clone(), t2.clone()], |id| match id {
            "a" => Some(VideoPrediction {
                reaction: &r_a,
                hazards: &h_a,
            }),
            "b" => Some(VideoPrediction {
                reaction: &r_b,
                hazards: &h_b,
            }),
            _ => None,
        })
        .unwrap();
        assert_eq!(report.videos[0].video_id, "a");
        assert_eq!(report.videos[0].scores, Scores::new(1.0, 1.0, 1.0));
        assert_eq!(report.videos[1].scores, Scores::new(1.0, 0.5, 0.5));
        assert_eq!(report.overall.a_detection, 0.75);
        assert_eq!(report.overall.a_macro, (1.0 + 0.75 + 0.75) / 3.0);
        let json = report.to_json();
        assert_eq!(json["videos"][1]["video_id"], "b");
        assert_eq!(report.to_csv().lines().count(), 3);
        let missing: Result<EvalReport<f64>, _> = evaluate(&[t1], |_| None);
        assert_eq!(missing.unwrap_err(), MetricsError::MissingVideo("b".into()));
    }

    proptest! {
        #[test]
        fn bounds_reflexivity_and_monotonicity(
            frames in prop::collection::vec(
                (prop::collection::btree_set(0u8..6, 0..4), prop::collection::btree_set(0u8..6, 0..4)), 1..12),
            step in prop::option::of(0usize..12),
        ) {
            let n = frames.len();
            let t = GroundTruth {
                video_id: "v".into(),
                reaction: (0..n).map(|i| step.is_some_and(|s| i >= s)).collect(),
                hazard_tracks: frames.iter().map(|(h, _)| h.iter().map(|x| format!("t{x}")).collect()).collect(),
                hazard_classes: frames.iter().map(|(h, _)| h.iter().map(|x| format!("c{x}")).collect()).collect(),
            };
            let refl = ReactionSeries::from_values("v", t.reaction.clone()).unwrap();
            prop_assert_eq!(reaction_accuracy::<f64>(&refl, &t).unwrap(), 1.0);

            let pred = HazardSelection {
                video_id: "v".into(),
                frames: frames.iter().map(|(_, p)| p.iter().map(|x| HazardEntry {
                    track_id: format!("t{x}"),
                    label: Some(format!("c{x} C{x}")),
                }).collect()).collect(),
            };
            let d = detection_accuracy::<f64>(&pred, &t).unwrap();
            let c = classification_accuracy::<f64>(&pred, &t).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((0.0..=1.0).contains(&c));
            // duplicates and order inside a frame do not matter
            let mut doubled = pred.clone();
            for f in &mut doubled.frames {
                let copy = f.clone();
                f.extend(copy);
                f.reverse();
            }
            prop_assert_eq!(classification_accuracy::<f64>(&doubled, &t).unwrap(), c);

            // growing every non-empty-truth frame toward a superset never lowers the score
            let mut grown = pred.clone();
            for (f, (h, _)) in grown.frames.iter_mut().zip(&frames) {
                if !h.is_empty() {
                    for x in h {
                        f.push(HazardEntry::new(format!("t{x}")));
                    }
                }
            }
            prop_assert!(detection_accuracy::<f64>(&grown, &t).unwrap() >= d - 1e-12);
        }
    }
}
