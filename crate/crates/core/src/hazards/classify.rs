use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HazardError, HazardSelection};
use crate::ingest::Tracklet;
use crate::Scalar;

/// Longest top-k list a record may carry.
pub const MAX_TOPK: usize = 10;

/// Labels treated as ordinary traffic.
pub const DEFAULT_WHITELIST: [&str; 5] = ["pickup truck", "bus", "tank", "motorcycle", "cloud"];

/// Lowercase, trim and collapse internal whitespace.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Classifier output for one track in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrediction<T> {
    pub video_id: String,
    pub track_id: String,
    pub frame_index: usize,
    pub topk: Vec<(String, T)>,
}

impl<T: Scalar> ClassPrediction<T> {
    /// Checks probabilities, label presence, uniqueness and list length.
    pub fn validate(&self) -> Result<(), String> {
        if self.topk.len() > MAX_TOPK {
            return Err(format!(
                "top-k list has {} entries, at most {MAX_TOPK} allowed",
                self.topk.len()
            ));
        }
        let mut seen = BTreeSet::new();
        for (label, p) in &self.topk {
            let norm = normalize_label(label);
            if norm.is_empty() {
                return Err("empty class label".into());
            }
            if !p.is_finite() || *p < T::zero() || *p > T::one() {
                return Err(format!("probability {p} for {label:?} is outside [0, 1]"));
            }
            if !seen.insert(norm) {
                return Err(format!("class {label:?} listed twice"));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawPrediction {
    video_id: String,
    track_id: String,
    frame_index: usize,
    topk: Vec<(String, f64)>,
}

pub fn parse_predictions<T: Scalar>(path: &Path) -> Result<Vec<ClassPrediction<T>>, HazardError> {
    let text = std::fs::read_to_string(path).map_err(|source| HazardError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_predictions_str(&text, &path.display().to_string())
}

/// Parses JSON lines; blank lines are skipped.
pub fn parse_predictions_str<T: Scalar>(text: &str, source_name: &str) -> Result<Vec<ClassPrediction<T>>, HazardError> {
    let err = |line: usize, message: String| HazardError::Prediction {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPrediction = serde_json::from_str(line).map_err(|e| err(i + 1, e.to_string()))?;
        let pred = ClassPrediction {
            video_id: raw.video_id,
            track_id: raw.track_id,
            frame_index: raw.frame_index,
            topk: raw.topk.into_iter().map(|(l, p)| (l, T::lit(p))).collect(),
        };
        pred.validate().map_err(|m| err(i + 1, m))?;
        out.push(pred);
    }
    Ok(out)
}

pub fn predictions_to_jsonl<T: Scalar>(predictions: &[ClassPrediction<T>]) -> String {
    let mut out = String::new();
    for p in predictions {
        let raw = RawPrediction {
            video_id: p.video_id.clone(),
            track_id: p.track_id.clone(),
            frame_index: p.frame_index,
            topk: p.topk.iter().map(|(l, v)| (l.clone(), v.to_f64_lossy())).collect(),
        };
        out.push_str(&serde_json::to_string(&raw).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

/// Aggregated class scores for one track.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackClassScore<T> {
    pub track_id: String,
    /// Keyed by normalized label.
    pub scores: BTreeMap<String, T>,
    /// Highest score; equal scores go to the smallest label.
    pub argmax: Option<String>,
}

/// Sums probability times box area per class over every prediction of each
/// track. Labels are normalized before summing. Output is sorted by track id;
/// tracks without predictions are absent.
pub fn area_weighted_scores<T: Scalar>(
    predictions: &[ClassPrediction<T>],
    tracklets: &[Tracklet<T>],
) -> Result<Vec<TrackClassScore<T>>, HazardError> {
    let by_id: BTreeMap<&str, &Tracklet<T>> = tracklets.iter().map(|t| (t.track_id.as_str(), t)).collect();
    let mut sums: BTreeMap<&str, BTreeMap<String, T>> = BTreeMap::new();
    for p in predictions {
        let area = by_id
            .get(p.track_id.as_str())
            .and_then(|t| t.detections.iter().find(|d| d.frame_index == p.frame_index))
            .map(|d| d.bbox.area())
            .ok_or_else(|| HazardError::UnknownDetection {
                track_id: p.track_id.clone(),
                frame_index: p.frame_index,
            })?;
        let entry = sums.entry(p.track_id.as_str()).or_default();
        for (label, prob) in &p.topk {
            *entry.entry(normalize_label(label)).or_insert_with(T::zero) += *prob * area;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(track_id, scores)| {
            let mut argmax: Option<(&String, T)> = None;
            for (label, &s) in &scores {
                if argmax.is_none_or(|(_, best)| s > best) {
                    argmax = Some((label, s));
                }
            }
            TrackClassScore {
                track_id: track_id.to_string(),
                argmax: argmax.map(|(l, _)| l.clone()),
                scores,
            }
        })
        .collect())
}

/// Normalized labels that are not hazards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Whitelist(BTreeSet<String>);

impl Whitelist {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self(
            labels
                .into_iter()
                .map(|l| normalize_label(l.as_ref()))
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.contains(&normalize_label(label))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Whitelist {
    fn default() -> Self {
        Self::new(DEFAULT_WHITELIST)
    }
}

/// Drops tracks whose argmax label is whitelisted and attaches the argmax
/// label to the rest. Unscored tracks pass through untouched.
pub fn whitelist_filter<T: Scalar>(
    selection: &HazardSelection,
    scores: &[TrackClassScore<T>],
    whitelist: &Whitelist,
) -> HazardSelection {
    let argmax: BTreeMap<&str, Option<&String>> = scores
        .iter()
        .map(|s| (s.track_id.as_str(), s.argmax.as_ref()))
        .collect();
    let mut out = selection.clone();
    out.retain(|entry| match argmax.get(entry.track_id.as_str()) {
        Some(Some(label)) => {
            if whitelist.contains(label) {
                false
            } else {
                entry.label = Some((*label).clone());
                true
            }
        }
        _ => true,
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazards::HazardEntry;
    use crate::ingest::{BoundingBox, Detection};
    use proptest::prelude::*;

    fn tracklet(id: &str, areas: &[(usize, f64)]) -> Tracklet<f64> {
        Tracklet {
            track_id: id.into(),
            detections: areas
                .iter()
                .map(|&(f, a)| Detection {
                    frame_index: f,
                    track_id: id.into(),
                    bbox: BoundingBox::new(0.0, 0.0, a, 1.0).unwrap(),
                })
                .collect(),
        }
    }

    fn pred(track: &str, frame: usize, topk: &[(&str, f64)]) -> ClassPrediction<f64> {
        ClassPrediction {
            video_id: "v".into(),
            track_id: track.into(),
            frame_index: frame,
            topk: topk.iter().map(|&(l, p)| (l.to_string(), p)).collect(),
        }
    }

    #[test]
    fn single_frame_score() {
        let t = [tracklet("a", &[(0, 100.0)])];
        let s = area_weighted_scores(&[pred("a", 0, &[("dog", 0.8)])], &t).unwrap();
        assert!((s[0].scores["dog"] - 80.0).abs() < 1e-12);
        assert_eq!(s[0].argmax.as_deref(), Some("dog"));
    }

    #[test]
    fn two_frame_score() {
        let t = [tracklet("a", &[(0, 10.0), (1, 40.0)])];
        let p = [
            pred("a", 0, &[("deer", 0.5), ("bus", 0.4)]),
            pred("a", 1, &[("deer", 0.25)]),
        ];
        let s = area_weighted_scores(&p, &t).unwrap();
        assert!((s[0].scores["deer"] - 15.0).abs() < 1e-12);
        assert!((s[0].scores["bus"] - 4.0).abs() < 1e-12);
        assert!(!s[0].scores.contains_key("cat"));
    }

    #[test]
    fn argmax_tie_is_lexicographic_and_labels_merge() {
        let t = [tracklet("a", &[(0, 1.0)])];
        let s = area_weighted_scores(&[pred("a", 0, &[("zebra", 0.5), ("ant", 0.5)])], &t).unwrap();
        assert_eq!(s[0].argmax.as_deref(), Some("ant"));
        let t = [tracklet("a", &[(0, 1.0), (1, 1.0)])];
        let p = [
            pred("a", 0, &[("Pickup  Truck", 0.3)]),
            pred("a", 1, &[("pickup truck", 0.3)]),
        ];
        let s = area_weighted_scores(&p, &t).unwrap();
        assert_eq!(s[0].scores.len(), 1);
        assert!((s[0].scores["pickup truck"] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn unknown_detection_errors() {
        let t = [tracklet("a", &[(0, 1.0)])];
        let e = area_weighted_scores(&[pred("a", 3, &[("dog", 1.0)])], &t).unwrap_err();
        assert!(matches!(e, HazardError::UnknownDetection { frame_index: 3, .. }));
        assert!(area_weighted_scores(&[pred("zz", 0, &[])], &t).is_err());
    }

    #[test]
    fn parse_roundtrip_and_validation() {
        let text =
            "{\"video_id\":\"v\",\"track_id\":\"1\",\"frame_index\":2,\"topk\":[[\"dog\",0.75],[\"cat\",0.125]]}\n\n";
        let p: Vec<ClassPrediction<f64>> = parse_predictions_str(text, "p.jsonl").unwrap();
        assert_eq!(p, vec![pred("1", 2, &[("dog", 0.75), ("cat", 0.125)])]);
        let again: Vec<ClassPrediction<f64>> = parse_predictions_str(&predictions_to_jsonl(&p), "x").unwrap();
        assert_eq!(again, p);
        for bad in [
            r#"{"video_id":"v","track_id":"1","frame_index":0,"topk":[["dog",1.5]]}"#,
            r#"{"video_id":"v","track_id":"1","frame_index":0,"topk":[["dog",0.5],["Dog",0.1]]}"#,
            r#"{"video_id":"v","track_id":"1","frame_index":0,"topk":[[" ",0.5]]}"#,
            r#"{"video_id":"v","track_id":"1","frame_index":0}"#,
        ] {
            let e = parse_predictions_str::<f64>(bad, "p.jsonl").unwrap_err();
            assert!(e.to_string().starts_with("p.jsonl:1:"), "{e}");
        }
        let many: Vec<String> = (0..11).map(|i| format!("[\"c{i}\",0.01]")).collect();
        let line = format!(
            "{{\"video_id\":\"v\",\"track_id\":\"1\",\"frame_index\":0,\"topk\":[{}]}}",
            many.join(",")
        );
        assert!(parse_predictions_str::<f64>(&line, "p").is_err());
    }

    fn selection(ids: &[&str]) -> HazardSelection {
        HazardSelection {
            video_id: "v".into(),
            frames: vec![ids.iter().map(|&i| HazardEntry::new(i)).collect()],
        }
    }

    fn score(track: &str, label: &str) -> TrackClassScore<f64> {
        TrackClassScore {
            track_id: track.into(),
            scores: BTreeMap::from([(label.to_string(), 1.0)]),
            argmax: Some(label.into()),
        }
    }

    #[test]
    fn whitelist_cases() {
        let sel = selection(&["a", "b", "c"]);
        let scores = [score("a", "bus"), score("b", "man")];
        let out = whitelist_filter(&sel, &scores, &Whitelist::default());
        let ids: Vec<_> = out.frames[0]
            .iter()
            .map(|e| (e.track_id.as_str(), e.label.as_deref()))
            .collect();
        assert_eq!(ids, vec![("b", Some("man")), ("c", None)]);
        let none = whitelist_filter(&sel, &scores, &Whitelist::new(Vec::<String>::new()));
        assert_eq!(none.track_ids(), sel.track_ids());
    }

    #[test]
    fn whitelist_normalizes() {
        let w = Whitelist::new([" Pickup   TRUCK "]);
        assert!(w.contains("pickup truck"));
        assert!(w.contains("PICKUP truck"));
        assert_eq!(w.labels().collect::<Vec<_>>(), vec!["pickup truck"]);
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_area_scaling(
            frames in prop::collection::vec(
                (0.5f64..100.0, prop::collection::vec(0.0f64..1.0, 4)), 1..6),
            factor in 0.01f64..100.0,
        ) {
            let labels = ["deer", "dog", "bus", "cat"];
            let base: Vec<(usize, f64)> = frames.iter().enumerate().map(|(i, f)| (i, f.0)).collect();
            let scaled: Vec<(usize, f64)> = base.iter().map(|&(i, a)| (i, a * factor)).collect();
            let preds: Vec<_> = frames
                .iter()
                .enumerate()
                .map(|(i, (_, ps))| pred("a", i, &labels.iter().copied().zip(ps.iter().copied()).collect::<Vec<_>>()))
                .collect();
            let a = area_weighted_scores(&preds, &[tracklet("a", &base)]).unwrap();
            let b = area_weighted_scores(&preds, &[tracklet("a", &scaled)]).unwrap();
            // skip near-ties where rounding could flip the winner
            let mut vals: Vec<f64> = a[0].scores.values().copied().collect();
            vals.sort_by(|x, y| y.partial_cmp(x).unwrap());
            prop_assume!(vals.len() < 2 || vals[0] - vals[1] > 1e-9 * vals[0].max(1.0));
            prop_assert_eq!(&a[0].argmax, &b[0].argmax);
            for v in a[0].scores.values() {
                prop_assert!(*v >= 0.0);
            }
        }
    }
}
