//! Deterministic mini-dataset with a planted reaction frame per video.
//!
//! Each video has a smooth random background that is still until the
//! reaction frame and then slides right by [`SHIFT_PER_FRAME`] pixels per
//! frame. Three tracks are annotated (objects are not drawn):
//! - `1`, the hazard: crosses the frame and starts growing at the reaction;
//! - `2`, a bus: moves steadily, classified as a whitelisted label;
//! - `3`, a parked object: stationary, classified as a non-hazard label.
//!
//! The hazard is labelled in the ground truth from five frames before the
//! reaction onward.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use hazardscope::captions::{cache_key, cache_line, PromptId};
use hazardscope::hazards::{predictions_to_jsonl, ClassPrediction};
use hazardscope::ingest::{
    annotations_to_json, ground_truth_to_json, BoundingBox, Detection, FrameAnnotations, GroundTruth, VideoAnnotations,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{CaptionMode, PathSection, PipelineConfig};
use crate::error::PipelineError;
use crate::output::write_file;

pub const VIDEO_COUNT: usize = 3;
pub const FRAME_COUNT: usize = 60;
pub const WIDTH: u32 = 160;
pub const HEIGHT: u32 = 120;
pub const SHIFT_PER_FRAME: f64 = 2.0;
/// Ground truth marks the hazard from this many frames before the reaction.
pub const HAZARD_LEAD: usize = 5;
pub const CROPS_PER_TRACK: usize = 5;

const HAZARD_CLASSES: [&str; 5] = ["deer", "dog", "horse", "kangaroo", "cow"];

/// What was planted in one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Planted {
    pub video_id: String,
    pub reaction_frame: usize,
    pub hazard_class: String,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub root: PathBuf,
    pub config_path: PathBuf,
    pub planted: Vec<Planted>,
}

struct Background {
    blobs: Vec<(f64, f64, f64, f64)>,
}

impl Background {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        // wide enough to keep texture under the whole slide
        let span = WIDTH as f64 + SHIFT_PER_FRAME * FRAME_COUNT as f64 + 20.0;
        let count = 140;
        let blobs = (0..count)
            .map(|_| {
                (
                    rng.random_range(-span..WIDTH as f64 + 10.0),
                    rng.random_range(-10.0..HEIGHT as f64 + 10.0),
                    rng.random_range(3.0..7.0),
                    rng.random_range(-0.35..0.35),
                )
            })
            .collect();
        Self { blobs }
    }

    /// 8-bit frame with the pattern moved `shift` pixels to the right.
    fn render(&self, shift: f64) -> image::GrayImage {
        let (w, h) = (WIDTH as usize, HEIGHT as usize);
        let mut acc = vec![0.5f64; w * h];
        for &(cx, cy, s, a) in &self.blobs {
            let cx = cx + shift;
            let reach = 4.0 * s;
            let x0 = (cx - reach).floor().max(0.0) as usize;
            let x1 = ((cx + reach).ceil().max(0.0) as usize).min(w);
            let y0 = (cy - reach).floor().max(0.0) as usize;
            let y1 = ((cy + reach).ceil().max(0.0) as usize).min(h);
            for y in y0..y1 {
                for x in x0..x1 {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    acc[y * w + x] += a * (-d2 / (2.0 * s * s)).exp();
                }
            }
        }
        let bytes = acc.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        image::GrayImage::from_raw(WIDTH, HEIGHT, bytes).expect("buffer matches frame size")
    }
}

fn offset(frame: usize, reaction: usize) -> f64 {
    SHIFT_PER_FRAME * (frame + 1).saturating_sub(reaction) as f64
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn bbox(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox<f64> {
    BoundingBox::new(
        round2(cx - w / 2.0),
        round2(cy - h / 2.0),
        round2(cx + w / 2.0),
        round2(cy + h / 2.0),
    )
    .expect("synthetic boxes are well formed")
}

fn detections(rng: &mut ChaCha8Rng, frame: usize, reaction: usize) -> Vec<Detection<f64>> {
    let t = frame as f64 / (FRAME_COUNT - 1) as f64;
    let mut jitter = || rng.random_range(-0.3..0.3);
    let grow = (frame + 1).saturating_sub(reaction) as f64;
    let side = (10.0 + grow).min(40.0);
    let boxes = [
        (
            "1",
            bbox(30.0 + 100.0 * t + jitter(), 70.0 + jitter(), side, 0.8 * side),
        ),
        ("2", bbox(130.0 - 90.0 * t + jitter(), 35.0 + jitter(), 44.0, 26.0)),
        ("3", bbox(80.0 + jitter(), 105.0 + jitter(), 16.0, 12.0)),
    ];
    boxes
        .into_iter()
        .map(|(id, b)| Detection {
            frame_index: frame,
            track_id: id.into(),
            bbox: b,
        })
        .collect()
}

/// Class scores for one detection, the planted label first.
fn topk(rng: &mut ChaCha8Rng, labels: [&str; 3]) -> Vec<(String, f64)> {
    let p = round2(rng.random_range(0.55..0.8));
    let q = round2((1.0 - p) * rng.random_range(0.4..0.7));
    let r = round2(1.0 - p - q).max(0.0);
    vec![
        (labels[0].to_string(), p),
        (labels[1].to_string(), q),
        (labels[2].to_string(), r),
    ]
}

fn track_labels(track: &str, class: &str) -> [String; 3] {
    match track {
        "1" => [class.to_string(), "goat".into(), "sheep".into()],
        "2" => ["bus".into(), "pickup truck".into(), "van".into()],
        _ => ["mailbox".into(), "fire hydrant".into(), "sign".into()],
    }
}

fn caption_texts(rng: &mut ChaCha8Rng, track: &str, class: &str) -> (String, String) {
    let mut words: Vec<&str> = match track {
        "1" => vec![class, "animal", "wildlife", "mammal", "road"],
        "2" => vec!["bus", "coach", "vehicle", "van", "truck"],
        _ => vec!["mailbox", "post", "box", "sign", "pole"],
    };
    // keep the planted label first, shuffle the rest
    for i in (2..words.len()).rev() {
        let j = rng.random_range(1..=i);
        words.swap(i, j);
    }
    let sentence = match track {
        "1" => format!("A {class} crossing the road."),
        "2" => "A bus driving ahead.".to_string(),
        _ => "A mailbox by the road.".to_string(),
    };
    (words.join(" "), sentence)
}

/// Writes frames, annotations, ground truth, class predictions, a caption
/// replay cache and a ready-to-run `config.json` under `out`.
pub fn generate_synthetic(out: &Path, seed: u64) -> Result<SyntheticDataset, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut videos = Vec::new();
    let mut truth = Vec::new();
    let mut predictions = Vec::new();
    let mut cache = String::new();
    let mut planted = Vec::new();

    for v in 0..VIDEO_COUNT {
        let video_id = format!("synth_{v:02}");
        let reaction = if v == 0 { 30 } else { rng.random_range(24..=36) };
        let class = HAZARD_CLASSES[rng.random_range(0..HAZARD_CLASSES.len())].to_string();

        let background = Background::new(&mut rng);
        let frame_dir = out.join("frames").join(&video_id);
        std::fs::create_dir_all(&frame_dir).map_err(|e| PipelineError::io(&frame_dir, e))?;
        for f in 0..FRAME_COUNT {
            let path = frame_dir.join(format!("frame_{f:06}.png"));
            background
                .render(offset(f, reaction))
                .save(&path)
                .map_err(|e| PipelineError::io(&path, std::io::Error::other(e)))?;
        }

        let frames: Vec<FrameAnnotations<f64>> = (0..FRAME_COUNT)
            .map(|f| FrameAnnotations {
                frame_index: f,
                detections: detections(&mut rng, f, reaction),
            })
            .collect();
        for frame in &frames {
            for det in &frame.detections {
                let labels = track_labels(&det.track_id, &class);
                predictions.push(ClassPrediction {
                    video_id: video_id.clone(),
                    track_id: det.track_id.clone(),
                    frame_index: det.frame_index,
                    topk: topk(&mut rng, [labels[0].as_str(), labels[1].as_str(), labels[2].as_str()]),
                });
            }
        }
        for track in ["1", "2", "3"] {
            for rank in 1..=CROPS_PER_TRACK {
                let (categories, sentence) = caption_texts(&mut rng, track, &class);
                cache.push_str(&cache_line(
                    &cache_key(&video_id, track, rank, PromptId::Categories),
                    &categories,
                ));
                cache.push_str(&cache_line(
                    &cache_key(&video_id, track, rank, PromptId::Sentence),
                    &sentence,
                ));
            }
        }

        let hazard_from = reaction.saturating_sub(HAZARD_LEAD);
        truth.push(GroundTruth {
            video_id: video_id.clone(),
            reaction: (0..FRAME_COUNT).map(|f| f >= reaction).collect(),
            hazard_tracks: (0..FRAME_COUNT)
                .map(|f| {
                    if f >= hazard_from {
                        BTreeSet::from(["1".to_string()])
                    } else {
                        BTreeSet::new()
                    }
                })
                .collect(),
            hazard_classes: (0..FRAME_COUNT)
                .map(|f| {
                    if f >= hazard_from {
                        BTreeSet::from([class.clone()])
                    } else {
                        BTreeSet::new()
                    }
                })
                .collect(),
        });
        videos.push(VideoAnnotations {
            video_id: video_id.clone(),
            width: WIDTH,
            height: HEIGHT,
            frames,
        });
        planted.push(Planted {
            video_id,
            reaction_frame: reaction,
            hazard_class: class,
        });
    }

    write_file(&out.join("annotations.json"), &annotations_to_json(&videos))?;
    write_file(&out.join("ground_truth.json"), &ground_truth_to_json(&truth))?;
    write_file(&out.join("predictions.jsonl"), &predictions_to_jsonl(&predictions))?;
    write_file(&out.join("captions.jsonl"), &cache)?;

    let mut config = PipelineConfig {
        paths: PathSection {
            annotations: Some("annotations.json".into()),
            frames_root: Some("frames".into()),
            ground_truth: Some("ground_truth.json".into()),
            predictions: Some("predictions.jsonl".into()),
            caption_cache: Some("captions.jsonl".into()),
        },
        ..PipelineConfig::default()
    };
    config.reaction.strategy = "ensemble(mean)".into();
    config.captions.mode = CaptionMode::Replay;
    config.captions.retry_delay_ms = 0;
    let config_path = out.join("config.json");
    let mut text = serde_json::to_string_pretty(&config).expect("config serializes");
    text.push('\n');
    write_file(&config_path, &text)?;

    Ok(SyntheticDataset {
        root: out.to_path_buf(),
        config_path,
        planted,
    })
}
