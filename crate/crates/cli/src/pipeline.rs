//! Per-video orchestration and the output layout of each subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use hazardscope::captions::{
    aggregate_words, caption_crops, encode_png, select_largest_crops, AggregatedCaption, CaptionBackend, CaptionError,
    CaptionRequest, RawCaption, RecordingBackend, ReplayBackend, RetryPolicy,
};
use hazardscope::changepoint::{detect, Breakpoints};
use hazardscope::hazards::{
    parse_predictions, predictions_to_jsonl, select_hazards, ClassPrediction, HazardEntry, HazardFilter,
    HazardSelection,
};
use hazardscope::ingest::{
    build_tracklets, crop_square, load_rgb_frame, parse_annotations, parse_ground_truth, FrameStore, GroundTruth,
    IngestError, VideoAnnotations,
};
use hazardscope::metrics::{evaluate, EvalReport, VideoPrediction};
use hazardscope::optical_flow::{flow_summaries, FlowSummary};
use hazardscope::reaction::{
    baseline_slope_rule, ensemble_and, ensemble_mean_position, ensemble_or, step_from_breakpoint, ReactionSeries,
};
use hazardscope::signals::{
    median_min_distance_series, min_max_normalize, object_size_series, MotionSeries, SignalKind,
};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{CaptionMode, Combine, PipelineConfig, ReactionStrategy, SignalName};
use crate::error::PipelineError;
use crate::glob::VideoPattern;
use crate::output::{flow_csv, reaction_csv, signal_csv, signal_svg, write_file};
use crate::service::{Bounded, HttpCaptioner, HttpClassifier};
use crate::submission::{write_submission, HazardSlot, SubmissionRow, SubmissionTable};

/// Loaded inputs, restricted to the selected videos.
pub struct Inputs {
    /// Sorted by video id.
    pub videos: Vec<VideoAnnotations<f64>>,
    pub truth: Option<Vec<GroundTruth>>,
    pub predictions: Option<BTreeMap<String, Vec<ClassPrediction<f64>>>>,
}

pub fn load_inputs(config: &PipelineConfig, pattern: Option<&VideoPattern>) -> Result<Inputs, PipelineError> {
    let ann_path = config.require(&config.paths.annotations, "annotations")?;
    let all = parse_annotations::<f64>(ann_path)?;
    let truth = match &config.paths.ground_truth {
        Some(p) => Some(parse_ground_truth(p, &all)?),
        None => None,
    };
    let selected = |id: &str| pattern.is_none_or(|p| p.matches(id));
    let mut videos: Vec<_> = all.into_iter().filter(|v| selected(&v.video_id)).collect();
    if videos.is_empty() {
        return Err(PipelineError::NoVideos(pattern.map_or("*", |p| p.as_str()).to_string()));
    }
    videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let truth = truth.map(|t| t.into_iter().filter(|g| selected(&g.video_id)).collect());
    let predictions = match &config.paths.predictions {
        Some(p) => {
            let mut by_video: BTreeMap<String, Vec<ClassPrediction<f64>>> = BTreeMap::new();
            for pred in parse_predictions::<f64>(p).map_err(|source| PipelineError::Hazards {
                video_id: "*".into(),
                source,
            })? {
                by_video.entry(pred.video_id.clone()).or_default().push(pred);
            }
            Some(by_video)
        }
        None => None,
    };
    Ok(Inputs {
        videos,
        truth,
        predictions,
    })
}

/// Which stages to run.
#[derive(Debug, Clone, Default)]
pub struct Plan {
    pub signals: Vec<SignalName>,
    pub react: bool,
    pub hazards: bool,
    pub captions: bool,
}

impl Plan {
    pub fn for_command(command: Command, config: &PipelineConfig) -> Result<Self, PipelineError> {
        let required = config.required_signals()?;
        let captions_on = config.captions.mode != CaptionMode::None;
        Ok(match command {
            Command::Signals => Self {
                signals: config.signals.clone().unwrap_or(required),
                ..Self::default()
            },
            Command::React => Self {
                signals: required,
                react: true,
                ..Self::default()
            },
            Command::Hazards => Self {
                hazards: true,
                ..Self::default()
            },
            Command::Caption => {
                if !captions_on {
                    return Err(PipelineError::Config(
                        "captions.mode is \"none\"; choose replay, live or record".into(),
                    ));
                }
                Self {
                    hazards: true,
                    captions: true,
                    ..Self::default()
                }
            }
            Command::Run => Self {
                signals: required,
                react: true,
                hazards: true,
                captions: captions_on,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Signals,
    React,
    Hazards,
    Caption,
    Run,
}

pub struct MemberOutcome {
    pub strategy: ReactionStrategy,
    /// Change points of the normalized signal, for CPD-based members.
    pub breakpoints: Option<Breakpoints>,
    pub series: ReactionSeries,
}

pub struct ReactionOutcome {
    pub series: ReactionSeries,
    pub members: Vec<MemberOutcome>,
}

pub struct TrackCaption {
    pub raw: Vec<RawCaption>,
    pub aggregated: AggregatedCaption,
}

pub struct VideoOutcome {
    pub video_id: String,
    pub frame_count: usize,
    /// Raw (unnormalized) series by kind.
    pub signals: BTreeMap<SignalKind, MotionSeries<f64>>,
    pub flow: Option<Vec<FlowSummary<f64>>>,
    pub reaction: Option<ReactionOutcome>,
    pub hazards: Option<HazardSelection>,
    pub captions: BTreeMap<String, TrackCaption>,
    /// Predictions obtained from the live classifier.
    pub classified: Vec<ClassPrediction<f64>>,
}

/// Any of the configured caption backends.
pub enum Captioner {
    Replay(ReplayBackend),
    Live(HttpCaptioner),
    Record(RecordingBackend<HttpCaptioner>),
}

impl CaptionBackend for Captioner {
    fn caption(&self, request: &CaptionRequest<'_>) -> Result<String, CaptionError> {
        match self {
            Self::Replay(b) => b.caption(request),
            Self::Live(b) => b.caption(request),
            Self::Record(b) => b.caption(request),
        }
    }
}

/// Shared state for one invocation.
pub struct Pipeline {
    pub config: PipelineConfig,
    jobs: usize,
    captioner: Option<Bounded<Captioner>>,
    classifier: Option<Bounded<HttpClassifier>>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, jobs: usize, plan: &Plan, inputs: &Inputs) -> Result<Self, PipelineError> {
        config.validate()?;
        let timeout = Duration::from_secs(config.captions.timeout_secs.max(1));
        let limit = config.captions.max_in_flight;
        let captioner = if plan.captions {
            let url = || {
                config.captioner_url.as_deref().ok_or_else(|| {
                    PipelineError::Config(format!(
                        "captions.mode needs a captioner URL (set {})",
                        crate::config::CAPTIONER_URL_ENV
                    ))
                })
            };
            let cache = || config.require(&config.paths.caption_cache, "caption_cache");
            let c = match config.captions.mode {
                CaptionMode::None => unreachable!("plan excludes captions"),
                CaptionMode::Replay => Captioner::Replay(
                    ReplayBackend::open(cache()?).map_err(|source| PipelineError::caption("*", source))?,
                ),
                CaptionMode::Live => Captioner::Live(HttpCaptioner::new(url()?, timeout)?),
                CaptionMode::Record => Captioner::Record(
                    RecordingBackend::new(HttpCaptioner::new(url()?, timeout)?, cache()?)
                        .map_err(|source| PipelineError::caption("*", source))?,
                ),
            };
            Some(Bounded::new(c, limit))
        } else {
            None
        };
        let needs_classes = plan.hazards
            && inputs.predictions.is_none()
            && config.hazards.to_config()?.filters.contains(&HazardFilter::Whitelist);
        let classifier = match (&config.classifier_url, needs_classes) {
            (Some(url), true) => Some(Bounded::new(HttpClassifier::new(url, timeout)?, limit)),
            _ => None,
        };
        Ok(Self {
            config,
            jobs: jobs.max(1),
            captioner,
            classifier,
        })
    }

    /// Processes every video on a pool of `jobs` workers. Results keep the
    /// input order; the first failing video (in that order) is reported.
    pub fn process(&self, plan: &Plan, inputs: &Inputs) -> Result<Vec<VideoOutcome>, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| PipelineError::Config(format!("cannot start {} workers: {e}", self.jobs)))?;
        let results: Vec<Result<VideoOutcome, PipelineError>> = pool.install(|| {
            inputs
                .videos
                .par_iter()
                .map(|v| self.process_video(plan, inputs, v))
                .collect()
        });
        let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        if plan.captions {
            check_backend_alive(&outcomes)?;
        }
        Ok(outcomes)
    }

    fn frame_store(&self, video: &VideoAnnotations<f64>, purpose: &str) -> Result<FrameStore, PipelineError> {
        let root = self.config.paths.frames_root.as_deref().ok_or_else(|| {
            PipelineError::Config(format!("video {}: {purpose} needs paths.frames_root", video.video_id))
        })?;
        let store = FrameStore::open(root, &video.video_id)?.with_expected_size(video.width, video.height);
        Ok(store)
    }

    fn process_video(
        &self,
        plan: &Plan,
        inputs: &Inputs,
        video: &VideoAnnotations<f64>,
    ) -> Result<VideoOutcome, PipelineError> {
        let id = &video.video_id;
        log::info!("video {id}: {} frames", video.len());
        let mut out = VideoOutcome {
            video_id: id.clone(),
            frame_count: video.len(),
            signals: BTreeMap::new(),
            flow: None,
            reaction: None,
            hazards: None,
            captions: BTreeMap::new(),
            classified: Vec::new(),
        };
        for &sig in &plan.signals {
            let series = match sig {
                SignalName::ObjectSize => object_size_series(video),
                SignalName::MedianDistance => median_min_distance_series(video),
                SignalName::OpticalFlow => {
                    let store = self.frame_store(video, "optical flow")?;
                    if store.len() != video.len() {
                        return Err(IngestError::LengthMismatch {
                            video_id: id.clone(),
                            what: "frame directory",
                            expected: video.len(),
                            got: store.len(),
                        }
                        .into());
                    }
                    let params = self.config.flow.params()?;
                    let summaries = flow_summaries(&store, &params).map_err(|source| PipelineError::Flow {
                        video_id: id.clone(),
                        source,
                    })?;
                    let values = summaries.iter().map(|s| s.magnitude_mean).collect();
                    out.flow = Some(summaries);
                    MotionSeries::new(id, SignalKind::OpticalFlow, values)
                }
            };
            out.signals.insert(sig.into(), series);
        }
        if plan.react {
            out.reaction = Some(self.react(video, &out.signals)?);
        }
        if plan.hazards {
            let preds = match (&inputs.predictions, &self.classifier) {
                (Some(by_video), _) => Some(by_video.get(id).map_or(&[][..], Vec::as_slice)),
                (None, Some(classifier)) => {
                    out.classified = self.classify(video, classifier)?;
                    Some(out.classified.as_slice())
                }
                (None, None) => None,
            };
            let hz = self.config.hazards.to_config()?;
            let selection = select_hazards(video, &hz, preds).map_err(|source| PipelineError::Hazards {
                video_id: id.clone(),
                source,
            })?;
            if plan.captions {
                out.captions = self.caption(video, &selection)?;
            }
            out.hazards = Some(selection);
        }
        Ok(out)
    }

    fn react(
        &self,
        video: &VideoAnnotations<f64>,
        signals: &BTreeMap<SignalKind, MotionSeries<f64>>,
    ) -> Result<ReactionOutcome, PipelineError> {
        let id = &video.video_id;
        let strategy = self.config.reaction_strategy()?;
        let members = match strategy {
            ReactionStrategy::Ensemble(_) => self.config.ensemble_members()?,
            s => vec![s],
        };
        let cpd = self.config.reaction.cpd.to_config()?;
        let n = video.len();
        let mut outcomes = Vec::with_capacity(members.len());
        for member in members {
            let kind = match member {
                ReactionStrategy::ObjectSize => SignalKind::ObjectSize,
                ReactionStrategy::OpticalFlow => SignalKind::OpticalFlow,
                ReactionStrategy::Baseline => SignalKind::MedianDistance,
                ReactionStrategy::Ensemble(_) => unreachable!("members are single-signal"),
            };
            let series = signals.get(&kind).expect("plan computes every required signal");
            let outcome = if member == ReactionStrategy::Baseline {
                MemberOutcome {
                    strategy: member,
                    breakpoints: None,
                    series: baseline_slope_rule(
                        series,
                        self.config.reaction.min_window,
                        self.config.reaction.slope_threshold,
                    ),
                }
            } else {
                let normalized = min_max_normalize(series);
                let bps = detect(&normalized.values, &cpd).map_err(|source| PipelineError::Cpd {
                    video_id: id.clone(),
                    signal: kind.as_str(),
                    source,
                })?;
                let step = step_from_breakpoint(id, bps.first(), n).map_err(|source| PipelineError::Reaction {
                    video_id: id.clone(),
                    source,
                })?;
                MemberOutcome {
                    strategy: member,
                    breakpoints: Some(bps),
                    series: step,
                }
            };
            outcomes.push(outcome);
        }
        let parts: Vec<ReactionSeries> = outcomes.iter().map(|m| m.series.clone()).collect();
        let combined = match strategy {
            ReactionStrategy::Ensemble(Combine::Or) => ensemble_or(&parts),
            ReactionStrategy::Ensemble(Combine::And) => ensemble_and(&parts),
            ReactionStrategy::Ensemble(Combine::Mean) => ensemble_mean_position(&parts),
            _ => Ok(parts[0].clone()),
        }
        .map_err(|source| PipelineError::Reaction {
            video_id: id.clone(),
            source,
        })?;
        Ok(ReactionOutcome {
            series: combined,
            members: outcomes,
        })
    }

    fn classify(
        &self,
        video: &VideoAnnotations<f64>,
        classifier: &Bounded<HttpClassifier>,
    ) -> Result<Vec<ClassPrediction<f64>>, PipelineError> {
        let store = self.frame_store(video, "classification")?;
        let mut out = Vec::new();
        for frame in &video.frames {
            if frame.detections.is_empty() {
                continue;
            }
            let image = load_rgb_frame(&store, frame.frame_index)?;
            for det in &frame.detections {
                let crop = crop_square(&image, &det.bbox)?;
                let png = encode_png(&crop).map_err(|source| PipelineError::caption(&video.video_id, source))?;
                let topk = classifier.with(|c| c.classify(&png))?;
                let pred = ClassPrediction {
                    video_id: video.video_id.clone(),
                    track_id: det.track_id.clone(),
                    frame_index: frame.frame_index,
                    topk,
                };
                pred.validate().map_err(|m| {
                    PipelineError::Backend(format!(
                        "video {}, frame {}, track {}: classifier answer rejected: {m}",
                        video.video_id, frame.frame_index, det.track_id
                    ))
                })?;
                out.push(pred);
            }
        }
        Ok(out)
    }

    fn caption(
        &self,
        video: &VideoAnnotations<f64>,
        selection: &HazardSelection,
    ) -> Result<BTreeMap<String, TrackCaption>, PipelineError> {
        let backend = self.captioner.as_ref().expect("plan with captions builds a captioner");
        let wanted = selection.track_ids();
        if wanted.is_empty() {
            return Ok(BTreeMap::new());
        }
        let store = self.frame_store(video, "captioning")?;
        let retry = RetryPolicy {
            attempts: self.config.captions.retry_attempts.max(1),
            initial_delay: Duration::from_millis(self.config.captions.retry_delay_ms),
        };
        let wrap = |source| PipelineError::caption(&video.video_id, source);
        let mut out = BTreeMap::new();
        for tracklet in build_tracklets(video)
            .iter()
            .filter(|t| wanted.contains(t.track_id.as_str()))
        {
            let crops = select_largest_crops(tracklet, &store, self.config.captions.crops).map_err(wrap)?;
            let raw = caption_crops(&video.video_id, &tracklet.track_id, &crops, backend, &retry).map_err(wrap)?;
            let aggregated = aggregate_words(&tracklet.track_id, &raw, self.config.captions.words);
            out.insert(tracklet.track_id.clone(), TrackCaption { raw, aggregated });
        }
        Ok(out)
    }
}

/// A run where every caption request failed points at the backend rather
/// than the data.
fn check_backend_alive(outcomes: &[VideoOutcome]) -> Result<(), PipelineError> {
    let raws = outcomes.iter().flat_map(|o| o.captions.values()).flat_map(|c| &c.raw);
    let (mut total, mut failed, mut first) = (0usize, 0usize, None);
    for r in raws {
        total += 1;
        if r.failed() {
            failed += 1;
            first = first.or(r.error.clone());
        }
    }
    if total > 0 && failed == total {
        return Err(PipelineError::Backend(format!(
            "all {total} caption requests failed; first error: {}",
            first.unwrap_or_default()
        )));
    }
    if failed > 0 {
        log::warn!("{failed} of {total} caption requests failed");
    }
    Ok(())
}

/// Hazard name for a track: its caption, else its class label.
fn hazard_name(entry: &HazardEntry, captions: &BTreeMap<String, TrackCaption>) -> String {
    captions
        .get(&entry.track_id)
        .map(|c| c.aggregated.joined())
        .filter(|s| !s.is_empty())
        .or_else(|| entry.label.clone())
        .unwrap_or_default()
}

/// One row per annotated frame. Hazards past the slot count are dropped
/// with a warning.
pub fn build_table(outcomes: &[VideoOutcome], slots: usize) -> Result<SubmissionTable, PipelineError> {
    let mut table = SubmissionTable::new(slots)?;
    for o in outcomes {
        let reaction = o.reaction.as_ref().map(|r| r.series.values());
        for frame in 0..o.frame_count {
            let entries = o.hazards.as_ref().map_or(&[][..], |h| h.frames[frame].as_slice());
            if entries.len() > slots {
                log::warn!(
                    "video {}, frame {frame}: {} hazards, keeping the first {slots}",
                    o.video_id,
                    entries.len()
                );
            }
            let hazards = entries
                .iter()
                .take(slots)
                .map(|e| HazardSlot {
                    track_id: e.track_id.clone(),
                    name: hazard_name(e, &o.captions),
                })
                .collect();
            table.insert(
                &o.video_id,
                frame,
                SubmissionRow {
                    driver_state_changed: reaction.is_some_and(|r| r[frame]),
                    hazards,
                },
            )?;
        }
    }
    Ok(table)
}

/// Scores a submission against ground truth. Every truth frame needs a row.
pub fn evaluate_table(table: &SubmissionTable, truth: &[GroundTruth]) -> Result<EvalReport<f64>, PipelineError> {
    let mut preds: BTreeMap<&str, (ReactionSeries, HazardSelection)> = BTreeMap::new();
    for gt in truth {
        let n = gt.len();
        let mut reaction = Vec::with_capacity(n);
        let mut hazards = HazardSelection::empty(&gt.video_id, n);
        for frame in 0..n {
            let row = table.get(&gt.video_id, frame).ok_or_else(|| {
                PipelineError::Config(format!(
                    "submission has no row {}_{frame} for a ground-truth frame",
                    gt.video_id
                ))
            })?;
            reaction.push(row.driver_state_changed);
            hazards.frames[frame] = row
                .hazards
                .iter()
                .map(|h| HazardEntry {
                    track_id: h.track_id.clone(),
                    label: Some(h.name.clone()).filter(|s| !s.is_empty()),
                })
                .collect();
        }
        let reaction =
            ReactionSeries::from_values(&gt.video_id, reaction).map_err(|source| PipelineError::Reaction {
                video_id: gt.video_id.clone(),
                source,
            })?;
        preds.insert(&gt.video_id, (reaction, hazards));
    }
    Ok(evaluate(truth, |id| {
        preds.get(id).map(|(r, h)| VideoPrediction {
            reaction: r,
            hazards: h,
        })
    })?)
}

fn kind_file(video_id: &str, kind: SignalKind) -> String {
    format!("{video_id}_{}.csv", kind.as_str())
}

pub fn write_signals(out: &Path, outcomes: &[VideoOutcome]) -> Result<(), PipelineError> {
    for o in outcomes {
        for (kind, series) in &o.signals {
            write_file(
                &out.join("signals").join(kind_file(&o.video_id, *kind)),
                &signal_csv(series),
            )?;
        }
        if let Some(flow) = &o.flow {
            write_file(&out.join("flow").join(format!("{}.csv", o.video_id)), &flow_csv(flow))?;
        }
        write_plot(out, o)?;
    }
    Ok(())
}

fn write_plot(out: &Path, o: &VideoOutcome) -> Result<(), PipelineError> {
    if o.signals.is_empty() {
        return Ok(());
    }
    let breakpoints = |kind: SignalKind| -> Vec<usize> {
        o.reaction
            .iter()
            .flat_map(|r| &r.members)
            .filter(|m| m.breakpoints.is_some())
            .filter(|m| match m.strategy {
                ReactionStrategy::ObjectSize => kind == SignalKind::ObjectSize,
                ReactionStrategy::OpticalFlow => kind == SignalKind::OpticalFlow,
                _ => false,
            })
            .flat_map(|m| {
                m.breakpoints
                    .as_ref()
                    .map(|b| b.as_slice().to_vec())
                    .unwrap_or_default()
            })
            .collect()
    };
    let marks: Vec<(SignalKind, Vec<usize>)> = o.signals.keys().map(|&k| (k, breakpoints(k))).collect();
    let lines: Vec<(&str, &[f64], &[usize])> = o
        .signals
        .iter()
        .zip(&marks)
        .map(|((k, s), (_, m))| (k.as_str(), s.values.as_slice(), m.as_slice()))
        .collect();
    write_file(
        &out.join("plots").join(format!("{}.svg", o.video_id)),
        &signal_svg(&o.video_id, &lines),
    )
}

pub fn write_reactions(out: &Path, outcomes: &[VideoOutcome]) -> Result<(), PipelineError> {
    let mut bps = serde_json::Map::new();
    for o in outcomes {
        let Some(r) = &o.reaction else { continue };
        write_file(
            &out.join("reaction").join(format!("{}.csv", o.video_id)),
            &reaction_csv(&r.series),
        )?;
        let members: Vec<_> = r
            .members
            .iter()
            .map(|m| {
                json!({
                    "strategy": m.strategy.name(),
                    "breakpoints": m.breakpoints.as_ref().map(|b| b.as_slice().to_vec()),
                    "reaction_frame": m.series.step(),
                })
            })
            .collect();
        bps.insert(
            o.video_id.clone(),
            json!({ "reaction_frame": r.series.step(), "members": members }),
        );
        write_plot(out, o)?;
    }
    write_json(&out.join("breakpoints.json"), &serde_json::Value::Object(bps))
}

pub fn write_hazards(out: &Path, outcomes: &[VideoOutcome]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| PipelineError::io(out.join("hazards.csv"), e.into());
    w.write_record(["video_id", "frame_index", "track_id", "label"])
        .map_err(csv_err)?;
    for o in outcomes {
        let Some(h) = &o.hazards else { continue };
        for (frame, entries) in h.frames.iter().enumerate() {
            for e in entries {
                w.write_record([
                    o.video_id.as_str(),
                    &frame.to_string(),
                    &e.track_id,
                    e.label.as_deref().unwrap_or(""),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| PipelineError::io(out.join("hazards.csv"), e.into_error()))?;
    write_file(
        &out.join("hazards.csv"),
        &String::from_utf8(bytes).expect("csv of UTF-8 fields"),
    )?;
    let classified: Vec<ClassPrediction<f64>> = outcomes.iter().flat_map(|o| o.classified.iter().cloned()).collect();
    if !classified.is_empty() {
        write_file(&out.join("predictions.jsonl"), &predictions_to_jsonl(&classified))?;
    }
    Ok(())
}

pub fn write_captions(out: &Path, outcomes: &[VideoOutcome]) -> Result<(), PipelineError> {
    let mut all = serde_json::Map::new();
    for o in outcomes {
        let tracks: serde_json::Map<String, serde_json::Value> = o
            .captions
            .iter()
            .map(|(track, c)| {
                let raw: Vec<_> = c
                    .raw
                    .iter()
                    .map(|r| {
                        json!({
                            "crop_rank": r.crop_rank,
                            "prompt": r.prompt.as_str(),
                            "text": r.text,
                            "error": r.error,
                        })
                    })
                    .collect();
                (track.clone(), json!({ "caption": c.aggregated.joined(), "raw": raw }))
            })
            .collect();
        all.insert(o.video_id.clone(), serde_json::Value::Object(tracks));
    }
    write_json(&out.join("captions.json"), &serde_json::Value::Object(all))
}

pub fn write_report(out: &Path, report: &EvalReport<f64>) -> Result<(), PipelineError> {
    write_json(&out.join("report.json"), &report.to_json())?;
    write_file(&out.join("report.csv"), &report.to_csv())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    write_file(path, &text)
}

/// Files written by [`run`].
pub struct RunOutput {
    pub submission: PathBuf,
    pub table: SubmissionTable,
    pub report: Option<EvalReport<f64>>,
}

/// Full pipeline: every stage, the submission table and, when ground truth
/// is configured, the report scored from that table.
pub fn run(
    config: PipelineConfig,
    pattern: Option<&VideoPattern>,
    jobs: usize,
    out: &Path,
) -> Result<RunOutput, PipelineError> {
    let plan = Plan::for_command(Command::Run, &config)?;
    let inputs = load_inputs(&config, pattern)?;
    let pipeline = Pipeline::new(config, jobs, &plan, &inputs)?;
    let outcomes = pipeline.process(&plan, &inputs)?;
    std::fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    write_signals(out, &outcomes)?;
    write_reactions(out, &outcomes)?;
    write_hazards(out, &outcomes)?;
    if plan.captions {
        write_captions(out, &outcomes)?;
    }
    let table = build_table(&outcomes, pipeline.config.slots)?;
    let submission = out.join("submission.csv");
    write_submission(&table, &submission)?;
    let report = match &inputs.truth {
        Some(truth) => {
            let report = evaluate_table(&table, truth)?;
            write_report(out, &report)?;
            Some(report)
        }
        None => None,
    };
    Ok(RunOutput {
        submission,
        table,
        report,
    })
}

/// Runs a single stage and writes its outputs.
pub fn run_stage(
    command: Command,
    config: PipelineConfig,
    pattern: Option<&VideoPattern>,
    jobs: usize,
    out: &Path,
) -> Result<Vec<VideoOutcome>, PipelineError> {
    let plan = Plan::for_command(command, &config)?;
    let inputs = load_inputs(&config, pattern)?;
    let pipeline = Pipeline::new(config, jobs, &plan, &inputs)?;
    let outcomes = pipeline.process(&plan, &inputs)?;
    std::fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    match command {
        Command::Signals => write_signals(out, &outcomes)?,
        Command::React => write_reactions(out, &outcomes)?,
        Command::Hazards => write_hazards(out, &outcomes)?,
        Command::Caption => {
            write_hazards(out, &outcomes)?;
            write_captions(out, &outcomes)?;
        }
        Command::Run => unreachable!("use run()"),
    }
    Ok(outcomes)
}
