//! Zero-shot hazard analysis for annotated dashcam video.
//!
//! The crate turns per-frame object tracks (and optionally the frames
//! themselves) into three predictions per frame: whether the driver has
//! reacted, which tracks are hazards, and a short caption for each hazard.
//! It also scores those predictions against labelled ground truth.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below fix the common choice.

pub mod captions;
pub mod changepoint;
pub mod hazards;
pub mod ingest;
pub mod metrics;
pub mod optical_flow;
pub mod reaction;
mod scalar;
pub mod signals;

pub use scalar::{median, Scalar};

pub type BoundingBoxF64 = ingest::BoundingBox<f64>;
pub type DetectionF64 = ingest::Detection<f64>;
pub type VideoAnnotationsF64 = ingest::VideoAnnotations<f64>;
pub type TrackletF64 = ingest::Tracklet<f64>;
pub type MotionSeriesF64 = signals::MotionSeries<f64>;
pub type GrayImageF64 = optical_flow::GrayImage<f64>;
pub type FlowFieldF64 = optical_flow::FlowField<f64>;
pub type FlowParamsF64 = optical_flow::FlowParams<f64>;
pub type CpdConfigF64 = changepoint::CpdConfig<f64>;
pub type ClassPredictionF64 = hazards::ClassPrediction<f64>;
pub type EvalReportF64 = metrics::EvalReport<f64>;

pub type VideoAnnotationsF32 = ingest::VideoAnnotations<f32>;
pub type MotionSeriesF32 = signals::MotionSeries<f32>;
pub type GrayImageF32 = optical_flow::GrayImage<f32>;
pub type FlowParamsF32 = optical_flow::FlowParams<f32>;
pub type CpdConfigF32 = changepoint::CpdConfig<f32>;
