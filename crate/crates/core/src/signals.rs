//! Per-frame scalar motion signals derived from annotations.

use std::fmt;

use crate::ingest::VideoAnnotations;
use crate::scalar::median;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SignalKind {
    ObjectSize,
    OpticalFlow,
    MedianDistance,
}

impl SignalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalKind::ObjectSize => "object_size",
            SignalKind::OpticalFlow => "optical_flow",
            SignalKind::MedianDistance => "median_distance",
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One finite value per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSeries<T> {
    pub video_id: String,
    pub kind: SignalKind,
    pub values: Vec<T>,
}

impl<T: Scalar> MotionSeries<T> {
    pub fn new(video_id: impl Into<String>, kind: SignalKind, values: Vec<T>) -> Self {
        Self {
            video_id: video_id.into(),
            kind,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Total bounding-box area per frame.
pub fn object_size_series<T: Scalar>(video: &VideoAnnotations<T>) -> MotionSeries<T> {
    let values = video
        .frames
        .iter()
        .map(|f| f.detections.iter().map(|d| d.bbox.area()).sum())
        .collect();
    MotionSeries::new(&video.video_id, SignalKind::ObjectSize, values)
}

/// `(v − min) / (max − min)`; a flat series maps to zeros.
pub fn min_max_normalize<T: Scalar>(series: &MotionSeries<T>) -> MotionSeries<T> {
    let (lo, hi) = series
        .values
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let values = if series.values.is_empty() || !(range > T::zero()) {
        vec![T::zero(); series.len()]
    } else {
        series
            .values
            .iter()
            .map(|&v| ((v - lo) / range).max(T::zero()).min(T::one()))
            .collect()
    };
    MotionSeries {
        values,
        ..series.clone()
    }
}

/// For every box centre in frame `i`, distance to the nearest centre in frame
/// `i − 1`; the frame value is the median of those minima. Frame 0 and frames
/// where either side is empty are 0.
pub fn median_min_distance_series<T: Scalar>(video: &VideoAnnotations<T>) -> MotionSeries<T> {
    let centers: Vec<Vec<(T, T)>> = video
        .frames
        .iter()
        .map(|f| f.detections.iter().map(|d| d.bbox.center()).collect())
        .collect();
    let mut values = vec![T::zero(); centers.len()];
    for i in 1..centers.len() {
        let (prev, cur) = (&centers[i - 1], &centers[i]);
        if prev.is_empty() || cur.is_empty() {
            continue;
        }
        let mut minima: Vec<T> = cur
            .iter()
            .map(|&(x, y)| {
                prev.iter()
                    .map(|&(px, py)| (x - px).hypot(y - py))
                    .fold(T::infinity(), T::min)
            })
            .collect();
        values[i] = median(&mut minima).unwrap_or_else(T::zero);
    }
    MotionSeries::new(&video.video_id, SignalKind::MedianDistance, values)
}
