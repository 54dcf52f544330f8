use std::collections::BTreeMap;

use super::HazardSelection;
use crate::ingest::Tracklet;
use crate::Scalar;

/// How far a track is considered to have moved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DisplacementMeasure {
    /// Distance between first and last box centres.
    #[default]
    Net,
    /// Sum of centre-to-centre steps.
    Path,
}

/// Which mean box side the displacement is compared against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ExtentMeasure {
    #[default]
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrajectoryRule {
    pub displacement: DisplacementMeasure,
    pub extent: ExtentMeasure,
}

impl TrajectoryRule {
    pub fn displacement<T: Scalar>(&self, tracklet: &Tracklet<T>) -> T {
        let centers: Vec<(T, T)> = tracklet.detections.iter().map(|d| d.bbox.center()).collect();
        let dist = |a: (T, T), b: (T, T)| (b.0 - a.0).hypot(b.1 - a.1);
        match (self.displacement, centers.first(), centers.last()) {
            (_, None, _) | (_, _, None) => T::zero(),
            (DisplacementMeasure::Net, Some(&a), Some(&b)) => dist(a, b),
            (DisplacementMeasure::Path, _, _) => centers.windows(2).map(|w| dist(w[0], w[1])).sum(),
        }
    }

    pub fn extent<T: Scalar>(&self, tracklet: &Tracklet<T>) -> T {
        let n = tracklet.detections.len();
        if n == 0 {
            return T::zero();
        }
        let nf = T::of_usize(n);
        let w = tracklet.detections.iter().map(|d| d.bbox.width()).sum::<T>() / nf;
        let h = tracklet.detections.iter().map(|d| d.bbox.height()).sum::<T>() / nf;
        match self.extent {
            ExtentMeasure::Max => w.max(h),
            ExtentMeasure::Min => w.min(h),
        }
    }

    /// True when the track moved at least its own size.
    pub fn keeps<T: Scalar>(&self, tracklet: &Tracklet<T>) -> bool {
        self.displacement(tracklet) >= self.extent(tracklet)
    }
}

/// Drops tracks whose displacement is smaller than their mean box size.
/// Tracks missing from `tracklets` are kept.
pub fn trajectory_size_filter<T: Scalar>(
    selection: &HazardSelection,
    tracklets: &[Tracklet<T>],
    rule: &TrajectoryRule,
) -> HazardSelection {
    let keep: BTreeMap<&str, bool> = tracklets.iter().map(|t| (t.track_id.as_str(), rule.keeps(t))).collect();
    let mut out = selection.clone();
    out.retain(|e| keep.get(e.track_id.as_str()).copied().unwrap_or(true));
    out
}
