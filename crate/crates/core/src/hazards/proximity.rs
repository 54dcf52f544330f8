use super::{HazardEntry, HazardError, HazardSelection};
use crate::ingest::VideoAnnotations;
use crate::Scalar;

/// Per frame, the `k` detections whose box centres are closest to the frame
/// centre, nearest first; equal distances order by track id.
pub fn nearest_k_tracks<T: Scalar>(video: &VideoAnnotations<T>, k: usize) -> Result<HazardSelection, HazardError> {
    if k == 0 {
        return Err(HazardError::ZeroK);
    }
    let (cx, cy) = video.frame_center();
    let frames = video
        .frames
        .iter()
        .map(|frame| {
            let mut ranked: Vec<(T, &str)> = frame
                .detections
                .iter()
                .map(|d| {
                    let (x, y) = d.bbox.center();
                    ((x - cx).hypot(y - cy), d.track_id.as_str())
                })
                .collect();
            ranked.sort_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.1.cmp(b.1))
            });
            ranked.into_iter().take(k).map(|(_, id)| HazardEntry::new(id)).collect()
        })
        .collect();
    Ok(HazardSelection {
        video_id: video.video_id.clone(),
        frames,
    })
}

/// Every detection of every frame, in annotation order.
pub fn all_tracks<T: Scalar>(video: &VideoAnnotations<T>) -> HazardSelection {
    HazardSelection {
        video_id: video.video_id.clone(),
        frames: video
            .frames
            .iter()
            .map(|f| f.detections.iter().map(|d| HazardEntry::new(&d.track_id)).collect())
            .collect(),
    }
}
