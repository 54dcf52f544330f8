use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{DynamicImage, RgbImage};

use super::IngestError;
use crate::optical_flow::GrayImage;
use crate::Scalar;

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Frame images of one video: `<root>/<video_id>/frame_%06d.{png,pgm}`.
#[derive(Debug, Clone)]
pub struct FrameStore {
    pub video_id: String,
    pub dir: PathBuf,
    frames: BTreeMap<usize, PathBuf>,
    /// When set, every decoded frame must have exactly this size.
    pub expected_size: Option<(u32, u32)>,
}

impl FrameStore {
    /// Scans `root/video_id` for frame files. Unrelated files are ignored.
    pub fn open(root: &Path, video_id: &str) -> Result<Self, IngestError> {
        let dir = root.join(video_id);
        let entries = std::fs::read_dir(&dir).map_err(|source| IngestError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut frames = BTreeMap::new();
        for entry in entries {
            let entry = entry.map_err(|source| IngestError::Io {
                path: dir.clone(),
                source,
            })?;
            let name = entry.file_name();
            if let Some(index) = name.to_str().and_then(frame_index_from_name) {
                frames.insert(index, entry.path());
            }
        }
        Ok(Self {
            video_id: video_id.to_owned(),
            dir,
            frames,
            expected_size: None,
        })
    }

    pub fn with_expected_size(mut self, width: u32, height: u32) -> Self {
        self.expected_size = Some((width, height));
        self
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.frames.keys().copied()
    }

    pub fn path(&self, frame_index: usize) -> Option<&Path> {
        self.frames.get(&frame_index).map(PathBuf::as_path)
    }

    fn decode(&self, frame_index: usize) -> Result<DynamicImage, IngestError> {
        let path = self.path(frame_index).ok_or_else(|| IngestError::MissingFrame {
            video_id: self.video_id.clone(),
            frame_index,
        })?;
        let img = image::open(path).map_err(|source| match source {
            image::ImageError::IoError(source) => IngestError::Io {
                path: path.to_owned(),
                source,
            },
            source => IngestError::Decode {
                path: path.to_owned(),
                source,
            },
        })?;
        if let Some((width, height)) = self.expected_size {
            if img.width() != width || img.height() != height {
                return Err(IngestError::FrameSize {
                    video_id: self.video_id.clone(),
                    frame_index,
                    width,
                    height,
                    got_width: img.width(),
                    got_height: img.height(),
                });
            }
        }
        Ok(img)
    }
}

/// `frame_000123.png` -> 123
fn frame_index_from_name(name: &str) -> Option<usize> {
    let stem = name.strip_suffix(".png").or_else(|| name.strip_suffix(".pgm"))?;
    let digits = stem.strip_prefix("frame_")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Decodes a frame to single-channel luma in `[0, 1]` (ITU-R 601 weights).
/// Grayscale sources are passed through unchanged.
pub fn load_gray_frame<T: Scalar>(store: &FrameStore, frame_index: usize) -> Result<GrayImage<T>, IngestError> {
    Ok(to_gray(&store.decode(frame_index)?))
}

pub fn load_rgb_frame(store: &FrameStore, frame_index: usize) -> Result<RgbImage, IngestError> {
    Ok(store.decode(frame_index)?.to_rgb8())
}

pub(crate) fn to_gray<T: Scalar>(img: &DynamicImage) -> GrayImage<T> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => GrayImage::from_vec(
            w,
            h,
            buf.as_raw().iter().map(|&v| T::lit(f64::from(v) / 255.0)).collect(),
        ),
        DynamicImage::ImageLuma16(buf) => GrayImage::from_vec(
            w,
            h,
            buf.as_raw().iter().map(|&v| T::lit(f64::from(v) / 65535.0)).collect(),
        ),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            let luma = img.to_luma32f();
            GrayImage::from_vec(w, h, luma.as_raw().iter().map(|&v| T::lit(f64::from(v))).collect())
        }
        _ => {
            let rgb = img.to_rgb32f();
            let data = rgb
                .pixels()
                .map(|p| {
                    let [r, g, b] = p.0.map(f64::from);
                    T::lit((LUMA_R * r + LUMA_G * g + LUMA_B * b).clamp(0.0, 1.0))
                })
                .collect();
            GrayImage::from_vec(w, h, data)
        }
    }
}
