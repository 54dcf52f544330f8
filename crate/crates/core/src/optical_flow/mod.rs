//! Dense optical flow by polynomial expansion and a whole-frame motion score.
//!
//! Each frame is approximated locally by a quadratic polynomial. The
//! displacement between two frames follows from how the linear coefficients
//! change, aggregated over a box window and refined coarse to fine on an image
//! pyramid. Flow vectors follow `prev(x) ≈ next(x + d)`, so content moving
//! right gives positive `dx`.

mod expansion;
mod farneback;

use thiserror::Error;

use crate::ingest::{load_gray_frame, FrameStore, IngestError};
use crate::signals::{MotionSeries, SignalKind};
use crate::Scalar;

pub use expansion::{polynomial_expansion, PolyExpansion, Quadratic};
pub use farneback::farneback_flow;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid flow parameters: {0}")]
    InvalidParams(String),
    #[error("image size mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("image of {width}x{height} is smaller than the {poly_n}x{poly_n} expansion window")]
    TooSmall { width: usize, height: usize, poly_n: usize },
    #[error("image value at index {0} is not finite or outside [0, 1]")]
    InvalidPixel(usize),
    #[error("video {0} has no frames")]
    NoFrames(String),
    #[error("frame {frame_index}: {source}")]
    Frame {
        frame_index: usize,
        #[source]
        source: IngestError,
    },
}

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> GrayImage<T> {
    /// Validates size and value range.
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self, FlowError> {
        if data.len() != width * height {
            return Err(FlowError::InvalidParams(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|v| !v.is_finite() || *v < T::zero() || *v > T::one())
        {
            return Err(FlowError::InvalidPixel(i));
        }
        Ok(Self { width, height, data })
    }

    /// Unchecked constructor for data already known to be in range.
    ///
    /// # Panics
    /// When `data.len() != width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "image buffer size");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }
}

/// Per-pixel displacement `(dx, dy)` in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T> {
    pub width: usize,
    pub height: usize,
    pub vectors: Vec<[T; 2]>,
}

impl<T: Scalar> FlowField<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            vectors: vec![[T::zero(); 2]; width * height],
        }
    }

    /// Same vector at every pixel.
    pub fn uniform(width: usize, height: usize, dx: T, dy: T) -> Self {
        Self {
            width,
            height,
            vectors: vec![[dx, dy]; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [T; 2] {
        self.vectors[y * self.width + x]
    }

    /// Mean vector length over every pixel.
    pub fn mean_magnitude(&self) -> T {
        if self.vectors.is_empty() {
            return T::zero();
        }
        let sum: T = self.vectors.iter().map(|v| v[0].hypot(v[1])).sum();
        sum / T::of_usize(self.vectors.len())
    }

    /// Componentwise mean over the central `fraction` of each dimension.
    pub fn region_mean(&self, fraction: T) -> [T; 2] {
        let span = |n: usize| {
            let keep = (T::of_usize(n) * fraction)
                .round()
                .to_usize()
                .unwrap_or(n)
                .clamp(1, n.max(1));
            let start = (n - keep.min(n)) / 2;
            start..start + keep.min(n)
        };
        let mut sum = [T::zero(); 2];
        let mut count = 0usize;
        for y in span(self.height) {
            for x in span(self.width) {
                let v = self.get(x, y);
                sum[0] += v[0];
                sum[1] += v[1];
                count += 1;
            }
        }
        if count == 0 {
            return sum;
        }
        let c = T::of_usize(count);
        [sum[0] / c, sum[1] / c]
    }
}

/// Magnitude and angle per pixel; angles lie in `(−π, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarField<T> {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<T>,
    pub angle: Vec<T>,
}

pub fn to_polar<T: Scalar>(flow: &FlowField<T>) -> PolarField<T> {
    let (magnitude, angle) = flow.vectors.iter().map(|&[dx, dy]| polar(dx, dy)).unzip();
    PolarField {
        width: flow.width,
        height: flow.height,
        magnitude,
        angle,
    }
}

fn polar<T: Scalar>(dx: T, dy: T) -> (T, T) {
    let m = dx.hypot(dy);
    if m == T::zero() {
        return (m, T::zero());
    }
    let mut a = dy.atan2(dx);
    if a <= -T::PI() {
        a = T::PI();
    }
    (m, a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams<T> {
    /// Size ratio between consecutive pyramid levels, in `(0, 1)`.
    pub pyramid_scale: T,
    /// Pyramid levels including the full-resolution image.
    pub levels: usize,
    /// Side of the box window aggregating the constraints; odd.
    pub window_size: usize,
    pub iterations: usize,
    /// Side of the polynomial expansion window, 5 or 7.
    pub poly_n: usize,
    pub poly_sigma: T,
    /// Frames are resized by this factor in `(0, 1]` before estimation;
    /// vectors are reported in full-resolution pixels.
    pub prescale: T,
}

impl<T: Scalar> Default for FlowParams<T> {
    fn default() -> Self {
        Self {
            pyramid_scale: T::lit(0.5),
            levels: 3,
            window_size: 15,
            iterations: 3,
            poly_n: 5,
            poly_sigma: T::lit(1.1),
            prescale: T::one(),
        }
    }
}

impl<T: Scalar> FlowParams<T> {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: String| Err(FlowError::InvalidParams(m));
        if !(self.pyramid_scale > T::zero() && self.pyramid_scale < T::one()) {
            return bad(format!("pyramid_scale {} not in (0, 1)", self.pyramid_scale));
        }
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        if self.window_size == 0 || self.window_size % 2 == 0 {
            return bad(format!("window_size {} must be odd", self.window_size));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.poly_n != 5 && self.poly_n != 7 {
            return bad(format!("poly_n {} must be 5 or 7", self.poly_n));
        }
        if !(self.poly_sigma.is_finite() && self.poly_sigma > T::zero()) {
            return bad(format!("poly_sigma {} must be positive", self.poly_sigma));
        }
        if !(self.prescale > T::zero() && self.prescale <= T::one()) {
            return bad(format!("prescale {} not in (0, 1]", self.prescale));
        }
        Ok(())
    }
}

/// Mean flow magnitude and the direction of the mean vector for one frame
/// pair. Frame 0 has no predecessor and reports zeros.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSummary<T> {
    pub frame_index: usize,
    pub magnitude_mean: T,
    pub angle_mean: T,
}

fn summarize<T: Scalar>(frame_index: usize, flow: &FlowField<T>) -> FlowSummary<T> {
    let n = T::of_usize(flow.vectors.len().max(1));
    let (sx, sy) = flow
        .vectors
        .iter()
        .fold((T::zero(), T::zero()), |(a, b), v| (a + v[0], b + v[1]));
    FlowSummary {
        frame_index,
        magnitude_mean: flow.mean_magnitude(),
        angle_mean: polar(sx / n, sy / n).1,
    }
}

/// Flow summaries for consecutive pairs of an in-memory frame sequence.
pub fn flow_summaries_from_images<T: Scalar>(
    frames: &[GrayImage<T>],
    params: &FlowParams<T>,
) -> Result<Vec<FlowSummary<T>>, FlowError> {
    params.validate()?;
    let mut out = Vec::with_capacity(frames.len());
    if !frames.is_empty() {
        out.push(FlowSummary {
            frame_index: 0,
            magnitude_mean: T::zero(),
            angle_mean: T::zero(),
        });
    }
    for (i, pair) in frames.windows(2).enumerate() {
        let flow = farneback_flow(&pair[0], &pair[1], params)?;
        out.push(summarize(i + 1, &flow));
    }
    Ok(out)
}

/// Flow summaries for frames `0..store.len()` of a video. Frames are
/// decoded one pair at a time.
pub fn flow_summaries<T: Scalar>(store: &FrameStore, params: &FlowParams<T>) -> Result<Vec<FlowSummary<T>>, FlowError> {
    params.validate()?;
    if store.is_empty() {
        return Err(FlowError::NoFrames(store.video_id.clone()));
    }
    let load = |i: usize| load_gray_frame::<T>(store, i).map_err(|source| FlowError::Frame { frame_index: i, source });
    let mut prev = load(0)?;
    let mut out = vec![FlowSummary {
        frame_index: 0,
        magnitude_mean: T::zero(),
        angle_mean: T::zero(),
    }];
    for i in 1..store.len() {
        let next = load(i)?;
        let flow = farneback_flow(&prev, &next, params)?;
        out.push(summarize(i, &flow));
        prev = next;
    }
    Ok(out)
}

/// Mean flow magnitude per frame; the first frame scores 0.
pub fn motion_score_series<T: Scalar>(
    store: &FrameStore,
    params: &FlowParams<T>,
) -> Result<MotionSeries<T>, FlowError> {
    let values = flow_summaries(store, params)?
        .into_iter()
        .map(|s| s.magnitude_mean)
        .collect();
    Ok(MotionSeries::new(&store.video_id, SignalKind::OpticalFlow, values))
}
