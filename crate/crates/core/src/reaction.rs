//! Monotone driver-state series and their ensembles.

use thiserror::Error;

use crate::signals::MotionSeries;
use crate::Scalar;

pub const DEFAULT_MIN_WINDOW: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReactionError {
    #[error("breakpoint {bp} is outside a series of length {n}")]
    BreakpointOutOfRange { bp: usize, n: usize },
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("ensemble needs at least one input series")]
    NoInputs,
    #[error("series is not a monotone step: frame {0} is false after a true frame")]
    NotMonotone(usize),
}

/// Boolean per frame: false until the reaction, true from then on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReactionSeries {
    pub video_id: String,
    values: Vec<bool>,
}

impl ReactionSeries {
    pub fn from_step(video_id: impl Into<String>, step: Option<usize>, n: usize) -> Self {
        let at = step.unwrap_or(n).min(n);
        Self {
            video_id: video_id.into(),
            values: (0..n).map(|i| i >= at).collect(),
        }
    }

    /// Rejects series that switch back to false.
    pub fn from_values(video_id: impl Into<String>, values: Vec<bool>) -> Result<Self, ReactionError> {
        if let Some(first) = values.iter().position(|&v| v) {
            if let Some(off) = values[first..].iter().position(|&v| !v) {
                return Err(ReactionError::NotMonotone(first + off));
            }
        }
        Ok(Self {
            video_id: video_id.into(),
            values,
        })
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// First true frame, if any.
    pub fn step(&self) -> Option<usize> {
        self.values.iter().position(|&v| v)
    }
}

pub fn step_from_breakpoint(video_id: &str, bp: Option<usize>, n: usize) -> Result<ReactionSeries, ReactionError> {
    match bp {
        Some(bp) if bp >= n => Err(ReactionError::BreakpointOutOfRange { bp, n }),
        _ => Ok(ReactionSeries::from_step(video_id, bp, n)),
    }
}

/// Ordinary least-squares slope of `values` against their indices.
fn ols_slope<T: Scalar>(values: &[T]) -> T {
    let n = values.len();
    if n < 2 {
        return T::zero();
    }
    let nf = T::of_usize(n);
    let t_mean = T::of_usize(n - 1) / T::lit(2.0);
    let y_mean = values.iter().copied().sum::<T>() / nf;
    let mut num = T::zero();
    let mut den = T::zero();
    for (i, &y) in values.iter().enumerate() {
        let dt = T::of_usize(i) - t_mean;
        num += dt * (y - y_mean);
        den += dt * dt;
    }
    num / den
}

/// Fits a line to the growing prefix `values[0..=i]` for every
/// `i ≥ min_window − 1`; the first prefix whose slope falls below
/// `slope_threshold` switches the reaction on.
pub fn baseline_slope_rule<T: Scalar>(
    signal: &MotionSeries<T>,
    min_window: usize,
    slope_threshold: T,
) -> ReactionSeries {
    let n = signal.len();
    let window = min_window.max(2);
    let step = (window - 1..n).find(|&i| ols_slope(&signal.values[..=i]) < slope_threshold);
    ReactionSeries::from_step(&signal.video_id, step, n)
}

fn common_len(series: &[ReactionSeries]) -> Result<usize, ReactionError> {
    let first = series.first().ok_or(ReactionError::NoInputs)?;
    for s in &series[1..] {
        if s.len() != first.len() {
            return Err(ReactionError::LengthMismatch(first.len(), s.len()));
        }
    }
    Ok(first.len())
}

fn positions(series: &[ReactionSeries], n: usize) -> impl Iterator<Item = usize> + '_ {
    series.iter().map(move |s| s.step().unwrap_or(n))
}

/// Pointwise OR: switches on at the earliest input step.
pub fn ensemble_or(series: &[ReactionSeries]) -> Result<ReactionSeries, ReactionError> {
    let n = common_len(series)?;
    let step = positions(series, n).min().unwrap_or(n);
    Ok(ReactionSeries::from_step(&series[0].video_id, Some(step), n))
}

/// Pointwise AND: switches on once every input has.
pub fn ensemble_and(series: &[ReactionSeries]) -> Result<ReactionSeries, ReactionError> {
    let n = common_len(series)?;
    let step = positions(series, n).max().unwrap_or(n);
    Ok(ReactionSeries::from_step(&series[0].video_id, Some(step), n))
}

/// Mean of the first-true positions, rounded half down. An input that never
/// switches on votes `n`; a mean of `n` leaves the result all false.
pub fn ensemble_mean_position(series: &[ReactionSeries]) -> Result<ReactionSeries, ReactionError> {
    let n = common_len(series)?;
    let count = series.len();
    let sum: usize = positions(series, n).sum();
    // round-half-down of sum / count == ceil((2·sum − count) / (2·count))
    let twice = 2 * sum;
    let step = if twice <= count {
        0
    } else {
        (twice - count).div_ceil(2 * count)
    };
    Ok(ReactionSeries::from_step(&series[0].video_id, Some(step.min(n)), n))
}
