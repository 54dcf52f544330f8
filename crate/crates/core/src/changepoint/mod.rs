//! Kernel change-point detection on a scalar series.
//!
//! Segments are scored by their intra-segment scatter in the RKHS of an RBF
//! kernel. Two exact searches are provided: a dynamic program for a known
//! number of breakpoints and a pruned search that trades breakpoints against a
//! linear penalty. Among equally good segmentations (within a relative
//! tolerance of `Scalar::tie_eps`) both return the lexicographically smallest
//! breakpoint vector, with a shorter prefix ordered first.

mod kernel;
mod search;

use thiserror::Error;

use crate::Scalar;

pub use kernel::{gram_matrix, median_heuristic_gamma, segment_cost, Gamma, GramMatrix, KernelSpec, ScatterCost};
pub use search::{default_penalty, detect_fixed_k, detect_penalized, segmentation_cost};

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_MIN_SEGMENT_SIZE: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum CpdError {
    #[error("signal of length {len} is too short, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("signal value at index {index} is not finite")]
    NonFinite { index: usize },
    #[error("RBF gamma must be positive and finite, got {0}")]
    InvalidGamma(f64),
    #[error("penalty must be non-negative and finite, got {0}")]
    InvalidPenalty(f64),
    #[error("min_segment_size must be at least 1")]
    ZeroMinSegment,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("{k} breakpoints with min_segment_size {min_segment_size} need at least {needed} samples, got {len}")]
    Infeasible {
        k: usize,
        min_segment_size: usize,
        needed: usize,
        len: usize,
    },
    #[error("empty segment [{start}, {end})")]
    EmptySegment { start: usize, end: usize },
}

/// Penalty per breakpoint for the unknown-count mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty<T> {
    /// See [`default_penalty`].
    Auto,
    Fixed(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CpdMode<T> {
    FixedK(usize),
    Penalized(Penalty<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpdConfig<T> {
    pub mode: CpdMode<T>,
    pub min_segment_size: usize,
    pub kernel: KernelSpec<T>,
}

impl<T: Scalar> Default for CpdConfig<T> {
    fn default() -> Self {
        Self {
            mode: CpdMode::FixedK(DEFAULT_K),
            min_segment_size: DEFAULT_MIN_SEGMENT_SIZE,
            kernel: KernelSpec::default(),
        }
    }
}

/// Sorted, unique breakpoint indices. A breakpoint `b` splits the series
/// between samples `b − 1` and `b`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Breakpoints(Vec<usize>);

impl Breakpoints {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Earliest breakpoint, the frame at which the reaction is switched on.
    pub fn first(&self) -> Option<usize> {
        self.0.first().copied()
    }
}

pub fn first_breakpoint(bps: &Breakpoints) -> Option<usize> {
    bps.first()
}

/// Runs the configured search.
pub fn detect<T: Scalar>(signal: &[T], config: &CpdConfig<T>) -> Result<Breakpoints, CpdError> {
    match config.mode {
        CpdMode::FixedK(k) => detect_fixed_k(signal, &config.kernel, k, config.min_segment_size),
        CpdMode::Penalized(penalty) => {
            let beta = match penalty {
                Penalty::Fixed(beta) => beta,
                Penalty::Auto => {
                    if signal.len() < 2 {
                        return Ok(Breakpoints::default());
                    }
                    let gamma = config.kernel.resolve(signal)?;
                    default_penalty(signal, gamma)
                }
            };
            detect_penalized(signal, &config.kernel, beta, config.min_segment_size)
        }
    }
}
