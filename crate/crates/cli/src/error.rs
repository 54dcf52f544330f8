use std::path::PathBuf;

use hazardscope::captions::CaptionError;
use hazardscope::changepoint::CpdError;
use hazardscope::hazards::HazardError;
use hazardscope::ingest::IngestError;
use hazardscope::metrics::MetricsError;
use hazardscope::optical_flow::FlowError;
use hazardscope::reaction::ReactionError;
use thiserror::Error;

use crate::submission::SubmissionError;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(Box<IngestError>),
    #[error("video {video_id}: optical flow: {source}")]
    Flow {
        video_id: String,
        #[source]
        source: FlowError,
    },
    #[error("video {video_id}: {signal} change points: {source}")]
    Cpd {
        video_id: String,
        signal: &'static str,
        #[source]
        source: CpdError,
    },
    #[error("video {video_id}: {source}")]
    Reaction {
        video_id: String,
        #[source]
        source: ReactionError,
    },
    #[error("video {video_id}: {source}")]
    Hazards {
        video_id: String,
        #[source]
        source: HazardError,
    },
    #[error("video {video_id}: captions: {source}")]
    Caption {
        video_id: String,
        #[source]
        source: Box<CaptionError>,
    },
    #[error("{0}")]
    Backend(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Submission(#[from] SubmissionError),
    #[error("no videos match {0:?}")]
    NoVideos(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Backend(_) => EXIT_BACKEND,
            Self::Caption { source, .. } if is_backend_failure(source) => EXIT_BACKEND,
            Self::Io { .. } => EXIT_OTHER,
            _ => EXIT_VALIDATION,
        }
    }

    pub(crate) fn caption(video_id: impl Into<String>, source: CaptionError) -> Self {
        Self::Caption {
            video_id: video_id.into(),
            source: Box::new(source),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<IngestError> for PipelineError {
    fn from(err: IngestError) -> Self {
        Self::Ingest(Box::new(err))
    }
}

fn is_backend_failure(err: &CaptionError) -> bool {
    matches!(err, CaptionError::Transport(_) | CaptionError::CacheMiss { .. })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Config("x".into()).exit_code(), EXIT_VALIDATION);
        assert_eq!(PipelineError::Backend("down".into()).exit_code(), EXIT_BACKEND);
        let caption = PipelineError::caption("v", CaptionError::Transport("refused".into()));
        assert_eq!(caption.exit_code(), EXIT_BACKEND);
        let io = PipelineError::io("/x", std::io::Error::other("disk"));
        assert_eq!(io.exit_code(), EXIT_OTHER);
    }
}
