pub type Result<T, E = AnnotateError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("clip list is empty")]
    EmptyClipList,
    #[error("clip id {0:?} appears more than once")]
    DuplicateClipId(String),
    #[error("no clip is waiting for a label")]
    NoActiveClip,
    #[error("clip {got:?} is not the active clip ({expected:?})")]
    NotActiveClip { expected: String, got: String },
    #[error("clip {0:?} is already labeled")]
    ClipAlreadyLabeled(String),
    #[error("style was not part of any served candidate batch")]
    UnknownStyle,
    #[error("unknown batch {0}")]
    UnknownBatch(usize),
    #[error("candidate {index} is outside batch {batch_id} of {len}")]
    CandidateOutOfRange {
        batch_id: usize,
        index: usize,
        len: usize,
    },
    #[error("invalid anchor: {0}")]
    InvalidAnchor(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unknown session {0:?}")]
    SessionNotFound(String),
    #[error(transparent)]
    Core(#[from] traum_core::Error),
}

impl AnnotateError {
    pub fn code(&self) -> &'static str {
        match self {
            AnnotateError::EmptyClipList => "EmptyClipList",
            AnnotateError::DuplicateClipId(_) => "DuplicateClipId",
            AnnotateError::NoActiveClip => "NoActiveClip",
            AnnotateError::NotActiveClip { .. } => "NotActiveClip",
            AnnotateError::ClipAlreadyLabeled(_) => "ClipAlreadyLabeled",
            AnnotateError::UnknownStyle => "UnknownStyle",
            AnnotateError::UnknownBatch(_) => "UnknownBatch",
            AnnotateError::CandidateOutOfRange { .. } => "CandidateOutOfRange",
            AnnotateError::InvalidAnchor(_) => "InvalidAnchor",
            AnnotateError::InvalidRequest(_) => "InvalidRequest",
            AnnotateError::SessionNotFound(_) => "SessionNotFound",
            AnnotateError::Core(e) => e.code(),
        }
    }
}

impl From<std::io::Error> for AnnotateError {
    fn from(e: std::io::Error) -> Self {
        AnnotateError::Core(e.into())
    }
}
