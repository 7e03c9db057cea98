//! Labeling service: candidate style batches per music clip, "more like
//! this" refinement, and an append-only store of chosen pairs.

pub mod error;
pub mod service;
pub mod session;
pub mod store;

pub use error::{AnnotateError, Result};
pub use service::{router, serve, AppState};
pub use session::{new_session, AnnotationContext, AnnotationSession, ClipDescriptor};
pub use store::PairStore;
