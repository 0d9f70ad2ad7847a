//! Human review of flagged cases: a file-backed queue and its HTTP API.

pub mod http;
pub mod store;

pub use http::{router, serve, ReviewService};
pub use store::{
    FlagReason, ImageSlot, ListQuery, ReviewDraft, ReviewItem, ReviewPage, ReviewStatus,
    ReviewStore,
};

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("review item {} is already resolved as {:?}", .0.id, .0.resolution)]
    Conflict(Box<ReviewItem>),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("review store io: {0}")]
    Io(#[from] std::io::Error),
}
