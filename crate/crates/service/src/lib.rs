//! Session service: datasets are uploaded once, views are created against
//! them and edited through versioned mutations. Each edit recomputes only
//! the assignments and pair matrices whose inputs changed.

pub mod api;
pub mod store;

pub use api::{router, DatasetSummary, DEFAULT_MAX_UPLOAD_BYTES};
pub use store::{
    apply_mutation, view_from_request, CacheStats, Mutation, PatchRequest, ServiceError,
    SessionStore, ViewId, ViewRequest, ViewSnapshot,
};
