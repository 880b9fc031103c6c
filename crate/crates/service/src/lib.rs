//! HTTP service, job runner and persistence for the concern classifier.

pub mod api;
pub mod classify;
pub mod config;
pub mod corpus;
pub mod fetch;
pub mod jobs;
pub mod store;
pub mod teacher_http;

pub use api::{router, AppState};
pub use config::ServiceConfig;
pub use store::Store;
