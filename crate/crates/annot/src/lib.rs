//! Annotation service: serves frames to human subjects, stores their
//! critical-row markings in an append-only log and derives ground-truth
//! visibility from complete sessions.
//!
//! Routes:
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/sessions` | [`api::CreateSessionRequest`] → 201 [`api::SessionView`] |
//! | GET | `/sessions/{id}` | [`api::SessionView`] |
//! | POST | `/sessions/{id}/annotations` | [`api::AnnotationRequest`] → 201 [`api::AnnotationResponse`] |
//! | GET | `/frames/{camera}/{index}` | PNG; `?overlay=horizon` draws the horizon row |
//! | GET | `/export/{camera}` | ground-truth CSV |
//!
//! Errors are [`api::ErrorBody`] with the [`AnnotError`] kind in `error`.

pub mod api;
pub mod catalog;
pub mod error;
pub mod server;
pub mod store;

pub use catalog::{CameraEntry, Catalog, FrameSource};
pub use error::AnnotError;
pub use server::{router, serve, AppState, ServiceConfig};
pub use store::Store;
