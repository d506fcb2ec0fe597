//! The process repository: versioned DARPAL documents per provider, behind
//! an HTTP/JSON API.
//!
//! | Route | |
//! |---|---|
//! | `GET /providers` | summaries, sorted by provider |
//! | `GET /providers/{name}` | the stored document, byte for byte |
//! | `POST /providers/{name}` | create or update; 201 on create, 200 on update |
//! | `DELETE /providers/{name}` | 204 |
//! | `GET /providers/{name}/history` | stored versions, oldest first |
//! | `POST /providers/{name}/reports` | append an execution report |
//! | `GET /providers/{name}/reports/summary` | report counts per outcome |
//!
//! A write must validate, carry a matching hash, name the provider of its
//! path and raise the version. Errors are `{error, detail, findings?}`.
//! The service has no authentication and is not meant for public hosting.

pub mod api;
pub mod client;
pub mod store;

pub use api::{router, ApiError, RepoServer, ServeError, JSON_UTF8};
pub use client::{ClientError, RepoClient};
pub use store::{
    ExecutionReport, HistoryEntry, ProviderSummary, ReportOutcome, ReportSummary, Store,
    StoreError, Stored,
};
