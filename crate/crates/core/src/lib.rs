//! Core data model of the DARA toolkit.
//!
//! A DARPAL document describes how one service provider accepts data subject
//! access requests: who the provider is ([`Meta`]), which request options it
//! offers ([`RequestParameter`]) and through which interfaces a request can
//! be sent ([`RequestInterface`]). Web interfaces may carry an executable
//! workflow, whose block vocabulary lives in [`workflow`].

pub mod canonical;
pub mod document;
pub mod parse;
pub mod report;
pub mod validate;
pub mod version;
pub mod workflow;

pub use canonical::{canonicalize, compute_hash, verify_hash, with_embedded_hash};
pub use document::{
    normalize_provider_name, ApiInterface, AuthenticationSpec, DarpalDocument, ManualInterface,
    Meta, RequestInterface, RequestParameter, TimeRange, WebInterface, WorkflowContainer,
    SCHEMA_VERSION,
};
pub use parse::{parse_document, parse_document_bytes, DocumentError};
pub use report::{Finding, Severity, ValidationReport};
pub use validate::{validate_document, MANDATORY_PATHS};
pub use version::Version;

/// Validates the document and, when it carries a workflow container, the
/// workflow too, with container findings placed under their document path.
pub fn validate_all(doc: &DarpalDocument) -> ValidationReport {
    let mut report = validate_document(doc);
    if let Some(container) = doc.workflow_container() {
        report.merge_prefixed(
            "requestInterface.webinterface.workflowContainer",
            workflow::validate_workflow(container),
        );
    }
    report
}
