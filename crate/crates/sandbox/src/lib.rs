//! A mock service-provider website.
//!
//! Each [`Scenario`] is served under its own path prefix with a privacy
//! page, a data request form, a confirmation page and, where required, a
//! cookie-based login. Received requests land in a journal, readable
//! in-process or at `GET /__journal`.
//!
//! [`page_model`] describes the same pages as a scripted
//! [`PageModel`](dara_engine::PageModel) for the reference interpreter, and
//! [`fixture_document`] yields a DARPAL document whose workflow files a
//! request on a scenario.

mod pages;
mod scenario;
mod server;

use dara_core::{with_embedded_hash, DarpalDocument, DocumentError};
use url::Url;

pub use pages::{drifted_id, page_model};
pub use scenario::{
    FailureMode, FieldKind, FormField, Scenario, BUILTIN, DATA_FORMATS, DEFAULT_SLOW_MS,
};
pub use server::{
    SandboxError, SandboxServer, Submission, SESSION_COOKIE, SESSION_TOKEN, TEST_PASSWORD,
    TEST_USER,
};

/// The shipped sandbox workflow document, pointing at a placeholder host.
pub const FIXTURE: &str = include_str!("../../../fixtures/sandbox.darpal.json");

/// Provider key of the fixture document for `scenario`.
pub fn provider_name(scenario: &Scenario) -> String {
    dara_core::normalize_provider_name(&format!("sandbox {}", scenario.name))
}

/// The fixture document retargeted at `scenario` on the site rooted at
/// `base`, re-hashed.
pub fn fixture_document(scenario: &Scenario, base: &Url) -> Result<DarpalDocument, DocumentError> {
    let mut doc = dara_core::parse_document(FIXTURE)?;
    doc.meta.name = Some(format!("Sandbox {}", scenario.name));
    doc.request_parameter.data_format = Some(scenario.formats());
    let start = base
        .join(&format!("{}/privacy", scenario.name))
        .expect("scenario path joins");
    if let Some(web) = doc.request_interface.webinterface.as_mut() {
        web.start_url = Some(start.to_string());
    }
    with_embedded_hash(&doc)
}
