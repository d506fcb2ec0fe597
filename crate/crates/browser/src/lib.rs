//! A small headless browser driven over the W3C WebDriver HTTP protocol.
//!
//! Pages are fetched over HTTP and parsed with html5ever; there is no
//! script execution, layout or rendering. Supported are navigation, element
//! lookup by CSS, XPath, link text and tag name, clicks on links, buttons,
//! checkboxes, radios and options, typing into text controls, urlencoded
//! form submission, cookies and multiple windows. That is enough to drive
//! server-rendered request forms end to end.

pub mod dom;
pub mod error;
pub mod fetch;
pub mod server;
pub mod session;
pub mod xpath;

pub use error::WdError;
pub use server::{router, BrowserServer, ELEMENT_KEY};
