//! Workflow execution.
//!
//! [`execute`] drives a [`BoundWorkflow`](dara_core::workflow::BoundWorkflow)
//! through any W3C WebDriver server and reports its outcome as a stream of
//! [`ExecutionSignal`]s. [`reference_interpret`] runs the same block
//! vocabulary against a scripted [`PageModel`] without a browser.

pub mod model;
pub mod result;
pub mod run;
pub mod signal;
pub mod webdriver;

pub use model::{reference_interpret, ElementRecord, PageModel, PageSnapshot};
pub use result::{ExecutionResult, Outcome};
pub use run::{execute, step, EngineError, StepOutcome};
pub use signal::{
    is_well_formed, CollectingSink, ExecutionSignal, FanOut, NdjsonSink, NullSink, SignalSink,
};
pub use webdriver::{
    DriverError, ElementId, Session, Strategy, WebDriver, DEFAULT_ELEMENT_TIMEOUT_MS,
    DEFAULT_PAGE_TIMEOUT_MS, DEFAULT_RUN_CEILING_MS,
};
