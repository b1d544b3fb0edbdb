//! Executable scenario-based requirements.

pub mod ceg;
pub mod dsl;
pub mod event;
pub mod gherkin;
pub mod harness;
pub mod kernel;
pub mod par;
pub mod project;
pub mod reqs;
pub mod sim;

#[cfg(test)]
pub(crate) mod fixtures;
