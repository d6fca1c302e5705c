//! Multilingual concept-coverage benchmark for text-to-image models.
//!
//! The pipeline runs in stages: build an aligned concept list, render
//! prompts, generate images, embed them, score each (concept, language)
//! population and report.

pub mod concepts;
pub mod generation;
pub mod lang;
pub mod metrics;
pub mod prompts;
pub mod report;
pub mod store;
