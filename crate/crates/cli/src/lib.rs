//! Configuration, presets and drivers behind the `graphon-logit` binary.

pub mod config;
pub mod driver;
pub mod study;

pub use config::{expand_preset, CasePreset, Costs, RunConfig};
