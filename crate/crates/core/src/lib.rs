//! Step-level routing between a small and a large text generator, driven by
//! a two-component Gaussian mixture over step confidences.

pub mod confidence;
pub mod cost;
pub mod engine;
pub mod generators;
pub mod mixture;
pub mod routing;
pub mod cli;
