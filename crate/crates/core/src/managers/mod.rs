//! The basic managers: model backends with fallback, prompt templates,
//! session memory, execution tracing and the config codec.

pub mod codec;
pub mod memory;
pub mod model;
pub mod prompt;
pub mod tracer;
