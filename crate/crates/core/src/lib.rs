//! Versioned, lifecycle-managed registries for tools, environments and
//! agents, with typed transformations between them, semantic retrieval,
//! session-scoped memory and tracing, and a critic-driven evolution loop.
//!
//! [`Tea`] is the kernel handle; every operation goes through it. The
//! [`wire`] and [`server`] modules expose the same operations as
//! newline-delimited envelopes.

pub mod agent;
pub mod behavior;
pub mod builtins;
pub mod clock;
pub mod environment;
pub mod error;
pub mod evolution;
pub mod kernel;
pub mod managers;
pub mod persist;
pub mod retrieval;
pub mod schema;
pub mod server;
pub mod tool;
pub mod transform;
pub mod types;
pub mod value;
pub mod version;
pub mod wire;

pub use agent::{AgentSpec, RelationEdge, RelationKind};
pub use behavior::Factories;
pub use environment::{ActionDecl, EnvironmentConfig, EnvironmentSpec};
pub use error::{Error, ErrorKind, Result};
pub use kernel::{Tea, TeaBuilder};
pub use managers::memory::SessionHandle;
pub use schema::{ParamDecl, ParamType, Signature};
pub use tool::{ToolResponse, ToolSpec};
pub use transform::{Toolkit, TransformKind, TransformRecord};
pub use types::{BumpLevel, ComponentConfig, ComponentKind, ComponentName, Descriptor, Version};
pub use value::{Map, Value};
pub use version::{LifecycleState, VersionRecord};
pub use wire::{Dispatcher, RequestEnvelope, ResponseEnvelope};
