//! Pluggable behaviors and the factory registry that resolves them by
//! `behavior_id`.
//!
//! Source payloads are never executed. A component's behavior comes from the
//! factory named in its `behavior_id` metadata; a config whose factory is
//! missing loads as dormant.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::environment::ActionDecl;
use crate::error::{Error, Result};
use crate::kernel::Context;
use crate::types::ComponentConfig;
use crate::value::{Map, Value};

pub trait ToolBehavior: Send + Sync {
    fn call(&self, ctx: &Context<'_>, args: &Map) -> Result<Value>;
}

/// A live, stateful environment instance.
pub trait Environment: Send + Sync {
    /// Action space discovered at registration. Instances whose actions are
    /// declared externally may return an empty list.
    fn actions(&self) -> Vec<ActionDecl> {
        Vec::new()
    }

    /// Current state. Must not mutate.
    fn state(&self, ctx: &Context<'_>) -> Result<Value>;

    fn step(&mut self, ctx: &Context<'_>, action: &str, args: &Map) -> Result<Value>;
}

pub trait AgentPolicy: Send + Sync {
    fn invoke(&self, ctx: &Context<'_>, task: &Value) -> Result<Value>;

    /// Non-reentrant policies are serialized per agent.
    fn reentrant(&self) -> bool {
        false
    }
}

/// Rule mapping an environment's state to the next action, used when an
/// environment is elevated into an agent.
pub trait EnvPolicy: Send + Sync {
    /// Rejects action spaces the policy cannot drive.
    fn check(&self, actions: &[ActionDecl]) -> Result<()>;

    fn choose(&self, state: &Value, actions: &[ActionDecl]) -> Result<(String, Map)>;
}

pub type ToolFactory = Arc<dyn Fn(&ComponentConfig) -> Result<Arc<dyn ToolBehavior>> + Send + Sync>;
pub type EnvFactory = Arc<dyn Fn(&ComponentConfig) -> Result<Box<dyn Environment>> + Send + Sync>;
pub type AgentFactory = Arc<dyn Fn(&ComponentConfig) -> Result<Arc<dyn AgentPolicy>> + Send + Sync>;

struct FnTool<F>(F);

impl<F> ToolBehavior for FnTool<F>
where
    F: Fn(&Context<'_>, &Map) -> Result<Value> + Send + Sync,
{
    fn call(&self, ctx: &Context<'_>, args: &Map) -> Result<Value> {
        (self.0)(ctx, args)
    }
}

struct FnPolicy<F> {
    f: F,
    reentrant: bool,
}

impl<F> AgentPolicy for FnPolicy<F>
where
    F: Fn(&Context<'_>, &Value) -> Result<Value> + Send + Sync,
{
    fn invoke(&self, ctx: &Context<'_>, task: &Value) -> Result<Value> {
        (self.f)(ctx, task)
    }

    fn reentrant(&self) -> bool {
        self.reentrant
    }
}

pub fn tool_fn<F>(f: F) -> Arc<dyn ToolBehavior>
where
    F: Fn(&Context<'_>, &Map) -> Result<Value> + Send + Sync + 'static,
{
    Arc::new(FnTool(f))
}

pub fn policy_fn<F>(reentrant: bool, f: F) -> Arc<dyn AgentPolicy>
where
    F: Fn(&Context<'_>, &Value) -> Result<Value> + Send + Sync + 'static,
{
    Arc::new(FnPolicy { f, reentrant })
}

/// Behavior factories keyed by `behavior_id`, plus environment-driving
/// policies keyed by policy id.
#[derive(Clone, Default)]
pub struct Factories {
    tools: BTreeMap<String, ToolFactory>,
    environments: BTreeMap<String, EnvFactory>,
    agents: BTreeMap<String, AgentFactory>,
    env_policies: BTreeMap<String, Arc<dyn EnvPolicy>>,
}

impl fmt::Debug for Factories {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Factories")
            .field("tools", &self.tools.keys().collect::<Vec<_>>())
            .field("environments", &self.environments.keys().collect::<Vec<_>>())
            .field("agents", &self.agents.keys().collect::<Vec<_>>())
            .field("env_policies", &self.env_policies.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Factories {
    pub fn empty() -> Self {
        Factories::default()
    }

    /// Built-in fixtures and the delegation behaviors used by
    /// transformations.
    pub fn builtin() -> Self {
        let mut f = Factories::default();
        crate::builtins::install(&mut f);
        crate::transform::install(&mut f);
        f
    }

    pub fn add_tool(&mut self, id: impl Into<String>, factory: ToolFactory) -> &mut Self {
        self.tools.insert(id.into(), factory);
        self
    }

    /// Registers a stateless tool behavior shared by every config using `id`.
    pub fn add_tool_fn<F>(&mut self, id: impl Into<String>, f: F) -> &mut Self
    where
        F: Fn(&Context<'_>, &Map) -> Result<Value> + Send + Sync + 'static,
    {
        let behavior = tool_fn(f);
        self.add_tool(id, Arc::new(move |_| Ok(behavior.clone())))
    }

    pub fn add_environment(&mut self, id: impl Into<String>, factory: EnvFactory) -> &mut Self {
        self.environments.insert(id.into(), factory);
        self
    }

    pub fn add_agent(&mut self, id: impl Into<String>, factory: AgentFactory) -> &mut Self {
        self.agents.insert(id.into(), factory);
        self
    }

    pub fn add_agent_fn<F>(&mut self, id: impl Into<String>, reentrant: bool, f: F) -> &mut Self
    where
        F: Fn(&Context<'_>, &Value) -> Result<Value> + Send + Sync + 'static,
    {
        let policy = policy_fn(reentrant, f);
        self.add_agent(id, Arc::new(move |_| Ok(policy.clone())))
    }

    pub fn add_env_policy(&mut self, id: impl Into<String>, policy: Arc<dyn EnvPolicy>) -> &mut Self {
        self.env_policies.insert(id.into(), policy);
        self
    }

    pub fn tool(&self, id: &str) -> Option<&ToolFactory> {
        self.tools.get(id)
    }

    pub fn environment(&self, id: &str) -> Option<&EnvFactory> {
        self.environments.get(id)
    }

    pub fn agent(&self, id: &str) -> Option<&AgentFactory> {
        self.agents.get(id)
    }

    pub fn env_policy(&self, id: &str) -> Result<Arc<dyn EnvPolicy>> {
        self.env_policies
            .get(id)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("unknown policy_id {id:?}")))
    }
}
