//! The six cross-protocol transformations and their consistency checks.
//!
//! Every derived component is an ordinary registry entry whose behavior
//! delegates to its source at call time. Lineage lives in metadata
//! (`derived_from`, `transform`) so derived schemas can be re-checked later.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::AgentSpec;
use crate::behavior::{EnvPolicy, Environment, Factories};
use crate::environment::{ActionDecl, EnvironmentConfig, EnvironmentSpec};
use crate::error::{Error, ErrorKind, Result};
use crate::kernel::{read, write, Context, MutationGuard, Tea};
use crate::schema::{ParamDecl, ParamType, Signature};
use crate::tool::ToolSpec;
use crate::types::{ComponentConfig, ComponentKind, ComponentName, Descriptor, Timestamp, Validation, Version};
use crate::value::{canonical_string, map_of, Map, Value};

pub const DERIVED_FROM: &str = "derived_from";
pub const TRANSFORM: &str = "transform";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TransformKind {
    A2T,
    T2A,
    E2T,
    T2E,
    A2E,
    E2A,
}

impl TransformKind {
    pub const ALL: [TransformKind; 6] =
        [TransformKind::A2T, TransformKind::T2A, TransformKind::E2T, TransformKind::T2E, TransformKind::A2E, TransformKind::E2A];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::A2T => "A2T",
            TransformKind::T2A => "T2A",
            TransformKind::E2T => "E2T",
            TransformKind::T2E => "T2E",
            TransformKind::A2E => "A2E",
            TransformKind::E2A => "E2A",
        }
    }

    pub fn source_kind(self) -> ComponentKind {
        match self {
            TransformKind::A2T | TransformKind::A2E => ComponentKind::Agent,
            TransformKind::T2A | TransformKind::T2E => ComponentKind::Tool,
            TransformKind::E2T | TransformKind::E2A => ComponentKind::Environment,
        }
    }

    pub fn target_kind(self) -> ComponentKind {
        match self {
            TransformKind::A2T | TransformKind::E2T => ComponentKind::Tool,
            TransformKind::T2A | TransformKind::E2A => ComponentKind::Agent,
            TransformKind::T2E | TransformKind::A2E => ComponentKind::Environment,
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown transform kind {s:?}")))
    }
}

/// Tools that share context, typically lifted from one environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toolkit {
    pub source: ComponentName,
    pub tools: Vec<ComponentName>,
    #[serde(default)]
    pub shared_state_ref: Option<ComponentName>,
}

impl Toolkit {
    pub fn new(source: ComponentName, tools: Vec<ComponentName>) -> Self {
        Toolkit { source, tools, shared_state_ref: None }
    }

    pub fn to_value(&self) -> Value {
        Value::from_serialize(self).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub kind: TransformKind,
    pub input: ComponentName,
    pub outputs: Vec<ComponentName>,
    pub created_at: Timestamp,
    /// The kit a T2E record was built from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toolkit: Option<Toolkit>,
}

pub fn a2t_name(agent: &ComponentName) -> ComponentName {
    derived_name(format!("agent.{agent}"))
}

pub fn e2t_name(env: &ComponentName, action: &str) -> ComponentName {
    derived_name(format!("env.{env}.{action}"))
}

pub fn t2a_name(tool: &ComponentName) -> ComponentName {
    derived_name(format!("tool.{tool}"))
}

pub fn a2e_name(agent: &ComponentName) -> ComponentName {
    derived_name(format!("agent.{agent}.env"))
}

pub fn e2a_name(env: &ComponentName) -> ComponentName {
    derived_name(format!("env.{env}.agent"))
}

fn derived_name(s: String) -> ComponentName {
    // prefixing a valid name with a lowercase segment keeps it valid
    ComponentName::new(s).expect("derived names stay within the name pattern")
}

fn meta<'a>(cfg: &'a ComponentConfig, key: &str) -> Result<&'a str> {
    cfg.descriptor
        .metadata
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::invalid(format!("{} lacks {key} metadata", cfg.descriptor.name)))
}

/// Task signature of tool-designated agents: `{args: mapping}`.
pub fn t2a_task_signature() -> Signature {
    Signature::new(vec![ParamDecl::required("args", ParamType::Mapping, "arguments passed to the tool")])
}

pub fn interact_action() -> ActionDecl {
    ActionDecl::new("interact", "sends a task to the wrapped agent and returns its answer", Signature::open())
}

pub(crate) fn install(f: &mut Factories) {
    f.add_tool(
        "delegate.agent",
        Arc::new(|cfg| {
            let agent = meta(cfg, DERIVED_FROM)?.to_owned();
            Ok(crate::behavior::tool_fn(move |ctx, args| ctx.invoke_agent(&agent, &Value::Map(args.clone()))))
        }),
    );
    f.add_tool(
        "delegate.env_action",
        Arc::new(|cfg| {
            let env = meta(cfg, DERIVED_FROM)?.to_owned();
            let action = meta(cfg, "action")?.to_owned();
            Ok(crate::behavior::tool_fn(move |ctx, args| ctx.invoke_action(&env, &action, args)))
        }),
    );
    f.add_environment(
        "derived.toolkit",
        Arc::new(|cfg| {
            let kit: Toolkit = serde_json::from_str(meta(cfg, "toolkit")?)
                .map_err(|e| Error::invalid(format!("malformed toolkit metadata: {e}")))?;
            Ok(Box::new(ToolkitEnv::new(&kit)?))
        }),
    );
    f.add_environment(
        "derived.agent_env",
        Arc::new(|cfg| {
            Ok(Box::new(AgentEnv { agent: meta(cfg, DERIVED_FROM)?.to_owned(), interactions: 0, last_output: Value::Null }))
        }),
    );
    f.add_agent(
        "delegate.tool",
        Arc::new(|cfg| {
            let tool = meta(cfg, DERIVED_FROM)?.to_owned();
            Ok(crate::behavior::policy_fn(true, move |ctx, task| {
                let args = task
                    .get("args")
                    .and_then(Value::as_map)
                    .ok_or_else(|| Error::invalid("task needs an args mapping"))?;
                ctx.invoke_tool(&tool, args)
            }))
        }),
    );
    f.add_agent(
        "derived.env_agent",
        Arc::new(|cfg| {
            let env = meta(cfg, DERIVED_FROM)?.to_owned();
            let policy_id = meta(cfg, "policy_id")?.to_owned();
            Ok(crate::behavior::policy_fn(false, move |ctx, _task| env_step(ctx, &env, &policy_id)))
        }),
    );
    f.add_env_policy("always_increment", Arc::new(AlwaysIncrement));
    f.add_env_policy("greedy_first_action", Arc::new(GreedyFirstAction));
}

/// One policy step: read state, choose, act, report.
fn env_step(ctx: &Context<'_>, env: &str, policy_id: &str) -> Result<Value> {
    let policy = ctx.env_policy(policy_id)?;
    let cfg = ctx.env_config(env)?;
    let state = ctx.env_state(env)?;
    let (action, args) = policy.choose(&state, &cfg.actions)?;
    let result = ctx.invoke_action(env, &action, &args)?;
    let state = ctx.env_state(env)?;
    Ok(map_of([
        ("action", Value::from(action)),
        ("args", Value::Map(args)),
        ("result", result),
        ("state", state),
    ]))
}

struct AlwaysIncrement;

impl EnvPolicy for AlwaysIncrement {
    fn check(&self, actions: &[ActionDecl]) -> Result<()> {
        match actions.iter().find(|a| a.name == "increment") {
            Some(a) if !a.signature.params.iter().any(|p| p.required) => Ok(()),
            _ => Err(Error::invalid("always_increment needs an argument-free increment action")),
        }
    }

    fn choose(&self, _state: &Value, _actions: &[ActionDecl]) -> Result<(String, Map)> {
        Ok(("increment".to_owned(), Map::new()))
    }
}

/// Picks the first declared action that needs no arguments.
struct GreedyFirstAction;

impl GreedyFirstAction {
    fn pick(actions: &[ActionDecl]) -> Option<&ActionDecl> {
        actions.iter().find(|a| !a.signature.params.iter().any(|p| p.required))
    }
}

impl EnvPolicy for GreedyFirstAction {
    fn check(&self, actions: &[ActionDecl]) -> Result<()> {
        GreedyFirstAction::pick(actions)
            .map(|_| ())
            .ok_or_else(|| Error::invalid("greedy_first_action needs an action without required arguments"))
    }

    fn choose(&self, _state: &Value, actions: &[ActionDecl]) -> Result<(String, Map)> {
        let a = GreedyFirstAction::pick(actions).ok_or_else(|| Error::invalid("no argument-free action"))?;
        Ok((a.name.clone(), Map::new()))
    }
}

struct ToolkitEnv {
    tools: BTreeMap<String, String>,
    invocations: BTreeMap<String, i64>,
    shared: Option<String>,
}

impl ToolkitEnv {
    fn new(kit: &Toolkit) -> Result<Self> {
        let mut tools = BTreeMap::new();
        for t in &kit.tools {
            if tools.insert(t.short().to_owned(), t.to_string()).is_some() {
                return Err(Error::invalid(format!("toolkit has two tools named {}", t.short())));
            }
        }
        let invocations = tools.keys().map(|k| (k.clone(), 0)).collect();
        Ok(ToolkitEnv { tools, invocations, shared: kit.shared_state_ref.as_ref().map(|s| s.to_string()) })
    }
}

impl Environment for ToolkitEnv {
    fn state(&self, ctx: &Context<'_>) -> Result<Value> {
        let counts: Map = self.invocations.iter().map(|(k, n)| (k.clone(), Value::Int(*n))).collect();
        let shared = match &self.shared {
            Some(env) => ctx.env_state(env)?,
            None => Value::Null,
        };
        Ok(map_of([("invocations", Value::Map(counts)), ("shared_state", shared)]))
    }

    fn step(&mut self, ctx: &Context<'_>, action: &str, args: &Map) -> Result<Value> {
        let tool = self
            .tools
            .get(action)
            .ok_or_else(|| Error::new(ErrorKind::ActionNotFound, action.to_owned()))?;
        let out = ctx.invoke_tool(tool, args)?;
        *self.invocations.entry(action.to_owned()).or_default() += 1;
        Ok(out)
    }
}

struct AgentEnv {
    agent: String,
    interactions: i64,
    last_output: Value,
}

impl Environment for AgentEnv {
    fn actions(&self) -> Vec<ActionDecl> {
        vec![interact_action()]
    }

    fn state(&self, _: &Context<'_>) -> Result<Value> {
        Ok(map_of([("interactions", Value::Int(self.interactions)), ("last_output", self.last_output.clone())]))
    }

    fn step(&mut self, ctx: &Context<'_>, action: &str, args: &Map) -> Result<Value> {
        if action != "interact" {
            return Err(Error::new(ErrorKind::ActionNotFound, action.to_owned()));
        }
        let out = ctx.invoke_agent(&self.agent, &Value::Map(args.clone()))?;
        self.interactions += 1;
        self.last_output = out.clone();
        Ok(out)
    }
}

fn derived_descriptor(name: &ComponentName, description: String, behavior: &str, from: &ComponentName, kind: TransformKind) -> Descriptor {
    Descriptor::new(name.as_str(), description)
        .with_meta(crate::types::BEHAVIOR_KEY, behavior)
        .with_meta(DERIVED_FROM, from.as_str())
        .with_meta(TRANSFORM, kind.as_str())
}

impl Tea {
    /// Name must be unused in the target registry, including its history.
    fn ensure_free(&self, kind: ComponentKind, name: &ComponentName) -> Result<()> {
        if self.is_active(kind, name.as_str()) || self.versions().max_version(name, kind).is_some() {
            return Err(Error::conflict(format!("{kind} {name}")));
        }
        Ok(())
    }

    fn push_record(&self, kind: TransformKind, input: &ComponentName, outputs: Vec<ComponentName>, toolkit: Option<Toolkit>) -> TransformRecord {
        let rec = TransformRecord { kind, input: input.clone(), outputs, created_at: self.now(), toolkit };
        write(&self.inner.transforms).push(rec.clone());
        rec
    }

    /// Exposes an agent as the tool `agent.<name>`.
    pub fn a2t(&self, agent: &str) -> Result<ComponentConfig> {
        let g = self.lock_mutations();
        let src = self.live(ComponentKind::Agent, agent)?.config.clone();
        let from = src.name();
        let name = a2t_name(&from);
        self.ensure_free(ComponentKind::Tool, &name)?;
        let sig = Signature::from_value(&src.representations.argument_schema)?;
        let d = derived_descriptor(&name, src.descriptor.description.clone(), "delegate.agent", &from, TransformKind::A2T);
        let cfg = ToolSpec::new(d, sig).into_config(Version::INITIAL)?;
        let cfg = self.register_locked(&g, cfg, true)?;
        self.push_record(TransformKind::A2T, &from, vec![name], None);
        Ok(cfg)
    }

    /// Lifts every action of an environment into a tool `env.<env>.<action>`
    /// bound to the same live instance.
    pub fn e2t(&self, env: &str) -> Result<Toolkit> {
        let g = self.lock_mutations();
        let cfg = self.env_config(env)?;
        let from = cfg.base.name();
        let names: Vec<ComponentName> = cfg.actions.iter().map(|a| e2t_name(&from, &a.name)).collect();
        if names.is_empty() {
            return Err(Error::invalid(format!("environment {from} has no actions")));
        }
        for n in &names {
            self.ensure_free(ComponentKind::Tool, n)?;
        }
        let mut specs = Vec::new();
        for (a, n) in cfg.actions.iter().zip(&names) {
            let desc = if a.doc.trim().is_empty() { format!("{} action of {from}", a.name) } else { a.doc.clone() };
            let d = derived_descriptor(n, desc, "delegate.env_action", &from, TransformKind::E2T)
                .with_meta("action", a.name.as_str())
                .with_meta("shared_state_ref", from.as_str());
            specs.push(ToolSpec::new(d, a.signature.clone()).into_config(Version::INITIAL)?);
        }
        for s in specs {
            self.register_locked(&g, s, true)?;
        }
        self.push_record(TransformKind::E2T, &from, names.clone(), None);
        Ok(Toolkit { source: from.clone(), tools: names, shared_state_ref: Some(from) })
    }

    /// Groups a toolkit into an environment whose actions are the tools'
    /// short names.
    pub fn t2e(&self, kit: &Toolkit, name: &str) -> Result<EnvironmentConfig> {
        let g = self.lock_mutations();
        if kit.tools.is_empty() {
            return Err(Error::validation(vec!["empty toolkit".to_owned()]));
        }
        let new_name = ComponentName::new(name)?;
        self.ensure_free(ComponentKind::Environment, &new_name)?;
        if let Some(env) = &kit.shared_state_ref {
            self.live(ComponentKind::Environment, env.as_str())?;
        }
        let mut actions = Vec::new();
        for t in &kit.tools {
            let cfg = self.live(ComponentKind::Tool, t.as_str())?.config.clone();
            let sig = Signature::from_value(&cfg.representations.argument_schema)?;
            actions.push(ActionDecl::new(t.short(), cfg.descriptor.description.clone(), sig));
        }
        crate::environment::validate_actions(&actions)?;
        let tools: Vec<&str> = kit.tools.iter().map(ComponentName::as_str).collect();
        let mut d = derived_descriptor(
            &new_name,
            format!("environment over the {} toolkit: {}", kit.source, tools.join(", ")),
            "derived.toolkit",
            &kit.source,
            TransformKind::T2E,
        )
        .with_meta("toolkit", canonical_string(kit)?);
        if let Some(env) = &kit.shared_state_ref {
            d = d.with_meta("shared_state_ref", env.as_str());
        }
        let cfg = self.environment_config_from_spec(EnvironmentSpec::new(d).with_actions(actions))?;
        let cfg = self.register_locked(&g, cfg, true)?;
        self.push_record(TransformKind::T2E, &kit.source, vec![new_name], Some(kit.clone()));
        EnvironmentConfig::from_base(cfg)
    }

    /// Designates a tool as the agent `tool.<name>` taking `{args}` tasks.
    pub fn t2a(&self, tool: &str) -> Result<ComponentConfig> {
        let g = self.lock_mutations();
        let src = self.live(ComponentKind::Tool, tool)?.config.clone();
        let from = src.name();
        let name = t2a_name(&from);
        self.ensure_free(ComponentKind::Agent, &name)?;
        let d = derived_descriptor(&name, src.descriptor.description.clone(), "delegate.tool", &from, TransformKind::T2A);
        let cfg = AgentSpec::new(d).with_signature(t2a_task_signature()).into_config()?;
        let cfg = self.register_locked(&g, cfg, true)?;
        self.push_record(TransformKind::T2A, &from, vec![name], None);
        Ok(cfg)
    }

    /// Wraps an agent as the environment `agent.<name>.env` with a single
    /// `interact` action.
    pub fn a2e(&self, agent: &str) -> Result<EnvironmentConfig> {
        let g = self.lock_mutations();
        let src = self.live(ComponentKind::Agent, agent)?.config.clone();
        let from = src.name();
        let name = a2e_name(&from);
        self.ensure_free(ComponentKind::Environment, &name)?;
        let d = derived_descriptor(
            &name,
            format!("interactive environment around agent {from}: {}", src.descriptor.description),
            "derived.agent_env",
            &from,
            TransformKind::A2E,
        );
        let cfg = self.environment_config_from_spec(EnvironmentSpec::new(d).with_actions(vec![interact_action()]))?;
        let cfg = self.register_locked(&g, cfg, true)?;
        self.push_record(TransformKind::A2E, &from, vec![name], None);
        EnvironmentConfig::from_base(cfg)
    }

    /// Elevates an environment into the agent `env.<name>.agent` driven by a
    /// registered policy.
    pub fn e2a(&self, env: &str, policy_id: &str) -> Result<ComponentConfig> {
        let g = self.lock_mutations();
        let cfg = self.env_config(env)?;
        let from = cfg.base.name();
        let policy = self.factories().env_policy(policy_id)?;
        policy.check(&cfg.actions)?;
        let name = e2a_name(&from);
        self.ensure_free(ComponentKind::Agent, &name)?;
        let d = derived_descriptor(
            &name,
            format!("agent driving environment {from} with policy {policy_id}"),
            "derived.env_agent",
            &from,
            TransformKind::E2A,
        )
        .with_meta("policy_id", policy_id);
        let agent = AgentSpec::new(d).into_config()?;
        let agent = self.register_locked(&g, agent, true)?;
        self.push_record(TransformKind::E2A, &from, vec![name], None);
        Ok(agent)
    }

    pub fn transforms(&self) -> Vec<TransformRecord> {
        read(&self.inner.transforms).clone()
    }

    pub(crate) fn replace_transforms(&self, _g: &MutationGuard<'_>, records: Vec<TransformRecord>) {
        *write(&self.inner.transforms) = records;
    }

    /// Checks that a record's outputs exist and that their interfaces are
    /// exactly what the transformation derives from the current source.
    pub fn check_well_typed(&self, record: &TransformRecord) -> Validation {
        let mut reasons = Vec::new();
        let target = record.kind.target_kind();
        let mut outputs = Vec::new();
        for out in &record.outputs {
            match self.info(target, out.as_str()) {
                Ok(cfg) => outputs.push(cfg),
                Err(_) => reasons.push(format!("unregistered output {target} {out}")),
            }
        }
        for cfg in &outputs {
            let name = &cfg.descriptor.name;
            if cfg.descriptor.metadata.get(DERIVED_FROM).map(String::as_str) != Some(record.input.as_str()) {
                reasons.push(format!("{name} is not derived from {}", record.input));
            }
            if cfg.descriptor.metadata.get(TRANSFORM).map(String::as_str) != Some(record.kind.as_str()) {
                reasons.push(format!("{name} was not produced by {}", record.kind));
            }
        }
        if record.kind != TransformKind::T2E && !self.is_active(record.kind.source_kind(), record.input.as_str()) {
            reasons.push(format!("input {} {} is not registered", record.kind.source_kind(), record.input));
            return Validation { reasons };
        }
        if let Err(e) = self.check_schemas(record, &outputs) {
            reasons.extend(if e.reasons.is_empty() { vec![e.detail] } else { e.reasons });
        }
        Validation { reasons }
    }

    fn check_schemas(&self, record: &TransformRecord, outputs: &[ComponentConfig]) -> Result<()> {
        let input = record.input.as_str();
        let mut reasons = Vec::new();
        let expect = |reasons: &mut Vec<String>, cfg: &ComponentConfig, want: &Value| {
            if cfg.representations.argument_schema != *want {
                reasons.push(format!("{} argument schema is not derivable from {input}", cfg.descriptor.name));
            }
        };
        match record.kind {
            TransformKind::A2T => {
                let src = self.info(ComponentKind::Agent, input)?;
                outputs.iter().for_each(|o| expect(&mut reasons, o, &src.representations.argument_schema));
            }
            TransformKind::T2A => {
                let _ = self.info(ComponentKind::Tool, input)?;
                outputs.iter().for_each(|o| expect(&mut reasons, o, &t2a_task_signature().to_value()));
            }
            TransformKind::E2T => {
                let env = self.env_config(input)?;
                let from = env.base.name();
                let want: BTreeSet<ComponentName> = env.actions.iter().map(|a| e2t_name(&from, &a.name)).collect();
                let got: BTreeSet<ComponentName> = record.outputs.iter().cloned().collect();
                if want != got {
                    reasons.push(format!("outputs do not cover the actions of {input}"));
                }
                for o in outputs {
                    match o.descriptor.metadata.get("action").and_then(|a| env.action(a)) {
                        Some(a) => expect(&mut reasons, o, &a.signature.to_value()),
                        None => reasons.push(format!("{} maps to no action of {input}", o.descriptor.name)),
                    }
                }
            }
            TransformKind::T2E => {
                let Some(kit) = &record.toolkit else {
                    return Err(Error::invalid("T2E record carries no toolkit"));
                };
                for o in outputs {
                    let env = EnvironmentConfig::from_base(o.clone())?;
                    if env.actions.len() != kit.tools.len() {
                        reasons.push(format!("{} actions do not match the toolkit", o.descriptor.name));
                    }
                    for t in &kit.tools {
                        match (self.info(ComponentKind::Tool, t.as_str()), env.action(t.short())) {
                            (Ok(tool), Some(a)) if a.signature.to_value() == tool.representations.argument_schema => {}
                            (Err(_), _) => reasons.push(format!("toolkit tool {t} is not registered")),
                            _ => reasons.push(format!("action {} does not match tool {t}", t.short())),
                        }
                    }
                }
            }
            TransformKind::A2E => {
                let _ = self.info(ComponentKind::Agent, input)?;
                for o in outputs {
                    let env = EnvironmentConfig::from_base(o.clone())?;
                    if env.actions != vec![interact_action()] {
                        reasons.push(format!("{} must expose exactly the interact action", o.descriptor.name));
                    }
                }
            }
            TransformKind::E2A => {
                let env = self.env_config(input)?;
                for o in outputs {
                    expect(&mut reasons, o, &Signature::open().to_value());
                    let policy = o.descriptor.metadata.get("policy_id").map(String::as_str).unwrap_or_default();
                    if let Err(e) = self.factories().env_policy(policy).and_then(|p| p.check(&env.actions)) {
                        reasons.push(format!("{}: {}", o.descriptor.name, e.detail));
                    }
                }
            }
        }
        if reasons.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(reasons))
        }
    }

    /// Accepts `second ∘ first` when both records are well typed and the
    /// first's outputs feed the second's input.
    pub fn check_composition(&self, first: &TransformRecord, second: &TransformRecord) -> Validation {
        let mut reasons = self.check_well_typed(first).reasons;
        reasons.extend(self.check_well_typed(second).reasons);
        if first.kind.target_kind() != second.kind.source_kind() {
            reasons.push(format!(
                "{} produces {} components but {} consumes {}",
                first.kind,
                first.kind.target_kind(),
                second.kind,
                second.kind.source_kind()
            ));
        } else {
            let fed: Vec<&ComponentName> = match &second.toolkit {
                Some(kit) if second.kind == TransformKind::T2E => kit.tools.iter().collect(),
                _ => vec![&second.input],
            };
            for n in fed {
                if !first.outputs.contains(n) {
                    reasons.push(format!("{n} is not an output of the first transformation"));
                }
            }
        }
        Validation { reasons }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{add_tool_spec, counter_spec, echo_agent_spec, kvstore_spec};
    use proptest::prelude::*;

    fn args(v: Value) -> Map {
        v.as_map().unwrap().clone()
    }

    fn tea() -> Tea {
        let tea = Tea::new();
        tea.register_tool(add_tool_spec("add")).unwrap();
        tea.register_environment(counter_spec("counter")).unwrap();
        tea.register_environment(kvstore_spec("kv")).unwrap();
        tea.register_agent(echo_agent_spec("echo")).unwrap();
        tea
    }

    #[test]
    fn a2t_delegates() {
        let tea = tea();
        tea.a2t("echo").unwrap();
        let out = tea.invoke_tool(None, "agent.echo", &args(map_of([("msg", "x")]))).unwrap();
        assert_eq!(out.output, map_of([("msg", "x")]));
        assert_eq!(tea.a2t("echo").unwrap_err().kind, ErrorKind::NameConflict);
        assert_eq!(tea.a2t("ghost").unwrap_err().kind, ErrorKind::NotFound);
    }

    #[test]
    fn e2t_shares_state() {
        let tea = tea();
        let kit = tea.e2t("counter").unwrap();
        assert_eq!(kit.tools.len(), 2);
        assert_eq!(kit.shared_state_ref.as_ref().map(ComponentName::as_str), Some("counter"));
        tea.invoke_tool(None, "env.counter.increment", &Map::new()).unwrap();
        tea.invoke_action(None, "counter", "increment", &Map::new()).unwrap();
        tea.invoke_tool(None, "env.counter.increment", &Map::new()).unwrap();
        assert_eq!(tea.env_state("counter").unwrap(), map_of([("count", 3i64)]));
        let shorts: BTreeSet<&str> = kit.tools.iter().map(ComponentName::short).collect();
        let actions = tea.env_config("counter").unwrap().action_names();
        assert_eq!(shorts, actions.iter().map(String::as_str).collect());
    }

    #[test]
    fn t2e_round_trip_and_delegation() {
        let tea = tea();
        let kit = tea.e2t("counter").unwrap();
        let env = tea.t2e(&kit, "counter.kit").unwrap();
        assert_eq!(env.action_names(), tea.env_config("counter").unwrap().action_names());
        let out = tea.invoke_action(None, "counter.kit", "increment", &Map::new()).unwrap();
        assert_eq!(out, map_of([("count", 1i64)]));
        let state = tea.env_state("counter.kit").unwrap();
        assert_eq!(state.get("shared_state"), Some(&map_of([("count", 1i64)])));
        assert_eq!(state.get("invocations").and_then(|m| m.get("increment")), Some(&Value::Int(1)));

        let single = Toolkit::new(ComponentName::new("math").unwrap(), vec![ComponentName::new("add").unwrap()]);
        let env = tea.t2e(&single, "math").unwrap();
        assert_eq!(env.actions.len(), 1);
        let out = tea.invoke_action(None, "math", "add", &args(map_of([("a", 2i64), ("b", 3i64)]))).unwrap();
        assert_eq!(out, Value::Int(5));

        let empty = Toolkit::new(ComponentName::new("none").unwrap(), vec![]);
        assert_eq!(tea.t2e(&empty, "none").unwrap_err().kind, ErrorKind::ValidationFailed);
        assert_eq!(tea.t2e(&single, "math").unwrap_err().kind, ErrorKind::NameConflict);
    }

    #[test]
    fn t2a_delegates() {
        let tea = tea();
        tea.t2a("add").unwrap();
        let task = map_of([("args", map_of([("a", 4i64), ("b", 5i64)]))]);
        assert_eq!(tea.invoke_agent(None, "tool.add", &task).unwrap(), Value::Int(9));
        let err = tea.invoke_agent(None, "tool.add", &map_of([("a", 1i64)])).unwrap_err();
        assert_eq!(err.kind, ErrorKind::ValidationFailed);
    }

    #[test]
    fn a2e_counts_interactions() {
        let tea = tea();
        tea.a2e("echo").unwrap();
        let out = tea.invoke_action(None, "agent.echo.env", "interact", &args(map_of([("msg", "q")]))).unwrap();
        assert_eq!(out, map_of([("msg", "q")]));
        for _ in 0..2 {
            tea.invoke_action(None, "agent.echo.env", "interact", &Map::new()).unwrap();
        }
        assert_eq!(tea.env_state("agent.echo.env").unwrap().get("interactions"), Some(&Value::Int(3)));
    }

    #[test]
    fn e2a_steps_policy() {
        let tea = tea();
        tea.e2a("counter", "always_increment").unwrap();
        let out = tea.invoke_agent(None, "env.counter.agent", &Value::Null).unwrap();
        assert_eq!(out.get("action"), Some(&Value::from("increment")));
        assert_eq!(out.get("state"), Some(&map_of([("count", 1i64)])));
        for _ in 0..4 {
            tea.invoke_agent(None, "env.counter.agent", &Value::Null).unwrap();
        }
        assert_eq!(tea.env_state("counter").unwrap(), map_of([("count", 5i64)]));
        assert_eq!(tea.e2a("counter", "telepathy").unwrap_err().kind, ErrorKind::ValidationFailed);
        // kv actions all need a key
        assert_eq!(tea.e2a("kv", "greedy_first_action").unwrap_err().kind, ErrorKind::ValidationFailed);
    }

    #[test]
    fn no_cascade_on_unregister() {
        let tea = tea();
        tea.a2t("echo").unwrap();
        tea.unregister_agent("echo").unwrap();
        let err = tea.invoke_tool(None, "agent.echo", &Map::new()).unwrap_err();
        assert_eq!(err.kind, ErrorKind::NotFound);
    }

    #[test]
    fn well_typed_and_composition() {
        let tea = tea();
        tea.a2t("echo").unwrap();
        let kit = tea.e2t("counter").unwrap();
        tea.t2e(&kit, "counter.kit").unwrap();
        tea.e2t("counter.kit").unwrap();
        let recs = tea.transforms();
        for r in &recs {
            assert!(tea.check_well_typed(r).is_ok(), "{r:?}: {:?}", tea.check_well_typed(r));
        }
        assert!(tea.check_composition(&recs[1], &recs[2]).is_ok());
        assert!(tea.check_composition(&recs[2], &recs[3]).is_ok());
        // A2T output is a tool; E2T consumes environments
        assert!(!tea.check_composition(&recs[0], &recs[1]).is_ok());

        let mut bogus = recs[0].clone();
        bogus.outputs.push(ComponentName::new("agent.ghost").unwrap());
        let v = tea.check_well_typed(&bogus);
        assert!(v.reasons.iter().any(|r| r.contains("agent.ghost")));
    }

    proptest! {
        #[test]
        fn naming_maps_are_injective(a in "[a-z][a-z0-9_.-]{0,10}", b in "[a-z][a-z0-9_.-]{0,10}",
                                     x in "[a-z][a-z0-9_-]{0,6}", y in "[a-z][a-z0-9_-]{0,6}") {
            let (na, nb) = (ComponentName::new(a.clone()).unwrap(), ComponentName::new(b.clone()).unwrap());
            if a != b {
                prop_assert_ne!(a2t_name(&na), a2t_name(&nb));
                prop_assert_ne!(t2a_name(&na), t2a_name(&nb));
                prop_assert_ne!(a2e_name(&na), a2e_name(&nb));
                prop_assert_ne!(e2a_name(&na), e2a_name(&nb));
            }
            if (a.as_str(), x.as_str()) != (b.as_str(), y.as_str()) {
                prop_assert_ne!(e2t_name(&na, &x), e2t_name(&nb, &y));
            }
        }
    }
}
