//! Environment Context Protocol: stateful environments with discoverable
//! action spaces, state queries and generated interaction rules.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorKind, Result};
use crate::kernel::{read, write, Runtime, Tea};
use crate::managers::memory::SessionHandle;
use crate::schema::{self, Signature};
use crate::types::{
    validate_descriptor, BumpLevel, ComponentConfig, ComponentKind, ComponentName, ContractDocument, Descriptor,
    Representations, Version,
};
use crate::value::{map_of, Map, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDecl {
    pub name: String,
    #[serde(default)]
    pub doc: String,
    #[serde(default)]
    pub signature: Signature,
}

impl ActionDecl {
    pub fn new(name: impl Into<String>, doc: impl Into<String>, signature: Signature) -> Self {
        ActionDecl { name: name.into(), doc: doc.into(), signature }
    }

    pub fn representations(&self) -> Result<Representations> {
        schema::synthesize(&self.name, &self.doc, &self.signature)
    }
}

/// Declaration of an environment. Actions are discovered from a fresh
/// instance unless declared here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub descriptor: Descriptor,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub actions: Option<Vec<ActionDecl>>,
}

impl EnvironmentSpec {
    pub fn new(descriptor: Descriptor) -> Self {
        EnvironmentSpec { descriptor, source: String::new(), actions: None }
    }

    pub fn with_actions(mut self, actions: Vec<ActionDecl>) -> Self {
        self.actions = Some(actions);
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }
}

/// Environment view of a component config: the action space and rules are
/// carried in its representations.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentConfig {
    pub base: ComponentConfig,
    pub actions: Vec<ActionDecl>,
    pub rules: String,
}

#[derive(Serialize, Deserialize)]
struct ActionTable {
    actions: Vec<ActionDecl>,
}

impl EnvironmentConfig {
    pub fn from_base(base: ComponentConfig) -> Result<Self> {
        if base.kind != ComponentKind::Environment {
            return Err(Error::invalid(format!("{} is not an environment", base.descriptor.name)));
        }
        let table: ActionTable = base.representations.argument_schema.to_typed()?;
        let rules = base.representations.text_description.clone();
        Ok(EnvironmentConfig { base, actions: table.actions, rules })
    }

    pub fn action(&self, name: &str) -> Option<&ActionDecl> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn action_names(&self) -> BTreeSet<String> {
        self.actions.iter().map(|a| a.name.clone()).collect()
    }
}

pub fn validate_actions(actions: &[ActionDecl]) -> Result<()> {
    let mut seen = BTreeSet::new();
    let mut reasons = Vec::new();
    for a in actions {
        if let Err(e) = ComponentName::new(a.name.clone()) {
            reasons.extend(e.reasons.into_iter().map(|r| format!("action {:?}: {r}", a.name)));
        }
        // derived tool names append the action as the last `.` segment
        if a.name.contains('.') {
            reasons.push(format!("action {:?}: name contains '.'", a.name));
        }
        if !seen.insert(a.name.as_str()) {
            reasons.push(format!("duplicate action {}", a.name));
        }
        if let Err(e) = a.signature.validate() {
            reasons.extend(e.reasons.into_iter().map(|r| format!("action {}: {r}", a.name)));
        }
    }
    if reasons.is_empty() {
        Ok(())
    } else {
        Err(Error::validation(reasons))
    }
}

/// Interaction rules: environment description, one block per action with
/// its parameter docs, and a note on state queries. Deterministic.
pub fn generate_rules(name: &str, description: &str, actions: &[ActionDecl]) -> String {
    let mut out = format!("Environment: {name}\nDescription: {description}\n\nActions:\n");
    if actions.is_empty() {
        out.push_str("(none)\n");
    }
    for a in actions {
        out.push_str(&format!("- {}: {}\n", a.name, a.doc));
        if a.signature.params.is_empty() {
            out.push_str("  parameters: none\n");
        }
        for p in &a.signature.params {
            let req = if p.required { "required" } else { "optional" };
            let line = format!("  * {} ({}, {}) {}", p.name, p.ty, req, p.doc);
            out.push_str(line.trim_end());
            out.push('\n');
        }
        if a.signature.accepts_extra {
            out.push_str("  additional arguments accepted\n");
        }
    }
    out.push_str("\nState: query the current state at any time; queries never change it.\n");
    out
}

pub fn environment_representations(name: &str, description: &str, actions: &[ActionDecl]) -> Result<Representations> {
    validate_actions(actions)?;
    let call_schemas = actions
        .iter()
        .map(|a| a.representations().map(|r| r.call_schema))
        .collect::<Result<Vec<_>>>()?;
    Ok(Representations {
        call_schema: map_of([
            ("name", Value::from(name)),
            ("description", Value::from(description)),
            ("actions", Value::Seq(call_schemas)),
        ]),
        text_description: generate_rules(name, description, actions),
        argument_schema: Value::from_serialize(&ActionTable { actions: actions.to_vec() })?,
    })
}

impl Tea {
    pub(crate) fn environment_config_from_spec(&self, spec: EnvironmentSpec) -> Result<ComponentConfig> {
        validate_descriptor(&spec.descriptor).into_result()?;
        let mut cfg = ComponentConfig {
            kind: ComponentKind::Environment,
            descriptor: spec.descriptor,
            version: Version::INITIAL,
            source: spec.source,
            representations: Representations::default(),
        };
        let actions = match spec.actions {
            Some(a) => a,
            None => {
                let id = cfg.behavior_id().ok_or_else(|| Error::invalid("missing behavior_id metadata"))?;
                let factory = self
                    .factories()
                    .environment(id)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("unknown environment behavior_id {id:?}")))?;
                factory(&cfg)?.actions()
            }
        };
        cfg.representations = environment_representations(&cfg.descriptor.name, &cfg.descriptor.description, &actions)?;
        Ok(cfg)
    }

    pub fn register_environment(&self, spec: EnvironmentSpec) -> Result<EnvironmentConfig> {
        let cfg = self.environment_config_from_spec(spec)?;
        EnvironmentConfig::from_base(self.register_config(cfg)?)
    }

    /// Current state of the live instance.
    pub fn env_state(&self, name: &str) -> Result<Value> {
        let live = self.live(ComponentKind::Environment, name)?;
        let Runtime::Env(inst) = &live.runtime else {
            return Err(live.dormant_error());
        };
        let inst = read(inst);
        inst.state(&self.context(None))
    }

    pub fn invoke_action(
        &self,
        session: Option<&SessionHandle>,
        env: &str,
        action: &str,
        args: &Map,
    ) -> Result<Value> {
        let traced_args = map_of([("action", Value::from(action)), ("args", Value::Map(args.clone()))]);
        self.traced(session, ComponentKind::Environment, env, traced_args, || {
            let live = self.live(ComponentKind::Environment, env)?;
            let cfg = EnvironmentConfig::from_base(live.config.clone())?;
            let decl = cfg.action(action).ok_or_else(|| {
                Error::new(ErrorKind::ActionNotFound, format!("environment {env} has no action {action:?}"))
            })?;
            decl.signature.check(args)?;
            let Runtime::Env(inst) = &live.runtime else {
                return Err(live.dormant_error());
            };
            let mut inst = write(inst);
            inst.step(&self.context(session), action, args)
        })
    }

    pub fn update_environment(&self, name: &str, spec: EnvironmentSpec, level: BumpLevel) -> Result<EnvironmentConfig> {
        let cfg = self.environment_config_from_spec(spec)?;
        EnvironmentConfig::from_base(self.advance(ComponentKind::Environment, name, level, |_| Ok(cfg))?)
    }

    pub fn copy_environment(&self, name: &str, new_name: &str) -> Result<EnvironmentConfig> {
        EnvironmentConfig::from_base(self.copy(ComponentKind::Environment, name, new_name)?)
    }

    pub fn unregister_environment(&self, name: &str) -> Result<()> {
        self.unregister(ComponentKind::Environment, name)
    }

    /// Restores a historical version with a fresh instance.
    pub fn restore_environment(&self, name: &str, version: Version) -> Result<EnvironmentConfig> {
        EnvironmentConfig::from_base(self.restore(ComponentKind::Environment, name, version)?)
    }

    /// Aggregates every active environment's rules.
    pub fn environment_contract(&self) -> ContractDocument {
        self.contract(ComponentKind::Environment)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{counter_spec, kvstore_spec};

    fn empty() -> Map {
        Map::new()
    }

    #[test]
    fn counter_lifecycle() {
        let tea = Tea::new();
        let cfg = tea.register_environment(counter_spec("counter")).unwrap();
        assert_eq!(cfg.action_names(), ["increment", "reset"].map(String::from).into());
        assert!(cfg.rules.contains("increment") && cfg.rules.contains("reset"));
        assert_eq!(tea.env_state("counter").unwrap(), map_of([("count", 0i64)]));
        assert_eq!(tea.invoke_action(None, "counter", "increment", &empty()).unwrap(), map_of([("count", 1i64)]));
        tea.invoke_action(None, "counter", "increment", &empty()).unwrap();
        assert_eq!(tea.env_state("counter").unwrap(), map_of([("count", 2i64)]));
        assert_eq!(tea.env_state("counter").unwrap(), tea.env_state("counter").unwrap());
        let e = tea.invoke_action(None, "counter", "jump", &empty()).unwrap_err();
        assert_eq!(e.kind, ErrorKind::ActionNotFound);
        for _ in 0..5 {
            tea.invoke_action(None, "counter", "increment", &empty()).unwrap();
        }
        tea.invoke_action(None, "counter", "reset", &empty()).unwrap();
        assert_eq!(tea.env_state("counter").unwrap(), map_of([("count", 0i64)]));
        assert_eq!(tea.env_state("nope").unwrap_err().kind, ErrorKind::NotFound);
    }

    #[test]
    fn duplicate_actions_rejected() {
        let tea = Tea::new();
        let a = ActionDecl::new("go", "", Signature::default());
        let spec = counter_spec("c").with_actions(vec![a.clone(), a]);
        assert_eq!(tea.register_environment(spec).unwrap_err().kind, ErrorKind::ValidationFailed);
    }

    #[test]
    fn rules_mention_each_action_once_in_action_section() {
        let spec = counter_spec("counter");
        let tea = Tea::new();
        let cfg = tea.register_environment(spec).unwrap();
        let section = cfg.rules.split("Actions:\n").nth(1).unwrap().split("\nState:").next().unwrap();
        for a in ["increment", "reset"] {
            assert_eq!(section.matches(a).count(), 1, "{a} in {section:?}");
        }
        let again = generate_rules("counter", &cfg.base.descriptor.description, &cfg.actions);
        assert_eq!(again, cfg.rules);
        let none = generate_rules("void", "nothing", &[]);
        assert!(none.contains("Actions:\n(none)\n"));
    }

    #[test]
    fn arguments_validated() {
        let tea = Tea::new();
        tea.register_environment(kvstore_spec("kv")).unwrap();
        let e = tea.invoke_action(None, "kv", "put", &empty()).unwrap_err();
        assert_eq!(e.kind, ErrorKind::ValidationFailed);
        let args: Map = [("key".to_owned(), Value::from("k")), ("value".to_owned(), Value::from("v"))].into();
        tea.invoke_action(None, "kv", "put", &args).unwrap();
        let get: Map = [("key".to_owned(), Value::from("k"))].into();
        assert_eq!(tea.invoke_action(None, "kv", "get", &get).unwrap(), map_of([("key", "k"), ("value", "v")]));
    }

    #[test]
    fn copy_has_fresh_independent_state() {
        let tea = Tea::new();
        tea.register_environment(counter_spec("counter")).unwrap();
        tea.invoke_action(None, "counter", "increment", &empty()).unwrap();
        tea.copy_environment("counter", "counter2").unwrap();
        tea.invoke_action(None, "counter2", "increment", &empty()).unwrap();
        tea.invoke_action(None, "counter2", "increment", &empty()).unwrap();
        assert_eq!(tea.env_state("counter").unwrap(), map_of([("count", 1i64)]));
        assert_eq!(tea.env_state("counter2").unwrap(), map_of([("count", 2i64)]));
    }

    #[test]
    fn contract_over_two() {
        let tea = Tea::new();
        tea.register_environment(kvstore_spec("kv")).unwrap();
        tea.register_environment(counter_spec("counter")).unwrap();
        let doc = tea.environment_contract();
        let names: Vec<String> = doc.entries.iter().map(|e| e.name.to_string()).collect();
        assert_eq!(names, ["counter", "kv"]);
        assert!(doc.entries[0].text_description.contains("increment"));
    }
}
