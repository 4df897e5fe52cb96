//! Tool Context Protocol: registration, representation synthesis, strict
//! invocation and lifecycle for tools.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernel::{Runtime, Tea};
use crate::managers::memory::SessionHandle;
use crate::schema::{self, Signature};
use crate::types::{
    validate_descriptor, BumpLevel, ComponentConfig, ComponentKind, ContractDocument, Descriptor, Representations,
    Version,
};
use crate::value::{Map, Value};

/// Declaration of a tool. The behavior is resolved through the factory named
/// by `descriptor.metadata["behavior_id"]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub descriptor: Descriptor,
    #[serde(default)]
    pub signature: Signature,
    #[serde(default)]
    pub source: String,
}

impl ToolSpec {
    pub fn new(descriptor: Descriptor, signature: Signature) -> Self {
        ToolSpec { descriptor, signature, source: String::new() }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub(crate) fn into_config(self, version: Version) -> Result<ComponentConfig> {
        validate_descriptor(&self.descriptor).into_result()?;
        let representations = synthesize_representations(&self)?;
        Ok(ComponentConfig {
            kind: ComponentKind::Tool,
            descriptor: self.descriptor,
            version,
            source: self.source,
            representations,
        })
    }
}

/// Result of a successful invocation. Failures surface as `Err` carrying
/// their [`crate::ErrorKind`].
#[derive(Debug, Clone, PartialEq)]
pub struct ToolResponse {
    pub output: Value,
    pub elapsed: Duration,
    pub tool_version: Version,
}

impl ToolResponse {
    pub fn to_value(&self) -> Value {
        crate::value::map_of([
            ("ok", Value::Bool(true)),
            ("output", self.output.clone()),
            ("tool_version", Value::from(self.tool_version.to_string())),
            ("elapsed_us", Value::Int(self.elapsed.as_micros().min(i64::MAX as u128) as i64)),
        ])
    }
}

pub fn synthesize_representations(spec: &ToolSpec) -> Result<Representations> {
    schema::synthesize(&spec.descriptor.name, &spec.descriptor.description, &spec.signature)
}

impl Tea {
    pub fn register_tool(&self, spec: ToolSpec) -> Result<ComponentConfig> {
        self.register_config(spec.into_config(Version::INITIAL)?)
    }

    pub fn invoke_tool(&self, session: Option<&SessionHandle>, name: &str, args: &Map) -> Result<ToolResponse> {
        let started = Instant::now();
        let mut version = None;
        let output = self.traced(session, ComponentKind::Tool, name, Value::Map(args.clone()), || {
            let live = self.live(ComponentKind::Tool, name)?;
            version = Some(live.config.version);
            let Runtime::Tool(behavior) = &live.runtime else {
                return Err(live.dormant_error());
            };
            Signature::from_value(&live.config.representations.argument_schema)?.check(args)?;
            behavior.call(&self.context(session), args)
        })?;
        Ok(ToolResponse {
            output,
            elapsed: started.elapsed(),
            tool_version: version.unwrap_or_default(),
        })
    }

    pub fn update_tool(&self, name: &str, spec: ToolSpec, level: BumpLevel) -> Result<ComponentConfig> {
        self.advance(ComponentKind::Tool, name, level, |_| spec.into_config(Version::INITIAL))
    }

    pub fn copy_tool(&self, name: &str, new_name: &str) -> Result<ComponentConfig> {
        self.copy(ComponentKind::Tool, name, new_name)
    }

    pub fn unregister_tool(&self, name: &str) -> Result<()> {
        self.unregister(ComponentKind::Tool, name)
    }

    pub fn restore_tool(&self, name: &str, version: Version) -> Result<ComponentConfig> {
        self.restore(ComponentKind::Tool, name, version)
    }

    pub fn tool_contract(&self) -> ContractDocument {
        self.contract(ComponentKind::Tool)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ParamDecl, ParamType};
    use crate::{Error, ErrorKind};

    pub(crate) fn add_spec(name: &str) -> ToolSpec {
        ToolSpec::new(
            Descriptor::new(name, "adds two integers").with_meta("behavior_id", "builtin.add"),
            Signature::new(vec![
                ParamDecl::required("a", ParamType::Integer, "first addend"),
                ParamDecl::required("b", ParamType::Integer, "second addend"),
            ]),
        )
        .with_source("def add(a, b): return a + b")
    }

    fn args(pairs: &[(&str, i64)]) -> Map {
        pairs.iter().map(|(k, v)| (k.to_string(), Value::Int(*v))).collect()
    }

    #[test]
    fn register_and_invoke() {
        let tea = Tea::new();
        let cfg = tea.register_tool(add_spec("add")).unwrap();
        assert_eq!(cfg.version.to_string(), "1.0.0");
        assert_eq!(tea.len(ComponentKind::Tool), 1);
        let r = tea.invoke_tool(None, "add", &args(&[("a", 2), ("b", 3)])).unwrap();
        assert_eq!(r.output, Value::Int(5));
        assert_eq!(r.tool_version.to_string(), "1.0.0");

        assert_eq!(tea.register_tool(add_spec("add")).unwrap_err().kind, ErrorKind::NameConflict);
        let e = tea.invoke_tool(None, "add", &args(&[("a", 2)])).unwrap_err();
        assert_eq!(e.kind, ErrorKind::ValidationFailed);
        assert_eq!(e.reasons, vec!["missing b"]);
        assert_eq!(tea.invoke_tool(None, "nope", &Map::new()).unwrap_err().kind, ErrorKind::NotFound);
    }

    #[test]
    fn strict_types_no_coercion() {
        let tea = Tea::new();
        tea.register_tool(add_spec("add")).unwrap();
        let mut a = args(&[("b", 3)]);
        a.insert("a".into(), Value::from("2"));
        assert_eq!(tea.invoke_tool(None, "add", &a).unwrap_err().kind, ErrorKind::ValidationFailed);
    }

    #[test]
    fn list_sorted() {
        let tea = Tea::new();
        for n in ["zeta", "alpha", "mid"] {
            tea.register_tool(add_spec(n)).unwrap();
        }
        let names: Vec<String> = tea.list(ComponentKind::Tool).iter().map(|n| n.to_string()).collect();
        assert_eq!(names, ["alpha", "mid", "zeta"]);
    }

    #[test]
    fn unknown_behavior_rejected_at_register() {
        let tea = Tea::new();
        let spec = ToolSpec::new(Descriptor::new("x", "y").with_meta("behavior_id", "no.such"), Signature::default());
        assert_eq!(tea.register_tool(spec).unwrap_err().kind, ErrorKind::ValidationFailed);
        let bad = ToolSpec::new(Descriptor::new("a b", ""), Signature::default());
        assert_eq!(tea.register_tool(bad).unwrap_err().reasons.len(), 2);
    }

    #[test]
    fn update_keeps_old_version() {
        let tea = Tea::new();
        tea.register_tool(add_spec("add")).unwrap();
        let mut next = add_spec("add").with_source("v2");
        next.descriptor.description = "adds two integers, faster".into();
        let cfg = tea.update_tool("add", next.clone(), BumpLevel::Patch).unwrap();
        assert_eq!(cfg.version.to_string(), "1.0.1");
        let old = tea.lookup(ComponentKind::Tool, "add", Version::INITIAL).unwrap();
        assert_eq!(old.source, "def add(a, b): return a + b");
        let cfg = tea.update_tool("add", next.clone(), BumpLevel::Patch).unwrap();
        assert_eq!(cfg.version.to_string(), "1.0.2");
        let hist: Vec<String> = tea.history(ComponentKind::Tool, "add").iter().map(|r| r.version.to_string()).collect();
        assert_eq!(hist, ["1.0.0", "1.0.1", "1.0.2"]);
        assert_eq!(tea.update_tool("nope", next, BumpLevel::Patch).unwrap_err().kind, ErrorKind::NotFound);
    }

    #[test]
    fn copy_is_independent() {
        let tea = Tea::new();
        tea.register_tool(add_spec("add")).unwrap();
        let c = tea.copy_tool("add", "add2").unwrap();
        assert_eq!(c.version, Version::INITIAL);
        assert_eq!(c.source, tea.info(ComponentKind::Tool, "add").unwrap().source);
        assert_eq!(c.representations.call_schema.get("name"), Some(&Value::from("add2")));
        assert_eq!(tea.invoke_tool(None, "add2", &args(&[("a", 1), ("b", 1)])).unwrap().output, Value::Int(2));
        assert_eq!(tea.copy_tool("add", "add2").unwrap_err().kind, ErrorKind::NameConflict);
        tea.update_tool("add2", add_spec("add2").with_source("changed"), BumpLevel::Patch).unwrap();
        let orig = tea.info(ComponentKind::Tool, "add").unwrap();
        assert_eq!(orig.version, Version::INITIAL);
        assert_eq!(tea.history(ComponentKind::Tool, "add").len(), 1);
    }

    #[test]
    fn unregister_and_restore() {
        let tea = Tea::new();
        tea.register_tool(add_spec("add")).unwrap();
        tea.update_tool("add", add_spec("add").with_source("v2"), BumpLevel::Patch).unwrap();
        let r = tea.restore_tool("add", Version::INITIAL).unwrap();
        assert_eq!(r.version.to_string(), "1.0.2");
        assert_eq!(tea.info(ComponentKind::Tool, "add").unwrap().source, "def add(a, b): return a + b");
        assert_eq!(
            tea.restore_tool("add", "4.0.0".parse().unwrap()).unwrap_err().kind,
            ErrorKind::VersionNotFound
        );
        tea.unregister_tool("add").unwrap();
        assert_eq!(tea.invoke_tool(None, "add", &args(&[("a", 1), ("b", 1)])).unwrap_err().kind, ErrorKind::NotFound);
        assert!(tea.history(ComponentKind::Tool, "add").is_empty());
        assert_eq!(tea.index().len(ComponentKind::Tool), 0);
    }

    #[test]
    fn contract_entries() {
        let tea = Tea::new();
        assert!(tea.tool_contract().entries.is_empty());
        let descs = ["adds things", "echoes things", "more adding"];
        for (n, d) in ["c", "a", "b"].iter().zip(descs) {
            let mut s = add_spec(n);
            s.descriptor.description = d.to_owned();
            tea.register_tool(s).unwrap();
        }
        let doc = tea.tool_contract();
        let names: Vec<String> = doc.entries.iter().map(|e| e.name.to_string()).collect();
        assert_eq!(names, ["a", "b", "c"]);
        let rendered = doc.render();
        for d in descs {
            assert!(rendered.contains(d));
        }
        assert_eq!(doc, tea.tool_contract());
    }

    #[test]
    fn backend_failure_passthrough() {
        let tea = Tea::builder()
            .with_factories(|f| {
                f.add_tool_fn("boom", |_, _| Err(Error::backend("exploded")));
            })
            .build();
        tea.register_tool(ToolSpec::new(Descriptor::new("boom", "fails").with_meta("behavior_id", "boom"), Signature::default()))
            .unwrap();
        assert_eq!(tea.invoke_tool(None, "boom", &Map::new()).unwrap_err().kind, ErrorKind::BackendFailure);
    }
}
