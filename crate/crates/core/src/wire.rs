//! Request/response envelopes and the op table.
//!
//! Every op takes a mapping of params and returns a structured result. Bad
//! envelopes, unknown ops and params of the wrong shape produce a
//! `ProtocolError` response; kernel failures keep their own kind.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentSpec, RelationEdge, RelationKind};
use crate::environment::EnvironmentSpec;
use crate::error::{Error, ErrorKind, Result};
use crate::evolution::{critic_from_value, Variable};
use crate::kernel::Tea;
use crate::managers::memory::SessionHandle;
use crate::managers::model::ScriptedBackend;
use crate::managers::prompt::{PromptChanges, PromptConfig};
use crate::managers::tracer::{Invocation, TraceQuery};
use crate::persist::data_dir_from_env;
use crate::tool::ToolSpec;
use crate::transform::{Toolkit, TransformRecord};
use crate::types::{BumpLevel, ComponentKind, Descriptor, Validation, Version};
use crate::value::{map_of, Map, Value};
use crate::version::LifecycleState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestEnvelope {
    pub id: String,
    pub op: String,
    #[serde(default = "Value::map")]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub kind: ErrorKind,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasons: Vec<String>,
}

impl From<Error> for WireError {
    fn from(e: Error) -> Self {
        WireError { kind: e.kind, detail: e.detail, reasons: e.reasons }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEnvelope {
    pub id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "present")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
}

// a present `"result": null` is a null result, not a missing one
fn present<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Value>, D::Error> {
    Value::deserialize(d).map(Some)
}

impl ResponseEnvelope {
    pub fn success(id: String, result: Value) -> Self {
        ResponseEnvelope { id, ok: true, result: Some(result), error: None }
    }

    pub fn failure(id: String, e: Error) -> Self {
        ResponseEnvelope { id, ok: false, result: None, error: Some(e.into()) }
    }

    pub fn into_result(self) -> Result<Value> {
        match (self.ok, self.result, self.error) {
            (true, Some(v), None) => Ok(v),
            (false, None, Some(e)) => Err(Error::with_reasons(e.kind, e.detail, e.reasons)),
            _ => Err(Error::protocol("response must carry exactly one of result or error")),
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = crate::value::canonical_string(self).unwrap_or_else(|e| {
            format!("{{\"error\":{{\"detail\":{:?},\"kind\":\"ProtocolError\"}},\"id\":{:?},\"ok\":false}}", e.detail, self.id)
        });
        s.push('\n');
        s
    }
}

/// Per-kind ops, published for each of the kind prefixes below.
const KIND_OPS: &[&str] = &[
    "list", "info", "history", "lookup", "lifecycle", "restore", "copy", "unregister", "contract", "retrieve", "vars",
    "setvars", "save", "load",
];

const KIND_PREFIXES: &[(&str, ComponentKind)] = &[
    ("tool", ComponentKind::Tool),
    ("env", ComponentKind::Environment),
    ("agent", ComponentKind::Agent),
    ("prompt", ComponentKind::Prompt),
    ("memory", ComponentKind::Memory),
];

const EXTRA_OPS: &[&str] = &[
    "tool.register",
    "tool.update",
    "tool.invoke",
    "env.register",
    "env.update",
    "env.state",
    "env.act",
    "agent.register",
    "agent.update",
    "agent.invoke",
    "agent.relate",
    "agent.relations",
    "prompt.register",
    "prompt.update",
    "prompt.render",
    "memory.register",
    "memory.update",
    "memory.record",
    "memory.events",
    "transform.a2t",
    "transform.t2a",
    "transform.e2t",
    "transform.t2e",
    "transform.a2e",
    "transform.e2a",
    "transform.check",
    "transform.list",
    "retrieve",
    "route",
    "session.open",
    "session.close",
    "trace.record",
    "trace.query",
    "trace.save",
    "trace.load",
    "model.register",
    "model.invoke",
    "model.list",
    "evolve.run",
    "evolve.vars",
    "evolve.setvars",
    "evolve.rollback",
    "evolve.runs",
    "codec.encode",
    "codec.decode",
    "codec.register",
    "state.save",
    "state.load",
    "ops",
];

/// Every published op path, sorted.
pub fn op_table() -> Vec<String> {
    let mut ops: Vec<String> = KIND_PREFIXES
        .iter()
        .flat_map(|(p, _)| KIND_OPS.iter().map(move |o| format!("{p}.{o}")))
        .chain(EXTRA_OPS.iter().map(|s| s.to_string()))
        .collect();
    ops.sort();
    ops
}

struct Params<'a>(&'a Map);

fn malformed(key: &str, want: &str) -> Error {
    Error::protocol(format!("param {key:?}: expected {want}"))
}

impl<'a> Params<'a> {
    fn get(&self, key: &str) -> Option<&'a Value> {
        self.0.get(key).filter(|v| !v.is_null())
    }

    fn req(&self, key: &str) -> Result<&'a Value> {
        self.get(key).ok_or_else(|| Error::protocol(format!("missing param {key:?}")))
    }

    fn str(&self, key: &str) -> Result<&'a str> {
        self.req(key)?.as_str().ok_or_else(|| malformed(key, "text"))
    }

    fn opt_str(&self, key: &str) -> Result<Option<&'a str>> {
        self.get(key).map(|v| v.as_str().ok_or_else(|| malformed(key, "text"))).transpose()
    }

    fn map(&self, key: &str) -> Result<Map> {
        match self.get(key) {
            None => Ok(Map::new()),
            Some(Value::Map(m)) => Ok(m.clone()),
            Some(_) => Err(malformed(key, "mapping")),
        }
    }

    fn usize(&self, key: &str) -> Result<usize> {
        self.req(key)?.as_i64().and_then(|i| usize::try_from(i).ok()).ok_or_else(|| malformed(key, "non-negative integer"))
    }

    fn opt_usize(&self, key: &str, default: usize) -> Result<usize> {
        if self.get(key).is_some() {
            self.usize(key)
        } else {
            Ok(default)
        }
    }

    fn typed<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        self.req(key)?.to_typed().map_err(|e| Error::protocol(format!("param {key:?}: {}", e.detail)))
    }

    fn parsed<T: FromStr<Err = Error>>(&self, key: &str) -> Result<T> {
        self.str(key)?.parse().map_err(|e: Error| Error::protocol(format!("param {key:?}: {}", e.detail)))
    }

    fn opt_parsed<T: FromStr<Err = Error>>(&self, key: &str) -> Result<Option<T>> {
        if self.get(key).is_some() {
            self.parsed(key).map(Some)
        } else {
            Ok(None)
        }
    }

    fn level(&self) -> Result<BumpLevel> {
        Ok(self.opt_parsed("level")?.unwrap_or(BumpLevel::Minor))
    }
}

fn to_value<T: Serialize + ?Sized>(t: &T) -> Result<Value> {
    Value::from_serialize(t)
}

fn validation_value(v: &Validation) -> Value {
    map_of([
        ("ok", Value::Bool(v.is_ok())),
        ("reasons", Value::Seq(v.reasons.iter().map(|r| Value::from(r.as_str())).collect())),
    ])
}

/// Routes envelopes to a kernel. `data_dir` is the default for save/load ops
/// that carry no `dir` param.
#[derive(Clone)]
pub struct Dispatcher {
    tea: Tea,
    data_dir: Option<PathBuf>,
}

impl Dispatcher {
    pub fn new(tea: Tea) -> Self {
        Dispatcher { tea, data_dir: data_dir_from_env() }
    }

    pub fn with_data_dir(tea: Tea, data_dir: Option<PathBuf>) -> Self {
        Dispatcher { tea, data_dir }
    }

    pub fn tea(&self) -> &Tea {
        &self.tea
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    /// Handles one raw line. Always yields exactly one response.
    pub fn dispatch_line(&self, line: &str) -> ResponseEnvelope {
        let raw: Value = match Value::from_canonical(line) {
            Ok(v) => v,
            Err(e) => return ResponseEnvelope::failure(String::new(), Error::protocol(format!("malformed envelope: {}", e.detail))),
        };
        let id = raw.get("id").and_then(Value::as_str).unwrap_or_default().to_owned();
        match raw.to_typed::<RequestEnvelope>() {
            Ok(req) => self.dispatch(&req),
            Err(e) => ResponseEnvelope::failure(id, Error::protocol(format!("malformed envelope: {}", e.detail))),
        }
    }

    pub fn dispatch(&self, req: &RequestEnvelope) -> ResponseEnvelope {
        let out = if req.id.is_empty() {
            Err(Error::protocol("empty request id"))
        } else {
            match &req.params {
                Value::Map(m) => self.call(&req.op, m),
                _ => Err(Error::protocol("params must be a mapping")),
            }
        };
        match out {
            Ok(v) => ResponseEnvelope::success(req.id.clone(), v),
            Err(e) => ResponseEnvelope::failure(req.id.clone(), e),
        }
    }

    /// Runs one op directly.
    pub fn call(&self, op: &str, params: &Map) -> Result<Value> {
        let p = Params(params);
        if let Some((prefix, rest)) = op.split_once('.') {
            if let Some((_, kind)) = KIND_PREFIXES.iter().find(|(k, _)| *k == prefix) {
                if let Some(v) = self.kind_op(*kind, rest, &p)? {
                    return Ok(v);
                }
            }
        }
        let tea = &self.tea;
        match op {
            "tool.register" => to_value(&tea.register_tool(p.typed::<ToolSpec>("spec")?)?),
            "tool.update" => to_value(&tea.update_tool(p.str("name")?, p.typed("spec")?, p.level()?)?),
            "tool.invoke" => {
                let session = self.session(&p)?;
                Ok(tea.invoke_tool(session.as_ref(), p.str("name")?, &p.map("args")?)?.to_value())
            }
            "env.register" => to_value(&tea.register_environment(p.typed::<EnvironmentSpec>("spec")?)?.base),
            "env.update" => to_value(&tea.update_environment(p.str("name")?, p.typed("spec")?, p.level()?)?.base),
            "env.state" => tea.env_state(p.str("name")?),
            "env.act" => {
                let session = self.session(&p)?;
                tea.invoke_action(session.as_ref(), p.str("name")?, p.str("action")?, &p.map("args")?)
            }
            "agent.register" => to_value(&tea.register_agent(p.typed::<AgentSpec>("spec")?)?),
            "agent.update" => to_value(&tea.update_agent(p.str("name")?, p.typed("spec")?, p.level()?)?),
            "agent.invoke" => {
                let session = self.session(&p)?;
                let task = p.get("task").cloned().unwrap_or_default();
                tea.invoke_agent(session.as_ref(), p.str("name")?, &task)
            }
            "agent.relate" => {
                let edge = RelationEdge::new(p.typed("from")?, p.typed("to")?, p.parsed("kind")?);
                tea.add_relation(edge)?;
                Ok(Value::Null)
            }
            "agent.relations" => {
                let kind: Option<RelationKind> = p.opt_parsed("kind")?;
                to_value(&tea.query_relations(p.str("name")?, kind))
            }
            "prompt.register" => {
                to_value(&tea.register_prompt(p.typed::<Descriptor>("descriptor")?, p.typed::<PromptConfig>("prompt")?)?)
            }
            "prompt.update" => {
                to_value(&tea.update_prompt(p.str("name")?, &p.typed::<PromptChanges>("changes")?, p.level()?)?)
            }
            "prompt.render" => {
                let vars = p.map("vars")?;
                let rendered = match p.opt_parsed::<Version>("version")? {
                    Some(v) => tea.render_prompt_version(p.str("name")?, v, &vars)?,
                    None => tea.render_prompt(p.str("name")?, &vars)?,
                };
                Ok(rendered.to_value())
            }
            "memory.register" => to_value(&tea.register_memory(p.typed("descriptor")?, p.str("content")?)?),
            "memory.update" => to_value(&tea.update_memory(p.str("name")?, p.str("content")?)?),
            "memory.record" => {
                let h = self.require_session(&p)?;
                let payload = p.get("payload").cloned().unwrap_or_default();
                to_value(&tea.memory_record(&h, p.str("kind")?, payload)?)
            }
            "memory.events" => {
                let h = self.require_session(&p)?;
                to_value(&tea.memory_events(&h.session_id))
            }
            "transform.a2t" => to_value(&tea.a2t(p.str("agent")?)?),
            "transform.t2a" => to_value(&tea.t2a(p.str("tool")?)?),
            "transform.e2t" => to_value(&tea.e2t(p.str("env")?)?),
            "transform.t2e" => to_value(&tea.t2e(&p.typed::<Toolkit>("toolkit")?, p.str("name")?)?.base),
            "transform.a2e" => to_value(&tea.a2e(p.str("agent")?)?.base),
            "transform.e2a" => to_value(&tea.e2a(p.str("env")?, p.str("policy_id")?)?),
            "transform.check" => {
                if p.get("record").is_some() {
                    Ok(validation_value(&tea.check_well_typed(&p.typed::<TransformRecord>("record")?)))
                } else {
                    let first: TransformRecord = p.typed("first")?;
                    let second: TransformRecord = p.typed("second")?;
                    Ok(validation_value(&tea.check_composition(&first, &second)))
                }
            }
            "transform.list" => to_value(&tea.transforms()),
            "retrieve" => self.retrieve(p.parsed("kind")?, &p),
            "route" => {
                let (name, examined) = tea.route(p.parsed("kind")?, p.str("query")?, p.opt_usize("branching", 4)?)?;
                Ok(map_of([("name", Value::from(name.as_str())), ("candidates_examined", Value::from(examined))]))
            }
            "session.open" => to_value(&tea.session_open(p.str("agent_name")?, p.opt_str("task_id")?.unwrap_or_default())),
            "session.close" => {
                tea.session_close(&self.require_session(&p)?)?;
                Ok(Value::Null)
            }
            "trace.record" => {
                let h = self.require_session(&p)?;
                let observation = p.get("observation").cloned().unwrap_or_default();
                let invocation: Option<Invocation> =
                    if p.get("invocation").is_some() { Some(p.typed("invocation")?) } else { None };
                to_value(&tea.trace_record(&h, observation, invocation)?)
            }
            "trace.query" => to_value(&tea.trace_query(&trace_query(&p)?)?),
            "trace.save" => {
                tea.trace_save(Path::new(p.str("path")?))?;
                Ok(Value::Null)
            }
            "trace.load" => {
                tea.trace_load(Path::new(p.str("path")?))?;
                Ok(Value::Null)
            }
            "model.register" => {
                let backend = ScriptedBackend::from_value(p.req("backend")?)?;
                tea.model_register(Arc::new(backend))?;
                Ok(Value::Null)
            }
            "model.invoke" => {
                let chain: Vec<String> = p.typed("chain")?;
                let request = p.get("request").cloned().unwrap_or_default();
                Ok(tea.model_invoke(&request, &chain)?.to_value())
            }
            "model.list" => to_value(&tea.models().ids()),
            "evolve.run" => {
                let critic = critic_from_value(p.req("critic")?)?;
                let feedback = p.get("feedback").cloned().unwrap_or_default();
                let outcome = tea.evolve_slot(
                    p.parsed("kind")?,
                    p.str("name")?,
                    p.opt_str("slot")?,
                    critic.as_ref(),
                    &feedback,
                    p.opt_usize("max_iter", 3)?,
                )?;
                to_value(&outcome)
            }
            "evolve.vars" => to_value(&tea.extract_vars(p.parsed("kind")?, p.str("name")?)?),
            "evolve.setvars" => to_value(&tea.set_vars(&p.typed::<Vec<Variable>>("vars")?)?),
            "evolve.rollback" => to_value(&tea.rollback(p.parsed("kind")?, p.str("name")?, p.parsed("version")?)?),
            "evolve.runs" => to_value(&tea.evolution_runs()),
            "codec.encode" => Ok(Value::from(tea.codec_encode(p.parsed("kind")?, p.str("name")?)?)),
            "codec.decode" => decoded_value(tea.codec_decode(p.str("text")?)?),
            "codec.register" => decoded_value(tea.codec_register(p.str("text")?)?),
            "state.save" => {
                tea.save_dir(&self.dir(&p)?)?;
                Ok(Value::Null)
            }
            "state.load" => {
                tea.load_dir(&self.dir(&p)?)?;
                Ok(Value::Null)
            }
            "ops" => Ok(Value::Seq(op_table().into_iter().map(Value::from).collect())),
            _ => Err(Error::protocol(format!("unknown op {op:?}"))),
        }
    }

    fn kind_op(&self, kind: ComponentKind, op: &str, p: &Params<'_>) -> Result<Option<Value>> {
        let tea = &self.tea;
        let v = match op {
            "list" => to_value(&tea.list(kind))?,
            "info" => to_value(&tea.info(kind, p.str("name")?)?)?,
            "history" => to_value(&tea.history(kind, p.str("name")?))?,
            "lookup" => to_value(&tea.lookup(kind, p.str("name")?, p.parsed("version")?)?)?,
            "lifecycle" => {
                let state: LifecycleState = p.parsed("state")?;
                to_value(&tea.set_lifecycle(kind, p.str("name")?, p.parsed("version")?, state)?)?
            }
            "restore" => to_value(&tea.restore(kind, p.str("name")?, p.parsed("version")?)?)?,
            "copy" => to_value(&tea.copy(kind, p.str("name")?, p.str("new_name")?)?)?,
            "unregister" => {
                tea.unregister(kind, p.str("name")?)?;
                Value::Null
            }
            "contract" => to_value(&tea.contract(kind))?,
            "retrieve" => self.retrieve(kind, p)?,
            "vars" => to_value(&tea.extract_vars(kind, p.str("name")?)?)?,
            "setvars" => {
                let vars: Vec<Variable> = p.typed("vars")?;
                if let Some(v) = vars.iter().find(|v| v.owner.kind != kind) {
                    return Err(Error::protocol(format!("variable {v} is not a {kind}")));
                }
                to_value(&tea.set_vars(&vars)?)?
            }
            "save" => {
                tea.save_kind(&self.dir(p)?, kind)?;
                Value::Null
            }
            "load" => {
                tea.load_kind(&self.dir(p)?, kind)?;
                Value::Null
            }
            _ => return Ok(None),
        };
        Ok(Some(v))
    }

    fn retrieve(&self, kind: ComponentKind, p: &Params<'_>) -> Result<Value> {
        let hits = self.tea.retrieve(kind, p.str("query")?, p.opt_usize("k", 5)?)?;
        Ok(Value::Seq(
            hits.into_iter()
                .map(|(n, s)| map_of([("name", Value::from(n.as_str())), ("score", Value::Float(s))]))
                .collect(),
        ))
    }

    fn session(&self, p: &Params<'_>) -> Result<Option<SessionHandle>> {
        match p.opt_str("session_id")? {
            None => Ok(None),
            Some(sid) => self.tea.sessions().handle(sid).map(Some).ok_or_else(|| Error::not_found(format!("session {sid}"))),
        }
    }

    fn require_session(&self, p: &Params<'_>) -> Result<SessionHandle> {
        p.str("session_id")?;
        Ok(self.session(p)?.expect("session_id present"))
    }

    fn dir(&self, p: &Params<'_>) -> Result<PathBuf> {
        match p.opt_str("dir")? {
            Some(d) => Ok(PathBuf::from(d)),
            None => self.data_dir.clone().ok_or_else(|| Error::protocol("no \"dir\" param and no data directory configured")),
        }
    }
}

fn decoded_value(d: crate::managers::codec::Decoded) -> Result<Value> {
    Ok(map_of([("config", to_value(&d.config)?), ("dormant", Value::Bool(d.dormant))]))
}

fn trace_query(p: &Params<'_>) -> Result<TraceQuery> {
    if let Some(r) = p.opt_str("record_id")? {
        return Ok(TraceQuery::Record(r.to_owned()));
    }
    if let Some(t) = p.opt_str("task_id")? {
        return Ok(TraceQuery::Task(t.to_owned()));
    }
    let sid = p.str("session_id").map_err(|_| Error::protocol("trace.query needs session_id, task_id or record_id"))?;
    match p.get("index") {
        Some(_) => Ok(TraceQuery::Index { session_id: sid.to_owned(), index: p.usize("index")? as u64 }),
        None => Ok(TraceQuery::Session(sid.to_owned())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::add_tool_spec;

    fn req(id: &str, op: &str, params: Value) -> RequestEnvelope {
        RequestEnvelope { id: id.into(), op: op.into(), params }
    }

    #[test]
    fn null_result_survives_the_line_format() {
        let r = ResponseEnvelope::success("7".into(), Value::Null);
        let back: ResponseEnvelope = serde_json::from_str(&r.to_line()).unwrap();
        assert_eq!(back.into_result().unwrap(), Value::Null);
        let missing: ResponseEnvelope = serde_json::from_str(r#"{"id":"7","ok":true}"#).unwrap();
        assert!(missing.into_result().is_err());
    }

    #[test]
    fn list_on_empty_registry_is_empty() {
        let d = Dispatcher::with_data_dir(Tea::new(), None);
        let r = d.dispatch(&req("1", "tool.list", Value::map()));
        assert_eq!(r, ResponseEnvelope::success("1".into(), Value::Seq(vec![])));
    }

    #[test]
    fn unknown_op_is_protocol_error() {
        let d = Dispatcher::with_data_dir(Tea::new(), None);
        let r = d.dispatch(&req("7", "tool.frobnicate", Value::map()));
        assert!(!r.ok);
        assert_eq!(r.error.unwrap().kind, ErrorKind::ProtocolError);
        let r = d.dispatch(&req("8", "nope", Value::map()));
        assert_eq!(r.error.unwrap().kind, ErrorKind::ProtocolError);
    }

    #[test]
    fn invoke_add_through_the_wire() {
        let tea = Tea::new();
        tea.register_tool(add_tool_spec("add")).unwrap();
        let d = Dispatcher::with_data_dir(tea, None);
        let line = r#"{"id":"x","op":"tool.invoke","params":{"name":"add","args":{"a":2,"b":3}}}"#;
        let r = d.dispatch_line(line);
        assert_eq!(r.id, "x");
        assert_eq!(r.result.unwrap().get("output"), Some(&Value::Int(5)));
    }

    #[test]
    fn malformed_lines_and_params() {
        let d = Dispatcher::with_data_dir(Tea::new(), None);
        let r = d.dispatch_line("{not json");
        assert_eq!(r.error.unwrap().kind, ErrorKind::ProtocolError);
        let r = d.dispatch_line(r#"{"id":"3","op":"tool.info","params":{"name":5}}"#);
        assert_eq!(r.id, "3");
        assert_eq!(r.error.unwrap().kind, ErrorKind::ProtocolError);
        let r = d.dispatch_line(r#"{"id":"4","op":"tool.list","params":[1]}"#);
        assert_eq!(r.error.unwrap().kind, ErrorKind::ProtocolError);
        let r = d.dispatch_line(r#"{"id":"","op":"tool.list"}"#);
        assert_eq!(r.error.unwrap().kind, ErrorKind::ProtocolError);
    }

    #[test]
    fn kernel_errors_keep_their_kind() {
        let d = Dispatcher::with_data_dir(Tea::new(), None);
        let r = d.dispatch(&req("1", "tool.info", map_of([("name", "ghost")])));
        assert_eq!(r.error.unwrap().kind, ErrorKind::NotFound);
    }

    #[test]
    fn responses_round_trip_through_lines() {
        let r = ResponseEnvelope::failure("9".into(), Error::validation(vec!["a".into(), "b".into()]));
        let back: ResponseEnvelope = serde_json::from_str(r.to_line().trim_end()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.into_result().unwrap_err().reasons, vec!["a", "b"]);
    }

    #[test]
    fn op_table_is_sorted_and_unique() {
        let ops = op_table();
        let mut dedup = ops.clone();
        dedup.dedup();
        assert_eq!(ops, dedup);
        assert!(ops.contains(&"env.act".to_string()));
        assert!(ops.contains(&"memory.load".to_string()));
    }
}
