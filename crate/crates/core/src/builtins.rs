//! Deterministic fixtures shipped with the kernel: arithmetic and echo tools,
//! the `counter`, `kvstore` and `scripted_web` environments, and the `echo`
//! agent.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::agent::AgentSpec;
use crate::behavior::{Environment, Factories};
use crate::environment::{ActionDecl, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::kernel::Context;
use crate::schema::{ParamDecl, ParamType, Signature};
use crate::tool::ToolSpec;
use crate::types::Descriptor;
use crate::value::{map_of, Map, Value};

pub(crate) fn install(f: &mut Factories) {
    f.add_tool_fn("builtin.add", |_, args| add(args));
    f.add_tool_fn("builtin.echo", |_, args| Ok(Value::Map(args.clone())));
    f.add_environment("counter", Arc::new(|_| Ok(Box::new(Counter::default()))));
    f.add_environment("kvstore", Arc::new(|_| Ok(Box::new(KvStore::default()))));
    f.add_environment("scripted_web", Arc::new(|_| Ok(Box::new(ScriptedWeb::new()))));
    f.add_agent_fn("echo", true, |_, task| Ok(task.clone()));
}

fn add(args: &Map) -> Result<Value> {
    match (args.get("a"), args.get("b")) {
        (Some(Value::Int(a)), Some(Value::Int(b))) => a
            .checked_add(*b)
            .map(Value::Int)
            .ok_or_else(|| Error::backend("integer overflow")),
        (Some(a), Some(b)) => match (a.as_f64(), b.as_f64()) {
            (Some(a), Some(b)) => Ok(Value::Float(a + b)),
            _ => Err(Error::backend("add expects numeric a and b")),
        },
        _ => Err(Error::backend("add expects a and b")),
    }
}

/// `add(a: integer, b: integer)` backed by `builtin.add`.
pub fn add_tool_spec(name: &str) -> ToolSpec {
    ToolSpec::new(
        Descriptor::new(name, "adds two integers").with_meta("behavior_id", "builtin.add"),
        Signature::new(vec![
            ParamDecl::required("a", ParamType::Integer, "first addend"),
            ParamDecl::required("b", ParamType::Integer, "second addend"),
        ]),
    )
    .with_source("def add(a, b):\n    return a + b\n")
}

pub fn echo_tool_spec(name: &str) -> ToolSpec {
    let mut sig = Signature::open();
    sig.params.push(ParamDecl::optional("msg", ParamType::Text, "message to echo"));
    ToolSpec::new(Descriptor::new(name, "returns its arguments unchanged").with_meta("behavior_id", "builtin.echo"), sig)
        .with_source("def echo(**kwargs):\n    return kwargs\n")
}

pub fn counter_spec(name: &str) -> EnvironmentSpec {
    EnvironmentSpec::new(Descriptor::new(name, "an integer counter starting at zero").with_meta("behavior_id", "counter"))
        .with_source("class Counter: ...")
}

pub fn kvstore_spec(name: &str) -> EnvironmentSpec {
    EnvironmentSpec::new(Descriptor::new(name, "an in-memory key value store").with_meta("behavior_id", "kvstore"))
        .with_source("class KvStore: ...")
}

pub fn scripted_web_spec(name: &str) -> EnvironmentSpec {
    EnvironmentSpec::new(
        Descriptor::new(name, "a deterministic web of linked pages").with_meta("behavior_id", "scripted_web"),
    )
    .with_source("class ScriptedWeb: ...")
}

pub fn echo_agent_spec(name: &str) -> AgentSpec {
    AgentSpec::new(Descriptor::new(name, "answers every task with the task itself").with_meta("behavior_id", "echo"))
        .with_source("class Echo: ...")
}

#[derive(Default)]
struct Counter {
    count: i64,
}

impl Environment for Counter {
    fn actions(&self) -> Vec<ActionDecl> {
        vec![
            ActionDecl::new("increment", "adds one to the count", Signature::default()),
            ActionDecl::new("reset", "sets the count back to zero", Signature::default()),
        ]
    }

    fn state(&self, _: &Context<'_>) -> Result<Value> {
        Ok(map_of([("count", self.count)]))
    }

    fn step(&mut self, ctx: &Context<'_>, action: &str, _: &Map) -> Result<Value> {
        match action {
            "increment" => self.count += 1,
            "reset" => self.count = 0,
            other => return Err(Error::new(crate::ErrorKind::ActionNotFound, other.to_owned())),
        }
        self.state(ctx)
    }
}

#[derive(Default)]
struct KvStore {
    entries: BTreeMap<String, String>,
}

impl Environment for KvStore {
    fn actions(&self) -> Vec<ActionDecl> {
        let key = || ParamDecl::required("key", ParamType::Text, "entry key");
        vec![
            ActionDecl::new("delete", "removes an entry", Signature::new(vec![key()])),
            ActionDecl::new("get", "reads an entry", Signature::new(vec![key()])),
            ActionDecl::new(
                "put",
                "writes an entry",
                Signature::new(vec![key(), ParamDecl::required("value", ParamType::Text, "entry value")]),
            ),
        ]
    }

    fn state(&self, _: &Context<'_>) -> Result<Value> {
        let entries: Map = self.entries.iter().map(|(k, v)| (k.clone(), Value::from(v.as_str()))).collect();
        Ok(map_of([("entries", Value::Map(entries))]))
    }

    fn step(&mut self, _: &Context<'_>, action: &str, args: &Map) -> Result<Value> {
        let key = args.get("key").and_then(Value::as_str).unwrap_or_default().to_owned();
        match action {
            "get" => Ok(map_of([("key", Value::from(key.as_str())), ("value", self.entries.get(&key).cloned().into())])),
            "put" => {
                let value = args.get("value").and_then(Value::as_str).unwrap_or_default().to_owned();
                let previous = self.entries.insert(key.clone(), value);
                Ok(map_of([("key", Value::from(key)), ("previous", previous.into())]))
            }
            "delete" => {
                let removed = self.entries.remove(&key);
                Ok(map_of([("key", Value::from(key)), ("removed", Value::Bool(removed.is_some()))]))
            }
            other => Err(Error::new(crate::ErrorKind::ActionNotFound, other.to_owned())),
        }
    }
}

struct Page {
    text: &'static str,
    links: &'static [&'static str],
}

const PAGES: &[(&str, Page)] = &[
    ("about", Page { text: "About this site.", links: &["home"] }),
    ("api", Page { text: "API reference: call endpoints with structured arguments.", links: &["docs"] }),
    ("docs", Page { text: "Documentation index.", links: &["api", "home"] }),
    ("home", Page { text: "Welcome home.", links: &["about", "docs"] }),
];

fn page(url: &str) -> Option<&'static Page> {
    PAGES.iter().find(|(u, _)| *u == url).map(|(_, p)| p)
}

/// Browser stand-in: a fixed page graph walked with navigate/click/read.
struct ScriptedWeb {
    current: String,
    visits: i64,
}

impl ScriptedWeb {
    fn new() -> Self {
        ScriptedWeb { current: "home".into(), visits: 1 }
    }

    fn view(&self) -> Value {
        let p = page(&self.current).expect("current page exists");
        map_of([
            ("page", Value::from(self.current.as_str())),
            ("text", Value::from(p.text)),
            ("links", Value::Seq(p.links.iter().map(|l| Value::from(*l)).collect())),
        ])
    }
}

impl Environment for ScriptedWeb {
    fn actions(&self) -> Vec<ActionDecl> {
        vec![
            ActionDecl::new(
                "click",
                "follows a link on the current page",
                Signature::new(vec![ParamDecl::required("link", ParamType::Text, "link target")]),
            ),
            ActionDecl::new(
                "navigate",
                "opens a page by address",
                Signature::new(vec![ParamDecl::required("url", ParamType::Text, "page address")]),
            ),
            ActionDecl::new("read", "returns the current page", Signature::default()),
        ]
    }

    fn state(&self, _: &Context<'_>) -> Result<Value> {
        Ok(map_of([("current", Value::from(self.current.as_str())), ("visits", Value::Int(self.visits))]))
    }

    fn step(&mut self, _: &Context<'_>, action: &str, args: &Map) -> Result<Value> {
        match action {
            "read" => Ok(self.view()),
            "navigate" => {
                let url = args.get("url").and_then(Value::as_str).unwrap_or_default();
                if page(url).is_none() {
                    return Err(Error::backend(format!("404: no page {url:?}")));
                }
                self.current = url.to_owned();
                self.visits += 1;
                Ok(self.view())
            }
            "click" => {
                let link = args.get("link").and_then(Value::as_str).unwrap_or_default();
                let here = page(&self.current).expect("current page exists");
                if !here.links.contains(&link) {
                    return Err(Error::backend(format!("no link {link:?} on {}", self.current)));
                }
                self.current = link.to_owned();
                self.visits += 1;
                Ok(self.view())
            }
            other => Err(Error::new(crate::ErrorKind::ActionNotFound, other.to_owned())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tea;

    #[test]
    fn scripted_web_walk() {
        let tea = Tea::new();
        tea.register_environment(scripted_web_spec("web")).unwrap();
        let click = |l: &str| -> Map { [("link".to_owned(), Value::from(l))].into() };
        let v = tea.invoke_action(None, "web", "click", &click("docs")).unwrap();
        assert_eq!(v.get("page"), Some(&Value::from("docs")));
        let e = tea.invoke_action(None, "web", "click", &click("about")).unwrap_err();
        assert_eq!(e.kind, crate::ErrorKind::BackendFailure);
        let nav: Map = [("url".to_owned(), Value::from("about"))].into();
        tea.invoke_action(None, "web", "navigate", &nav).unwrap();
        assert_eq!(tea.env_state("web").unwrap(), map_of([("current", Value::from("about")), ("visits", Value::Int(3))]));
    }

    #[test]
    fn add_overflow_is_backend_failure() {
        let args: Map = [("a".to_owned(), Value::Int(i64::MAX)), ("b".to_owned(), Value::Int(1))].into();
        assert_eq!(add(&args).unwrap_err().kind, crate::ErrorKind::BackendFailure);
    }
}
