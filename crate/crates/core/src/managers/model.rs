//! Model backends behind one interface, with ordered fallback.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorKind, Result};
use crate::kernel::{read, write, Tea};
use crate::value::{map_of, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Chat,
    Embed,
    Transcribe,
}

impl FromStr for Capability {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chat" => Ok(Capability::Chat),
            "embed" => Ok(Capability::Embed),
            "transcribe" => Ok(Capability::Transcribe),
            _ => Err(Error::invalid(format!("unknown capability {s:?}"))),
        }
    }
}

pub trait ModelBackend: Send + Sync {
    fn id(&self) -> &str;
    fn capabilities(&self) -> BTreeSet<Capability>;
    fn invoke(&self, request: &Value) -> Result<Value>;
}

/// Maps request fingerprints (canonical text) to canned responses or
/// failures.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    id: String,
    capabilities: BTreeSet<Capability>,
    script: BTreeMap<String, std::result::Result<Value, String>>,
    fallback: Option<std::result::Result<Value, String>>,
}

fn fingerprint(request: &Value) -> String {
    request.to_canonical().unwrap_or_else(|_| format!("{request:?}"))
}

impl ScriptedBackend {
    pub fn new(id: impl Into<String>) -> Self {
        ScriptedBackend {
            id: id.into(),
            capabilities: BTreeSet::from([Capability::Chat]),
            script: BTreeMap::new(),
            fallback: None,
        }
    }

    pub fn with_capabilities(mut self, caps: impl IntoIterator<Item = Capability>) -> Self {
        self.capabilities = caps.into_iter().collect();
        self
    }

    pub fn respond(mut self, request: &Value, response: Value) -> Self {
        self.script.insert(fingerprint(request), Ok(response));
        self
    }

    pub fn fail(mut self, request: &Value, message: impl Into<String>) -> Self {
        self.script.insert(fingerprint(request), Err(message.into()));
        self
    }

    /// Response for every request not scripted explicitly.
    pub fn respond_all(mut self, response: Value) -> Self {
        self.fallback = Some(Ok(response));
        self
    }

    pub fn fail_all(mut self, message: impl Into<String>) -> Self {
        self.fallback = Some(Err(message.into()));
        self
    }

    /// Builds a backend from its wire form:
    /// `{id, capabilities?, script?: [{request, response} | {request, error}], default?: {response} | {error}}`.
    pub fn from_value(v: &Value) -> Result<Self> {
        let id = v.get("id").and_then(Value::as_str).ok_or_else(|| Error::invalid("backend needs an id"))?;
        let mut b = ScriptedBackend::new(id);
        if let Some(caps) = v.get("capabilities") {
            let caps = caps.as_seq().ok_or_else(|| Error::invalid("capabilities must be a sequence"))?;
            b.capabilities = caps
                .iter()
                .map(|c| c.as_str().ok_or_else(|| Error::invalid("capability must be text"))?.parse())
                .collect::<Result<_>>()?;
        }
        let outcome = |e: &Value| -> Result<std::result::Result<Value, String>> {
            match (e.get("response"), e.get("error")) {
                (Some(r), None) => Ok(Ok(r.clone())),
                (None, Some(Value::Text(m))) => Ok(Err(m.clone())),
                _ => Err(Error::invalid("script entry needs exactly one of response or error (text)")),
            }
        };
        for e in v.get("script").and_then(Value::as_seq).unwrap_or_default() {
            let req = e.get("request").ok_or_else(|| Error::invalid("script entry needs a request"))?;
            b.script.insert(fingerprint(req), outcome(e)?);
        }
        if let Some(d) = v.get("default") {
            b.fallback = Some(outcome(d)?);
        }
        Ok(b)
    }
}

impl ModelBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        self.capabilities.clone()
    }

    fn invoke(&self, request: &Value) -> Result<Value> {
        match self.script.get(&fingerprint(request)).or(self.fallback.as_ref()) {
            Some(Ok(v)) => Ok(v.clone()),
            Some(Err(m)) => Err(Error::backend(m.clone())),
            None => Err(Error::backend(format!("{}: no scripted response", self.id))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub response: Value,
    pub served_by: String,
}

impl ModelResponse {
    pub fn to_value(&self) -> Value {
        map_of([("response", self.response.clone()), ("served_by", Value::from(self.served_by.as_str()))])
    }
}

#[derive(Default)]
pub struct ModelManager {
    backends: RwLock<BTreeMap<String, Arc<dyn ModelBackend>>>,
}

impl fmt::Debug for ModelManager {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelManager").field("backends", &self.ids()).finish()
    }
}

impl ModelManager {
    pub fn register(&self, backend: Arc<dyn ModelBackend>) -> Result<()> {
        let mut b = write(&self.backends);
        let id = backend.id().to_owned();
        if b.contains_key(&id) {
            return Err(Error::conflict(format!("model backend {id}")));
        }
        b.insert(id, backend);
        Ok(())
    }

    pub fn remove(&self, id: &str) -> Result<()> {
        write(&self.backends).remove(id).map(|_| ()).ok_or_else(|| Error::not_found(format!("model backend {id}")))
    }

    pub fn ids(&self) -> Vec<String> {
        read(&self.backends).keys().cloned().collect()
    }

    /// Tries each backend of `chain` in order and returns the first success.
    /// When all fail, the error carries one reason per backend.
    pub fn invoke(&self, request: &Value, chain: &[String]) -> Result<ModelResponse> {
        if chain.is_empty() {
            return Err(Error::invalid("empty backend chain"));
        }
        let backends: Vec<Arc<dyn ModelBackend>> = {
            let map = read(&self.backends);
            chain
                .iter()
                .map(|id| map.get(id).cloned().ok_or_else(|| Error::not_found(format!("model backend {id}"))))
                .collect::<Result<_>>()?
        };
        let mut causes = Vec::new();
        for b in backends {
            match b.invoke(request) {
                Ok(response) => return Ok(ModelResponse { response, served_by: b.id().to_owned() }),
                Err(e) => causes.push(format!("{}: {}", b.id(), e.detail)),
            }
        }
        Err(Error::with_reasons(
            ErrorKind::BackendFailure,
            format!("all {} backends failed: {}", causes.len(), causes.join("; ")),
            causes,
        ))
    }
}

impl Tea {
    pub fn model_register(&self, backend: Arc<dyn ModelBackend>) -> Result<()> {
        self.inner.models.register(backend)
    }

    pub fn model_invoke(&self, request: &Value, chain: &[String]) -> Result<ModelResponse> {
        self.inner.models.invoke(request, chain)
    }
}
