//! Typed parameter declarations, representation synthesis and strict argument
//! checking.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Representations;
use crate::value::{map_of, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    Integer,
    Float,
    Text,
    Boolean,
    Sequence,
    Mapping,
}

impl ParamType {
    /// Name used in function-calling schemas.
    pub fn json_type(self) -> &'static str {
        match self {
            ParamType::Integer => "integer",
            ParamType::Float => "number",
            ParamType::Text => "string",
            ParamType::Boolean => "boolean",
            ParamType::Sequence => "array",
            ParamType::Mapping => "object",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParamType::Integer => "integer",
            ParamType::Float => "float",
            ParamType::Text => "text",
            ParamType::Boolean => "boolean",
            ParamType::Sequence => "sequence",
            ParamType::Mapping => "mapping",
        }
    }

    /// Strict check. Integers are accepted for float parameters (lossless
    /// widening); nothing else converts.
    pub fn admits(self, v: &Value) -> bool {
        matches!(
            (self, v),
            (ParamType::Integer, Value::Int(_))
                | (ParamType::Float, Value::Float(_) | Value::Int(_))
                | (ParamType::Text, Value::Text(_))
                | (ParamType::Boolean, Value::Bool(_))
                | (ParamType::Sequence, Value::Seq(_))
                | (ParamType::Mapping, Value::Map(_))
        )
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ParamType,
    pub required: bool,
    #[serde(default)]
    pub doc: String,
}

impl ParamDecl {
    pub fn required(name: impl Into<String>, ty: ParamType, doc: impl Into<String>) -> Self {
        ParamDecl { name: name.into(), ty, required: true, doc: doc.into() }
    }

    pub fn optional(name: impl Into<String>, ty: ParamType, doc: impl Into<String>) -> Self {
        ParamDecl { name: name.into(), ty, required: false, doc: doc.into() }
    }
}

/// Parameter list of a tool, action or agent task. `accepts_extra` opens the
/// signature to undeclared arguments (delegating wrappers use it).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Signature {
    pub params: Vec<ParamDecl>,
    #[serde(default)]
    pub accepts_extra: bool,
}

impl Signature {
    pub fn new(params: Vec<ParamDecl>) -> Self {
        Signature { params, accepts_extra: false }
    }

    pub fn open() -> Self {
        Signature { params: Vec::new(), accepts_extra: true }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let mut reasons = Vec::new();
        for p in &self.params {
            if p.name.is_empty() {
                reasons.push("empty parameter name".to_owned());
            } else if !seen.insert(p.name.as_str()) {
                reasons.push(format!("duplicate parameter {}", p.name));
            }
        }
        if reasons.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(reasons))
        }
    }

    /// Checks `args` against the declaration; every offending parameter gets
    /// its own reason.
    pub fn check(&self, args: &Map) -> Result<()> {
        let mut reasons = Vec::new();
        for p in &self.params {
            match args.get(&p.name) {
                None | Some(Value::Null) if p.required => reasons.push(format!("missing {}", p.name)),
                None | Some(Value::Null) => {}
                Some(v) if !p.ty.admits(v) => {
                    reasons.push(format!("{}: expected {}, got {}", p.name, p.ty, v.type_name()))
                }
                Some(_) => {}
            }
        }
        if !self.accepts_extra {
            for k in args.keys() {
                if !self.params.iter().any(|p| &p.name == k) {
                    reasons.push(format!("unexpected argument {k}"));
                }
            }
        }
        if reasons.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(reasons))
        }
    }

    /// The typed declaration as stored in `argument_schema`.
    pub fn to_value(&self) -> Value {
        Value::from_serialize(self).expect("signatures contain no floats")
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        v.to_typed()
    }

    /// Compact one-line summary such as `(a: integer, b?: text)`.
    pub fn summary(&self) -> String {
        let mut parts: Vec<String> = self
            .params
            .iter()
            .map(|p| format!("{}{}: {}", p.name, if p.required { "" } else { "?" }, p.ty))
            .collect();
        if self.accepts_extra {
            parts.push("..".to_owned());
        }
        format!("({})", parts.join(", "))
    }
}

/// Function-calling form: name, description and a JSON-schema-like
/// `parameters` object.
pub fn call_schema(name: &str, description: &str, sig: &Signature) -> Value {
    let properties: Map = sig
        .params
        .iter()
        .map(|p| {
            let prop = map_of([("type", Value::from(p.ty.json_type())), ("description", Value::from(p.doc.as_str()))]);
            (p.name.clone(), prop)
        })
        .collect();
    let required: Vec<Value> = sig.params.iter().filter(|p| p.required).map(|p| Value::from(p.name.as_str())).collect();
    let parameters = map_of([
        ("type", Value::from("object")),
        ("properties", Value::Map(properties)),
        ("required", Value::Seq(required)),
        ("additionalProperties", Value::Bool(sig.accepts_extra)),
    ]);
    map_of([
        ("name", Value::from(name)),
        ("description", Value::from(description)),
        ("parameters", parameters),
    ])
}

pub fn text_description(name: &str, description: &str, sig: &Signature) -> String {
    let mut out = format!("{name}: {description}\n");
    if sig.params.is_empty() {
        out.push_str("Parameters: none\n");
    } else {
        out.push_str("Parameters:\n");
        for p in &sig.params {
            let req = if p.required { "required" } else { "optional" };
            if p.doc.is_empty() {
                out.push_str(&format!("- {} ({}, {})\n", p.name, p.ty, req));
            } else {
                out.push_str(&format!("- {} ({}, {}): {}\n", p.name, p.ty, req, p.doc));
            }
        }
    }
    if sig.accepts_extra {
        out.push_str("Additional arguments are accepted.\n");
    }
    out
}

pub fn synthesize(name: &str, description: &str, sig: &Signature) -> Result<Representations> {
    sig.validate()?;
    Ok(Representations {
        call_schema: call_schema(name, description, sig),
        text_description: text_description(name, description, sig),
        argument_schema: sig.to_value(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn add_sig() -> Signature {
        Signature::new(vec![
            ParamDecl::required("a", ParamType::Integer, "first addend"),
            ParamDecl::required("b", ParamType::Integer, "second addend"),
        ])
    }

    #[test]
    fn add_call_schema_golden() {
        // written by hand before the synthesizer existed
        let golden = r#"{"description":"adds two integers","name":"add","parameters":{"additionalProperties":false,"properties":{"a":{"description":"first addend","type":"integer"},"b":{"description":"second addend","type":"integer"}},"required":["a","b"],"type":"object"}}"#;
        let reps = synthesize("add", "adds two integers", &add_sig()).unwrap();
        assert_eq!(reps.call_schema.to_canonical().unwrap(), golden);
        assert_eq!(
            reps.text_description,
            "add: adds two integers\nParameters:\n- a (integer, required): first addend\n- b (integer, required): second addend\n"
        );
        assert_eq!(
            reps.argument_schema.to_canonical().unwrap(),
            r#"{"accepts_extra":false,"params":[{"doc":"first addend","name":"a","required":true,"type":"integer"},{"doc":"second addend","name":"b","required":true,"type":"integer"}]}"#
        );
    }

    #[test]
    fn zero_params() {
        let reps = synthesize("noop", "does nothing", &Signature::default()).unwrap();
        assert_eq!(reps.call_schema.get("parameters").unwrap().get("properties"), Some(&Value::map()));
        assert_eq!(reps.call_schema.get("parameters").unwrap().get("required"), Some(&Value::Seq(vec![])));
    }

    #[test]
    fn deterministic() {
        let a = synthesize("add", "adds", &add_sig()).unwrap();
        let b = synthesize("add", "adds", &add_sig()).unwrap();
        assert_eq!(a.call_schema.to_canonical().unwrap(), b.call_schema.to_canonical().unwrap());
        assert_eq!(a.text_description, b.text_description);
        assert_eq!(a.argument_schema.to_canonical().unwrap(), b.argument_schema.to_canonical().unwrap());
    }

    #[test]
    fn duplicate_params_rejected() {
        let sig = Signature::new(vec![
            ParamDecl::required("a", ParamType::Integer, ""),
            ParamDecl::required("a", ParamType::Text, ""),
        ]);
        assert_eq!(synthesize("x", "y", &sig).unwrap_err().kind, crate::ErrorKind::ValidationFailed);
    }

    #[test]
    fn strict_checking() {
        let sig = add_sig();
        let args = |j: serde_json::Value| Value::from(j).as_map().unwrap().clone();
        assert!(sig.check(&args(serde_json::json!({"a": 2, "b": 3}))).is_ok());
        let e = sig.check(&args(serde_json::json!({"a": 2}))).unwrap_err();
        assert_eq!(e.reasons, vec!["missing b"]);
        let e = sig.check(&args(serde_json::json!({"a": "2", "b": 1.5, "c": 0}))).unwrap_err();
        assert_eq!(e.reasons.len(), 3);
        let float = Signature::new(vec![ParamDecl::required("x", ParamType::Float, "")]);
        assert!(float.check(&args(serde_json::json!({"x": 2}))).is_ok());
        assert!(Signature::open().check(&args(serde_json::json!({"anything": [1]}))).is_ok());
    }

    #[test]
    fn argument_schema_round_trip() {
        let sig = add_sig();
        assert_eq!(Signature::from_value(&sig.to_value()).unwrap(), sig);
    }
}
