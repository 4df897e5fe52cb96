//! Versioned prompt templates with named module slots.
//!
//! Templates use `{ident}` placeholders; `{{` and `}}` are literal braces.
//! At render time a placeholder takes the supplied variable if present,
//! otherwise the module of the same name.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{lookup_name, Runtime, Tea};
use crate::schema::{synthesize, ParamDecl, ParamType, Signature};
use crate::types::{BumpLevel, ComponentConfig, ComponentKind, Descriptor, Representations, Version};
use crate::value::{canonical_string, Map, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PromptConfig {
    pub system_template: String,
    pub message_template: String,
    #[serde(default)]
    pub modules: BTreeMap<String, String>,
    #[serde(default)]
    pub trainable_slots: BTreeSet<String>,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    cs.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse(template: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix("{{") {
            out.push(Piece::Text("{"));
            rest = r;
        } else if let Some(r) = rest.strip_prefix("}}") {
            out.push(Piece::Text("}"));
            rest = r;
        } else if rest.starts_with('{') {
            match rest[1..].find('}') {
                Some(end) if is_ident(&rest[1..=end]) => {
                    out.push(Piece::Slot(&rest[1..=end]));
                    rest = &rest[end + 2..];
                }
                _ => {
                    out.push(Piece::Text("{"));
                    rest = &rest[1..];
                }
            }
        } else {
            let stop = rest[1..].find(['{', '}']).map_or(rest.len(), |i| i + 1);
            out.push(Piece::Text(&rest[..stop]));
            rest = &rest[stop..];
        }
    }
    out
}

fn slots(template: &str) -> impl Iterator<Item = &str> {
    parse(template).into_iter().filter_map(|p| match p {
        Piece::Slot(s) => Some(s),
        Piece::Text(_) => None,
    })
}

fn substitute(template: &str, lookup: &impl Fn(&str) -> Option<String>) -> String {
    parse(template)
        .into_iter()
        .map(|p| match p {
            Piece::Text(t) => t.to_owned(),
            Piece::Slot(s) => lookup(s).unwrap_or_default(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub message: String,
}

impl RenderedPrompt {
    pub fn to_value(&self) -> Value {
        crate::value::map_of([("message", self.message.as_str()), ("system", self.system.as_str())])
    }
}

impl PromptConfig {
    pub fn new(system_template: impl Into<String>, message_template: impl Into<String>) -> Self {
        PromptConfig {
            system_template: system_template.into(),
            message_template: message_template.into(),
            ..Default::default()
        }
    }

    pub fn with_module(mut self, name: impl Into<String>, text: impl Into<String>) -> Self {
        self.modules.insert(name.into(), text.into());
        self
    }

    pub fn trainable(mut self, slot: impl Into<String>) -> Self {
        self.trainable_slots.insert(slot.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut reasons = Vec::new();
        for m in self.modules.keys() {
            if !is_ident(m) {
                reasons.push(format!("module name {m:?} is not a valid slot name"));
            }
        }
        for s in &self.trainable_slots {
            if !self.modules.contains_key(s) {
                reasons.push(format!("trainable slot {s} has no module"));
            }
        }
        if reasons.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(reasons))
        }
    }

    /// Placeholders that must be supplied at render time.
    pub fn variables(&self) -> BTreeSet<String> {
        slots(&self.system_template)
            .chain(slots(&self.message_template))
            .filter(|s| !self.modules.contains_key(*s))
            .map(str::to_owned)
            .collect()
    }

    pub fn render(&self, vars: &Map) -> Result<RenderedPrompt> {
        let missing: Vec<String> = self.variables().into_iter().filter(|v| vars.get(v).is_none_or(Value::is_null)).collect();
        if !missing.is_empty() {
            return Err(Error::validation(missing));
        }
        let lookup = |s: &str| match vars.get(s) {
            Some(Value::Text(t)) => Some(t.clone()),
            Some(v) if !v.is_null() => Some(v.to_string()),
            _ => self.modules.get(s).cloned(),
        };
        Ok(RenderedPrompt {
            system: substitute(&self.system_template, &lookup),
            message: substitute(&self.message_template, &lookup),
        })
    }

    pub fn signature(&self) -> Signature {
        Signature::new(self.variables().into_iter().map(|v| ParamDecl::required(v, ParamType::Text, "")).collect())
    }

    pub fn representations(&self, name: &str, description: &str) -> Result<Representations> {
        synthesize(name, description, &self.signature())
    }

    pub fn to_source(&self) -> Result<String> {
        canonical_string(self)
    }

    pub fn from_config(cfg: &ComponentConfig) -> Result<PromptConfig> {
        let p: PromptConfig = serde_json::from_str(&cfg.source)
            .map_err(|e| Error::invalid(format!("prompt {} has malformed source: {e}", cfg.descriptor.name)))?;
        p.validate()?;
        Ok(p)
    }

    pub fn into_config(self, descriptor: Descriptor, version: Version) -> Result<ComponentConfig> {
        self.validate()?;
        Ok(ComponentConfig {
            kind: ComponentKind::Prompt,
            representations: self.representations(&descriptor.name, &descriptor.description)?,
            source: self.to_source()?,
            descriptor,
            version,
        })
    }
}

/// Partial edit applied by [`Tea::update_prompt`]. Module entries are merged
/// into the existing modules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PromptChanges {
    pub description: Option<String>,
    pub system_template: Option<String>,
    pub message_template: Option<String>,
    #[serde(default)]
    pub modules: BTreeMap<String, String>,
    pub trainable_slots: Option<BTreeSet<String>>,
}

impl PromptChanges {
    fn apply(&self, cfg: &ComponentConfig) -> Result<ComponentConfig> {
        let mut p = PromptConfig::from_config(cfg)?;
        if let Some(s) = &self.system_template {
            p.system_template = s.clone();
        }
        if let Some(s) = &self.message_template {
            p.message_template = s.clone();
        }
        p.modules.extend(self.modules.clone());
        if let Some(t) = &self.trainable_slots {
            p.trainable_slots = t.clone();
        }
        let mut d = cfg.descriptor.clone();
        if let Some(desc) = &self.description {
            d.description = desc.clone();
        }
        p.into_config(d, cfg.version)
    }
}

impl Tea {
    pub fn register_prompt(&self, descriptor: Descriptor, prompt: PromptConfig) -> Result<ComponentConfig> {
        self.register_config(prompt.into_config(descriptor, Version::INITIAL)?)
    }

    pub fn update_prompt(&self, name: &str, changes: &PromptChanges, level: BumpLevel) -> Result<ComponentConfig> {
        self.advance(ComponentKind::Prompt, name, level, |cur| changes.apply(cur))
    }

    pub fn prompt(&self, name: &str) -> Result<PromptConfig> {
        match &self.live(ComponentKind::Prompt, name)?.runtime {
            Runtime::Prompt(p) => Ok(p.clone()),
            _ => Err(Error::lifecycle(format!("prompt {name} has no parsed template"))),
        }
    }

    pub fn render_prompt(&self, name: &str, vars: &Map) -> Result<RenderedPrompt> {
        self.prompt(name)?.render(vars)
    }

    /// Renders a historical version.
    pub fn render_prompt_version(&self, name: &str, version: Version, vars: &Map) -> Result<RenderedPrompt> {
        let key = lookup_name(ComponentKind::Prompt, name)?;
        let cfg = self.versions().lookup(&key, ComponentKind::Prompt, version)?;
        PromptConfig::from_config(&cfg)?.render(vars)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorKind;
    use crate::value::map_of;

    fn vars(v: Value) -> Map {
        v.as_map().unwrap().clone()
    }

    #[test]
    fn render_basics() {
        let p = PromptConfig::new("", "Hello {name}");
        let out = p.render(&vars(map_of([("name", "World")]))).unwrap();
        assert_eq!(out.message, "Hello World");
        let err = p.render(&Map::new()).unwrap_err();
        assert_eq!(err.kind, ErrorKind::ValidationFailed);
        assert_eq!(err.reasons, vec!["name".to_string()]);
    }

    #[test]
    fn modules_escapes_and_non_text() {
        let p = PromptConfig::new("{role} {{literal}} {not a slot}", "n={n} {tone}")
            .with_module("role", "You are a planner.")
            .with_module("tone", "Be brief.")
            .trainable("role");
        assert_eq!(p.variables(), BTreeSet::from(["n".to_string()]));
        let out = p.render(&vars(map_of([("n", 3i64)]))).unwrap();
        assert_eq!(out.system, "You are a planner. {literal} {not a slot}");
        assert_eq!(out.message, "n=3 Be brief.");
        // a variable overrides the module of the same name
        let out = p.render(&vars(map_of([("n", Value::from(1i64)), ("tone", Value::from("Loud."))]))).unwrap();
        assert_eq!(out.message, "n=1 Loud.");
    }

    #[test]
    fn trainable_slot_needs_module() {
        let p = PromptConfig::new("{a}", "").trainable("a");
        assert_eq!(p.validate().unwrap_err().kind, ErrorKind::ValidationFailed);
    }

    #[test]
    fn update_then_render_old_version() {
        let tea = Tea::new();
        tea.register_prompt(Descriptor::new("greet", "greets someone"), PromptConfig::new("", "Hello {name}")).unwrap();
        let changes = PromptChanges { message_template: Some("Hi {name}!".into()), ..Default::default() };
        let v2 = tea.update_prompt("greet", &changes, BumpLevel::Patch).unwrap();
        assert_eq!(v2.version.to_string(), "1.0.1");
        let vs = vars(map_of([("name", "Ada")]));
        assert_eq!(tea.render_prompt("greet", &vs).unwrap().message, "Hi Ada!");
        assert_eq!(tea.render_prompt_version("greet", Version::INITIAL, &vs).unwrap().message, "Hello Ada");
        assert_eq!(tea.render_prompt("nope", &vs).unwrap_err().kind, ErrorKind::NotFound);
    }

    #[test]
    fn representations_list_variables() {
        let p = PromptConfig::new("{b}", "{a} {b}");
        let r = p.representations("demo", "a demo prompt").unwrap();
        assert_eq!(r, p.representations("demo", "a demo prompt").unwrap());
        assert!(r.text_description.contains("- a (text, required)"));
    }
}
