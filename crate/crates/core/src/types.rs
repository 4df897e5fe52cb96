//! Shared domain vocabulary: names, versions, descriptors and configurations.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, ErrorKind, Result};
use crate::value::Value;

/// Milliseconds since the Unix epoch.
pub type Timestamp = u64;

/// Validated component name: lowercase alphanumerics, `_`, `.`, `-`, first
/// character alphabetic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComponentName(String);

impl ComponentName {
    pub fn new(s: impl Into<String>) -> Result<Self> {
        let s = s.into();
        let reasons = name_violations(&s);
        if reasons.is_empty() {
            Ok(ComponentName(s))
        } else {
            Err(Error::validation(reasons))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Last `.`-separated segment.
    pub fn short(&self) -> &str {
        self.0.rsplit('.').next().unwrap_or(&self.0)
    }
}

impl fmt::Display for ComponentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for ComponentName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl FromStr for ComponentName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ComponentName::new(s)
    }
}

impl Serialize for ComponentName {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ComponentName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ComponentName::new(s).map_err(serde::de::Error::custom)
    }
}

fn name_violations(name: &str) -> Vec<String> {
    let mut reasons = Vec::new();
    if name.is_empty() {
        reasons.push("empty name".to_owned());
        return reasons;
    }
    if name.chars().any(char::is_whitespace) {
        reasons.push("name contains whitespace".to_owned());
    }
    let bad: Vec<char> = name
        .chars()
        .filter(|c| !c.is_whitespace())
        .filter(|c| !(c.is_ascii_lowercase() || c.is_ascii_digit() || matches!(c, '_' | '.' | '-')))
        .collect();
    if !bad.is_empty() {
        reasons.push(format!("name contains disallowed characters {bad:?}"));
    }
    if !name.starts_with(|c: char| c.is_ascii_lowercase()) {
        reasons.push("name must start with a lowercase letter".to_owned());
    }
    reasons
}

/// Semantic version `major.minor.patch`, ordered numerically field by field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Version {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
}

impl Version {
    pub const INITIAL: Version = Version { major: 1, minor: 0, patch: 0 };

    pub const fn new(major: u64, minor: u64, patch: u64) -> Self {
        Version { major, minor, patch }
    }

    pub fn bump(self, level: BumpLevel) -> Version {
        match level {
            BumpLevel::Major => Version::new(self.major + 1, 0, 0),
            BumpLevel::Minor => Version::new(self.major, self.minor + 1, 0),
            BumpLevel::Patch => Version::new(self.major, self.minor, self.patch + 1),
        }
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.major, self.minor, self.patch).cmp(&(other.major, other.minor, other.patch))
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

impl FromStr for Version {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("malformed version {s:?}"));
        let mut parts = s.split('.');
        let mut field = || -> Result<u64> {
            let p = parts.next().ok_or_else(bad)?;
            // no signs, no leading zeros (except "0"), digits only
            if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) || (p.len() > 1 && p.starts_with('0')) {
                return Err(bad());
            }
            p.parse().map_err(|_| bad())
        };
        let v = Version::new(field()?, field()?, field()?);
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(v)
    }
}

impl Serialize for Version {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Version {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BumpLevel {
    Major,
    Minor,
    Patch,
}

impl FromStr for BumpLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "major" => Ok(BumpLevel::Major),
            "minor" => Ok(BumpLevel::Minor),
            "patch" => Ok(BumpLevel::Patch),
            _ => Err(Error::invalid(format!("unknown bump level {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Tool,
    Environment,
    Agent,
    Prompt,
    Memory,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 5] = [
        ComponentKind::Tool,
        ComponentKind::Environment,
        ComponentKind::Agent,
        ComponentKind::Prompt,
        ComponentKind::Memory,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Tool => "tool",
            ComponentKind::Environment => "environment",
            ComponentKind::Agent => "agent",
            ComponentKind::Prompt => "prompt",
            ComponentKind::Memory => "memory",
        }
    }

    /// Manifest file name under the data directory.
    pub fn manifest_file(self) -> &'static str {
        match self {
            ComponentKind::Tool => "tools.manifest",
            ComponentKind::Environment => "environments.manifest",
            ComponentKind::Agent => "agents.manifest",
            ComponentKind::Prompt => "prompts.manifest",
            ComponentKind::Memory => "memories.manifest",
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComponentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tool" | "tools" => Ok(ComponentKind::Tool),
            "environment" | "environments" | "env" => Ok(ComponentKind::Environment),
            "agent" | "agents" => Ok(ComponentKind::Agent),
            "prompt" | "prompts" => Ok(ComponentKind::Prompt),
            "memory" | "memories" => Ok(ComponentKind::Memory),
            _ => Err(Error::invalid(format!("unknown component kind {s:?}"))),
        }
    }
}

/// Metadata key naming the factory that supplies a component's behavior.
pub const BEHAVIOR_KEY: &str = "behavior_id";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Descriptor {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default)]
    pub evolvable: bool,
}

impl Descriptor {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Descriptor {
            name: name.into(),
            description: description.into(),
            metadata: BTreeMap::new(),
            evolvable: false,
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn evolvable(mut self, evolvable: bool) -> Self {
        self.evolvable = evolvable;
        self
    }

    pub fn behavior_id(&self) -> Option<&str> {
        self.metadata.get(BEHAVIOR_KEY).map(String::as_str)
    }
}

/// Outcome of [`validate_descriptor`]: empty `reasons` means valid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Validation {
    pub reasons: Vec<String>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.reasons.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::validation(self.reasons))
        }
    }
}

/// Checks every descriptor rule and reports all violations at once.
pub fn validate_descriptor(d: &Descriptor) -> Validation {
    let mut reasons = name_violations(&d.name);
    if d.description.trim().is_empty() {
        reasons.push("empty description".to_owned());
    }
    Validation { reasons }
}

/// The three synthesized interface forms of a component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Representations {
    pub call_schema: Value,
    pub text_description: String,
    pub argument_schema: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentConfig {
    pub kind: ComponentKind,
    pub descriptor: Descriptor,
    pub version: Version,
    pub source: String,
    pub representations: Representations,
}

impl ComponentConfig {
    pub fn name(&self) -> ComponentName {
        // registries only ever store configs whose name validated
        ComponentName(self.descriptor.name.clone())
    }

    pub fn behavior_id(&self) -> Option<&str> {
        self.descriptor.behavior_id()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractEntry {
    pub name: ComponentName,
    pub version: Version,
    pub text_description: String,
    pub schema_summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractDocument {
    pub kind: ComponentKind,
    pub entries: Vec<ContractEntry>,
    pub generated_at: Timestamp,
}

impl ContractDocument {
    /// Plain-text rendering used by the CLI and for documentation dumps.
    pub fn render(&self) -> String {
        let mut out = format!("# {} contract ({} entries)\n", self.kind, self.entries.len());
        for e in &self.entries {
            out.push_str(&format!("\n## {} v{}\n{}\nschema: {}\n", e.name, e.version, e.text_description, e.schema_summary));
        }
        out
    }
}

pub(crate) fn not_found_version(name: &ComponentName, version: Version) -> Error {
    Error::new(ErrorKind::VersionNotFound, format!("{name} has no version {version}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn descriptor_rules() {
        let ok = Descriptor::new("add", "adds two integers");
        assert!(validate_descriptor(&ok).is_ok());

        let empty = Descriptor::new("", "x");
        assert_eq!(validate_descriptor(&empty).reasons, vec!["empty name".to_owned()]);

        // whitespace in the name and an empty description
        let two = Descriptor::new("a b", "");
        assert_eq!(validate_descriptor(&two).reasons.len(), 2);
    }

    #[test]
    fn name_pattern() {
        for good in ["add", "env.counter.increment", "a-b_c.1"] {
            assert!(ComponentName::new(good).is_ok(), "{good}");
        }
        for bad in ["Add", "1add", "_x", "a/b", ".a", ""] {
            assert!(ComponentName::new(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn version_ordering_is_numeric() {
        let a: Version = "1.2.0".parse().unwrap();
        let b: Version = "1.10.0".parse().unwrap();
        assert!(a < b);
        assert!("1.2".parse::<Version>().is_err());
        assert!("1.02.0".parse::<Version>().is_err());
        assert!("1.2.3.4".parse::<Version>().is_err());
    }

    #[test]
    fn bump_rules() {
        let v = |s: &str| s.parse::<Version>().unwrap();
        assert_eq!(v("1.0.0").bump(BumpLevel::Patch), v("1.0.1"));
        assert_eq!(v("1.2.3").bump(BumpLevel::Major), v("2.0.0"));
        assert_eq!(v("0.9.9").bump(BumpLevel::Minor), v("0.10.0"));
    }

    proptest! {
        #[test]
        fn version_render_parse_identity(a in 0u64..1_000_000, b in 0u64..1_000_000, c in 0u64..1_000_000) {
            let v = Version::new(a, b, c);
            prop_assert_eq!(v.to_string().parse::<Version>().unwrap(), v);
        }

        #[test]
        fn version_order_matches_tuple(a in any::<(u8, u8, u8)>(), b in any::<(u8, u8, u8)>()) {
            let va = Version::new(a.0.into(), a.1.into(), a.2.into());
            let vb = Version::new(b.0.into(), b.1.into(), b.2.into());
            prop_assert_eq!(va.cmp(&vb), a.cmp(&b));
        }
    }
}
