//! Agent Context Protocol: agents with pluggable policies, invocation and the
//! relationship graph between agents.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{read, write, Runtime, Tea};
use crate::managers::memory::SessionHandle;
use crate::schema::{self, Signature};
use crate::types::{
    validate_descriptor, BumpLevel, ComponentConfig, ComponentKind, ComponentName, ContractDocument, Descriptor,
    Version,
};
use crate::value::Value;

/// Declaration of an agent. `signature` describes the task mapping; the
/// default open signature accepts any task value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub descriptor: Descriptor,
    #[serde(default = "Signature::open")]
    pub signature: Signature,
    #[serde(default)]
    pub source: String,
}

impl AgentSpec {
    pub fn new(descriptor: Descriptor) -> Self {
        AgentSpec { descriptor, signature: Signature::open(), source: String::new() }
    }

    pub fn with_signature(mut self, signature: Signature) -> Self {
        self.signature = signature;
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub(crate) fn into_config(self) -> Result<ComponentConfig> {
        validate_descriptor(&self.descriptor).into_result()?;
        let representations = schema::synthesize(&self.descriptor.name, &self.descriptor.description, &self.signature)?;
        Ok(ComponentConfig {
            kind: ComponentKind::Agent,
            descriptor: self.descriptor,
            version: Version::INITIAL,
            source: self.source,
            representations,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Hierarchical,
    Cooperative,
    Competitive,
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelationKind::Hierarchical => "hierarchical",
            RelationKind::Cooperative => "cooperative",
            RelationKind::Competitive => "competitive",
        })
    }
}

impl FromStr for RelationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hierarchical" => Ok(RelationKind::Hierarchical),
            "cooperative" => Ok(RelationKind::Cooperative),
            "competitive" => Ok(RelationKind::Competitive),
            _ => Err(Error::invalid(format!("unknown relation kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationEdge {
    pub from: ComponentName,
    pub to: ComponentName,
    pub kind: RelationKind,
}

impl RelationEdge {
    pub fn new(from: ComponentName, to: ComponentName, kind: RelationKind) -> Self {
        RelationEdge { from, to, kind }
    }
}

/// Edge set ordered by (from, to, kind). Hierarchical edges form a forest;
/// cooperative and competitive edges are unconstrained metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationStore {
    edges: BTreeSet<RelationEdge>,
}

impl RelationStore {
    pub fn edges(&self) -> impl Iterator<Item = &RelationEdge> {
        self.edges.iter()
    }

    fn hierarchical_parent(&self, node: &ComponentName) -> Option<&ComponentName> {
        self.edges
            .iter()
            .find(|e| e.kind == RelationKind::Hierarchical && &e.to == node)
            .map(|e| &e.from)
    }

    /// Checks forest constraints and inserts. Identical edges are a no-op.
    pub fn insert(&mut self, edge: RelationEdge) -> Result<()> {
        if self.edges.contains(&edge) {
            return Ok(());
        }
        if edge.from == edge.to {
            return Err(Error::invalid(format!("self relation on {}", edge.from)));
        }
        if edge.kind == RelationKind::Hierarchical {
            if let Some(p) = self.hierarchical_parent(&edge.to) {
                return Err(Error::invalid(format!("{} already has hierarchical parent {p}", edge.to)));
            }
            // walking up from `from` must not reach `to`
            let mut cur = Some(&edge.from);
            while let Some(node) = cur {
                if node == &edge.to {
                    return Err(Error::invalid(format!("hierarchical cycle through {} and {}", edge.from, edge.to)));
                }
                cur = self.hierarchical_parent(node);
            }
        }
        self.edges.insert(edge);
        Ok(())
    }

    pub fn remove_node(&mut self, node: &ComponentName) {
        self.edges.retain(|e| &e.from != node && &e.to != node);
    }

    pub fn incident(&self, node: &ComponentName, kind: Option<RelationKind>) -> Vec<RelationEdge> {
        self.edges
            .iter()
            .filter(|e| &e.from == node || &e.to == node)
            .filter(|e| kind.is_none_or(|k| e.kind == k))
            .cloned()
            .collect()
    }

    pub fn children(&self, node: &ComponentName) -> Vec<ComponentName> {
        self.edges
            .iter()
            .filter(|e| e.kind == RelationKind::Hierarchical && &e.from == node)
            .map(|e| e.to.clone())
            .collect()
    }
}

impl Tea {
    pub fn register_agent(&self, spec: AgentSpec) -> Result<ComponentConfig> {
        self.register_config(spec.into_config()?)
    }

    pub fn invoke_agent(&self, session: Option<&SessionHandle>, name: &str, task: &Value) -> Result<Value> {
        self.traced(session, ComponentKind::Agent, name, task.clone(), || {
            let live = self.live(ComponentKind::Agent, name)?;
            let sig = Signature::from_value(&live.config.representations.argument_schema)?;
            if !(sig.accepts_extra && sig.params.is_empty()) {
                let map = task
                    .as_map()
                    .ok_or_else(|| Error::invalid(format!("task for {name} must be a mapping")))?;
                sig.check(map)?;
            }
            let Runtime::Agent { policy, gate } = &live.runtime else {
                return Err(live.dormant_error());
            };
            let ctx = self.context(session);
            if policy.reentrant() {
                policy.invoke(&ctx, task)
            } else {
                let _serial = gate.lock().unwrap_or_else(|e| e.into_inner());
                policy.invoke(&ctx, task)
            }
        })
    }

    pub fn update_agent(&self, name: &str, spec: AgentSpec, level: BumpLevel) -> Result<ComponentConfig> {
        self.advance(ComponentKind::Agent, name, level, |_| spec.into_config())
    }

    pub fn copy_agent(&self, name: &str, new_name: &str) -> Result<ComponentConfig> {
        self.copy(ComponentKind::Agent, name, new_name)
    }

    pub fn unregister_agent(&self, name: &str) -> Result<()> {
        self.unregister(ComponentKind::Agent, name)
    }

    pub fn restore_agent(&self, name: &str, version: Version) -> Result<ComponentConfig> {
        self.restore(ComponentKind::Agent, name, version)
    }

    pub fn agent_contract(&self) -> ContractDocument {
        self.contract(ComponentKind::Agent)
    }

    pub fn add_relation(&self, edge: RelationEdge) -> Result<()> {
        let _g = self.lock_mutations();
        for end in [&edge.from, &edge.to] {
            if !self.is_active(ComponentKind::Agent, end.as_str()) {
                return Err(Error::not_found(format!("agent {end}")));
            }
        }
        write(&self.inner.relations).insert(edge)
    }

    /// Edges touching `name`, optionally filtered by kind, in (from, to,
    /// kind) order.
    pub fn query_relations(&self, name: &str, kind: Option<RelationKind>) -> Vec<RelationEdge> {
        match ComponentName::new(name) {
            Ok(n) => read(&self.inner.relations).incident(&n, kind),
            Err(_) => Vec::new(),
        }
    }

    pub fn children(&self, name: &str) -> Vec<ComponentName> {
        match ComponentName::new(name) {
            Ok(n) => read(&self.inner.relations).children(&n),
            Err(_) => Vec::new(),
        }
    }

    pub fn relations(&self) -> Vec<RelationEdge> {
        read(&self.inner.relations).edges().cloned().collect()
    }
}
