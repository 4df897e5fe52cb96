//! Unified version history, lifecycle state and historical lookup for every
//! component kind.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::types::{not_found_version, ComponentConfig, ComponentKind, ComponentName, Timestamp, Version};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifecycleState {
    Active,
    Deprecated,
    Archived,
}

impl LifecycleState {
    /// Legal moves are one-way: active→deprecated, deprecated→archived,
    /// active→archived.
    pub fn can_become(self, next: LifecycleState) -> bool {
        use LifecycleState::*;
        matches!((self, next), (Active, Deprecated) | (Deprecated, Archived) | (Active, Archived))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LifecycleState::Active => "active",
            LifecycleState::Deprecated => "deprecated",
            LifecycleState::Archived => "archived",
        }
    }
}

impl fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LifecycleState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active" => Ok(LifecycleState::Active),
            "deprecated" => Ok(LifecycleState::Deprecated),
            "archived" => Ok(LifecycleState::Archived),
            _ => Err(Error::invalid(format!("unknown lifecycle state {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionRecord {
    pub name: ComponentName,
    pub kind: ComponentKind,
    pub version: Version,
    pub state: LifecycleState,
    pub description: String,
    pub created_at: Timestamp,
    pub config: ComponentConfig,
}

impl VersionRecord {
    /// Deprecated records still resolve but carry this warning.
    pub fn is_deprecated(&self) -> bool {
        self.state == LifecycleState::Deprecated
    }
}

type HistoryKey = (ComponentKind, ComponentName);

/// Shared history store. Every operation holds one internal lock for its
/// whole duration, so operations are linearizable.
pub struct VersionManager {
    clock: Arc<dyn Clock>,
    store: Mutex<BTreeMap<HistoryKey, Vec<VersionRecord>>>,
}

impl fmt::Debug for VersionManager {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VersionManager").finish_non_exhaustive()
    }
}

impl VersionManager {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        VersionManager { clock, store: Mutex::new(BTreeMap::new()) }
    }

    fn store(&self) -> MutexGuard<'_, BTreeMap<HistoryKey, Vec<VersionRecord>>> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Appends `cfg` to its (name, kind) history in the active state.
    pub fn record(&self, cfg: &ComponentConfig) -> Result<VersionRecord> {
        let name = ComponentName::new(cfg.descriptor.name.clone())?;
        let mut store = self.store();
        let history = store.entry((cfg.kind, name.clone())).or_default();
        let pos = match history.binary_search_by(|r| r.version.cmp(&cfg.version)) {
            Ok(_) => {
                return Err(Error::conflict(format!("{} {} version {}", cfg.kind, name, cfg.version)));
            }
            Err(pos) => pos,
        };
        let floor = history.iter().map(|r| r.created_at).max().unwrap_or(0);
        let rec = VersionRecord {
            name,
            kind: cfg.kind,
            version: cfg.version,
            state: LifecycleState::Active,
            description: cfg.descriptor.description.clone(),
            created_at: self.clock.now().max(floor),
            config: cfg.clone(),
        };
        history.insert(pos, rec.clone());
        Ok(rec)
    }

    pub fn history(&self, name: &ComponentName, kind: ComponentKind) -> Vec<VersionRecord> {
        self.store().get(&(kind, name.clone())).cloned().unwrap_or_default()
    }

    /// Highest non-archived version; deprecated versions still qualify.
    pub fn latest(&self, name: &ComponentName, kind: ComponentKind) -> Result<VersionRecord> {
        self.store()
            .get(&(kind, name.clone()))
            .and_then(|h| h.iter().rev().find(|r| r.state != LifecycleState::Archived).cloned())
            .ok_or_else(|| Error::not_found(format!("{kind} {name} (no resolvable version)")))
    }

    /// Highest recorded version regardless of state.
    pub fn max_version(&self, name: &ComponentName, kind: ComponentKind) -> Option<Version> {
        self.store().get(&(kind, name.clone())).and_then(|h| h.last()).map(|r| r.version)
    }

    pub fn set_lifecycle(
        &self,
        name: &ComponentName,
        kind: ComponentKind,
        version: Version,
        next: LifecycleState,
    ) -> Result<VersionRecord> {
        let mut store = self.store();
        let rec = store
            .get_mut(&(kind, name.clone()))
            .and_then(|h| h.iter_mut().find(|r| r.version == version))
            .ok_or_else(|| not_found_version(name, version))?;
        if !rec.state.can_become(next) {
            return Err(Error::lifecycle(format!(
                "{kind} {name} {version}: illegal transition {} -> {next}",
                rec.state
            )));
        }
        rec.state = next;
        Ok(rec.clone())
    }

    pub fn lookup(&self, name: &ComponentName, kind: ComponentKind, version: Version) -> Result<ComponentConfig> {
        self.record_of(name, kind, version).map(|r| r.config)
    }

    pub fn record_of(&self, name: &ComponentName, kind: ComponentKind, version: Version) -> Result<VersionRecord> {
        self.store()
            .get(&(kind, name.clone()))
            .and_then(|h| h.iter().find(|r| r.version == version).cloned())
            .ok_or_else(|| not_found_version(name, version))
    }

    /// Drops the whole (name, kind) history.
    pub fn remove(&self, name: &ComponentName, kind: ComponentKind) -> Vec<VersionRecord> {
        self.store().remove(&(kind, name.clone())).unwrap_or_default()
    }

    /// All histories of one kind, ordered by name.
    pub fn export(&self, kind: ComponentKind) -> Vec<(ComponentName, Vec<VersionRecord>)> {
        self.store()
            .iter()
            .filter(|((k, _), _)| *k == kind)
            .map(|((_, n), h)| (n.clone(), h.clone()))
            .collect()
    }

    /// Replaces all histories of `kind` with previously exported records.
    pub fn import(&self, kind: ComponentKind, histories: Vec<(ComponentName, Vec<VersionRecord>)>) -> Result<()> {
        let mut fresh = Vec::with_capacity(histories.len());
        for (name, mut records) in histories {
            records.sort_by(|a, b| a.version.cmp(&b.version));
            if records.windows(2).any(|w| w[0].version == w[1].version) {
                return Err(Error::persistence(format!("duplicate versions in history of {name}")));
            }
            if records.iter().any(|r| r.kind != kind || r.name != name || r.config.version != r.version) {
                return Err(Error::persistence(format!("inconsistent history records for {name}")));
            }
            fresh.push(((kind, name), records));
        }
        let mut store = self.store();
        store.retain(|(k, _), _| *k != kind);
        store.extend(fresh);
        Ok(())
    }

    pub fn names(&self, kind: ComponentKind) -> Vec<ComponentName> {
        self.store().keys().filter(|(k, _)| *k == kind).map(|(_, n)| n.clone()).collect()
    }
}
