//! Sessions and their event-based memory.
//!
//! Each session owns its own lock, so appends to different sessions never
//! contend. Every `every`-th event hands the window of events since the
//! previous summary to the summary hook.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};

use crate::clock::IdSource;
use crate::error::{Error, Result};
use crate::kernel::{read, write, Tea};
use crate::managers::tracer::TraceRecord;
use crate::types::{ComponentConfig, ComponentKind, Descriptor, Representations, Timestamp, Version};
use crate::value::{map_of, Value};

pub const SUMMARY_INTERVAL: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub agent_name: String,
    pub task_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEvent {
    pub session: SessionHandle,
    pub step: u64,
    pub kind: String,
    pub payload: Value,
    pub at: Timestamp,
}

pub trait SummaryHook: Send + Sync {
    fn summarize(&self, session: &SessionHandle, window: &[MemoryEvent]) -> Value;
}

/// Counts events per kind: `"act=2 observe=18"`.
#[derive(Debug, Default, Clone, Copy)]
pub struct KindCounts;

impl SummaryHook for KindCounts {
    fn summarize(&self, _session: &SessionHandle, window: &[MemoryEvent]) -> Value {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for e in window {
            *counts.entry(e.kind.as_str()).or_default() += 1;
        }
        let parts: Vec<String> = counts.iter().map(|(k, n)| format!("{k}={n}")).collect();
        Value::from(parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Step of the last event in the summarized window.
    pub through_step: u64,
    pub content: Value,
}

/// Everything recorded under one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionData {
    pub handle: SessionHandle,
    pub open: bool,
    pub opened_at: Timestamp,
    pub events: Vec<MemoryEvent>,
    pub traces: Vec<TraceRecord>,
    pub summaries: Vec<Summary>,
}

pub struct SessionStore {
    pub(crate) sessions: RwLock<BTreeMap<String, Arc<Mutex<SessionData>>>>,
    /// record_id -> session_id
    pub(crate) records: RwLock<BTreeMap<String, String>>,
    hook: Arc<dyn SummaryHook>,
    every: usize,
}

impl fmt::Debug for SessionStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionStore").field("sessions", &read(&self.sessions).len()).finish()
    }
}

impl Default for SessionStore {
    fn default() -> Self {
        SessionStore::new()
    }
}

pub(crate) fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl SessionStore {
    pub fn new() -> Self {
        SessionStore::with_hook(Arc::new(KindCounts), SUMMARY_INTERVAL)
    }

    pub fn with_hook(hook: Arc<dyn SummaryHook>, every: usize) -> Self {
        SessionStore {
            sessions: RwLock::new(BTreeMap::new()),
            records: RwLock::new(BTreeMap::new()),
            hook,
            every: every.max(1),
        }
    }

    pub fn open(&self, ids: &IdSource, now: Timestamp, agent_name: &str, task_id: &str) -> SessionHandle {
        let mut sessions = write(&self.sessions);
        let handle = loop {
            let id = ids.next_id();
            if !sessions.contains_key(&id) {
                break SessionHandle { session_id: id, agent_name: agent_name.to_owned(), task_id: task_id.to_owned() };
            }
        };
        let data = SessionData {
            handle: handle.clone(),
            open: true,
            opened_at: now,
            events: Vec::new(),
            traces: Vec::new(),
            summaries: Vec::new(),
        };
        sessions.insert(handle.session_id.clone(), Arc::new(Mutex::new(data)));
        handle
    }

    pub(crate) fn get(&self, session_id: &str) -> Option<Arc<Mutex<SessionData>>> {
        read(&self.sessions).get(session_id).cloned()
    }

    /// The session's data if it exists and is still open.
    pub(crate) fn open_session(&self, h: &SessionHandle) -> Result<Arc<Mutex<SessionData>>> {
        let s = self
            .get(&h.session_id)
            .ok_or_else(|| Error::lifecycle(format!("session {} is not open", h.session_id)))?;
        if !lock(&s).open {
            return Err(Error::lifecycle(format!("session {} is closed", h.session_id)));
        }
        Ok(s)
    }

    pub fn ensure_open(&self, h: &SessionHandle) -> Result<()> {
        self.open_session(h).map(|_| ())
    }

    pub fn is_open(&self, session_id: &str) -> bool {
        self.get(session_id).is_some_and(|s| lock(&s).open)
    }

    /// Seals a session. Closing twice is a lifecycle violation.
    pub fn close(&self, h: &SessionHandle) -> Result<()> {
        let s = self.open_session(h)?;
        lock(&s).open = false;
        Ok(())
    }

    pub fn handle(&self, session_id: &str) -> Option<SessionHandle> {
        self.get(session_id).map(|s| lock(&s).handle.clone())
    }

    pub fn record(&self, h: &SessionHandle, now: Timestamp, kind: &str, payload: Value) -> Result<MemoryEvent> {
        let s = self.open_session(h)?;
        let mut data = lock(&s);
        if !data.open {
            return Err(Error::lifecycle(format!("session {} is closed", h.session_id)));
        }
        let event = MemoryEvent {
            session: data.handle.clone(),
            step: data.events.len() as u64 + 1,
            kind: kind.to_owned(),
            payload,
            at: now,
        };
        data.events.push(event.clone());
        if data.events.len() % self.every == 0 {
            let window = &data.events[data.events.len() - self.every..];
            let content = self.hook.summarize(&data.handle, window);
            data.summaries.push(Summary { through_step: event.step, content });
        }
        Ok(event)
    }

    /// Events of one session in step order; unknown sessions have none.
    pub fn events(&self, session_id: &str) -> Vec<MemoryEvent> {
        self.get(session_id).map(|s| lock(&s).events.clone()).unwrap_or_default()
    }

    pub fn summaries(&self, session_id: &str) -> Vec<Summary> {
        self.get(session_id).map(|s| lock(&s).summaries.clone()).unwrap_or_default()
    }

    /// Session ids in ascending order.
    pub fn session_ids(&self) -> Vec<String> {
        read(&self.sessions).keys().cloned().collect()
    }

    pub fn export(&self) -> Vec<SessionData> {
        let sessions: Vec<_> = read(&self.sessions).values().cloned().collect();
        sessions.iter().map(|s| lock(s).clone()).collect()
    }

    /// Replaces all sessions with `data` (used by state load).
    pub fn replace(&self, data: Vec<SessionData>) -> Result<()> {
        let mut sessions = BTreeMap::new();
        let mut records = BTreeMap::new();
        for d in data {
            check_session(&d)?;
            for t in &d.traces {
                if records.insert(t.record_id.clone(), d.handle.session_id.clone()).is_some() {
                    return Err(Error::persistence(format!("duplicate trace record {}", t.record_id)));
                }
            }
            let id = d.handle.session_id.clone();
            if sessions.insert(id.clone(), Arc::new(Mutex::new(d))).is_some() {
                return Err(Error::persistence(format!("duplicate session {id}")));
            }
        }
        *write(&self.sessions) = sessions;
        *write(&self.records) = records;
        Ok(())
    }
}

/// Gapless numbering and ownership checks for persisted session data.
pub(crate) fn check_session(d: &SessionData) -> Result<()> {
    let sid = &d.handle.session_id;
    for (i, e) in d.events.iter().enumerate() {
        if e.step != i as u64 + 1 || e.session.session_id != *sid {
            return Err(Error::persistence(format!("session {sid}: bad event at position {}", i + 1)));
        }
    }
    for (i, t) in d.traces.iter().enumerate() {
        if t.index != i as u64 + 1 || t.session_id != *sid {
            return Err(Error::persistence(format!("session {sid}: bad trace at position {}", i + 1)));
        }
    }
    Ok(())
}

pub fn memory_representations(name: &str, description: &str) -> Representations {
    Representations {
        call_schema: map_of([("description", description), ("kind", "memory"), ("name", name)]),
        text_description: format!("{name}: {description}\nContent: free-form text\n"),
        argument_schema: Value::map(),
    }
}

impl Tea {
    pub fn session_open(&self, agent_name: &str, task_id: &str) -> SessionHandle {
        self.inner.sessions.open(&self.inner.ids, self.now(), agent_name, task_id)
    }

    pub fn session_close(&self, h: &SessionHandle) -> Result<()> {
        self.inner.sessions.close(h)
    }

    pub fn memory_record(&self, h: &SessionHandle, kind: &str, payload: Value) -> Result<MemoryEvent> {
        self.inner.sessions.record(h, self.now(), kind, payload)
    }

    pub fn memory_events(&self, session_id: &str) -> Vec<MemoryEvent> {
        self.inner.sessions.events(session_id)
    }

    /// Registers a memory component: a versioned free-form text payload,
    /// such as a stored solution, that evolution can target.
    pub fn register_memory(&self, descriptor: Descriptor, content: &str) -> Result<ComponentConfig> {
        let representations = memory_representations(&descriptor.name, &descriptor.description);
        self.register_config(ComponentConfig {
            kind: ComponentKind::Memory,
            descriptor,
            version: Version::INITIAL,
            source: content.to_owned(),
            representations,
        })
    }

    pub fn update_memory(&self, name: &str, content: &str) -> Result<ComponentConfig> {
        self.advance(ComponentKind::Memory, name, crate::types::BumpLevel::Patch, |cur| {
            let mut next = cur.clone();
            next.source = content.to_owned();
            Ok(next)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;
    use std::thread;

    #[test]
    fn open_close_record() {
        let tea = Tea::builder().seed(7).build();
        let a = tea.session_open("planner", "t1");
        let b = tea.session_open("planner", "t1");
        assert_ne!(a.session_id, b.session_id);
        assert_eq!(a.session_id.len(), 32);
        for i in 0..3 {
            assert_eq!(tea.memory_record(&a, "step", Value::from(i as i64)).unwrap().step, i + 1);
        }
        tea.session_close(&a).unwrap();
        let err = tea.memory_record(&a, "step", Value::Null).unwrap_err();
        assert_eq!(err.kind, crate::ErrorKind::LifecycleViolation);
        assert_eq!(tea.session_close(&a).unwrap_err().kind, crate::ErrorKind::LifecycleViolation);
        assert!(tea.memory_events("nope").is_empty());
        assert_eq!(tea.memory_events(&a.session_id).len(), 3);
    }

    #[test]
    fn concurrent_opens_are_distinct() {
        let tea = Tea::new();
        let ids: Vec<String> = thread::scope(|s| {
            let hs: Vec<_> = (0..100).map(|i| {
                let tea = &tea;
                s.spawn(move || tea.session_open("a", &format!("t{i}")).session_id)
            }).collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(ids.iter().collect::<BTreeSet<_>>().len(), 100);
    }

    #[test]
    fn interleaved_sessions_partition() {
        let tea = Tea::new();
        let handles: Vec<_> = (0..4).map(|i| tea.session_open("a", &format!("t{i}"))).collect();
        thread::scope(|s| {
            for h in &handles {
                let tea = &tea;
                s.spawn(move || {
                    for _ in 0..50 {
                        tea.memory_record(h, "obs", map_of([("owner", h.session_id.as_str())])).unwrap();
                    }
                });
            }
        });
        let mut total = 0;
        for h in &handles {
            let evs = tea.memory_events(&h.session_id);
            total += evs.len();
            assert!(evs.iter().enumerate().all(|(i, e)| e.step == i as u64 + 1));
            assert!(evs.iter().all(|e| e.payload.get("owner").and_then(Value::as_str) == Some(h.session_id.as_str())));
        }
        assert_eq!(total, 200);
    }

    #[test]
    fn summary_hook_fires_every_interval() {
        let tea = Tea::new();
        let h = tea.session_open("a", "t");
        for i in 0..45 {
            tea.memory_record(&h, if i % 4 == 0 { "act" } else { "observe" }, Value::Null).unwrap();
        }
        let sums = tea.sessions().summaries(&h.session_id);
        assert_eq!(sums.len(), 2);
        assert_eq!(sums[0].through_step, 20);
        // steps 1..=20: kinds act at i=0,4,8,12,16
        assert_eq!(sums[0].content, Value::from("act=5 observe=15"));
        assert_eq!(sums[1].through_step, 40);
    }

    #[test]
    fn memory_components_version() {
        let tea = Tea::new();
        tea.register_memory(Descriptor::new("notes.solution", "a stored solution"), "v1").unwrap();
        let next = tea.update_memory("notes.solution", "v2").unwrap();
        assert_eq!(next.version.to_string(), "1.0.1");
        let old = tea.lookup(ComponentKind::Memory, "notes.solution", Version::INITIAL).unwrap();
        assert_eq!(old.source, "v1");
    }
}
