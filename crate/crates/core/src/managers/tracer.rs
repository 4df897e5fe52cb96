//! Execution traces: one record per observed step, numbered per session.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::clock::IdSource;
use crate::error::{Error, Result};
use crate::kernel::{read, write, Tea};
use crate::managers::memory::{lock, SessionData, SessionHandle, SessionStore};
use crate::types::{ComponentKind, Timestamp};
use crate::value::{canonical_string, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub kind: ComponentKind,
    pub name: String,
    pub args: Value,
    pub outcome: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub record_id: String,
    pub session_id: String,
    pub task_id: String,
    pub index: u64,
    pub observation: Value,
    pub invocation: Option<Invocation>,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceQuery {
    Session(String),
    Task(String),
    Record(String),
    Index { session_id: String, index: u64 },
}

impl SessionStore {
    pub fn trace(
        &self,
        h: &SessionHandle,
        ids: &IdSource,
        now: Timestamp,
        observation: Value,
        invocation: Option<Invocation>,
    ) -> Result<TraceRecord> {
        let s = self.open_session(h)?;
        let mut data = lock(&s);
        if !data.open {
            return Err(Error::lifecycle(format!("session {} is closed", h.session_id)));
        }
        let record_id = {
            let mut records = write(&self.records);
            let id = loop {
                let id = ids.next_id();
                if !records.contains_key(&id) {
                    break id;
                }
            };
            records.insert(id.clone(), h.session_id.clone());
            id
        };
        let rec = TraceRecord {
            record_id,
            session_id: data.handle.session_id.clone(),
            task_id: data.handle.task_id.clone(),
            index: data.traces.len() as u64 + 1,
            observation,
            invocation,
            at: now,
        };
        data.traces.push(rec.clone());
        Ok(rec)
    }

    /// Matching records in index order. Task queries span sessions and are
    /// ordered by (session_id, index).
    pub fn query(&self, q: &TraceQuery) -> Result<Vec<TraceRecord>> {
        let traces_of = |sid: &str| self.get(sid).map(|s| lock(&s).traces.clone()).unwrap_or_default();
        Ok(match q {
            TraceQuery::Session(sid) => traces_of(sid),
            TraceQuery::Index { session_id, index } => {
                traces_of(session_id).into_iter().filter(|r| r.index == *index).collect()
            }
            TraceQuery::Task(task) => {
                let sessions: Vec<_> = read(&self.sessions).values().cloned().collect();
                sessions
                    .iter()
                    .flat_map(|s| {
                        let d = lock(s);
                        d.traces.iter().filter(|r| r.task_id == *task).cloned().collect::<Vec<_>>()
                    })
                    .collect()
            }
            TraceQuery::Record(id) => {
                let sid = read(&self.records).get(id).cloned();
                let found = sid.and_then(|sid| traces_of(&sid).into_iter().find(|r| r.record_id == *id));
                vec![found.ok_or_else(|| Error::not_found(format!("trace record {id}")))?]
            }
        })
    }

    pub fn all_traces(&self) -> Vec<TraceRecord> {
        self.export().into_iter().flat_map(|d| d.traces).collect()
    }

    /// Merges records into the store. A session already present must agree
    /// on every record both sides hold; loaded-only sessions arrive sealed.
    pub fn merge_traces(&self, records: Vec<TraceRecord>) -> Result<()> {
        let mut by_session: BTreeMap<String, Vec<TraceRecord>> = BTreeMap::new();
        for r in records {
            by_session.entry(r.session_id.clone()).or_default().push(r);
        }
        let mut sessions = write(&self.sessions);
        let mut index = write(&self.records);
        // validate everything before touching the store
        for (sid, recs) in &mut by_session {
            recs.sort_by_key(|r| r.index);
            for (i, r) in recs.iter().enumerate() {
                if r.index != i as u64 + 1 {
                    return Err(Error::persistence(format!("session {sid}: trace indices not gapless")));
                }
                if index.get(&r.record_id).is_some_and(|owner| owner != sid) {
                    return Err(Error::persistence(format!("record {} claimed by two sessions", r.record_id)));
                }
            }
            if let Some(existing) = sessions.get(sid) {
                let d = lock(existing);
                if d.traces.iter().zip(recs.iter()).any(|(a, b)| a != b) {
                    return Err(Error::persistence(format!("session {sid}: loaded traces disagree with memory")));
                }
            }
        }
        for (sid, recs) in by_session {
            let entry = sessions.entry(sid.clone()).or_insert_with(|| {
                let handle = SessionHandle { session_id: sid.clone(), agent_name: String::new(), task_id: recs[0].task_id.clone() };
                Arc::new(Mutex::new(SessionData {
                    handle,
                    open: false,
                    opened_at: recs[0].at,
                    events: Vec::new(),
                    traces: Vec::new(),
                    summaries: Vec::new(),
                }))
            });
            let mut d = lock(entry);
            let have = d.traces.len();
            for r in recs.into_iter().skip(have) {
                index.insert(r.record_id.clone(), sid.clone());
                d.traces.push(r);
            }
        }
        Ok(())
    }
}

/// Newline-delimited canonical encoding, one record per line.
pub fn encode_traces(records: &[TraceRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&canonical_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn decode_traces(text: &str) -> Result<Vec<TraceRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::persistence(format!("trace line {}: {e}", i + 1)))
        })
        .collect()
}

impl Tea {
    pub fn trace_record(
        &self,
        h: &SessionHandle,
        observation: Value,
        invocation: Option<Invocation>,
    ) -> Result<TraceRecord> {
        self.inner.sessions.trace(h, &self.inner.ids, self.now(), observation, invocation)
    }

    pub fn trace_query(&self, q: &TraceQuery) -> Result<Vec<TraceRecord>> {
        self.inner.sessions.query(q)
    }

    /// Writes every trace record to `path` under an advisory lock with an
    /// atomic replace.
    pub fn trace_save(&self, path: &Path) -> Result<()> {
        let text = encode_traces(&self.inner.sessions.all_traces())?;
        crate::persist::write_atomic(path, text.as_bytes())
    }

    pub fn trace_load(&self, path: &Path) -> Result<()> {
        let text = crate::persist::read_text(path)?;
        self.inner.sessions.merge_traces(decode_traces(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::map_of;
    use std::collections::BTreeSet;

    #[test]
    fn record_and_query() {
        let tea = Tea::builder().seed(1).build();
        let h = tea.session_open("a", "task-1");
        let r1 = tea.trace_record(&h, Value::from("first"), None).unwrap();
        let r2 = tea.trace_record(&h, Value::from("second"), None).unwrap();
        let all = tea.trace_query(&TraceQuery::Session(h.session_id.clone())).unwrap();
        assert_eq!(all.iter().map(|r| r.index).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(tea.trace_query(&TraceQuery::Record(r2.record_id.clone())).unwrap(), vec![r2.clone()]);
        let by_idx = TraceQuery::Index { session_id: h.session_id.clone(), index: 1 };
        assert_eq!(tea.trace_query(&by_idx).unwrap(), vec![r1]);
        assert_eq!(tea.trace_query(&TraceQuery::Task("task-1".into())).unwrap().len(), 2);
        let err = tea.trace_query(&TraceQuery::Record("missing".into())).unwrap_err();
        assert_eq!(err.kind, crate::ErrorKind::NotFound);
        assert!(tea.trace_query(&TraceQuery::Session("missing".into())).unwrap().is_empty());
    }

    #[test]
    fn interleaved_sessions_partition() {
        let tea = Tea::new();
        let hs: Vec<_> = (0..3).map(|i| tea.session_open("a", &format!("t{i}"))).collect();
        for round in 0..10 {
            for h in &hs {
                tea.trace_record(h, map_of([("round", round as i64)]), None).unwrap();
            }
        }
        let mut seen = BTreeSet::new();
        for h in &hs {
            let recs = tea.trace_query(&TraceQuery::Session(h.session_id.clone())).unwrap();
            assert_eq!(recs.len(), 10);
            assert!(recs.iter().all(|r| r.session_id == h.session_id));
            for r in recs {
                assert!(seen.insert(r.record_id));
            }
        }
        assert_eq!(seen.len(), 30);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.log");
        let tea = Tea::new();
        let h = tea.session_open("a", "t");
        tea.trace_record(&h, Value::from(1.5), None).unwrap();
        tea.trace_record(&h, Value::Null, None).unwrap();
        tea.trace_save(&path).unwrap();

        let fresh = Tea::new();
        fresh.trace_load(&path).unwrap();
        assert_eq!(fresh.sessions().all_traces(), tea.sessions().all_traces());
        // loading the same file again is a no-op
        fresh.trace_load(&path).unwrap();
        assert_eq!(fresh.sessions().all_traces().len(), 2);

        let err = fresh.trace_load(&dir.path().join("absent.log")).unwrap_err();
        assert_eq!(err.kind, crate::ErrorKind::PersistenceError);
    }
}
