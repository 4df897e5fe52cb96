//! On-disk state: canonical manifests under one data directory.
//!
//! Every file is written to a temporary sibling, fsynced and renamed into
//! place, so a reader sees either the old or the new complete file. Whole
//! directory saves and loads hold an advisory lock on `.tea.lock`.

use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind as IoKind, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agent::{RelationEdge, RelationStore};
use crate::error::{Error, Result};
use crate::evolution::EvolutionRun;
use crate::kernel::{write, Tea};
use crate::managers::memory::{check_session, MemoryEvent, SessionData, SessionHandle, Summary};
use crate::managers::tracer::{decode_traces, encode_traces};
use crate::transform::TransformRecord;
use crate::types::{ComponentKind, ComponentName, Timestamp};
use crate::value::canonical_string;
use crate::version::{VersionManager, VersionRecord};

pub const DATA_DIR_ENV: &str = "TEA_DATA_DIR";
pub const LOCK_FILE: &str = ".tea.lock";
pub const RELATIONS_FILE: &str = "relations.manifest";
pub const TRANSFORMS_FILE: &str = "transforms.manifest";
pub const EVOLUTION_FILE: &str = "evolution.manifest";
pub const SESSIONS_FILE: &str = "sessions.manifest";
pub const TRACES_DIR: &str = "traces";
pub const MEMORY_DIR: &str = "memory";

pub fn data_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::persistence(format!("{}: {e}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == IoKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path, e)),
    }
}

static TEMP_SEQ: AtomicU64 = AtomicU64::new(0);

/// Temp file + fsync + rename. Callers provide their own exclusion.
fn replace_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let file_name = path.file_name().ok_or_else(|| Error::persistence(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.{}.{}.tmp",
        file_name.to_string_lossy(),
        std::process::id(),
        TEMP_SEQ.fetch_add(1, Ordering::Relaxed)
    ));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        // make the rename itself durable where the platform allows it
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
        Ok(())
    })();
    result.map_err(|e: std::io::Error| {
        let _ = fs::remove_file(&tmp);
        io_err(path, e)
    })
}

fn lock_file(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    OpenOptions::new()
        .create(true)
        .truncate(false)
        .read(true)
        .write(true)
        .open(path)
        .map_err(|e| io_err(path, e))
}

/// Atomically replaces `path`, serialized against other writers of the same
/// path (threads or processes) by an advisory lock on `<path>.lock`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut lock_path = path.as_os_str().to_owned();
    lock_path.push(".lock");
    let lock = lock_file(Path::new(&lock_path))?;
    lock.lock().map_err(|e| io_err(path, e))?;
    let out = replace_file(path, bytes);
    let _ = lock.unlock();
    out
}

/// Canonical manifest text: sorted keys, compact, trailing newline.
pub fn manifest_text<T: Serialize + ?Sized>(t: &T) -> Result<String> {
    let mut s = canonical_string(t)?;
    s.push('\n');
    Ok(s)
}

fn parse_manifest<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::persistence(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct History {
    name: ComponentName,
    records: Vec<VersionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KindManifest {
    kind: ComponentKind,
    histories: Vec<History>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SessionEntry {
    handle: SessionHandle,
    open: bool,
    opened_at: Timestamp,
    summaries: Vec<Summary>,
}

/// Everything a save writes, as file name -> contents.
struct Files(Vec<(PathBuf, String)>);

fn file_safe(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Tea {
    fn kind_manifest(&self, kind: ComponentKind) -> KindManifest {
        let histories = self
            .versions()
            .export(kind)
            .into_iter()
            .map(|(name, records)| History { name, records })
            .collect();
        KindManifest { kind, histories }
    }

    fn render_files(&self) -> Result<Files> {
        let mut files = Vec::new();
        for kind in ComponentKind::ALL {
            files.push((PathBuf::from(kind.manifest_file()), manifest_text(&self.kind_manifest(kind))?));
        }
        files.push((PathBuf::from(RELATIONS_FILE), manifest_text(&self.relations())?));
        files.push((PathBuf::from(TRANSFORMS_FILE), manifest_text(&self.transforms())?));
        files.push((PathBuf::from(EVOLUTION_FILE), manifest_text(&self.evolution_runs())?));
        let sessions = self.sessions().export();
        let mut entries = Vec::with_capacity(sessions.len());
        for s in sessions {
            let sid = &s.handle.session_id;
            if !file_safe(sid) {
                return Err(Error::persistence(format!("session id {sid:?} cannot name a file")));
            }
            files.push((Path::new(TRACES_DIR).join(format!("{sid}.log")), encode_traces(&s.traces)?));
            let mut events = String::new();
            for e in &s.events {
                events.push_str(&canonical_string(e)?);
                events.push('\n');
            }
            files.push((Path::new(MEMORY_DIR).join(format!("{sid}.log")), events));
            entries.push(SessionEntry { handle: s.handle, open: s.open, opened_at: s.opened_at, summaries: s.summaries });
        }
        files.push((PathBuf::from(SESSIONS_FILE), manifest_text(&entries)?));
        Ok(Files(files))
    }

    /// Writes the whole kernel state under `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let lock = lock_file(&dir.join(LOCK_FILE))?;
        lock.lock().map_err(|e| io_err(dir, e))?;
        let out = (|| {
            let files = {
                let _g = self.lock_mutations();
                self.render_files()?
            };
            for sub in [TRACES_DIR, MEMORY_DIR] {
                let keep: Vec<&PathBuf> = files.0.iter().map(|(p, _)| p).filter(|p| p.starts_with(sub)).collect();
                remove_stale(&dir.join(sub), |name| keep.iter().any(|p| p.file_name() == Some(name.as_ref())))?;
            }
            for (rel, text) in &files.0 {
                replace_file(&dir.join(rel), text.as_bytes())?;
            }
            Ok(())
        })();
        let _ = lock.unlock();
        out
    }

    /// Replaces the kernel state with what `dir` holds. Missing manifests
    /// count as empty; nothing changes unless every file parses and checks.
    pub fn load_dir(&self, dir: &Path) -> Result<()> {
        if !dir.is_dir() {
            return Err(Error::persistence(format!("{} is not a directory", dir.display())));
        }
        let lock = lock_file(&dir.join(LOCK_FILE))?;
        lock.lock_shared().map_err(|e| io_err(dir, e))?;
        let out = self.load_locked(dir);
        let _ = lock.unlock();
        out
    }

    fn load_locked(&self, dir: &Path) -> Result<()> {
        let read_or = |name: &str, empty: &str| -> Result<(PathBuf, String)> {
            let path = dir.join(name);
            let text = read_optional(&path)?.unwrap_or_else(|| empty.to_owned());
            Ok((path, text))
        };
        let mut kinds = Vec::new();
        for kind in ComponentKind::ALL {
            let (path, text) = read_or(kind.manifest_file(), "")?;
            let m: KindManifest = if text.is_empty() {
                KindManifest { kind, histories: Vec::new() }
            } else {
                parse_manifest(&path, &text)?
            };
            if m.kind != kind {
                return Err(Error::persistence(format!("{} holds {} records", path.display(), m.kind)));
            }
            kinds.push(m);
        }
        let (p, t) = read_or(RELATIONS_FILE, "[]")?;
        let edges: Vec<RelationEdge> = parse_manifest(&p, &t)?;
        let (p, t) = read_or(TRANSFORMS_FILE, "[]")?;
        let transforms: Vec<TransformRecord> = parse_manifest(&p, &t)?;
        let (p, t) = read_or(EVOLUTION_FILE, "[]")?;
        let runs: Vec<EvolutionRun> = parse_manifest(&p, &t)?;
        let (p, t) = read_or(SESSIONS_FILE, "[]")?;
        let entries: Vec<SessionEntry> = parse_manifest(&p, &t)?;

        let mut sessions = Vec::with_capacity(entries.len());
        for e in entries {
            let sid = e.handle.session_id.clone();
            if !file_safe(&sid) {
                return Err(Error::persistence(format!("session id {sid:?} cannot name a file")));
            }
            let traces = match read_optional(&dir.join(TRACES_DIR).join(format!("{sid}.log")))? {
                Some(t) => decode_traces(&t)?,
                None => Vec::new(),
            };
            let mut events = Vec::new();
            let mpath = dir.join(MEMORY_DIR).join(format!("{sid}.log"));
            for line in read_optional(&mpath)?.unwrap_or_default().lines().filter(|l| !l.is_empty()) {
                events.push(parse_manifest::<MemoryEvent>(&mpath, line)?);
            }
            let data = SessionData { handle: e.handle, open: e.open, opened_at: e.opened_at, events, traces, summaries: e.summaries };
            check_session(&data)?;
            sessions.push(data);
        }

        let mut relations = RelationStore::default();
        for e in edges {
            relations.insert(e).map_err(|e| Error::persistence(format!("relations: {}", e.detail)))?;
        }

        // dry run against a scratch manager so a bad history changes nothing
        let scratch = VersionManager::new(self.inner.clock.clone());
        let histories: Vec<(ComponentKind, Vec<(ComponentName, Vec<VersionRecord>)>)> = kinds
            .into_iter()
            .map(|m| (m.kind, m.histories.into_iter().map(|h| (h.name, h.records)).collect()))
            .collect();
        for (kind, h) in &histories {
            scratch.import(*kind, h.clone())?;
        }

        let g = self.lock_mutations();
        self.clear_locked(&g);
        for (kind, h) in histories {
            self.versions().import(kind, h)?;
            for name in self.versions().names(kind) {
                if let Ok(latest) = self.versions().latest(&name, kind) {
                    self.activate_locked(&g, latest.config)?;
                }
            }
        }
        *write(&self.inner.relations) = relations;
        self.replace_transforms(&g, transforms);
        self.replace_evolution(&g, runs);
        self.sessions().replace(sessions)?;
        Ok(())
    }

    /// Writes one kind's manifest under `dir`.
    pub fn save_kind(&self, dir: &Path, kind: ComponentKind) -> Result<()> {
        let text = {
            let _g = self.lock_mutations();
            manifest_text(&self.kind_manifest(kind))?
        };
        write_atomic(&dir.join(kind.manifest_file()), text.as_bytes())
    }

    /// Replaces one kind's histories and active registry from its manifest.
    pub fn load_kind(&self, dir: &Path, kind: ComponentKind) -> Result<()> {
        let path = dir.join(kind.manifest_file());
        let m: KindManifest = parse_manifest(&path, &read_text(&path)?)?;
        if m.kind != kind {
            return Err(Error::persistence(format!("{} holds {} records", path.display(), m.kind)));
        }
        let histories: Vec<(ComponentName, Vec<VersionRecord>)> = m.histories.into_iter().map(|h| (h.name, h.records)).collect();
        VersionManager::new(self.inner.clock.clone()).import(kind, histories.clone())?;
        let g = self.lock_mutations();
        self.clear_kind_locked(&g, kind);
        self.versions().import(kind, histories)?;
        for name in self.versions().names(kind) {
            if let Ok(latest) = self.versions().latest(&name, kind) {
                self.activate_locked(&g, latest.config)?;
            }
        }
        Ok(())
    }

    /// Canonical text of every registry, version history, relation and
    /// index entry. Two kernels with equal snapshots expose equal
    /// component state.
    pub fn snapshot(&self) -> Result<String> {
        let _g = self.lock_mutations();
        let mut out = String::new();
        for kind in ComponentKind::ALL {
            out.push_str(&manifest_text(&self.kind_manifest(kind))?);
            let active: Vec<(ComponentName, String)> = self
                .list(kind)
                .into_iter()
                .filter_map(|n| self.info(kind, n.as_str()).ok().map(|c| (n, c.version.to_string())))
                .collect();
            out.push_str(&manifest_text(&active)?);
            for (name, entry) in self.index().entries(kind) {
                out.push_str(&manifest_text(&(name, entry.text, entry.category, entry.vector))?);
            }
        }
        out.push_str(&manifest_text(&self.relations())?);
        Ok(out)
    }
}

fn remove_stale(dir: &Path, keep: impl Fn(&str) -> bool) -> Result<()> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == IoKind::NotFound => return Ok(()),
        Err(e) => return Err(io_err(dir, e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".log") && !keep(&name) {
            fs::remove_file(entry.path()).map_err(|e| io_err(&entry.path(), e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::RelationKind;
    use crate::builtins::{add_tool_spec, counter_spec, echo_agent_spec};
    use crate::types::Version;
    use crate::value::{Map, Value};
    use crate::version::LifecycleState;

    fn populated() -> Tea {
        let tea = Tea::builder().seed(3).build();
        tea.register_tool(add_tool_spec("add")).unwrap();
        tea.register_environment(counter_spec("counter")).unwrap();
        tea.register_agent(echo_agent_spec("planner")).unwrap();
        tea.register_agent(echo_agent_spec("worker")).unwrap();
        tea.add_relation(RelationEdge::new(
            ComponentName::new("planner").unwrap(),
            ComponentName::new("worker").unwrap(),
            RelationKind::Hierarchical,
        ))
        .unwrap();
        tea.a2t("worker").unwrap();
        tea.copy_tool("add", "add2").unwrap();
        tea.set_lifecycle(ComponentKind::Tool, "add2", Version::INITIAL, LifecycleState::Deprecated).unwrap();
        let h = tea.session_open("planner", "t1");
        tea.memory_record(&h, "note", Value::from(0.1)).unwrap();
        tea.invoke_action(Some(&h), "counter", "increment", &Map::new()).unwrap();
        tea
    }

    #[test]
    fn save_load_save_is_fixpoint() {
        let dir = tempfile::tempdir().unwrap();
        let tea = populated();
        tea.save_dir(dir.path()).unwrap();
        let first: Vec<_> = read_all(dir.path());
        let fresh = Tea::new();
        fresh.load_dir(dir.path()).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        fresh.save_dir(dir2.path()).unwrap();
        assert_eq!(first, read_all(dir2.path()));
        assert_eq!(fresh.snapshot().unwrap(), tea.snapshot().unwrap());
        assert!(first.iter().all(|(_, t)| t.is_empty() || t.ends_with('\n')));
    }

    fn read_all(dir: &Path) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for sub in ["", TRACES_DIR, MEMORY_DIR] {
            let Ok(rd) = fs::read_dir(dir.join(sub)) else { continue };
            let mut names: Vec<_> = rd.map(|e| e.unwrap().path()).filter(|p| p.is_file()).collect();
            names.sort();
            for p in names {
                let n = p.file_name().unwrap().to_string_lossy().into_owned();
                if n != LOCK_FILE {
                    out.push((format!("{sub}/{n}"), fs::read_to_string(&p).unwrap()));
                }
            }
        }
        out
    }

    #[test]
    fn corrupt_manifest_leaves_state() {
        let dir = tempfile::tempdir().unwrap();
        populated().save_dir(dir.path()).unwrap();
        fs::write(dir.path().join("tools.manifest"), "{\"kind\":\"tool\",\"histories\":[").unwrap();
        let tea = Tea::new();
        tea.register_tool(add_tool_spec("mine")).unwrap();
        let before = tea.snapshot().unwrap();
        let err = tea.load_dir(dir.path()).unwrap_err();
        assert_eq!(err.kind, crate::ErrorKind::PersistenceError);
        assert_eq!(tea.snapshot().unwrap(), before);
    }

    #[test]
    fn missing_dir_is_persistence_error() {
        let err = Tea::new().load_dir(Path::new("/nonexistent/tea/state")).unwrap_err();
        assert_eq!(err.kind, crate::ErrorKind::PersistenceError);
    }

    #[test]
    fn concurrent_atomic_writers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.manifest");
        let a = "a".repeat(100_000) + "\n";
        let b = "b".repeat(50_000) + "\n";
        std::thread::scope(|s| {
            for i in 0..8 {
                let (path, text) = (&path, if i % 2 == 0 { &a } else { &b });
                s.spawn(move || {
                    for _ in 0..10 {
                        write_atomic(path, text.as_bytes()).unwrap();
                    }
                });
            }
        });
        let got = fs::read_to_string(&path).unwrap();
        assert!(got == a || got == b);
    }
}
