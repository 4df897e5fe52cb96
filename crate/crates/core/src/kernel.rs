//! The runtime kernel: one shared service hosting the tool, environment,
//! agent, prompt and memory registries plus the basic managers.
//!
//! Registry mutations take a single kernel-wide mutation lock so that the
//! version history, the active registry and the retrieval index change
//! together. Invocations clone the live entry out of the registry and run
//! without holding any registry lock, which pins the invoked version.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::agent::RelationStore;
use crate::behavior::{AgentPolicy, EnvPolicy, Environment, Factories, ToolBehavior};
use crate::clock::{Clock, IdSource, SystemClock};
use crate::environment::EnvironmentConfig;
use crate::error::{Error, ErrorKind, Result};
use crate::evolution::EvolutionRun;
use crate::managers::memory::{MemoryEvent, SessionHandle, SessionStore, SummaryHook};
use crate::managers::model::ModelManager;
use crate::managers::prompt::PromptConfig;
use crate::managers::tracer::Invocation;
use crate::retrieval::{Embedder, HashedEmbedder, VectorIndex};
use crate::schema::Signature;
use crate::transform::TransformRecord;
use crate::types::{
    validate_descriptor, BumpLevel, ComponentConfig, ComponentKind, ComponentName, ContractDocument, ContractEntry,
    Representations, Version,
};
use crate::value::{map_of, Map, Value};
use crate::version::{LifecycleState, VersionManager, VersionRecord};

pub(crate) enum Runtime {
    /// Behavior factory unavailable; registered and versioned but not
    /// invocable.
    Dormant(String),
    Tool(Arc<dyn ToolBehavior>),
    Env(RwLock<Box<dyn Environment>>),
    Agent { policy: Arc<dyn AgentPolicy>, gate: Mutex<()> },
    Prompt(PromptConfig),
    Memory,
}

pub(crate) struct Live {
    pub config: ComponentConfig,
    pub runtime: Runtime,
}

impl Live {
    pub fn is_dormant(&self) -> bool {
        matches!(self.runtime, Runtime::Dormant(_))
    }

    pub fn dormant_error(&self) -> Error {
        match &self.runtime {
            Runtime::Dormant(why) => Error::lifecycle(format!(
                "{} {} v{} is dormant: {why}",
                self.config.kind, self.config.descriptor.name, self.config.version
            )),
            _ => Error::lifecycle("component has no invocable behavior"),
        }
    }
}

type Registry = RwLock<BTreeMap<ComponentName, Arc<Live>>>;

pub(crate) struct Inner {
    pub clock: Arc<dyn Clock>,
    pub ids: IdSource,
    pub versions: VersionManager,
    pub factories: RwLock<Factories>,
    registries: [Registry; 5],
    pub index: VectorIndex,
    pub relations: RwLock<RelationStore>,
    pub transforms: RwLock<Vec<TransformRecord>>,
    pub evolution: RwLock<Vec<EvolutionRun>>,
    pub sessions: SessionStore,
    pub models: ModelManager,
    mutation: Mutex<()>,
    component_locks: Mutex<HashMap<(ComponentKind, ComponentName), Arc<Mutex<()>>>>,
}

/// Handle to a kernel. Cloning is cheap; clones share state.
#[derive(Clone)]
pub struct Tea {
    pub(crate) inner: Arc<Inner>,
}

impl fmt::Debug for Tea {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tea").finish_non_exhaustive()
    }
}

/// Proof that the kernel mutation lock is held.
pub(crate) struct MutationGuard<'a>(#[allow(dead_code)] MutexGuard<'a, ()>);

pub struct TeaBuilder {
    clock: Arc<dyn Clock>,
    ids: Option<IdSource>,
    embedder: Arc<dyn Embedder>,
    factories: Factories,
    summary_hook: Option<Arc<dyn SummaryHook>>,
    summary_every: usize,
}

impl Default for TeaBuilder {
    fn default() -> Self {
        TeaBuilder {
            clock: Arc::new(SystemClock),
            ids: None,
            embedder: Arc::new(HashedEmbedder::default()),
            factories: Factories::builtin(),
            summary_hook: None,
            summary_every: crate::managers::memory::SUMMARY_INTERVAL,
        }
    }
}

impl TeaBuilder {
    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Seeds the identifier source (session and record ids).
    pub fn seed(mut self, seed: u64) -> Self {
        self.ids = Some(IdSource::seeded(seed));
        self
    }

    pub fn embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = embedder;
        self
    }

    pub fn factories(mut self, factories: Factories) -> Self {
        self.factories = factories;
        self
    }

    pub fn with_factories(mut self, f: impl FnOnce(&mut Factories)) -> Self {
        f(&mut self.factories);
        self
    }

    pub fn summary_hook(mut self, hook: Arc<dyn SummaryHook>, every: usize) -> Self {
        self.summary_hook = Some(hook);
        self.summary_every = every.max(1);
        self
    }

    pub fn build(self) -> Tea {
        let clock = self.clock;
        let sessions = match self.summary_hook {
            Some(h) => SessionStore::with_hook(h, self.summary_every),
            None => SessionStore::new(),
        };
        Tea {
            inner: Arc::new(Inner {
                ids: self.ids.unwrap_or_else(IdSource::from_entropy),
                versions: VersionManager::new(clock.clone()),
                factories: RwLock::new(self.factories),
                registries: Default::default(),
                index: VectorIndex::new(self.embedder),
                relations: RwLock::new(RelationStore::default()),
                transforms: RwLock::new(Vec::new()),
                evolution: RwLock::new(Vec::new()),
                sessions,
                models: ModelManager::default(),
                mutation: Mutex::new(()),
                component_locks: Mutex::new(HashMap::new()),
                clock,
            }),
        }
    }
}

pub(crate) fn read<T>(l: &RwLock<T>) -> RwLockReadGuard<'_, T> {
    l.read().unwrap_or_else(|e| e.into_inner())
}

pub(crate) fn write<T>(l: &RwLock<T>) -> RwLockWriteGuard<'_, T> {
    l.write().unwrap_or_else(|e| e.into_inner())
}

/// Parses a name for lookup purposes: an invalid name cannot be registered,
/// so it is reported as absent.
pub(crate) fn lookup_name(kind: ComponentKind, name: &str) -> Result<ComponentName> {
    ComponentName::new(name).map_err(|_| Error::not_found(format!("{kind} {name:?}")))
}

fn kind_slot(kind: ComponentKind) -> usize {
    match kind {
        ComponentKind::Tool => 0,
        ComponentKind::Environment => 1,
        ComponentKind::Agent => 2,
        ComponentKind::Prompt => 3,
        ComponentKind::Memory => 4,
    }
}

impl Default for Tea {
    fn default() -> Self {
        Tea::new()
    }
}

impl Tea {
    pub fn new() -> Tea {
        TeaBuilder::default().build()
    }

    pub fn builder() -> TeaBuilder {
        TeaBuilder::default()
    }

    pub fn now(&self) -> u64 {
        self.inner.clock.now()
    }

    pub fn versions(&self) -> &VersionManager {
        &self.inner.versions
    }

    pub fn index(&self) -> &VectorIndex {
        &self.inner.index
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.inner.sessions
    }

    pub fn models(&self) -> &ModelManager {
        &self.inner.models
    }

    /// Adds behavior factories after construction.
    pub fn update_factories(&self, f: impl FnOnce(&mut Factories)) {
        f(&mut write(&self.inner.factories));
    }

    pub(crate) fn factories(&self) -> RwLockReadGuard<'_, Factories> {
        read(&self.inner.factories)
    }

    pub(crate) fn lock_mutations(&self) -> MutationGuard<'_> {
        MutationGuard(self.inner.mutation.lock().unwrap_or_else(|e| e.into_inner()))
    }

    pub(crate) fn component_lock(&self, kind: ComponentKind, name: &ComponentName) -> Arc<Mutex<()>> {
        let mut locks = self.inner.component_locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry((kind, name.clone())).or_default().clone()
    }

    fn registry(&self, kind: ComponentKind) -> &Registry {
        &self.inner.registries[kind_slot(kind)]
    }

    pub(crate) fn live(&self, kind: ComponentKind, name: &str) -> Result<Arc<Live>> {
        let key = lookup_name(kind, name)?;
        read(self.registry(kind))
            .get(&key)
            .cloned()
            .ok_or_else(|| Error::not_found(format!("{kind} {name}")))
    }

    pub fn is_active(&self, kind: ComponentKind, name: &str) -> bool {
        self.live(kind, name).is_ok()
    }

    pub(crate) fn context<'a>(&'a self, session: Option<&'a SessionHandle>) -> Context<'a> {
        Context { tea: self, session }
    }

    // ---- instantiation ----

    pub(crate) fn instantiate(&self, cfg: &ComponentConfig, strict: bool) -> Result<Runtime> {
        let dormant_or = |e: Error| if strict { Err(e) } else { Ok(Runtime::Dormant(e.detail)) };
        let factories = self.factories();
        match cfg.kind {
            ComponentKind::Prompt => return PromptConfig::from_config(cfg).map(Runtime::Prompt),
            ComponentKind::Memory => return Ok(Runtime::Memory),
            _ => {}
        }
        let Some(id) = cfg.behavior_id() else {
            return dormant_or(Error::invalid("missing behavior_id metadata"));
        };
        let unknown = || Error::invalid(format!("unknown {} behavior_id {id:?}", cfg.kind));
        match cfg.kind {
            ComponentKind::Tool => match factories.tool(id) {
                None => dormant_or(unknown()),
                Some(f) => f(cfg).map(Runtime::Tool).or_else(dormant_or),
            },
            ComponentKind::Environment => match factories.environment(id) {
                None => dormant_or(unknown()),
                Some(f) => f(cfg).map(|e| Runtime::Env(RwLock::new(e))).or_else(dormant_or),
            },
            ComponentKind::Agent => match factories.agent(id) {
                None => dormant_or(unknown()),
                Some(f) => f(cfg).map(|policy| Runtime::Agent { policy, gate: Mutex::new(()) }).or_else(dormant_or),
            },
            ComponentKind::Prompt | ComponentKind::Memory => unreachable!(),
        }
    }

    fn install_locked(&self, _g: &MutationGuard<'_>, config: ComponentConfig, runtime: Runtime) {
        let name = config.name();
        let category = crate::retrieval::category_of(&name, &config.descriptor.metadata);
        self.inner.index.upsert(config.kind, &name, &config.descriptor.description, &category);
        write(self.registry(config.kind)).insert(name, Arc::new(Live { config, runtime }));
    }

    /// Empties every active registry and the retrieval index.
    pub(crate) fn clear_locked(&self, _g: &MutationGuard<'_>) {
        for r in &self.inner.registries {
            write(r).clear();
        }
        self.inner.index.clear();
    }

    pub(crate) fn clear_kind_locked(&self, _g: &MutationGuard<'_>, kind: ComponentKind) {
        let names: Vec<ComponentName> = std::mem::take(&mut *write(self.registry(kind))).into_keys().collect();
        for n in names {
            self.inner.index.remove(kind, &n);
        }
    }

    /// Activates a config from persisted history; unresolvable behaviors
    /// come up dormant.
    pub(crate) fn activate_locked(&self, g: &MutationGuard<'_>, cfg: ComponentConfig) -> Result<()> {
        let runtime = self.instantiate(&cfg, false)?;
        self.install_locked(g, cfg, runtime);
        Ok(())
    }

    fn deactivate_locked(&self, _g: &MutationGuard<'_>, kind: ComponentKind, name: &ComponentName) {
        write(self.registry(kind)).remove(name);
        self.inner.index.remove(kind, name);
    }

    /// Registers a brand-new component at whatever version `cfg` carries.
    pub(crate) fn register_locked(
        &self,
        g: &MutationGuard<'_>,
        cfg: ComponentConfig,
        strict: bool,
    ) -> Result<ComponentConfig> {
        validate_descriptor(&cfg.descriptor).into_result()?;
        let name = cfg.name();
        if read(self.registry(cfg.kind)).contains_key(&name) {
            return Err(Error::conflict(format!("{} {name}", cfg.kind)));
        }
        let runtime = self.instantiate(&cfg, strict)?;
        self.inner.versions.record(&cfg)?;
        self.install_locked(g, cfg.clone(), runtime);
        Ok(cfg)
    }

    pub(crate) fn register_config(&self, cfg: ComponentConfig) -> Result<ComponentConfig> {
        let g = self.lock_mutations();
        self.register_locked(&g, cfg, true)
    }

    /// Produces the next version of an active component from its current
    /// config. The new version bumps the highest recorded version.
    pub(crate) fn advance_locked(
        &self,
        g: &MutationGuard<'_>,
        kind: ComponentKind,
        name: &str,
        level: BumpLevel,
        strict: bool,
        next: impl FnOnce(&ComponentConfig) -> Result<ComponentConfig>,
    ) -> Result<ComponentConfig> {
        let current = self.live(kind, name)?;
        let key = current.config.name();
        let mut cfg = next(&current.config)?;
        if cfg.descriptor.name != key.as_str() {
            return Err(Error::invalid(format!("cannot rename {name} to {} on update", cfg.descriptor.name)));
        }
        validate_descriptor(&cfg.descriptor).into_result()?;
        cfg.kind = kind;
        let base = self.inner.versions.max_version(&key, kind).unwrap_or(current.config.version);
        cfg.version = base.bump(level);
        let runtime = self.instantiate(&cfg, strict)?;
        self.inner.versions.record(&cfg)?;
        self.install_locked(g, cfg.clone(), runtime);
        Ok(cfg)
    }

    pub(crate) fn advance(
        &self,
        kind: ComponentKind,
        name: &str,
        level: BumpLevel,
        next: impl FnOnce(&ComponentConfig) -> Result<ComponentConfig>,
    ) -> Result<ComponentConfig> {
        let key = lookup_name(kind, name)?;
        let lock = self.component_lock(kind, &key);
        let _c = lock.lock().unwrap_or_else(|e| e.into_inner());
        let g = self.lock_mutations();
        self.advance_locked(&g, kind, name, level, true, next)
    }

    // ---- generic lifecycle surface shared by all registries ----

    /// Active component names of one kind, ascending.
    pub fn list(&self, kind: ComponentKind) -> Vec<ComponentName> {
        read(self.registry(kind)).keys().cloned().collect()
    }

    pub fn len(&self, kind: ComponentKind) -> usize {
        read(self.registry(kind)).len()
    }

    pub fn is_empty(&self, kind: ComponentKind) -> bool {
        self.len(kind) == 0
    }

    /// Active config of a component.
    pub fn info(&self, kind: ComponentKind, name: &str) -> Result<ComponentConfig> {
        self.live(kind, name).map(|l| l.config.clone())
    }

    pub fn is_dormant(&self, kind: ComponentKind, name: &str) -> Result<bool> {
        self.live(kind, name).map(|l| l.is_dormant())
    }

    pub fn history(&self, kind: ComponentKind, name: &str) -> Vec<VersionRecord> {
        match ComponentName::new(name) {
            Ok(n) => self.inner.versions.history(&n, kind),
            Err(_) => Vec::new(),
        }
    }

    pub fn lookup(&self, kind: ComponentKind, name: &str, version: Version) -> Result<ComponentConfig> {
        let key = lookup_name(kind, name)?;
        self.inner.versions.lookup(&key, kind, version)
    }

    /// Copies the active version of `name` to a fresh component `new_name`
    /// at 1.0.0. Environments get a fresh instance, not a state snapshot.
    pub fn copy(&self, kind: ComponentKind, name: &str, new_name: &str) -> Result<ComponentConfig> {
        let g = self.lock_mutations();
        self.copy_locked(&g, kind, name, new_name)
    }

    pub(crate) fn copy_locked(
        &self,
        g: &MutationGuard<'_>,
        kind: ComponentKind,
        name: &str,
        new_name: &str,
    ) -> Result<ComponentConfig> {
        let src = self.live(kind, name)?;
        let new_key = ComponentName::new(new_name)?;
        let mut cfg = src.config.clone();
        cfg.descriptor.name = new_key.to_string();
        cfg.version = Version::INITIAL;
        cfg.representations = resynthesize(&cfg)?;
        if self.inner.versions.max_version(&new_key, kind).is_some() {
            return Err(Error::conflict(format!("{kind} {new_key} (history exists)")));
        }
        let strict = !src.is_dormant();
        self.register_locked(g, cfg, strict)
    }

    /// Removes a component from the active registry, its version history and
    /// the retrieval index. Agent relationship edges touching it go too.
    pub fn unregister(&self, kind: ComponentKind, name: &str) -> Result<()> {
        let g = self.lock_mutations();
        self.unregister_locked(&g, kind, name)
    }

    pub(crate) fn unregister_locked(&self, g: &MutationGuard<'_>, kind: ComponentKind, name: &str) -> Result<()> {
        let live = self.live(kind, name)?;
        let key = live.config.name();
        self.deactivate_locked(g, kind, &key);
        self.inner.versions.remove(&key, kind);
        if kind == ComponentKind::Agent {
            write(&self.inner.relations).remove_node(&key);
        }
        Ok(())
    }

    /// Re-activates a historical version by recording it again as a new
    /// patch-bumped version.
    pub fn restore(&self, kind: ComponentKind, name: &str, version: Version) -> Result<ComponentConfig> {
        let key = lookup_name(kind, name)?;
        let lock = self.component_lock(kind, &key);
        let _c = lock.lock().unwrap_or_else(|e| e.into_inner());
        let g = self.lock_mutations();
        self.restore_locked(&g, kind, &key, version)
    }

    pub(crate) fn restore_locked(
        &self,
        g: &MutationGuard<'_>,
        kind: ComponentKind,
        key: &ComponentName,
        version: Version,
    ) -> Result<ComponentConfig> {
        let versions = &self.inner.versions;
        let Some(max) = versions.max_version(key, kind) else {
            return Err(Error::not_found(format!("{kind} {key}")));
        };
        let mut cfg = versions.lookup(key, kind, version)?;
        cfg.version = max.bump(BumpLevel::Patch);
        let runtime = self.instantiate(&cfg, false)?;
        versions.record(&cfg)?;
        self.install_locked(g, cfg.clone(), runtime);
        Ok(cfg)
    }

    /// Moves one recorded version through its lifecycle and re-points the
    /// active registry at the newest resolvable version.
    pub fn set_lifecycle(
        &self,
        kind: ComponentKind,
        name: &str,
        version: Version,
        state: LifecycleState,
    ) -> Result<VersionRecord> {
        let key = lookup_name(kind, name)?;
        let g = self.lock_mutations();
        if self.inner.versions.max_version(&key, kind).is_none() {
            return Err(Error::not_found(format!("{kind} {key}")));
        }
        let rec = self.inner.versions.set_lifecycle(&key, kind, version, state)?;
        match self.inner.versions.latest(&key, kind) {
            Ok(latest) => {
                let current = read(self.registry(kind)).get(&key).map(|l| l.config.version);
                if current != Some(latest.version) {
                    let runtime = self.instantiate(&latest.config, false)?;
                    self.install_locked(&g, latest.config, runtime);
                }
            }
            Err(_) => self.deactivate_locked(&g, kind, &key),
        }
        Ok(rec)
    }

    /// Aggregated documentation of every active component of `kind`, sorted
    /// by name. Deterministic for a given registry state.
    pub fn contract(&self, kind: ComponentKind) -> ContractDocument {
        let reg = read(self.registry(kind));
        let mut generated_at = 0;
        let entries = reg
            .values()
            .map(|live| {
                let cfg = &live.config;
                if let Ok(r) = self.inner.versions.record_of(&cfg.name(), kind, cfg.version) {
                    generated_at = generated_at.max(r.created_at);
                }
                ContractEntry {
                    name: cfg.name(),
                    version: cfg.version,
                    text_description: cfg.representations.text_description.clone(),
                    schema_summary: schema_summary(cfg),
                }
            })
            .collect();
        ContractDocument { kind, entries, generated_at }
    }

    // ---- invocation plumbing ----

    /// Runs `call`, emitting one trace record when a session is attached.
    pub(crate) fn traced(
        &self,
        session: Option<&SessionHandle>,
        kind: ComponentKind,
        name: &str,
        args: Value,
        call: impl FnOnce() -> Result<Value>,
    ) -> Result<Value> {
        if let Some(h) = session {
            self.inner.sessions.ensure_open(h)?;
        }
        let out = call();
        if let Some(h) = session {
            let outcome = match &out {
                Ok(v) => map_of([("ok", v.clone())]),
                Err(e) => map_of([("error", Value::from(e.kind.as_str())), ("detail", Value::from(e.detail.as_str()))]),
            };
            let observation = out.as_ref().ok().cloned().unwrap_or(Value::Null);
            let inv = Invocation { kind, name: name.to_owned(), args, outcome };
            // the call already happened; a session closed meanwhile only loses the record
            let _ = self.inner.sessions.trace(h, &self.inner.ids, self.now(), observation, Some(inv));
        }
        out
    }

    pub(crate) fn env_config(&self, name: &str) -> Result<EnvironmentConfig> {
        EnvironmentConfig::from_base(self.live(ComponentKind::Environment, name)?.config.clone())
    }
}

/// Rebuilds the name-dependent representations of a config (used on copy).
pub(crate) fn resynthesize(cfg: &ComponentConfig) -> Result<Representations> {
    let name = &cfg.descriptor.name;
    let desc = &cfg.descriptor.description;
    match cfg.kind {
        ComponentKind::Tool | ComponentKind::Agent => {
            let sig = Signature::from_value(&cfg.representations.argument_schema)?;
            crate::schema::synthesize(name, desc, &sig)
        }
        ComponentKind::Environment => {
            let env = EnvironmentConfig::from_base(cfg.clone())?;
            crate::environment::environment_representations(name, desc, &env.actions)
        }
        ComponentKind::Prompt => PromptConfig::from_config(cfg)?.representations(name, desc),
        ComponentKind::Memory => Ok(crate::managers::memory::memory_representations(name, desc)),
    }
}

fn schema_summary(cfg: &ComponentConfig) -> String {
    match cfg.kind {
        ComponentKind::Tool | ComponentKind::Agent => Signature::from_value(&cfg.representations.argument_schema)
            .map(|s| s.summary())
            .unwrap_or_default(),
        ComponentKind::Environment => EnvironmentConfig::from_base(cfg.clone())
            .map(|e| {
                let acts: Vec<String> = e.actions.iter().map(|a| format!("{}{}", a.name, a.signature.summary())).collect();
                format!("actions [{}]", acts.join(", "))
            })
            .unwrap_or_default(),
        ComponentKind::Prompt => PromptConfig::from_config(cfg)
            .map(|p| format!("variables [{}]", p.variables().into_iter().collect::<Vec<_>>().join(", ")))
            .unwrap_or_default(),
        ComponentKind::Memory => "text".to_owned(),
    }
}

/// Handle passed to behaviors: reach other components and the session the
/// current call runs under.
#[derive(Clone, Copy)]
pub struct Context<'a> {
    tea: &'a Tea,
    session: Option<&'a SessionHandle>,
}

impl<'a> Context<'a> {
    pub fn tea(&self) -> &'a Tea {
        self.tea
    }

    pub fn session(&self) -> Option<&'a SessionHandle> {
        self.session
    }

    pub fn invoke_tool(&self, name: &str, args: &Map) -> Result<Value> {
        self.tea.invoke_tool(self.session, name, args).map(|r| r.output)
    }

    pub fn invoke_action(&self, env: &str, action: &str, args: &Map) -> Result<Value> {
        self.tea.invoke_action(self.session, env, action, args)
    }

    pub fn invoke_agent(&self, name: &str, task: &Value) -> Result<Value> {
        self.tea.invoke_agent(self.session, name, task)
    }

    pub fn env_state(&self, name: &str) -> Result<Value> {
        self.tea.env_state(name)
    }

    pub fn env_config(&self, name: &str) -> Result<EnvironmentConfig> {
        self.tea.env_config(name)
    }

    pub fn env_policy(&self, id: &str) -> Result<Arc<dyn EnvPolicy>> {
        self.tea.factories().env_policy(id)
    }

    /// Records a memory event in the attached session.
    pub fn remember(&self, kind: &str, payload: Value) -> Result<MemoryEvent> {
        let h = self
            .session
            .ok_or_else(|| Error::new(ErrorKind::LifecycleViolation, "no session attached"))?;
        self.tea.memory_record(h, kind, payload)
    }
}
