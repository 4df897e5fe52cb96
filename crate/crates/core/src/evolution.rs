//! Self-evolution: evolvable text slots as variables, a critic-driven
//! propose/score loop with a strict-improvement gate, versioned commits and
//! rollback.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::MutexGuard;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorKind, Result};
use crate::kernel::{lookup_name, read, write, MutationGuard, Tea};
use crate::managers::prompt::PromptConfig;
use crate::types::{BumpLevel, ComponentConfig, ComponentKind, ComponentName, Timestamp, Version};
use crate::value::{map_of, Value};

pub const SOURCE_SLOT: &str = "source";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Owner {
    pub kind: ComponentKind,
    pub name: ComponentName,
    pub version: Version,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub owner: Owner,
    pub slot: String,
    pub content: String,
}

/// One proposal evaluated by the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub iteration: usize,
    pub content: String,
    pub score: f64,
    pub accepted: bool,
}

pub trait Critic: Send + Sync {
    fn id(&self) -> &str;

    /// Proposes new content for `var` given the feedback and the attempts
    /// made so far in this run.
    fn propose(&self, var: &Variable, feedback: &Value, attempts: &[Attempt]) -> Result<String>;

    fn score(&self, content: &str, context: &Value) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionOutcome {
    pub accepted: bool,
    pub iterations: usize,
    pub initial_score: f64,
    pub final_score: f64,
    pub committed_version: Option<Version>,
    pub lineage: Vec<Attempt>,
}

/// Persisted account of one `evolve` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRun {
    pub kind: ComponentKind,
    pub name: ComponentName,
    pub slot: String,
    pub critic: String,
    pub base_version: Version,
    pub base_content: String,
    pub outcome: EvolutionOutcome,
    pub at: Timestamp,
}

impl EvolutionRun {
    /// Content the run committed, if it accepted a proposal.
    pub fn proposal(&self) -> Option<&str> {
        self.outcome.lineage.iter().find(|a| a.accepted).map(|a| a.content.as_str())
    }
}

fn slots_of(cfg: &ComponentConfig) -> Result<Vec<(String, String)>> {
    Ok(match cfg.kind {
        ComponentKind::Prompt => {
            let p = PromptConfig::from_config(cfg)?;
            if p.trainable_slots.is_empty() {
                vec![
                    ("message_template".to_owned(), p.message_template.clone()),
                    ("system_template".to_owned(), p.system_template.clone()),
                ]
            } else {
                p.trainable_slots.iter().map(|s| (s.clone(), p.modules[s].clone())).collect()
            }
        }
        _ => vec![(SOURCE_SLOT.to_owned(), cfg.source.clone())],
    })
}

fn apply_slot(cfg: &mut ComponentConfig, slot: &str, content: &str) -> Result<()> {
    let valid: BTreeSet<String> = slots_of(cfg)?.into_iter().map(|(s, _)| s).collect();
    if !valid.contains(slot) {
        return Err(Error::validation(vec![format!("{} has no evolvable slot {slot:?}", cfg.descriptor.name)]));
    }
    if cfg.kind != ComponentKind::Prompt {
        cfg.source = content.to_owned();
        return Ok(());
    }
    let mut p = PromptConfig::from_config(cfg)?;
    match slot {
        "system_template" => p.system_template = content.to_owned(),
        "message_template" => p.message_template = content.to_owned(),
        module => {
            p.modules.insert(module.to_owned(), content.to_owned());
        }
    }
    cfg.representations = p.representations(&cfg.descriptor.name, &cfg.descriptor.description)?;
    cfg.source = p.to_source()?;
    Ok(())
}

fn require_evolvable(cfg: &ComponentConfig) -> Result<()> {
    if cfg.descriptor.evolvable {
        Ok(())
    } else {
        Err(Error::lifecycle(format!("{} {} is not evolvable", cfg.kind, cfg.descriptor.name)))
    }
}

fn as_backend(e: Error) -> Error {
    if e.kind == ErrorKind::BackendFailure {
        e
    } else {
        Error::backend(format!("critic failed: {e}"))
    }
}

fn lock<T>(m: &std::sync::Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Tea {
    pub fn extract_vars(&self, kind: ComponentKind, name: &str) -> Result<Vec<Variable>> {
        let cfg = self.info(kind, name)?;
        require_evolvable(&cfg)?;
        let owner = Owner { kind, name: cfg.name(), version: cfg.version };
        Ok(slots_of(&cfg)?
            .into_iter()
            .map(|(slot, content)| Variable { owner: owner.clone(), slot, content })
            .collect())
    }

    /// Commits each owner's variables as one minor-bumped version. All
    /// owners are checked before any is changed.
    pub fn set_vars(&self, vars: &[Variable]) -> Result<Vec<ComponentConfig>> {
        let mut by_owner: BTreeMap<(ComponentKind, ComponentName), Vec<&Variable>> = BTreeMap::new();
        for v in vars {
            by_owner.entry((v.owner.kind, v.owner.name.clone())).or_default().push(v);
        }
        let locks: Vec<_> = by_owner.keys().map(|(k, n)| self.component_lock(*k, n)).collect();
        let _held: Vec<_> = locks.iter().map(|l| lock(l)).collect();
        let g = self.lock_mutations();
        let mut planned = Vec::new();
        for ((kind, name), vs) in &by_owner {
            let mut cfg = self.info(*kind, name.as_str())?;
            require_evolvable(&cfg)?;
            for v in vs {
                self.versions().record_of(name, *kind, v.owner.version)?;
                apply_slot(&mut cfg, &v.slot, &v.content)?;
            }
            planned.push((*kind, name.clone(), cfg));
        }
        planned
            .into_iter()
            .map(|(kind, name, cfg)| self.advance_locked(&g, kind, name.as_str(), BumpLevel::Minor, true, |_| Ok(cfg)))
            .collect()
    }

    pub fn evolve(
        &self,
        kind: ComponentKind,
        name: &str,
        critic: &dyn Critic,
        feedback: &Value,
        max_iter: usize,
    ) -> Result<EvolutionOutcome> {
        self.evolve_slot(kind, name, None, critic, feedback, max_iter)
    }

    /// Runs the loop on one slot (the first evolvable slot when `slot` is
    /// `None`). The first proposal scoring strictly above the baseline is
    /// committed and ends the run; otherwise nothing changes.
    pub fn evolve_slot(
        &self,
        kind: ComponentKind,
        name: &str,
        slot: Option<&str>,
        critic: &dyn Critic,
        feedback: &Value,
        max_iter: usize,
    ) -> Result<EvolutionOutcome> {
        if max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        let key = lookup_name(kind, name)?;
        let component = self.component_lock(kind, &key);
        let _c = lock(&component);
        let vars = self.extract_vars(kind, name)?;
        let var = match slot {
            None => vars.into_iter().next(),
            Some(s) => vars.into_iter().find(|v| v.slot == s),
        }
        .ok_or_else(|| Error::validation(vec![format!("{kind} {name} has no evolvable slot {}", slot.unwrap_or("?"))]))?;
        let context = map_of([
            ("feedback", feedback.clone()),
            ("kind", Value::from(kind.as_str())),
            ("name", Value::from(name)),
            ("slot", Value::from(var.slot.as_str())),
        ]);
        let score = |content: &str| -> Result<f64> {
            let s = critic.score(content, &context).map_err(as_backend)?;
            if s.is_finite() {
                Ok(s)
            } else {
                Err(Error::backend(format!("critic {} returned a non-finite score", critic.id())))
            }
        };
        let initial = score(&var.content)?;
        let mut lineage: Vec<Attempt> = Vec::new();
        for iteration in 1..=max_iter {
            let content = critic.propose(&var, feedback, &lineage).map_err(as_backend)?;
            let s = score(&content)?;
            let accepted = s > initial;
            lineage.push(Attempt { iteration, content, score: s, accepted });
            if accepted {
                break;
            }
        }
        let winner = lineage.iter().find(|a| a.accepted).cloned();
        let mut outcome = EvolutionOutcome {
            accepted: winner.is_some(),
            iterations: lineage.len(),
            initial_score: initial,
            final_score: initial,
            committed_version: None,
            lineage,
        };
        let g = self.lock_mutations();
        if let Some(w) = winner {
            let cfg = self.advance_locked(&g, kind, name, BumpLevel::Minor, true, |cur| {
                let mut next = cur.clone();
                apply_slot(&mut next, &var.slot, &w.content)?;
                Ok(next)
            })?;
            outcome.final_score = w.score;
            outcome.committed_version = Some(cfg.version);
        }
        self.push_run(
            &g,
            EvolutionRun {
                kind,
                name: key,
                slot: var.slot.clone(),
                critic: critic.id().to_owned(),
                base_version: var.owner.version,
                base_content: var.content.clone(),
                outcome: outcome.clone(),
                at: self.now(),
            },
        );
        Ok(outcome)
    }

    fn push_run(&self, _g: &MutationGuard<'_>, run: EvolutionRun) {
        write(&self.inner.evolution).push(run);
    }

    /// Re-activates a historical version (restore semantics).
    pub fn rollback(&self, kind: ComponentKind, name: &str, to: Version) -> Result<ComponentConfig> {
        self.restore(kind, name, to)
    }

    pub fn evolution_runs(&self) -> Vec<EvolutionRun> {
        read(&self.inner.evolution).clone()
    }

    pub(crate) fn replace_evolution(&self, _g: &MutationGuard<'_>, runs: Vec<EvolutionRun>) {
        *write(&self.inner.evolution) = runs;
    }
}

/// Critic driven by fixed tables: proposals are taken in order (the last
/// one repeats) and scores are looked up by content.
#[derive(Debug, Clone, Default)]
pub struct ScriptedCritic {
    id: String,
    proposals: Vec<String>,
    scores: BTreeMap<String, f64>,
    default_score: f64,
    fail_propose: bool,
    fail_score: bool,
}

impl ScriptedCritic {
    pub fn new(id: impl Into<String>) -> Self {
        ScriptedCritic { id: id.into(), ..Default::default() }
    }

    pub fn propose_in_order(mut self, proposals: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.proposals = proposals.into_iter().map(Into::into).collect();
        self
    }

    pub fn score_of(mut self, content: impl Into<String>, score: f64) -> Self {
        self.scores.insert(content.into(), score);
        self
    }

    pub fn default_score(mut self, score: f64) -> Self {
        self.default_score = score;
        self
    }

    pub fn failing_propose(mut self) -> Self {
        self.fail_propose = true;
        self
    }

    pub fn failing_score(mut self) -> Self {
        self.fail_score = true;
        self
    }

    /// Wire form: `{id?, proposals: [text], scores: {content: score},
    /// default_score?, fail?: "propose" | "score"}`.
    pub fn from_value(v: &Value) -> Result<Self> {
        let mut c = ScriptedCritic::new(v.get("id").and_then(Value::as_str).unwrap_or("scripted"));
        for p in v.get("proposals").and_then(Value::as_seq).unwrap_or_default() {
            c.proposals.push(p.as_str().ok_or_else(|| Error::invalid("proposals must be text"))?.to_owned());
        }
        if let Some(m) = v.get("scores").and_then(Value::as_map) {
            for (k, s) in m {
                c.scores.insert(k.clone(), s.as_f64().ok_or_else(|| Error::invalid("scores must be numbers"))?);
            }
        }
        if let Some(d) = v.get("default_score") {
            c.default_score = d.as_f64().ok_or_else(|| Error::invalid("default_score must be a number"))?;
        }
        match v.get("fail").and_then(Value::as_str) {
            None => {}
            Some("propose") => c.fail_propose = true,
            Some("score") => c.fail_score = true,
            Some(other) => return Err(Error::invalid(format!("unknown failure mode {other:?}"))),
        }
        Ok(c)
    }
}

impl Critic for ScriptedCritic {
    fn id(&self) -> &str {
        &self.id
    }

    fn propose(&self, var: &Variable, _feedback: &Value, attempts: &[Attempt]) -> Result<String> {
        if self.fail_propose {
            return Err(Error::backend(format!("{}: proposal backend unavailable", self.id)));
        }
        Ok(self
            .proposals
            .get(attempts.len())
            .or(self.proposals.last())
            .cloned()
            .unwrap_or_else(|| var.content.clone()))
    }

    fn score(&self, content: &str, _context: &Value) -> Result<f64> {
        if self.fail_score {
            return Err(Error::backend(format!("{}: scoring backend unavailable", self.id)));
        }
        Ok(self.scores.get(content).copied().unwrap_or(self.default_score))
    }
}

fn words(v: Option<&Value>) -> Vec<String> {
    v.and_then(Value::as_seq)
        .unwrap_or_default()
        .iter()
        .filter_map(Value::as_str)
        .map(str::to_owned)
        .collect()
}

/// Gradient-style critic. Feedback `{keywords: [..]}` names terms the
/// content should mention; the edit direction appends the next missing
/// term. Score is the fraction of keywords present.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeywordGradientCritic;

impl Critic for KeywordGradientCritic {
    fn id(&self) -> &str {
        "textgrad.keywords"
    }

    fn propose(&self, var: &Variable, feedback: &Value, attempts: &[Attempt]) -> Result<String> {
        let missing: Vec<String> =
            words(feedback.get("keywords")).into_iter().filter(|k| !var.content.contains(k.as_str())).collect();
        let Some(k) = missing.get(attempts.len() % missing.len().max(1)) else {
            return Ok(var.content.clone());
        };
        let sep = if var.content.is_empty() || var.content.ends_with(char::is_whitespace) { "" } else { " " };
        Ok(format!("{}{sep}{k}", var.content))
    }

    fn score(&self, content: &str, context: &Value) -> Result<f64> {
        let kws = words(context.get("feedback").and_then(|f| f.get("keywords")));
        if kws.is_empty() {
            return Ok(0.0);
        }
        Ok(kws.iter().filter(|k| content.contains(k.as_str())).count() as f64 / kws.len() as f64)
    }
}

/// Reflection-style critic. Feedback `{forbidden: [..]}` lists terms that
/// count as violations; each revision removes every occurrence of one
/// violated term. Score is minus the number of violations.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReflectionCritic;

impl Critic for ReflectionCritic {
    fn id(&self) -> &str {
        "reflection.forbidden"
    }

    fn propose(&self, var: &Variable, feedback: &Value, _attempts: &[Attempt]) -> Result<String> {
        let violated = words(feedback.get("forbidden")).into_iter().find(|w| !w.is_empty() && var.content.contains(w.as_str()));
        Ok(match violated {
            Some(w) => var.content.replace(w.as_str(), ""),
            None => var.content.clone(),
        })
    }

    fn score(&self, content: &str, context: &Value) -> Result<f64> {
        let forbidden = words(context.get("feedback").and_then(|f| f.get("forbidden")));
        Ok(-(forbidden.iter().filter(|w| !w.is_empty()).map(|w| content.matches(w.as_str()).count()).sum::<usize>() as f64))
    }
}

/// Builds a critic from its wire form: `{type: "scripted" | "textgrad" |
/// "reflection", ...}`.
pub fn critic_from_value(v: &Value) -> Result<Box<dyn Critic>> {
    match v.get("type").and_then(Value::as_str) {
        Some("scripted") => Ok(Box::new(ScriptedCritic::from_value(v)?)),
        Some("textgrad") => Ok(Box::new(KeywordGradientCritic)),
        Some("reflection") => Ok(Box::new(ReflectionCritic)),
        other => Err(Error::invalid(format!("unknown critic type {other:?}"))),
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} v{} [{}]", self.owner.kind, self.owner.name, self.owner.version, self.slot)
    }
}
