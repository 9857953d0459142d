//! The five refinement agents. Each renders its prompt, calls the backend,
//! parses the line-oriented response and applies a CRS mutation:
//!
//! | agent       | stage in           | stage out            |
//! |-------------|--------------------|----------------------|
//! | merge       | `Selected`         | `Merged`             |
//! | relations   | `Merged`           | `RelationsExtracted` |
//! | filter      | `RelationsExtracted` | `Filtered`         |
//! | roles       | `Filtered`         | `RolesAssigned`      |
//! | groups      | `RolesAssigned`    | `Grouped`            |
//!
//! Parsers strip bold markers, list numbering and bullets before matching
//! `Label: value` lines; the grammar of each response is documented on its
//! `parse_*` function. Characters a response does not mention are left
//! unchanged.

mod filter;
mod groups;
mod merge;
mod relations;
mod roles;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationParams, LlmBackend, PipelineStep, StageBackends};
use crate::model::{fold_label, CharacterGraph, Crs, ModelError, NodeId, Stage};
use crate::prompts::{PromptError, PromptSet};

pub use filter::{filter_irrelevant, parse_filter};
pub use groups::{assign_groups, parse_groups};
pub use merge::{merge_duplicates, parse_merge};
pub use relations::{extract_relations, parse_relations, relation_pairs};
pub use roles::{assign_roles, parse_roles};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("the CRS has no characters")]
    NoCharacters,
    #[error("at most 4 episode summaries are supported, got {0}")]
    TooManySummaries(usize),
    #[error("{agent} agent: {source}")]
    Backend {
        agent: &'static str,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("writing {stage} snapshot: {message}")]
    Snapshot { stage: Stage, message: String },
}

/// Inputs shared by every agent: the drama's treatment, up to four episode
/// summaries and the CRS being refined.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentContext {
    pub treatment: String,
    summaries: Vec<String>,
    pub crs: Crs,
}

impl AgentContext {
    pub fn new(treatment: &str, summaries: Vec<String>, crs: Crs) -> Result<Self, AgentError> {
        if summaries.len() > 4 {
            return Err(AgentError::TooManySummaries(summaries.len()));
        }
        Ok(AgentContext {
            treatment: treatment.to_owned(),
            summaries,
            crs,
        })
    }

    pub fn summaries(&self) -> &[String] {
        &self.summaries
    }

    /// Summaries joined for the `{summary}` slot.
    pub fn summary_text(&self) -> String {
        self.summaries
            .iter()
            .enumerate()
            .map(|(i, s)| format!("Episode {}: {}", i + 1, s.trim()))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn with_crs(&self, crs: Crs) -> Self {
        AgentContext {
            treatment: self.treatment.clone(),
            summaries: self.summaries.clone(),
            crs,
        }
    }
}

/// Which subject-object pairs the relation agent is asked about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPolicy {
    /// Every edge in both directions, pairs touching a main/sub character first.
    #[default]
    SeedPairsFirst,
    /// Only pairs with a main or sub character on either end.
    SeedPairsOnly,
}

pub const DEFAULT_AGE_TERMS: &[&str] = &[
    "adult",
    "elderly person",
    "elderly",
    "old man",
    "old woman",
    "old person",
    "senior citizen",
    "middle-aged man",
    "middle-aged woman",
    "young man",
    "young woman",
    "youth",
    "teenager",
    "adolescent",
    "child",
    "kid",
    "baby",
    "infant",
];

pub const DEFAULT_GENERIC_GROUPS: &[&str] = &["others", "other characters", "other", "etc", "miscellaneous"];

#[derive(Debug, Clone)]
pub struct AgentOptions {
    pub prompts: PromptSet,
    pub params: GenerationParams,
    pub pair_policy: PairPolicy,
    /// Extra attempts when a response yields nothing recognizable.
    pub requery_limit: u32,
    pub age_denylist: Vec<String>,
    pub generic_group_labels: Vec<String>,
}

impl Default for AgentOptions {
    fn default() -> Self {
        AgentOptions {
            prompts: PromptSet::default(),
            params: GenerationParams::default(),
            pair_policy: PairPolicy::default(),
            requery_limit: 1,
            age_denylist: DEFAULT_AGE_TERMS.iter().map(|s| s.to_string()).collect(),
            generic_group_labels: DEFAULT_GENERIC_GROUPS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Structured view of one agent response.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAgentOutput {
    pub agent_name: String,
    pub records: Vec<BTreeMap<String, String>>,
    /// Lines that looked like records but lacked mandatory fields.
    pub dropped_lines: usize,
    /// Whether any part of the response format was recognized, including
    /// explicit "nothing to report" answers.
    pub structured: bool,
}

impl ParsedAgentOutput {
    fn new(agent: &str) -> Self {
        ParsedAgentOutput {
            agent_name: agent.to_owned(),
            ..Default::default()
        }
    }

    fn push(&mut self, record: BTreeMap<String, String>) {
        self.structured = true;
        self.records.push(record);
    }
}

/// What an agent did, for logs and the CLI summary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentReport {
    pub agent: String,
    pub records: usize,
    pub dropped_lines: usize,
    pub requeries: u32,
    /// Named warning counters (unresolved names, vocabulary violations...).
    pub counters: BTreeMap<String, usize>,
    pub notes: Vec<String>,
}

impl AgentReport {
    fn new(agent: &str) -> Self {
        AgentReport {
            agent: agent.to_owned(),
            ..Default::default()
        }
    }

    pub fn count(&self, key: &str) -> usize {
        self.counters.get(key).copied().unwrap_or(0)
    }

    fn bump(&mut self, key: &str) {
        *self.counters.entry(key.to_owned()).or_default() += 1;
    }

    fn warn(&mut self, key: &str, detail: impl std::fmt::Display) {
        log::warn!("{} agent: {key}: {detail}", self.agent);
        self.bump(key);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub crs: Crs,
    pub report: AgentReport,
}

/// Receives the CRS after every agent.
pub trait SnapshotSink {
    fn save(&mut self, crs: &Crs) -> Result<(), String>;
}

impl<F: FnMut(&Crs) -> Result<(), String>> SnapshotSink for F {
    fn save(&mut self, crs: &Crs) -> Result<(), String> {
        self(crs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutcome {
    pub crs: Crs,
    pub reports: Vec<AgentReport>,
}

/// Runs merge, relations, filter, roles and groups in that order, handing
/// each stage's CRS to `sink`. The first hard failure aborts the chain;
/// snapshots already handed out stay valid.
pub fn run_chain(
    ctx: AgentContext,
    backends: &StageBackends,
    options: &AgentOptions,
    sink: &mut dyn SnapshotSink,
) -> Result<ChainOutcome, AgentError> {
    type Agent = fn(&AgentContext, &dyn LlmBackend, &AgentOptions) -> Result<AgentOutcome, AgentError>;
    let chain: [(PipelineStep, Agent); 5] = [
        (PipelineStep::Merge, merge_duplicates),
        (PipelineStep::Relations, extract_relations),
        (PipelineStep::Filter, filter_irrelevant),
        (PipelineStep::Roles, assign_roles),
        (PipelineStep::Groups, assign_groups),
    ];
    let mut ctx = ctx;
    let mut reports = Vec::with_capacity(chain.len());
    for (step, agent) in chain {
        let outcome = agent(&ctx, backends.for_step(step), options)?;
        sink.save(&outcome.crs).map_err(|message| AgentError::Snapshot {
            stage: outcome.crs.stage(),
            message,
        })?;
        reports.push(outcome.report);
        ctx = ctx.with_crs(outcome.crs);
    }
    Ok(ChainOutcome { crs: ctx.crs, reports })
}

/// Sends `prompt`, re-asking up to `requery_limit` times while the answer is
/// wholly unrecognizable. An answer that stays unrecognizable is returned
/// as-is (and so changes nothing).
fn query(
    agent: &'static str,
    backend: &dyn LlmBackend,
    prompt: &str,
    options: &AgentOptions,
    parse: fn(&str) -> ParsedAgentOutput,
    report: &mut AgentReport,
) -> Result<ParsedAgentOutput, AgentError> {
    let mut attempt = 0;
    loop {
        let completion = backend
            .complete(prompt, &options.params)
            .map_err(|source| AgentError::Backend { agent, source })?;
        let parsed = parse(&completion.text);
        if parsed.structured || attempt >= options.requery_limit {
            if !parsed.structured {
                report.warn("unparseable_responses", "no record found in response");
            }
            report.records = parsed.records.len();
            report.dropped_lines = parsed.dropped_lines;
            return Ok(parsed);
        }
        attempt += 1;
        report.requeries += 1;
    }
}

fn require_nonempty(crs: &Crs) -> Result<(), AgentError> {
    if crs.graph().is_empty() {
        Err(AgentError::NoCharacters)
    } else {
        Ok(())
    }
}

/// One `[name set]` per line, main and sub characters first.
fn character_list(graph: &CharacterGraph) -> String {
    let mut nodes: Vec<_> = graph.nodes().collect();
    nodes.sort_by_key(|n| (std::cmp::Reverse(n.tier()), n.id()));
    nodes.iter().map(|n| n.name_set()).collect::<Vec<_>>().join("\n")
}

fn numbering() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\d+[.)]\s*|[-*•]\s+)").expect("valid regex"))
}

/// Removes bold markers, list numbering and bullets.
fn clean_line(line: &str) -> String {
    let mut s = line.replace("**", "").trim().to_owned();
    while let Some(m) = numbering().find(&s) {
        s = s[m.end()..].trim_start().to_owned();
    }
    s.trim().to_owned()
}

fn starts_with_number(line: &str) -> bool {
    let t = line.replace("**", "");
    let t = t.trim_start();
    t.chars().next().is_some_and(|c| c.is_ascii_digit()) && numbering().is_match(t)
}

/// Value of a `Label: value` line, matching the label case-insensitively.
fn label_value<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let head = line.get(..label.len())?;
    if !head.eq_ignore_ascii_case(label) {
        return None;
    }
    let rest = line[label.len()..].trim_start();
    rest.strip_prefix(':').map(str::trim)
}

/// Trims whitespace, quotes, trailing punctuation and one pair of
/// surrounding brackets.
fn strip_value(raw: &str) -> &str {
    let mut s = raw.trim().trim_end_matches([',', ';']).trim();
    s = s.trim_matches(['"', '\'', '“', '”']).trim();
    if let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        s = inner.trim();
    }
    s
}

fn is_not_provided(value: &str) -> bool {
    let f = fold_label(value);
    f.is_empty() || f.starts_with("information not provided") || f == "not provided" || f == "none" || f == "n/a"
}

/// Resolves a name set as written back by a model. Exact alias match
/// first, then each `/`-separated part (exact, then case-insensitive).
/// All resolvable parts must agree on one node.
pub fn resolve_name_set(graph: &CharacterGraph, raw: &str) -> Option<NodeId> {
    let cleaned = strip_value(raw);
    if cleaned.is_empty() {
        return None;
    }
    if let Some(id) = resolve_loose(graph, cleaned) {
        return Some(id);
    }
    let mut found = None;
    for part in cleaned.split('/').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some(id) = resolve_loose(graph, part) {
            match found {
                None => found = Some(id),
                Some(prev) if prev != id => return None,
                _ => {}
            }
        }
    }
    found
}

fn resolve_loose(graph: &CharacterGraph, name: &str) -> Option<NodeId> {
    if let Some(id) = graph.resolve(name) {
        return Some(id);
    }
    let key = fold_label(name);
    let mut hits = graph
        .nodes()
        .filter(|n| n.aliases().iter().any(|a| fold_label(a) == key))
        .map(|n| n.id());
    let first = hits.next()?;
    hits.next().is_none().then_some(first)
}

fn record(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::model::Tier;
    use std::sync::Arc;

    #[test]
    fn line_cleaning() {
        assert_eq!(clean_line("  1. **Character: [A]**"), "Character: [A]");
        assert_eq!(clean_line("- **Role: doctor**"), "Role: doctor");
        assert_eq!(clean_line("2) 1. x"), "x");
        assert!(starts_with_number("**3. [A]-[B]"));
        assert!(!starts_with_number("Evidence: 3 people"));
        assert_eq!(label_value("role : surgeon", "Role"), Some("surgeon"));
        assert_eq!(label_value("Roles: x", "Role"), None);
        assert_eq!(strip_value(" [Hee-su / Hee-su Park], "), "Hee-su / Hee-su Park");
        assert!(is_not_provided("\"Information not provided.\""));
    }

    #[test]
    fn name_set_resolution() {
        let mut crs = crs(
            Stage::Selected,
            &[("Hee-su Park", Tier::Main), ("Seon-ae", Tier::Supporting)],
            &[],
        );
        let mut g = crs.graph().clone();
        let hee = g.resolve("Hee-su Park").unwrap();
        g.add_alias(hee, "Hee-su").unwrap();
        crs = Crs::new(g, Stage::Selected);
        let g = crs.graph();
        assert_eq!(resolve_name_set(g, "[Hee-su Park / Hee-su]"), Some(hee));
        assert_eq!(resolve_name_set(g, "hee-su"), Some(hee));
        assert_eq!(resolve_name_set(g, "[Hee-su / Nobody]"), Some(hee));
        assert_eq!(resolve_name_set(g, "[Hee-su / Seon-ae]"), None);
        assert_eq!(resolve_name_set(g, "[Nobody]"), None);
        assert_eq!(resolve_name_set(g, "[]"), None);
    }

    #[test]
    fn too_many_summaries_rejected() {
        let c = crs(Stage::Selected, &[("A", Tier::Main)], &[]);
        assert!(matches!(
            AgentContext::new("", vec![String::new(); 5], c),
            Err(AgentError::TooManySummaries(5))
        ));
    }

    #[test]
    fn empty_chain_fails_at_merge() {
        let c = Crs::new(CharacterGraph::new(), Stage::Selected);
        let backends = StageBackends::single(Arc::new(mock(&[])));
        let mut saved = Vec::new();
        let mut sink = |c: &Crs| {
            saved.push(c.stage());
            Ok(())
        };
        let err = run_chain(ctx(c), &backends, &AgentOptions::default(), &mut sink).unwrap_err();
        assert!(matches!(err, AgentError::NoCharacters));
        assert!(saved.is_empty());
    }

    #[test]
    fn requery_once_on_garbage() {
        let c = crs(
            Stage::Selected,
            &[("A", Tier::Main), ("B", Tier::Sub)],
            &[("A", "B", 1)],
        );
        let backend = mock(&["???", "1. [A]-[No Same Person]"]);
        let out = merge_duplicates(&ctx(c.clone()), &backend, &AgentOptions::default()).unwrap();
        assert_eq!(out.report.requeries, 1);
        assert_eq!(backend.calls().len(), 2);

        let backend = mock(&["???", "still nothing"]);
        let out = merge_duplicates(&ctx(c), &backend, &AgentOptions::default()).unwrap();
        assert_eq!(out.report.count("unparseable_responses"), 1);
        assert_eq!(out.crs.graph().node_count(), 2);
        assert_eq!(out.crs.stage(), Stage::Merged);
    }

    #[test]
    fn backend_failure_propagates() {
        let c = crs(Stage::Selected, &[("A", Tier::Main)], &[]);
        let err = merge_duplicates(&ctx(c), &mock(&[]), &AgentOptions::default()).unwrap_err();
        assert!(matches!(err, AgentError::Backend { agent: "merge", .. }));
    }
}
