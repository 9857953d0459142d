use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use regex::Regex;

use super::{
    clean_line, is_not_provided, label_value, query, require_nonempty, resolve_name_set, strip_value, AgentContext,
    AgentError, AgentOptions, AgentOutcome, AgentReport, PairPolicy, ParsedAgentOutput,
};
use crate::backend::LlmBackend;
use crate::model::{CharacterGraph, Crs, ImplicitRelation, NodeId, Relation, Stage};

const AGENT: &str = "relations";

/// Ordered subject-object pairs put to the model: both directions of every
/// edge, with pairs touching a main or sub character first.
pub fn relation_pairs(crs: &Crs, policy: PairPolicy) -> Vec<(NodeId, NodeId)> {
    let g = crs.graph();
    let seed = |id: NodeId| g.node(id).is_some_and(|n| n.tier().is_seed());
    let (mut first, mut rest) = (Vec::new(), Vec::new());
    for (a, b, _) in g.edges() {
        let bucket = if seed(a) || seed(b) { &mut first } else { &mut rest };
        bucket.push((a, b));
        bucket.push((b, a));
    }
    if policy == PairPolicy::SeedPairsFirst {
        first.extend(rest);
    }
    first
}

fn pair_list(g: &CharacterGraph, pairs: &[(NodeId, NodeId)]) -> String {
    let name = |id: NodeId| g.node(id).map(|n| n.name_set()).unwrap_or_default();
    pairs
        .iter()
        .enumerate()
        .map(|(i, (s, o))| format!("{}. Subject: {}\n   Object: {}", i + 1, name(*s), name(*o)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn value_after<'a>(line: &'a str, markers: &[&str]) -> &'a str {
    for m in markers {
        if let Some(i) = line.find(m) {
            return line[i + m.len()..].trim();
        }
    }
    ""
}

/// Parses per-pair blocks. A `Subject:` line opens a block; `Object:`,
/// `(Explicit) ...]:`, `Verification:` and `(Implicit) ...?:` lines fill it.
/// Blocks without an object are dropped.
///
/// Record keys: `subject`, `object`, and when present `explicit`,
/// `verification`, `implicit`.
pub fn parse_relations(text: &str) -> ParsedAgentOutput {
    let mut out = ParsedAgentOutput::new(AGENT);
    let mut current: Option<BTreeMap<String, String>> = None;
    let flush = |cur: Option<BTreeMap<String, String>>, out: &mut ParsedAgentOutput| {
        if let Some(rec) = cur {
            if rec.contains_key("object") {
                out.push(rec);
            } else {
                out.dropped_lines += 1;
            }
        }
    };
    for raw in text.lines() {
        let line = clean_line(raw);
        let lower = line.to_ascii_lowercase();
        if let Some(v) = label_value(&line, "Subject") {
            flush(current.take(), &mut out);
            current = Some(BTreeMap::from([("subject".to_owned(), v.to_owned())]));
            continue;
        }
        let Some(rec) = current.as_mut() else { continue };
        if let Some(v) = label_value(&line, "Object") {
            rec.insert("object".into(), v.to_owned());
        } else if lower.starts_with("(explicit)") || lower.starts_with("verification") || lower.starts_with("explicit")
        {
            let body = lower.trim_start_matches("(explicit)").trim_start();
            if body.starts_with("verification") {
                let at = line.len() - body.len();
                rec.insert("verification".into(), value_after(&line[at..], &[":"]).to_owned());
            } else {
                rec.insert("explicit".into(), value_after(&line, &["]:", ":"]).to_owned());
            }
        } else if lower.starts_with("(implicit)") || lower.starts_with("implicit") {
            rec.insert("implicit".into(), value_after(&line, &["?:", "]:", ":"]).to_owned());
        }
    }
    flush(current, &mut out);
    out
}

fn relation_sentence() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(.+?)\s+is\s+(.+?)['’]s\s+(.+)$").expect("valid regex"))
}

fn correction_label() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)correct(?:ed|ion)\s*:\s*([^.\n]+)").expect("valid regex"))
}

/// Replacement text for an explicit relation marked incorrect: a
/// `Corrected:` label, else a sentence "<subject> is <object>'s <term>"
/// naming the same pair in the same direction.
fn corrected_term(verification: &str, g: &CharacterGraph, subject: NodeId, object: NodeId) -> Option<String> {
    if let Some(cap) = correction_label().captures(verification) {
        let v = strip_value(&cap[1]);
        return (!is_not_provided(v)).then(|| v.to_owned());
    }
    let body = verification.split_once(']').map_or(verification, |(_, rest)| rest);
    for sentence in body.split(['.', '\n']).map(str::trim) {
        if sentence.contains(" is not ") {
            continue;
        }
        let Some(cap) = relation_sentence().captures(sentence) else {
            continue;
        };
        if resolve_name_set(g, &cap[1]) == Some(subject) && resolve_name_set(g, &cap[2]) == Some(object) {
            let term = strip_value(&cap[3]);
            if !term.is_empty() {
                return Some(term.to_owned());
            }
        }
    }
    None
}

fn marked_incorrect(verification: &str) -> bool {
    verification.to_ascii_lowercase().contains("incorrect")
}

/// Labels each pair with an explicit relation (free text) and an implicit
/// one (closed vocabulary). Relations are stored in pair-list order.
pub fn extract_relations(
    ctx: &AgentContext,
    backend: &dyn LlmBackend,
    options: &AgentOptions,
) -> Result<AgentOutcome, AgentError> {
    ctx.crs.require_stage(Stage::Merged)?;
    require_nonempty(&ctx.crs)?;
    let mut report = AgentReport::new(AGENT);
    let pairs = relation_pairs(&ctx.crs, options.pair_policy);
    let mut crs = ctx.crs.clone();
    if pairs.is_empty() {
        crs.advance(Stage::RelationsExtracted)?;
        return Ok(AgentOutcome { crs, report });
    }

    let prompt = options.prompts.relations.render(&[
        ("treatment", &ctx.treatment),
        ("summary", &ctx.summary_text()),
        ("pair_list", &pair_list(crs.graph(), &pairs)),
    ])?;
    let parsed = query(AGENT, backend, &prompt, options, parse_relations, &mut report)?;

    let g = crs.graph();
    let mut by_pair: HashMap<(NodeId, NodeId), &BTreeMap<String, String>> = HashMap::new();
    for rec in &parsed.records {
        let s = resolve_name_set(g, &rec["subject"]);
        let o = resolve_name_set(g, &rec["object"]);
        let (Some(s), Some(o)) = (s, o) else {
            report.warn("unresolved_names", format!("{} -> {}", rec["subject"], rec["object"]));
            continue;
        };
        if !pairs.contains(&(s, o)) {
            report.warn("unknown_pairs", format!("{s} -> {o}"));
        } else if by_pair.insert((s, o), rec).is_some() {
            report.warn("duplicate_records", format!("{s} -> {o}"));
        }
    }

    let mut relations = Vec::new();
    for &(s, o) in &pairs {
        let Some(rec) = by_pair.get(&(s, o)) else {
            report.bump("missing_records");
            continue;
        };
        let mut explicit = rec
            .get("explicit")
            .map(|v| strip_value(v))
            .filter(|v| !is_not_provided(v))
            .map(str::to_owned);
        if let (Some(_), Some(check)) = (&explicit, rec.get("verification")) {
            if marked_incorrect(check) {
                explicit = corrected_term(check, g, s, o);
                report.bump(if explicit.is_some() {
                    "corrected_explicit"
                } else {
                    "dropped_explicit"
                });
            }
        }
        let implicit = match rec.get("implicit").map(|v| strip_value(v)) {
            Some(v) if !is_not_provided(v) => match ImplicitRelation::parse(v) {
                Ok(term) => Some(term),
                Err(_) => {
                    report.warn("vocabulary_violations", v);
                    None
                }
            },
            _ => None,
        };
        let rel = Relation {
            subject: s,
            object: o,
            explicit,
            implicit,
        };
        if !rel.is_empty() {
            relations.push(rel);
        }
    }
    crs.set_relations(relations)?;
    crs.advance(Stage::RelationsExtracted)?;
    Ok(AgentOutcome { crs, report })
}
