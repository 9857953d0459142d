use std::collections::{BTreeMap, BTreeSet};

use super::{
    character_list, clean_line, is_not_provided, label_value, query, require_nonempty, resolve_name_set, strip_value,
    AgentContext, AgentError, AgentOptions, AgentOutcome, AgentReport, ParsedAgentOutput,
};
use crate::backend::LlmBackend;
use crate::model::{fold_label, Crs, Stage, Tier};

const AGENT: &str = "filter";

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    General,
    Identity,
    Relationship,
    Abundant,
}

impl Section {
    fn detect(lower: &str) -> Option<Self> {
        if lower.contains("general character list") {
            Some(Section::General)
        } else if lower.contains("inappropriate character identit") {
            Some(Section::Identity)
        } else if lower.contains("inappropriate character relationship") {
            Some(Section::Relationship)
        } else if lower.contains("abundant relationship") {
            Some(Section::Abundant)
        } else {
            None
        }
    }

    fn key(self) -> &'static str {
        match self {
            Section::General => "general",
            Section::Identity => "identity",
            Section::Relationship => "relationship",
            Section::Abundant => "abundant",
        }
    }
}

fn parse_flag(v: &str) -> Option<bool> {
    match fold_label(v).as_str() {
        "true" | "yes" => Some(true),
        "false" | "no" => Some(false),
        _ => None,
    }
}

/// Parses the four numbered lists. Under the general-character list a
/// `Character:` line opens an entry that needs a `Last Name: True/False`
/// line; entries without a readable flag are dropped. The other lists take
/// one value per line; a `[S] -> [O]: term` line contributes `term`.
///
/// Record keys: `section` plus `character` and `last_name` (general) or
/// `value` (the other lists).
pub fn parse_filter(text: &str) -> ParsedAgentOutput {
    let mut out = ParsedAgentOutput::new(AGENT);
    let mut section = None;
    let mut entry: Option<(String, Option<bool>)> = None;
    let close = |entry: &mut Option<(String, Option<bool>)>, out: &mut ParsedAgentOutput| {
        if let Some((name, flag)) = entry.take() {
            match flag {
                Some(f) => out.push(BTreeMap::from([
                    ("section".to_owned(), "general".to_owned()),
                    ("character".to_owned(), name),
                    ("last_name".to_owned(), f.to_string()),
                ])),
                None => out.dropped_lines += 1,
            }
        }
    };
    for raw in text.lines() {
        let line = clean_line(raw);
        if line.is_empty() {
            continue;
        }
        if let Some(s) = Section::detect(&line.to_ascii_lowercase()) {
            close(&mut entry, &mut out);
            section = Some(s);
            out.structured = true;
            continue;
        }
        match section {
            Some(Section::General) => {
                if let Some(v) = label_value(&line, "Character") {
                    close(&mut entry, &mut out);
                    entry = Some((strip_value(v).to_owned(), None));
                } else if let Some(v) = label_value(&line, "Last Name") {
                    match entry.as_mut() {
                        Some(e) => e.1 = parse_flag(strip_value(v)),
                        None => out.dropped_lines += 1,
                    }
                }
            }
            Some(s) => {
                let mut value = strip_value(&line);
                if value.contains("->") {
                    if let Some((_, term)) = value.rsplit_once(':') {
                        value = strip_value(term);
                    }
                }
                if !is_not_provided(value) && !value.starts_with("Continue") && !value.starts_with("Write ") {
                    out.push(BTreeMap::from([
                        ("section".to_owned(), s.key().to_owned()),
                        ("value".to_owned(), value.to_owned()),
                    ]));
                }
            }
            None => {}
        }
    }
    close(&mut entry, &mut out);
    out
}

fn identity_list(crs: &Crs) -> String {
    let roles: BTreeSet<&str> = crs.graph().nodes().filter_map(|n| n.role()).collect();
    if roles.is_empty() {
        return "Information not provided".into();
    }
    roles.into_iter().collect::<Vec<_>>().join("\n")
}

fn relationship_list(crs: &Crs) -> String {
    let g = crs.graph();
    let name = |id| g.node(id).map(|n| n.name_set()).unwrap_or_default();
    let lines: Vec<String> = crs
        .relations()
        .iter()
        .filter_map(|r| {
            r.explicit
                .as_ref()
                .map(|e| format!("{} -> {}: {e}", name(r.subject), name(r.object)))
        })
        .collect();
    if lines.is_empty() {
        return "Information not provided".into();
    }
    lines.join("\n")
}

/// Removes generic placeholder characters and clears identities and
/// relationships the model marks as transient. A node is removed only when
/// it is listed as general, has no last name and is a supporting character.
/// Overused relationships are reported, not changed.
pub fn filter_irrelevant(
    ctx: &AgentContext,
    backend: &dyn LlmBackend,
    options: &AgentOptions,
) -> Result<AgentOutcome, AgentError> {
    ctx.crs.require_stage(Stage::RelationsExtracted)?;
    require_nonempty(&ctx.crs)?;
    let mut report = AgentReport::new(AGENT);
    let prompt = options.prompts.filter.render(&[
        ("character_list", &character_list(ctx.crs.graph())),
        ("identity_list", &identity_list(&ctx.crs)),
        ("relationship_list", &relationship_list(&ctx.crs)),
    ])?;
    let parsed = query(AGENT, backend, &prompt, options, parse_filter, &mut report)?;

    let mut crs = ctx.crs.clone();
    for rec in &parsed.records {
        match rec["section"].as_str() {
            "general" => {
                if rec["last_name"] == "true" {
                    continue;
                }
                let Some(id) = resolve_name_set(crs.graph(), &rec["character"]) else {
                    report.warn("unresolved_names", &rec["character"]);
                    continue;
                };
                if crs.graph().node(id).map(|n| n.tier()) == Some(Tier::Supporting) {
                    crs.remove_node(id)?;
                    report.bump("removed_nodes");
                } else {
                    report.bump("tier_guarded");
                }
            }
            "identity" => {
                let key = fold_label(&rec["value"]);
                let hits: Vec<_> = crs
                    .graph()
                    .nodes()
                    .filter(|n| n.role().is_some_and(|r| fold_label(r) == key))
                    .map(|n| n.id())
                    .collect();
                for id in hits {
                    crs.set_role(id, None)?;
                    report.bump("cleared_identities");
                }
            }
            "relationship" => {
                let key = fold_label(&rec["value"]);
                let n = crs.clear_explicit_where(|e| fold_label(e) == key);
                *report.counters.entry("cleared_relationships".into()).or_default() += n;
            }
            _ => {
                report.bump("abundant_relationships");
                report.notes.push(format!("abundant relationship: {}", rec["value"]));
            }
        }
    }
    crs.advance(Stage::Filtered)?;
    Ok(AgentOutcome { crs, report })
}
