use std::collections::BTreeMap;

use super::{
    character_list, clean_line, is_not_provided, label_value, query, require_nonempty, resolve_name_set, strip_value,
    AgentContext, AgentError, AgentOptions, AgentOutcome, AgentReport, ParsedAgentOutput,
};
use crate::backend::LlmBackend;
use crate::model::{fold_label, Stage};

const AGENT: &str = "groups";

/// Parses the `Family Group List: [..]` / `Other Group List: [..]` lines
/// and the per-character `Character:` / `Group:` / `Family:` blocks. A
/// character without a group line is dropped.
///
/// Record keys: either `declared` and `kind` (one per listed group), or
/// `character`, `group` and optionally `family`.
pub fn parse_groups(text: &str) -> ParsedAgentOutput {
    let mut out = ParsedAgentOutput::new(AGENT);
    let mut current: Option<BTreeMap<String, String>> = None;
    let close = |cur: &mut Option<BTreeMap<String, String>>, out: &mut ParsedAgentOutput| {
        if let Some(rec) = cur.take() {
            if rec.contains_key("group") {
                out.push(rec);
            } else {
                out.dropped_lines += 1;
            }
        }
    };
    for raw in text.lines() {
        let line = clean_line(raw);
        let list = label_value(&line, "Family Group List")
            .map(|v| ("family", v))
            .or_else(|| label_value(&line, "Other Group List").map(|v| ("other", v)));
        if let Some((kind, v)) = list {
            out.structured = true;
            for name in strip_value(v).split(',').map(strip_value).filter(|n| !n.is_empty()) {
                if !is_not_provided(name) {
                    out.push(BTreeMap::from([
                        ("declared".to_owned(), name.to_owned()),
                        ("kind".to_owned(), kind.to_owned()),
                    ]));
                }
            }
        } else if let Some(v) = label_value(&line, "Character") {
            close(&mut current, &mut out);
            current = Some(BTreeMap::from([("character".to_owned(), strip_value(v).to_owned())]));
        } else if let Some(v) = label_value(&line, "Group") {
            if let Some(rec) = current.as_mut() {
                rec.insert("group".into(), strip_value(v).to_owned());
            }
        } else if let Some(v) = label_value(&line, "Family") {
            if let Some(rec) = current.as_mut() {
                rec.insert("family".into(), strip_value(v).to_owned());
            }
        }
    }
    close(&mut current, &mut out);
    out
}

/// Places characters into exclusive named groups. Generic labels are
/// rejected, "No Group" leaves a character ungrouped and only the first
/// assignment of a character counts.
pub fn assign_groups(
    ctx: &AgentContext,
    backend: &dyn LlmBackend,
    options: &AgentOptions,
) -> Result<AgentOutcome, AgentError> {
    ctx.crs.require_stage(Stage::RolesAssigned)?;
    require_nonempty(&ctx.crs)?;
    let mut report = AgentReport::new(AGENT);
    let prompt = options.prompts.groups.render(&[
        ("treatment", &ctx.treatment),
        ("summary", &ctx.summary_text()),
        ("character_list", &character_list(ctx.crs.graph())),
    ])?;
    let parsed = query(AGENT, backend, &prompt, options, parse_groups, &mut report)?;

    let generic: Vec<String> = options.generic_group_labels.iter().map(|g| fold_label(g)).collect();
    let is_generic = |name: &str| generic.contains(&fold_label(name));
    let mut declared: BTreeMap<String, String> = BTreeMap::new();
    for rec in parsed.records.iter().filter(|r| r.contains_key("declared")) {
        let name = &rec["declared"];
        if is_generic(name) {
            report.warn("generic_groups", name);
        } else {
            declared.entry(fold_label(name)).or_insert_with(|| name.clone());
        }
    }

    let mut crs = ctx.crs.clone();
    for rec in parsed.records.iter().filter(|r| r.contains_key("character")) {
        let group = rec["group"].as_str();
        if is_not_provided(group) || fold_label(group) == "no group" {
            continue;
        }
        if is_generic(group) {
            report.warn("generic_groups", group);
            continue;
        }
        let Some(id) = resolve_name_set(crs.graph(), &rec["character"]) else {
            report.warn("unresolved_names", &rec["character"]);
            continue;
        };
        let name = match declared.get(&fold_label(group)) {
            Some(spelling) => spelling.clone(),
            None => {
                if !declared.is_empty() {
                    report.warn("undeclared_groups", group);
                }
                group.to_owned()
            }
        };
        if !crs.assign_group(id, &name)? {
            report.warn("duplicate_assignments", &rec["character"]);
        }
    }
    crs.advance(Stage::Grouped)?;
    Ok(AgentOutcome { crs, report })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::model::{Crs, Tier};
    use std::collections::BTreeSet;

    fn sample() -> Crs {
        crs(
            Stage::RolesAssigned,
            &[("A", Tier::Main), ("B", Tier::Sub), ("C", Tier::Supporting)],
            &[("A", "B", 1), ("B", "C", 1)],
        )
    }

    #[test]
    fn parses_lists_and_blocks() {
        let p = parse_groups(
            "Use of <Character Information> as the primary source: True\n**Family Group List: [Kim family, Park family]**\n**Other Group List: [Cardiothoracic staff]**\n1. **Character: [A]**\n  **Group: Cardiothoracic staff**\n  **Family: No**\n2. **Character: [B]**\n",
        );
        assert_eq!(p.records.len(), 4);
        assert_eq!(p.records[0]["declared"], "Kim family");
        assert_eq!(p.records[2]["kind"], "other");
        assert_eq!(p.records[3]["group"], "Cardiothoracic staff");
        assert_eq!(p.dropped_lines, 1);
    }

    #[test]
    fn builds_exclusive_groups() {
        let c = sample();
        let text = "Other Group List: [Cardiothoracic staff]\n1. Character: [A]\n Group: Cardiothoracic staff\n2. Character: [B]\n Group: cardiothoracic staff\n3. Character: [C]\n Group: No Group\n";
        let out = assign_groups(&ctx(c.clone()), &mock(&[text]), &AgentOptions::default()).unwrap();
        let expected = BTreeSet::from([id(&c, "A"), id(&c, "B")]);
        assert_eq!(out.crs.groups().len(), 1);
        assert_eq!(out.crs.groups()["Cardiothoracic staff"], expected);
        assert_eq!(out.crs.group_of(id(&c, "C")), None);
        assert_eq!(out.crs.stage(), Stage::Grouped);
    }

    #[test]
    fn second_assignment_ignored() {
        let c = sample();
        let text = "1. Character: [A]\n Group: Jurors\n2. Character: [A]\n Group: Planning team\n";
        let out = assign_groups(&ctx(c.clone()), &mock(&[text]), &AgentOptions::default()).unwrap();
        assert_eq!(out.crs.group_of(id(&c, "A")), Some("Jurors"));
        assert!(!out.crs.groups().contains_key("Planning team"));
        assert_eq!(out.report.count("duplicate_assignments"), 1);
    }

    #[test]
    fn generic_labels_and_unknown_nodes() {
        let text = "Other Group List: [Others]\n1. Character: [A]\n Group: Others\n2. Character: [Zed]\n Group: Jurors\n3. Character: [B]\n Group: Jurors\n";
        let out = assign_groups(&ctx(sample()), &mock(&[text]), &AgentOptions::default()).unwrap();
        assert_eq!(out.crs.groups().keys().collect::<Vec<_>>(), ["Jurors"]);
        assert_eq!(out.report.count("generic_groups"), 2);
        assert_eq!(out.report.count("unresolved_names"), 1);
        out.crs.validate().unwrap();
    }
}
