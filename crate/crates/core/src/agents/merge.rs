use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use super::{
    character_list, clean_line, query, record, require_nonempty, resolve_name_set, starts_with_number, AgentContext,
    AgentError, AgentOptions, AgentOutcome, AgentReport, ParsedAgentOutput,
};
use crate::backend::LlmBackend;
use crate::model::{fold_label, NodeId, Stage};

const AGENT: &str = "merge";
const NO_SAME: &str = "No Same Person";

fn pair_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[([^\[\]]+)\]\s*[-–—]\s*\[([^\[\]]+)\]").expect("valid regex"))
}

/// Parses `[NameSetA]-[NameSetB]` pairs, one per line. A right-hand side of
/// `No Same Person` yields a record with `same = false`. Numbered lines
/// without a pair count as dropped; evidence lines are ignored.
///
/// Record keys: `first`, `second`, `same`.
pub fn parse_merge(text: &str) -> ParsedAgentOutput {
    let mut out = ParsedAgentOutput::new(AGENT);
    for raw in text.lines() {
        let line = clean_line(raw);
        if let Some(cap) = pair_pattern().captures(&line) {
            let (first, second) = (cap[1].trim(), cap[2].trim());
            let same = fold_label(second) != fold_label(NO_SAME) && fold_label(first) != fold_label(NO_SAME);
            out.push(record(&[
                ("first", first),
                ("second", second),
                ("same", if same { "true" } else { "false" }),
            ]));
        } else if starts_with_number(raw) && !line.is_empty() {
            out.dropped_lines += 1;
        }
    }
    out
}

fn find(parent: &mut BTreeMap<NodeId, NodeId>, x: NodeId) -> NodeId {
    let p = *parent.get(&x).unwrap_or(&x);
    if p == x {
        return x;
    }
    let root = find(parent, p);
    parent.insert(x, root);
    root
}

/// Collapses every pair the model reports as the same person. Pairs are
/// applied transitively (A=B and B=C merge all three).
pub fn merge_duplicates(
    ctx: &AgentContext,
    backend: &dyn LlmBackend,
    options: &AgentOptions,
) -> Result<AgentOutcome, AgentError> {
    ctx.crs.require_stage(Stage::Selected)?;
    require_nonempty(&ctx.crs)?;
    let mut report = AgentReport::new(AGENT);
    let prompt = options.prompts.merge.render(&[
        ("treatment", &ctx.treatment),
        ("summary", &ctx.summary_text()),
        ("character_list", &character_list(ctx.crs.graph())),
    ])?;
    let parsed = query(AGENT, backend, &prompt, options, parse_merge, &mut report)?;

    let mut crs = ctx.crs.clone();
    let mut parent = BTreeMap::new();
    for rec in &parsed.records {
        if rec["same"] != "true" {
            continue;
        }
        let a = resolve_name_set(crs.graph(), &rec["first"]);
        let b = resolve_name_set(crs.graph(), &rec["second"]);
        match (a, b) {
            (Some(a), Some(b)) if a == b => report.warn("self_pairs", &rec["first"]),
            (Some(a), Some(b)) => {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent.insert(ra.max(rb), ra.min(rb));
                }
            }
            _ => report.warn("unresolved_names", format!("[{}]-[{}]", rec["first"], rec["second"])),
        }
    }

    let members: Vec<NodeId> = parent.keys().copied().collect();
    let mut components: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for id in members {
        let root = find(&mut parent, id);
        if root != id {
            components.entry(root).or_default().push(id);
        }
    }
    for (root, others) in components {
        let mut keep = root;
        for other in others {
            keep = crs.merge_nodes(keep, other)?;
            report.bump("merged_nodes");
        }
    }
    crs.advance(Stage::Merged)?;
    Ok(AgentOutcome { crs, report })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::model::Tier;

    #[test]
    fn parses_pairs_and_no_same_person() {
        let p = parse_merge(
            "<Character Pairs>\n1. **[Lee Ho]-[King]\n   **Evidence: King is his title.**\n2. **[Hwang Gwi-in]-[No Same Person]\n3. **[Lawyer Hong] - [Hong Ji-yoon]: same.**\n4. nothing here",
        );
        assert_eq!(p.records.len(), 3);
        assert_eq!(p.records[0]["first"], "Lee Ho");
        assert_eq!(p.records[0]["second"], "King");
        assert_eq!(p.records[1]["same"], "false");
        assert_eq!(p.records[2]["second"], "Hong Ji-yoon");
        assert_eq!(p.dropped_lines, 1);
    }

    #[test]
    fn merges_professor_alias() {
        let c = crs(
            Stage::Selected,
            &[
                ("Young-min Cha", Tier::Main),
                ("Professor Cha", Tier::Supporting),
                ("Nurse", Tier::Supporting),
            ],
            &[
                ("Young-min Cha", "Nurse", 2),
                ("Professor Cha", "Nurse", 3),
                ("Young-min Cha", "Professor Cha", 1),
            ],
        );
        let out = merge_duplicates(
            &ctx(c),
            &mock(&["1. **[Young-min Cha]-[Professor Cha]\n2. **[Nurse]-[No Same Person]"]),
            &AgentOptions::default(),
        )
        .unwrap();
        let g = out.crs.graph();
        assert_eq!(g.node_count(), 2);
        let cha = g.resolve("Professor Cha").unwrap();
        assert_eq!(g.resolve("Young-min Cha"), Some(cha));
        assert_eq!(g.node(cha).unwrap().tier(), Tier::Main);
        assert_eq!(g.weight(cha, g.resolve("Nurse").unwrap()), 5);
        assert_eq!(out.crs.stage(), Stage::Merged);
    }

    #[test]
    fn no_same_person_only_changes_stage() {
        let c = crs(
            Stage::Selected,
            &[("A", Tier::Main), ("B", Tier::Sub)],
            &[("A", "B", 4)],
        );
        let out = merge_duplicates(
            &ctx(c.clone()),
            &mock(&["1. [A]-[No Same Person]\n2. [B]-[No Same Person]"]),
            &AgentOptions::default(),
        )
        .unwrap();
        assert_eq!(out.crs.graph(), c.graph());
        assert_eq!(out.crs.stage(), Stage::Merged);
    }

    #[test]
    fn transitive_chain_and_unresolved_names() {
        let c = crs(
            Stage::Selected,
            &[
                ("A", Tier::Supporting),
                ("B", Tier::Sub),
                ("C", Tier::Supporting),
                ("D", Tier::Main),
            ],
            &[("A", "D", 1), ("B", "D", 2), ("C", "D", 3)],
        );
        let out = merge_duplicates(
            &ctx(c),
            &mock(&["1. [A]-[B]\n2. [B]-[C]\n3. [Ghost]-[D]\n4. [D]-[D]"]),
            &AgentOptions::default(),
        )
        .unwrap();
        let g = out.crs.graph();
        assert_eq!(g.node_count(), 2);
        let abc = g.resolve("C").unwrap();
        assert_eq!(g.resolve("A"), Some(abc));
        assert_eq!(g.weight(abc, g.resolve("D").unwrap()), 6);
        assert_eq!(g.node(abc).unwrap().tier(), Tier::Sub);
        assert_eq!(out.report.count("unresolved_names"), 1);
        assert_eq!(out.report.count("self_pairs"), 1);
        assert_eq!(out.report.count("merged_nodes"), 2);
    }

    #[test]
    fn wrong_stage_rejected() {
        let c = crs(Stage::Merged, &[("A", Tier::Main)], &[]);
        assert!(matches!(
            merge_duplicates(&ctx(c), &mock(&[]), &AgentOptions::default()),
            Err(AgentError::Model(_))
        ));
    }
}
