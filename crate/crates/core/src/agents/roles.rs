use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use super::{
    character_list, clean_line, is_not_provided, label_value, query, record, require_nonempty, resolve_name_set,
    strip_value, AgentContext, AgentError, AgentOptions, AgentOutcome, AgentReport, ParsedAgentOutput,
};
use crate::backend::LlmBackend;
use crate::model::{fold_label, NodeId, Stage, Tier};

const AGENT: &str = "roles";

fn inline_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^(?:correct:\s*)?\[([^\]]+)\]\s*[-–:]\s*role\s*:\s*(.+)$").expect("valid regex"))
}

/// Parses `Character:` / `Role:` / `Confidence:` blocks, and also the
/// single-line form `[name set] - Role: role`. A character without a role
/// line is dropped.
///
/// Record keys: `character`, `role`, and `confidence` when given.
pub fn parse_roles(text: &str) -> ParsedAgentOutput {
    let mut out = ParsedAgentOutput::new(AGENT);
    let mut current: Option<BTreeMap<String, String>> = None;
    let close = |cur: &mut Option<BTreeMap<String, String>>, out: &mut ParsedAgentOutput| {
        if let Some(rec) = cur.take() {
            if rec.contains_key("role") {
                out.push(rec);
            } else {
                out.dropped_lines += 1;
            }
        }
    };
    for raw in text.lines() {
        let line = clean_line(raw);
        if let Some(v) = label_value(&line, "Character") {
            close(&mut current, &mut out);
            current = Some(record(&[("character", strip_value(v))]));
        } else if let Some(cap) = inline_pattern().captures(&line) {
            close(&mut current, &mut out);
            let role = cap[2].split(" (").next().unwrap_or_default();
            out.push(record(&[("character", cap[1].trim()), ("role", strip_value(role))]));
        } else if let Some(v) = label_value(&line, "Role") {
            if let Some(rec) = current.as_mut() {
                rec.insert("role".into(), strip_value(v).to_owned());
            }
        } else if let Some(v) = label_value(&line, "Confidence") {
            if let Some(rec) = current.as_mut() {
                let level = strip_value(v).split([' ', '-', ',']).next().unwrap_or_default();
                rec.insert("confidence".into(), strip_value(level).to_owned());
            }
        }
    }
    close(&mut current, &mut out);
    out
}

/// Drops the comma-separated parts of `role` that are age terms. Returns
/// the remaining role, if any, and whether anything was removed.
pub fn screen_role(role: &str, denylist: &[String]) -> (Option<String>, bool) {
    let deny: Vec<String> = denylist.iter().map(|d| fold_label(d)).collect();
    let mut rejected = false;
    let kept: Vec<&str> = role
        .split(',')
        .map(str::trim)
        .filter(|part| !part.is_empty())
        .filter(|part| {
            let hit = deny.contains(&fold_label(part));
            rejected |= hit;
            !hit
        })
        .collect();
    ((!kept.is_empty()).then(|| kept.join(", ")), rejected)
}

/// Assigns one main role per character. Supporting characters the model
/// addressed but could not give a usable role are removed.
pub fn assign_roles(
    ctx: &AgentContext,
    backend: &dyn LlmBackend,
    options: &AgentOptions,
) -> Result<AgentOutcome, AgentError> {
    ctx.crs.require_stage(Stage::Filtered)?;
    require_nonempty(&ctx.crs)?;
    let mut report = AgentReport::new(AGENT);
    let prompt = options.prompts.roles.render(&[
        ("treatment", &ctx.treatment),
        ("summary", &ctx.summary_text()),
        ("character_list", &character_list(ctx.crs.graph())),
    ])?;
    let parsed = query(AGENT, backend, &prompt, options, parse_roles, &mut report)?;

    let mut crs = ctx.crs.clone();
    let mut addressed: BTreeMap<NodeId, Option<String>> = BTreeMap::new();
    for rec in &parsed.records {
        let Some(id) = resolve_name_set(crs.graph(), &rec["character"]) else {
            report.warn("unresolved_names", &rec["character"]);
            continue;
        };
        if addressed.contains_key(&id) {
            report.warn("duplicate_records", &rec["character"]);
            continue;
        }
        let role = if is_not_provided(&rec["role"]) {
            None
        } else {
            let (kept, rejected) = screen_role(&rec["role"], &options.age_denylist);
            if rejected {
                report.warn("denylisted_roles", &rec["role"]);
            }
            kept
        };
        addressed.insert(id, role);
    }

    for (id, role) in addressed {
        let tier = crs.graph().node(id).map(|n| n.tier());
        if role.is_none() && tier == Some(Tier::Supporting) {
            crs.remove_node(id)?;
            report.bump("removed_nodes");
        } else {
            crs.set_role(id, role)?;
        }
    }
    crs.advance(Stage::RolesAssigned)?;
    Ok(AgentOutcome { crs, report })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::model::Crs;

    fn sample() -> Crs {
        crs(
            Stage::Filtered,
            &[
                ("lawyer Kim", Tier::Main),
                ("Grandpa", Tier::Supporting),
                ("Driver", Tier::Supporting),
                ("Jin", Tier::Sub),
            ],
            &[
                ("lawyer Kim", "Grandpa", 1),
                ("lawyer Kim", "Driver", 1),
                ("lawyer Kim", "Jin", 1),
            ],
        )
    }

    #[test]
    fn parses_blocks_and_inline_form() {
        let p = parse_roles(
            "1. **Character: [lawyer Kim]**\n  **Role: prosecutor**\n  **Confidence: High - stated.**\n2. **Character: [Jin]**\nCorrect: [Driver] - Role: chauffeur (based on the script)",
        );
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[0]["role"], "prosecutor");
        assert_eq!(p.records[0]["confidence"], "High");
        assert_eq!(p.records[1]["character"], "Driver");
        assert_eq!(p.records[1]["role"], "chauffeur");
        assert_eq!(p.dropped_lines, 1);
    }

    #[test]
    fn denylist_screens_components() {
        let deny: Vec<String> = super::super::DEFAULT_AGE_TERMS.iter().map(|s| s.to_string()).collect();
        assert_eq!(screen_role("elderly person", &deny), (None, true));
        assert_eq!(screen_role("doctor, Adult", &deny), (Some("doctor".into()), true));
        assert_eq!(
            screen_role("group heir, chairman Jang's son", &deny).0.as_deref(),
            Some("group heir, chairman Jang's son")
        );
    }

    #[test]
    fn assigns_and_drops() {
        let c = sample();
        let text = "1. Character: [lawyer Kim]\n Role: prosecutor\n Confidence: High\n2. Character: [Grandpa]\n Role: elderly person\n3. Character: [Jin]\n Role: Information not provided\n";
        let out = assign_roles(&ctx(c.clone()), &mock(&[text]), &AgentOptions::default()).unwrap();
        let g = out.crs.graph();
        assert_eq!(g.node(id(&c, "lawyer Kim")).unwrap().role(), Some("prosecutor"));
        assert!(
            g.resolve("Grandpa").is_none(),
            "denylisted role leaves a supporting node roleless"
        );
        let jin = g.node(id(&c, "Jin")).unwrap();
        assert_eq!(jin.role(), None, "sub tier survives without a role");
        assert!(g.resolve("Driver").is_some(), "omitted characters are unchanged");
        assert_eq!(out.report.count("denylisted_roles"), 1);
        assert_eq!(out.report.count("removed_nodes"), 1);
        assert_eq!(out.crs.stage(), Stage::RolesAssigned);
    }

    #[test]
    fn supporting_node_without_role_is_dropped() {
        let text = "1. Character: [Driver]\n Role: Information not provided.\n";
        let out = assign_roles(&ctx(sample()), &mock(&[text]), &AgentOptions::default()).unwrap();
        assert!(out.crs.graph().resolve("Driver").is_none());
    }
}
