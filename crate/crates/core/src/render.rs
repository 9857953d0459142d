//! Graphviz DOT export of a refined CRS.
//!
//! Node size follows tier, fill color follows group (palette cycled in
//! lexicographic group order), edges carry the explicit relation as label
//! and implicit relations as a styled edge class. Output is deterministic.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{Crs, Stage, Tier};

pub const PALETTE: [&str; 12] = [
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462", "#b3de69", "#fccde5", "#bc80bd", "#ccebc5",
    "#ffed6f", "#a6cee3",
];

pub const UNGROUPED_COLOR: &str = "#e0e0e0";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("rendering needs a CRS at stage filtered or later, found {0}")]
    TooEarly(Stage),
}

fn size(tier: Tier) -> &'static str {
    match tier {
        Tier::Main => "1.6",
        Tier::Sub => "1.1",
        Tier::Supporting => "0.7",
    }
}

fn quote(s: &str) -> String {
    format!(
        "\"{}\"",
        s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
    )
}

pub fn to_dot(crs: &Crs) -> Result<String, RenderError> {
    if crs.stage() < Stage::Filtered {
        return Err(RenderError::TooEarly(crs.stage()));
    }
    let g = crs.graph();
    let colors: Vec<(&str, &str)> = crs
        .groups()
        .keys()
        .enumerate()
        .map(|(i, name)| (name.as_str(), PALETTE[i % PALETTE.len()]))
        .collect();
    let color_of = |group: Option<&str>| {
        group
            .and_then(|g| colors.iter().find(|(n, _)| *n == g))
            .map_or(UNGROUPED_COLOR, |(_, c)| *c)
    };

    let mut out = String::new();
    let _ = writeln!(out, "// legend");
    if colors.is_empty() {
        let _ = writeln!(out, "//   (no groups) {UNGROUPED_COLOR}");
    }
    for (name, color) in &colors {
        let _ = writeln!(out, "//   {name}: {color}");
    }
    let _ = writeln!(out, "//   node size: main 1.6, sub 1.1, supporting 0.7");
    let _ = writeln!(out, "//   dashed edge: implicit relation");
    out.push_str("graph crs {\n");
    out.push_str("  node [shape=circle, style=filled, fixedsize=true, fontsize=10];\n");
    out.push_str("  edge [fontsize=9];\n");
    for node in g.nodes() {
        let mut label = node.canonical_name().to_owned();
        if let Some(role) = node.role() {
            label.push('\n');
            label.push_str(role);
        }
        let _ = writeln!(
            out,
            "  {} [label={}, width={}, fillcolor={}, class={}];",
            node.id(),
            quote(&label),
            size(node.tier()),
            quote(color_of(node.group())),
            quote(match node.tier() {
                Tier::Main => "main",
                Tier::Sub => "sub",
                Tier::Supporting => "supporting",
            }),
        );
    }
    for rel in crs.relations() {
        let mut attrs = vec!["dir=forward".to_owned()];
        if let Some(e) = &rel.explicit {
            attrs.push(format!("label={}", quote(e)));
        }
        if let Some(i) = rel.implicit {
            attrs.push("style=dashed".to_owned());
            attrs.push(format!("class={}", quote(&format!("implicit {}", i.as_str()))));
            attrs.push(format!("tooltip={}", quote(i.as_str())));
        }
        let _ = writeln!(out, "  {} -- {} [{}];", rel.subject, rel.object, attrs.join(", "));
    }
    for (a, b, w) in g.edges() {
        if crs.relations().iter().any(|r| r.connects(a, b)) {
            continue;
        }
        let _ = writeln!(
            out,
            "  {a} -- {b} [color=\"#999999\", penwidth={:.1}];",
            1.0 + (w as f64).ln()
        );
    }
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CharacterGraph, ImplicitRelation, Relation};

    fn sample(groups: bool) -> Crs {
        let mut g = CharacterGraph::new();
        let a = g.add_node("Ha-na", Tier::Main).unwrap();
        let b = g.add_node("Du-ri", Tier::Sub).unwrap();
        let c = g.add_node("Set", Tier::Supporting).unwrap();
        g.add_interaction(a, b, 3).unwrap();
        g.add_interaction(b, c, 1).unwrap();
        let mut crs = Crs::new(g, Stage::Filtered);
        crs.set_relations(vec![Relation {
            subject: a,
            object: b,
            explicit: Some("older \"sister\"".into()),
            implicit: Some(ImplicitRelation::parse("Trust").unwrap()),
        }])
        .unwrap();
        crs.advance(Stage::Grouped).unwrap();
        if groups {
            crs.assign_group(a, "Kim family").unwrap();
            crs.assign_group(b, "Kim family").unwrap();
            crs.assign_group(c, "Accounting").unwrap();
        }
        crs
    }

    #[test]
    fn groups_get_distinct_palette_colors() {
        let dot = to_dot(&sample(true)).unwrap();
        assert!(dot.contains("//   Accounting: #8dd3c7"));
        assert!(dot.contains("//   Kim family: #ffffb3"));
        assert!(dot.contains("fillcolor=\"#ffffb3\""));
        assert!(dot.contains("fillcolor=\"#8dd3c7\""));
        assert!(!dot.contains(UNGROUPED_COLOR));
    }

    #[test]
    fn ungrouped_uses_default_color() {
        let dot = to_dot(&sample(false)).unwrap();
        assert_eq!(dot.matches(&format!("fillcolor=\"{UNGROUPED_COLOR}\"")).count(), 3);
    }

    #[test]
    fn sizes_labels_and_edges() {
        let dot = to_dot(&sample(true)).unwrap();
        assert!(dot.contains("n0 [label=\"Ha-na\", width=1.6"));
        assert!(dot.contains("n2 [label=\"Set\", width=0.7"));
        assert!(dot
            .contains("n0 -- n1 [dir=forward, label=\"older \\\"sister\\\"\", style=dashed, class=\"implicit Trust\""));
        assert!(dot.contains("n1 -- n2 [color="));
        assert_eq!(to_dot(&sample(true)).unwrap(), dot);
    }

    #[test]
    fn early_stage_rejected() {
        let crs = Crs::new(CharacterGraph::new(), Stage::Merged);
        assert_eq!(to_dot(&crs), Err(RenderError::TooEarly(Stage::Merged)));
    }
}
