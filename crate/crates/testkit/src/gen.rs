//! proptest strategies producing valid model and document instances.

use std::collections::{BTreeMap, BTreeSet};

use proptest::collection::{btree_set, vec};
use proptest::option;
use proptest::prelude::*;
use proptest::sample::select;

use crs_core::eval::{aggregate, EvalCounts, EvalReport, MetricValue, SelectionComparison, SelectionScores};
use crs_core::model::{GtCharacter, KeyRelation, Relation, IMPLICIT_TERMS};
use crs_core::persist::{
    ComparisonDocument, GraphDocument, NamedReport, ReportDocument, SelectionDocument, SelectionMethod,
};
use crs_core::selection::{RoundScores, SelectionResult};
use crs_core::{CharacterGraph, Crs, GroundTruth, NodeId, SpoTriplet, Stage, Tier};

/// A character name: romanized given/family name or a Hangul name.
pub fn name() -> impl Strategy<Value = String> {
    prop_oneof![
        "[A-Z][a-z]{1,6}( [A-Z][a-z]{1,6})?",
        "[가-힣]{2,3}",
        "[A-Z][a-z]{1,4}-[a-z]{1,3} [A-Z][a-z]{1,4}",
    ]
}

/// Free text: role descriptions, explicit relations, group names.
pub fn label() -> impl Strategy<Value = String> {
    "[a-z][a-z ]{0,14}[a-z]|[가-힣]{1,4}".prop_map(|s| s.trim().to_owned())
}

pub fn tier() -> impl Strategy<Value = Tier> {
    prop_oneof![Just(Tier::Main), Just(Tier::Sub), Just(Tier::Supporting)]
}

pub fn stage() -> impl Strategy<Value = Stage> {
    select(Stage::ALL.to_vec())
}

/// A graph with up to `max_nodes` uniquely named characters (some with an
/// extra alias and a role) and up to `max_edges` weighted interactions.
pub fn graph(max_nodes: usize, max_edges: usize) -> impl Strategy<Value = CharacterGraph> {
    btree_set(name(), 1..=max_nodes.max(1)).prop_flat_map(move |names| {
        let n = names.len();
        (
            Just(names),
            vec((tier(), any::<bool>(), option::of(label())), n),
            vec((0..n, 0..n, 1u64..20), 0..=max_edges),
        )
            .prop_map(|(names, attrs, edges)| {
                let mut g = CharacterGraph::new();
                let ids: Vec<NodeId> = names
                    .iter()
                    .zip(&attrs)
                    .map(|(name, (tier, alias, role))| {
                        let id = g.add_node(name, *tier).unwrap();
                        if *alias {
                            g.add_alias(id, &format!("{name}-ssi")).unwrap();
                        }
                        g.set_role(id, role.clone()).unwrap();
                        id
                    })
                    .collect();
                for (a, b, w) in edges {
                    if a != b {
                        g.add_interaction(ids[a], ids[b], w).unwrap();
                    }
                }
                g
            })
    })
}

fn implicit_term() -> impl Strategy<Value = crs_core::model::ImplicitRelation> {
    select(IMPLICIT_TERMS.to_vec()).prop_map(|t| crs_core::model::ImplicitRelation::parse(t).unwrap())
}

/// A valid CRS at `stage`. Relations appear from relation extraction on,
/// roles from role assignment on and groups only once grouped.
pub fn crs_at(stage: Stage) -> impl Strategy<Value = Crs> {
    graph(12, 24).prop_flat_map(move |g| {
        let n = g.node_count();
        (
            Just(g),
            vec(
                (0..n, 0..n, option::of(label()), option::of(implicit_term())),
                0..=2 * n,
            ),
            vec(option::of(0u8..4), n),
        )
            .prop_map(move |(mut g, rels, groups)| {
                let ids: Vec<NodeId> = g.node_ids().collect();
                if stage < Stage::RolesAssigned {
                    for id in &ids {
                        g.set_role(*id, None).unwrap();
                    }
                }
                let mut crs = Crs::new(g, stage);
                if stage >= Stage::RelationsExtracted {
                    let mut seen = BTreeSet::new();
                    let relations = rels
                        .into_iter()
                        .filter(|(s, o, _, _)| s != o && seen.insert((*s, *o)))
                        .map(|(s, o, explicit, implicit)| Relation {
                            subject: ids[s],
                            object: ids[o],
                            explicit,
                            implicit,
                        })
                        .filter(|r| !r.is_empty())
                        .collect();
                    crs.set_relations(relations).unwrap();
                }
                if stage == Stage::Grouped {
                    for (id, group) in ids.iter().zip(groups) {
                        if let Some(k) = group {
                            crs.assign_group(*id, &format!("Group {k}")).unwrap();
                        }
                    }
                }
                crs
            })
    })
}

pub fn any_crs() -> impl Strategy<Value = Crs> {
    stage().prop_flat_map(crs_at)
}

pub fn graph_document() -> impl Strategy<Value = GraphDocument> {
    graph(16, 40).prop_map(GraphDocument::new)
}

pub fn triplet() -> impl Strategy<Value = SpoTriplet> {
    (name(), "[^|\n]{1,24}", name(), 0usize..500)
        .prop_filter_map("blank predicate", |(s, p, o, i)| SpoTriplet::new(&s, &p, &o, i).ok())
}

pub fn ground_truth() -> impl Strategy<Value = GroundTruth> {
    btree_set(name(), 1..10).prop_flat_map(|names| {
        let n = names.len();
        (
            Just(names),
            vec((any::<bool>(), vec(label(), 0..3), option::of(0u8..3)), n),
            vec(
                (
                    0..n,
                    0..n,
                    vec(label(), 0..3),
                    vec(select(IMPLICIT_TERMS.to_vec()), 0..2),
                ),
                0..=n,
            ),
        )
            .prop_map(|(names, attrs, rels)| {
                let names: Vec<String> = names.into_iter().collect();
                let mut gt = GroundTruth {
                    characters: Vec::new(),
                    roles: BTreeMap::new(),
                    groups: BTreeMap::new(),
                    key_relations: Vec::new(),
                };
                for (name, (alias, roles, group)) in names.iter().zip(attrs) {
                    gt.characters.push(GtCharacter {
                        name: name.clone(),
                        aliases: if alias { vec![format!("{name}-ssi")] } else { Vec::new() },
                    });
                    if !roles.is_empty() {
                        gt.roles.insert(name.clone(), roles);
                    }
                    if let Some(k) = group {
                        gt.groups.insert(name.clone(), format!("Team {k}"));
                    }
                }
                for (s, o, explicit, implicit) in rels {
                    if s != o {
                        gt.key_relations.push(KeyRelation {
                            subject: names[s].clone(),
                            object: names[o].clone(),
                            explicit,
                            implicit: implicit.into_iter().map(str::to_owned).collect(),
                        });
                    }
                }
                gt.validate().unwrap();
                gt
            })
    })
}

pub fn metric() -> impl Strategy<Value = MetricValue<f64>> {
    prop_oneof![
        1 => Just(MetricValue::NotApplicable),
        4 => (0.0f64..=100.0).prop_map(MetricValue::Value),
    ]
}

pub fn eval_report() -> impl Strategy<Value = EvalReport<f64>> {
    (vec(metric(), 9), vec(0usize..50, 11)).prop_map(|(m, c)| EvalReport {
        character_recall: m[0],
        role_similarity: m[1],
        group_match_precision: m[2],
        group_match_recall: m[3],
        group_match_f1: m[4],
        group_name_similarity: m[5],
        character_relation_recall: m[6],
        explicit_relation_similarity: m[7],
        implicit_relation_similarity: m[8],
        counts: EvalCounts {
            gt_characters: c[0],
            matched_characters: c[1],
            role_evaluated: c[2],
            group_tp: c[3],
            group_fp: c[4],
            group_fn: c[5],
            group_tp_characters: c[6],
            gt_relations: c[7],
            matched_relations: c[8],
            explicit_evaluated: c[9],
            implicit_evaluated: c[10],
        },
    })
}

pub fn report_document() -> impl Strategy<Value = ReportDocument> {
    (vec(("[a-z]{1,8}", eval_report()), 1..5), any::<bool>()).prop_map(|(rows, flag)| {
        let reports: Vec<_> = rows.iter().map(|(_, r)| r.clone()).collect();
        let dramas = rows
            .into_iter()
            .map(|(drama, report)| NamedReport { drama, report })
            .collect();
        ReportDocument::new(dramas, aggregate(&reports, flag), flag)
    })
}

pub fn selection_scores() -> impl Strategy<Value = SelectionScores<f64>> {
    (
        0usize..30,
        0usize..30,
        1usize..30,
        metric(),
        0.0f64..=100.0,
        0.0f64..=100.0,
    )
        .prop_map(
            |(selected, matched, ground_truth, precision, recall, f1)| SelectionScores {
                selected,
                matched,
                ground_truth,
                precision,
                recall,
                f1,
            },
        )
}

pub fn comparison_document() -> impl Strategy<Value = ComparisonDocument> {
    vec(("[a-z_]{1,10}", selection_scores(), selection_scores()), 0..4).prop_map(|rows| {
        ComparisonDocument::new(
            rows.into_iter()
                .map(|(drama, ppr, count)| SelectionComparison { drama, ppr, count })
                .collect(),
        )
    })
}

pub fn selection_document() -> impl Strategy<Value = SelectionDocument> {
    graph(14, 30).prop_flat_map(|base| {
        let n = base.node_count();
        (
            Just(base),
            vec(any::<bool>(), n),
            0..n,
            any::<bool>(),
            vec(vec((0..n, 0.0f64..1.0), 0..n), 0..4),
        )
            .prop_map(|(base, keep, main_i, ppr, rounds)| {
                let ids: Vec<NodeId> = base.node_ids().collect();
                let main = ids[main_i];
                let mut selected = vec![main];
                selected.extend(
                    ids.iter()
                        .zip(&keep)
                        .filter(|(id, k)| **k && **id != main)
                        .map(|(id, _)| *id),
                );
                let result = SelectionResult {
                    selected: selected.clone(),
                    rounds: rounds
                        .into_iter()
                        .map(|scores| RoundScores {
                            seeds: vec![main],
                            scores: scores.into_iter().map(|(i, s)| (ids[i], s)).collect(),
                            discovered: selected[1..].to_vec(),
                        })
                        .collect(),
                };
                let crs = Crs::from_selection(&base, &selected, &BTreeSet::from([main]), &BTreeSet::new()).unwrap();
                let name = |id: NodeId| base.node(id).unwrap().canonical_name().to_owned();
                let method = if ppr {
                    SelectionMethod::Ppr
                } else {
                    SelectionMethod::Count
                };
                SelectionDocument::new(
                    method,
                    &base,
                    vec![name(main)],
                    Vec::new(),
                    &selected,
                    ppr.then_some(&result),
                    crs,
                )
            })
    })
}

/// A weighted graph on nodes `c0..c{n-1}` (ids `0..n`) plus a
/// personalization vector with at least one positive entry. Isolated
/// nodes are common, so dangling mass and disconnected components are
/// exercised.
pub fn ppr_case(max_nodes: usize) -> impl Strategy<Value = (CharacterGraph, BTreeMap<NodeId, f64>)> {
    (1..=max_nodes).prop_flat_map(|n| {
        (
            vec((0..n, 0..n, 1u64..10), 0..=3 * n),
            vec(prop_oneof![Just(0.0f64), 0.0f64..2.0], n),
            0..n,
        )
            .prop_map(move |(edges, weights, forced)| {
                let mut g = CharacterGraph::new();
                for i in 0..n {
                    g.add_node(&format!("c{i}"), Tier::Supporting).unwrap();
                }
                for (a, b, w) in edges {
                    if a != b {
                        g.add_interaction(NodeId(a as u32), NodeId(b as u32), w).unwrap();
                    }
                }
                let mut p: BTreeMap<NodeId, f64> = weights
                    .into_iter()
                    .enumerate()
                    .filter(|(_, w)| *w > 0.0)
                    .map(|(i, w)| (NodeId(i as u32), w))
                    .collect();
                *p.entry(NodeId(forced as u32)).or_insert(0.0) += 0.5;
                (g, p)
            })
    })
}

/// An implicit-relation answer as a model might write it: a vocabulary
/// term in odd casing or decoration, an off-list emotion, free text or a
/// refusal.
pub fn implicit_answer() -> impl Strategy<Value = String> {
    let decorated = (select(IMPLICIT_TERMS.to_vec()), 0u8..5).prop_map(|(t, style)| match style {
        0 => t.to_owned(),
        1 => t.to_lowercase(),
        2 => t.to_uppercase(),
        3 => format!("[{t}]"),
        _ => format!("\"{t}\"."),
    });
    let off_list = select(vec![
        "Jealousy",
        "Rivalry",
        "Indifference",
        "love and hate",
        "Friend",
        "Mentor",
        "Pity",
    ]);
    prop_oneof![
        4 => decorated,
        2 => off_list.prop_map(str::to_owned),
        1 => "[A-Za-z][A-Za-z ]{0,12}",
        1 => select(vec!["None", "Information not provided", "N/A"]).prop_map(str::to_owned),
    ]
}

/// A relation-agent answer covering `pairs` (with some blocks missing),
/// plus the implicit answer written for each pair that got a block.
pub fn relations_response(pairs: Vec<(String, String)>) -> impl Strategy<Value = (String, Vec<Option<String>>)> {
    let n = pairs.len();
    vec((any::<bool>(), option::of(label()), implicit_answer()), n).prop_map(move |blocks| {
        let mut text = String::new();
        let mut written = Vec::new();
        for (i, ((s, o), (keep, explicit, implicit))) in pairs.iter().zip(blocks).enumerate() {
            if !keep && i % 3 == 0 {
                written.push(None);
                continue;
            }
            text.push_str(&format!("{}. **Subject: {s}**\n   **Object: {o}**\n", i + 1));
            if let Some(e) = explicit {
                text.push_str(&format!("   **(Explicit) Who is Subject regarding to Object]: {e}**\n"));
            }
            text.push_str(&format!(
                "   **(Implicit) What emotions does Subject experience toward Object?: {implicit}**\n\n"
            ));
            written.push(Some(implicit));
        }
        (text, written)
    })
}

/// Responses for the whole agent chain (merge, relations, filter, roles,
/// groups) over characters named `names`, partly malformed.
pub fn chain_responses(names: Vec<String>) -> impl Strategy<Value = [String; 5]> {
    let n = names.len();
    let pick = move || 0..n;
    let noise = prop_oneof![Just(String::new()), "[ -~]{0,40}".prop_map(|s| format!("{s}\n"))];
    let mut pairs = Vec::new();
    for a in &names {
        for b in &names {
            if a != b {
                pairs.push((a.clone(), b.clone()));
            }
        }
    }
    (
        vec((pick(), pick(), any::<bool>()), 0..3),
        relations_response(pairs),
        vec((pick(), any::<bool>()), 0..3),
        vec(
            (pick(), label(), option::of(select(vec!["adult", "child", "teenager"]))),
            0..n + 1,
        ),
        vec((pick(), 0u8..3), 0..n + 1),
        vec(noise, 5),
    )
        .prop_map(move |(merges, (relations, _), filters, roles, groups, noise)| {
            let merge = merges
                .iter()
                .enumerate()
                .map(|(i, (a, b, same))| {
                    let rhs = if *same {
                        names[*b].clone()
                    } else {
                        "No Same Person".to_owned()
                    };
                    format!("{}. **[{}]-[{rhs}]\n", i + 1, names[*a])
                })
                .collect::<String>();
            let mut filter = String::from("1. General Character List:\n");
            for (i, (c, last)) in filters.iter().enumerate() {
                let flag = if *last { "True" } else { "False" };
                filter.push_str(&format!(
                    "  {}. **Character: {}**\n    **Last Name: {flag}**\n",
                    i + 1,
                    names[*c]
                ));
            }
            filter.push_str(
                "\n2. Inappropriate Character Identity List\n  Information not provided\n\n\
                 3. Inappropriate Character Relationship List\n  Information not provided\n\n\
                 4. Abundant Relationship List\n  Information not provided\n",
            );
            let roles = roles
                .iter()
                .enumerate()
                .map(|(i, (c, role, age))| {
                    let role = match age {
                        Some(a) => format!("{role}, {a}"),
                        None => role.clone(),
                    };
                    format!("{}. **Character: {}**\n  **Role: {role}**\n\n", i + 1, names[*c])
                })
                .collect::<String>();
            let mut grouped = String::from("**Family Group List: [House 0]**\n**Other Group List: [House 1]**\n\n");
            for (i, (c, g)) in groups.iter().enumerate() {
                grouped.push_str(&format!(
                    "{}. **Character: {}**\n  **Group: House {g}**\n\n",
                    i + 1,
                    names[*c]
                ));
            }
            let [a, b, c, d, e]: [String; 5] = noise.try_into().unwrap();
            [a + &merge, b + &relations, c + &filter, d + &roles, e + &grouped]
        })
}
