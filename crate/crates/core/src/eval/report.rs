use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{match_nodes, EvalReport, MetricValue, SelectionScores, METRIC_NAMES};
use crate::model::{CharacterGraph, GroundTruth, NodeId};
use crate::scalar::Scalar;

/// Mean and population standard deviation of the applicable values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary<T> {
    pub mean: MetricValue<T>,
    pub std: MetricValue<T>,
    /// How many values were applicable.
    pub n: usize,
}

impl<T: Scalar> MetricSummary<T> {
    pub fn of(values: impl IntoIterator<Item = MetricValue<T>>) -> Self {
        let xs: Vec<T> = values.into_iter().filter_map(MetricValue::value).collect();
        if xs.is_empty() {
            return MetricSummary {
                mean: MetricValue::NotApplicable,
                std: MetricValue::NotApplicable,
                n: 0,
            };
        }
        let n = T::from_count(xs.len());
        let mean = xs.iter().copied().sum::<T>() / n;
        let var = xs.iter().map(|x| (*x - mean) * (*x - mean)).sum::<T>() / n;
        MetricSummary {
            mean: MetricValue::Value(mean),
            std: MetricValue::Value(var.sqrt()),
            n: xs.len(),
        }
    }

    fn cell(&self) -> String {
        match (self.mean, self.std) {
            (MetricValue::Value(m), MetricValue::Value(s)) => {
                format!("{:.1} ± {:.1}", m.to_f64_lossy(), s.to_f64_lossy())
            }
            _ => "n/a".to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport<T> {
    pub dramas: usize,
    /// Keyed by metric name (see [`METRIC_NAMES`]).
    pub metrics: BTreeMap<String, MetricSummary<T>>,
}

impl<T: Scalar> AggregateReport<T> {
    pub fn get(&self, metric: &str) -> Option<&MetricSummary<T>> {
        self.metrics.get(metric)
    }
}

/// Per-metric mean ± std across dramas. With `coerce_not_applicable`,
/// not-applicable values count as 0 instead of being skipped.
pub fn aggregate<T: Scalar>(reports: &[EvalReport<T>], coerce_not_applicable: bool) -> AggregateReport<T> {
    let reports: Vec<EvalReport<T>> = if coerce_not_applicable {
        reports.iter().map(EvalReport::coerce_not_applicable).collect()
    } else {
        reports.to_vec()
    };
    let metrics = METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            (
                name.to_string(),
                MetricSummary::of(reports.iter().map(|r| r.metrics()[i])),
            )
        })
        .collect();
    AggregateReport {
        dramas: reports.len(),
        metrics,
    }
}

fn label(metric: &str) -> &'static str {
    match metric {
        "character_recall" => "Character Recall",
        "role_similarity" => "Role Sim.",
        "group_match_precision" => "Group Match Precision",
        "group_match_recall" => "Group Match Recall",
        "group_match_f1" => "Group Match F1-Score",
        "group_name_similarity" => "Group Name Sim.",
        "character_relation_recall" => "Character-Relation Recall",
        "explicit_relation_similarity" => "Explicit Relation Sim.",
        "implicit_relation_similarity" => "Implicit Relation Sim.",
        _ => "?",
    }
}

/// Columns before `left` are left-aligned, the rest right-aligned.
fn render_grid(header: &[String], rows: &[Vec<String>], left: usize) -> String {
    let cols = header.len();
    let width = |c: usize| {
        rows.iter()
            .map(|r| r[c].chars().count())
            .chain([header[c].chars().count()])
            .max()
            .unwrap_or(0)
    };
    let widths: Vec<usize> = (0..cols).map(width).collect();
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            if c > 0 {
                s.push_str("  ");
            }
            if c < left {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        s.trim_end().to_owned()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

/// Metrics as rows, one `mean ± std` column per named run.
pub fn format_summary_table<T: Scalar>(columns: &[(&str, &AggregateReport<T>)]) -> String {
    let mut header = vec!["Metric".to_owned()];
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    let rows: Vec<Vec<String>> = METRIC_NAMES
        .iter()
        .map(|m| {
            let mut row = vec![label(m).to_owned()];
            row.extend(
                columns
                    .iter()
                    .map(|(_, a)| a.get(m).map(MetricSummary::cell).unwrap_or_default()),
            );
            row
        })
        .collect();
    render_grid(&header, &rows, 1)
}

/// One row per drama, one column per metric.
pub fn format_report_table<T: Scalar>(rows: &[(&str, &EvalReport<T>)]) -> String {
    let mut header = vec!["Drama".to_owned()];
    header.extend(METRIC_NAMES.iter().map(|m| label(m).to_owned()));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| {
            let mut row = vec![name.to_string()];
            row.extend(r.metrics().iter().map(ToString::to_string));
            row
        })
        .collect();
    render_grid(&header, &body, 1)
}

/// Selection scores of both methods on one drama.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionComparison<T> {
    pub drama: String,
    pub ppr: SelectionScores<T>,
    pub count: SelectionScores<T>,
}

impl<T: Scalar> SelectionComparison<T> {
    /// Precision/recall/F1 rows with `mean ± std` per method.
    pub fn format_summary(comparisons: &[SelectionComparison<T>]) -> String {
        let summarize = |pick: &dyn Fn(&SelectionComparison<T>) -> MetricValue<T>| {
            MetricSummary::of(comparisons.iter().map(pick)).cell()
        };
        let rows = vec![
            vec![
                "Precision".to_owned(),
                summarize(&|c| c.ppr.precision),
                summarize(&|c| c.count.precision),
            ],
            vec![
                "Recall".to_owned(),
                summarize(&|c| MetricValue::Value(c.ppr.recall)),
                summarize(&|c| MetricValue::Value(c.count.recall)),
            ],
            vec![
                "F1 Score".to_owned(),
                summarize(&|c| MetricValue::Value(c.ppr.f1)),
                summarize(&|c| MetricValue::Value(c.count.f1)),
            ],
        ];
        render_grid(&["Metric".into(), "PPR".into(), "Count".into()], &rows, 1)
    }
}

/// How each method did on one character: a method is right when it
/// selects exactly the annotated characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Both,
    PprOnly,
    CountOnly,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub rank: usize,
    pub node: NodeId,
    pub name: String,
    pub degree: usize,
    pub weighted_degree: u64,
    pub ground_truth: Option<String>,
    pub ppr: bool,
    pub count: bool,
    pub verdict: Verdict,
}

/// Every character sorted by descending edge count (then weight, then
/// name), marked with both methods' choices and the annotation.
pub fn selection_breakdown(
    graph: &CharacterGraph,
    ppr: &[NodeId],
    count: &[NodeId],
    gt: &GroundTruth,
) -> Vec<SelectionRow> {
    let matches = match_nodes(graph, graph.node_ids(), gt);
    let ppr: BTreeSet<NodeId> = ppr.iter().copied().collect();
    let count: BTreeSet<NodeId> = count.iter().copied().collect();
    let mut nodes: Vec<_> = graph.nodes().collect();
    nodes.sort_by(|a, b| {
        graph
            .degree(b.id())
            .cmp(&graph.degree(a.id()))
            .then(graph.weighted_degree(b.id()).cmp(&graph.weighted_degree(a.id())))
            .then_with(|| a.canonical_name().cmp(b.canonical_name()))
    });
    nodes
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let id = n.id();
            let truth = matches.get(id).map(str::to_owned);
            let (p, c) = (ppr.contains(&id), count.contains(&id));
            let verdict = match (p == truth.is_some(), c == truth.is_some()) {
                (true, true) => Verdict::Both,
                (true, false) => Verdict::PprOnly,
                (false, true) => Verdict::CountOnly,
                (false, false) => Verdict::Neither,
            };
            SelectionRow {
                rank: i + 1,
                node: id,
                name: n.canonical_name().to_owned(),
                degree: graph.degree(id),
                weighted_degree: graph.weighted_degree(id),
                ground_truth: truth,
                ppr: p,
                count: c,
                verdict,
            }
        })
        .collect()
}

/// The breakdown as text, with a marker line after the first `cutoff` rows.
pub fn format_selection_table(rows: &[SelectionRow], cutoff: usize) -> String {
    let mark = |b: bool| if b { "x" } else { "" }.to_owned();
    let header: Vec<String> = ["#", "Character", "Edges", "Weight", "GT", "PPR", "Count", "Verdict"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.rank.to_string(),
                r.name.clone(),
                r.degree.to_string(),
                r.weighted_degree.to_string(),
                mark(r.ground_truth.is_some()),
                mark(r.ppr),
                mark(r.count),
                match r.verdict {
                    Verdict::Both => "both",
                    Verdict::PprOnly => "ppr",
                    Verdict::CountOnly => "count",
                    Verdict::Neither => "-",
                }
                .to_owned(),
            ]
        })
        .collect();
    let grid = render_grid(&header, &body, 2);
    let mut out = String::new();
    let mut lines = grid.lines();
    for line in lines.by_ref().take(2 + cutoff) {
        out.push_str(line);
        out.push('\n');
    }
    let _ = writeln!(out, "---- cutoff (k = {cutoff}) ----");
    for line in lines {
        out.push_str(line);
        out.push('\n');
    }
    out
}
