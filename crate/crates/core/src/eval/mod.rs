//! Scoring a CRS against expert annotations.
//!
//! Predicted characters are matched to annotated ones by shared aliases.
//! Every metric is a percentage. Similarity metrics embed both strings, take
//! the cosine clamped to `[0, 1]`, and average over the items the annotation
//! covers. A metric whose denominator is empty is
//! [`MetricValue::NotApplicable`] rather than zero.

mod report;

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::backend::{cosine_similarity, BackendError, EmbeddingVector, LlmBackend, SimilarityError};
use crate::model::{normalize_name, CharacterGraph, Crs, GroundTruth, NodeId};
use crate::scalar::{harmonic_mean, percent, Scalar};

pub use report::{
    aggregate, format_report_table, format_selection_table, format_summary_table, selection_breakdown, AggregateReport,
    MetricSummary, SelectionComparison, SelectionRow, Verdict,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground truth has no characters")]
    EmptyGroundTruth,
    #[error("embedding {text:?}: {source}")]
    Embedding {
        text: String,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// A percentage, or a marker that the metric had nothing to average over.
/// Serialized as a number or `null`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum MetricValue<T> {
    Value(T),
    NotApplicable,
}

impl<T: Scalar> MetricValue<T> {
    pub fn from_option(v: Option<T>) -> Self {
        v.map_or(MetricValue::NotApplicable, MetricValue::Value)
    }

    pub fn value(self) -> Option<T> {
        match self {
            MetricValue::Value(v) => Some(v),
            MetricValue::NotApplicable => None,
        }
    }

    pub fn is_applicable(self) -> bool {
        matches!(self, MetricValue::Value(_))
    }

    /// The value, with not-applicable read as 0 (how published tables print
    /// degenerate cases).
    pub fn or_zero(self) -> T {
        self.value().unwrap_or_else(T::zero)
    }
}

impl<T: Scalar> fmt::Display for MetricValue<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Value(v) => write!(f, "{:.1}", v.to_f64_lossy()),
            MetricValue::NotApplicable => f.write_str("n/a"),
        }
    }
}

impl<T: Serialize> Serialize for MetricValue<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MetricValue::Value(v) => s.serialize_some(v),
            MetricValue::NotApplicable => s.serialize_none(),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for MetricValue<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Option::<T>::deserialize(d)?.map_or(MetricValue::NotApplicable, MetricValue::Value))
    }
}

/// Predicted node to annotated character name; injective.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchMap {
    pairs: BTreeMap<NodeId, String>,
}

impl MatchMap {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, node: NodeId) -> Option<&str> {
        self.pairs.get(&node).map(String::as_str)
    }

    pub fn node_for(&self, character: &str) -> Option<NodeId> {
        self.pairs
            .iter()
            .find(|(_, c)| c.as_str() == character)
            .map(|(n, _)| *n)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &str)> + '_ {
        self.pairs.iter().map(|(n, c)| (*n, c.as_str()))
    }
}

/// Matches `nodes` of `graph` to annotated characters. A pair is a
/// candidate when the two share at least one alias after name
/// normalization; candidates are taken greedily by descending overlap, ties
/// broken by predicted name then annotated name.
pub fn match_nodes(graph: &CharacterGraph, nodes: impl IntoIterator<Item = NodeId>, gt: &GroundTruth) -> MatchMap {
    let gt_sets: Vec<(&str, BTreeSet<String>)> =
        gt.characters.iter().map(|c| (c.name.as_str(), c.alias_set())).collect();
    let mut candidates = Vec::new();
    for id in nodes {
        let Some(node) = graph.node(id) else { continue };
        let pred: BTreeSet<String> = node.aliases().iter().map(|a| normalize_name(a)).collect();
        for (name, set) in &gt_sets {
            let overlap = pred.intersection(set).count();
            if overlap > 0 {
                candidates.push((overlap, node.canonical_name(), id, *name));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)).then_with(|| a.3.cmp(b.3)));
    let mut map = MatchMap::default();
    let mut taken = BTreeSet::new();
    for (_, _, id, name) in candidates {
        if !map.pairs.contains_key(&id) && taken.insert(name) {
            map.pairs.insert(id, name.to_owned());
        }
    }
    map
}

pub fn match_characters(crs: &Crs, gt: &GroundTruth) -> MatchMap {
    match_nodes(crs.graph(), crs.graph().node_ids(), gt)
}

pub fn character_recall<T: Scalar>(matches: &MatchMap, gt: &GroundTruth) -> Result<T, EvalError> {
    percent(matches.len(), gt.characters.len()).ok_or(EvalError::EmptyGroundTruth)
}

/// Caches embeddings so each distinct string is embedded once.
pub struct Embedder<'a, T> {
    backend: &'a dyn LlmBackend,
    cache: RefCell<HashMap<String, EmbeddingVector<T>>>,
}

impl<'a, T: Scalar> Embedder<'a, T> {
    pub fn new(backend: &'a dyn LlmBackend) -> Self {
        Embedder {
            backend,
            cache: RefCell::new(HashMap::new()),
        }
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>, EvalError> {
        if let Some(v) = self.cache.borrow().get(text) {
            return Ok(v.clone());
        }
        let v = self
            .backend
            .embed(text)
            .map_err(|source| EvalError::Embedding {
                text: text.to_owned(),
                source,
            })?
            .cast::<T>();
        self.cache.borrow_mut().insert(text.to_owned(), v.clone());
        Ok(v)
    }

    /// Cosine similarity clamped to `[0, 1]`.
    pub fn similarity(&self, a: &str, b: &str) -> Result<T, EvalError> {
        let cos = cosine_similarity(&self.embed(a)?, &self.embed(b)?)?;
        Ok(cos.max(T::zero()).min(T::one()))
    }

    /// Best similarity between any predicted candidate and any annotated value.
    fn best(&self, predicted: &[&str], truth: &[String]) -> Result<T, EvalError> {
        let mut best = T::zero();
        for p in predicted {
            for t in truth {
                best = best.max(self.similarity(p, t)?);
            }
        }
        Ok(best)
    }
}

/// The whole string plus, if it lists several items, each comma part.
fn candidates(text: &str) -> Vec<&str> {
    let mut out = vec![text.trim()];
    if text.contains(',') {
        out.extend(text.split(',').map(str::trim).filter(|s| !s.is_empty()));
    }
    out
}

fn mean_percent<T: Scalar>(sum: T, n: usize) -> MetricValue<T> {
    if n == 0 {
        MetricValue::NotApplicable
    } else {
        MetricValue::Value(T::lit(100.0) * sum / T::from_count(n))
    }
}

/// Mean best role similarity over matched characters that have an
/// annotated role. A missing predicted role scores 0.
pub fn role_similarity<T: Scalar>(
    crs: &Crs,
    matches: &MatchMap,
    gt: &GroundTruth,
    embedder: &Embedder<'_, T>,
) -> Result<(MetricValue<T>, usize), EvalError> {
    let (mut sum, mut n) = (T::zero(), 0);
    for (id, name) in matches.iter() {
        let truth = gt.roles_of(name);
        if truth.is_empty() {
            continue;
        }
        n += 1;
        if let Some(role) = crs.graph().node(id).and_then(|node| node.role()) {
            sum += embedder.best(&candidates(role), truth)?;
        }
    }
    Ok((mean_percent(sum, n), n))
}

/// Pairwise group agreement over matched characters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupScores<T> {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

impl<T: Scalar> GroupScores<T> {
    /// Ratios from raw counts; an empty denominator gives 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = percent(tp, tp + fp).unwrap_or_else(T::zero);
        let recall = percent(tp, tp + fn_).unwrap_or_else(T::zero);
        GroupScores {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
        }
    }
}

fn same_group_pairs(crs: &Crs, matches: &MatchMap, gt: &GroundTruth) -> Vec<(NodeId, NodeId, bool, bool)> {
    let matched: Vec<(NodeId, &str)> = matches.iter().collect();
    let mut out = Vec::new();
    for (i, (a, an)) in matched.iter().enumerate() {
        for (b, bn) in &matched[i + 1..] {
            let pred = matches!((crs.group_of(*a), crs.group_of(*b)), (Some(x), Some(y)) if x == y);
            let truth = matches!((gt.group_of(an), gt.group_of(bn)), (Some(x), Some(y)) if x == y);
            out.push((*a, *b, pred, truth));
        }
    }
    out
}

pub fn group_match_f1<T: Scalar>(crs: &Crs, matches: &MatchMap, gt: &GroundTruth) -> GroupScores<T> {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (_, _, pred, truth) in same_group_pairs(crs, matches, gt) {
        match (pred, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    GroupScores::from_counts(tp, fp, fn_)
}

/// Mean similarity of predicted and annotated group names over characters
/// in at least one true-positive pair.
pub fn group_name_similarity<T: Scalar>(
    crs: &Crs,
    matches: &MatchMap,
    gt: &GroundTruth,
    embedder: &Embedder<'_, T>,
) -> Result<(MetricValue<T>, usize), EvalError> {
    let mut tp_nodes = BTreeSet::new();
    for (a, b, pred, truth) in same_group_pairs(crs, matches, gt) {
        if pred && truth {
            tp_nodes.insert(a);
            tp_nodes.insert(b);
        }
    }
    let mut sum = T::zero();
    for id in &tp_nodes {
        let pred = crs.group_of(*id).expect("true-positive nodes are grouped");
        let name = matches.get(*id).expect("matched");
        let truth = gt.group_of(name).expect("true-positive characters are grouped");
        sum += embedder.similarity(pred, truth)?;
    }
    Ok((mean_percent(sum, tp_nodes.len()), tp_nodes.len()))
}

/// Annotated key relations whose endpoints are both matched and joined by
/// a predicted relation in either direction, as (subject, object) nodes.
fn matched_relations(crs: &Crs, matches: &MatchMap, gt: &GroundTruth) -> Vec<(usize, NodeId, NodeId)> {
    let mut out = Vec::new();
    for (i, kr) in gt.key_relations.iter().enumerate() {
        let (Some(s), Some(o)) = (matches.node_for(&kr.subject), matches.node_for(&kr.object)) else {
            continue;
        };
        if crs.relations().iter().any(|r| r.connects(s, o)) {
            out.push((i, s, o));
        }
    }
    out
}

pub fn character_relation_recall<T: Scalar>(
    crs: &Crs,
    matches: &MatchMap,
    gt: &GroundTruth,
) -> (MetricValue<T>, usize) {
    let hits = matched_relations(crs, matches, gt).len();
    (MetricValue::from_option(percent(hits, gt.key_relations.len())), hits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Explicit,
    Implicit,
}

/// Mean best similarity of predicted vs annotated relation strings over
/// matched key relations that carry an annotation of `kind`. The predicted
/// string comes from the same-direction record when it has one, else the
/// reverse record; none at all scores 0.
pub fn relation_similarity<T: Scalar>(
    crs: &Crs,
    matches: &MatchMap,
    gt: &GroundTruth,
    embedder: &Embedder<'_, T>,
    kind: RelationKind,
) -> Result<(MetricValue<T>, usize), EvalError> {
    let field = |s: NodeId, o: NodeId| -> Option<String> {
        let rel = crs.relations().iter().find(|r| r.subject == s && r.object == o)?;
        match kind {
            RelationKind::Explicit => rel.explicit.clone(),
            RelationKind::Implicit => rel.implicit.map(|i| i.as_str().to_owned()),
        }
    };
    let (mut sum, mut n) = (T::zero(), 0);
    for (i, s, o) in matched_relations(crs, matches, gt) {
        let kr = &gt.key_relations[i];
        let truth = match kind {
            RelationKind::Explicit => &kr.explicit,
            RelationKind::Implicit => &kr.implicit,
        };
        if truth.is_empty() {
            continue;
        }
        n += 1;
        if let Some(pred) = field(s, o).or_else(|| field(o, s)) {
            sum += embedder.best(&candidates(&pred), truth)?;
        }
    }
    Ok((mean_percent(sum, n), n))
}

/// Precision, recall and F1 of a character selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionScores<T> {
    pub selected: usize,
    pub matched: usize,
    pub ground_truth: usize,
    pub precision: MetricValue<T>,
    pub recall: T,
    pub f1: T,
}

pub fn selection_pr<T: Scalar>(
    graph: &CharacterGraph,
    selected: &[NodeId],
    gt: &GroundTruth,
) -> Result<SelectionScores<T>, EvalError> {
    let unique: BTreeSet<NodeId> = selected.iter().copied().collect();
    let matched = match_nodes(graph, unique.iter().copied(), gt).len();
    let recall = percent(matched, gt.characters.len()).ok_or(EvalError::EmptyGroundTruth)?;
    let precision = MetricValue::from_option(percent(matched, unique.len()));
    Ok(SelectionScores {
        selected: unique.len(),
        matched,
        ground_truth: gt.characters.len(),
        precision,
        recall,
        f1: harmonic_mean(precision.or_zero(), recall),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub gt_characters: usize,
    pub matched_characters: usize,
    pub role_evaluated: usize,
    pub group_tp: usize,
    pub group_fp: usize,
    pub group_fn: usize,
    pub group_tp_characters: usize,
    pub gt_relations: usize,
    pub matched_relations: usize,
    pub explicit_evaluated: usize,
    pub implicit_evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub character_recall: MetricValue<T>,
    pub role_similarity: MetricValue<T>,
    pub group_match_precision: MetricValue<T>,
    pub group_match_recall: MetricValue<T>,
    pub group_match_f1: MetricValue<T>,
    pub group_name_similarity: MetricValue<T>,
    pub character_relation_recall: MetricValue<T>,
    pub explicit_relation_similarity: MetricValue<T>,
    pub implicit_relation_similarity: MetricValue<T>,
    pub counts: EvalCounts,
}

pub const METRIC_NAMES: [&str; 9] = [
    "character_recall",
    "role_similarity",
    "group_match_precision",
    "group_match_recall",
    "group_match_f1",
    "group_name_similarity",
    "character_relation_recall",
    "explicit_relation_similarity",
    "implicit_relation_similarity",
];

impl<T: Scalar> EvalReport<T> {
    /// Metric values in [`METRIC_NAMES`] order.
    pub fn metrics(&self) -> [MetricValue<T>; 9] {
        [
            self.character_recall,
            self.role_similarity,
            self.group_match_precision,
            self.group_match_recall,
            self.group_match_f1,
            self.group_name_similarity,
            self.character_relation_recall,
            self.explicit_relation_similarity,
            self.implicit_relation_similarity,
        ]
    }

    /// Copy with every not-applicable metric replaced by 0.
    pub fn coerce_not_applicable(&self) -> Self {
        let z = |m: MetricValue<T>| MetricValue::Value(m.or_zero());
        EvalReport {
            character_recall: z(self.character_recall),
            role_similarity: z(self.role_similarity),
            group_match_precision: z(self.group_match_precision),
            group_match_recall: z(self.group_match_recall),
            group_match_f1: z(self.group_match_f1),
            group_name_similarity: z(self.group_name_similarity),
            character_relation_recall: z(self.character_relation_recall),
            explicit_relation_similarity: z(self.explicit_relation_similarity),
            implicit_relation_similarity: z(self.implicit_relation_similarity),
            counts: self.counts.clone(),
        }
    }
}

/// Every metric for one drama.
pub fn evaluate<T: Scalar>(crs: &Crs, gt: &GroundTruth, embedder: &dyn LlmBackend) -> Result<EvalReport<T>, EvalError> {
    let embedder = Embedder::<T>::new(embedder);
    let matches = match_characters(crs, gt);
    let recall = character_recall::<T>(&matches, gt)?;
    let (roles, role_n) = role_similarity(crs, &matches, gt, &embedder)?;
    let groups = group_match_f1::<T>(crs, &matches, gt);
    let (group_names, tp_chars) = group_name_similarity(crs, &matches, gt, &embedder)?;
    let (rel_recall, rel_hits) = character_relation_recall::<T>(crs, &matches, gt);
    let (explicit, explicit_n) = relation_similarity(crs, &matches, gt, &embedder, RelationKind::Explicit)?;
    let (implicit, implicit_n) = relation_similarity(crs, &matches, gt, &embedder, RelationKind::Implicit)?;
    Ok(EvalReport {
        character_recall: MetricValue::Value(recall),
        role_similarity: roles,
        group_match_precision: MetricValue::Value(groups.precision),
        group_match_recall: MetricValue::Value(groups.recall),
        group_match_f1: MetricValue::Value(groups.f1),
        group_name_similarity: group_names,
        character_relation_recall: rel_recall,
        explicit_relation_similarity: explicit,
        implicit_relation_similarity: implicit,
        counts: EvalCounts {
            gt_characters: gt.characters.len(),
            matched_characters: matches.len(),
            role_evaluated: role_n,
            group_tp: groups.tp,
            group_fp: groups.fp,
            group_fn: groups.fn_,
            group_tp_characters: tp_chars,
            gt_relations: gt.key_relations.len(),
            matched_relations: rel_hits,
            explicit_evaluated: explicit_n,
            implicit_evaluated: implicit_n,
        },
    })
}
