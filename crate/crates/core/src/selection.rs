//! Character selection: iterated personalized PageRank from user-given
//! main/sub characters, plus the plain degree-ranking baseline.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CharacterGraph, NodeId};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("no main or sub characters given")]
    NoSeeds,
    #[error("invalid seeds: {0}")]
    InvalidSeeds(String),
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("PageRank did not converge in {iterations} iterations (last residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },
    #[error("k = {k} is outside 1..={nodes}")]
    InvalidK { k: usize, nodes: usize },
}

/// How the degree baseline counts "edges a node possesses".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeMode {
    /// Number of incident edges; weighted degree breaks ties.
    #[default]
    Unweighted,
    /// Sum of incident weights; plain degree breaks ties.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    bound(deserialize = "T: Scalar + Deserialize<'de>", serialize = "T: Serialize")
)]
pub struct PprConfig<T> {
    pub main_seed_score: T,
    pub sub_seed_score: T,
    /// Scores strictly above this enter the selection.
    pub threshold: T,
    pub damping: T,
    /// L1 change between successive iterates at which iteration stops.
    pub convergence_epsilon: T,
    pub max_power_iterations: usize,
    pub max_reseed_rounds: usize,
    pub degree_mode: DegreeMode,
}

impl<T: Scalar> Default for PprConfig<T> {
    fn default() -> Self {
        PprConfig {
            main_seed_score: T::one(),
            sub_seed_score: T::lit(0.5),
            threshold: T::lit(0.02),
            damping: T::lit(0.85),
            convergence_epsilon: T::lit(1e-12).max(T::epsilon() * T::lit(64.0)),
            max_power_iterations: 10_000,
            max_reseed_rounds: 1_000,
            degree_mode: DegreeMode::Unweighted,
        }
    }
}

impl<T: Scalar> PprConfig<T> {
    // negated comparisons so that NaN fails
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SelectionError> {
        let open_unit = |v: T| v > T::zero() && v < T::one();
        let bad = |m: &str| Err(SelectionError::InvalidConfig(m.to_owned()));
        if !open_unit(self.threshold) {
            return bad("threshold must lie in (0, 1)");
        }
        if !open_unit(self.damping) {
            return bad("damping must lie in (0, 1)");
        }
        if !(self.main_seed_score >= T::zero() && self.sub_seed_score >= T::zero()) {
            return bad("seed scores must be non-negative");
        }
        if self.main_seed_score == T::zero() && self.sub_seed_score == T::zero() {
            return bad("seed scores must not both be zero");
        }
        if !(self.convergence_epsilon > T::zero()) {
            return bad("convergence_epsilon must be positive");
        }
        if self.max_power_iterations == 0 || self.max_reseed_rounds == 0 {
            return bad("iteration limits must be positive");
        }
        Ok(())
    }
}

/// Scores of one PageRank pass and the characters it newly discovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundScores<T> {
    pub seeds: Vec<NodeId>,
    pub scores: BTreeMap<NodeId, T>,
    pub discovered: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult<T> {
    /// Main, then sub, then discovered characters in discovery order.
    pub selected: Vec<NodeId>,
    pub rounds: Vec<RoundScores<T>>,
}

struct Adjacency<T> {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    neighbours: Vec<Vec<(usize, T)>>,
    strength: Vec<T>,
}

impl<T: Scalar> Adjacency<T> {
    fn new(graph: &CharacterGraph) -> Self {
        let ids: Vec<NodeId> = graph.node_ids().collect();
        let index: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut neighbours = vec![Vec::new(); ids.len()];
        let mut strength = vec![T::zero(); ids.len()];
        for (a, b, w) in graph.edges() {
            let (i, j) = (index[&a], index[&b]);
            let w = T::lit(w as f64);
            neighbours[i].push((j, w));
            neighbours[j].push((i, w));
            strength[i] += w;
            strength[j] += w;
        }
        Adjacency {
            ids,
            index,
            neighbours,
            strength,
        }
    }
}

/// Stationary distribution of the damped walk that follows edges in
/// proportion to their weight and restarts into the normalized
/// `personalization`. Isolated nodes send their mass to the restart
/// distribution.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn personalized_pagerank<T: Scalar>(
    graph: &CharacterGraph,
    personalization: &BTreeMap<NodeId, T>,
    config: &PprConfig<T>,
) -> Result<BTreeMap<NodeId, T>, SelectionError> {
    config.validate()?;
    if graph.is_empty() {
        return Err(SelectionError::EmptyGraph);
    }
    let adj = Adjacency::<T>::new(graph);
    let n = adj.ids.len();

    let mut restart = vec![T::zero(); n];
    for (id, &w) in personalization {
        let i = *adj.index.get(id).ok_or(SelectionError::UnknownNode(*id))?;
        if !(w >= T::zero()) || !w.is_finite() {
            return Err(SelectionError::InvalidSeeds(format!("weight {w} for {id}")));
        }
        restart[i] = w;
    }
    let mass: T = restart.iter().copied().sum();
    if !(mass > T::zero()) {
        return Err(SelectionError::InvalidSeeds("no positive personalization mass".into()));
    }
    for r in &mut restart {
        *r /= mass;
    }

    let d = config.damping;
    let teleport = T::one() - d;
    let mut x = restart.clone();
    let mut next = vec![T::zero(); n];
    let mut residual = T::infinity();
    for _ in 0..config.max_power_iterations {
        let mut dangling = T::zero();
        for (i, v) in next.iter_mut().enumerate() {
            *v = teleport * restart[i];
        }
        for ((xi, strength), neighbours) in x.iter().zip(&adj.strength).zip(&adj.neighbours) {
            if *strength == T::zero() {
                dangling += *xi;
                continue;
            }
            let share = d * *xi / *strength;
            for &(j, w) in neighbours {
                next[j] += share * w;
            }
        }
        if dangling > T::zero() {
            for (v, r) in next.iter_mut().zip(&restart) {
                *v += d * dangling * *r;
            }
        }
        residual = x.iter().zip(&next).map(|(a, b)| (*a - *b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if residual < config.convergence_epsilon {
            return Ok(adj.ids.iter().copied().zip(x).collect());
        }
    }
    Err(SelectionError::ConvergenceFailure {
        iterations: config.max_power_iterations,
        residual: residual.to_f64_lossy(),
    })
}

fn by_score_then_name<'a, T: Scalar>(
    graph: &'a CharacterGraph,
    scores: &'a BTreeMap<NodeId, T>,
) -> impl Fn(&NodeId, &NodeId) -> Ordering + 'a {
    move |a, b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| name(graph, *a).cmp(name(graph, *b)))
    }
}

fn name(graph: &CharacterGraph, id: NodeId) -> &str {
    graph.node(id).map(|n| n.canonical_name()).unwrap_or("")
}

/// Iterated PPR selection.
///
/// Round 0 seeds main characters at `main_seed_score` and sub characters at
/// `sub_seed_score`; every node scoring above the threshold joins the
/// selection. Each newly found character is then processed once, in order
/// of discovery (descending score, then name), as the sole seed of a
/// further round. Stops when the queue empties or `max_reseed_rounds`
/// re-seed rounds have run.
pub fn select_characters<T: Scalar>(
    graph: &CharacterGraph,
    main: &BTreeSet<NodeId>,
    sub: &BTreeSet<NodeId>,
    config: &PprConfig<T>,
) -> Result<SelectionResult<T>, SelectionError> {
    config.validate()?;
    if main.is_empty() && sub.is_empty() {
        return Err(SelectionError::NoSeeds);
    }
    for id in main.iter().chain(sub) {
        if !graph.contains(*id) {
            return Err(SelectionError::UnknownNode(*id));
        }
    }

    let mut selected: Vec<NodeId> = main.iter().copied().collect();
    selected.extend(sub.iter().filter(|id| !main.contains(id)));
    let mut in_selection: BTreeSet<NodeId> = selected.iter().copied().collect();

    let mut seeds = BTreeMap::new();
    for id in sub {
        seeds.insert(*id, config.sub_seed_score);
    }
    for id in main {
        seeds.insert(*id, config.main_seed_score);
    }

    let mut rounds = Vec::new();
    let mut queue = VecDeque::new();
    let mut round_seeds: Vec<NodeId> = selected.clone();
    let mut reseeds = 0;
    loop {
        let scores = personalized_pagerank(graph, &seeds, config)?;
        let mut discovered: Vec<NodeId> = scores
            .iter()
            .filter(|(id, s)| **s > config.threshold && !in_selection.contains(id))
            .map(|(id, _)| *id)
            .collect();
        discovered.sort_by(by_score_then_name(graph, &scores));
        for id in &discovered {
            in_selection.insert(*id);
            selected.push(*id);
            queue.push_back(*id);
        }
        rounds.push(RoundScores {
            seeds: round_seeds,
            scores,
            discovered,
        });

        if reseeds >= config.max_reseed_rounds {
            break;
        }
        let Some(next) = queue.pop_front() else { break };
        seeds = BTreeMap::from([(next, T::one())]);
        round_seeds = vec![next];
        reseeds += 1;
    }

    Ok(SelectionResult { selected, rounds })
}

/// Top-`k` nodes by degree, ties broken by the other degree measure and then
/// by canonical name.
pub fn select_by_edge_count(graph: &CharacterGraph, k: usize, mode: DegreeMode) -> Result<Vec<NodeId>, SelectionError> {
    let n = graph.node_count();
    if k == 0 || k > n {
        return Err(SelectionError::InvalidK { k, nodes: n });
    }
    let mut ranked: Vec<(usize, u64, &str, NodeId)> = graph
        .nodes()
        .map(|node| {
            let id = node.id();
            (graph.degree(id), graph.weighted_degree(id), node.canonical_name(), id)
        })
        .collect();
    ranked.sort_by(|a, b| {
        let primary = match mode {
            DegreeMode::Unweighted => b.0.cmp(&a.0).then(b.1.cmp(&a.1)),
            DegreeMode::Weighted => b.1.cmp(&a.1).then(b.0.cmp(&a.0)),
        };
        primary.then_with(|| a.2.cmp(b.2))
    });
    Ok(ranked.into_iter().take(k).map(|r| r.3).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Tier;
    use proptest::prelude::*;

    fn graph(names: &[&str], edges: &[(&str, &str, u64)]) -> CharacterGraph {
        let mut g = CharacterGraph::new();
        for n in names {
            g.add_node(n, Tier::Supporting).unwrap();
        }
        for (a, b, w) in edges {
            let (a, b) = (g.resolve(a).unwrap(), g.resolve(b).unwrap());
            g.add_interaction(a, b, *w).unwrap();
        }
        g
    }

    fn id(g: &CharacterGraph, n: &str) -> NodeId {
        g.resolve(n).unwrap()
    }

    #[test]
    fn single_node_is_its_own_fixed_point() {
        let g = graph(&["A"], &[]);
        let scores = personalized_pagerank(&g, &BTreeMap::from([(id(&g, "A"), 1.0)]), &PprConfig::default()).unwrap();
        assert_eq!(scores[&id(&g, "A")], 1.0);
    }

    #[test]
    fn symmetric_cycle_uniform() {
        let g = graph(
            &["A", "B", "C", "D"],
            &[("A", "B", 1), ("B", "C", 1), ("C", "D", 1), ("D", "A", 1)],
        );
        let seeds: BTreeMap<NodeId, f64> = g.node_ids().map(|i| (i, 1.0)).collect();
        let scores = personalized_pagerank(&g, &seeds, &PprConfig::default()).unwrap();
        for s in scores.values() {
            assert!((s - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn seed_errors() {
        let g = graph(&["A", "B"], &[("A", "B", 1)]);
        let cfg = PprConfig::<f64>::default();
        assert!(matches!(
            personalized_pagerank(&g, &BTreeMap::from([(id(&g, "A"), 0.0)]), &cfg),
            Err(SelectionError::InvalidSeeds(_))
        ));
        assert!(matches!(
            personalized_pagerank(&g, &BTreeMap::from([(NodeId(99), 1.0)]), &cfg),
            Err(SelectionError::UnknownNode(_))
        ));
        assert!(matches!(
            personalized_pagerank(&g, &BTreeMap::from([(id(&g, "A"), -1.0)]), &cfg),
            Err(SelectionError::InvalidSeeds(_))
        ));
        assert!(matches!(
            personalized_pagerank(&CharacterGraph::new(), &BTreeMap::new(), &cfg),
            Err(SelectionError::EmptyGraph)
        ));
    }

    #[test]
    fn convergence_failure_reports_residual() {
        let g = graph(&["A", "B"], &[("A", "B", 1)]);
        let cfg = PprConfig::<f64> {
            max_power_iterations: 2,
            ..Default::default()
        };
        match personalized_pagerank(&g, &BTreeMap::from([(id(&g, "A"), 1.0)]), &cfg) {
            Err(SelectionError::ConvergenceFailure {
                iterations: 2,
                residual,
            }) => assert!(residual > 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let bad = PprConfig::<f64> {
            threshold: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PprConfig::<f64> {
            damping: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PprConfig::<f64> {
            main_seed_score: 0.0,
            sub_seed_score: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        PprConfig::<f32>::default().validate().unwrap();
    }

    #[test]
    fn f32_scores_track_f64() {
        let g = graph(&["A", "B", "C"], &[("A", "B", 3), ("B", "C", 1)]);
        let a = id(&g, "A");
        let s64 = personalized_pagerank(&g, &BTreeMap::from([(a, 1.0f64)]), &PprConfig::default()).unwrap();
        let s32 = personalized_pagerank(&g, &BTreeMap::from([(a, 1.0f32)]), &PprConfig::default()).unwrap();
        for (k, v) in &s64 {
            assert!((*v as f32 - s32[k]).abs() < 1e-4);
        }
    }

    #[test]
    fn disconnected_component_unreached_in_round_zero() {
        let g = graph(&["M", "X", "P", "Q"], &[("M", "X", 1), ("P", "Q", 1)]);
        let main = BTreeSet::from([id(&g, "M")]);
        let res = select_characters::<f64>(&g, &main, &BTreeSet::new(), &PprConfig::default()).unwrap();
        assert_eq!(res.rounds[0].scores[&id(&g, "P")], 0.0);
        assert!(!res.selected.contains(&id(&g, "P")));
        assert!(!res.selected.contains(&id(&g, "Q")));
        assert_eq!(res.selected, [id(&g, "M"), id(&g, "X")]);
    }

    #[test]
    fn singleton_selection() {
        let g = graph(&["M"], &[]);
        let main = BTreeSet::from([id(&g, "M")]);
        let res = select_characters::<f64>(&g, &main, &BTreeSet::new(), &PprConfig::default()).unwrap();
        assert_eq!(res.selected, [id(&g, "M")]);
        assert_eq!(res.rounds.len(), 1);
    }

    #[test]
    fn reseeding_reaches_second_ring() {
        // M - A (heavy), A - B (heavy), B - C; with a low threshold the walk
        // from M alone may miss C, but re-seeding from newly found nodes grows the set
        let g = graph(
            &["M", "A", "B", "C", "N1", "N2", "N3", "N4", "N5", "N6"],
            &[
                ("M", "A", 5),
                ("A", "B", 5),
                ("B", "C", 5),
                ("M", "N1", 5),
                ("M", "N2", 5),
                ("M", "N3", 5),
                ("M", "N4", 5),
                ("M", "N5", 5),
                ("M", "N6", 5),
            ],
        );
        let main = BTreeSet::from([id(&g, "M")]);
        let cfg = PprConfig::<f64> {
            threshold: 0.05,
            ..Default::default()
        };
        let res = select_characters(&g, &main, &BTreeSet::new(), &cfg).unwrap();
        assert!(!res.rounds[0].discovered.contains(&id(&g, "C")));
        assert!(res.selected.contains(&id(&g, "C")));

        let capped = PprConfig::<f64> {
            max_reseed_rounds: 1,
            ..cfg
        };
        let res = select_characters(&g, &main, &BTreeSet::new(), &capped).unwrap();
        assert_eq!(res.rounds.len(), 2);
    }

    #[test]
    fn selection_seed_validation() {
        let g = graph(&["M"], &[]);
        assert!(matches!(
            select_characters::<f64>(&g, &BTreeSet::new(), &BTreeSet::new(), &PprConfig::default()),
            Err(SelectionError::NoSeeds)
        ));
        assert!(matches!(
            select_characters::<f64>(
                &g,
                &BTreeSet::from([NodeId(5)]),
                &BTreeSet::new(),
                &PprConfig::default()
            ),
            Err(SelectionError::UnknownNode(_))
        ));
    }

    #[test]
    fn edge_count_examples() {
        let path = graph(&["A", "B", "C"], &[("A", "B", 1), ("B", "C", 1)]);
        assert_eq!(
            select_by_edge_count(&path, 1, DegreeMode::Unweighted).unwrap(),
            [id(&path, "B")]
        );

        let tri = graph(&["A", "B", "C"], &[("A", "B", 1), ("B", "C", 1), ("A", "C", 1)]);
        assert_eq!(select_by_edge_count(&tri, 3, DegreeMode::Unweighted).unwrap().len(), 3);

        let g = graph(&["A", "B", "C", "D"], &[("A", "B", 10), ("A", "C", 1), ("B", "C", 1)]);
        // degrees: A 2, B 2, C 2, D 0; weighted: A 11, B 11, C 2
        let top = select_by_edge_count(&g, 3, DegreeMode::Unweighted).unwrap();
        assert_eq!(top, [id(&g, "A"), id(&g, "B"), id(&g, "C")]);
        assert!(matches!(
            select_by_edge_count(&g, 5, DegreeMode::Unweighted),
            Err(SelectionError::InvalidK { k: 5, nodes: 4 })
        ));
        assert!(select_by_edge_count(&g, 0, DegreeMode::Unweighted).is_err());
    }

    #[test]
    fn weighted_mode_prefers_strength() {
        // A: degree 1 weight 9; B: degree 2 weight 2
        let g = graph(&["A", "B", "C", "D"], &[("A", "D", 9), ("B", "C", 1), ("B", "D", 1)]);
        assert_eq!(
            select_by_edge_count(&g, 1, DegreeMode::Weighted).unwrap(),
            [id(&g, "D")]
        );
        assert_eq!(
            select_by_edge_count(&g, 2, DegreeMode::Weighted).unwrap()[1],
            id(&g, "A")
        );
        assert_eq!(
            select_by_edge_count(&g, 2, DegreeMode::Unweighted).unwrap()[1],
            id(&g, "B")
        );
    }

    fn arb_graph() -> impl Strategy<Value = (CharacterGraph, Vec<f64>)> {
        (2usize..15).prop_flat_map(|n| {
            (
                proptest::collection::vec((0..n, 0..n, 1u64..6), 0..3 * n),
                proptest::collection::vec(0.0f64..2.0, n),
            )
                .prop_map(move |(edges, seeds)| {
                    let mut g = CharacterGraph::new();
                    for i in 0..n {
                        g.add_node(&format!("c{i}"), Tier::Supporting).unwrap();
                    }
                    for (a, b, w) in edges {
                        if a != b {
                            g.add_interaction(NodeId(a as u32), NodeId(b as u32), w).unwrap();
                        }
                    }
                    let mut seeds = seeds;
                    seeds[0] += 0.1;
                    (g, seeds)
                })
        })
    }

    proptest! {
        #[test]
        fn ppr_is_a_distribution((g, seeds) in arb_graph()) {
            let p: BTreeMap<NodeId, f64> = seeds.iter().enumerate().map(|(i, w)| (NodeId(i as u32), *w)).collect();
            let scores = personalized_pagerank(&g, &p, &PprConfig::default()).unwrap();
            prop_assert!(scores.values().all(|s| *s >= 0.0));
            let total: f64 = scores.values().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn ppr_ignores_seed_scale((g, seeds) in arb_graph(), scale in 0.01f64..100.0) {
            let p: BTreeMap<NodeId, f64> = seeds.iter().enumerate().map(|(i, w)| (NodeId(i as u32), *w)).collect();
            let scaled: BTreeMap<NodeId, f64> = p.iter().map(|(k, v)| (*k, v * scale)).collect();
            let a = personalized_pagerank(&g, &p, &PprConfig::default()).unwrap();
            let b = personalized_pagerank(&g, &scaled, &PprConfig::default()).unwrap();
            for (k, v) in &a {
                prop_assert!((v - b[k]).abs() < 1e-9);
            }
        }

        #[test]
        fn seeds_always_selected((g, _) in arb_graph(), main_i in 0usize..2) {
            let main = BTreeSet::from([NodeId(main_i as u32)]);
            let sub = BTreeSet::from([NodeId(1 - main_i as u32)]);
            let res = select_characters::<f64>(&g, &main, &sub, &PprConfig::default()).unwrap();
            prop_assert!(main.iter().chain(&sub).all(|s| res.selected.contains(s)));
            let again = select_characters::<f64>(&g, &main, &sub, &PprConfig::default()).unwrap();
            prop_assert_eq!(res, again);
        }
    }
}
