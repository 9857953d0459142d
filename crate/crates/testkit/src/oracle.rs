//! Straightforward reference implementations to check the library against.

use std::collections::{BTreeMap, BTreeSet};

use crs_core::{CharacterGraph, NodeId};

/// Personalized PageRank by solving the stationary equations directly
/// (dense Gaussian elimination with partial pivoting):
///
/// x = d·Wx + d·(mass on isolated nodes)·r + (1 - d)·r
///
/// where W is the column-stochastic weighted transition matrix and r the
/// normalized personalization.
#[allow(clippy::needless_range_loop)]
pub fn ppr_direct(
    graph: &CharacterGraph,
    personalization: &BTreeMap<NodeId, f64>,
    damping: f64,
) -> BTreeMap<NodeId, f64> {
    let ids: Vec<NodeId> = graph.node_ids().collect();
    let n = ids.len();
    let pos = |id: NodeId| ids.iter().position(|x| *x == id).unwrap();
    let mut w = vec![vec![0.0; n]; n];
    for (a, b, weight) in graph.edges() {
        let (i, j) = (pos(a), pos(b));
        w[i][j] = weight as f64;
        w[j][i] = weight as f64;
    }
    let total: f64 = personalization.values().sum();
    let r: Vec<f64> = ids
        .iter()
        .map(|id| personalization.get(id).copied().unwrap_or(0.0) / total)
        .collect();
    let strength: Vec<f64> = (0..n).map(|j| w[j].iter().sum()).collect();

    // A x = (1 - d) r with A = I - d·W - d·r·1_isolated^T
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            let step = if strength[j] > 0.0 { w[j][i] / strength[j] } else { r[i] };
            a[i][j] = f64::from(u8::from(i == j)) - damping * step;
        }
        a[i][n] = (1.0 - damping) * r[i];
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|x, y| a[*x][col].abs().total_cmp(&a[*y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..=n {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    ids.iter().enumerate().map(|(i, id)| (*id, a[i][n] / a[i][i])).collect()
}

/// Same-group pair counts by enumerating every unordered pair: (tp, fp, fn).
/// `None` means ungrouped.
pub fn group_pair_counts<G: PartialEq>(pred: &[Option<G>], truth: &[Option<G>]) -> (usize, usize, usize) {
    let same = |v: &[Option<G>], i: usize, j: usize| v[i].is_some() && v[i] == v[j];
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            match (same(pred, i, j), same(truth, i, j)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    (tp, fp, fn_)
}

/// Percentage with 0 for an empty denominator.
pub fn percent_or_zero(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Tracks a sequence of merges as a partition of the original nodes and
/// derives what the merged graph must look like from the original
/// adjacency alone.
pub struct MergeOracle {
    ids: Vec<NodeId>,
    weights: BTreeMap<(NodeId, NodeId), u64>,
    aliases: BTreeMap<NodeId, BTreeSet<String>>,
    parent: BTreeMap<NodeId, NodeId>,
}

impl MergeOracle {
    pub fn new(graph: &CharacterGraph) -> Self {
        MergeOracle {
            ids: graph.node_ids().collect(),
            weights: graph.edges().map(|(a, b, w)| ((a, b), w)).collect(),
            aliases: graph.nodes().map(|n| (n.id(), n.aliases().clone())).collect(),
            parent: graph.node_ids().map(|id| (id, id)).collect(),
        }
    }

    fn find(&self, mut id: NodeId) -> NodeId {
        while self.parent[&id] != id {
            id = self.parent[&id];
        }
        id
    }

    /// Records that the classes containing `a` and `b` were merged; the
    /// class is represented by its smallest original id.
    pub fn merge(&mut self, a: NodeId, b: NodeId) {
        let (ra, rb) = (self.find(a), self.find(b));
        let (keep, gone) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent.insert(gone, keep);
    }

    pub fn classes(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut out: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for id in &self.ids {
            out.entry(self.find(*id)).or_default().push(*id);
        }
        out
    }

    /// Summed original weight between two classes.
    pub fn weight(&self, a: NodeId, b: NodeId) -> u64 {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return 0;
        }
        self.weights
            .iter()
            .filter(|((x, y), _)| {
                let (fx, fy) = (self.find(*x), self.find(*y));
                (fx == ra && fy == rb) || (fx == rb && fy == ra)
            })
            .map(|(_, w)| *w)
            .sum()
    }

    /// Original weight on edges that do not fall inside one class.
    pub fn total_weight(&self) -> u64 {
        self.weights
            .iter()
            .filter(|((x, y), _)| self.find(*x) != self.find(*y))
            .map(|(_, w)| *w)
            .sum()
    }

    pub fn aliases(&self, representative: NodeId) -> BTreeSet<String> {
        let root = self.find(representative);
        self.ids
            .iter()
            .filter(|id| self.find(**id) == root)
            .flat_map(|id| self.aliases[id].iter().cloned())
            .collect()
    }
}
