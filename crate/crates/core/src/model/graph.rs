use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::names::{normalize_name, pick_canonical};
use super::ModelError;

/// Stable handle for a character node. Ids survive merges (the smaller id
/// absorbs the larger) and are never reused within one graph lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Character importance tier. Ordered so that `Main > Sub > Supporting`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    #[default]
    Supporting,
    Sub,
    Main,
}

impl Tier {
    /// Main and sub characters are user-provided seeds and are protected
    /// from removal by the refinement agents.
    pub fn is_seed(self) -> bool {
        self != Tier::Supporting
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterNode {
    id: NodeId,
    canonical_name: String,
    aliases: BTreeSet<String>,
    tier: Tier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    role: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<String>,
}

impl CharacterNode {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn canonical_name(&self) -> &str {
        &self.canonical_name
    }

    pub fn aliases(&self) -> &BTreeSet<String> {
        &self.aliases
    }

    pub fn tier(&self) -> Tier {
        self.tier
    }

    pub fn role(&self) -> Option<&str> {
        self.role.as_deref()
    }

    pub fn group(&self) -> Option<&str> {
        self.group.as_deref()
    }

    /// Bracketed name set as shown to the agents, e.g.
    /// `[Young-min Cha / Professor Cha]`. Canonical name first, the other
    /// aliases in sorted order.
    pub fn name_set(&self) -> String {
        let mut parts = vec![self.canonical_name.as_str()];
        parts.extend(
            self.aliases
                .iter()
                .filter(|a| **a != self.canonical_name)
                .map(String::as_str),
        );
        format!("[{}]", parts.join(" / "))
    }

    pub(crate) fn set_group(&mut self, group: Option<String>) {
        self.group = group;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub a: NodeId,
    pub b: NodeId,
    pub weight: u64,
}

/// Weighted undirected character graph. Edge weight is the number of
/// observed interactions between two characters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct CharacterGraph {
    nodes: BTreeMap<NodeId, CharacterNode>,
    edges: BTreeMap<(NodeId, NodeId), u64>,
    alias_index: HashMap<String, NodeId>,
    next_id: u32,
}

impl PartialEq for CharacterGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Eq for CharacterGraph {}

fn edge_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl CharacterGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Adds a node with a singleton alias set.
    pub fn add_node(&mut self, name: &str, tier: Tier) -> Result<NodeId, ModelError> {
        let name = normalize_name(name);
        if name.is_empty() {
            return Err(ModelError::EmptyField("canonical_name"));
        }
        if let Some(&existing) = self.alias_index.get(&name) {
            return Err(ModelError::AliasConflict { alias: name, existing });
        }
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.alias_index.insert(name.clone(), id);
        self.nodes.insert(
            id,
            CharacterNode {
                id,
                canonical_name: name.clone(),
                aliases: BTreeSet::from([name]),
                tier,
                role: None,
                group: None,
            },
        );
        Ok(id)
    }

    /// Returns the node owning `name`, creating a supporting node if absent.
    pub fn get_or_add(&mut self, name: &str) -> Result<NodeId, ModelError> {
        match self.resolve(name) {
            Some(id) => Ok(id),
            None => self.add_node(name, Tier::Supporting),
        }
    }

    pub fn add_alias(&mut self, id: NodeId, alias: &str) -> Result<(), ModelError> {
        let alias = normalize_name(alias);
        if alias.is_empty() {
            return Err(ModelError::EmptyField("alias"));
        }
        match self.alias_index.get(&alias) {
            Some(&owner) if owner == id => return Ok(()),
            Some(&owner) => return Err(ModelError::AliasConflict { alias, existing: owner }),
            None => {}
        }
        let node = self.nodes.get_mut(&id).ok_or(ModelError::UnknownNode(id))?;
        node.aliases.insert(alias.clone());
        self.alias_index.insert(alias, id);
        Ok(())
    }

    pub fn node(&self, id: NodeId) -> Option<&CharacterNode> {
        self.nodes.get(&id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &CharacterNode> + '_ {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    /// Exact alias lookup after name normalization.
    pub fn resolve(&self, name: &str) -> Option<NodeId> {
        self.alias_index.get(&normalize_name(name)).copied()
    }

    pub fn set_tier(&mut self, id: NodeId, tier: Tier) -> Result<(), ModelError> {
        self.nodes.get_mut(&id).ok_or(ModelError::UnknownNode(id))?.tier = tier;
        Ok(())
    }

    pub fn set_role(&mut self, id: NodeId, role: Option<String>) -> Result<(), ModelError> {
        self.nodes.get_mut(&id).ok_or(ModelError::UnknownNode(id))?.role =
            role.map(|r| normalize_name(&r)).filter(|r| !r.is_empty());
        Ok(())
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Option<&mut CharacterNode> {
        self.nodes.get_mut(&id)
    }

    /// Adds `weight` interactions between `a` and `b`.
    pub fn add_interaction(&mut self, a: NodeId, b: NodeId, weight: u64) -> Result<(), ModelError> {
        if a == b {
            return Err(ModelError::SelfLoop(a));
        }
        if weight == 0 {
            return Err(ModelError::ZeroWeight);
        }
        for id in [a, b] {
            if !self.contains(id) {
                return Err(ModelError::UnknownNode(id));
            }
        }
        *self.edges.entry(edge_key(a, b)).or_insert(0) += weight;
        Ok(())
    }

    /// Edge weight between `a` and `b`, zero when they are not adjacent.
    pub fn weight(&self, a: NodeId, b: NodeId) -> u64 {
        self.edges.get(&edge_key(a, b)).copied().unwrap_or(0)
    }

    /// Edges as `(a, b, weight)` with `a < b`, in id order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, u64)> + '_ {
        self.edges.iter().map(|(&(a, b), &w)| (a, b, w))
    }

    pub fn neighbors(&self, id: NodeId) -> Vec<(NodeId, u64)> {
        self.edges()
            .filter_map(|(a, b, w)| {
                if a == id {
                    Some((b, w))
                } else if b == id {
                    Some((a, w))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Number of incident edges.
    pub fn degree(&self, id: NodeId) -> usize {
        self.edges().filter(|&(a, b, _)| a == id || b == id).count()
    }

    /// Sum of incident edge weights.
    pub fn weighted_degree(&self, id: NodeId) -> u64 {
        self.edges()
            .filter(|&(a, b, _)| a == id || b == id)
            .map(|(_, _, w)| w)
            .sum()
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.values().sum()
    }

    /// Collapses `a` and `b` into one node and returns the survivor (the
    /// smaller id). Alias sets are unioned, the higher tier is kept, edge
    /// weights toward common neighbours are summed, and the edge between
    /// the two (if any) disappears.
    pub fn merge(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ModelError> {
        if a == b {
            return Err(ModelError::SelfMerge(a));
        }
        for id in [a, b] {
            if !self.contains(id) {
                return Err(ModelError::UnknownNode(id));
            }
        }
        let (keep, gone) = if a < b { (a, b) } else { (b, a) };
        let absorbed = self.nodes.remove(&gone).expect("checked above");

        let moved: Vec<((NodeId, NodeId), u64)> = self
            .edges
            .iter()
            .filter(|((x, y), _)| *x == gone || *y == gone)
            .map(|(&k, &w)| (k, w))
            .collect();
        for (key, w) in moved {
            self.edges.remove(&key);
            let other = if key.0 == gone { key.1 } else { key.0 };
            if other != keep {
                *self.edges.entry(edge_key(keep, other)).or_insert(0) += w;
            }
        }

        let survivor = self.nodes.get_mut(&keep).expect("checked above");
        for alias in &absorbed.aliases {
            self.alias_index.insert(alias.clone(), keep);
        }
        survivor.aliases.extend(absorbed.aliases);
        survivor.canonical_name = pick_canonical(&survivor.aliases)
            .expect("alias set is never empty")
            .to_owned();
        survivor.tier = survivor.tier.max(absorbed.tier);
        if survivor.role.is_none() {
            survivor.role = absorbed.role;
        }
        if survivor.group.is_none() {
            survivor.group = absorbed.group;
        }
        Ok(keep)
    }

    pub fn remove_node(&mut self, id: NodeId) -> Result<CharacterNode, ModelError> {
        let node = self.nodes.remove(&id).ok_or(ModelError::UnknownNode(id))?;
        self.edges.retain(|&(a, b), _| a != id && b != id);
        for alias in &node.aliases {
            self.alias_index.remove(alias);
        }
        Ok(node)
    }

    /// Subgraph on `keep`, preserving node ids and the weights of edges
    /// with both endpoints kept. Unknown ids are ignored.
    pub fn induced_subgraph(&self, keep: &BTreeSet<NodeId>) -> CharacterGraph {
        let mut sub = CharacterGraph {
            next_id: self.next_id,
            ..CharacterGraph::default()
        };
        for (id, node) in &self.nodes {
            if keep.contains(id) {
                for alias in &node.aliases {
                    sub.alias_index.insert(alias.clone(), *id);
                }
                sub.nodes.insert(*id, node.clone());
            }
        }
        for (&(a, b), &w) in &self.edges {
            if keep.contains(&a) && keep.contains(&b) {
                sub.edges.insert((a, b), w);
            }
        }
        sub
    }

    /// Checks every structural invariant. Used when loading persisted graphs.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen: HashMap<&str, NodeId> = HashMap::new();
        for (id, node) in &self.nodes {
            if *id != node.id {
                return Err(ModelError::Invalid(format!("node keyed {id} carries id {}", node.id)));
            }
            if node.canonical_name.is_empty() {
                return Err(ModelError::EmptyField("canonical_name"));
            }
            if !node.aliases.contains(&node.canonical_name) {
                return Err(ModelError::Invalid(format!(
                    "canonical name {:?} missing from aliases of {id}",
                    node.canonical_name
                )));
            }
            for alias in &node.aliases {
                if alias.is_empty() || *alias != normalize_name(alias) {
                    return Err(ModelError::Invalid(format!("alias {alias:?} is not normalized")));
                }
                if let Some(prev) = seen.insert(alias, *id) {
                    return Err(ModelError::AliasConflict {
                        alias: alias.clone(),
                        existing: prev,
                    });
                }
            }
        }
        for (&(a, b), &w) in &self.edges {
            if a == b {
                return Err(ModelError::SelfLoop(a));
            }
            if a > b {
                return Err(ModelError::Invalid(format!("edge ({a}, {b}) not in canonical order")));
            }
            if w == 0 {
                return Err(ModelError::ZeroWeight);
            }
            for id in [a, b] {
                if !self.contains(id) {
                    return Err(ModelError::UnknownNode(id));
                }
            }
        }
        Ok(())
    }
}

/// Free-function form of [`CharacterGraph::resolve`].
pub fn resolve_alias(graph: &CharacterGraph, name: &str) -> Option<NodeId> {
    graph.resolve(name)
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    nodes: Vec<CharacterNode>,
    edges: Vec<EdgeRecord>,
}

impl From<CharacterGraph> for GraphRepr {
    fn from(g: CharacterGraph) -> Self {
        GraphRepr {
            edges: g.edges().map(|(a, b, weight)| EdgeRecord { a, b, weight }).collect(),
            nodes: g.nodes.into_values().collect(),
        }
    }
}

impl TryFrom<GraphRepr> for CharacterGraph {
    type Error = ModelError;

    fn try_from(repr: GraphRepr) -> Result<Self, Self::Error> {
        let mut g = CharacterGraph::default();
        for node in repr.nodes {
            if g.nodes.contains_key(&node.id) {
                return Err(ModelError::Invalid(format!("duplicate node id {}", node.id)));
            }
            for alias in &node.aliases {
                g.alias_index.insert(alias.clone(), node.id);
            }
            g.next_id = g.next_id.max(node.id.0 + 1);
            g.nodes.insert(node.id, node);
        }
        for e in repr.edges {
            let key = edge_key(e.a, e.b);
            if g.edges.insert(key, e.weight).is_some() {
                return Err(ModelError::Invalid(format!("duplicate edge ({}, {})", e.a, e.b)));
            }
            if e.a == e.b {
                return Err(ModelError::SelfLoop(e.a));
            }
        }
        g.validate()?;
        Ok(g)
    }
}
