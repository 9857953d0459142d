use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::graph::{CharacterGraph, NodeId, Tier};
use super::names::normalize_name;
use super::vocab::ImplicitRelation;
use super::{ModelError, SCHEMA_VERSION};

/// Refinement stage of a [`Crs`]. Stages only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Base,
    Selected,
    Merged,
    RelationsExtracted,
    Filtered,
    RolesAssigned,
    Grouped,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Base,
        Stage::Selected,
        Stage::Merged,
        Stage::RelationsExtracted,
        Stage::Filtered,
        Stage::RolesAssigned,
        Stage::Grouped,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Base => "base",
            Stage::Selected => "selected",
            Stage::Merged => "merged",
            Stage::RelationsExtracted => "relations_extracted",
            Stage::Filtered => "filtered",
            Stage::RolesAssigned => "roles_assigned",
            Stage::Grouped => "grouped",
        }
    }

    /// Snapshot file name, `crs.<stage>.json`.
    pub fn snapshot_file_name(self) -> String {
        format!("crs.{}.json", self.as_str())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Directed relation from `subject` toward `object`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub subject: NodeId,
    pub object: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implicit: Option<ImplicitRelation>,
}

impl Relation {
    pub fn is_empty(&self) -> bool {
        self.explicit.is_none() && self.implicit.is_none()
    }

    pub fn connects(&self, a: NodeId, b: NodeId) -> bool {
        (self.subject == a && self.object == b) || (self.subject == b && self.object == a)
    }
}

/// Character relation structure: the graph plus directed relations and
/// exclusive groups, tagged with the refinement stage that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CrsRepr", into = "CrsRepr")]
pub struct Crs {
    stage: Stage,
    graph: CharacterGraph,
    relations: Vec<Relation>,
    groups: BTreeMap<String, BTreeSet<NodeId>>,
}

impl Crs {
    pub fn new(graph: CharacterGraph, stage: Stage) -> Self {
        let mut crs = Crs {
            stage,
            graph,
            relations: Vec::new(),
            groups: BTreeMap::new(),
        };
        crs.rebuild_groups_from_nodes();
        crs
    }

    /// The `Selected` CRS: the subgraph of `base` induced by `selected`,
    /// with main/sub tiers applied. Ids in `main`/`sub` must be selected.
    pub fn from_selection(
        base: &CharacterGraph,
        selected: &[NodeId],
        main: &BTreeSet<NodeId>,
        sub: &BTreeSet<NodeId>,
    ) -> Result<Self, ModelError> {
        let keep: BTreeSet<NodeId> = selected.iter().copied().collect();
        for id in &keep {
            if !base.contains(*id) {
                return Err(ModelError::UnknownNode(*id));
            }
        }
        let mut graph = base.induced_subgraph(&keep);
        for id in keep.iter().copied() {
            let tier = if main.contains(&id) {
                Tier::Main
            } else if sub.contains(&id) {
                Tier::Sub
            } else {
                Tier::Supporting
            };
            graph.set_tier(id, tier)?;
        }
        for id in main.iter().chain(sub) {
            if !keep.contains(id) {
                return Err(ModelError::Invalid(format!("seed {id} is not in the selection")));
            }
        }
        Ok(Crs::new(graph, Stage::Selected))
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn graph(&self) -> &CharacterGraph {
        &self.graph
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn groups(&self) -> &BTreeMap<String, BTreeSet<NodeId>> {
        &self.groups
    }

    /// Moves to a strictly later stage.
    pub fn advance(&mut self, next: Stage) -> Result<(), ModelError> {
        if next <= self.stage {
            return Err(ModelError::StageRegression {
                from: self.stage,
                to: next,
            });
        }
        self.stage = next;
        Ok(())
    }

    pub fn require_stage(&self, expected: Stage) -> Result<(), ModelError> {
        if self.stage == expected {
            Ok(())
        } else {
            Err(ModelError::WrongStage {
                expected,
                found: self.stage,
            })
        }
    }

    pub fn set_role(&mut self, id: NodeId, role: Option<String>) -> Result<(), ModelError> {
        self.graph.set_role(id, role)
    }

    /// Replaces the relation list. Endpoints must exist, relations must be
    /// non-empty and no ordered pair may repeat.
    pub fn set_relations(&mut self, relations: Vec<Relation>) -> Result<(), ModelError> {
        check_relations(&self.graph, &relations)?;
        self.relations = relations;
        Ok(())
    }

    /// Clears explicit relation strings for which `drop` returns true,
    /// removing relations that end up empty. Returns how many were cleared.
    pub fn clear_explicit_where(&mut self, mut drop: impl FnMut(&str) -> bool) -> usize {
        let mut cleared = 0;
        for rel in &mut self.relations {
            if rel.explicit.as_deref().is_some_and(&mut drop) {
                rel.explicit = None;
                cleared += 1;
            }
        }
        self.relations.retain(|r| !r.is_empty());
        cleared
    }

    /// Places `id` in `group`. Returns `Ok(false)` (and changes nothing) if
    /// the node already belongs to a group.
    pub fn assign_group(&mut self, id: NodeId, group: &str) -> Result<bool, ModelError> {
        let group = normalize_name(group);
        if group.is_empty() {
            return Err(ModelError::EmptyField("group"));
        }
        let node = self.graph.node_mut(id).ok_or(ModelError::UnknownNode(id))?;
        if node.group().is_some() {
            return Ok(false);
        }
        node.set_group(Some(group.clone()));
        self.groups.entry(group).or_default().insert(id);
        Ok(true)
    }

    pub fn group_of(&self, id: NodeId) -> Option<&str> {
        self.graph.node(id).and_then(|n| n.group())
    }

    /// Merges two nodes (see [`CharacterGraph::merge`]) and rewrites relation
    /// endpoints and group membership onto the survivor.
    pub fn merge_nodes(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ModelError> {
        let keep = self.graph.merge(a, b)?;
        let gone = if keep == a { b } else { a };
        let mut seen = BTreeSet::new();
        let mut relations = Vec::with_capacity(self.relations.len());
        for mut rel in self.relations.drain(..) {
            if rel.subject == gone {
                rel.subject = keep;
            }
            if rel.object == gone {
                rel.object = keep;
            }
            if rel.subject != rel.object && seen.insert((rel.subject, rel.object)) {
                relations.push(rel);
            }
        }
        self.relations = relations;
        self.rebuild_groups_from_nodes();
        Ok(keep)
    }

    /// Removes a node together with its edges, relations and group slot.
    pub fn remove_node(&mut self, id: NodeId) -> Result<(), ModelError> {
        self.graph.remove_node(id)?;
        self.relations.retain(|r| r.subject != id && r.object != id);
        for members in self.groups.values_mut() {
            members.remove(&id);
        }
        self.groups.retain(|_, m| !m.is_empty());
        Ok(())
    }

    fn rebuild_groups_from_nodes(&mut self) {
        self.groups.clear();
        for node in self.graph.nodes() {
            if let Some(g) = node.group() {
                self.groups.entry(g.to_owned()).or_default().insert(node.id());
            }
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.graph.validate()?;
        check_relations(&self.graph, &self.relations)?;
        let mut owner: BTreeMap<NodeId, &str> = BTreeMap::new();
        for (name, members) in &self.groups {
            if members.is_empty() {
                return Err(ModelError::Invalid(format!("group {name:?} has no members")));
            }
            for id in members {
                if let Some(prev) = owner.insert(*id, name) {
                    return Err(ModelError::GroupConflict {
                        node: *id,
                        first: prev.to_owned(),
                        second: name.clone(),
                    });
                }
                let node = self.graph.node(*id).ok_or(ModelError::UnknownNode(*id))?;
                if node.group() != Some(name.as_str()) {
                    return Err(ModelError::Invalid(format!(
                        "node {id} listed in group {name:?} but tagged {:?}",
                        node.group()
                    )));
                }
            }
        }
        for node in self.graph.nodes() {
            if node.group().is_some() && !owner.contains_key(&node.id()) {
                return Err(ModelError::Invalid(format!(
                    "node {} tagged with a group missing from the group map",
                    node.id()
                )));
            }
        }
        Ok(())
    }
}

fn check_relations(graph: &CharacterGraph, relations: &[Relation]) -> Result<(), ModelError> {
    let mut seen = BTreeSet::new();
    for rel in relations {
        for id in [rel.subject, rel.object] {
            if !graph.contains(id) {
                return Err(ModelError::UnknownNode(id));
            }
        }
        if rel.subject == rel.object {
            return Err(ModelError::SelfLoop(rel.subject));
        }
        if rel.is_empty() {
            return Err(ModelError::Invalid(format!(
                "relation {} -> {} carries neither an explicit nor an implicit label",
                rel.subject, rel.object
            )));
        }
        if !seen.insert((rel.subject, rel.object)) {
            return Err(ModelError::Invalid(format!(
                "duplicate relation {} -> {}",
                rel.subject, rel.object
            )));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CrsRepr {
    schema_version: u32,
    stage: Stage,
    graph: CharacterGraph,
    #[serde(default)]
    relations: Vec<Relation>,
    #[serde(default)]
    groups: BTreeMap<String, BTreeSet<NodeId>>,
}

impl From<Crs> for CrsRepr {
    fn from(c: Crs) -> Self {
        CrsRepr {
            schema_version: SCHEMA_VERSION,
            stage: c.stage,
            graph: c.graph,
            relations: c.relations,
            groups: c.groups,
        }
    }
}

impl TryFrom<CrsRepr> for Crs {
    type Error = ModelError;

    fn try_from(r: CrsRepr) -> Result<Self, Self::Error> {
        if r.schema_version != SCHEMA_VERSION {
            return Err(ModelError::SchemaVersion(r.schema_version));
        }
        let crs = Crs {
            stage: r.stage,
            graph: r.graph,
            relations: r.relations,
            groups: r.groups,
        };
        crs.validate()?;
        Ok(crs)
    }
}
