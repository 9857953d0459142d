//! Shared domain types: triplets, the character graph, the evolving CRS
//! and ground-truth annotations.

mod crs;
mod graph;
mod names;
mod truth;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crs::{Crs, Relation, Stage};
pub use graph::{resolve_alias, CharacterGraph, CharacterNode, EdgeRecord, NodeId, Tier};
pub use names::{fold_label, normalize_name, pick_canonical};
pub use truth::{GroundTruth, GtCharacter, KeyRelation};
pub use vocab::{ImplicitRelation, ImplicitVocabulary, IMPLICIT_TERMS};

/// Version stamped into every persisted document.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("alias {alias:?} already belongs to node {existing}")]
    AliasConflict { alias: String, existing: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("cannot merge node {0} with itself")]
    SelfMerge(NodeId),
    #[error("edge weight must be at least 1")]
    ZeroWeight,
    #[error("stage cannot move from {from} to {to}")]
    StageRegression { from: Stage, to: Stage },
    #[error("expected stage {expected}, found {found}")]
    WrongStage { expected: Stage, found: Stage },
    #[error("node {node} belongs to both {first:?} and {second:?}")]
    GroupConflict {
        node: NodeId,
        first: String,
        second: String,
    },
    #[error("{0:?} is not an implicit relation term")]
    NotInVocabulary(String),
    #[error("unsupported schema_version {0}")]
    SchemaVersion(u32),
    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(String),
    #[error("{0}")]
    Invalid(String),
}

/// One subject-predicate-object interaction extracted from a text chunk.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "TripletRepr")]
pub struct SpoTriplet {
    subject: String,
    predicate: String,
    object: String,
    chunk_index: usize,
}

impl SpoTriplet {
    pub fn new(subject: &str, predicate: &str, object: &str, chunk_index: usize) -> Result<Self, ModelError> {
        let subject = normalize_name(subject);
        let predicate = normalize_name(predicate);
        let object = normalize_name(object);
        for (field, value) in [("subject", &subject), ("predicate", &predicate), ("object", &object)] {
            if value.is_empty() {
                return Err(ModelError::EmptyField(field));
            }
        }
        Ok(SpoTriplet {
            subject,
            predicate,
            object,
            chunk_index,
        })
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn predicate(&self) -> &str {
        &self.predicate
    }

    pub fn object(&self) -> &str {
        &self.object
    }

    pub fn chunk_index(&self) -> usize {
        self.chunk_index
    }
}

#[derive(Deserialize)]
struct TripletRepr {
    subject: String,
    predicate: String,
    object: String,
    chunk_index: usize,
}

impl TryFrom<TripletRepr> for SpoTriplet {
    type Error = ModelError;

    fn try_from(r: TripletRepr) -> Result<Self, Self::Error> {
        SpoTriplet::new(&r.subject, &r.predicate, &r.object, r.chunk_index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_fields_trimmed_and_required() {
        let t = SpoTriplet::new(" A ", "helps", "B\n", 3).unwrap();
        assert_eq!((t.subject(), t.object(), t.chunk_index()), ("A", "B", 3));
        assert_eq!(
            SpoTriplet::new("A", "  ", "B", 0),
            Err(ModelError::EmptyField("predicate"))
        );
        assert!(
            serde_json::from_str::<SpoTriplet>(r#"{"subject":"","predicate":"p","object":"o","chunk_index":0}"#)
                .is_err()
        );
    }
}
