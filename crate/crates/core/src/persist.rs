//! JSON persistence. Every document carries `schema_version`; schema
//! violations are reported with the JSON pointer of the offending value.

// Documents carry a private unit `schema_version` field so the version tag
// is written and checked by serde.
#![allow(clippy::manual_non_exhaustive)]

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{AggregateReport, EvalReport, SelectionComparison};
use crate::model::{CharacterGraph, Crs, SCHEMA_VERSION};
use crate::selection::SelectionResult;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: schema violation at {pointer:?}: {message}")]
    Schema {
        path: PathBuf,
        /// JSON pointer (RFC 6901); empty for the document root.
        pointer: String,
        message: String,
    },
}

/// A deserialization failure located by JSON pointer.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("schema violation at {pointer:?}: {message}")]
pub struct SchemaError {
    pub pointer: String,
    pub message: String,
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        let token = match seg {
            Segment::Seq { index } => index.to_string(),
            Segment::Map { key } => key.clone(),
            Segment::Enum { variant } => variant.clone(),
            Segment::Unknown => continue,
        };
        out.push('/');
        out.push_str(&token.replace('~', "~0").replace('/', "~1"));
    }
    out
}

pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T, SchemaError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| SchemaError {
        pointer: pointer_of(e.path()),
        message: e.inner().to_string(),
    })
}

/// Pretty-printed with a trailing newline; stable across runs.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("persisted types serialize infallibly");
    s.push('\n');
    s
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PersistError> {
    let text = fs::read_to_string(path).map_err(|source| PersistError::Io {
        path: path.to_owned(),
        source,
    })?;
    from_json_str(&text).map_err(|e| PersistError::Schema {
        path: path.to_owned(),
        pointer: e.pointer,
        message: e.message,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PersistError> {
    let io_err = |source| PersistError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    fs::write(path, to_json_string(value)).map_err(io_err)
}

fn check_version(v: u32) -> Result<(), String> {
    if v == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))
    }
}

mod version {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(_: &(), s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u32(crate::model::SCHEMA_VERSION)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let v = u32::deserialize(d)?;
        super::check_version(v).map_err(serde::de::Error::custom)
    }
}

/// `graph.json`: the base character graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    #[serde(with = "version")]
    schema_version: (),
    pub graph: CharacterGraph,
}

impl GraphDocument {
    pub fn new(graph: CharacterGraph) -> Self {
        GraphDocument {
            schema_version: (),
            graph,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Ppr,
    Count,
}

/// One PPR round with characters named by canonical name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedRound {
    pub seeds: Vec<String>,
    pub scores: BTreeMap<String, f64>,
    pub discovered: Vec<String>,
}

/// `selection.json`: who was selected, how, and the resulting CRS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionDocument {
    #[serde(with = "version")]
    schema_version: (),
    pub method: SelectionMethod,
    pub main: Vec<String>,
    pub sub: Vec<String>,
    pub selected: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rounds: Vec<NamedRound>,
    pub crs: Crs,
}

impl SelectionDocument {
    pub fn new(
        method: SelectionMethod,
        base: &CharacterGraph,
        main: Vec<String>,
        sub: Vec<String>,
        selected: &[crate::NodeId],
        result: Option<&SelectionResult<f64>>,
        crs: Crs,
    ) -> Self {
        let name = |id: &crate::NodeId| {
            base.node(*id)
                .map(|n| n.canonical_name().to_owned())
                .unwrap_or_default()
        };
        let rounds = result
            .map(|r| {
                r.rounds
                    .iter()
                    .map(|round| NamedRound {
                        seeds: round.seeds.iter().map(name).collect(),
                        scores: round.scores.iter().map(|(id, s)| (name(id), *s)).collect(),
                        discovered: round.discovered.iter().map(name).collect(),
                    })
                    .collect()
            })
            .unwrap_or_default();
        SelectionDocument {
            schema_version: (),
            method,
            main,
            sub,
            selected: selected.iter().map(name).collect(),
            rounds,
            crs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedReport {
    pub drama: String,
    pub report: EvalReport<f64>,
}

/// `report.json`: per-drama metrics and their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    #[serde(with = "version")]
    schema_version: (),
    pub not_applicable_as_zero: bool,
    pub dramas: Vec<NamedReport>,
    pub aggregate: AggregateReport<f64>,
}

impl ReportDocument {
    pub fn new(dramas: Vec<NamedReport>, aggregate: AggregateReport<f64>, not_applicable_as_zero: bool) -> Self {
        ReportDocument {
            schema_version: (),
            not_applicable_as_zero,
            dramas,
            aggregate,
        }
    }
}

/// `comparison.json`: PPR vs degree-count selection per drama.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonDocument {
    #[serde(with = "version")]
    schema_version: (),
    pub dramas: Vec<SelectionComparison<f64>>,
}

impl ComparisonDocument {
    pub fn new(dramas: Vec<SelectionComparison<f64>>) -> Self {
        ComparisonDocument {
            schema_version: (),
            dramas,
        }
    }
}

/// Snapshot sink writing `crs.<stage>.json` files into `dir`.
pub fn snapshot_dir(dir: &Path) -> impl FnMut(&Crs) -> Result<(), String> + '_ {
    move |crs: &Crs| write_json(&dir.join(crs.stage().snapshot_file_name()), crs).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Stage, Tier};

    fn graph() -> CharacterGraph {
        let mut g = CharacterGraph::new();
        let a = g.add_node("A", Tier::Supporting).unwrap();
        let b = g.add_node("B/C", Tier::Supporting).unwrap();
        g.add_interaction(a, b, 2).unwrap();
        g
    }

    #[test]
    fn graph_document_round_trip() {
        let doc = GraphDocument::new(graph());
        let text = to_json_string(&doc);
        assert!(text.starts_with("{\n  \"schema_version\": 1,"));
        assert_eq!(from_json_str::<GraphDocument>(&text).unwrap(), doc);
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let doc = to_json_string(&GraphDocument::new(graph())).replace("\"supporting\"", "\"extra\"");
        let err = from_json_str::<GraphDocument>(&doc).unwrap_err();
        assert_eq!(err.pointer, "/graph/nodes/0/tier");

        let err = from_json_str::<GraphDocument>(r#"{"schema_version": 2, "graph": {"nodes": [], "edges": []}}"#)
            .unwrap_err();
        assert_eq!(err.pointer, "/schema_version");
        assert!(err.message.contains("unsupported schema_version 2"));

        let crs = to_json_string(&Crs::new(graph(), Stage::Merged)).replace("\"merged\"", "\"sorted\"");
        let err = from_json_str::<Crs>(&crs).unwrap_err();
        assert_eq!(err.pointer, "/stage");

        let err = from_json_str::<Crs>("{\"schema_version\": 1, \"stage\": \"merged\"").unwrap_err();
        assert_eq!(err.pointer, "");
    }

    #[test]
    fn pointer_escaping() {
        let err = from_json_str::<BTreeMap<String, BTreeMap<String, u8>>>(r#"{"a/b": {"c~d": "x"}}"#).unwrap_err();
        assert_eq!(err.pointer, "/a~1b/c~0d");
    }

    #[test]
    fn files_and_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/graph.json");
        write_json(&path, &GraphDocument::new(graph())).unwrap();
        let back: GraphDocument = read_json(&path).unwrap();
        assert_eq!(back.graph, graph());
        assert!(matches!(
            read_json::<GraphDocument>(&dir.path().join("missing.json")),
            Err(PersistError::Io { .. })
        ));

        let crs = Crs::new(graph(), Stage::Merged);
        let mut sink = snapshot_dir(dir.path());
        sink(&crs).unwrap();
        let back: Crs = read_json(&dir.path().join("crs.merged.json")).unwrap();
        assert_eq!(back, crs);
    }
}
