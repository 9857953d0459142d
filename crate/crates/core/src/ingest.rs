//! Script chunking, triplet extraction and base graph assembly.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::thread;

use regex::Regex;
use thiserror::Error;

use crate::backend::{BackendError, GenerationParams, LlmBackend};
use crate::model::{CharacterGraph, SpoTriplet};
use crate::prompts::{PromptError, PromptTemplate};

pub const DEFAULT_CHUNK_SIZE: usize = 512;
pub const DEFAULT_DELIMITER: &str = "|";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("script text is empty")]
    EmptyDocument,
    #[error("chunk size must be at least 1")]
    InvalidChunkSize,
    #[error("episode {0} outside 1..=4")]
    InvalidEpisode(u32),
    #[error("script file name {0:?} does not follow <drama_id>_e<episode>.txt")]
    BadFileName(String),
    #[error("triplet extraction failed on chunk {chunk_index}: {source}")]
    Backend {
        chunk_index: usize,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("triplet line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One episode script.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptDocument {
    drama_id: String,
    episode: u8,
    text: String,
}

impl ScriptDocument {
    pub fn new(drama_id: &str, episode: u32, text: String) -> Result<Self, IngestError> {
        if !(1..=4).contains(&episode) {
            return Err(IngestError::InvalidEpisode(episode));
        }
        Ok(ScriptDocument {
            drama_id: drama_id.to_owned(),
            episode: episode as u8,
            text,
        })
    }

    /// Builds a document from a `<drama_id>_e<episode>.txt` file name.
    pub fn from_file_name(file_name: &str, text: String) -> Result<Self, IngestError> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| Regex::new(r"^(.+)_e(\d+)\.txt$").expect("valid regex"));
        let caps = re
            .captures(file_name)
            .ok_or_else(|| IngestError::BadFileName(file_name.to_owned()))?;
        let episode = caps[2]
            .parse()
            .map_err(|_| IngestError::BadFileName(file_name.to_owned()))?;
        Self::new(&caps[1], episode, text)
    }

    pub fn drama_id(&self) -> &str {
        &self.drama_id
    }

    pub fn episode(&self) -> u8 {
        self.episode
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub index: usize,
    pub text: String,
}

/// Splits the script into consecutive pieces of at most `chunk_size`
/// Unicode scalar values. No boundary snapping; concatenating the chunks
/// gives back the original text.
pub fn chunk_script(doc: &ScriptDocument, chunk_size: usize) -> Result<Vec<Chunk>, IngestError> {
    if chunk_size == 0 {
        return Err(IngestError::InvalidChunkSize);
    }
    if doc.text.is_empty() {
        return Err(IngestError::EmptyDocument);
    }
    let chars: Vec<char> = doc.text.chars().collect();
    Ok(chars
        .chunks(chunk_size)
        .enumerate()
        .map(|(index, piece)| Chunk {
            index,
            text: piece.iter().collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractionOutcome {
    pub triplets: Vec<SpoTriplet>,
    pub dropped_lines: usize,
}

impl ExtractionOutcome {
    fn absorb(&mut self, other: ExtractionOutcome) {
        self.triplets.extend(other.triplets);
        self.dropped_lines += other.dropped_lines;
    }
}

/// Line-oriented triplet grammar: `subject <delim> predicate <delim> object`,
/// one per line. Leading list markers, bold markers and a wrapping pair of
/// parentheses are tolerated. Blank lines are skipped; anything else that
/// does not yield three non-empty fields is dropped and counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletParser {
    delimiter: String,
}

impl Default for TripletParser {
    fn default() -> Self {
        TripletParser::new(DEFAULT_DELIMITER)
    }
}

impl TripletParser {
    pub fn new(delimiter: &str) -> Self {
        TripletParser {
            delimiter: delimiter.to_owned(),
        }
    }

    pub fn delimiter(&self) -> &str {
        &self.delimiter
    }

    pub fn parse(&self, response: &str, chunk_index: usize) -> ExtractionOutcome {
        static MARKER: OnceLock<Regex> = OnceLock::new();
        let marker = MARKER.get_or_init(|| Regex::new(r"^(?:[-*•]|\d+[.)])\s+").expect("valid regex"));

        let mut out = ExtractionOutcome::default();
        for raw in response.lines() {
            let line = raw.replace("**", "");
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let line = marker.replace(line, "");
            let mut line = line.trim();
            if line.starts_with('(') && line.ends_with(')') {
                line = &line[1..line.len() - 1];
            }
            let fields: Vec<&str> = line.split(self.delimiter.as_str()).map(str::trim).collect();
            match fields.as_slice() {
                [s, p, o] => match SpoTriplet::new(s, p, o, chunk_index) {
                    Ok(t) => out.triplets.push(t),
                    Err(_) => out.dropped_lines += 1,
                },
                _ => out.dropped_lines += 1,
            }
        }
        out
    }
}

/// Prompts the backend with one chunk and parses the reply.
pub fn extract_triplets(
    chunk: &Chunk,
    backend: &dyn LlmBackend,
    parser: &TripletParser,
    template: &PromptTemplate,
    params: &GenerationParams,
) -> Result<ExtractionOutcome, IngestError> {
    let prompt = template.render(&[("chunk", &chunk.text), ("delimiter", parser.delimiter())])?;
    let completion = backend
        .complete(&prompt, params)
        .map_err(|source| IngestError::Backend {
            chunk_index: chunk.index,
            source,
        })?;
    let outcome = parser.parse(&completion.text, chunk.index);
    if outcome.dropped_lines > 0 {
        log::warn!(
            "chunk {}: dropped {} malformed line(s)",
            chunk.index,
            outcome.dropped_lines
        );
    }
    Ok(outcome)
}

/// Runs [`extract_triplets`] over all chunks with at most `parallelism`
/// concurrent backend calls. Results are merged in chunk order; the first
/// failing chunk (by index) is reported.
pub fn extract_all(
    chunks: &[Chunk],
    backend: &dyn LlmBackend,
    parser: &TripletParser,
    template: &PromptTemplate,
    params: &GenerationParams,
    parallelism: usize,
) -> Result<ExtractionOutcome, IngestError> {
    let workers = parallelism.max(1).min(chunks.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ExtractionOutcome, IngestError>>>> =
        Mutex::new((0..chunks.len()).map(|_| None).collect());

    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(chunk) = chunks.get(i) else { break };
                let result = extract_triplets(chunk, backend, parser, template, params);
                slots.lock().expect("slot lock poisoned")[i] = Some(result);
            });
        }
    });

    let mut merged = ExtractionOutcome::default();
    for slot in slots.into_inner().expect("slot lock poisoned") {
        merged.absorb(slot.expect("every chunk processed")?);
    }
    Ok(merged)
}

/// Folds triplets into the base graph: one node per distinct subject/object
/// name and one unit of edge weight per triplet with distinct endpoints.
/// Node ids follow the sorted order of names, so the result does not depend
/// on triplet order.
pub fn build_base_graph(triplets: &[SpoTriplet]) -> CharacterGraph {
    let names: BTreeSet<&str> = triplets.iter().flat_map(|t| [t.subject(), t.object()]).collect();
    let mut graph = CharacterGraph::new();
    for name in names {
        graph
            .get_or_add(name)
            .expect("triplet names are non-empty and distinct");
    }
    for t in triplets {
        let s = graph.resolve(t.subject()).expect("added above");
        let o = graph.resolve(t.object()).expect("added above");
        if s != o {
            graph.add_interaction(s, o, 1).expect("endpoints exist");
        }
    }
    graph
}

pub fn write_triplets_jsonl<W: Write>(mut out: W, triplets: &[SpoTriplet]) -> Result<(), IngestError> {
    for t in triplets {
        let line = serde_json::to_string(t).map_err(|e| IngestError::Jsonl {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_triplets_jsonl<R: BufRead>(input: R) -> Result<Vec<SpoTriplet>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| IngestError::Jsonl {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockScript};
    use crate::prompts::PromptSet;

    fn doc(text: &str) -> ScriptDocument {
        ScriptDocument::new("d", 1, text.to_owned()).unwrap()
    }

    #[test]
    fn chunking_examples() {
        let text = "a".repeat(1024);
        let chunks = chunk_script(&doc(&text), 512).unwrap();
        assert_eq!(chunks.len(), 2);
        assert!(chunks.iter().all(|c| c.text.chars().count() == 512));

        let chunks = chunk_script(&doc(&"b".repeat(513)), 512).unwrap();
        assert_eq!(
            chunks.iter().map(|c| c.text.chars().count()).collect::<Vec<_>>(),
            [512, 1]
        );
    }

    #[test]
    fn chunking_counts_scalars_not_bytes() {
        let text = "가나다라";
        // oracle: scalar count is 4 even though the UTF-8 length is 12
        assert_eq!(text.chars().count(), 4);
        assert_eq!(text.len(), 12);
        let chunks = chunk_script(&doc(text), 2).unwrap();
        assert_eq!(
            chunks.iter().map(|c| c.text.as_str()).collect::<Vec<_>>(),
            ["가나", "다라"]
        );
    }

    #[test]
    fn chunking_errors() {
        assert!(matches!(chunk_script(&doc(""), 512), Err(IngestError::EmptyDocument)));
        assert!(matches!(chunk_script(&doc("x"), 0), Err(IngestError::InvalidChunkSize)));
    }

    #[test]
    fn episode_range_and_file_names() {
        assert!(matches!(
            ScriptDocument::new("d", 5, "x".into()),
            Err(IngestError::InvalidEpisode(5))
        ));
        let d = ScriptDocument::from_file_name("ghost_doctor_e3.txt", "x".into()).unwrap();
        assert_eq!((d.drama_id(), d.episode()), ("ghost_doctor", 3));
        assert!(ScriptDocument::from_file_name("notes.txt", "x".into()).is_err());
    }

    fn run(response: &str) -> ExtractionOutcome {
        let mock = MockBackend::new("m", MockScript::default().then(response));
        let chunk = Chunk {
            index: 0,
            text: "script".into(),
        };
        extract_triplets(
            &chunk,
            &mock,
            &TripletParser::default(),
            &PromptSet::default().triplets,
            &GenerationParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn extraction_examples() {
        let out = run("A | helps | B");
        assert_eq!(out.triplets, [SpoTriplet::new("A", "helps", "B", 0).unwrap()]);
        assert_eq!(out.dropped_lines, 0);

        let out = run("this is not a triplet\n\nA | helps | B");
        assert_eq!(out.triplets.len(), 1);
        assert_eq!(out.dropped_lines, 1);

        let out = run("A | helps | B\nA | helps | B");
        assert_eq!(out.triplets.len(), 2);
        let g = build_base_graph(&out.triplets);
        let (a, b) = (g.resolve("A").unwrap(), g.resolve("B").unwrap());
        assert_eq!(g.weight(a, b), 2);
    }

    #[test]
    fn parser_tolerates_markup() {
        let p = TripletParser::default();
        let out = p.parse("1. **(A | meets | B)**\n- C | calls | D\nE | | F\nG | x | H | I", 4);
        assert_eq!(out.triplets.len(), 2);
        assert_eq!(out.triplets[1].chunk_index(), 4);
        assert_eq!(out.dropped_lines, 2);
        let tab = TripletParser::new("\t").parse("A\thelps\tB", 0);
        assert_eq!(tab.triplets.len(), 1);
    }

    #[test]
    fn backend_failure_carries_chunk_index() {
        let mock = MockBackend::new("m", MockScript::default());
        let chunk = Chunk {
            index: 7,
            text: "x".into(),
        };
        let err = extract_triplets(
            &chunk,
            &mock,
            &TripletParser::default(),
            &PromptSet::default().triplets,
            &GenerationParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::Backend { chunk_index: 7, .. }));
    }

    #[test]
    fn parallel_extraction_merges_in_chunk_order() {
        let script = MockScript::default()
            .with_rule("chunk-zero", "A | x | B")
            .with_rule("chunk-one", "B | y | C")
            .with_rule("chunk-two", "C | z | A");
        let mock = MockBackend::new("m", script);
        let chunks: Vec<Chunk> = ["chunk-zero", "chunk-one", "chunk-two"]
            .iter()
            .enumerate()
            .map(|(index, t)| Chunk {
                index,
                text: t.to_string(),
            })
            .collect();
        let out = extract_all(
            &chunks,
            &mock,
            &TripletParser::default(),
            &PromptSet::default().triplets,
            &GenerationParams::default(),
            3,
        )
        .unwrap();
        let idx: Vec<usize> = out.triplets.iter().map(|t| t.chunk_index()).collect();
        assert_eq!(idx, [0, 1, 2]);
    }

    #[test]
    fn base_graph_examples() {
        assert!(build_base_graph(&[]).is_empty());

        let ts = [
            SpoTriplet::new("A", "p", "B", 0).unwrap(),
            SpoTriplet::new("B", "q", "A", 0).unwrap(),
        ];
        let g = build_base_graph(&ts);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.weight(g.resolve("A").unwrap(), g.resolve("B").unwrap()), 2);

        let g = build_base_graph(&[SpoTriplet::new("A", "p", "A", 0).unwrap()]);
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn jsonl_roundtrip() {
        let ts = vec![
            SpoTriplet::new("차영민", "돕다", "B", 0).unwrap(),
            SpoTriplet::new("B", "q", "A", 3).unwrap(),
        ];
        let mut buf = Vec::new();
        write_triplets_jsonl(&mut buf, &ts).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 2);
        assert_eq!(read_triplets_jsonl(buf.as_slice()).unwrap(), ts);
        assert!(matches!(
            read_triplets_jsonl("{\"subject\":1}\n".as_bytes()),
            Err(IngestError::Jsonl { line: 1, .. })
        ));
    }
}
