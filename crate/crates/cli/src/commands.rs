use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crs_core::agents::{run_chain, AgentContext, AgentError, AgentReport};
use crs_core::backend::{LlmBackend, MockBackend, MockScript, PipelineStep};
use crs_core::eval::{
    aggregate, evaluate, format_report_table, format_selection_table, format_summary_table, selection_breakdown,
    selection_pr, EvalError, SelectionComparison,
};
use crs_core::ingest::{
    build_base_graph, chunk_script, extract_all, write_triplets_jsonl, IngestError, ScriptDocument, TripletParser,
};
use crs_core::model::SCHEMA_VERSION;
use crs_core::persist::{
    read_json, snapshot_dir, write_json, ComparisonDocument, GraphDocument, NamedReport, ReportDocument,
    SelectionDocument, SelectionMethod,
};
use crs_core::render::to_dot;
use crs_core::selection::{select_by_edge_count, select_characters};
use crs_core::{CharacterGraph, Crs, GroundTruth, NodeId};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::{Cli, Command, EmbedderChoice, Method};

/// Runs one parsed command; returns the text meant for stdout.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let config = PipelineConfig::load(cli.config.as_deref())?;
    let mock = cli.mock_script.as_deref().map(read_json::<MockScript>).transpose()?;
    let env = Env { config, mock };
    match &cli.command {
        Command::BuildGraph { scripts, out_dir } => env.build_graph(scripts, out_dir.as_deref()),
        Command::Select {
            graph,
            main,
            sub,
            method,
            k,
            out,
        } => env.select(graph, main, sub, *method, *k, out.as_deref()),
        Command::CompareSelection {
            cases,
            graph,
            gt,
            main,
            sub,
            name,
            out_dir,
        } => {
            let cases = match cases {
                Some(path) => CasesFile::load(path)?,
                None => vec![Case {
                    name: name.clone(),
                    graph: graph.clone().expect("required by clap"),
                    ground_truth: gt.clone().expect("required by clap"),
                    main: main.clone(),
                    sub: sub.clone(),
                }],
            };
            env.compare_selection(&cases, out_dir.as_deref())
        }
        Command::Refine {
            selection,
            treatment,
            summaries,
            out_dir,
        } => env.refine(selection, treatment, summaries, out_dir.as_deref()),
        Command::Evaluate {
            crs,
            gt,
            names,
            embedder,
            na_as_zero,
            out_dir,
        } => env.evaluate(crs, gt, names, *embedder, *na_as_zero, out_dir.as_deref()),
        Command::Render { crs, out } => render(crs, out.as_deref()),
    }
}

struct Env {
    config: PipelineConfig,
    mock: Option<MockScript>,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Script files named on the command line, directories expanded to their
/// `*.txt` entries in name order.
fn script_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for path in paths {
        let meta = fs::metadata(path).map_err(|e| CliError::io(path, e))?;
        if !meta.is_dir() {
            files.push(path.clone());
            continue;
        }
        let mut found: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError::io(path, e))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
            .collect();
        if found.is_empty() {
            return Err(CliError::io(path, "no script files (*.txt) in directory"));
        }
        found.sort();
        files.extend(found);
    }
    Ok(files)
}

fn ingest_error(e: IngestError) -> CliError {
    match e {
        IngestError::Backend { chunk_index, source } => {
            CliError::backend(PipelineStep::Triplets, format!("chunk {chunk_index}: {source}"))
        }
        other => CliError::invalid(other),
    }
}

fn resolve_names(graph: &CharacterGraph, names: &[String]) -> (BTreeSet<NodeId>, Vec<String>) {
    let mut ids = BTreeSet::new();
    let mut unknown = Vec::new();
    for name in names {
        match graph.resolve(name) {
            Some(id) => {
                ids.insert(id);
            }
            None => unknown.push(name.clone()),
        }
    }
    (ids, unknown)
}

fn canonical(graph: &CharacterGraph, ids: &BTreeSet<NodeId>) -> Vec<String> {
    ids.iter()
        .filter_map(|id| graph.node(*id))
        .map(|n| n.canonical_name().to_owned())
        .collect()
}

fn seeds(
    graph: &CharacterGraph,
    main: &[String],
    sub: &[String],
) -> Result<(BTreeSet<NodeId>, BTreeSet<NodeId>), CliError> {
    if main.is_empty() {
        return Err(CliError::invalid("at least one main character is required"));
    }
    let (main_ids, mut unknown) = resolve_names(graph, main);
    let (sub_ids, unknown_sub) = resolve_names(graph, sub);
    unknown.extend(unknown_sub);
    if !unknown.is_empty() {
        return Err(CliError::invalid(format!(
            "unknown character name(s) in --main/--sub: {}",
            unknown.join(", ")
        )));
    }
    if let Some(id) = main_ids.intersection(&sub_ids).next() {
        return Err(CliError::invalid(format!(
            "{} is given as both main and sub character",
            graph.node(*id).map_or("?", |n| n.canonical_name())
        )));
    }
    Ok((main_ids, sub_ids))
}

fn default_name(crs_path: &Path, index: usize) -> String {
    crs_path
        .parent()
        .and_then(Path::file_name)
        .or_else(|| crs_path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| format!("drama {}", index + 1))
}

/// One drama of a `compare-selection` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub name: String,
    pub graph: PathBuf,
    pub ground_truth: PathBuf,
    pub main: Vec<String>,
    #[serde(default)]
    pub sub: Vec<String>,
}

/// Case list file; paths are relative to the file itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CasesFile {
    pub schema_version: u32,
    pub dramas: Vec<Case>,
}

impl CasesFile {
    pub fn load(path: &Path) -> Result<Vec<Case>, CliError> {
        let file: CasesFile = read_json(path)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(CliError::Schema {
                path: path.to_owned(),
                pointer: "/schema_version".into(),
                message: format!("unsupported schema_version {}", file.schema_version),
            });
        }
        if file.dramas.is_empty() {
            return Err(CliError::invalid(format!("{}: no dramas listed", path.display())));
        }
        let base = path.parent().unwrap_or(Path::new(""));
        Ok(file
            .dramas
            .into_iter()
            .map(|mut c| {
                c.graph = base.join(&c.graph);
                c.ground_truth = base.join(&c.ground_truth);
                c
            })
            .collect())
    }
}

/// `agents.json`: what each agent of a refine run did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineLog {
    pub schema_version: u32,
    pub agents: Vec<AgentReport>,
}

impl Env {
    fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map_or_else(|| self.config.output_dir.clone(), Path::to_path_buf)
    }

    fn build_graph(&self, scripts: &[PathBuf], out_dir: Option<&Path>) -> Result<String, CliError> {
        let mut docs = Vec::new();
        for path in script_files(scripts)? {
            let text = read_text(&path)?;
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let doc = ScriptDocument::from_file_name(&name, text)
                .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
            docs.push((path, doc));
        }
        docs.sort_by(|(_, a), (_, b)| (a.drama_id(), a.episode()).cmp(&(b.drama_id(), b.episode())));
        let dramas: BTreeSet<&str> = docs.iter().map(|(_, d)| d.drama_id()).collect();
        if dramas.len() > 1 {
            return Err(CliError::invalid(format!(
                "scripts belong to more than one drama: {}",
                dramas.into_iter().collect::<Vec<_>>().join(", ")
            )));
        }
        for pair in docs.windows(2) {
            if pair[0].1.episode() == pair[1].1.episode() {
                return Err(CliError::invalid(format!(
                    "episode {} given twice ({} and {})",
                    pair[0].1.episode(),
                    pair[0].0.display(),
                    pair[1].0.display()
                )));
            }
        }

        let prompts = self.config.prompts()?;
        let backends = self.config.backends(self.mock.as_ref())?;
        let parser = TripletParser::new(&self.config.delimiter);
        let mut triplets = Vec::new();
        let (mut chunks_total, mut dropped) = (0, 0);
        for (path, doc) in &docs {
            let chunks = chunk_script(doc, self.config.chunk_size)
                .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
            chunks_total += chunks.len();
            let outcome = extract_all(
                &chunks,
                backends.for_step(PipelineStep::Triplets),
                &parser,
                &prompts.triplets,
                &self.config.agents.params,
                self.config.parallelism,
            )
            .map_err(ingest_error)?;
            dropped += outcome.dropped_lines;
            triplets.extend(outcome.triplets);
        }
        let graph = build_base_graph(&triplets);

        let out = self.out_dir(out_dir);
        let mut jsonl = Vec::new();
        write_triplets_jsonl(&mut jsonl, &triplets).map_err(CliError::invalid)?;
        write_text(
            &out.join("triplets.jsonl"),
            &String::from_utf8(jsonl).expect("JSON is UTF-8"),
        )?;
        write_json(&out.join("graph.json"), &GraphDocument::new(graph.clone()))?;

        let mut text = String::new();
        let _ = writeln!(
            text,
            "{} script(s), {chunks_total} chunk(s), {} triplet(s), {dropped} dropped line(s)",
            docs.len(),
            triplets.len()
        );
        let _ = writeln!(
            text,
            "base graph: {} character(s), {} edge(s) -> {}",
            graph.node_count(),
            graph.edge_count(),
            out.join("graph.json").display()
        );
        Ok(text)
    }

    fn select(
        &self,
        graph_path: &Path,
        main: &[String],
        sub: &[String],
        method: Method,
        k: Option<usize>,
        out: Option<&Path>,
    ) -> Result<String, CliError> {
        let graph = read_json::<GraphDocument>(graph_path)?.graph;
        let (main_ids, sub_ids) = seeds(&graph, main, sub)?;
        let ppr = select_characters(&graph, &main_ids, &sub_ids, &self.config.ppr).map_err(CliError::invalid)?;
        let (selected, result, method) = match method {
            Method::Ppr => (ppr.selected.clone(), Some(&ppr), SelectionMethod::Ppr),
            Method::Count => {
                let k = k.unwrap_or(ppr.selected.len());
                let picked = select_by_edge_count(&graph, k, self.config.ppr.degree_mode).map_err(CliError::invalid)?;
                (picked, None, SelectionMethod::Count)
            }
        };
        let chosen: BTreeSet<NodeId> = selected.iter().copied().collect();
        let missed: Vec<NodeId> = main_ids
            .union(&sub_ids)
            .filter(|id| !chosen.contains(id))
            .copied()
            .collect();
        if !missed.is_empty() {
            log::warn!("{} seed character(s) not among the count selection", missed.len());
        }
        let keep = |ids: &BTreeSet<NodeId>| ids.intersection(&chosen).copied().collect::<BTreeSet<_>>();
        let crs =
            Crs::from_selection(&graph, &selected, &keep(&main_ids), &keep(&sub_ids)).map_err(CliError::invalid)?;
        let doc = SelectionDocument::new(
            method,
            &graph,
            canonical(&graph, &main_ids),
            canonical(&graph, &sub_ids),
            &selected,
            result,
            crs,
        );
        let path = out.map_or_else(|| self.config.output_dir.join("selection.json"), Path::to_path_buf);
        write_json(&path, &doc)?;

        let mut text = String::new();
        let _ = writeln!(
            text,
            "selected {} of {} character(s):",
            doc.selected.len(),
            graph.node_count()
        );
        for name in &doc.selected {
            let _ = writeln!(text, "  {name}");
        }
        let _ = writeln!(text, "-> {}", path.display());
        Ok(text)
    }

    fn compare_selection(&self, cases: &[Case], out_dir: Option<&Path>) -> Result<String, CliError> {
        let mut comparisons = Vec::new();
        let mut tables = String::new();
        for case in cases {
            let graph = read_json::<GraphDocument>(&case.graph)?.graph;
            let gt: GroundTruth = read_json(&case.ground_truth)?;
            let (main_ids, sub_ids) =
                seeds(&graph, &case.main, &case.sub).map_err(|e| CliError::invalid(format!("{}: {e}", case.name)))?;
            let ppr = select_characters(&graph, &main_ids, &sub_ids, &self.config.ppr).map_err(CliError::invalid)?;
            let k = ppr.selected.len();
            let count = select_by_edge_count(&graph, k, self.config.ppr.degree_mode).map_err(CliError::invalid)?;
            let score = |ids: &[NodeId]| selection_pr::<f64>(&graph, ids, &gt).map_err(CliError::invalid);
            comparisons.push(SelectionComparison {
                drama: case.name.clone(),
                ppr: score(&ppr.selected)?,
                count: score(&count)?,
            });
            let rows = selection_breakdown(&graph, &ppr.selected, &count, &gt);
            let _ = writeln!(tables, "\n{}\n{}", case.name, format_selection_table(&rows, k));
        }

        let mut text = SelectionComparison::format_summary(&comparisons);
        text.push_str(&tables);
        let out = self.out_dir(out_dir);
        write_json(&out.join("comparison.json"), &ComparisonDocument::new(comparisons))?;
        write_text(&out.join("comparison.txt"), &text)?;
        Ok(text)
    }

    fn refine(
        &self,
        selection: &Path,
        treatment: &Path,
        summaries: &[PathBuf],
        out_dir: Option<&Path>,
    ) -> Result<String, CliError> {
        let doc: SelectionDocument = read_json(selection)?;
        let treatment = read_text(treatment)?;
        let summaries = summaries.iter().map(|p| read_text(p)).collect::<Result<Vec<_>, _>>()?;
        let ctx = AgentContext::new(&treatment, summaries, doc.crs).map_err(CliError::invalid)?;
        let options = self.config.agent_options()?;
        let backends = self.config.backends(self.mock.as_ref())?;
        let out = self.out_dir(out_dir);
        let mut sink = snapshot_dir(&out);
        let outcome = run_chain(ctx, &backends, &options, &mut sink).map_err(|e| match e {
            AgentError::Backend { agent, source } => CliError::backend(agent, source),
            AgentError::Snapshot { stage, message } => CliError::io(&out.join(stage.snapshot_file_name()), message),
            other => CliError::invalid(other),
        })?;
        write_json(
            &out.join("agents.json"),
            &RefineLog {
                schema_version: SCHEMA_VERSION,
                agents: outcome.reports.clone(),
            },
        )?;

        let mut text = String::new();
        for r in &outcome.reports {
            let counters: Vec<String> = r.counters.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(
                text,
                "{:<9} records={} dropped={} requeries={}{}{}",
                r.agent,
                r.records,
                r.dropped_lines,
                r.requeries,
                if counters.is_empty() { "" } else { " " },
                counters.join(" ")
            );
        }
        let g = outcome.crs.graph();
        let _ = writeln!(
            text,
            "final CRS: {} character(s), {} relation(s), {} group(s) -> {}",
            g.node_count(),
            outcome.crs.relations().len(),
            outcome.crs.groups().len(),
            out.display()
        );
        Ok(text)
    }

    fn evaluate(
        &self,
        crs_paths: &[PathBuf],
        gt_paths: &[PathBuf],
        names: &[String],
        embedder: EmbedderChoice,
        na_as_zero: bool,
        out_dir: Option<&Path>,
    ) -> Result<String, CliError> {
        if crs_paths.len() != gt_paths.len() {
            return Err(CliError::invalid(format!(
                "{} --crs file(s) but {} --gt file(s)",
                crs_paths.len(),
                gt_paths.len()
            )));
        }
        if !names.is_empty() && names.len() != crs_paths.len() {
            return Err(CliError::invalid("give one --name per --crs file, or none"));
        }
        let backends;
        let exact;
        let embedder: &dyn LlmBackend = match embedder {
            EmbedderChoice::Exact => {
                exact = MockBackend::new("exact", MockScript::default());
                &exact
            }
            EmbedderChoice::Config => {
                backends = self.config.backends(self.mock.as_ref())?;
                backends.for_step(PipelineStep::Embed)
            }
        };

        let mut dramas = Vec::new();
        for (i, (crs_path, gt_path)) in crs_paths.iter().zip(gt_paths).enumerate() {
            let crs: Crs = read_json(crs_path)?;
            let gt: GroundTruth = read_json(gt_path)?;
            let report = evaluate::<f64>(&crs, &gt, embedder).map_err(|e| match e {
                EvalError::EmptyGroundTruth => CliError::invalid(format!("{}: {e}", gt_path.display())),
                other => CliError::backend(PipelineStep::Embed, other),
            })?;
            let name = names.get(i).cloned().unwrap_or_else(|| default_name(crs_path, i));
            let report = if na_as_zero {
                report.coerce_not_applicable()
            } else {
                report
            };
            dramas.push(NamedReport { drama: name, report });
        }
        let reports: Vec<_> = dramas.iter().map(|d| d.report.clone()).collect();
        let summary = aggregate(&reports, na_as_zero);
        let rows: Vec<(&str, &crs_core::EvalReport)> = dramas.iter().map(|d| (d.drama.as_str(), &d.report)).collect();
        let text = format!(
            "{}\n{}",
            format_report_table(&rows),
            format_summary_table(&[("mean ± std", &summary)])
        );

        let out = self.out_dir(out_dir);
        write_json(
            &out.join("report.json"),
            &ReportDocument::new(dramas, summary, na_as_zero),
        )?;
        write_text(&out.join("report.txt"), &text)?;
        Ok(text)
    }
}

fn render(crs_path: &Path, out: Option<&Path>) -> Result<String, CliError> {
    let crs: Crs = read_json(crs_path)?;
    let dot = to_dot(&crs).map_err(|e| CliError::invalid(format!("{}: {e}", crs_path.display())))?;
    let path = out.map_or_else(|| crs_path.with_extension("dot"), Path::to_path_buf);
    write_text(&path, &dot)?;
    Ok(format!("-> {}\n", path.display()))
}
