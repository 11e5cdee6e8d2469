//! Pipelines, scoring and report files.
//!
//! A run sends every question through one pipeline, parses the reply into an
//! [`Answer`], scores it against the gold value as a signed residual
//! `y - y_hat`, and aggregates MSE over answered questions, abstentions,
//! latency and a 100 km error histogram.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::embed::{build_index, query_top_k, render_context, EmbedError, Embedder, RetrievalConfig, VectorIndex};
use crate::gateway::{
    append_hint, render_prompt, render_question, GatewayError, ModelClient, PromptTemplate,
    QueryTemplateHint, ReplayRecord,
};
use crate::geo::{geocode, geodesic_km, CityKey, Gazetteer};
use crate::graph::SpatialGraph;
use crate::questions::{Difficulty, GoldAnswer, Question};
use crate::rdf::display_from_iri;
use crate::sparql::{evaluate_on_view, extract_query_block, parse_query, RdfView, Value};
use crate::util::round_km;

/// Width of each histogram bin in km; the last bin collects `|error| >= 700`
/// and abstentions.
pub const BIN_WIDTH_KM: f64 = 100.0;
pub const BIN_COUNT: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no questions to evaluate")]
    NoQuestions,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("sparsity level {0} outside [0, 1]")]
    InvalidLevel(f64),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Baseline,
    Vector,
    Sparql,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Baseline => "baseline",
            Pipeline::Vector => "vector",
            Pipeline::Sparql => "sparql",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Pipeline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Pipeline::Baseline),
            "vector" => Ok(Pipeline::Vector),
            "sparql" => Ok(Pipeline::Sparql),
            other => Err(format!("unknown pipeline `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Answer {
    DistanceKm(f64),
    CityName(String),
    Abstain(String),
}

/// Classify a raw model reply.
pub fn parse_answer(raw: &str) -> Answer {
    static NUMBER: OnceLock<Regex> = OnceLock::new();
    let number = NUMBER.get_or_init(|| {
        Regex::new(r"(?i)^([+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?)\s*(?:km|kms|kilometers|kilometres)?$")
            .unwrap()
    });
    let text = raw.trim();
    let text = text.strip_suffix('.').unwrap_or(text).trim();
    if let Some(c) = number.captures(text) {
        if let Ok(v) = c[1].replace(',', "").parse::<f64>() {
            if v.is_finite() {
                return Answer::DistanceKm(v.abs());
            }
        }
    }
    let lower = text.to_lowercase();
    const REFUSALS: [&str; 5] = ["cannot", "unable", "don't know", "no answer", "not possible"];
    if text.is_empty() || REFUSALS.iter().any(|r| lower.contains(r)) {
        let reason = if text.is_empty() { "empty reply" } else { "refusal" };
        return Answer::Abstain(reason.to_string());
    }
    Answer::CityName(text.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub question_id: String,
    pub difficulty: Difficulty,
    /// True value in km.
    pub y: f64,
    pub y_hat: Option<f64>,
    /// `y - y_hat`, present iff `y_hat` is.
    pub error: Option<f64>,
    pub abstain_reason: Option<String>,
}

impl Residual {
    fn answered(q: &Question, y: f64, y_hat: f64) -> Self {
        Residual {
            question_id: q.id.clone(),
            difficulty: q.difficulty,
            y,
            y_hat: Some(y_hat),
            error: Some(y - y_hat),
            abstain_reason: None,
        }
    }

    fn abstained(q: &Question, y: f64, reason: impl Into<String>) -> Self {
        Residual {
            question_id: q.id.clone(),
            difficulty: q.difficulty,
            y,
            y_hat: None,
            error: None,
            abstain_reason: Some(reason.into()),
        }
    }

    /// Histogram bin index; abstentions go to the last bin.
    pub fn bin(&self) -> usize {
        match self.error {
            Some(e) => ((e.abs() / BIN_WIDTH_KM).floor() as usize).min(BIN_COUNT - 1),
            None => BIN_COUNT - 1,
        }
    }
}

/// Label of histogram bin `i`.
pub fn bin_label(i: usize) -> String {
    if i + 1 >= BIN_COUNT {
        format!(">{} km incl. abstain", (BIN_COUNT - 1) * 100)
    } else {
        format!("[{},{})", i * 100, (i + 1) * 100)
    }
}

/// Resolve an answered city name to a graph key, by exact key, then unique
/// place name among graph nodes, then the gazetteer.
fn resolve_city(name: &str, gr: &SpatialGraph, g: Option<&Gazetteer>) -> Option<CityKey> {
    let key = CityKey::from_name(name);
    if key.is_empty() {
        return None;
    }
    if gr.contains(&key) {
        return Some(key);
    }
    if !key.has_region() {
        let mut hits = gr.nodes().filter(|k| k.place_part() == key.as_str());
        if let (Some(k), None) = (hits.next(), hits.next()) {
            return Some(k.clone());
        }
    }
    g.and_then(|g| geocode(name, g)).map(|c| c.key.clone())
}

/// Edge value when the graph has one, otherwise rounded great-circle distance
/// from gazetteer coordinates.
fn city_distance(
    a: &CityKey,
    b: &CityKey,
    gr: &SpatialGraph,
    g: Option<&Gazetteer>,
) -> Option<u32> {
    if let Ok(Some(d)) = gr.edge_distance(a, b) {
        return Some(d);
    }
    if a == b {
        return Some(0);
    }
    let g = g?;
    let (ca, cb) = (g.get(a)?, g.get(b)?);
    Some(round_km(geodesic_km(ca.point, cb.point)))
}

/// Score one answer. Every failure path becomes an abstention.
pub fn score_answer(
    q: &Question,
    a: &Answer,
    gr: &SpatialGraph,
    g: Option<&Gazetteer>,
) -> Residual {
    let y = match &q.gold {
        GoldAnswer::DistanceKm { km } | GoldAnswer::ClosestCity { km, .. } => f64::from(*km),
        GoldAnswer::SimilarCity { target_km, .. } => f64::from(*target_km),
    };
    let anchor = match q.difficulty {
        Difficulty::Easy => None,
        Difficulty::Medium => q.cities.first(),
        Difficulty::Difficult => q.cities.get(2),
    };
    match (q.difficulty, a) {
        (_, Answer::Abstain(reason)) => Residual::abstained(q, y, reason.clone()),
        (Difficulty::Easy | Difficulty::Medium, Answer::DistanceKm(v)) => Residual::answered(q, y, *v),
        (Difficulty::Medium | Difficulty::Difficult, Answer::CityName(name)) => {
            let Some(anchor) = anchor else {
                return Residual::abstained(q, y, "question has no anchor city");
            };
            match resolve_city(name, gr, g) {
                None => Residual::abstained(q, y, format!("cannot geocode `{name}`")),
                Some(key) => match city_distance(anchor, &key, gr, g) {
                    Some(d) => Residual::answered(q, y, f64::from(d)),
                    None => Residual::abstained(q, y, format!("no distance to `{name}`")),
                },
            }
        }
        (_, other) => Residual::abstained(q, y, format!("wrong answer kind: {other:?}")),
    }
}

/// Mean squared error over answered residuals; `None` when nothing was answered.
pub fn compute_mse(residuals: &[Residual]) -> Option<f64> {
    let errors: Vec<f64> = residuals.iter().filter_map(|r| r.error).collect();
    if errors.is_empty() {
        return None;
    }
    Some(errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64)
}

pub fn histogram(residuals: &[Residual]) -> [u64; BIN_COUNT] {
    let mut bins = [0u64; BIN_COUNT];
    for r in residuals {
        bins[r.bin()] += 1;
    }
    bins
}

/// Table style MSE: three significant digits, or `-` when absent.
pub fn format_mse(mse: Option<f64>) -> String {
    match mse {
        Some(v) => format!("{v:.2e}"),
        None => "-".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub question_id: String,
    pub prompt: String,
    pub response: String,
    pub query: Option<String>,
    pub answer: Answer,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub pipeline: Pipeline,
    pub residuals: Vec<Residual>,
    pub mse: Option<f64>,
    pub abstain_count: usize,
    pub total_latency_ms: f64,
    pub histogram: [u64; BIN_COUNT],
    pub transcript: Vec<TranscriptEntry>,
}

impl RunReport {
    fn from_parts(pipeline: Pipeline, residuals: Vec<Residual>, transcript: Vec<TranscriptEntry>) -> Self {
        let total_latency_ms = transcript.iter().map(|t| t.latency_ms).sum();
        RunReport {
            pipeline,
            mse: compute_mse(&residuals),
            abstain_count: residuals.iter().filter(|r| r.error.is_none()).count(),
            histogram: histogram(&residuals),
            total_latency_ms,
            residuals,
            transcript,
        }
    }

    pub fn residuals_for(&self, d: Difficulty) -> Vec<Residual> {
        self.residuals.iter().filter(|r| r.difficulty == d).cloned().collect()
    }

    pub fn mse_for(&self, d: Difficulty) -> Option<f64> {
        compute_mse(&self.residuals_for(d))
    }

    pub fn abstains_for(&self, d: Difficulty) -> usize {
        self.residuals_for(d).iter().filter(|r| r.error.is_none()).count()
    }

    /// Answered fraction for one family, `None` if the run had none of it.
    pub fn response_rate(&self, d: Difficulty) -> Option<f64> {
        let rs = self.residuals_for(d);
        if rs.is_empty() {
            return None;
        }
        Some(rs.iter().filter(|r| r.error.is_some()).count() as f64 / rs.len() as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineConfig {
    pub retrieval: RetrievalConfig,
    pub embedder: Embedder,
    /// Appended to the SPARQL prompt when set.
    pub hint: Option<QueryTemplateHint>,
    /// Worker threads; defaults to the client's in-flight limit.
    pub workers: Option<usize>,
}


/// Retrieval structures built once per run.
enum Store {
    None,
    Vector(Option<VectorIndex>),
    Sparql(RdfView),
}

fn prepare(pipeline: Pipeline, gr: &SpatialGraph, cfg: &PipelineConfig) -> Result<Store, EvalError> {
    Ok(match pipeline {
        Pipeline::Baseline => Store::None,
        Pipeline::Vector => {
            let triples = gr.to_triple_texts();
            if triples.is_empty() {
                Store::Vector(None)
            } else {
                Store::Vector(Some(build_index(&triples, &cfg.embedder)?))
            }
        }
        Pipeline::Sparql => Store::Sparql(RdfView::from_graph(gr)),
    })
}

fn build_prompt(
    q: &Question,
    store: &Store,
    cfg: &PipelineConfig,
) -> Result<String, EvalError> {
    Ok(match store {
        Store::None => render_question(PromptTemplate::Baseline, &q.text)?,
        Store::Vector(idx) => {
            let context = match idx {
                Some(idx) => render_context(&query_top_k(idx, &q.text, &cfg.retrieval)?),
                None => String::new(),
            };
            let bindings = BTreeMap::from([
                ("question".to_string(), q.text.clone()),
                ("graph_context".to_string(), context),
            ]);
            render_prompt(PromptTemplate::Vector, &bindings)?
        }
        Store::Sparql(_) => {
            let base = render_question(PromptTemplate::Sparql, &q.text)?;
            match &cfg.hint {
                Some(h) => append_hint(&base, h.skeleton(q.difficulty)),
                None => base,
            }
        }
    })
}

/// Run the extracted query and turn its first cell into an answer.
fn answer_from_query(text: &str, view: &RdfView) -> (Option<String>, Answer) {
    let block = extract_query_block(text);
    if block.is_empty() {
        return (None, Answer::Abstain("no query in reply".into()));
    }
    let answer = match parse_query(&block).and_then(|q| evaluate_on_view(&q, view)) {
        Err(e) => Answer::Abstain(format!("query failed: {e}")),
        Ok(table) => match table.rows.first().and_then(|r| r.first()) {
            None => Answer::Abstain("empty result".into()),
            Some(Value::Integer(n)) => parse_answer(&n.to_string()),
            Some(Value::Iri(iri)) => match display_from_iri(iri) {
                Some(name) => Answer::CityName(name),
                None => Answer::Abstain(format!("result <{iri}> is not a city")),
            },
            Some(Value::Blank(_)) => Answer::Abstain("result is a blank node".into()),
        },
    };
    (Some(block), answer)
}

fn ask_one(
    q: &Question,
    store: &Store,
    client: &ModelClient,
    cfg: &PipelineConfig,
) -> Result<TranscriptEntry, EvalError> {
    let prompt = build_prompt(q, store, cfg)?;
    let (response, latency, failure) = match client.complete(&prompt) {
        Ok(c) => (c.text, c.latency, None),
        Err(e @ (GatewayError::ReplayMiss(_) | GatewayError::AuthError(_) | GatewayError::InvalidConfig(_))) => {
            return Err(e.into())
        }
        Err(e) => (String::new(), Duration::ZERO, Some(e.to_string())),
    };
    let (query, answer) = match (failure, store) {
        (Some(err), _) => (None, Answer::Abstain(format!("model error: {err}"))),
        (None, Store::Sparql(view)) => answer_from_query(&response, view),
        (None, _) => (None, parse_answer(&response)),
    };
    Ok(TranscriptEntry {
        question_id: q.id.clone(),
        prompt,
        response,
        query,
        answer,
        latency_ms: latency.as_secs_f64() * 1000.0,
    })
}

/// Answer and score every question. Results come back in question order
/// whatever order the workers finish in.
pub fn run_pipeline(
    questions: &[Question],
    pipeline: Pipeline,
    gr: &SpatialGraph,
    g: Option<&Gazetteer>,
    client: &ModelClient,
    cfg: &PipelineConfig,
) -> Result<RunReport, EvalError> {
    if questions.is_empty() {
        return Err(EvalError::NoQuestions);
    }
    let store = prepare(pipeline, gr, cfg)?;
    let workers = cfg
        .workers
        .unwrap_or_else(|| client.max_in_flight())
        .clamp(1, questions.len());
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<TranscriptEntry, EvalError>>> =
        (0..questions.len()).map(|_| None).collect();

    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= questions.len() {
                            break;
                        }
                        let r = ask_one(&questions[i], &store, client, cfg);
                        let failed = r.is_err();
                        done.push((i, r));
                        if failed {
                            // stop handing out work
                            next.store(questions.len(), Ordering::Relaxed);
                            break;
                        }
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("pipeline worker panicked") {
                slots[i] = Some(r);
            }
        }
    });

    let mut transcript = Vec::with_capacity(questions.len());
    let mut residuals = Vec::with_capacity(questions.len());
    for (q, slot) in questions.iter().zip(slots) {
        match slot {
            Some(Ok(entry)) => {
                residuals.push(score_answer(q, &entry.answer, gr, g));
                transcript.push(entry);
            }
            Some(Err(e)) => return Err(e),
            // indices are handed out in order, so every gap follows a failure
            None => unreachable!("question skipped without an earlier failure"),
        }
    }
    Ok(RunReport::from_parts(pipeline, residuals, transcript))
}

/// Send a single free-form question through a pipeline without scoring it.
pub fn ask(
    question: &str,
    pipeline: Pipeline,
    gr: &SpatialGraph,
    client: &ModelClient,
    cfg: &PipelineConfig,
) -> Result<TranscriptEntry, EvalError> {
    let difficulty = crate::questions::parse_question_text(question)
        .map(|(d, _)| d)
        .unwrap_or(Difficulty::Easy);
    let q = Question {
        id: "ask".into(),
        difficulty,
        text: question.to_string(),
        cities: Vec::new(),
        gold: GoldAnswer::DistanceKm { km: 0 },
    };
    let store = prepare(pipeline, gr, cfg)?;
    ask_one(&q, &store, client, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub level: f64,
    pub difficulty: Difficulty,
    pub response_rate: f64,
    pub answered: usize,
    pub total: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub pipeline: Option<Pipeline>,
    pub rows: Vec<AblationRow>,
}

pub const DEFAULT_LEVELS: [f64; 4] = [0.0, 0.25, 0.5, 0.75];

/// Re-run the same questions on sparsified copies of the graph.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    gr: &SpatialGraph,
    g: Option<&Gazetteer>,
    levels: &[f64],
    questions: &[Question],
    pipeline: Pipeline,
    client: &ModelClient,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<AblationReport, EvalError> {
    if let Some(bad) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(EvalError::InvalidLevel(*bad));
    }
    let mut rows = Vec::new();
    for &level in levels {
        let sparse = gr.sparsify(level, seed);
        let report = run_pipeline(questions, pipeline, &sparse, g, client, cfg)?;
        for d in Difficulty::ALL {
            let rs = report.residuals_for(d);
            if rs.is_empty() {
                continue;
            }
            let answered = rs.iter().filter(|r| r.error.is_some()).count();
            rows.push(AblationRow {
                level,
                difficulty: d,
                response_rate: answered as f64 / rs.len() as f64,
                answered,
                total: rs.len(),
                edges: sparse.edge_count(),
            });
        }
    }
    Ok(AblationReport {
        pipeline: (!levels.is_empty()).then_some(pipeline),
        rows,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> EvalError + '_ {
    move |e| EvalError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(&r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct ReportJson<'a> {
    runs: &'a [RunReport],
    ablation: Option<&'a AblationReport>,
    bins: Vec<String>,
}

/// Write `results.csv`, `residuals.csv`, `histogram.csv`, `ablation.csv`,
/// `report.json`, `transcript.jsonl` and `replay.jsonl` into `out_dir`.
pub fn emit_report(
    runs: &[RunReport],
    ablation: Option<&AblationReport>,
    out_dir: &Path,
) -> Result<(), EvalError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut results = Vec::new();
    let mut residuals = Vec::new();
    let mut hist = Vec::new();
    for run in runs {
        for d in Difficulty::ALL {
            let rs = run.residuals_for(d);
            if rs.is_empty() {
                continue;
            }
            let ids: Vec<&str> = rs.iter().map(|r| r.question_id.as_str()).collect();
            let latency: f64 = run
                .transcript
                .iter()
                .filter(|t| ids.contains(&t.question_id.as_str()))
                .map(|t| t.latency_ms)
                .sum();
            results.push(vec![
                run.pipeline.to_string(),
                d.to_string(),
                format_mse(compute_mse(&rs)),
                run.abstains_for(d).to_string(),
                format!("{latency:.3}"),
            ]);
        }
        for r in &run.residuals {
            residuals.push(vec![
                run.pipeline.to_string(),
                r.question_id.clone(),
                r.difficulty.to_string(),
                r.y.to_string(),
                opt(r.y_hat),
                opt(r.error),
                bin_label(r.bin()),
            ]);
        }
        for (i, n) in run.histogram.iter().enumerate() {
            let (lo, hi) = if i + 1 == BIN_COUNT {
                (format!("{}", i * 100), String::new())
            } else {
                (format!("{}", i * 100), format!("{}", (i + 1) * 100))
            };
            hist.push(vec![run.pipeline.to_string(), bin_label(i), lo, hi, n.to_string()]);
        }
    }
    write_csv(
        &out_dir.join("results.csv"),
        &["pipeline", "difficulty", "mse", "abstains", "total_latency_ms"],
        results,
    )?;
    write_csv(
        &out_dir.join("residuals.csv"),
        &["pipeline", "question_id", "difficulty", "y", "y_hat", "error", "bin"],
        residuals,
    )?;
    write_csv(
        &out_dir.join("histogram.csv"),
        &["pipeline", "bin", "lower_km", "upper_km", "count"],
        hist,
    )?;
    let ablation_rows = ablation
        .map(|a| {
            a.rows
                .iter()
                .map(|r| vec![r.level.to_string(), r.difficulty.to_string(), r.response_rate.to_string()])
                .collect()
        })
        .unwrap_or_default();
    write_csv(
        &out_dir.join("ablation.csv"),
        &["level", "difficulty", "response_rate"],
        ablation_rows,
    )?;

    let json = ReportJson {
        runs,
        ablation,
        bins: (0..BIN_COUNT).map(bin_label).collect(),
    };
    let path = out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&json).expect("report is serializable");
    std::fs::write(&path, text + "\n").map_err(io_err(&path))?;

    let mut transcript = String::new();
    let mut replay = String::new();
    for run in runs {
        for t in &run.transcript {
            let mut v = serde_json::to_value(t).expect("transcript is serializable");
            v["pipeline"] = serde_json::Value::String(run.pipeline.to_string());
            transcript.push_str(&v.to_string());
            transcript.push('\n');
            let rec = ReplayRecord::new(&t.prompt, &t.response, Duration::from_secs_f64(t.latency_ms / 1000.0));
            replay.push_str(&serde_json::to_string(&rec).expect("record is serializable"));
            replay.push('\n');
        }
    }
    for (name, body) in [("transcript.jsonl", transcript), ("replay.jsonl", replay)] {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(io_err(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(d: Difficulty, cities: &[&str], gold: GoldAnswer) -> Question {
        Question {
            id: "q".into(),
            difficulty: d,
            text: String::new(),
            cities: cities.iter().map(|c| CityKey::from_name(c)).collect(),
            gold,
        }
    }

    fn residual(error: Option<f64>) -> Residual {
        Residual {
            question_id: "x".into(),
            difficulty: Difficulty::Easy,
            y: 0.0,
            y_hat: error.map(|e| -e),
            error,
            abstain_reason: None,
        }
    }

    #[test]
    fn answer_parsing() {
        assert_eq!(parse_answer("2135"), Answer::DistanceKm(2135.0));
        assert_eq!(parse_answer(" 2,135 km. "), Answer::DistanceKm(2135.0));
        assert_eq!(parse_answer("-12.5 kilometers"), Answer::DistanceKm(12.5));
        assert!(matches!(parse_answer(""), Answer::Abstain(_)));
        assert!(matches!(parse_answer("I cannot answer that."), Answer::Abstain(_)));
        assert_eq!(parse_answer("Launceston, TAS"), Answer::CityName("Launceston, TAS".into()));
        assert_eq!(parse_answer("Perth."), Answer::CityName("Perth".into()));
    }

    #[test]
    fn mse_values() {
        assert_eq!(compute_mse(&[residual(Some(10.0)), residual(Some(-10.0))]), Some(100.0));
        assert_eq!(compute_mse(&vec![residual(Some(0.0)); 3]), Some(0.0));
        assert_eq!(compute_mse(&[residual(None), residual(None)]), None);
        assert_eq!(format_mse(None), "-");
        assert_eq!(format_mse(Some(0.0)), "0.00e0");
        assert_eq!(format_mse(Some(101_000.0)), "1.01e5");
    }

    #[test]
    fn histogram_bins() {
        let rs: Vec<Residual> = [Some(50.0), Some(-150.0), Some(720.0), None]
            .into_iter()
            .map(residual)
            .collect();
        let h = histogram(&rs);
        assert_eq!(h, [1, 1, 0, 0, 0, 0, 0, 2]);
        assert_eq!(bin_label(7), ">700 km incl. abstain");
        assert_eq!(bin_label(0), "[0,100)");
    }

    #[test]
    fn scoring_paths() {
        let mut gr = SpatialGraph::new();
        let a = gr.add_city("Adelaide").unwrap();
        let p = gr.add_city("Perth").unwrap();
        let l = gr.add_city("Launceston").unwrap();
        gr.insert_edge(&a, &p, 2135).unwrap();
        gr.insert_edge(&a, &l, 1039).unwrap();

        let easy = q(Difficulty::Easy, &["Adelaide", "Perth"], GoldAnswer::DistanceKm { km: 2135 });
        let r = score_answer(&easy, &Answer::DistanceKm(2135.0), &gr, None);
        assert_eq!(r.error, Some(0.0));
        let r = score_answer(&easy, &Answer::CityName("Perth".into()), &gr, None);
        assert!(r.error.is_none());

        let medium = q(
            Difficulty::Medium,
            &["Adelaide"],
            GoldAnswer::ClosestCity { city: l.clone(), km: 1039 },
        );
        let r = score_answer(&medium, &Answer::CityName("perth".into()), &gr, None);
        assert_eq!(r.error, Some(1039.0 - 2135.0));
        let r = score_answer(&medium, &Answer::CityName("Atlantis".into()), &gr, None);
        assert!(r.abstain_reason.unwrap().contains("geocode"));

        let hard = q(
            Difficulty::Difficult,
            &["Perth", "Launceston", "Adelaide"],
            GoldAnswer::SimilarCity { target_km: 1039, city: l, gap_km: 0 },
        );
        let r = score_answer(&hard, &Answer::CityName("Launceston".into()), &gr, None);
        assert_eq!(r.error, Some(0.0));
        let r = score_answer(&hard, &Answer::DistanceKm(5.0), &gr, None);
        assert!(r.error.is_none());
    }
}
