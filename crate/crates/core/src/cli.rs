//! The `distrag` command line.
//!
//! Settings come from an optional `key = value` config file and are
//! overridden by flags. Exit codes: 0 success, 1 usage or configuration
//! error, 2 runtime failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::embed::{Embedder, RemoteEmbedder, RetrievalConfig};
use crate::eval::{
    ask, emit_report, format_mse, run_ablation, run_pipeline, Answer, Pipeline, PipelineConfig,
    DEFAULT_LEVELS,
};
use crate::gateway::{HttpClient, HttpConfig, ModelClient, QueryTemplateHint, Replay};
use crate::geo::{fetch_places_remote, load_gazetteer, Gazetteer, PlaceService};
use crate::graph::{build_graph, parse_turtle, serialize_turtle, EdgePolicy, SpatialGraph};
use crate::questions::{generate_questions, read_questions, write_questions, Difficulty};
use crate::sparql::{evaluate_query, parse_query};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "distrag",
    version,
    about = "Distance questions over a city knowledge graph, answered with retrieval-augmented prompts"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key = value` settings file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the distance graph from a gazetteer and write it as Turtle.
    BuildGraph {
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        /// Fetch the gazetteer for this region from the place service instead.
        #[arg(long)]
        region: Option<String>,
        /// complete | knearest:K | radius:KM
        #[arg(long)]
        policy: Option<String>,
    },
    /// Generate benchmark questions as JSON Lines.
    GenQuestions {
        #[arg(long)]
        graph: Option<PathBuf>,
        /// easy | medium | difficult | all
        #[arg(long)]
        difficulty: Option<String>,
        /// Questions per difficulty.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Answer one question through a pipeline and print the answer.
    Ask {
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        question: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate pipelines over a question file and write reports.
    Eval {
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        questions: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Sweep graph sparsity and record response rates.
    Ablate {
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        questions: Option<PathBuf>,
        /// Comma-separated sparsity fractions.
        #[arg(long)]
        levels: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a SPARQL query file against a Turtle graph and print TSV.
    Sparql {
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Query file, or `-` for standard input.
        #[arg(long)]
        query: PathBuf,
    },
}

#[derive(Debug, Args, Default)]
struct RunArgs {
    /// baseline | vector | sparql, comma-separated, or `all`.
    #[arg(long)]
    pipeline: Option<String>,
    /// scripted | reader | replay:PATH | replay-lenient:PATH | http
    #[arg(long)]
    client: Option<String>,
    /// Chat model name for the http client.
    #[arg(long)]
    model: Option<String>,
    /// Append query skeletons to the SPARQL prompt.
    #[arg(long)]
    hint: bool,
    /// Triples retrieved for the vector pipeline.
    #[arg(long)]
    k: Option<usize>,
    /// Gazetteer for geocoding city answers.
    #[arg(long)]
    gazetteer: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

const CONFIG_KEYS: &[&str] = &[
    "seed", "out", "gazetteer", "region", "policy", "graph", "questions", "difficulty", "n",
    "pipeline", "client", "model", "hint", "k", "levels", "embedder", "workers", "timeout_s",
    "max_retries", "max_in_flight", "cache_dir",
];

/// Parse a `key = value` settings file. Blank lines and `#` comments are
/// ignored; unknown keys are an error.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", i + 1))?;
        let k = k.trim().to_ascii_lowercase();
        if !CONFIG_KEYS.contains(&k.as_str()) {
            return Err(format!("config line {}: unknown key `{k}`", i + 1));
        }
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(format!("config line {}: duplicate key `{k}`", i + 1));
        }
    }
    Ok(out)
}

/// Flag values layered over the config file.
struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn get(&self, key: &str, flag: Option<String>) -> Option<String> {
        flag.or_else(|| self.file.get(key).cloned())
    }

    fn path(&self, key: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| self.file.get(key).map(PathBuf::from))
    }

    fn require_path(&self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        self.path(key, flag)
            .ok_or_else(|| CliError::Usage(format!("missing --{key} (or `{key}` in the config file)")))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config `{key}`: {e}"))),
        }
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            eprintln!("{}", Cli::command().render_help());
            EXIT_USAGE
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let file = match &cli.common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            parse_config(&text).map_err(CliError::Usage)?
        }
        None => BTreeMap::new(),
    };
    let s = Settings { file };
    let seed = s.parsed("seed", cli.common.seed)?.unwrap_or(0);
    let out_path = s.path("out", cli.common.out);

    match cli.command {
        Command::BuildGraph {
            gazetteer,
            region,
            policy,
        } => {
            let policy: EdgePolicy = s
                .get("policy", policy)
                .unwrap_or_else(|| "complete".into())
                .parse()
                .map_err(|e: crate::graph::GraphError| CliError::Usage(e.to_string()))?;
            let out_path = out_path.ok_or_else(|| CliError::Usage("missing --out for the Turtle file".into()))?;
            let g = match (s.path("gazetteer", gazetteer), s.get("region", region)) {
                (Some(p), _) => load_gazetteer(&p).map_err(runtime)?,
                (None, Some(region)) => {
                    let cache = s
                        .path("cache_dir", None)
                        .unwrap_or_else(|| out_path.parent().map(Path::to_path_buf).unwrap_or_default());
                    let svc = PlaceService::from_env(cache);
                    fetch_places_remote(&region, &svc).map_err(runtime)?
                }
                (None, None) => {
                    return Err(CliError::Usage("build-graph needs --gazetteer or --region".into()))
                }
            };
            let gr = build_graph(&g, policy).map_err(runtime)?;
            std::fs::write(&out_path, serialize_turtle(&gr)).map_err(runtime)?;
            writeln!(
                out,
                "{} cities, {} edges -> {}",
                gr.node_count(),
                gr.edge_count(),
                out_path.display()
            )
            .map_err(runtime)?;
        }
        Command::GenQuestions {
            graph,
            difficulty,
            n,
        } => {
            let gr = load_graph(&s.require_path("graph", graph)?)?;
            let levels = difficulties(&s.get("difficulty", difficulty).unwrap_or_else(|| "all".into()))?;
            let n = s.parsed("n", n)?.unwrap_or(20);
            if n == 0 {
                return Err(CliError::Usage("--n must be at least 1".into()));
            }
            let mut qs = Vec::new();
            for d in levels {
                qs.extend(generate_questions(&gr, d, n, seed).map_err(runtime)?);
            }
            let mut buf = Vec::new();
            write_questions(&qs, &mut buf).map_err(runtime)?;
            match out_path {
                Some(p) => std::fs::write(&p, buf).map_err(runtime)?,
                None => out.write_all(&buf).map_err(runtime)?,
            }
        }
        Command::Ask {
            graph,
            question,
            run,
        } => {
            let gr = load_graph(&s.require_path("graph", graph)?)?;
            let pipeline = pipelines(&s, &run)?;
            let [pipeline] = pipeline[..] else {
                return Err(CliError::Usage("ask takes exactly one pipeline".into()));
            };
            let client = client(&s, &run)?;
            let cfg = pipeline_config(&s, &run)?;
            let entry = ask(&question, pipeline, &gr, &client, &cfg).map_err(runtime)?;
            let text = match entry.answer {
                Answer::DistanceKm(v) => format!("{v}"),
                Answer::CityName(c) => c,
                Answer::Abstain(reason) => format!("(abstain: {reason})"),
            };
            writeln!(out, "{text}").map_err(runtime)?;
        }
        Command::Eval {
            graph,
            questions,
            run,
        } => {
            let graph = s.require_path("graph", graph)?;
            let questions = s.require_path("questions", questions)?;
            let dir = out_path.ok_or_else(|| CliError::Usage("missing --out directory".into()))?;
            let pipelines = pipelines(&s, &run)?;
            let client = client(&s, &run)?;
            let cfg = pipeline_config(&s, &run)?;
            let gr = load_graph(&graph)?;
            let gaz = load_optional_gazetteer(&s, run.gazetteer.clone())?;
            let qs = load_questions(&questions)?;
            let mut reports = Vec::new();
            for p in pipelines {
                reports.push(run_pipeline(&qs, p, &gr, gaz.as_ref(), &client, &cfg).map_err(runtime)?);
            }
            emit_report(&reports, None, &dir).map_err(runtime)?;
            writeln!(out, "pipeline\tdifficulty\tmse\tabstains").map_err(runtime)?;
            for r in &reports {
                for d in Difficulty::ALL {
                    if r.residuals_for(d).is_empty() {
                        continue;
                    }
                    writeln!(
                        out,
                        "{}\t{}\t{}\t{}/{}",
                        r.pipeline,
                        d,
                        format_mse(r.mse_for(d)),
                        r.abstains_for(d),
                        r.residuals_for(d).len()
                    )
                    .map_err(runtime)?;
                }
            }
        }
        Command::Ablate {
            graph,
            questions,
            levels,
            run,
        } => {
            let graph = s.require_path("graph", graph)?;
            let questions = s.require_path("questions", questions)?;
            let dir = out_path.ok_or_else(|| CliError::Usage("missing --out directory".into()))?;
            let levels = match s.get("levels", levels) {
                None => DEFAULT_LEVELS.to_vec(),
                Some(text) => parse_levels(&text)?,
            };
            let pipelines = pipelines(&s, &run)?;
            let [pipeline] = pipelines[..] else {
                return Err(CliError::Usage("ablate takes exactly one pipeline".into()));
            };
            let client = client(&s, &run)?;
            let cfg = pipeline_config(&s, &run)?;
            let gr = load_graph(&graph)?;
            let gaz = load_optional_gazetteer(&s, run.gazetteer.clone())?;
            let qs = load_questions(&questions)?;
            let report = run_ablation(&gr, gaz.as_ref(), &levels, &qs, pipeline, &client, &cfg, seed)
                .map_err(runtime)?;
            emit_report(&[], Some(&report), &dir).map_err(runtime)?;
            writeln!(out, "level\tdifficulty\tresponse_rate").map_err(runtime)?;
            for r in &report.rows {
                writeln!(out, "{}\t{}\t{}", r.level, r.difficulty, r.response_rate).map_err(runtime)?;
            }
        }
        Command::Sparql { graph, query } => {
            let gr = load_graph(&s.require_path("graph", graph)?)?;
            let text = if query.as_os_str() == "-" {
                let mut t = String::new();
                std::io::stdin().read_to_string(&mut t).map_err(runtime)?;
                t
            } else {
                std::fs::read_to_string(&query)
                    .map_err(|e| runtime(format!("cannot read {}: {e}", query.display())))?
            };
            let q = parse_query(&text).map_err(runtime)?;
            let table = evaluate_query(&q, &gr).map_err(runtime)?;
            out.write_all(table.to_tsv().as_bytes()).map_err(runtime)?;
        }
    }
    Ok(())
}

fn load_graph(path: &Path) -> Result<SpatialGraph, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?;
    parse_turtle(&text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_questions(path: &Path) -> Result<Vec<crate::questions::Question>, CliError> {
    let f = std::fs::File::open(path)
        .map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?;
    let qs = read_questions(BufReader::new(f)).map_err(runtime)?;
    if qs.is_empty() {
        return Err(runtime(format!("{} has no questions", path.display())));
    }
    Ok(qs)
}

fn load_optional_gazetteer(s: &Settings, flag: Option<PathBuf>) -> Result<Option<Gazetteer>, CliError> {
    s.path("gazetteer", flag)
        .map(|p| load_gazetteer(&p).map_err(runtime))
        .transpose()
}

fn difficulties(text: &str) -> Result<Vec<Difficulty>, CliError> {
    if text.eq_ignore_ascii_case("all") {
        return Ok(Difficulty::ALL.to_vec());
    }
    text.split(',')
        .map(|d| d.parse().map_err(CliError::Usage))
        .collect()
}

fn parse_levels(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: f64 = l
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad sparsity level `{l}`")))?;
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(CliError::Usage(format!("sparsity level {v} outside [0, 1]")))
            }
        })
        .collect()
}

fn pipelines(s: &Settings, run: &RunArgs) -> Result<Vec<Pipeline>, CliError> {
    let text = s
        .get("pipeline", run.pipeline.clone())
        .ok_or_else(|| CliError::Usage("missing --pipeline".into()))?;
    if text.eq_ignore_ascii_case("all") {
        return Ok(vec![Pipeline::Baseline, Pipeline::Vector, Pipeline::Sparql]);
    }
    text.split(',')
        .map(|p| p.parse().map_err(CliError::Usage))
        .collect()
}

fn client(s: &Settings, run: &RunArgs) -> Result<ModelClient, CliError> {
    let spec = s
        .get("client", run.client.clone())
        .ok_or_else(|| CliError::Usage("missing --client".into()))?;
    let (kind, arg) = spec.split_once(':').unwrap_or((spec.as_str(), ""));
    match kind {
        "scripted" => Ok(ModelClient::scripted_author(None)),
        "reader" => Ok(ModelClient::ScriptedReader),
        "replay" | "replay-lenient" => {
            if arg.is_empty() {
                return Err(CliError::Usage("replay client needs a transcript path".into()));
            }
            Replay::load(arg, kind == "replay")
                .map(ModelClient::Replay)
                .map_err(|e| CliError::Usage(e.to_string()))
        }
        "http" => {
            let model = s
                .get("model", run.model.clone())
                .ok_or_else(|| CliError::Usage("http client needs --model".into()))?;
            let mut cfg = HttpConfig::from_env(model).map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(t) = s.parsed::<u64>("timeout_s", None)? {
                cfg.timeout = Duration::from_secs(t);
            }
            if let Some(r) = s.parsed("max_retries", None)? {
                cfg.max_retries = r;
            }
            if let Some(n) = s.parsed("max_in_flight", None)? {
                cfg.max_in_flight = n;
            }
            HttpClient::new(cfg)
                .map(ModelClient::Http)
                .map_err(|e| CliError::Usage(e.to_string()))
        }
        other => Err(CliError::Usage(format!("unknown client `{other}`"))),
    }
}

fn pipeline_config(s: &Settings, run: &RunArgs) -> Result<PipelineConfig, CliError> {
    let k = s.parsed("k", run.k)?.unwrap_or(10);
    let retrieval = RetrievalConfig::new(k).map_err(|e| CliError::Usage(e.to_string()))?;
    let hint = run.hint || s.parsed::<bool>("hint", None)?.unwrap_or(false);
    let embedder = match s.get("embedder", None) {
        None => Embedder::default(),
        Some(spec) => parse_embedder(&spec)?,
    };
    Ok(PipelineConfig {
        retrieval,
        embedder,
        hint: hint.then(QueryTemplateHint::default),
        workers: s.parsed("workers", None)?,
    })
}

/// `lexical:DIM:NGRAM` or `remote` (endpoint from the environment).
fn parse_embedder(spec: &str) -> Result<Embedder, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts[..] {
        ["lexical"] => Ok(Embedder::default()),
        ["lexical", dim, ngram] => {
            let dim = dim.parse().map_err(|_| CliError::Usage(format!("bad embedder `{spec}`")))?;
            let ngram = ngram.parse().map_err(|_| CliError::Usage(format!("bad embedder `{spec}`")))?;
            Embedder::lexical(dim, ngram).map_err(|e| CliError::Usage(e.to_string()))
        }
        ["remote"] => RemoteEmbedder::from_env()
            .map(Embedder::Remote)
            .ok_or_else(|| CliError::Usage("remote embedder needs DISTRAG_EMBED_URL".into())),
        _ => Err(CliError::Usage(format!("bad embedder `{spec}`"))),
    }
}
