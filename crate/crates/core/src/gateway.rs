//! Prompt templates and chat model clients.
//!
//! Templates are kept as resource files and rendered by plain slot
//! substitution. Clients are either a live chat-completion endpoint, a
//! replay of a recorded transcript, or one of two scripted stand-ins that
//! make the pipelines runnable offline.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::http;
use crate::questions::{parse_question_text, Difficulty};
use crate::rdf::{city_iri, format_iri, CITIES_NS, NS_PREFIX};
use crate::util::sha256_hex;

pub const LLM_URL_ENV: &str = "DISTRAG_LLM_URL";
pub const LLM_KEY_ENV: &str = "DISTRAG_LLM_KEY";

/// Heading under which a query skeleton is appended to the SPARQL prompt.
pub const HINT_HEADING: &str = "### Query Template:";

/// Reply used by the scripted author when it has no skeleton to follow.
pub const REFUSAL: &str = "I cannot construct this query.";

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("template slot `{0}` has no binding")]
    MissingSlot(String),
    #[error("template has no slot named `{0}`")]
    UnknownSlot(String),
    #[error("model request failed: {0}")]
    NetworkError(String),
    #[error("no recorded response for prompt {0}")]
    ReplayMiss(String),
    #[error("model endpoint rejected credentials: {0}")]
    AuthError(String),
    #[error("invalid client configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptTemplate {
    Vector,
    Sparql,
    Baseline,
}

impl PromptTemplate {
    pub fn body(self) -> &'static str {
        match self {
            PromptTemplate::Vector => include_str!("../templates/vector.txt"),
            PromptTemplate::Sparql => include_str!("../templates/sparql.txt"),
            PromptTemplate::Baseline => include_str!("../templates/baseline.txt"),
        }
    }

    pub fn slots(self) -> &'static [&'static str] {
        match self {
            PromptTemplate::Vector => &["question", "graph_context"],
            PromptTemplate::Sparql | PromptTemplate::Baseline => &["question"],
        }
    }
}

/// Substitute every `{slot}` in the template body. Bound values are
/// inserted verbatim and never rescanned.
pub fn render_prompt(
    t: PromptTemplate,
    bindings: &BTreeMap<String, String>,
) -> Result<String, GatewayError> {
    let slots = t.slots();
    if let Some(extra) = bindings.keys().find(|k| !slots.contains(&k.as_str())) {
        return Err(GatewayError::UnknownSlot(extra.clone()));
    }
    if let Some(missing) = slots.iter().find(|s| !bindings.contains_key(**s)) {
        return Err(GatewayError::MissingSlot(missing.to_string()));
    }
    let mut out = String::with_capacity(t.body().len() + 256);
    let mut rest = t.body();
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let slot = slots.iter().find(|s| {
            tail.len() > s.len() + 1 && tail[1..].starts_with(**s) && tail[s.len() + 1..].starts_with('}')
        });
        match slot {
            Some(s) => {
                out.push_str(&bindings[*s]);
                rest = &tail[s.len() + 2..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Shorthand for templates whose only slot is the question.
pub fn render_question(t: PromptTemplate, question: &str) -> Result<String, GatewayError> {
    render_prompt(t, &BTreeMap::from([("question".to_string(), question.to_string())]))
}

/// Per-family SPARQL skeletons. `{A}`, `{B}` and `{C}` stand for whole city
/// terms such as `ns1:Adelaide`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTemplateHint {
    pub easy: String,
    pub medium: String,
    pub difficult: String,
}

impl Default for QueryTemplateHint {
    fn default() -> Self {
        let p = format!("PREFIX {NS_PREFIX}: <{CITIES_NS}>\n");
        Self {
            easy: format!(
                "{p}SELECT ?distance WHERE {{\n  {{A}} ns1:distanceTo [ ns1:destination {{B}} ; ns1:distance ?distance ] .\n}}"
            ),
            medium: format!(
                "{p}SELECT ?distance WHERE {{\n  {{A}} ns1:distanceTo [ ns1:destination ?city ; ns1:distance ?distance ] .\n}}\nORDER BY ASC(?distance)\nLIMIT 1"
            ),
            difficult: format!(
                "{p}SELECT ?city WHERE {{\n  {{A}} ns1:distanceTo [ ns1:destination {{B}} ; ns1:distance ?x ] .\n  {{C}} ns1:distanceTo [ ns1:destination ?city ; ns1:distance ?d ] .\n  FILTER(?city != {{A}} && ?city != {{B}} && ?city != {{C}})\n}}\nORDER BY ASC(ABS(?d - ?x))\nLIMIT 1"
            ),
        }
    }
}

impl QueryTemplateHint {
    pub fn skeleton(&self, d: Difficulty) -> &str {
        match d {
            Difficulty::Easy => &self.easy,
            Difficulty::Medium => &self.medium,
            Difficulty::Difficult => &self.difficult,
        }
    }

    /// Fill `{A}`, `{B}`, `{C}` with prefixed city terms for the display names.
    pub fn instantiate(&self, d: Difficulty, names: &[String]) -> String {
        instantiate(self.skeleton(d), names)
    }
}

fn instantiate(skeleton: &str, names: &[String]) -> String {
    let prefixes = BTreeMap::from([(NS_PREFIX.to_string(), CITIES_NS.to_string())]);
    let mut out = skeleton.to_string();
    for (slot, name) in ["{A}", "{B}", "{C}"].iter().zip(names) {
        out = out.replace(slot, &format_iri(&city_iri(name), &prefixes));
    }
    out
}

/// Append a skeleton to a rendered SPARQL prompt.
pub fn append_hint(prompt: &str, skeleton: &str) -> String {
    format!("{prompt}\n {HINT_HEADING}\n{skeleton}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency: Duration,
}

/// Live chat-completion endpoint settings.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }

    /// Endpoint and key from `DISTRAG_LLM_URL` / `DISTRAG_LLM_KEY`.
    pub fn from_env(model: impl Into<String>) -> Result<Self, GatewayError> {
        let url = std::env::var(LLM_URL_ENV)
            .map_err(|_| GatewayError::InvalidConfig(format!("{LLM_URL_ENV} is not set")))?;
        let mut cfg = Self::new(url, model);
        cfg.api_key = std::env::var(LLM_KEY_ENV).ok();
        Ok(cfg)
    }

    fn endpoint(&self) -> String {
        if self.base_url.trim_end_matches('/').ends_with("/chat/completions") {
            self.base_url.clone()
        } else {
            http::join(&self.base_url, "chat/completions")
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug, Default)]
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn acquire(&self, limit: usize) -> GateGuard<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= limit.max(1) {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpClient {
    cfg: HttpConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpClient").field("cfg", &self.cfg).finish()
    }
}

impl HttpClient {
    pub fn new(cfg: HttpConfig) -> Result<Self, GatewayError> {
        if cfg.base_url.is_empty() {
            return Err(GatewayError::InvalidConfig("empty base URL".into()));
        }
        if cfg.model.is_empty() {
            return Err(GatewayError::InvalidConfig("empty model name".into()));
        }
        Ok(Self {
            agent: http::agent(cfg.timeout),
            cfg,
            gate: Gate::default(),
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.cfg
    }

    fn complete(&self, prompt: &str) -> Result<Completion, GatewayError> {
        let _slot = self.gate.acquire(self.cfg.max_in_flight);
        let started = Instant::now();
        let body = serde_json::json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        })
        .to_string();
        let url = self.cfg.endpoint();
        let mut last = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.cfg.backoff * 2u32.saturating_pow(attempt - 1));
            }
            let resp = match http::post(
                &self.agent,
                &url,
                "application/json",
                body.clone(),
                self.cfg.api_key.as_deref(),
            ) {
                Ok(r) => r,
                Err(e) => {
                    last = e;
                    continue;
                }
            };
            match resp.status {
                401 | 403 => return Err(GatewayError::AuthError(format!("HTTP {}", resp.status))),
                429 | 500..=599 => {
                    last = format!("HTTP {}", resp.status);
                    if let Some(secs) = resp.retry_after {
                        std::thread::sleep(Duration::from_secs(secs.min(30)));
                    }
                    continue;
                }
                s if !(200..300).contains(&s) => {
                    return Err(GatewayError::NetworkError(format!("HTTP {s}: {}", resp.body)))
                }
                _ => {}
            }
            let text = parse_chat_response(&resp.body)?;
            return Ok(Completion {
                text,
                latency: started.elapsed(),
            });
        }
        Err(GatewayError::NetworkError(format!(
            "giving up after {} attempts: {last}",
            self.cfg.max_retries + 1
        )))
    }
}

fn parse_chat_response(body: &str) -> Result<String, GatewayError> {
    let v: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| GatewayError::NetworkError(format!("malformed response body: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| GatewayError::NetworkError("response has no assistant message".into()))
}

/// One line of a replay transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub prompt_sha256: String,
    pub response: String,
    pub latency_ms: f64,
}

impl ReplayRecord {
    pub fn new(prompt: &str, response: &str, latency: Duration) -> Self {
        Self {
            prompt_sha256: sha256_hex(prompt.as_bytes()),
            response: response.to_string(),
            latency_ms: latency.as_secs_f64() * 1000.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Replay {
    pub responses: HashMap<String, String>,
    /// Unknown prompts are an error when set, an empty reply otherwise.
    pub strict: bool,
}

impl Replay {
    pub fn from_records(records: impl IntoIterator<Item = ReplayRecord>, strict: bool) -> Self {
        Self {
            responses: records
                .into_iter()
                .map(|r| (r.prompt_sha256, r.response))
                .collect(),
            strict,
        }
    }

    pub fn load(path: impl AsRef<Path>, strict: bool) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            GatewayError::InvalidConfig(format!("cannot read {}: {e}", path.display()))
        })?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: ReplayRecord = serde_json::from_str(line).map_err(|e| {
                GatewayError::InvalidConfig(format!("{} line {}: {e}", path.display(), i + 1))
            })?;
            records.push(r);
        }
        Ok(Self::from_records(records, strict))
    }
}

#[derive(Debug)]
pub enum ModelClient {
    Http(HttpClient),
    Replay(Replay),
    /// Writes SPARQL for the SPARQL prompt. Uses the skeleton embedded in the
    /// prompt if there is one, then its own hint, then built-in Easy and
    /// Medium skeletons; refuses Difficult questions otherwise.
    ScriptedSparqlAuthor { hint: Option<QueryTemplateHint> },
    /// Answers from the sentences in a prompt's context section; refuses when
    /// the context does not contain the answer.
    ScriptedReader,
}

impl ModelClient {
    pub fn scripted_author(hint: Option<QueryTemplateHint>) -> Self {
        ModelClient::ScriptedSparqlAuthor { hint }
    }

    /// Concurrency the evaluator should use with this client.
    pub fn max_in_flight(&self) -> usize {
        match self {
            ModelClient::Http(c) => c.cfg.max_in_flight.max(1),
            _ => 4,
        }
    }

    pub fn complete(&self, prompt: &str) -> Result<Completion, GatewayError> {
        match self {
            ModelClient::Http(c) => c.complete(prompt),
            ModelClient::Replay(r) => {
                let hash = sha256_hex(prompt.as_bytes());
                let text = match r.responses.get(&hash) {
                    Some(t) => t.clone(),
                    None if r.strict => return Err(GatewayError::ReplayMiss(hash)),
                    None => String::new(),
                };
                Ok(instant(text))
            }
            ModelClient::ScriptedSparqlAuthor { hint } => {
                Ok(instant(author_sparql(prompt, hint.as_ref())))
            }
            ModelClient::ScriptedReader => Ok(instant(read_context(prompt))),
        }
    }
}

fn instant(text: String) -> Completion {
    Completion {
        text,
        latency: Duration::ZERO,
    }
}

/// Text after `marker` up to the end of that line.
fn line_after<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
    let start = prompt.find(marker)? + marker.len();
    Some(prompt[start..].lines().next().unwrap_or("").trim())
}

fn author_sparql(prompt: &str, hint: Option<&QueryTemplateHint>) -> String {
    let Some((d, names)) = line_after(prompt, "### Question:").and_then(parse_question_text)
    else {
        return REFUSAL.to_string();
    };
    let skeleton = match (prompt.find(HINT_HEADING), hint) {
        (Some(at), _) => prompt[at + HINT_HEADING.len()..].trim().to_string(),
        (None, Some(h)) => h.skeleton(d).to_string(),
        (None, None) if d == Difficulty::Difficult => return REFUSAL.to_string(),
        (None, None) => QueryTemplateHint::default().skeleton(d).to_string(),
    };
    format!("```sparql\n{}\n```", instantiate(&skeleton, &names))
}

fn read_context(prompt: &str) -> String {
    const NO_ANSWER: &str = "I don't know.";
    let Some((d, names)) = line_after(prompt, "Question:").and_then(parse_question_text) else {
        return NO_ANSWER.to_string();
    };
    let facts: Vec<(String, String, u32)> = match prompt.find("Context:") {
        Some(at) => prompt[at..].lines().filter_map(parse_sentence).collect(),
        None => Vec::new(),
    };
    let dist = |a: &str, b: &str| {
        facts
            .iter()
            .find(|(x, y, _)| (x == a && y == b) || (x == b && y == a))
            .map(|f| f.2)
    };
    let from = |a: &str| -> Vec<(String, u32)> {
        let mut v: Vec<(String, u32)> = facts
            .iter()
            .filter_map(|(x, y, d)| {
                if x == a {
                    Some((y.clone(), *d))
                } else if y == a {
                    Some((x.clone(), *d))
                } else {
                    None
                }
            })
            .collect();
        v.sort_by(|p, q| p.1.cmp(&q.1).then_with(|| p.0.cmp(&q.0)));
        v
    };
    let answer = match d {
        Difficulty::Easy => dist(&names[0], &names[1]).map(|km| km.to_string()),
        Difficulty::Medium => from(&names[0]).first().map(|(_, km)| km.to_string()),
        Difficulty::Difficult => dist(&names[0], &names[1]).and_then(|x| {
            from(&names[2])
                .into_iter()
                .filter(|(c, _)| !names.contains(c))
                .min_by_key(|(_, km)| km.abs_diff(x))
                .map(|(c, _)| c)
        }),
    };
    answer.unwrap_or_else(|| NO_ANSWER.to_string())
}

/// Parse `The distance between A and B is N km.`
fn parse_sentence(line: &str) -> Option<(String, String, u32)> {
    let line = line.trim();
    let line = line.strip_prefix("Context:").map(str::trim).unwrap_or(line);
    let rest = line.strip_prefix("The distance between ")?.strip_suffix(" km.")?;
    let (pair, km) = rest.rsplit_once(" is ")?;
    let (a, b) = pair.rsplit_once(" and ")?;
    Some((a.to_string(), b.to_string(), km.parse().ok()?))
}
