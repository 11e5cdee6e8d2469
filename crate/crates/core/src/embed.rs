//! Vector-similarity retrieval of graph triples.
//!
//! Triples are embedded with an [`Embedder`] and searched exhaustively by
//! cosine similarity; the best `k` are rendered as plain sentences for the
//! prompt context.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::graph::TripleText;
use crate::http;

pub const EMBED_URL_ENV: &str = "DISTRAG_EMBED_URL";

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("invalid embedder configuration: {0}")]
    InvalidConfig(String),
    #[error("embedding service request failed: {0}")]
    NetworkError(String),
    #[error("embedding has dimension {got}, expected {expected}")]
    BadDimension { expected: usize, got: usize },
    #[error("vector index is empty")]
    EmptyIndex,
    #[error("invalid retrieval configuration: {0}")]
    InvalidRetrieval(String),
}

/// HTTP embedding endpoint: `POST {"input": [..]}` → `{"vectors": [[..]]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteEmbedder {
    pub url: String,
    pub timeout: Duration,
    /// Expected dimension; when `None` the first response fixes it.
    pub dim: Option<usize>,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout: Duration::from_secs(30),
            dim: None,
        }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(EMBED_URL_ENV).ok().map(Self::new)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        #[derive(Serialize)]
        struct Req<'a> {
            input: &'a [String],
        }
        #[derive(Deserialize)]
        struct Resp {
            vectors: Vec<Vec<f64>>,
        }
        let body = serde_json::to_string(&Req { input: texts })
            .map_err(|e| EmbedError::NetworkError(e.to_string()))?;
        let agent = http::agent(self.timeout);
        let resp = http::post(&agent, &self.url, "application/json", body, None)
            .map_err(EmbedError::NetworkError)?;
        if !resp.is_success() {
            return Err(EmbedError::NetworkError(format!("HTTP status {}", resp.status)));
        }
        let parsed: Resp = serde_json::from_str(&resp.body)
            .map_err(|e| EmbedError::NetworkError(format!("malformed response body: {e}")))?;
        if parsed.vectors.len() != texts.len() {
            return Err(EmbedError::NetworkError(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                parsed.vectors.len()
            )));
        }
        let expected = self
            .dim
            .or_else(|| parsed.vectors.first().map(Vec::len))
            .unwrap_or(0);
        parsed
            .vectors
            .into_iter()
            .map(|mut v| {
                if v.len() != expected || v.iter().any(|x| !x.is_finite()) {
                    return Err(EmbedError::BadDimension {
                        expected,
                        got: v.len(),
                    });
                }
                normalize(&mut v);
                Ok(v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Embedder {
    /// Hashed character n-grams; deterministic and offline.
    LexicalHash { dim: usize, ngram: usize },
    Remote(RemoteEmbedder),
}

impl Default for Embedder {
    fn default() -> Self {
        Embedder::LexicalHash { dim: 4096, ngram: 3 }
    }
}

impl Embedder {
    pub fn lexical(dim: usize, ngram: usize) -> Result<Self, EmbedError> {
        let e = Embedder::LexicalHash { dim, ngram };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        match *self {
            Embedder::LexicalHash { dim, .. } if dim < 64 => {
                Err(EmbedError::InvalidConfig(format!("dim must be >= 64, got {dim}")))
            }
            Embedder::LexicalHash { ngram, .. } if !(2..=5).contains(&ngram) => Err(
                EmbedError::InvalidConfig(format!("ngram must be in [2, 5], got {ngram}")),
            ),
            _ => Ok(()),
        }
    }

    fn embed_many(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        match self {
            Embedder::LexicalHash { dim, ngram } => {
                Ok(texts.iter().map(|t| lexical_hash(t, *dim, *ngram)).collect())
            }
            Embedder::Remote(remote) => {
                let mut out = Vec::with_capacity(texts.len());
                for chunk in texts.chunks(256) {
                    out.extend(remote.embed_batch(chunk)?);
                }
                Ok(out)
            }
        }
    }
}

const BOUNDARY_START: char = '\u{2}';
const BOUNDARY_END: char = '\u{3}';

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn lexical_hash(text: &str, dim: usize, ngram: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    if text.is_empty() {
        return v;
    }
    let padded: Vec<char> = std::iter::once(BOUNDARY_START)
        .chain(text.to_lowercase().chars())
        .chain(std::iter::once(BOUNDARY_END))
        .collect();
    let n = ngram.min(padded.len());
    let mut counts = vec![0u32; dim];
    let mut buf = String::new();
    for w in padded.windows(n) {
        buf.clear();
        buf.extend(w);
        counts[(fnv1a(buf.as_bytes()) % dim as u64) as usize] += 1;
    }
    for (slot, &c) in v.iter_mut().zip(&counts) {
        if c > 0 {
            let c = f64::from(c);
            *slot = c / (1.0 + c).sqrt();
        }
    }
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Embed one string; the result has unit length, or is all zeros for `""`.
pub fn embed_text(text: &str, e: &Embedder) -> Result<Vec<f64>, EmbedError> {
    e.validate()?;
    let mut out = e.embed_many(&[text.to_string()])?;
    Ok(out.pop().unwrap_or_default())
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { k: 10 }
    }
}

impl RetrievalConfig {
    pub fn new(k: usize) -> Result<Self, EmbedError> {
        if k == 0 {
            return Err(EmbedError::InvalidRetrieval("k must be at least 1".into()));
        }
        Ok(Self { k })
    }
}

#[derive(Debug, Clone)]
pub struct VectorIndex {
    embedder: Embedder,
    entries: Vec<(TripleText, Vec<f64>)>,
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(TripleText, Vec<f64>)] {
        &self.entries
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }
}

/// Embed each triple's rendered `("A", "B", "d km")` string, keeping order.
pub fn build_index(triples: &[TripleText], e: &Embedder) -> Result<VectorIndex, EmbedError> {
    e.validate()?;
    let texts: Vec<String> = triples.iter().map(ToString::to_string).collect();
    let vectors = e.embed_many(&texts)?;
    Ok(VectorIndex {
        embedder: e.clone(),
        entries: triples.iter().cloned().zip(vectors).collect(),
    })
}

/// Exact top-k by cosine similarity, best first; ties keep index order.
pub fn query_top_k(
    idx: &VectorIndex,
    question: &str,
    cfg: &RetrievalConfig,
) -> Result<Vec<(TripleText, f64)>, EmbedError> {
    if idx.entries.is_empty() {
        return Err(EmbedError::EmptyIndex);
    }
    let q = embed_text(question, &idx.embedder)?;
    let mut scored: Vec<(usize, f64)> = idx
        .entries
        .iter()
        .enumerate()
        .map(|(i, (_, v))| (i, cosine(&q, v)))
        .collect();
    // stable sort keeps insertion order among equal scores
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored.truncate(cfg.k.max(1));
    Ok(scored
        .into_iter()
        .map(|(i, s)| (idx.entries[i].0.clone(), s))
        .collect())
}

/// One `The distance between A and B is d km.` line per result.
pub fn render_context(results: &[(TripleText, f64)]) -> String {
    results
        .iter()
        .map(|(t, _)| {
            format!(
                "The distance between {} and {} is {} km.",
                t.subject, t.object, t.distance_km
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}
