//! The distance knowledge store.
//!
//! A [`SpatialGraph`] is an undirected graph over cities whose edges carry
//! great-circle distances rounded to whole kilometres. Graphs are values:
//! [`SpatialGraph::sparsify`] and friends return new graphs.

mod turtle;

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geo::{geodesic_km, CityKey, Gazetteer};
use crate::util::round_km;

pub use turtle::{parse_turtle, serialize_turtle};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("need at least 2 cities to build a graph, got {0}")]
    TooFewCities(usize),
    #[error("unknown city `{0}`")]
    UnknownCity(CityKey),
    #[error("self-edge on `{0}`")]
    SelfEdge(CityKey),
    #[error("two display names map to the key `{0}`")]
    DuplicateCity(CityKey),
    #[error("invalid edge policy: {0}")]
    InvalidPolicy(String),
    #[error("Turtle syntax error at line {line}: {message}")]
    TurtleSyntaxError { line: usize, message: String },
    #[error("conflicting distances for {0} <-> {1}")]
    ConflictingDistance(CityKey, CityKey),
    #[error("malformed triple line {line}: {text}")]
    MalformedTriple { line: usize, text: String },
}

/// Which city pairs receive an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EdgePolicy {
    #[default]
    Complete,
    KNearest(usize),
    Radius(u32),
}

impl EdgePolicy {
    pub fn validate(&self) -> Result<(), GraphError> {
        match *self {
            EdgePolicy::KNearest(0) => Err(GraphError::InvalidPolicy("k must be positive".into())),
            EdgePolicy::Radius(0) => Err(GraphError::InvalidPolicy("radius must be positive".into())),
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for EdgePolicy {
    type Err = GraphError;

    /// `complete`, `knearest:<k>` or `radius:<km>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || GraphError::InvalidPolicy(s.clone());
        let policy = match s.split_once(':') {
            None if s == "complete" => EdgePolicy::Complete,
            Some(("knearest", k)) => EdgePolicy::KNearest(k.trim().parse().map_err(|_| bad())?),
            Some(("radius", r)) => EdgePolicy::Radius(r.trim().parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl fmt::Display for EdgePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgePolicy::Complete => f.write_str("complete"),
            EdgePolicy::KNearest(k) => write!(f, "knearest:{k}"),
            EdgePolicy::Radius(r) => write!(f, "radius:{r}"),
        }
    }
}

/// One undirected edge in its textual triple form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripleText {
    pub subject: String,
    pub object: String,
    pub distance_km: u32,
}

impl TripleText {
    pub fn predicate_text(&self) -> String {
        format!("{} km", self.distance_km)
    }

    /// Parse the `("A", "B", "d km")` form.
    pub fn parse(text: &str) -> Option<Self> {
        let re = triple_regex();
        let caps = re.captures(text.trim())?;
        Some(TripleText {
            subject: caps[1].to_string(),
            object: caps[2].to_string(),
            distance_km: caps[3].parse().ok()?,
        })
    }
}

fn triple_regex() -> &'static regex::Regex {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r#"^\("([^"]+)", "([^"]+)", "(\d+) km"\)$"#).unwrap())
}

impl fmt::Display for TripleText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(\"{}\", \"{}\", \"{}\")",
            self.subject,
            self.object,
            self.predicate_text()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpatialGraph {
    display: BTreeMap<CityKey, String>,
    adj: BTreeMap<CityKey, BTreeMap<CityKey, u32>>,
}

impl SpatialGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a city by display name; adding the same name twice is a no-op.
    pub fn add_city(&mut self, display: &str) -> Result<CityKey, GraphError> {
        let display = display.trim();
        let key = CityKey::from_name(display);
        if key.is_empty() {
            return Err(GraphError::UnknownCity(key));
        }
        match self.display.get(&key) {
            Some(existing) if existing != display => Err(GraphError::DuplicateCity(key)),
            Some(_) => Ok(key),
            None => {
                self.display.insert(key.clone(), display.to_string());
                self.adj.insert(key.clone(), BTreeMap::new());
                Ok(key)
            }
        }
    }

    /// Insert or overwrite the undirected edge `a`–`b`.
    pub fn insert_edge(&mut self, a: &CityKey, b: &CityKey, km: u32) -> Result<(), GraphError> {
        self.require(a)?;
        self.require(b)?;
        if a == b {
            return Err(GraphError::SelfEdge(a.clone()));
        }
        self.adj.get_mut(a).unwrap().insert(b.clone(), km);
        self.adj.get_mut(b).unwrap().insert(a.clone(), km);
        Ok(())
    }

    pub fn remove_edge(&mut self, a: &CityKey, b: &CityKey) -> Option<u32> {
        let d = self.adj.get_mut(a)?.remove(b);
        if let Some(m) = self.adj.get_mut(b) {
            m.remove(a);
        }
        d
    }

    fn require(&self, key: &CityKey) -> Result<(), GraphError> {
        if self.display.contains_key(key) {
            Ok(())
        } else {
            Err(GraphError::UnknownCity(key.clone()))
        }
    }

    pub fn contains(&self, key: &CityKey) -> bool {
        self.display.contains_key(key)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &CityKey> {
        self.display.keys()
    }

    pub fn display_name(&self, key: &CityKey) -> Option<&str> {
        self.display.get(key).map(String::as_str)
    }

    pub fn node_count(&self) -> usize {
        self.display.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(BTreeMap::len).sum::<usize>() / 2
    }

    /// Undirected edges `(a, b, km)` with `a < b`, in key order.
    pub fn edges(&self) -> impl Iterator<Item = (&CityKey, &CityKey, u32)> {
        self.adj.iter().flat_map(|(a, m)| {
            m.range::<CityKey, _>((std::ops::Bound::Excluded(a), std::ops::Bound::Unbounded))
                .map(move |(b, &d)| (a, b, d))
        })
    }

    /// Stored distance between `a` and `b`, symmetric; `None` if there is no edge.
    pub fn edge_distance(&self, a: &CityKey, b: &CityKey) -> Result<Option<u32>, GraphError> {
        self.require(a)?;
        self.require(b)?;
        Ok(self.adj[a].get(b).copied())
    }

    /// Incident edges of `a`, nearest first; ties broken by key.
    pub fn neighbors(&self, a: &CityKey) -> Result<Vec<(CityKey, u32)>, GraphError> {
        self.require(a)?;
        let mut out: Vec<(CityKey, u32)> =
            self.adj[a].iter().map(|(k, &d)| (k.clone(), d)).collect();
        // BTreeMap iteration is already key ordered, so a stable sort on distance suffices
        out.sort_by_key(|&(_, d)| d);
        Ok(out)
    }

    /// One triple per undirected edge, subject being the smaller display name,
    /// sorted by `(subject, object)`.
    pub fn to_triple_texts(&self) -> Vec<TripleText> {
        let mut out: Vec<TripleText> = self
            .edges()
            .map(|(a, b, d)| {
                let (x, y) = (&self.display[a], &self.display[b]);
                let (subject, object) = if x <= y { (x, y) } else { (y, x) };
                TripleText {
                    subject: subject.clone(),
                    object: object.clone(),
                    distance_km: d,
                }
            })
            .collect();
        out.sort();
        out
    }

    /// Rebuild a graph from `("A", "B", "d km")` lines. Blank lines are skipped.
    pub fn from_triple_lines(text: &str) -> Result<Self, GraphError> {
        let mut g = SpatialGraph::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t = TripleText::parse(line).ok_or_else(|| GraphError::MalformedTriple {
                line: i + 1,
                text: line.to_string(),
            })?;
            let a = g.add_city(&t.subject)?;
            let b = g.add_city(&t.object)?;
            if let Some(prev) = g.adj[&a].get(&b) {
                if *prev != t.distance_km {
                    return Err(GraphError::ConflictingDistance(a, b));
                }
            }
            g.insert_edge(&a, &b, t.distance_km)?;
        }
        Ok(g)
    }

    pub fn to_triple_lines(&self) -> String {
        self.to_triple_texts()
            .iter()
            .map(|t| format!("{t}\n"))
            .collect()
    }

    /// Remove `floor(sparsity * |E|)` edges chosen uniformly without replacement.
    ///
    /// The edges are put in a seeded random order and the removed set is a
    /// prefix of that order, so for a fixed seed the edges removed at a lower
    /// sparsity are a subset of those removed at a higher one.
    pub fn sparsify(&self, sparsity: f64, seed: u64) -> SpatialGraph {
        let sparsity = if sparsity.is_nan() { 0.0 } else { sparsity.clamp(0.0, 1.0) };
        let mut edges: Vec<(CityKey, CityKey)> =
            self.edges().map(|(a, b, _)| (a.clone(), b.clone())).collect();
        // tolerate representation error such as 0.29 * 100 = 28.999999999999996
        let remove = ((sparsity * edges.len() as f64) + 1e-9).floor() as usize;
        let remove = remove.min(edges.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        edges.shuffle(&mut rng);
        let mut out = self.clone();
        for (a, b) in &edges[..remove] {
            out.remove_edge(a, b);
        }
        out
    }
}

/// Build the distance graph over every gazetteer city.
pub fn build_graph(g: &Gazetteer, policy: EdgePolicy) -> Result<SpatialGraph, GraphError> {
    policy.validate()?;
    let cities = g.cities();
    if cities.len() < 2 {
        return Err(GraphError::TooFewCities(cities.len()));
    }
    let mut graph = SpatialGraph::new();
    for c in cities {
        graph.add_city(&c.name)?;
    }

    let n = cities.len();
    let mut dist = vec![vec![0u32; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = round_km(geodesic_km(cities[i].point, cities[j].point));
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    match policy {
        EdgePolicy::Complete => {
            for i in 0..n {
                for j in (i + 1)..n {
                    graph.insert_edge(&cities[i].key, &cities[j].key, dist[i][j])?;
                }
            }
        }
        EdgePolicy::Radius(r) => {
            for i in 0..n {
                for j in (i + 1)..n {
                    if dist[i][j] <= r {
                        graph.insert_edge(&cities[i].key, &cities[j].key, dist[i][j])?;
                    }
                }
            }
        }
        EdgePolicy::KNearest(k) => {
            for i in 0..n {
                let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                others.sort_by(|&x, &y| {
                    dist[i][x]
                        .cmp(&dist[i][y])
                        .then_with(|| cities[x].key.cmp(&cities[y].key))
                });
                for &j in others.iter().take(k) {
                    graph.insert_edge(&cities[i].key, &cities[j].key, dist[i][j])?;
                }
            }
        }
    }
    Ok(graph)
}
