//! Benchmark questions in three difficulty families, with gold answers from
//! exhaustive search over the graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::geo::CityKey;
use crate::graph::{GraphError, SpatialGraph};

#[derive(Debug, thiserror::Error)]
pub enum QuestionError {
    #[error("graph has only {available} valid {difficulty} questions, {requested} requested")]
    InsufficientGraph {
        difficulty: Difficulty,
        requested: usize,
        available: usize,
    },
    #[error("no edge between {0} and {1}")]
    MissingEdge(CityKey, CityKey),
    #[error("{0} has no candidate neighbours")]
    NoCandidates(CityKey),
    #[error("{difficulty} questions take {expected} cities, got {got}")]
    WrongArity {
        difficulty: Difficulty,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("question file line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Difficult,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Difficult];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Difficult => "difficult",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Difficulty::Easy => 2,
            Difficulty::Medium => 1,
            Difficulty::Difficult => 3,
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "difficult" | "hard" => Ok(Difficulty::Difficult),
            other => Err(format!("unknown difficulty `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoldAnswer {
    DistanceKm {
        km: u32,
    },
    ClosestCity {
        city: CityKey,
        km: u32,
    },
    SimilarCity {
        target_km: u32,
        city: CityKey,
        gap_km: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub difficulty: Difficulty,
    pub text: String,
    pub cities: Vec<CityKey>,
    pub gold: GoldAnswer,
}

/// Question text for the given display names (A, B), (A) or (A, B, C).
pub fn question_text(difficulty: Difficulty, names: &[&str]) -> String {
    match (difficulty, names) {
        (Difficulty::Easy, [a, b, ..]) => format!("What is the distance between {a} and {b}?"),
        (Difficulty::Medium, [a, ..]) => {
            format!("What is the distance between {a} and its closest city?")
        }
        (Difficulty::Difficult, [a, b, c, ..]) => format!(
            "The distance from {a} to {b} is similar to the distance from {c} to what other city or town?"
        ),
        _ => String::new(),
    }
}

/// Recover the family and display names from a question string.
pub fn parse_question_text(text: &str) -> Option<(Difficulty, Vec<String>)> {
    static RES: OnceLock<[Regex; 3]> = OnceLock::new();
    let [medium, easy, difficult] = RES.get_or_init(|| {
        [
            Regex::new(r"^What is the distance between (.+) and its closest city\?$").unwrap(),
            Regex::new(r"^What is the distance between (.+) and (.+)\?$").unwrap(),
            Regex::new(
                r"^The distance from (.+) to (.+) is similar to the distance from (.+) to what other city or town\?$",
            )
            .unwrap(),
        ]
    });
    let text = text.trim();
    for (re, d) in [
        (medium, Difficulty::Medium),
        (easy, Difficulty::Easy),
        (difficult, Difficulty::Difficult),
    ] {
        if let Some(c) = re.captures(text) {
            let names = c.iter().skip(1).flatten().map(|m| m.as_str().to_string()).collect();
            return Some((d, names));
        }
    }
    None
}

/// Exhaustive gold answer. This is the reference everything else is scored
/// against, so it deliberately avoids any indexing.
pub fn gold_answer(
    gr: &SpatialGraph,
    difficulty: Difficulty,
    cities: &[CityKey],
) -> Result<GoldAnswer, QuestionError> {
    if cities.len() != difficulty.arity() {
        return Err(QuestionError::WrongArity {
            difficulty,
            expected: difficulty.arity(),
            got: cities.len(),
        });
    }
    match difficulty {
        Difficulty::Easy => {
            let (a, b) = (&cities[0], &cities[1]);
            match gr.edge_distance(a, b)? {
                Some(km) => Ok(GoldAnswer::DistanceKm { km }),
                None => Err(QuestionError::MissingEdge(a.clone(), b.clone())),
            }
        }
        Difficulty::Medium => {
            let a = &cities[0];
            let best = argmin(gr, a, |d| d, &[a])?;
            Ok(GoldAnswer::ClosestCity {
                city: best.0,
                km: best.1,
            })
        }
        Difficulty::Difficult => {
            let (a, b, c) = (&cities[0], &cities[1], &cities[2]);
            let target = gr
                .edge_distance(a, b)?
                .ok_or_else(|| QuestionError::MissingEdge(a.clone(), b.clone()))?;
            let best = argmin(gr, c, |d| d.abs_diff(target), &[a, b, c])?;
            Ok(GoldAnswer::SimilarCity {
                target_km: target,
                city: best.0,
                gap_km: best.1.abs_diff(target),
            })
        }
    }
}

/// Scan every node for an edge to `from`, minimizing `score` with
/// lexicographic tie-break. Returns the winner and its edge distance.
fn argmin(
    gr: &SpatialGraph,
    from: &CityKey,
    score: impl Fn(u32) -> u32,
    exclude: &[&CityKey],
) -> Result<(CityKey, u32), QuestionError> {
    if !gr.contains(from) {
        return Err(GraphError::UnknownCity(from.clone()).into());
    }
    let mut best: Option<(u32, CityKey, u32)> = None;
    for other in gr.nodes() {
        if exclude.contains(&other) {
            continue;
        }
        if let Some(d) = gr.edge_distance(from, other)? {
            let s = score(d);
            let better = match &best {
                None => true,
                Some((bs, bk, _)) => s < *bs || (s == *bs && other < bk),
            };
            if better {
                best = Some((s, other.clone(), d));
            }
        }
    }
    best.map(|(_, k, d)| (k, d))
        .ok_or_else(|| QuestionError::NoCandidates(from.clone()))
}

/// Seeded question sampling. Tuples are drawn without replacement; Difficult
/// questions are built so that some neighbour of C is at exactly the A–B
/// distance.
pub fn generate_questions(
    gr: &SpatialGraph,
    difficulty: Difficulty,
    n: usize,
    seed: u64,
) -> Result<Vec<Question>, QuestionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tuples: Vec<Vec<CityKey>> = match difficulty {
        Difficulty::Easy => {
            let mut pairs: Vec<(CityKey, CityKey)> =
                gr.edges().map(|(a, b, _)| (a.clone(), b.clone())).collect();
            check(difficulty, n, pairs.len())?;
            pairs.partial_shuffle(&mut rng, n);
            pairs
                .into_iter()
                .take(n)
                .map(|(a, b)| if rng.gen_bool(0.5) { vec![b, a] } else { vec![a, b] })
                .collect()
        }
        Difficulty::Medium => {
            let mut nodes: Vec<CityKey> = gr
                .nodes()
                .filter(|k| gr.neighbors(k).is_ok_and(|v| !v.is_empty()))
                .cloned()
                .collect();
            check(difficulty, n, nodes.len())?;
            nodes.partial_shuffle(&mut rng, n);
            nodes.into_iter().take(n).map(|k| vec![k]).collect()
        }
        Difficulty::Difficult => difficult_tuples(gr, n, &mut rng)?,
    };

    tuples
        .into_iter()
        .enumerate()
        .map(|(i, cities)| {
            let names: Vec<&str> = cities
                .iter()
                .map(|k| gr.display_name(k).unwrap_or(k.as_str()))
                .collect();
            let gold = gold_answer(gr, difficulty, &cities)?;
            Ok(Question {
                id: format!("{}-{:03}", difficulty, i + 1),
                difficulty,
                text: question_text(difficulty, &names),
                cities,
                gold,
            })
        })
        .collect()
}

fn check(difficulty: Difficulty, requested: usize, available: usize) -> Result<(), QuestionError> {
    if requested > available {
        return Err(QuestionError::InsufficientGraph {
            difficulty,
            requested,
            available,
        });
    }
    Ok(())
}

fn difficult_tuples(
    gr: &SpatialGraph,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<CityKey>>, QuestionError> {
    let mut by_distance: BTreeMap<u32, Vec<(CityKey, CityKey)>> = BTreeMap::new();
    let mut directed: Vec<(CityKey, CityKey, u32)> = Vec::new();
    for (a, b, d) in gr.edges() {
        by_distance.entry(d).or_default().push((a.clone(), b.clone()));
        directed.push((a.clone(), b.clone(), d));
        directed.push((b.clone(), a.clone(), d));
    }
    directed.shuffle(rng);

    let mut seen: BTreeSet<Vec<CityKey>> = BTreeSet::new();
    let mut out = Vec::new();
    for (c, x, d) in directed {
        if out.len() == n {
            break;
        }
        let matches: Vec<&(CityKey, CityKey)> = by_distance[&d]
            .iter()
            .filter(|(a, b)| ![&c, &x].contains(&a) && ![&c, &x].contains(&b))
            .collect();
        if matches.is_empty() {
            continue;
        }
        let (a, b) = matches[rng.gen_range(0..matches.len())].clone();
        let tuple = if rng.gen_bool(0.5) { vec![b, a, c] } else { vec![a, b, c] };
        if seen.insert(tuple.clone()) {
            out.push(tuple);
        }
    }
    check(Difficulty::Difficult, n, out.len())?;
    Ok(out)
}

/// One JSON object per line, fields in declaration order.
pub fn write_questions<W: Write>(questions: &[Question], mut out: W) -> Result<(), QuestionError> {
    for q in questions {
        let line = serde_json::to_string(q).map_err(|e| QuestionError::Malformed {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_questions<R: BufRead>(input: R) -> Result<Vec<Question>, QuestionError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q = serde_json::from_str(&line).map_err(|e| QuestionError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(q);
    }
    Ok(out)
}
