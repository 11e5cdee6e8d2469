//! Shared fixtures, reference oracles and a scripted HTTP server for the
//! integration tests. The oracles are written independently of the library
//! code they check.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use distrag::geo::{load_gazetteer, Gazetteer};
use distrag::graph::{build_graph, EdgePolicy, SpatialGraph};
use distrag::rdf::{city_iri, CITY_CLASS, DESTINATION, DISTANCE, DISTANCE_TO, RDF_TYPE};
use distrag::sparql::{BinOp, Direction, Expr, PatternTerm, Query, Selection, Value};
use distrag::gateway::QueryTemplateHint;
use distrag::questions::Difficulty;
use distrag::CityKey;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn au50() -> Gazetteer {
    load_gazetteer(fixture("au50.csv")).expect("fixture gazetteer loads")
}

pub fn au50_graph() -> SpatialGraph {
    build_graph(&au50(), EdgePolicy::Complete).expect("fixture graph builds")
}

/// Adelaide with four neighbours, plus an isolated Mount Isa.
pub fn adelaide_graph() -> SpatialGraph {
    let text = std::fs::read_to_string(fixture("adelaide.ttl")).unwrap();
    distrag::graph::parse_turtle(&text).unwrap()
}

// ---------------------------------------------------------------------------
// Great-circle oracle: chord length between unit vectors, R = 6371.0088 km.

pub const R_KM: f64 = 6371.0088;

pub fn chord_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let v = |lat: f64, lon: f64| {
        let (la, lo) = (lat.to_radians(), lon.to_radians());
        [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
    };
    let (a, b) = (v(lat1, lon1), v(lat2, lon2));
    let c = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    2.0 * R_KM * (c / 2.0).min(1.0).asin()
}

/// Values computed once with a separate Python haversine script.
pub const FROZEN_KM: &[(&str, &str, f64)] = &[
    ("Adelaide", "Perth", 2130.9935398334874),
    ("Adelaide", "Launceston", 1038.5927337958258),
    ("Adelaide", "Cairns", 2125.6200454962664),
    ("Adelaide", "Ipswich", 1569.9960435690873),
    ("Sydney", "Melbourne", 713.4284661481305),
    ("Newcastle", "Sydney", 117.30381471836742),
    ("Adelaide", "Mount Isa", 1581.7037302389517),
];

// ---------------------------------------------------------------------------
// Brute-force SPARQL evaluator: enumerates every combination of triples,
// one per pattern, with no indexes.

pub fn oracle_triples(gr: &SpatialGraph) -> Vec<[Value; 3]> {
    let iri = |k: &CityKey| Value::Iri(city_iri(gr.display_name(k).unwrap()));
    let mut out = Vec::new();
    let mut n = 0;
    let keys: Vec<CityKey> = gr.nodes().cloned().collect();
    for a in &keys {
        out.push([iri(a), Value::Iri(RDF_TYPE.into()), Value::Iri(CITY_CLASS.into())]);
        for b in &keys {
            if let Ok(Some(d)) = gr.edge_distance(a, b) {
                let blank = Value::Blank(format!("x{n}"));
                n += 1;
                out.push([iri(a), Value::Iri(DISTANCE_TO.into()), blank.clone()]);
                out.push([blank.clone(), Value::Iri(DESTINATION.into()), iri(b)]);
                out.push([blank, Value::Iri(DISTANCE.into()), Value::Integer(d as i64)]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum OVal {
    B(bool),
    V(Value),
}

fn oracle_expr(e: &Expr, env: &BTreeMap<String, Value>) -> Option<OVal> {
    Some(match e {
        Expr::Var(v) => OVal::V(env.get(v)?.clone()),
        Expr::Int(n) => OVal::V(Value::Integer(*n)),
        Expr::Iri(i) => OVal::V(Value::Iri(i.clone())),
        Expr::Abs(x) => match oracle_expr(x, env)? {
            OVal::V(Value::Integer(n)) => OVal::V(Value::Integer(n.abs())),
            _ => return None,
        },
        Expr::Binary(op, l, r) => {
            let (l, r) = (oracle_expr(l, env)?, oracle_expr(r, env)?);
            let int = |v: &OVal| match v {
                OVal::V(Value::Integer(n)) => Some(*n),
                _ => None,
            };
            let boolean = |v: &OVal| match v {
                OVal::B(b) => Some(*b),
                _ => None,
            };
            match op {
                BinOp::Add => OVal::V(Value::Integer(int(&l)? + int(&r)?)),
                BinOp::Sub => OVal::V(Value::Integer(int(&l)? - int(&r)?)),
                BinOp::Mul => OVal::V(Value::Integer(int(&l)? * int(&r)?)),
                BinOp::And => OVal::B(boolean(&l)? && boolean(&r)?),
                BinOp::Or => OVal::B(boolean(&l)? || boolean(&r)?),
                BinOp::Eq => OVal::B(l == r),
                BinOp::Ne => OVal::B(l != r),
                BinOp::Lt => OVal::B(int(&l)? < int(&r)?),
                BinOp::Le => OVal::B(int(&l)? <= int(&r)?),
                BinOp::Gt => OVal::B(int(&l)? > int(&r)?),
                BinOp::Ge => OVal::B(int(&l)? >= int(&r)?),
            }
        }
    })
}

fn term_key(t: &PatternTerm) -> Option<String> {
    match t {
        PatternTerm::Var(v) => Some(format!("?{v}")),
        PatternTerm::Blank(b) => Some(format!("_:{b}")),
        _ => None,
    }
}

fn term_const(t: &PatternTerm) -> Option<Value> {
    match t {
        PatternTerm::Iri(i) => Some(Value::Iri(i.clone())),
        PatternTerm::Integer(n) => Some(Value::Integer(*n)),
        _ => None,
    }
}

/// Evaluate by enumerating every tuple of triples, one per pattern, then
/// filter, sort canonically by named variables, apply ORDER BY stably, LIMIT
/// and project.
pub fn oracle_eval(q: &Query, triples: &[[Value; 3]]) -> Vec<Vec<Value>> {
    let mut solutions: Vec<BTreeMap<String, Value>> = Vec::new();
    fn go(
        q: &Query,
        triples: &[[Value; 3]],
        depth: usize,
        env: &mut BTreeMap<String, Value>,
        out: &mut Vec<BTreeMap<String, Value>>,
    ) {
        if depth == q.patterns.len() {
            out.push(env.clone());
            return;
        }
        let p = &q.patterns[depth];
        for t in triples {
            let mut added = Vec::new();
            let mut ok = true;
            for (term, value) in [&p.subject, &p.predicate, &p.object].into_iter().zip(t) {
                if let Some(c) = term_const(term) {
                    ok &= &c == value;
                } else if let Some(k) = term_key(term) {
                    match env.get(&k) {
                        Some(v) => ok &= v == value,
                        None => {
                            env.insert(k.clone(), value.clone());
                            added.push(k);
                        }
                    }
                }
                if !ok {
                    break;
                }
            }
            if ok {
                go(q, triples, depth + 1, env, out);
            }
            for k in added {
                env.remove(&k);
            }
        }
    }
    if !q.patterns.is_empty() {
        go(q, triples, 0, &mut BTreeMap::new(), &mut solutions);
    }

    let named = q.pattern_variables();
    let vars = |s: &BTreeMap<String, Value>| -> BTreeMap<String, Value> {
        named
            .iter()
            .map(|n| (n.clone(), s[&format!("?{n}")].clone()))
            .collect()
    };
    let mut rows: Vec<BTreeMap<String, Value>> = solutions
        .iter()
        .map(vars)
        .filter(|env| {
            q.filters
                .iter()
                .all(|f| oracle_expr(f, env) == Some(OVal::B(true)))
        })
        .collect();
    rows.sort_by(|a, b| {
        for n in &named {
            match a[n].cmp(&b[n]) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    });
    if let Some(o) = &q.order_by {
        rows.sort_by(|a, b| {
            let c = oracle_expr(&o.expr, a).cmp(&oracle_expr(&o.expr, b));
            if o.direction == Direction::Desc {
                c.reverse()
            } else {
                c
            }
        });
    }
    if let Some(n) = q.limit {
        rows.truncate(n as usize);
    }
    let cols = match &q.select {
        Selection::Star => named.clone(),
        Selection::Vars(v) => v.clone(),
    };
    rows.iter()
        .map(|r| cols.iter().map(|c| r[c].clone()).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// Scripted HTTP server. Each accepted connection gets the next canned
// response; requests are recorded.

#[derive(Debug, Clone)]
pub struct Canned {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Canned {
    pub fn ok(body: impl Into<String>) -> Self {
        Canned {
            status: 200,
            headers: vec![("Content-Type".into(), "application/json".into())],
            body: body.into(),
        }
    }

    pub fn status(status: u16, body: impl Into<String>) -> Self {
        Canned {
            status,
            headers: Vec::new(),
            body: body.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Recorded {
    pub request_line: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

pub struct MockServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(responses: Vec<Canned>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let handle = std::thread::spawn(move || {
            for canned in responses {
                let Ok((stream, _)) = listener.accept() else {
                    return;
                };
                let mut reader = BufReader::new(stream);
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    continue;
                }
                let mut headers = Vec::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap_or(0);
                        }
                        headers.push((k.trim().to_string(), v.trim().to_string()));
                    }
                }
                let mut body = vec![0u8; len];
                let _ = reader.read_exact(&mut body);
                log.lock().unwrap().push(Recorded {
                    request_line: request_line.trim_end().to_string(),
                    headers,
                    body: String::from_utf8_lossy(&body).into_owned(),
                });
                let mut stream = reader.into_inner();
                let mut head = format!(
                    "HTTP/1.1 {} X\r\nContent-Length: {}\r\nConnection: close\r\n",
                    canned.status,
                    canned.body.len()
                );
                for (k, v) in &canned.headers {
                    head.push_str(&format!("{k}: {v}\r\n"));
                }
                head.push_str("\r\n");
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(canned.body.as_bytes());
                let _ = stream.flush();
            }
        });
        MockServer {
            url,
            requests,
            handle: Some(handle),
        }
    }

    pub fn recorded(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }

    /// Wait for the server thread to serve all of its responses.
    pub fn finish(mut self) -> Vec<Recorded> {
        if let Some(h) = self.handle.take() {
            h.join().unwrap();
        }
        self.recorded()
    }
}

/// One of the three question-shaped queries, with cities that may or may
/// not be in the graph.
pub fn shape_query(shape: usize, names: [&str; 3], desc: bool, limit: u64) -> String {
    let hint = QueryTemplateHint::default();
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let base = hint.instantiate(Difficulty::ALL[shape], &names);
    let dir = if desc { "DESC" } else { "ASC" };
    let base = base.replace("ASC(", &format!("{dir}("));
    let base = match base.rfind("\nLIMIT 1") {
        Some(at) => base[..at].to_string(),
        None => base,
    };
    let base = if shape == 1 {
        base.replace("SELECT ?distance", "SELECT ?city ?distance")
    } else {
        base
    };
    if limit > 0 {
        format!("{base}\nLIMIT {limit}")
    } else {
        base
    }
}
