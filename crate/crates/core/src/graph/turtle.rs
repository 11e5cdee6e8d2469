//! Turtle reader/writer for the distance-graph dialect.

use std::collections::BTreeMap;

use super::{GraphError, SpatialGraph};
use crate::geo::CityKey;
use crate::rdf::{
    self, city_iri, display_from_iri, format_iri, CITIES_NS, CITY_CLASS, DESTINATION, DISTANCE,
    DISTANCE_TO, NS_PREFIX, RDF_TYPE,
};

fn default_prefixes() -> BTreeMap<String, String> {
    BTreeMap::from([(NS_PREFIX.to_string(), CITIES_NS.to_string())])
}

/// Serialize the graph. Every undirected edge appears once from each endpoint.
pub fn serialize_turtle(gr: &SpatialGraph) -> String {
    let prefixes = default_prefixes();
    let mut out = format!("@prefix {NS_PREFIX}: <{CITIES_NS}> .\n");

    let mut cities: Vec<(&CityKey, &str)> =
        gr.display.iter().map(|(k, d)| (k, d.as_str())).collect();
    cities.sort_by(|a, b| a.1.cmp(b.1).then_with(|| a.0.cmp(b.0)));

    for (key, display) in cities {
        out.push('\n');
        out.push_str(&format_iri(&city_iri(display), &prefixes));
        out.push_str(" a ns1:City");
        let neighbors = gr.neighbors(key).expect("node exists");
        if neighbors.is_empty() {
            out.push_str(" .\n");
            continue;
        }
        out.push_str(" ;\n    ns1:distanceTo ");
        for (i, (other, km)) in neighbors.iter().enumerate() {
            if i > 0 {
                out.push_str(",\n        ");
            }
            let dest = format_iri(&city_iri(&gr.display[other]), &prefixes);
            out.push_str(&format!("[ ns1:destination {dest} ; ns1:distance {km} ]"));
        }
        out.push_str(" .\n");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    PrefixKw,
    PnameNs(String),
    Iri(String),
    Pname(String, String),
    A,
    Int(u64),
    LBracket,
    RBracket,
    Semi,
    Comma,
    Dot,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, GraphError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let err = |line, message: &str| GraphError::TurtleSyntaxError {
        line,
        message: message.to_string(),
    };
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\n' => {
                line += 1;
                i += 1;
            }
            c if c.is_whitespace() => i += 1,
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '[' => {
                toks.push((Tok::LBracket, line));
                i += 1;
            }
            ']' => {
                toks.push((Tok::RBracket, line));
                i += 1;
            }
            ';' => {
                toks.push((Tok::Semi, line));
                i += 1;
            }
            ',' => {
                toks.push((Tok::Comma, line));
                i += 1;
            }
            '.' => {
                toks.push((Tok::Dot, line));
                i += 1;
            }
            '<' => {
                let (iri, end) =
                    rdf::scan_iriref(&chars, i + 1).ok_or_else(|| err(line, "unterminated IRI"))?;
                toks.push((Tok::Iri(iri), line));
                i = end;
            }
            '@' => {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j].is_ascii_alphabetic() {
                    j += 1;
                }
                let word: String = chars[start..j].iter().collect();
                if word != "prefix" {
                    return Err(err(line, &format!("unsupported directive @{word}")));
                }
                toks.push((Tok::PrefixKw, line));
                i = j;
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let n = s.parse().map_err(|_| err(line, "integer out of range"))?;
                toks.push((Tok::Int(n), line));
            }
            c if c.is_alphabetic() || c == ':' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '-')
                {
                    i += 1;
                }
                let prefix: String = chars[start..i].iter().collect();
                if chars.get(i) == Some(&':') {
                    let (local, end) = rdf::scan_local(&chars, i + 1).map_err(|m| err(line, &m))?;
                    i = end;
                    if local.is_empty() {
                        toks.push((Tok::PnameNs(prefix), line));
                    } else {
                        toks.push((Tok::Pname(prefix, local), line));
                    }
                } else if prefix == "a" {
                    toks.push((Tok::A, line));
                } else {
                    return Err(err(line, &format!("unexpected word `{prefix}`")));
                }
            }
            other => return Err(err(line, &format!("unexpected character `{other}`"))),
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    prefixes: BTreeMap<String, String>,
    last_line: usize,
}

enum Object {
    Iri(String),
    Int(u64),
    Blank(Vec<(String, Object)>),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).map(|&(_, l)| l).unwrap_or(self.last_line)
    }

    fn err(&self, message: impl Into<String>) -> GraphError {
        GraphError::TurtleSyntaxError {
            line: self.line(),
            message: message.into(),
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), GraphError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn resolve(&self, prefix: &str, local: &str) -> Result<String, GraphError> {
        self.prefixes
            .get(prefix)
            .map(|ns| format!("{ns}{local}"))
            .ok_or_else(|| self.err(format!("undeclared prefix `{prefix}:`")))
    }

    fn iri(&mut self) -> Result<String, GraphError> {
        match self.next() {
            Some(Tok::Iri(i)) => Ok(i),
            Some(Tok::Pname(p, l)) => self.resolve(&p, &l),
            _ => {
                self.pos -= 1;
                Err(self.err("expected IRI"))
            }
        }
    }

    fn verb(&mut self) -> Result<String, GraphError> {
        if self.peek() == Some(&Tok::A) {
            self.pos += 1;
            return Ok(RDF_TYPE.to_string());
        }
        self.iri()
    }

    fn object(&mut self) -> Result<Object, GraphError> {
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(Object::Int(n))
            }
            Some(Tok::LBracket) => {
                self.pos += 1;
                let props = self.predicate_objects()?;
                self.expect(Tok::RBracket, "`]`")?;
                Ok(Object::Blank(props))
            }
            _ => Ok(Object::Iri(self.iri()?)),
        }
    }

    fn predicate_objects(&mut self) -> Result<Vec<(String, Object)>, GraphError> {
        let mut out = Vec::new();
        loop {
            let verb = self.verb()?;
            loop {
                out.push((verb.clone(), self.object()?));
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            if self.peek() == Some(&Tok::Semi) {
                self.pos += 1;
                if matches!(self.peek(), Some(Tok::Dot | Tok::RBracket)) {
                    break;
                }
            } else {
                break;
            }
        }
        Ok(out)
    }
}

/// Parse a document in the dialect written by [`serialize_turtle`].
///
/// Edges listed in only one direction are symmetrized; edges whose two
/// directions disagree are rejected.
pub fn parse_turtle(text: &str) -> Result<SpatialGraph, GraphError> {
    let toks = lex(text)?;
    let last_line = toks.last().map(|&(_, l)| l).unwrap_or(1);
    let mut p = Parser {
        toks,
        pos: 0,
        prefixes: BTreeMap::new(),
        last_line,
    };

    while p.peek() == Some(&Tok::PrefixKw) {
        p.pos += 1;
        let name = match p.next() {
            Some(Tok::PnameNs(n)) => n,
            _ => {
                p.pos -= 1;
                return Err(p.err("expected prefix name"));
            }
        };
        let ns = match p.next() {
            Some(Tok::Iri(i)) => i,
            _ => {
                p.pos -= 1;
                return Err(p.err("expected namespace IRI"));
            }
        };
        p.expect(Tok::Dot, "`.` after prefix")?;
        p.prefixes.insert(name, ns);
    }
    if p.prefixes.is_empty() {
        return Err(p.err("document must start with an @prefix declaration"));
    }

    let mut graph = SpatialGraph::new();
    let mut directed: BTreeMap<(CityKey, CityKey), u32> = BTreeMap::new();

    while p.peek().is_some() {
        let subject_line = p.line();
        let subject = p.iri()?;
        let props = p.predicate_objects()?;
        p.expect(Tok::Dot, "`.` ending statement")?;

        let at = |message: String| GraphError::TurtleSyntaxError {
            line: subject_line,
            message,
        };
        let city = |graph: &mut SpatialGraph, iri: &str| -> Result<CityKey, GraphError> {
            let display =
                display_from_iri(iri).ok_or_else(|| at(format!("not a city IRI: <{iri}>")))?;
            graph.add_city(&display)
        };
        let s = city(&mut graph, &subject)?;
        for (pred, obj) in props {
            match (pred.as_str(), obj) {
                (RDF_TYPE, Object::Iri(class)) if class == CITY_CLASS => {}
                (DISTANCE_TO, Object::Blank(inner)) => {
                    let mut dest = None;
                    let mut km = None;
                    for (ip, io) in inner {
                        match (ip.as_str(), io) {
                            (DESTINATION, Object::Iri(d)) if dest.is_none() => dest = Some(d),
                            (DISTANCE, Object::Int(n)) if km.is_none() => km = Some(n),
                            (other, _) => {
                                return Err(at(format!("unexpected property <{other}> in distanceTo")))
                            }
                        }
                    }
                    let (Some(dest), Some(km)) = (dest, km) else {
                        return Err(at("distanceTo needs destination and distance".into()));
                    };
                    let km = u32::try_from(km).map_err(|_| at("distance out of range".into()))?;
                    let d = city(&mut graph, &dest)?;
                    if d == s {
                        return Err(GraphError::SelfEdge(s));
                    }
                    if let Some(prev) = directed.insert((s.clone(), d.clone()), km) {
                        if prev != km {
                            return Err(GraphError::ConflictingDistance(s, d));
                        }
                    }
                }
                (other, _) => return Err(at(format!("unsupported statement with predicate <{other}>"))),
            }
        }
    }

    for ((a, b), km) in &directed {
        if let Some(&back) = directed.get(&(b.clone(), a.clone())) {
            if back != *km {
                let (x, y) = if a < b { (a, b) } else { (b, a) };
                return Err(GraphError::ConflictingDistance(x.clone(), y.clone()));
            }
        }
        graph.insert_edge(a, b, *km)?;
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adelaide_graph() -> SpatialGraph {
        let mut g = SpatialGraph::new();
        let a = g.add_city("Adelaide").unwrap();
        for (n, d) in [("Perth", 2135), ("Launceston", 1039), ("Cairns", 2119), ("Ipswich", 1571)] {
            let k = g.add_city(n).unwrap();
            g.insert_edge(&a, &k, d).unwrap();
        }
        g.add_city("Mount Isa").unwrap();
        g
    }

    #[test]
    fn writes_adelaide_block() {
        let ttl = serialize_turtle(&adelaide_graph());
        assert!(ttl.starts_with("@prefix ns1: <http://example.org/cities#> .\n"));
        assert!(ttl.contains("\nns1:Adelaide a ns1:City ;\n"));
        assert!(ttl.contains("[ ns1:destination ns1:Perth ; ns1:distance 2135 ]"));
        assert!(ttl.contains("ns1:Mount_Isa a ns1:City .\n"));
        // ascending by distance
        let l = ttl.find("ns1:Launceston ; ns1:distance 1039").unwrap();
        let i = ttl.find("ns1:Ipswich ; ns1:distance 1571").unwrap();
        assert!(l < i);
        assert_eq!(parse_turtle(&ttl).unwrap(), adelaide_graph());
    }

    #[test]
    fn empty_graph_is_prefix_only() {
        let ttl = serialize_turtle(&SpatialGraph::new());
        assert_eq!(ttl, "@prefix ns1: <http://example.org/cities#> .\n");
        assert_eq!(parse_turtle(&ttl).unwrap(), SpatialGraph::new());
    }

    #[test]
    fn conflicting_directions() {
        let doc = "@prefix ns1: <http://example.org/cities#> .\n\
                   ns1:A ns1:distanceTo [ ns1:destination ns1:B ; ns1:distance 5 ] .\n\
                   ns1:B ns1:distanceTo [ ns1:destination ns1:A ; ns1:distance 6 ] .\n";
        assert!(matches!(parse_turtle(doc), Err(GraphError::ConflictingDistance(_, _))));
    }

    #[test]
    fn one_direction_is_symmetrized() {
        let doc = "@prefix ns1: <http://example.org/cities#> .\n\
                   ns1:A ns1:distanceTo [ ns1:destination ns1:B ; ns1:distance 5 ] .\n";
        let g = parse_turtle(doc).unwrap();
        assert_eq!(
            g.edge_distance(&CityKey::from_name("B"), &CityKey::from_name("A")).unwrap(),
            Some(5)
        );
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(parse_turtle(""), Err(GraphError::TurtleSyntaxError { .. })));
        let doc = "@prefix ns1: <http://example.org/cities#> .\nns1:A a ns1:City\n";
        match parse_turtle(doc) {
            Err(GraphError::TurtleSyntaxError { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let doc = "@prefix ns1: <http://example.org/cities#> .\nfoo:A a ns1:City .\n";
        assert!(parse_turtle(doc).is_err());
    }

    #[test]
    fn escaped_region_names() {
        let mut g = SpatialGraph::new();
        let a = g.add_city("Newcastle, NSW").unwrap();
        let b = g.add_city("Mount Isa, QLD").unwrap();
        g.insert_edge(&a, &b, 1900).unwrap();
        let ttl = serialize_turtle(&g);
        assert!(ttl.contains("ns1:Newcastle\\,_NSW a ns1:City"));
        assert_eq!(parse_turtle(&ttl).unwrap(), g);
    }
}
