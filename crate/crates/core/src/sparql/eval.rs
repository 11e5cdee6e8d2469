use std::cmp::Ordering;
use std::collections::HashMap;

use super::{BinOp, Direction, Expr, PatternTerm, Query, QueryError, ResultTable, Value};
use crate::graph::SpatialGraph;
use crate::rdf::{city_iri, CITY_CLASS, DESTINATION, DISTANCE, DISTANCE_TO, RDF_TYPE};

/// The graph as the RDF triple set written by the Turtle serializer, with
/// both edge directions and one blank node per directed edge.
#[derive(Debug, Clone, Default)]
pub struct RdfView {
    triples: Vec<[Value; 3]>,
    by_subject: HashMap<Value, Vec<usize>>,
    by_object: HashMap<Value, Vec<usize>>,
    by_predicate: HashMap<Value, Vec<usize>>,
}

impl RdfView {
    pub fn from_graph(gr: &SpatialGraph) -> Self {
        let iri = |k: &crate::geo::CityKey| Value::Iri(city_iri(gr.display_name(k).unwrap_or_default()));
        let mut triples = Vec::new();
        let mut blank = 0usize;
        for a in gr.nodes() {
            let subject = iri(a);
            triples.push([
                subject.clone(),
                Value::Iri(RDF_TYPE.into()),
                Value::Iri(CITY_CLASS.into()),
            ]);
            for (b, d) in gr.neighbors(a).unwrap_or_default() {
                let node = Value::Blank(format!("e{blank}"));
                blank += 1;
                triples.push([subject.clone(), Value::Iri(DISTANCE_TO.into()), node.clone()]);
                triples.push([node.clone(), Value::Iri(DESTINATION.into()), iri(&b)]);
                triples.push([node, Value::Iri(DISTANCE.into()), Value::Integer(d.into())]);
            }
        }
        Self::from_triples(triples)
    }

    pub fn from_triples(triples: Vec<[Value; 3]>) -> Self {
        let mut view = RdfView {
            triples,
            ..Default::default()
        };
        for (i, [s, p, o]) in view.triples.iter().enumerate() {
            view.by_subject.entry(s.clone()).or_default().push(i);
            view.by_predicate.entry(p.clone()).or_default().push(i);
            view.by_object.entry(o.clone()).or_default().push(i);
        }
        view
    }

    pub fn triples(&self) -> &[[Value; 3]] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Evaluate against a graph; builds a fresh [`RdfView`] each call.
pub fn evaluate_query(q: &Query, gr: &SpatialGraph) -> Result<ResultTable, QueryError> {
    evaluate_on_view(q, &RdfView::from_graph(gr))
}

/// A pattern position resolved to either a constant or a binding slot.
#[derive(Clone)]
enum Slot {
    Const(Value),
    Var(usize),
}

type Row = Vec<Option<Value>>;

pub fn evaluate_on_view(q: &Query, view: &RdfView) -> Result<ResultTable, QueryError> {
    // Named variables first (first-appearance order), then blank labels.
    let named = q.pattern_variables();
    let mut slots: Vec<String> = named.clone();
    let mut blanks: Vec<String> = Vec::new();
    for p in &q.patterns {
        for t in [&p.subject, &p.predicate, &p.object] {
            if let PatternTerm::Blank(b) = t {
                if !blanks.contains(b) {
                    blanks.push(b.clone());
                }
            }
        }
    }
    let blank_base = slots.len();
    slots.extend(blanks.iter().cloned());

    let resolve = |t: &PatternTerm| match t {
        PatternTerm::Iri(i) => Slot::Const(Value::Iri(i.clone())),
        PatternTerm::Integer(n) => Slot::Const(Value::Integer(*n)),
        PatternTerm::Var(v) => Slot::Var(named.iter().position(|n| n == v).unwrap_or(0)),
        PatternTerm::Blank(b) => {
            Slot::Var(blank_base + blanks.iter().position(|n| n == b).unwrap_or(0))
        }
    };
    let patterns: Vec<[Slot; 3]> = q
        .patterns
        .iter()
        .map(|p| [resolve(&p.subject), resolve(&p.predicate), resolve(&p.object)])
        .collect();

    let mut rows: Vec<Row> = vec![vec![None; slots.len()]];
    for pat in &patterns {
        let mut next = Vec::new();
        for row in &rows {
            let bound = |s: &Slot| match s {
                Slot::Const(v) => Some(v.clone()),
                Slot::Var(i) => row[*i].clone(),
            };
            let (s, p, o) = (bound(&pat[0]), bound(&pat[1]), bound(&pat[2]));
            let candidates: Box<dyn Iterator<Item = usize>> = if let Some(s) = &s {
                Box::new(view.by_subject.get(s).into_iter().flatten().copied())
            } else if let Some(o) = &o {
                Box::new(view.by_object.get(o).into_iter().flatten().copied())
            } else if let Some(p) = &p {
                Box::new(view.by_predicate.get(p).into_iter().flatten().copied())
            } else {
                Box::new(0..view.triples.len())
            };
            'triple: for i in candidates {
                let triple = &view.triples[i];
                let mut out = row.clone();
                for (slot, value) in pat.iter().zip(triple) {
                    match slot {
                        Slot::Const(c) => {
                            if c != value {
                                continue 'triple;
                            }
                        }
                        Slot::Var(k) => match &out[*k] {
                            Some(existing) if existing != value => continue 'triple,
                            Some(_) => {}
                            None => out[*k] = Some(value.clone()),
                        },
                    }
                }
                next.push(out);
            }
        }
        rows = next;
        if rows.is_empty() {
            break;
        }
    }
    if q.patterns.is_empty() {
        rows.clear();
    }

    let lookup = |row: &Row, name: &str| -> Option<Value> {
        named
            .iter()
            .position(|n| n == name)
            .and_then(|i| row[i].clone())
    };

    let mut kept = Vec::with_capacity(rows.len());
    for row in rows {
        let mut pass = true;
        for f in &q.filters {
            match eval_expr(f, &|v| lookup(&row, v))? {
                Term::Bool(b) => pass &= b,
                _ => return Err(QueryError::TypeError(format!("{f} is not a boolean"))),
            }
        }
        if pass {
            kept.push(row);
        }
    }

    // Canonical order over named variables, so results never depend on
    // index iteration order.
    kept.sort_by(|a, b| a[..named.len()].cmp(&b[..named.len()]));

    if let Some(order) = &q.order_by {
        let mut keyed = Vec::with_capacity(kept.len());
        for row in kept {
            let key = eval_expr(&order.expr, &|v| lookup(&row, v))?;
            keyed.push((key, row));
        }
        keyed.sort_by(|(ka, _), (kb, _)| {
            let ord = ka.cmp(kb);
            match order.direction {
                Direction::Asc => ord,
                Direction::Desc => ord.reverse(),
            }
        });
        kept = keyed.into_iter().map(|(_, r)| r).collect();
    }

    if let Some(n) = q.limit {
        kept.truncate(usize::try_from(n).unwrap_or(usize::MAX));
    }

    let columns = q.projection();
    let rows = kept
        .iter()
        .map(|row| {
            columns
                .iter()
                .map(|c| lookup(row, c).expect("projected variables are bound by patterns"))
                .collect()
        })
        .collect();
    Ok(ResultTable { columns, rows })
}

/// Runtime value of an expression.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Term {
    Bool(bool),
    Val(Value),
}

fn eval_expr(e: &Expr, env: &dyn Fn(&str) -> Option<Value>) -> Result<Term, QueryError> {
    let type_err = || QueryError::TypeError(e.to_string());
    Ok(match e {
        Expr::Var(v) => Term::Val(env(v).ok_or_else(type_err)?),
        Expr::Int(n) => Term::Val(Value::Integer(*n)),
        Expr::Iri(i) => Term::Val(Value::Iri(i.clone())),
        Expr::Abs(inner) => match eval_expr(inner, env)? {
            Term::Val(Value::Integer(n)) => {
                Term::Val(Value::Integer(n.checked_abs().ok_or_else(type_err)?))
            }
            _ => return Err(type_err()),
        },
        Expr::Binary(op, l, r) => {
            let l = eval_expr(l, env)?;
            let r = eval_expr(r, env)?;
            match op {
                BinOp::And | BinOp::Or => match (l, r) {
                    (Term::Bool(a), Term::Bool(b)) => {
                        Term::Bool(if *op == BinOp::And { a && b } else { a || b })
                    }
                    _ => return Err(type_err()),
                },
                BinOp::Add | BinOp::Sub | BinOp::Mul => match (l, r) {
                    (Term::Val(Value::Integer(a)), Term::Val(Value::Integer(b))) => {
                        let v = match op {
                            BinOp::Add => a.checked_add(b),
                            BinOp::Sub => a.checked_sub(b),
                            _ => a.checked_mul(b),
                        };
                        Term::Val(Value::Integer(v.ok_or_else(type_err)?))
                    }
                    _ => return Err(type_err()),
                },
                BinOp::Eq | BinOp::Ne => {
                    let same_kind = matches!(
                        (&l, &r),
                        (Term::Val(Value::Integer(_)), Term::Val(Value::Integer(_)))
                            | (Term::Bool(_), Term::Bool(_))
                            | (
                                Term::Val(Value::Iri(_) | Value::Blank(_)),
                                Term::Val(Value::Iri(_) | Value::Blank(_))
                            )
                    );
                    if !same_kind {
                        return Err(type_err());
                    }
                    Term::Bool((l == r) == (*op == BinOp::Eq))
                }
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => match (l, r) {
                    (Term::Val(Value::Integer(a)), Term::Val(Value::Integer(b))) => {
                        let ord = a.cmp(&b);
                        Term::Bool(match op {
                            BinOp::Lt => ord == Ordering::Less,
                            BinOp::Le => ord != Ordering::Greater,
                            BinOp::Gt => ord == Ordering::Greater,
                            _ => ord != Ordering::Less,
                        })
                    }
                    _ => return Err(type_err()),
                },
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparql::parse_query;

    fn adelaide_graph() -> SpatialGraph {
        let mut g = SpatialGraph::new();
        let a = g.add_city("Adelaide").unwrap();
        for (name, d) in [("Perth", 2135), ("Launceston", 1039), ("Cairns", 2119), ("Ipswich", 1571)] {
            let k = g.add_city(name).unwrap();
            g.insert_edge(&a, &k, d).unwrap();
        }
        g.add_city("Mount Isa").unwrap();
        g
    }

    const P: &str = "PREFIX ns1: <http://example.org/cities#>\n";

    fn run(q: &str, g: &SpatialGraph) -> Result<ResultTable, QueryError> {
        evaluate_query(&parse_query(&format!("{P}{q}"))?, g)
    }

    #[test]
    fn easy_shape() {
        let g = adelaide_graph();
        let t = run(
            "SELECT ?d WHERE { ns1:Adelaide ns1:distanceTo [ ns1:destination ns1:Perth ; ns1:distance ?d ] . }",
            &g,
        )
        .unwrap();
        assert_eq!(t.rows, vec![vec![Value::Integer(2135)]]);
        assert_eq!(t.to_tsv(), "?d\n2135\n");
        // Reverse direction exists too.
        let t = run(
            "SELECT ?d WHERE { ns1:Perth ns1:distanceTo [ ns1:destination ns1:Adelaide ; ns1:distance ?d ] }",
            &g,
        )
        .unwrap();
        assert_eq!(t.rows.len(), 1);
        let unknown = run(
            "SELECT ?d WHERE { ns1:Atlantis ns1:distanceTo [ ns1:destination ns1:Perth ; ns1:distance ?d ] }",
            &g,
        )
        .unwrap();
        assert!(unknown.is_empty());
    }

    #[test]
    fn medium_shape() {
        let g = adelaide_graph();
        let t = run(
            "SELECT ?c ?d WHERE { ns1:Adelaide ns1:distanceTo [ ns1:destination ?c ; ns1:distance ?d ] } ORDER BY ASC(?d) LIMIT 1",
            &g,
        )
        .unwrap();
        assert_eq!(
            t.rows,
            vec![vec![Value::Iri(city_iri("Launceston")), Value::Integer(1039)]]
        );
        let all = run(
            "SELECT ?c WHERE { ns1:Adelaide ns1:distanceTo [ ns1:destination ?c ; ns1:distance ?d ] } ORDER BY DESC(?d)",
            &g,
        )
        .unwrap();
        let names: Vec<String> = all.rows.iter().map(|r| r[0].to_string()).collect();
        assert_eq!(names[0], format!("<{}>", city_iri("Perth")));
        assert_eq!(names.len(), 4);
    }

    #[test]
    fn default_order_and_type_errors() {
        let g = adelaide_graph();
        let t = run("SELECT ?c WHERE { ?c a ns1:City }", &g).unwrap();
        let got: Vec<Value> = t.rows.into_iter().map(|mut r| r.remove(0)).collect();
        let mut sorted = got.clone();
        sorted.sort();
        assert_eq!(got, sorted);
        assert_eq!(got.len(), 6);
        assert!(matches!(
            run("SELECT ?c WHERE { ?c a ns1:City FILTER(?c > 3) }", &g),
            Err(QueryError::TypeError(_))
        ));
        assert!(matches!(
            run("SELECT ?c WHERE { ?c a ns1:City FILTER(?c + 1 = 2) }", &g),
            Err(QueryError::TypeError(_))
        ));
    }

    #[test]
    fn star_never_projects_blanks() {
        let g = adelaide_graph();
        let t = run(
            "SELECT * WHERE { ns1:Adelaide ns1:distanceTo [ ns1:destination ?c ; ns1:distance ?d ] FILTER(?d < 1500) }",
            &g,
        )
        .unwrap();
        assert_eq!(t.columns, vec!["c", "d"]);
        assert_eq!(t.rows.len(), 1);
    }
}
