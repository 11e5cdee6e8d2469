use std::collections::BTreeMap;

use super::lexer::{lex, Tok};
use super::{
    BinOp, Direction, Expr, OrderBy, PatternTerm, Query, QueryError, Selection, TriplePattern,
};
use crate::rdf::RDF_TYPE;

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    prefixes: BTreeMap<String, String>,
    patterns: Vec<TriplePattern>,
    filters: Vec<Expr>,
    fresh: usize,
}

/// Parse query text into a [`Query`]; blank-node property lists become
/// fresh `_:genN` blank references.
pub fn parse_query(text: &str) -> Result<Query, QueryError> {
    let lexed = lex(text)?;
    let mut p = Parser {
        toks: lexed.toks,
        pos: 0,
        end: lexed.end,
        prefixes: BTreeMap::new(),
        patterns: Vec::new(),
        filters: Vec::new(),
        fresh: 0,
    };
    p.query()
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn position(&self) -> usize {
        self.toks.get(self.pos).map(|&(_, p)| p).unwrap_or(self.end)
    }

    fn err(&self, expected: &str) -> QueryError {
        QueryError::SyntaxError {
            position: self.position(),
            expected: expected.to_string(),
        }
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), QueryError> {
        if self.eat(&t) {
            Ok(())
        } else {
            Err(self.err(what))
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.err(kw))
        }
    }

    fn resolve(&self, prefix: &str, local: &str) -> Result<String, QueryError> {
        self.prefixes
            .get(prefix)
            .map(|ns| format!("{ns}{local}"))
            .ok_or_else(|| QueryError::UnknownPrefix(prefix.to_string()))
    }

    fn fresh_blank(&mut self) -> PatternTerm {
        let b = PatternTerm::Blank(format!("gen{}", self.fresh));
        self.fresh += 1;
        b
    }

    fn query(&mut self) -> Result<Query, QueryError> {
        while self.eat_keyword("PREFIX") {
            let name = match self.bump() {
                Some(Tok::PnameNs(n)) => n,
                _ => {
                    self.pos -= 1;
                    return Err(self.err("prefix name such as `ns1:`"));
                }
            };
            let ns = match self.bump() {
                Some(Tok::Iri(i)) => i,
                _ => {
                    self.pos -= 1;
                    return Err(self.err("namespace IRI"));
                }
            };
            self.prefixes.insert(name, ns);
        }

        self.expect_keyword("SELECT")?;
        let select = if self.eat(&Tok::Star) {
            Selection::Star
        } else {
            let mut vars = Vec::new();
            while let Some(Tok::Var(v)) = self.peek() {
                vars.push(v.clone());
                self.pos += 1;
            }
            if vars.is_empty() {
                return Err(self.err("`*` or a variable list"));
            }
            Selection::Vars(vars)
        };

        self.eat_keyword("WHERE");
        self.expect(Tok::LBrace, "`{`")?;
        self.group()?;
        self.expect(Tok::RBrace, "`}`")?;

        let mut order_by = None;
        if self.eat_keyword("ORDER") {
            self.expect_keyword("BY")?;
            order_by = Some(self.order_condition()?);
            if self.at_keyword("ASC")
                || self.at_keyword("DESC")
                || matches!(self.peek(), Some(Tok::Var(_) | Tok::LParen))
            {
                return Err(QueryError::UnsupportedFeature(
                    "multiple ORDER BY conditions".into(),
                ));
            }
        }
        let mut limit = None;
        if self.eat_keyword("LIMIT") {
            match self.bump() {
                Some(Tok::Int(n)) if n > 0 => limit = Some(n as u64),
                _ => {
                    self.pos -= 1;
                    return Err(self.err("positive LIMIT"));
                }
            }
        }
        if self.peek().is_some() {
            return Err(self.err("end of query"));
        }

        let query = Query {
            prefixes: std::mem::take(&mut self.prefixes),
            select,
            patterns: std::mem::take(&mut self.patterns),
            filters: std::mem::take(&mut self.filters),
            order_by,
            limit,
        };
        validate(&query)?;
        Ok(query)
    }

    fn group(&mut self) -> Result<(), QueryError> {
        loop {
            match self.peek() {
                Some(Tok::RBrace) | None => return Ok(()),
                Some(Tok::Dot) => {
                    self.pos += 1;
                }
                Some(Tok::LBrace) => return Err(QueryError::UnsupportedFeature("nested group".into())),
                _ if self.at_keyword("FILTER") => {
                    self.pos += 1;
                    self.expect(Tok::LParen, "`(` after FILTER")?;
                    let e = self.expr()?;
                    self.expect(Tok::RParen, "`)` closing FILTER")?;
                    self.filters.push(e);
                }
                _ => {
                    self.triples_same_subject()?;
                    if !matches!(self.peek(), Some(Tok::Dot | Tok::RBrace)) && !self.at_keyword("FILTER")
                    {
                        return Err(self.err("`.` between triple patterns"));
                    }
                }
            }
        }
    }

    fn triples_same_subject(&mut self) -> Result<(), QueryError> {
        if self.eat(&Tok::LBracket) {
            let subject = self.fresh_blank();
            if !self.eat(&Tok::RBracket) {
                self.property_list(&subject)?;
                self.expect(Tok::RBracket, "`]`")?;
            }
            if self.at_verb() {
                self.property_list(&subject)?;
            }
            return Ok(());
        }
        let subject = match self.bump() {
            Some(Tok::Var(v)) => PatternTerm::Var(v),
            Some(Tok::Iri(i)) => PatternTerm::Iri(i),
            Some(Tok::Pname(p, l)) => PatternTerm::Iri(self.resolve(&p, &l)?),
            Some(Tok::PnameNs(p)) => PatternTerm::Iri(self.resolve(&p, "")?),
            Some(Tok::Blank(b)) => PatternTerm::Blank(b),
            _ => {
                self.pos -= 1;
                return Err(self.err("triple pattern subject"));
            }
        };
        self.property_list(&subject)
    }

    fn at_verb(&self) -> bool {
        match self.peek() {
            Some(Tok::Var(_) | Tok::Iri(_) | Tok::Pname(..) | Tok::PnameNs(_)) => true,
            Some(Tok::Word(w)) => w == "a",
            _ => false,
        }
    }

    fn verb(&mut self) -> Result<PatternTerm, QueryError> {
        match self.bump() {
            Some(Tok::Word(w)) if w == "a" => Ok(PatternTerm::Iri(RDF_TYPE.to_string())),
            Some(Tok::Var(v)) => Ok(PatternTerm::Var(v)),
            Some(Tok::Iri(i)) => Ok(PatternTerm::Iri(i)),
            Some(Tok::Pname(p, l)) => Ok(PatternTerm::Iri(self.resolve(&p, &l)?)),
            Some(Tok::PnameNs(p)) => Ok(PatternTerm::Iri(self.resolve(&p, "")?)),
            _ => {
                self.pos -= 1;
                Err(self.err("predicate"))
            }
        }
    }

    fn property_list(&mut self, subject: &PatternTerm) -> Result<(), QueryError> {
        loop {
            let verb = self.verb()?;
            loop {
                self.object(subject, &verb)?;
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            if !self.eat(&Tok::Semi) {
                return Ok(());
            }
            while self.eat(&Tok::Semi) {}
            if !self.at_verb() {
                return Ok(());
            }
        }
    }

    fn object(&mut self, subject: &PatternTerm, verb: &PatternTerm) -> Result<(), QueryError> {
        let object = match self.bump() {
            Some(Tok::Var(v)) => PatternTerm::Var(v),
            Some(Tok::Iri(i)) => PatternTerm::Iri(i),
            Some(Tok::Pname(p, l)) => PatternTerm::Iri(self.resolve(&p, &l)?),
            Some(Tok::PnameNs(p)) => PatternTerm::Iri(self.resolve(&p, "")?),
            Some(Tok::Blank(b)) => PatternTerm::Blank(b),
            Some(Tok::Int(n)) => PatternTerm::Integer(n),
            Some(Tok::LBracket) => {
                let blank = self.fresh_blank();
                self.patterns.push(TriplePattern {
                    subject: subject.clone(),
                    predicate: verb.clone(),
                    object: blank.clone(),
                });
                if !self.eat(&Tok::RBracket) {
                    self.property_list(&blank)?;
                    self.expect(Tok::RBracket, "`]`")?;
                }
                return Ok(());
            }
            _ => {
                self.pos -= 1;
                return Err(self.err("object"));
            }
        };
        self.patterns.push(TriplePattern {
            subject: subject.clone(),
            predicate: verb.clone(),
            object,
        });
        Ok(())
    }

    fn order_condition(&mut self) -> Result<OrderBy, QueryError> {
        let direction = if self.eat_keyword("DESC") {
            Some(Direction::Desc)
        } else if self.eat_keyword("ASC") {
            Some(Direction::Asc)
        } else {
            None
        };
        let expr = match (direction, self.peek()) {
            (None, Some(Tok::Var(v))) => {
                let v = v.clone();
                self.pos += 1;
                Expr::Var(v)
            }
            _ => {
                self.expect(Tok::LParen, "`(` in ORDER BY")?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)` in ORDER BY")?;
                e
            }
        };
        Ok(OrderBy {
            expr,
            direction: direction.unwrap_or(Direction::Asc),
        })
    }

    fn expr(&mut self) -> Result<Expr, QueryError> {
        let mut lhs = self.and_expr()?;
        while self.eat(&Tok::Or) {
            let rhs = self.and_expr()?;
            lhs = Expr::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, QueryError> {
        let mut lhs = self.relational()?;
        while self.eat(&Tok::And) {
            let rhs = self.relational()?;
            lhs = Expr::Binary(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn relational(&mut self) -> Result<Expr, QueryError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Some(Tok::Eq) => BinOp::Eq,
            Some(Tok::Ne) => BinOp::Ne,
            Some(Tok::Lt) => BinOp::Lt,
            Some(Tok::Le) => BinOp::Le,
            Some(Tok::Gt) => BinOp::Gt,
            Some(Tok::Ge) => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.additive()?;
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<Expr, QueryError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, QueryError> {
        let mut lhs = self.primary()?;
        while self.eat(&Tok::Star) {
            let rhs = self.primary()?;
            lhs = Expr::Binary(BinOp::Mul, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> Result<Expr, QueryError> {
        match self.bump() {
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Var(v)) => Ok(Expr::Var(v)),
            Some(Tok::Int(n)) => Ok(Expr::Int(n)),
            Some(Tok::Iri(i)) => Ok(Expr::Iri(i)),
            Some(Tok::Pname(p, l)) => Ok(Expr::Iri(self.resolve(&p, &l)?)),
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("ABS") => {
                self.expect(Tok::LParen, "`(` after ABS")?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)` closing ABS")?;
                Ok(Expr::Abs(Box::new(e)))
            }
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("true") || w.eq_ignore_ascii_case("false") => {
                Err(QueryError::UnsupportedFeature("boolean literal".into()))
            }
            Some(Tok::Word(w)) if self.peek() == Some(&Tok::LParen) => {
                Err(QueryError::UnsupportedFeature(format!("function {w}")))
            }
            _ => {
                self.pos -= 1;
                Err(self.err("expression"))
            }
        }
    }
}

fn validate(q: &Query) -> Result<(), QueryError> {
    let bound = q.pattern_variables();
    let mut used = Vec::new();
    if let Selection::Vars(vs) = &q.select {
        used.extend(vs.iter().cloned());
    }
    for f in &q.filters {
        f.variables(&mut used);
    }
    if let Some(o) = &q.order_by {
        o.expr.variables(&mut used);
    }
    match used.into_iter().find(|v| !bound.contains(v)) {
        Some(v) => Err(QueryError::UnboundVariable(v)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdf::{CITIES_NS, DESTINATION, DISTANCE, DISTANCE_TO};

    const EASY: &str = "PREFIX ns1: <http://example.org/cities#> SELECT ?d WHERE { ns1:Adelaide ns1:distanceTo [ ns1:destination ns1:Perth ; ns1:distance ?d ] . }";

    #[test]
    fn desugars_blank_property_list() {
        let q = parse_query(EASY).unwrap();
        assert_eq!(q.patterns.len(), 3);
        assert_eq!(q.prefixes["ns1"], CITIES_NS);
        let b = PatternTerm::Blank("gen0".into());
        assert_eq!(
            q.patterns[0],
            TriplePattern {
                subject: PatternTerm::Iri(format!("{CITIES_NS}Adelaide")),
                predicate: PatternTerm::Iri(DISTANCE_TO.into()),
                object: b.clone(),
            }
        );
        assert_eq!(q.patterns[1].predicate, PatternTerm::Iri(DESTINATION.into()));
        assert_eq!(q.patterns[1].subject, b);
        assert_eq!(q.patterns[2].predicate, PatternTerm::Iri(DISTANCE.into()));
        assert_eq!(q.patterns[2].object, PatternTerm::Var("d".into()));
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(parse_query(""), Err(QueryError::SyntaxError { .. })));
        assert!(matches!(
            parse_query("SELECT ?x WHERE { ?x ?p ?o OPTIONAL { ?x ?p ?y } }"),
            Err(QueryError::UnsupportedFeature(_))
        ));
        assert!(matches!(
            parse_query("SELECT ?x WHERE { ?x ?p ?o } GROUP BY ?x"),
            Err(QueryError::UnsupportedFeature(_))
        ));
        assert_eq!(
            parse_query("SELECT ?x WHERE { ?x foo:bar ?o }"),
            Err(QueryError::UnknownPrefix("foo".into()))
        );
        assert_eq!(
            parse_query("SELECT ?y WHERE { ?x ?p ?o }"),
            Err(QueryError::UnboundVariable("y".into()))
        );
        assert!(matches!(
            parse_query("SELECT ?x WHERE { ?x ?p ?o } LIMIT 0"),
            Err(QueryError::SyntaxError { .. })
        ));
        assert!(matches!(
            parse_query("SELECT ?x WHERE { ?x ?p ?o ?q ?r }"),
            Err(QueryError::SyntaxError { .. })
        ));
    }

    #[test]
    fn keywords_case_insensitive_and_modifiers() {
        let q = parse_query(
            "prefix ns1: <http://example.org/cities#>\n\
             select ?c ?d where { ns1:Adelaide ns1:distanceTo [ ns1:destination ?c ; ns1:distance ?d ] }\n\
             order by desc(?d) limit 2",
        )
        .unwrap();
        assert_eq!(q.limit, Some(2));
        let o = q.order_by.unwrap();
        assert_eq!(o.direction, Direction::Desc);
        assert_eq!(o.expr, Expr::Var("d".into()));
    }

    #[test]
    fn expression_precedence() {
        let q = parse_query("SELECT * WHERE { ?a ?p ?b . ?b ?q ?c FILTER(?a = ?b || ?c > 1 + 2 * 3 && ABS(?c - 4) <= 2) }").unwrap();
        let printed = q.filters[0].to_string();
        assert_eq!(printed, "((?a = ?b) || ((?c > (1 + (2 * 3))) && (ABS((?c - 4)) <= 2)))");
    }

    #[test]
    fn print_parse_stable() {
        let texts = [
            EASY,
            "PREFIX ns1: <http://example.org/cities#> SELECT ?city WHERE { ns1:A ns1:distanceTo [ ns1:destination ns1:B ; ns1:distance ?x ] . ns1:C ns1:distanceTo [ ns1:destination ?city ; ns1:distance ?d ] . FILTER(?city != ns1:A && ?city != ns1:B) } ORDER BY ASC(ABS(?d - ?x)) LIMIT 1",
            "SELECT * WHERE { ?s a <http://example.org/cities#City> ; <http://example.org/cities#distanceTo> _:e , [ ] }",
        ];
        for t in texts {
            let q = parse_query(t).unwrap();
            let again = parse_query(&q.to_string()).unwrap();
            assert_eq!(again, q, "printed:\n{q}");
        }
    }
}
