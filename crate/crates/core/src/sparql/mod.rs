//! A small SPARQL subset evaluated against the distance graph.
//!
//! Supported: `PREFIX` declarations, `SELECT *` or a variable list, a single
//! `WHERE { ... }` group of triple patterns (with `;`, `,` and `[ ... ]`
//! abbreviations), `FILTER(expr)` over integer arithmetic, comparisons,
//! `&&`, `||` and `ABS`, one `ORDER BY` condition and `LIMIT`.
//!
//! Anything recognizably SPARQL but outside that subset (`OPTIONAL`,
//! `GROUP BY`, `DISTINCT`, ...) is rejected with
//! [`QueryError::UnsupportedFeature`] rather than being half-evaluated.

mod eval;
mod extract;
mod lexer;
mod parser;

use std::collections::BTreeMap;
use std::fmt;

use crate::rdf::{format_iri, RDF_TYPE};

pub use eval::{evaluate_query, evaluate_on_view, RdfView};
pub use extract::extract_query_block;
pub use parser::parse_query;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("syntax error at position {position}: expected {expected}")]
    SyntaxError { position: usize, expected: String },
    #[error("unknown prefix `{0}:`")]
    UnknownPrefix(String),
    #[error("unsupported SPARQL feature: {0}")]
    UnsupportedFeature(String),
    #[error("variable ?{0} is not bound by any triple pattern")]
    UnboundVariable(String),
    #[error("type error in expression {0}")]
    TypeError(String),
}

/// A position in a triple pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatternTerm {
    Iri(String),
    Var(String),
    /// Blank node label; behaves as a variable that is never projected.
    Blank(String),
    Integer(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Var(String),
    Int(i64),
    Iri(String),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
}

impl Expr {
    pub fn variables(&self, out: &mut Vec<String>) {
        match self {
            Expr::Var(v) => out.push(v.clone()),
            Expr::Binary(_, l, r) => {
                l.variables(out);
                r.variables(out);
            }
            Expr::Abs(e) => e.variables(out),
            Expr::Int(_) | Expr::Iri(_) => {}
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, prefixes: &BTreeMap<String, String>) -> fmt::Result {
        match self {
            Expr::Var(v) => write!(f, "?{v}"),
            Expr::Int(n) => write!(f, "{n}"),
            Expr::Iri(i) => f.write_str(&format_iri(i, prefixes)),
            Expr::Binary(op, l, r) => {
                f.write_str("(")?;
                l.write(f, prefixes)?;
                write!(f, " {} ", op.symbol())?;
                r.write(f, prefixes)?;
                f.write_str(")")
            }
            Expr::Abs(e) => {
                f.write_str("ABS(")?;
                e.write(f, prefixes)?;
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, &BTreeMap::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderBy {
    pub expr: Expr,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    Star,
    Vars(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub prefixes: BTreeMap<String, String>,
    pub select: Selection,
    pub patterns: Vec<TriplePattern>,
    pub filters: Vec<Expr>,
    pub order_by: Option<OrderBy>,
    pub limit: Option<u64>,
}

impl Query {
    /// Named variables in order of first appearance in the patterns.
    pub fn pattern_variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.patterns {
            for t in [&p.subject, &p.predicate, &p.object] {
                if let PatternTerm::Var(v) = t {
                    if !out.contains(v) {
                        out.push(v.clone());
                    }
                }
            }
        }
        out
    }

    /// Output column names, without the leading `?`.
    pub fn projection(&self) -> Vec<String> {
        match &self.select {
            Selection::Star => self.pattern_variables(),
            Selection::Vars(v) => v.clone(),
        }
    }

    fn write_term(
        &self,
        f: &mut fmt::Formatter<'_>,
        t: &PatternTerm,
        predicate: bool,
    ) -> fmt::Result {
        match t {
            PatternTerm::Iri(i) if predicate && i == RDF_TYPE => f.write_str("a"),
            PatternTerm::Iri(i) => f.write_str(&format_iri(i, &self.prefixes)),
            PatternTerm::Var(v) => write!(f, "?{v}"),
            PatternTerm::Blank(b) => write!(f, "_:{b}"),
            PatternTerm::Integer(n) => write!(f, "{n}"),
        }
    }
}

/// Canonical text form; parsing it yields the same [`Query`].
impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, ns) in &self.prefixes {
            writeln!(f, "PREFIX {p}: <{ns}>")?;
        }
        f.write_str("SELECT")?;
        match &self.select {
            Selection::Star => f.write_str(" *")?,
            Selection::Vars(vs) => {
                for v in vs {
                    write!(f, " ?{v}")?;
                }
            }
        }
        f.write_str(" WHERE {\n")?;
        for p in &self.patterns {
            f.write_str("  ")?;
            self.write_term(f, &p.subject, false)?;
            f.write_str(" ")?;
            self.write_term(f, &p.predicate, true)?;
            f.write_str(" ")?;
            self.write_term(f, &p.object, false)?;
            f.write_str(" .\n")?;
        }
        for e in &self.filters {
            f.write_str("  FILTER(")?;
            e.write(f, &self.prefixes)?;
            f.write_str(")\n")?;
        }
        f.write_str("}")?;
        if let Some(o) = &self.order_by {
            let dir = match o.direction {
                Direction::Asc => "ASC",
                Direction::Desc => "DESC",
            };
            write!(f, "\nORDER BY {dir}(")?;
            o.expr.write(f, &self.prefixes)?;
            f.write_str(")")?;
        }
        if let Some(n) = self.limit {
            write!(f, "\nLIMIT {n}")?;
        }
        Ok(())
    }
}

/// A bound value in a result row.
///
/// Ordering: integers (numerically) before IRIs (lexicographically) before
/// blank nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Integer(i64),
    Iri(String),
    Blank(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Integer(n) => write!(f, "{n}"),
            Value::Iri(i) => write!(f, "<{i}>"),
            Value::Blank(b) => write!(f, "_:{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// SPARQL TSV results: `?var` header, then one tab-separated line per row.
    pub fn to_tsv(&self) -> String {
        let mut out = self
            .columns
            .iter()
            .map(|c| format!("?{c}"))
            .collect::<Vec<_>>()
            .join("\t");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(ToString::to_string).collect();
            out.push_str(&line.join("\t"));
            out.push('\n');
        }
        out
    }
}
