use super::QueryError;
use crate::rdf;

#[derive(Debug, Clone, PartialEq)]
pub(super) enum Tok {
    /// Bare word: keyword, `a`, or something unexpected.
    Word(String),
    Var(String),
    Iri(String),
    Pname(String, String),
    PnameNs(String),
    Blank(String),
    Int(i64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Dot,
    Semi,
    Comma,
    Star,
    Plus,
    Minus,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

/// Words that belong to SPARQL but not to the supported subset.
const UNSUPPORTED: &[&str] = &[
    "OPTIONAL", "UNION", "MINUS", "GROUP", "HAVING", "DISTINCT", "REDUCED", "OFFSET", "BIND",
    "VALUES", "SERVICE", "GRAPH", "FROM", "NAMED", "CONSTRUCT", "ASK", "DESCRIBE", "COUNT", "SUM",
    "AVG", "MIN", "MAX", "SAMPLE", "GROUP_CONCAT", "INSERT", "DELETE", "LOAD", "CLEAR", "DROP",
    "CREATE", "BASE", "EXISTS", "NOT", "IN", "STR", "REGEX", "LANG", "DATATYPE", "BOUND", "IF",
    "COALESCE", "CONCAT", "STRLEN", "CONTAINS", "ROUND", "FLOOR", "CEIL", "AS", "WITH", "USING",
];

#[derive(Debug)]
pub(super) struct Lexed {
    pub toks: Vec<(Tok, usize)>,
    pub end: usize,
}

fn syntax(position: usize, expected: &str) -> QueryError {
    QueryError::SyntaxError {
        position,
        expected: expected.to_string(),
    }
}

pub(super) fn lex(text: &str) -> Result<Lexed, QueryError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let two = chars.get(i + 1).copied();
        let tok = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '.' => Tok::Dot,
            ';' => Tok::Semi,
            ',' => Tok::Comma,
            '*' => Tok::Star,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '=' => Tok::Eq,
            '!' if two == Some('=') => {
                i += 2;
                toks.push((Tok::Ne, start));
                continue;
            }
            '&' if two == Some('&') => {
                i += 2;
                toks.push((Tok::And, start));
                continue;
            }
            '|' if two == Some('|') => {
                i += 2;
                toks.push((Tok::Or, start));
                continue;
            }
            '>' if two == Some('=') => {
                i += 2;
                toks.push((Tok::Ge, start));
                continue;
            }
            '>' => Tok::Gt,
            '<' => {
                if let Some((iri, end)) = rdf::scan_iriref(&chars, i + 1) {
                    i = end;
                    toks.push((Tok::Iri(iri), start));
                    continue;
                }
                if two == Some('=') {
                    i += 2;
                    toks.push((Tok::Le, start));
                    continue;
                }
                Tok::Lt
            }
            '?' | '$' => {
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                if j == i + 1 {
                    return Err(syntax(start, "variable name"));
                }
                toks.push((Tok::Var(chars[i + 1..j].iter().collect()), start));
                i = j;
                continue;
            }
            '_' if two == Some(':') => {
                let (label, end) =
                    rdf::scan_local(&chars, i + 2).map_err(|_| syntax(start, "blank node label"))?;
                if label.is_empty() {
                    return Err(syntax(start, "blank node label"));
                }
                toks.push((Tok::Blank(label), start));
                i = end;
                continue;
            }
            '"' | '\'' => return Err(QueryError::UnsupportedFeature("string literal".into())),
            '/' | '|' | '^' => {
                return Err(QueryError::UnsupportedFeature(format!("operator `{c}`")));
            }
            '!' => return Err(QueryError::UnsupportedFeature("operator `!`".into())),
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if chars.get(j) == Some(&'.') && chars.get(j + 1).is_some_and(char::is_ascii_digit) {
                    return Err(QueryError::UnsupportedFeature("decimal literal".into()));
                }
                let s: String = chars[i..j].iter().collect();
                let n = s.parse().map_err(|_| syntax(start, "integer within range"))?;
                toks.push((Tok::Int(n), start));
                i = j;
                continue;
            }
            c if c.is_alphabetic() || c == ':' => {
                let mut j = i;
                while j < chars.len()
                    && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '-')
                {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                if chars.get(j) == Some(&':') {
                    let (local, end) = rdf::scan_local(&chars, j + 1)
                        .map_err(|_| syntax(start, "valid local name"))?;
                    toks.push((
                        if local.is_empty() {
                            Tok::PnameNs(word)
                        } else {
                            Tok::Pname(word, local)
                        },
                        start,
                    ));
                    i = end;
                    continue;
                }
                let upper = word.to_ascii_uppercase();
                if UNSUPPORTED.contains(&upper.as_str()) {
                    return Err(QueryError::UnsupportedFeature(upper));
                }
                toks.push((Tok::Word(word), start));
                i = j;
                continue;
            }
            _ => return Err(syntax(start, "a SPARQL token")),
        };
        toks.push((tok, start));
        i += 1;
    }
    Ok(Lexed {
        toks,
        end: chars.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iri_versus_less_than() {
        let l = lex("FILTER(?d < 5 && ?x <= ?y) <http://a.org/b>").unwrap();
        let toks: Vec<Tok> = l.toks.into_iter().map(|(t, _)| t).collect();
        assert!(toks.contains(&Tok::Lt));
        assert!(toks.contains(&Tok::Le));
        assert!(toks.contains(&Tok::Iri("http://a.org/b".into())));
    }

    #[test]
    fn prefixed_names_and_unsupported() {
        let l = lex("ns1:Mount_Isa\\,_QLD ns1: _:b0 .").unwrap();
        assert_eq!(l.toks[0].0, Tok::Pname("ns1".into(), "Mount_Isa,_QLD".into()));
        assert_eq!(l.toks[1].0, Tok::PnameNs("ns1".into()));
        assert_eq!(l.toks[2].0, Tok::Blank("b0".into()));
        assert_eq!(l.toks[3].0, Tok::Dot);
        assert_eq!(
            lex("optional { }").unwrap_err(),
            QueryError::UnsupportedFeature("OPTIONAL".into())
        );
        assert!(matches!(lex("\"x\""), Err(QueryError::UnsupportedFeature(_))));
    }
}
