//! IRI naming shared by the Turtle writer/reader and the SPARQL engine.
//!
//! A city with display name `"Mount Isa, QLD"` is the IRI
//! `http://example.org/cities#Mount_Isa,_QLD`, written in prefixed form as
//! `ns1:Mount_Isa\,_QLD`.

use std::collections::BTreeMap;

pub const CITIES_NS: &str = "http://example.org/cities#";
pub const NS_PREFIX: &str = "ns1";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

pub const CITY_CLASS: &str = "http://example.org/cities#City";
pub const DISTANCE_TO: &str = "http://example.org/cities#distanceTo";
pub const DESTINATION: &str = "http://example.org/cities#destination";
pub const DISTANCE: &str = "http://example.org/cities#distance";

/// Characters that may appear backslash-escaped in a prefixed local name.
const LOCAL_ESCAPES: &str = "~.-!$&'()*+,;=/?#@%";

pub fn city_iri(display: &str) -> String {
    format!("{CITIES_NS}{}", display.replace(' ', "_"))
}

/// Inverse of [`city_iri`]; `None` for IRIs outside the cities namespace.
pub fn display_from_iri(iri: &str) -> Option<String> {
    iri.strip_prefix(CITIES_NS)
        .filter(|l| !l.is_empty())
        .map(|l| l.replace('_', " "))
}

/// Escape a local name for prefixed-name syntax, or `None` when some
/// character cannot be written that way.
pub fn escape_local(local: &str) -> Option<String> {
    if local.is_empty() {
        return None;
    }
    let mut out = String::with_capacity(local.len() + 4);
    for (i, c) in local.chars().enumerate() {
        if c.is_alphanumeric() || c == '_' || (c == '-' && i > 0) || (c == ':' && i > 0) {
            out.push(c);
        } else if LOCAL_ESCAPES.contains(c) {
            out.push('\\');
            out.push(c);
        } else {
            return None;
        }
    }
    Some(out)
}

/// Render `iri` with the longest matching prefix, falling back to `<iri>`.
pub fn format_iri(iri: &str, prefixes: &BTreeMap<String, String>) -> String {
    prefixes
        .iter()
        .filter(|(_, ns)| iri.starts_with(ns.as_str()) && iri.len() > ns.len())
        .max_by_key(|(_, ns)| ns.len())
        .and_then(|(p, ns)| escape_local(&iri[ns.len()..]).map(|l| format!("{p}:{l}")))
        .unwrap_or_else(|| format!("<{iri}>"))
}

/// Scan a prefixed-name local part starting at `start`. Returns the unescaped
/// local name and the index one past its end. Stops before a trailing `.`.
pub(crate) fn scan_local(chars: &[char], start: usize) -> Result<(String, usize), String> {
    let mut out = String::new();
    let mut i = start;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphanumeric() || c == '_' || c == '-' || c == ':' {
            out.push(c);
            i += 1;
        } else if c == '\\' {
            match chars.get(i + 1) {
                Some(&e) if LOCAL_ESCAPES.contains(e) => {
                    out.push(e);
                    i += 2;
                }
                _ => return Err("invalid escape in local name".into()),
            }
        } else if c == '.' && chars.get(i + 1).is_some_and(|n| is_local_continue(*n)) {
            out.push('.');
            i += 1;
        } else {
            break;
        }
    }
    Ok((out, i))
}

fn is_local_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == ':' || c == '\\'
}

/// Scan an IRI reference body after its opening `<`. Returns the IRI and the
/// index one past the closing `>`.
pub(crate) fn scan_iriref(chars: &[char], start: usize) -> Option<(String, usize)> {
    let mut iri = String::new();
    for (off, &c) in chars[start..].iter().enumerate() {
        match c {
            '>' => return Some((iri, start + off + 1)),
            c if c.is_whitespace() || "<\"{}|^`\\".contains(c) => return None,
            c => iri.push(c),
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escape_round_trip() {
        let local = "Mount_Isa,_QLD";
        let esc = escape_local(local).unwrap();
        assert_eq!(esc, "Mount_Isa\\,_QLD");
        let chars: Vec<char> = format!("{esc} .").chars().collect();
        let (back, end) = scan_local(&chars, 0).unwrap();
        assert_eq!(back, local);
        assert_eq!(end, esc.chars().count());
    }

    #[test]
    fn iri_naming() {
        assert_eq!(city_iri("Mount Isa"), "http://example.org/cities#Mount_Isa");
        assert_eq!(display_from_iri(&city_iri("Newcastle, NSW")).unwrap(), "Newcastle, NSW");
        assert!(display_from_iri("http://other.org/x").is_none());
        let mut p = BTreeMap::new();
        p.insert("ns1".to_string(), CITIES_NS.to_string());
        assert_eq!(format_iri(&city_iri("Adelaide"), &p), "ns1:Adelaide");
        assert_eq!(format_iri("http://x.org/y", &p), "<http://x.org/y>");
        assert!(escape_local("a\"b").is_none());
    }
}
