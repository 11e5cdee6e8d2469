/// Pull a query out of free-form model output.
///
/// Code fences are dropped, the text is cut at the first `PREFIX` or
/// `SELECT` (uppercase preferred, any case as fallback) and runs through the
/// balanced `WHERE` group plus any trailing `ORDER BY` and `LIMIT`. Returns
/// an empty string when nothing query-like is present.
pub fn extract_query_block(llm_output: &str) -> String {
    let text: String = llm_output
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");

    let start = match find_start(&text, false).or_else(|| find_start(&text, true)) {
        Some(s) => s,
        None => return String::new(),
    };
    let body = &text[start..];
    let chars: Vec<(usize, char)> = body.char_indices().collect();

    let Some(open) = chars.iter().position(|&(_, c)| c == '{') else {
        return body.trim_end().to_string();
    };
    let Some(close) = balanced(&chars, open, '{', '}') else {
        return body.trim_end().to_string();
    };
    let mut end = close + 1;

    // Optional solution modifiers after the group.
    let mut i = skip_ws(&chars, end);
    if word_at(&chars, i, "ORDER") {
        let mut j = skip_ws(&chars, i + 5);
        if word_at(&chars, j, "BY") {
            j = skip_ws(&chars, j + 2);
            for kw in ["ASC", "DESC"] {
                if word_at(&chars, j, kw) {
                    j = skip_ws(&chars, j + kw.len());
                }
            }
            if chars.get(j).map(|&(_, c)| c) == Some('(') {
                if let Some(k) = balanced(&chars, j, '(', ')') {
                    end = k + 1;
                }
            } else if chars.get(j).map(|&(_, c)| c) == Some('?') {
                let mut k = j + 1;
                while chars.get(k).is_some_and(|&(_, c)| c.is_alphanumeric() || c == '_') {
                    k += 1;
                }
                end = k;
            }
            i = skip_ws(&chars, end);
        }
    }
    if word_at(&chars, i, "LIMIT") {
        let mut k = skip_ws(&chars, i + 5);
        let digits = k;
        while chars.get(k).is_some_and(|&(_, c)| c.is_ascii_digit()) {
            k += 1;
        }
        if k > digits {
            end = k;
        }
    }
    let byte_end = chars.get(end).map(|&(b, _)| b).unwrap_or(body.len());
    body[..byte_end].trim_end().to_string()
}

fn find_start(text: &str, any_case: bool) -> Option<usize> {
    let hay = if any_case {
        text.to_ascii_uppercase()
    } else {
        text.to_string()
    };
    ["PREFIX", "SELECT"]
        .iter()
        .filter_map(|kw| {
            hay.match_indices(kw)
                .map(|(i, _)| i)
                .find(|&i| is_boundary(&hay, i, kw.len()))
        })
        .min()
}

fn is_boundary(text: &str, at: usize, len: usize) -> bool {
    let before = text[..at].chars().next_back();
    let after = text[at + len..].chars().next();
    !before.is_some_and(|c| c.is_alphanumeric() || c == '_')
        && !after.is_some_and(|c| c.is_alphanumeric() || c == '_')
}

fn balanced(chars: &[(usize, char)], open: usize, l: char, r: char) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_iri = false;
    for (i, &(_, c)) in chars.iter().enumerate().skip(open) {
        match c {
            '<' if !in_iri && chars.get(i + 1).is_some_and(|&(_, n)| n.is_alphabetic()) => {
                in_iri = true
            }
            '>' if in_iri => in_iri = false,
            c if c == l && !in_iri => depth += 1,
            c if c == r && !in_iri => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn skip_ws(chars: &[(usize, char)], mut i: usize) -> usize {
    while chars.get(i).is_some_and(|&(_, c)| c.is_whitespace()) {
        i += 1;
    }
    i
}

fn word_at(chars: &[(usize, char)], i: usize, kw: &str) -> bool {
    let n = kw.chars().count();
    if i + n > chars.len() {
        return false;
    }
    let matches = chars[i..i + n]
        .iter()
        .zip(kw.chars())
        .all(|(&(_, c), k)| c.eq_ignore_ascii_case(&k));
    matches && !chars.get(i + n).is_some_and(|&(_, c)| c.is_alphanumeric() || c == '_')
}
